//! Synthetic benchmark tables with planted differential-expression shifts and
//! correlated gene modules, plus the ground-truth annotations the structure
//! metrics are scored against.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::LabeledTable;

/// Mean shifts planted between one ordered class pair. `up` genes are raised
/// in `class_a`, `down` genes in `class_b`; entries are `(gene, magnitude)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedDe {
    pub class_a: usize,
    pub class_b: usize,
    pub up: Vec<(usize, f64)>,
    pub down: Vec<(usize, f64)>,
}

/// A block of genes sharing a latent factor so each within-block pair has
/// Pearson correlation `rho`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedModule {
    pub genes: Vec<usize>,
    pub rho: f64,
}

/// Recipe for a planted benchmark table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n_per_class: Vec<usize>,
    pub d: usize,
    #[serde(default)]
    pub de: Vec<PlantedDe>,
    #[serde(default)]
    pub modules: Vec<PlantedModule>,
    pub noise_scale: f64,
    /// Baseline added to every feature, useful for fold-change style metrics
    /// that expect positive expression units.
    #[serde(default)]
    pub baseline: f64,
}

/// Ground-truth differential expression for one unordered class pair
/// (`class_a < class_b`); `up` genes have a higher mean in `class_a`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OraclePairDe {
    pub class_a: usize,
    pub class_b: usize,
    pub up: BTreeSet<usize>,
    pub down: BTreeSet<usize>,
}

/// Ground truth planted into a generated table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleAnnotations {
    pub de: Vec<OraclePairDe>,
    pub modules: Vec<BTreeSet<usize>>,
    /// Per-class per-gene means of the generating distribution.
    pub class_means: Vec<Vec<f64>>,
}

impl PlantedSpec {
    fn validate(&self) -> Result<()> {
        let c = self.n_per_class.len();
        if c == 0 || self.d == 0 {
            return Err(Error::InconsistentSpec("need at least one class and one feature".into()));
        }
        if self.n_per_class.iter().any(|&n| n == 0) {
            return Err(Error::InconsistentSpec("every class needs at least one sample".into()));
        }
        if !(self.noise_scale > 0.0) {
            return Err(Error::InconsistentSpec("noise_scale must be positive".into()));
        }
        for entry in &self.de {
            if entry.class_a >= c || entry.class_b >= c || entry.class_a == entry.class_b {
                return Err(Error::InconsistentSpec(format!(
                    "bad class pair ({}, {})",
                    entry.class_a, entry.class_b
                )));
            }
            for &(g, m) in entry.up.iter().chain(entry.down.iter()) {
                if g >= self.d {
                    return Err(Error::InconsistentSpec(format!("gene index {g} out of range")));
                }
                if !(m > 0.0) {
                    return Err(Error::InconsistentSpec(format!("shift magnitude {m} must be > 0")));
                }
            }
        }
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        for module in &self.modules {
            if !(module.rho > 0.0 && module.rho < 1.0) {
                return Err(Error::InconsistentSpec(format!("rho {} outside (0,1)", module.rho)));
            }
            for &g in &module.genes {
                if g >= self.d {
                    return Err(Error::InconsistentSpec(format!("module gene {g} out of range")));
                }
                if !seen.insert(g) {
                    return Err(Error::InconsistentSpec(format!("gene {g} in two modules")));
                }
            }
        }
        Ok(())
    }
}

/// Generate a planted table together with its ground-truth annotations.
///
/// Per class, features are Gaussian with std `noise_scale`. Module genes mix
/// a shared per-sample latent factor: `x = sqrt(rho) f + sqrt(1-rho) eta`,
/// giving within-module pairwise correlation `rho`. DE shifts accumulate
/// additively per (class, gene) mean.
pub fn generate_planted<R: Rng + ?Sized>(
    spec: &PlantedSpec,
    rng: &mut R,
) -> Result<(LabeledTable, OracleAnnotations)> {
    spec.validate()?;
    let c = spec.n_per_class.len();
    let n: usize = spec.n_per_class.iter().sum();
    let d = spec.d;

    let mut class_means = vec![vec![spec.baseline; d]; c];
    for entry in &spec.de {
        for &(g, m) in &entry.up {
            class_means[entry.class_a][g] += m;
        }
        for &(g, m) in &entry.down {
            class_means[entry.class_b][g] += m;
        }
    }

    let mut module_of = vec![usize::MAX; d];
    for (mi, module) in spec.modules.iter().enumerate() {
        for &g in &module.genes {
            module_of[g] = mi;
        }
    }

    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0usize;
    for (class, &n_c) in spec.n_per_class.iter().enumerate() {
        for _ in 0..n_c {
            let factors: Vec<f64> =
                (0..spec.modules.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            for g in 0..d {
                let eta: f64 = rng.sample(StandardNormal);
                let unit = match module_of[g] {
                    usize::MAX => eta,
                    mi => {
                        let rho = spec.modules[mi].rho;
                        rho.sqrt() * factors[mi] + (1.0 - rho).sqrt() * eta
                    }
                };
                features[[row, g]] = class_means[class][g] + spec.noise_scale * unit;
            }
            labels.push(class);
            row += 1;
        }
    }

    let mut de = Vec::new();
    for a in 0..c {
        for b in (a + 1)..c {
            let mut up = BTreeSet::new();
            let mut down = BTreeSet::new();
            for g in 0..d {
                let diff = class_means[a][g] - class_means[b][g];
                if diff > 0.0 {
                    up.insert(g);
                } else if diff < 0.0 {
                    down.insert(g);
                }
            }
            de.push(OraclePairDe { class_a: a, class_b: b, up, down });
        }
    }

    let table = LabeledTable::new(
        features,
        labels,
        (0..d).map(|g| format!("g{g}")).collect(),
        (0..c).map(|k| format!("c{k}")).collect(),
    )?;
    let annotations = OracleAnnotations {
        de,
        modules: spec.modules.iter().map(|m| m.genes.iter().copied().collect()).collect(),
        class_means,
    };
    Ok((table, annotations))
}
