//! Star-shaped graphical model over noisy marginals: a tree-factorized
//! distribution `P(y) prod_i P(x_i | y)` estimated from the repaired
//! singleton and (feature, label) pair measurements, sampled ancestrally.
//!
//! For this clique set the tree factorization is the exact minimizer of the
//! measurement residual, so no iterative graphical-model estimation is
//! needed.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledTable;
use crate::error::Result;
use crate::gen::sample_categorical;
use crate::marginals::{add_noise, measure, repair, MeasurementSet};
use crate::privacy::PrivacySpec;

/// Fitted star model over binned features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PgmArtifact {
    pub label_marginal: Vec<f64>,
    /// Per feature, an `n_bins x C` column-stochastic table `P(x_i | y)`.
    pub conditionals: Vec<Array2<f64>>,
    pub n_bins: usize,
    /// Uniform per-measurement budget actually used, `epsilon / (2d + 1)`.
    pub epsilon_per_measurement: f64,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

/// Fit from a discretized table. The budget is allocated uniformly across
/// the `2d + 1` measurements (all singletons plus all label pairs), delta
/// split the same way; the noisy tables then go through consistency repair.
pub fn fit<R: Rng + ?Sized>(
    train_binned: &LabeledTable,
    n_bins: usize,
    privacy: &PrivacySpec,
    rng: &mut R,
) -> Result<PgmArtifact> {
    let d = train_binned.n_features();
    let c = train_binned.n_classes();
    let set = MeasurementSet::star(d, n_bins, c);
    let n_measurements = set.cliques.len() as f64;
    let eps_c = privacy.epsilon / n_measurements;
    let delta_c = privacy.delta / n_measurements;

    let mut noisy = Vec::with_capacity(set.cliques.len());
    for clique in &set.cliques {
        let exact = measure(train_binned, clique, &set.domain)?;
        noisy.push(add_noise(&exact, eps_c, delta_c, rng)?);
    }
    let repaired = repair(&noisy, set.label_attr())?;

    let label_marginal = repaired
        .iter()
        .find(|m| m.clique == vec![set.label_attr()])
        .expect("label singleton is part of the star set")
        .probs
        .clone();

    let mut conditionals = Vec::with_capacity(d);
    for f in 0..d {
        let pair = repaired
            .iter()
            .find(|m| m.clique == vec![f, set.label_attr()])
            .expect("every feature has a label pair");
        let mut table = Array2::zeros((n_bins, c));
        for b in 0..n_bins {
            for y in 0..c {
                table[[b, y]] = pair.probs[pair.cell_index(&[b, y])];
            }
        }
        for y in 0..c {
            let total: f64 = (0..n_bins).map(|b| table[[b, y]]).sum();
            if total > 0.0 {
                for b in 0..n_bins {
                    table[[b, y]] /= total;
                }
            } else {
                log::warn!("feature {f}: empty label slice {y}, using uniform conditional");
                for b in 0..n_bins {
                    table[[b, y]] = 1.0 / n_bins as f64;
                }
            }
        }
        conditionals.push(table);
    }

    Ok(PgmArtifact {
        label_marginal,
        conditionals,
        n_bins,
        epsilon_per_measurement: eps_c,
        feature_names: train_binned.feature_names().to_vec(),
        class_names: train_binned.class_names().to_vec(),
    })
}

impl PgmArtifact {
    /// Ancestral sampling: `y ~ P(y)`, then each feature independently from
    /// `P(x_i | y)`. Output is in bin codes; callers undiscretize.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<LabeledTable> {
        let d = self.conditionals.len();
        let mut features = Array2::zeros((n, d));
        let mut labels = Vec::with_capacity(n);
        let mut column = vec![0.0; self.n_bins];
        for i in 0..n {
            let y = sample_categorical(&self.label_marginal, rng);
            for f in 0..d {
                for (b, slot) in column.iter_mut().enumerate() {
                    *slot = self.conditionals[f][[b, y]];
                }
                features[[i, f]] = sample_categorical(&column, rng) as f64;
            }
            labels.push(y);
        }
        LabeledTable::new(features, labels, self.feature_names.clone(), self.class_names.clone())
    }
}
