//! Discrete marginal measurement over binned data: domains, counting,
//! Gaussian noising in count space, and consistency repair.
//!
//! Attributes are indexed 0..d for the binned features and `d` for the
//! label. The identity query set is used throughout, so a measurement is
//! the marginal probability vector itself.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledTable;
use crate::error::{Error, Result};
use crate::privacy::{add_gaussian_noise, calibrate_gaussian};

/// The cliques to measure and the domain size of every attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub cliques: Vec<Vec<usize>>,
    pub domain: Vec<usize>,
}

impl MeasurementSet {
    /// The star-shaped default: every singleton plus every (feature, label)
    /// pair, for `d` features of `n_bins` bins and a label of `n_classes`.
    pub fn star(d: usize, n_bins: usize, n_classes: usize) -> Self {
        let mut cliques: Vec<Vec<usize>> = (0..=d).map(|a| vec![a]).collect();
        cliques.extend((0..d).map(|f| vec![f, d]));
        let mut domain = vec![n_bins; d];
        domain.push(n_classes);
        Self { cliques, domain }
    }

    pub fn label_attr(&self) -> usize {
        self.domain.len() - 1
    }
}

/// A probability vector over the cells of one clique, together with its
/// measurement noise scale (std in probability space) and count scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTable {
    pub clique: Vec<usize>,
    pub dims: Vec<usize>,
    pub probs: Vec<f64>,
    pub noise_sigma: f64,
    pub n_ref: f64,
}

impl MarginalTable {
    pub fn n_cells(&self) -> usize {
        self.dims.iter().product()
    }

    /// Flat cell index of one attribute-value combination (row-major).
    pub fn cell_index(&self, values: &[usize]) -> usize {
        debug_assert_eq!(values.len(), self.dims.len());
        let mut idx = 0;
        for (v, d) in values.iter().zip(&self.dims) {
            debug_assert!(v < d);
            idx = idx * d + v;
        }
        idx
    }

    /// Sum the table onto a single attribute of the clique.
    pub fn marginalize_onto(&self, attr: usize) -> Vec<f64> {
        let pos = self
            .clique
            .iter()
            .position(|&a| a == attr)
            .expect("attribute not part of this clique");
        let mut out = vec![0.0; self.dims[pos]];
        for (idx, &p) in self.probs.iter().enumerate() {
            out[self.unravel(idx, pos)] += p;
        }
        out
    }

    fn unravel(&self, mut idx: usize, pos: usize) -> usize {
        let mut coords = vec![0usize; self.dims.len()];
        for k in (0..self.dims.len()).rev() {
            coords[k] = idx % self.dims[k];
            idx /= self.dims[k];
        }
        coords[pos]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

fn attr_code(table: &LabeledTable, row: usize, attr: usize, domain: &[usize]) -> Result<usize> {
    let label_attr = domain.len() - 1;
    let value = if attr == label_attr {
        table.labels()[row] as f64
    } else {
        table.features()[[row, attr]]
    };
    if value.fract() != 0.0 || value < 0.0 || value >= domain[attr] as f64 {
        return Err(Error::UnbinnedInput(format!(
            "row {row}, attribute {attr}: value {value} outside domain 0..{}",
            domain[attr]
        )));
    }
    Ok(value as usize)
}

/// Exact (pre-noise) marginal of a clique: normalized cell counts.
pub fn measure(table: &LabeledTable, clique: &[usize], domain: &[usize]) -> Result<MarginalTable> {
    if table.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if table.n_features() + 1 != domain.len() {
        return Err(Error::UnbinnedInput(format!(
            "domain covers {} attributes, table has {}",
            domain.len(),
            table.n_features() + 1
        )));
    }
    let dims: Vec<usize> = clique.iter().map(|&a| domain[a]).collect();
    let mut out = MarginalTable {
        clique: clique.to_vec(),
        dims,
        probs: Vec::new(),
        noise_sigma: 0.0,
        n_ref: table.n_rows() as f64,
    };
    let mut counts = vec![0.0f64; out.n_cells()];
    let mut values = vec![0usize; clique.len()];
    for row in 0..table.n_rows() {
        for (slot, &attr) in values.iter_mut().zip(clique) {
            *slot = attr_code(table, row, attr, domain)?;
        }
        counts[out.cell_index(&values)] += 1.0;
    }
    let n = out.n_ref;
    out.probs = counts.into_iter().map(|c| c / n).collect();
    Ok(out)
}

/// Gaussian-mechanism noise in count space. A histogram has add/remove L2
/// sensitivity 1 (one cell moves by one), so the count-space noise std is
/// `calibrate_gaussian(1, eps, delta)`; in probability space it is that
/// divided by n. Infinite epsilon returns the input unchanged.
pub fn add_noise<R: Rng + ?Sized>(
    marginal: &MarginalTable,
    epsilon: f64,
    delta: f64,
    rng: &mut R,
) -> Result<MarginalTable> {
    let sigma_count = calibrate_gaussian(1.0, epsilon, delta)?;
    if sigma_count == 0.0 {
        return Ok(marginal.clone());
    }
    let n = marginal.n_ref;
    let mut counts: Vec<f64> = marginal.probs.iter().map(|p| p * n).collect();
    add_gaussian_noise(&mut counts, sigma_count, rng);
    Ok(MarginalTable {
        clique: marginal.clique.clone(),
        dims: marginal.dims.clone(),
        probs: counts.into_iter().map(|c| c / n).collect(),
        noise_sigma: sigma_count / n,
        n_ref: n,
    })
}

/// Consistency repair over a set of noisy marginals:
///
/// 1. negatives are clipped to zero and each table renormalized to sum one
///    (an all-zero table becomes uniform, with a warning);
/// 2. every table containing the label implies a label margin; their
///    inverse-variance weighted average becomes the consensus label
///    marginal;
/// 3. each such table is rescaled per label slice to match the consensus.
pub fn repair(marginals: &[MarginalTable], label_attr: usize) -> Result<Vec<MarginalTable>> {
    if marginals.is_empty() {
        return Ok(Vec::new());
    }
    let n_ref = marginals[0].n_ref;
    if marginals.iter().any(|m| m.n_ref != n_ref) {
        return Err(Error::InvalidParams("marginals measured over different n".into()));
    }

    let mut tables: Vec<MarginalTable> = Vec::with_capacity(marginals.len());
    for m in marginals {
        let mut t = m.clone();
        for p in t.probs.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total = t.total();
        if total <= 0.0 {
            log::warn!("marginal over {:?} vanished after clipping; using uniform", t.clique);
            let u = 1.0 / t.n_cells() as f64;
            t.probs.iter_mut().for_each(|p| *p = u);
        } else {
            t.probs.iter_mut().for_each(|p| *p /= total);
        }
        tables.push(t);
    }

    // Consensus over the label margins implied by tables containing it.
    let with_label: Vec<usize> = (0..tables.len())
        .filter(|&i| tables[i].clique.contains(&label_attr))
        .collect();
    if with_label.is_empty() {
        return Ok(tables);
    }
    let n_labels = tables[with_label[0]]
        .dims[tables[with_label[0]].clique.iter().position(|&a| a == label_attr).unwrap()];

    let exact: Vec<usize> = with_label.iter().copied().filter(|&i| tables[i].noise_sigma == 0.0).collect();
    let mut consensus = vec![0.0f64; n_labels];
    if !exact.is_empty() {
        for &i in &exact {
            let margin = tables[i].marginalize_onto(label_attr);
            for (c, m) in consensus.iter_mut().zip(&margin) {
                *c += m / exact.len() as f64;
            }
        }
    } else {
        let mut weight_sum = 0.0;
        for &i in &with_label {
            let t = &tables[i];
            let cells_per_label = t.n_cells() / n_labels;
            let var = t.noise_sigma * t.noise_sigma * cells_per_label as f64;
            let w = 1.0 / var;
            let margin = t.marginalize_onto(label_attr);
            for (c, m) in consensus.iter_mut().zip(&margin) {
                *c += w * m;
            }
            weight_sum += w;
        }
        consensus.iter_mut().for_each(|c| *c /= weight_sum);
    }
    let consensus_total: f64 = consensus.iter().sum();
    consensus.iter_mut().for_each(|c| *c /= consensus_total);

    // Rescale label slices to the consensus.
    for &i in &with_label {
        let t = &mut tables[i];
        let pos = t.clique.iter().position(|&a| a == label_attr).unwrap();
        let n_cells = t.n_cells();
        let mut slice_sums = vec![0.0f64; n_labels];
        for idx in 0..n_cells {
            slice_sums[t.unravel(idx, pos)] += t.probs[idx];
        }
        let slice_cells = n_cells / n_labels;
        for idx in 0..n_cells {
            let y = t.unravel(idx, pos);
            if slice_sums[y] > 0.0 {
                t.probs[idx] *= consensus[y] / slice_sums[y];
            } else {
                t.probs[idx] = consensus[y] / slice_cells as f64;
            }
        }
    }

    for t in &tables {
        debug_assert!((t.total() - 1.0).abs() < 1e-9, "table over {:?} sums to {}", t.clique, t.total());
    }
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn binned_table(codes: Vec<Vec<usize>>, labels: Vec<usize>, n_classes: usize) -> LabeledTable {
        let n = codes.len();
        let d = codes[0].len();
        let features = Array2::from_shape_fn((n, d), |(i, j)| codes[i][j] as f64);
        LabeledTable::new(
            features,
            labels,
            (0..d).map(|j| format!("f{j}")).collect(),
            (0..n_classes).map(|c| format!("c{c}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn measures_singleton() {
        let t = binned_table(vec![vec![0], vec![0], vec![1], vec![1]], vec![0, 0, 0, 0], 1);
        let m = measure(&t, &[0], &[4, 1]).unwrap();
        assert_eq!(m.probs[0], 0.5);
        assert_eq!(m.probs[1], 0.5);
        assert_eq!(m.probs[2], 0.0);
    }

    #[test]
    fn measures_pair_uniform() {
        let t = binned_table(vec![vec![0], vec![0], vec![1], vec![1]], vec![0, 1, 0, 1], 2);
        let m = measure(&t, &[0, 1], &[2, 2]).unwrap();
        assert!(m.probs.iter().all(|&p| p == 0.25));
    }

    #[test]
    fn pair_marginalizes_to_singleton() {
        let t = binned_table(
            vec![vec![0], vec![1], vec![2], vec![1], vec![3], vec![0]],
            vec![0, 1, 0, 1, 1, 0],
            2,
        );
        let pair = measure(&t, &[0, 1], &[4, 2]).unwrap();
        let label = measure(&t, &[1], &[4, 2]).unwrap();
        let implied = pair.marginalize_onto(1);
        assert_eq!(implied, label.probs);
    }

    #[test]
    fn rejects_unbinned_values() {
        let features = Array2::from_shape_vec((1, 1), vec![0.5]).unwrap();
        let t = LabeledTable::new(features, vec![0], vec!["f0".into()], vec!["c0".into()]).unwrap();
        assert!(matches!(measure(&t, &[0], &[4, 1]), Err(Error::UnbinnedInput(_))));
    }

    #[test]
    fn infinite_epsilon_noise_is_identity() {
        let t = binned_table(vec![vec![0], vec![1]], vec![0, 0], 1);
        let m = measure(&t, &[0], &[2, 1]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let noisy = add_noise(&m, f64::INFINITY, 1e-5, &mut rng).unwrap();
        assert_eq!(noisy, m);
    }

    #[test]
    fn noise_scale_in_probability_space() {
        let t = binned_table(vec![vec![0]; 100], vec![0; 100], 1);
        let m = measure(&t, &[0], &[2, 1]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let noisy = add_noise(&m, 1.0, 1e-5, &mut rng).unwrap();
        let expected = calibrate_gaussian(1.0, 1.0, 1e-5).unwrap() / 100.0;
        assert!((noisy.noise_sigma - expected).abs() < 1e-15);
    }

    #[test]
    fn noising_is_deterministic_per_seed() {
        let t = binned_table(vec![vec![0], vec![1], vec![1]], vec![0, 0, 0], 1);
        let m = measure(&t, &[0], &[2, 1]).unwrap();
        let a = add_noise(&m, 0.5, 1e-5, &mut ChaCha20Rng::seed_from_u64(4)).unwrap();
        let b = add_noise(&m, 0.5, 1e-5, &mut ChaCha20Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn clip_and_renormalize_arithmetic() {
        let m = MarginalTable {
            clique: vec![0],
            dims: vec![3],
            probs: vec![-0.1, 0.6, 0.5],
            noise_sigma: 0.01,
            n_ref: 10.0,
        };
        let repaired = repair(&[m], 1).unwrap();
        let p = &repaired[0].probs;
        assert_eq!(p[0], 0.0);
        assert!((p[1] - 6.0 / 11.0).abs() < 1e-12);
        assert!((p[2] - 5.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_repair_is_fixed_point() {
        let t = binned_table(
            vec![vec![0], vec![1], vec![2], vec![1], vec![3], vec![0]],
            vec![0, 1, 0, 1, 1, 0],
            2,
        );
        let set = MeasurementSet::star(1, 4, 2);
        let measured: Vec<MarginalTable> =
            set.cliques.iter().map(|c| measure(&t, c, &set.domain).unwrap()).collect();
        let repaired = repair(&measured, set.label_attr()).unwrap();
        for (a, b) in measured.iter().zip(&repaired) {
            for (x, y) in a.probs.iter().zip(&b.probs) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn repaired_pairs_match_consensus_and_fixed_point() {
        let t = binned_table(
            (0..40).map(|i| vec![i % 4, (i / 2) % 4]).collect(),
            (0..40).map(|i| i % 3).collect(),
            3,
        );
        let set = MeasurementSet::star(2, 4, 3);
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let noisy: Vec<MarginalTable> = set
            .cliques
            .iter()
            .map(|c| {
                let m = measure(&t, c, &set.domain).unwrap();
                add_noise(&m, 0.4, 1e-6, &mut rng).unwrap()
            })
            .collect();
        let repaired = repair(&noisy, set.label_attr()).unwrap();

        let label_attr = set.label_attr();
        let consensus = repaired
            .iter()
            .find(|m| m.clique == vec![label_attr])
            .unwrap()
            .probs
            .clone();
        for m in &repaired {
            assert!((m.total() - 1.0).abs() < 1e-9);
            assert!(m.probs.iter().all(|&p| p >= 0.0));
            if m.clique.len() == 2 {
                let margin = m.marginalize_onto(label_attr);
                for (a, b) in margin.iter().zip(&consensus) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }

        // idempotence
        let twice = repair(&repaired, label_attr).unwrap();
        for (a, b) in repaired.iter().zip(&twice) {
            for (x, y) in a.probs.iter().zip(&b.probs) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn all_zero_table_becomes_uniform() {
        let m = MarginalTable {
            clique: vec![0],
            dims: vec![4],
            probs: vec![-0.2, -0.1, 0.0, -0.3],
            noise_sigma: 0.05,
            n_ref: 10.0,
        };
        let repaired = repair(&[m], 1).unwrap();
        assert!(repaired[0].probs.iter().all(|&p| p == 0.25));
    }
}
