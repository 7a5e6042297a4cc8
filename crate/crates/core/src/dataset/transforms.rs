//! Per-feature standardization and quartile binning, both fit on train only.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::LabeledTable;

/// Per-feature mean/std transform. Std uses the population formula; a
/// zero-variance column gets std 1 so the transform stays invertible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousTransform {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ContinuousTransform {
    pub fn fit(train: &LabeledTable) -> Result<Self> {
        if train.n_rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        let n = train.n_rows() as f64;
        let d = train.n_features();
        let mut means = vec![0.0; d];
        let mut stds = vec![0.0; d];
        for j in 0..d {
            let col = train.features().column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            means[j] = mean;
            stds[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Ok(Self { means, stds })
    }

    pub fn apply(&self, table: &LabeledTable) -> LabeledTable {
        let mut f = table.features().clone();
        for (j, mut col) in f.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.means[j]) / self.stds[j]);
        }
        table.with_features(f)
    }

    pub fn invert(&self, table: &LabeledTable) -> LabeledTable {
        let mut f = table.features().clone();
        for (j, mut col) in f.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| v * self.stds[j] + self.means[j]);
        }
        table.with_features(f)
    }
}

/// Quartile discretization into four bins per feature.
///
/// Cut points are the type-7 (linear interpolation) empirical quartiles of
/// the training column; duplicates collapse, leaving empty bins whose
/// representative is the shared cut value. Bins are left-closed with the
/// last bin right-unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub cut_points: Vec<[f64; 3]>,
    pub representatives: Vec<[f64; 4]>,
}

/// Number of bins produced per feature.
pub const N_BINS: usize = 4;

/// Type-7 empirical quantile of a sorted slice.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn bin_of(value: f64, cuts: &[f64; 3]) -> usize {
    cuts.iter().filter(|&&c| c <= value).count()
}

impl Binning {
    pub fn fit(train: &LabeledTable) -> Result<Self> {
        if train.n_rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        let d = train.n_features();
        let mut cut_points = Vec::with_capacity(d);
        let mut representatives = Vec::with_capacity(d);
        for j in 0..d {
            let mut vals: Vec<f64> = train.features().column(j).to_vec();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let cuts = [
                quantile_sorted(&vals, 0.25),
                quantile_sorted(&vals, 0.50),
                quantile_sorted(&vals, 0.75),
            ];
            if cuts[0] == cuts[1] || cuts[1] == cuts[2] {
                log::warn!("feature {j}: duplicate quartiles, some bins will be empty");
            }

            let mut sums = [0.0f64; N_BINS];
            let mut counts = [0usize; N_BINS];
            for &v in &vals {
                let b = bin_of(v, &cuts);
                sums[b] += v;
                counts[b] += 1;
            }
            let mut reps = [0.0f64; N_BINS];
            for b in 0..N_BINS {
                reps[b] = if counts[b] > 0 {
                    sums[b] / counts[b] as f64
                } else {
                    // empty bin: representative sits on its cut boundary
                    cuts[b.saturating_sub(1).min(2)]
                };
            }
            cut_points.push(cuts);
            representatives.push(reps);
        }
        Ok(Self { cut_points, representatives })
    }

    /// Map each value to its bin index 0..3, stored as f64 codes.
    pub fn discretize(&self, table: &LabeledTable) -> LabeledTable {
        let mut f = Array2::zeros((table.n_rows(), table.n_features()));
        for i in 0..table.n_rows() {
            for j in 0..table.n_features() {
                f[[i, j]] = bin_of(table.features()[[i, j]], &self.cut_points[j]) as f64;
            }
        }
        table.with_features(f)
    }

    /// Map bin codes back to the training-mean representative of each bin.
    pub fn undiscretize(&self, binned: &LabeledTable) -> Result<LabeledTable> {
        let mut f = Array2::zeros((binned.n_rows(), binned.n_features()));
        for i in 0..binned.n_rows() {
            for j in 0..binned.n_features() {
                let code = binned.features()[[i, j]];
                if code.fract() != 0.0 || !(0.0..N_BINS as f64).contains(&code) {
                    return Err(Error::UnbinnedInput(format!(
                        "cell ({i}, {j}) holds {code}, expected an integer in 0..{N_BINS}"
                    )));
                }
                f[[i, j]] = self.representatives[j][code as usize];
            }
        }
        Ok(binned.with_features(f))
    }
}
