//! Statistical fidelity: per-feature histogram-intersection overlap and the
//! k-nearest-neighbor distance-to-closest-record score.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledTable;
use crate::error::{Error, Result};

/// Histogram settings for the overlap score. Min-max bounds are fit on the
/// union of both tables so the histograms share support.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapConfig {
    pub bin_counts: Vec<usize>,
}

impl Default for OverlapConfig {
    fn default() -> Self {
        Self { bin_counts: vec![25, 50, 100] }
    }
}

/// Overlap per bin count plus their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapScore {
    pub per_bin_count: Vec<(usize, f64)>,
    pub mean: f64,
}

/// `sum_c min(p_c, q_c)` over two histograms on identical bins; equals
/// `1 - total_variation(p, q)` for normalized inputs.
pub fn histogram_intersection(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::BinMismatch(p.len(), q.len()));
    }
    Ok(p.iter().zip(q).map(|(&a, &b)| a.min(b)).sum())
}

fn column_histogram(values: &[f64], min: f64, max: f64, bins: usize) -> Vec<f64> {
    let mut hist = vec![0.0; bins];
    let width = (max - min) / bins as f64;
    for &v in values {
        let bin = if width > 0.0 {
            (((v - min) / width) as usize).min(bins - 1)
        } else {
            0
        };
        hist[bin] += 1.0;
    }
    let n = values.len() as f64;
    hist.iter_mut().for_each(|h| *h /= n);
    hist
}

/// Mean histogram intersection across features, per bin count and averaged
/// over bin counts.
pub fn overlap_score(
    real: &LabeledTable,
    synth: &LabeledTable,
    config: &OverlapConfig,
) -> Result<OverlapScore> {
    if real.n_features() != synth.n_features() {
        return Err(Error::ShapeMismatch(format!(
            "real has {} features, synthetic has {}",
            real.n_features(),
            synth.n_features()
        )));
    }
    if real.n_rows() == 0 || synth.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = real.n_features();
    let mut per_bin_count = Vec::with_capacity(config.bin_counts.len());
    for &bins in &config.bin_counts {
        let mut total = 0.0;
        for j in 0..d {
            let a = real.column(j).to_vec();
            let b = synth.column(j).to_vec();
            let min = a.iter().chain(&b).cloned().fold(f64::INFINITY, f64::min);
            let max = a.iter().chain(&b).cloned().fold(f64::NEG_INFINITY, f64::max);
            let hist_a = column_histogram(&a, min, max, bins);
            let hist_b = column_histogram(&b, min, max, bins);
            total += histogram_intersection(&hist_a, &hist_b)?;
        }
        per_bin_count.push((bins, total / d as f64));
    }
    let mean = per_bin_count.iter().map(|(_, s)| s).sum::<f64>() / per_bin_count.len() as f64;
    Ok(OverlapScore { per_bin_count, mean })
}

/// Mean Euclidean distance from each synthetic row to its `k` nearest
/// reference rows, averaged over rows and `k`. Labels are ignored.
///
/// Per row, the k smallest distances are selected with a partial sort and
/// summed in ascending order, so the result is bit-identical to a full-sort
/// implementation.
pub fn knn_distance_score(synth: &LabeledTable, reference: &LabeledTable, k: usize) -> Result<f64> {
    if reference.n_rows() == 0 {
        return Err(Error::EmptyReference);
    }
    if k == 0 || k > reference.n_rows() {
        return Err(Error::InvalidParams(format!(
            "k = {k} must lie in 1..={}",
            reference.n_rows()
        )));
    }
    if synth.n_features() != reference.n_features() {
        return Err(Error::ShapeMismatch(format!(
            "synthetic has {} features, reference has {}",
            synth.n_features(),
            reference.n_features()
        )));
    }
    if synth.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }

    let mut total = 0.0;
    let mut sq_dists: Vec<(f64, usize)> = Vec::with_capacity(reference.n_rows());
    for row in synth.features().rows() {
        sq_dists.clear();
        for (idx, ref_row) in reference.features().rows().into_iter().enumerate() {
            let mut d2 = 0.0;
            for (a, b) in row.iter().zip(ref_row.iter()) {
                d2 += (a - b) * (a - b);
            }
            sq_dists.push((d2, idx));
        }
        // ties broken by row index
        sq_dists.select_nth_unstable_by(k - 1, |a, b| {
            a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
        });
        let nearest = &mut sq_dists[..k];
        nearest.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(d2, _) in nearest.iter() {
            total += d2.sqrt();
        }
    }
    Ok(total / (synth.n_rows() * k) as f64)
}
