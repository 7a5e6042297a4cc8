//! RON-Gauss: per-class DP mean and DP covariance in a random orthonormal
//! projection, Gaussian sampling, inverse projection.
//!
//! The fit follows the original per-class recipe literally: rows are
//! pre-normalized to unit L2 norm, the noisy mean is subtracted, rows are
//! re-normalized, projected, and a noisy second-moment matrix is formed.
//! Samples are drawn as `W z + mu_c` with `z ~ N(W^T mu_c, Sigma_c)`.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledTable;
use crate::error::{Error, Result};
use crate::gen::sample_categorical;
use crate::linalg::{psd_project, random_orthonormal};
use crate::privacy::{add_gaussian_noise, calibrate_gaussian, PrivacySpec};

/// Fitted per-class Gaussian mixture in the projected space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RonGaussModel {
    /// d x p matrix with orthonormal columns.
    pub projection: Array2<f64>,
    /// Per-class DP mean in the original d-dimensional space.
    pub means: Vec<Array1<f64>>,
    /// Per-class PSD covariance in the projected p-dimensional space.
    pub covariances: Vec<Array2<f64>>,
    /// Factor `A` with `A A^T = covariance`, kept for sampling.
    pub cov_factors: Vec<Array2<f64>>,
    /// Empirical label frequencies (treated as public).
    pub class_probs: Vec<f64>,
    /// Gaussian-mechanism noise std used per class for mean and covariance.
    pub mean_sigma: Vec<f64>,
    pub cov_sigma: Vec<f64>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

/// Default projection dimension: `min(d, 100)`.
pub fn default_projection_dim(d: usize) -> usize {
    d.min(100)
}

fn normalize_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        } else {
            log::warn!("all-zero row during normalization; left at zero");
        }
    }
}

/// Fit per-class DP Gaussians. The per-class budget is split evenly between
/// the mean and the covariance; classes partition the data, so no further
/// division across classes is needed. Both queries have add/remove L2
/// sensitivity `2 / n_c` on unit-norm rows.
pub fn fit<R: Rng + ?Sized>(
    train: &LabeledTable,
    projection_dim: usize,
    privacy: &PrivacySpec,
    rng: &mut R,
) -> Result<RonGaussModel> {
    let d = train.n_features();
    let p = projection_dim;
    if p == 0 || p > d {
        return Err(Error::InvalidParams(format!(
            "projection dimension {p} must lie in 1..={d}"
        )));
    }
    let counts = train.class_counts();
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(empty));
    }

    let projection = random_orthonormal(d, p, rng);
    let mut means = Vec::with_capacity(counts.len());
    let mut covariances = Vec::with_capacity(counts.len());
    let mut cov_factors = Vec::with_capacity(counts.len());
    let mut mean_sigma = Vec::with_capacity(counts.len());
    let mut cov_sigma = Vec::with_capacity(counts.len());

    for class in 0..train.n_classes() {
        let rows = train.class_row_indices(class);
        let n_c = rows.len() as f64;
        let mut x = Array2::zeros((rows.len(), d));
        for (out, &r) in rows.iter().enumerate() {
            x.row_mut(out).assign(&train.features().row(r));
        }

        normalize_rows(&mut x);

        let sensitivity = 2.0 / n_c;
        let sigma_mu =
            calibrate_gaussian(sensitivity, privacy.epsilon / 2.0, privacy.delta / 2.0)?;
        let mut mu = x.sum_axis(ndarray::Axis(0)) / n_c;
        add_gaussian_noise(mu.as_slice_mut().unwrap(), sigma_mu, rng);

        for mut row in x.rows_mut() {
            row -= &mu;
        }
        normalize_rows(&mut x);

        // projected rows keep norm <= 1, so the second moment has
        // Frobenius sensitivity 2 / n_c as well
        let projected = x.dot(&projection);
        let mut second_moment = projected.t().dot(&projected) / n_c;
        let sigma_cov =
            calibrate_gaussian(sensitivity, privacy.epsilon / 2.0, privacy.delta / 2.0)?;
        add_gaussian_noise(second_moment.as_slice_mut().unwrap(), sigma_cov, rng);
        let (covariance, factor) = psd_project(&second_moment);

        means.push(mu);
        covariances.push(covariance);
        cov_factors.push(factor);
        mean_sigma.push(sigma_mu);
        cov_sigma.push(sigma_cov);
    }

    Ok(RonGaussModel {
        projection,
        means,
        covariances,
        cov_factors,
        class_probs: train.class_frequencies(),
        mean_sigma,
        cov_sigma,
        feature_names: train.feature_names().to_vec(),
        class_names: train.class_names().to_vec(),
    })
}

impl RonGaussModel {
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<LabeledTable> {
        let d = self.projection.nrows();
        let p = self.projection.ncols();
        let mut features = Array2::zeros((n, d));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = sample_categorical(&self.class_probs, rng);
            let mu = &self.means[class];
            let mut z = self.projection.t().dot(mu);
            let eta = Array1::from_shape_fn(p, |_| rng.sample::<f64, _>(StandardNormal));
            z += &self.cov_factors[class].dot(&eta);
            let x = self.projection.dot(&z) + mu;
            features.row_mut(i).assign(&x);
            labels.push(class);
        }
        LabeledTable::new(features, labels, self.feature_names.clone(), self.class_names.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_defect;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn unit_norm_table(n: usize, d: usize, seed: u64) -> LabeledTable {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut f = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        normalize_rows(&mut f);
        LabeledTable::new(
            f,
            vec![0; n],
            (0..d).map(|j| format!("g{j}")).collect(),
            vec!["only".into()],
        )
        .unwrap()
    }

    #[test]
    fn projection_is_orthonormal() {
        let table = unit_norm_table(50, 12, 3);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let model = fit(&table, 6, &PrivacySpec::non_private(), &mut rng).unwrap();
        assert!(orthonormality_defect(&model.projection) < 1e-10);
    }

    #[test]
    fn non_private_mean_is_empirical_mean() {
        let table = unit_norm_table(40, 5, 1);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let model = fit(&table, 5, &PrivacySpec::non_private(), &mut rng).unwrap();
        // replicate the fit's pre-normalization arithmetic bit for bit
        let mut expected = table.features().clone();
        normalize_rows(&mut expected);
        let empirical = expected.sum_axis(ndarray::Axis(0)) / 40.0;
        for (a, b) in model.means[0].iter().zip(empirical.iter()) {
            assert_eq!(a, b);
        }
        assert_eq!(model.mean_sigma[0], 0.0);
    }

    #[test]
    fn mean_noise_scale_matches_calibration() {
        let table = unit_norm_table(25, 4, 2);
        let privacy = PrivacySpec::new(2.0, 1e-5).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let model = fit(&table, 4, &privacy, &mut rng).unwrap();
        let expected = calibrate_gaussian(2.0 / 25.0, 1.0, 5e-6).unwrap();
        assert_eq!(model.mean_sigma[0], expected);
        assert_eq!(model.cov_sigma[0], expected);
    }

    #[test]
    fn empty_class_is_rejected() {
        let f = Array2::zeros((2, 3));
        let table = LabeledTable::new(
            f,
            vec![0, 0],
            vec!["a".into(), "b".into(), "c".into()],
            vec!["c0".into(), "c1".into()],
        )
        .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(matches!(
            fit(&table, 2, &PrivacySpec::non_private(), &mut rng),
            Err(Error::EmptyClass(1))
        ));
    }

    #[test]
    fn zero_covariance_collapses_samples() {
        let table = unit_norm_table(30, 6, 4);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut model = fit(&table, 3, &PrivacySpec::non_private(), &mut rng).unwrap();
        model.covariances[0].fill(0.0);
        model.cov_factors[0].fill(0.0);
        let samples = model.sample(8, &mut rng).unwrap();
        let w = &model.projection;
        let mu = &model.means[0];
        let expected = w.dot(&w.t().dot(mu)) + mu;
        for row in samples.features().rows() {
            for (a, b) in row.iter().zip(expected.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn class_counts_follow_class_probs() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let mut f = Array2::from_shape_fn((60, 4), |_| rng.gen_range(-1.0..1.0));
        normalize_rows(&mut f);
        let labels: Vec<usize> = (0..60).map(|i| i % 2).collect();
        let table = LabeledTable::new(
            f,
            labels,
            (0..4).map(|j| format!("g{j}")).collect(),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let model = fit(&table, 4, &PrivacySpec::non_private(), &mut rng).unwrap();
        let n = 10_000;
        let samples = model.sample(n, &mut rng).unwrap();
        let count0 = samples.class_counts()[0] as f64;
        // 3-sigma binomial band around n/2
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((count0 - n as f64 / 2.0).abs() < 3.0 * sigma, "count {count0}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let table = unit_norm_table(30, 5, 8);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let model = fit(&table, 3, &PrivacySpec::non_private(), &mut rng).unwrap();
        let a = model.sample(5, &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
        let b = model.sample(5, &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
    }
}
