//! Dataset ingestion, schema, train/test splitting and pre/post transforms.

mod csv_io;
mod planted;
mod transforms;

pub use csv_io::{load_csv, save_csv};
pub use planted::{generate_planted, OracleAnnotations, OraclePairDe, PlantedDe, PlantedModule, PlantedSpec};
pub use transforms::{Binning, ContinuousTransform};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An n x d numeric feature matrix with one class label per row. The one
/// dataset object used everywhere: real, synthetic, continuous or binned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTable {
    features: Array2<f64>,
    labels: Vec<usize>,
    feature_names: Vec<String>,
    class_names: Vec<String>,
}

impl LabeledTable {
    /// Build a table, validating shape agreement, label range and finiteness.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.ncols() != feature_names.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature columns vs {} feature names",
                features.ncols(),
                feature_names.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidDataset(format!(
                "label index {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite feature value".into()));
        }
        Ok(Self { features, labels, feature_names, class_names })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Per-class sample counts, indexed by class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Empirical label frequencies.
    pub fn class_frequencies(&self) -> Vec<f64> {
        let n = self.n_rows() as f64;
        self.class_counts().into_iter().map(|c| c as f64 / n).collect()
    }

    /// Row indices of a class, in table order.
    pub fn class_row_indices(&self, class: usize) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.labels[i] == class).collect()
    }

    /// New table containing the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut features = Array2::zeros((rows.len(), self.n_features()));
        let mut labels = Vec::with_capacity(rows.len());
        for (out, &r) in rows.iter().enumerate() {
            features.row_mut(out).assign(&self.features.row(r));
            labels.push(self.labels[r]);
        }
        Self {
            features,
            labels,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// One feature column as an owned vector.
    pub fn column(&self, j: usize) -> Array1<f64> {
        self.features.column(j).to_owned()
    }

    /// Replace the feature matrix, keeping labels and names.
    pub(crate) fn with_features(&self, features: Array2<f64>) -> Self {
        debug_assert_eq!(features.nrows(), self.n_rows());
        Self {
            features,
            labels: self.labels.clone(),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }
}

/// Disjoint train/test partition of a source table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Split {
    pub train: LabeledTable,
    pub test: LabeledTable,
    pub split_seed: u64,
}

/// Stratified train/test split, deterministic for a given seed.
///
/// Each class contributes `round(test_fraction * n_c)` test rows, capped so
/// at least one row stays in train. Classes with a single sample are placed
/// entirely in train and logged as a warning.
pub fn split<R: Rng + ?Sized>(
    table: &LabeledTable,
    test_fraction: f64,
    seed: u64,
    rng: &mut R,
) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 0.5) {
        return Err(Error::InvalidDataset(format!(
            "test_fraction must lie in (0, 0.5), got {test_fraction}"
        )));
    }
    if table.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }

    let mut test_rows: Vec<usize> = Vec::new();
    let mut train_rows: Vec<usize> = Vec::new();
    for class in 0..table.n_classes() {
        let mut rows = table.class_row_indices(class);
        if rows.len() < 2 {
            if rows.len() == 1 {
                log::warn!(
                    "class '{}' has a single sample; placing it in train",
                    table.class_names()[class]
                );
            }
            train_rows.extend(rows);
            continue;
        }
        let n_test = ((test_fraction * rows.len() as f64).round() as usize).min(rows.len() - 1);
        rows.shuffle(rng);
        test_rows.extend_from_slice(&rows[..n_test]);
        train_rows.extend_from_slice(&rows[n_test..]);
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();

    Ok(Split { train: table.subset(&train_rows), test: table.subset(&test_rows), split_seed: seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy(n_per_class: &[usize]) -> LabeledTable {
        let n: usize = n_per_class.iter().sum();
        let mut labels = Vec::new();
        for (c, &k) in n_per_class.iter().enumerate() {
            labels.extend(std::iter::repeat(c).take(k));
        }
        let features = Array2::from_shape_fn((n, 3), |(i, j)| (i * 3 + j) as f64);
        LabeledTable::new(
            features,
            labels,
            vec!["a".into(), "b".into(), "c".into()],
            (0..n_per_class.len()).map(|c| format!("class{c}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_label_out_of_range() {
        let err = LabeledTable::new(
            Array2::zeros((2, 1)),
            vec![0, 2],
            vec!["x".into()],
            vec!["a".into(), "b".into()],
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let mut f = Array2::zeros((1, 1));
        f[[0, 0]] = f64::NAN;
        assert!(LabeledTable::new(f, vec![0], vec!["x".into()], vec!["a".into()]).is_err());
    }

    #[test]
    fn stratified_split_counts() {
        let table = toy(&[50, 50]);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let s = split(&table, 0.2, 3, &mut rng).unwrap();
        assert_eq!(s.train.n_rows(), 80);
        assert_eq!(s.test.n_rows(), 20);
        assert_eq!(s.test.class_counts(), vec![10, 10]);
    }

    #[test]
    fn split_is_deterministic() {
        let table = toy(&[40, 25, 10]);
        let run = |seed| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            split(&table, 0.25, seed, &mut rng).unwrap()
        };
        let a = run(11);
        let b = run(11);
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn singleton_class_stays_in_train() {
        let table = toy(&[10, 1]);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let s = split(&table, 0.3, 0, &mut rng).unwrap();
        assert_eq!(s.train.class_counts()[1], 1);
        assert_eq!(s.test.class_counts()[1], 0);
    }

    #[test]
    fn split_rows_are_disjoint_and_cover() {
        let table = toy(&[30, 20]);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let s = split(&table, 0.2, 5, &mut rng).unwrap();
        assert_eq!(s.train.n_rows() + s.test.n_rows(), table.n_rows());
        // every class with >= 2 samples appears in train
        assert!(s.train.class_counts().iter().all(|&c| c > 0));
    }
}
