//! Machine-learning efficacy: multinomial logistic regression trained on a
//! (synthetic or real) table, scored by accuracy on held-out real test data.

use ndarray::{Array1, Array2};

use crate::dataset::{ContinuousTransform, LabeledTable};
use crate::error::{Error, Result};

/// L2-regularized softmax regression, optimized by full-batch gradient
/// descent with backtracking line search. Deterministic from a fixed
/// initialization.
#[derive(Debug, Clone)]
pub struct SoftmaxClassifier {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub l2_lambda: f64,
    pub max_iters: usize,
    pub learning_rate: f64,
}

pub const DEFAULT_L2_LAMBDA: f64 = 1e-4;
pub const DEFAULT_MAX_ITERS: usize = 2000;
const GRAD_TOL: f64 = 1e-6;

impl SoftmaxClassifier {
    pub fn new(n_classes: usize, n_features: usize) -> Self {
        Self {
            weights: Array2::zeros((n_classes, n_features)),
            bias: Array1::zeros(n_classes),
            l2_lambda: DEFAULT_L2_LAMBDA,
            max_iters: DEFAULT_MAX_ITERS,
            learning_rate: 1.0,
        }
    }

    fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t());
        for mut row in z.rows_mut() {
            row += &self.bias;
        }
        z
    }

    /// Mean cross-entropy plus the ridge penalty.
    pub fn loss(&self, x: &Array2<f64>, labels: &[usize]) -> f64 {
        let z = self.logits(x);
        let n = x.nrows() as f64;
        let mut total = 0.0;
        for (row, &y) in z.rows().into_iter().zip(labels) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_norm = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            total += log_norm - row[y];
        }
        total / n + 0.5 * self.l2_lambda * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    fn gradients(&self, x: &Array2<f64>, labels: &[usize]) -> (Array2<f64>, Array1<f64>) {
        let n = x.nrows() as f64;
        let z = self.logits(x);
        let mut probs = z;
        for mut row in probs.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        for (i, &y) in labels.iter().enumerate() {
            probs[[i, y]] -= 1.0;
        }
        let mut grad_w = probs.t().dot(x) / n;
        grad_w.scaled_add(self.l2_lambda, &self.weights);
        let grad_b = probs.sum_axis(ndarray::Axis(0)) / n;
        (grad_w, grad_b)
    }

    /// Fit until the gradient norm drops below 1e-6 or `max_iters` is hit.
    pub fn fit(&mut self, x: &Array2<f64>, labels: &[usize]) {
        let mut step = self.learning_rate;
        let mut loss = self.loss(x, labels);
        for _ in 0..self.max_iters {
            let (grad_w, grad_b) = self.gradients(x, labels);
            let grad_sq: f64 =
                grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b.iter().map(|g| g * g).sum::<f64>();
            if grad_sq.sqrt() < GRAD_TOL {
                break;
            }
            // backtracking with the Armijo condition
            step = (step * 2.0).min(self.learning_rate.max(1.0));
            loop {
                let candidate_w = &self.weights - &(step * &grad_w);
                let candidate_b = &self.bias - &(step * &grad_b);
                let candidate = SoftmaxClassifier {
                    weights: candidate_w,
                    bias: candidate_b,
                    l2_lambda: self.l2_lambda,
                    max_iters: self.max_iters,
                    learning_rate: self.learning_rate,
                };
                let candidate_loss = candidate.loss(x, labels);
                if candidate_loss <= loss - 1e-4 * step * grad_sq || step < 1e-12 {
                    self.weights = candidate.weights;
                    self.bias = candidate.bias;
                    loss = candidate_loss;
                    break;
                }
                step *= 0.5;
            }
        }
    }

    /// Predicted class per row (ties resolved to the lowest index).
    pub fn predict(&self, x: &Array2<f64>) -> Vec<usize> {
        self.logits(x)
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

/// Train on `train`, report accuracy on `test`. Both tables are
/// standardized with a transform fit on `train`. A train set containing a
/// single class still yields a (constant) predictor.
pub fn train_eval(train: &LabeledTable, test: &LabeledTable) -> Result<f64> {
    if train.n_rows() == 0 || test.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if train.n_features() != test.n_features() {
        return Err(Error::ShapeMismatch(format!(
            "train has {} features, test has {}",
            train.n_features(),
            test.n_features()
        )));
    }
    let counts = train.class_counts();
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present <= 1 {
        log::warn!("training set covers a single class; accuracy uses a constant predictor");
    } else if counts.iter().any(|&c| c == 0) {
        log::warn!(
            "training set is missing {} classes",
            counts.iter().filter(|&&c| c == 0).count()
        );
    }

    let transform = ContinuousTransform::fit(train)?;
    let x_train = transform.apply(train);
    let x_test = transform.apply(test);

    let mut clf = SoftmaxClassifier::new(train.n_classes(), train.n_features());
    clf.fit(x_train.features(), x_train.labels());
    let predictions = clf.predict(x_test.features());
    let correct = predictions.iter().zip(test.labels()).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / test.n_rows() as f64)
}
