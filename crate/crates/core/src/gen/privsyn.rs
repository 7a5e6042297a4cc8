//! PrivSyn-style synthesis: noisy marginals under a 1:8 budget split between
//! 1-way and 2-way measurements, consistency repair, then iterative
//! record-update synthesis that drives a candidate dataset toward the
//! measured marginals.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledTable;
use crate::error::Result;
use crate::gen::sample_categorical;
use crate::marginals::{add_noise, measure, repair, MarginalTable, MeasurementSet};
use crate::privacy::{split_budget, PrivacySpec};

/// Convergence report of one synthesis run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GumDiagnostics {
    pub sweeps_run: usize,
    pub mean_l1: f64,
    pub converged: bool,
    /// Mean L1 error over the aligned marginals after each sweep, starting
    /// with the initialization.
    pub history: Vec<f64>,
}

/// Repaired marginal set plus synthesis settings; sampling runs the update
/// loop from a fresh random initialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrivSynArtifact {
    pub marginals: Vec<MarginalTable>,
    pub n_bins: usize,
    pub n_classes: usize,
    pub max_sweeps: usize,
    pub tol: f64,
    /// Budgets actually used per 1-way and per 2-way measurement.
    pub singleton_epsilon: f64,
    pub pair_epsilon: f64,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

pub const DEFAULT_TOL: f64 = 0.02;
pub const DEFAULT_MAX_SWEEPS: usize = 200;

/// Measure all singletons and label pairs with the 1:8 budget split
/// (singleton group epsilon/9 split over d+1 tables, pair group 8 epsilon/9
/// split over d tables, delta likewise), then repair. Returns the repaired
/// set plus the per-singleton and per-pair budgets used.
pub fn fit_marginals<R: Rng + ?Sized>(
    train_binned: &LabeledTable,
    n_bins: usize,
    privacy: &PrivacySpec,
    rng: &mut R,
) -> Result<(Vec<MarginalTable>, f64, f64)> {
    let d = train_binned.n_features();
    let c = train_binned.n_classes();
    let set = MeasurementSet::star(d, n_bins, c);

    let group_eps = split_budget(privacy.epsilon, &[1.0, 8.0]);
    let group_delta = split_budget(privacy.delta, &[1.0, 8.0]);
    let singleton_eps = group_eps[0] / (d + 1) as f64;
    let singleton_delta = group_delta[0] / (d + 1) as f64;
    let pair_eps = group_eps[1] / d as f64;
    let pair_delta = group_delta[1] / d as f64;

    let mut noisy = Vec::with_capacity(set.cliques.len());
    for clique in &set.cliques {
        let exact = measure(train_binned, clique, &set.domain)?;
        let (eps, delta) = if clique.len() == 1 {
            (singleton_eps, singleton_delta)
        } else {
            (pair_eps, pair_delta)
        };
        noisy.push(add_noise(&exact, eps, delta, rng)?);
    }
    let repaired = repair(&noisy, set.label_attr())?;
    Ok((repaired, singleton_eps, pair_eps))
}

pub fn fit<R: Rng + ?Sized>(
    train_binned: &LabeledTable,
    n_bins: usize,
    privacy: &PrivacySpec,
    max_sweeps: usize,
    tol: f64,
    rng: &mut R,
) -> Result<PrivSynArtifact> {
    let (marginals, singleton_epsilon, pair_epsilon) =
        fit_marginals(train_binned, n_bins, privacy, rng)?;
    Ok(PrivSynArtifact {
        marginals,
        n_bins,
        n_classes: train_binned.n_classes(),
        max_sweeps,
        tol,
        singleton_epsilon,
        pair_epsilon,
        feature_names: train_binned.feature_names().to_vec(),
        class_names: train_binned.class_names().to_vec(),
    })
}

impl PrivSynArtifact {
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<LabeledTable> {
        let (table, _) = synthesize(
            &self.marginals,
            self.n_bins,
            self.n_classes,
            &self.feature_names,
            &self.class_names,
            n,
            self.max_sweeps,
            self.tol,
            rng,
        )?;
        Ok(table)
    }
}

struct GumState {
    /// n x d bin codes.
    codes: Vec<Vec<usize>>,
    labels: Vec<usize>,
}

/// Iterative record-update synthesis.
///
/// Labels are fixed at initialization to largest-remainder quotas of the
/// consensus label marginal; features initialize i.i.d. from their noisy
/// singletons. Each sweep walks the aligned marginals — the label pairs, or
/// the feature singletons when no pairs were measured — and moves records
/// from the most over-represented cell to the most under-represented cell
/// within the same label slice, rewriting only that feature and touching
/// each record at most once per sweep. Labels never move, and a move edits
/// no other aligned marginal, so the tracked mean L1 error never increases.
/// Stops once it reaches `tol`; hitting `max_sweeps` first returns the best
/// state with a non-converged diagnostic rather than an error.
#[allow(clippy::too_many_arguments)]
pub fn synthesize<R: Rng + ?Sized>(
    marginals: &[MarginalTable],
    n_bins: usize,
    n_classes: usize,
    feature_names: &[String],
    class_names: &[String],
    n: usize,
    max_sweeps: usize,
    tol: f64,
    rng: &mut R,
) -> Result<(LabeledTable, GumDiagnostics)> {
    let d = feature_names.len();
    let label_attr = d;

    let label_marginal = marginals
        .iter()
        .find(|m| m.clique == vec![label_attr])
        .map(|m| m.probs.clone())
        .unwrap_or_else(|| vec![1.0 / n_classes.max(1) as f64; n_classes.max(1)]);

    let mut state =
        GumState { codes: vec![vec![0usize; d]; n], labels: largest_remainder_counts(&label_marginal, n) };
    for f in 0..d {
        if let Some(m) = marginals.iter().find(|m| m.clique == vec![f]) {
            for row in 0..n {
                state.codes[row][f] = sample_categorical(&m.probs, rng);
            }
        }
    }

    let diagnostics = run_sweeps(&mut state, marginals, label_attr, n_bins, n_classes, max_sweeps, tol);

    let mut features = Array2::zeros((n, d));
    for (i, row) in state.codes.iter().enumerate() {
        for (j, &b) in row.iter().enumerate() {
            features[[i, j]] = b as f64;
        }
    }
    let table =
        LabeledTable::new(features, state.labels, feature_names.to_vec(), class_names.to_vec())?;
    Ok((table, diagnostics))
}

fn run_sweeps(
    state: &mut GumState,
    marginals: &[MarginalTable],
    label_attr: usize,
    n_bins: usize,
    n_classes: usize,
    max_sweeps: usize,
    tol: f64,
) -> GumDiagnostics {
    let has_pairs = marginals.iter().any(|m| m.clique.len() == 2);
    // Aligned marginals: pairs drive the moves; feature singletons only when
    // no pair was measured for any feature. The label singleton is tracked
    // but fixed.
    let aligned: Vec<&MarginalTable> = marginals
        .iter()
        .filter(|m| {
            if m.clique.len() == 2 {
                true
            } else if m.clique == vec![label_attr] {
                true
            } else {
                !has_pairs
            }
        })
        .collect();

    let mut history = vec![mean_l1(state, &aligned, label_attr)];
    let mut sweeps_run = 0;
    let mut converged = history[0] <= tol;

    while !converged && sweeps_run < max_sweeps {
        let mut moved = vec![false; state.labels.len()];
        for m in &aligned {
            match m.clique.as_slice() {
                [f] if *f != label_attr => sweep_slice(state, m, *f, None, n_bins, &mut moved),
                [f, l] if *l == label_attr => {
                    for y in 0..n_classes {
                        sweep_slice(state, m, *f, Some(y), n_bins, &mut moved);
                    }
                }
                _ => {}
            }
        }
        sweeps_run += 1;
        let err = mean_l1(state, &aligned, label_attr);
        history.push(err);
        converged = err <= tol;
    }

    let mean_l1_final = *history.last().unwrap();
    if !converged {
        log::warn!(
            "record updates stopped after {sweeps_run} sweeps at mean L1 {mean_l1_final:.4} (tol {tol})"
        );
    }
    GumDiagnostics { sweeps_run, mean_l1: mean_l1_final, converged, history }
}

/// Integer quotas for `n` draws from `probs` by largest remainder.
fn largest_remainder_counts(probs: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = probs.iter().sum();
    let shares: Vec<f64> = probs.iter().map(|p| p / total * n as f64).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut by_remainder: Vec<usize> = (0..probs.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &class in by_remainder.iter().take(n - assigned) {
        counts[class] += 1;
    }
    let mut labels = Vec::with_capacity(n);
    for (class, &count) in counts.iter().enumerate() {
        labels.extend(std::iter::repeat(class).take(count));
    }
    labels
}

/// Mean L1 distance between the tracked targets and the current records.
fn mean_l1(state: &GumState, marginals: &[&MarginalTable], label_attr: usize) -> f64 {
    let n = state.labels.len() as f64;
    let mut total = 0.0;
    for m in marginals {
        let mut counts = vec![0.0f64; m.n_cells()];
        for row in 0..state.labels.len() {
            let values: Vec<usize> = m
                .clique
                .iter()
                .map(|&a| if a == label_attr { state.labels[row] } else { state.codes[row][a] })
                .collect();
            counts[m.cell_index(&values)] += 1.0;
        }
        total += m
            .probs
            .iter()
            .zip(&counts)
            .map(|(&target, &count)| (target - count / n).abs())
            .sum::<f64>();
    }
    total / marginals.len() as f64
}

/// Greedy moves for one feature within one label slice (`slice = None`
/// means all records). Records move from the most over-represented bin to
/// the most under-represented bin while both discrepancies exceed half a
/// record; every move strictly shrinks this marginal's L1 error.
fn sweep_slice(
    state: &mut GumState,
    m: &MarginalTable,
    feature: usize,
    slice: Option<usize>,
    n_bins: usize,
    moved: &mut [bool],
) {
    let n = state.labels.len();
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    let mut current = vec![0.0f64; n_bins];
    for row in 0..n {
        if slice.is_some_and(|y| state.labels[row] != y) {
            continue;
        }
        current[state.codes[row][feature]] += 1.0;
        if !moved[row] {
            buckets[state.codes[row][feature]].push(row);
        }
    }
    let mut discrepancy: Vec<f64> = (0..n_bins)
        .map(|b| {
            let cell = match slice {
                Some(y) => m.cell_index(&[b, y]),
                None => m.cell_index(&[b]),
            };
            m.probs[cell] * n as f64 - current[b]
        })
        .collect();

    loop {
        let (mut from, mut to) = (0usize, 0usize);
        for b in 1..n_bins {
            if discrepancy[b] < discrepancy[from] {
                from = b;
            }
            if discrepancy[b] > discrepancy[to] {
                to = b;
            }
        }
        if !(discrepancy[from] < -0.5 && discrepancy[to] > 0.5) {
            return;
        }
        let row = loop {
            match buckets[from].pop() {
                Some(r) if !moved[r] => break Some(r),
                Some(_) => continue,
                None => break None,
            }
        };
        let Some(row) = row else {
            // every record of the donor bin already moved this sweep
            discrepancy[from] = 0.0;
            continue;
        };
        state.codes[row][feature] = to;
        moved[row] = true;
        discrepancy[from] += 1.0;
        discrepancy[to] -= 1.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn binned(codes: Vec<Vec<usize>>, labels: Vec<usize>, c: usize) -> LabeledTable {
        let n = codes.len();
        let d = codes[0].len();
        let features = Array2::from_shape_fn((n, d), |(i, j)| codes[i][j] as f64);
        LabeledTable::new(
            features,
            labels,
            (0..d).map(|j| format!("f{j}")).collect(),
            (0..c).map(|k| format!("c{k}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn budget_split_one_to_eight() {
        let table = binned(
            vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 0]],
            vec![0, 1, 0, 1],
            2,
        );
        let privacy = PrivacySpec::new(9.0, 9e-5).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let model = fit(&table, 4, &privacy, 50, 0.02, &mut rng).unwrap();
        // d = 2: singleton group epsilon 1 over 3 tables, pair group 8 over 2
        assert!((model.singleton_epsilon - 1.0 / 3.0).abs() < 1e-12);
        assert!((model.pair_epsilon - 4.0).abs() < 1e-12);
    }

    #[test]
    fn non_private_marginals_are_exact() {
        let table = binned(vec![vec![0], vec![1], vec![1], vec![2]], vec![0, 0, 1, 1], 2);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let (marginals, _, _) =
            fit_marginals(&table, 4, &PrivacySpec::non_private(), &mut rng).unwrap();
        let exact = measure(&table, &[0], &[4, 2]).unwrap();
        let fitted = marginals.iter().find(|m| m.clique == vec![0]).unwrap();
        for (a, b) in fitted.probs.iter().zip(&exact.probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_attribute_discrepancy_moves() {
        // one feature, no pairs: target (0.5, 0.5), records start all-zero
        let target = MarginalTable {
            clique: vec![0],
            dims: vec![2],
            probs: vec![0.5, 0.5],
            noise_sigma: 0.0,
            n_ref: 4.0,
        };
        let mut state = GumState { codes: vec![vec![0]; 4], labels: vec![0; 4] };
        let diag = run_sweeps(&mut state, &[target], 1, 2, 1, 1, 0.0);
        let ones = state.codes.iter().filter(|r| r[0] == 1).count();
        assert_eq!(ones, 2, "after one sweep counts must be (2, 2)");
        assert_eq!(diag.sweeps_run, 1);
        assert!(diag.converged);
    }

    #[test]
    fn infinite_tol_returns_initialization() {
        let table = binned(
            vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 0]],
            vec![0, 1, 0, 1],
            2,
        );
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let model =
            fit(&table, 4, &PrivacySpec::non_private(), 100, f64::INFINITY, &mut rng).unwrap();
        let mut rng2 = ChaCha20Rng::seed_from_u64(9);
        let (_, diag) = synthesize(
            &model.marginals,
            4,
            2,
            table.feature_names(),
            table.class_names(),
            8,
            100,
            f64::INFINITY,
            &mut rng2,
        )
        .unwrap();
        assert_eq!(diag.sweeps_run, 0);
        assert!(diag.converged);
    }

    #[test]
    fn realizable_targets_converge() {
        // data drawn exactly from a star model: labels, then conditionally
        // independent features
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let n = 400;
        let mut codes = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = i % 2;
            let f0 = if y == 0 { i % 4 } else { (i % 2) * 3 };
            let f1 = (i / 2) % 4;
            codes.push(vec![f0, f1]);
            labels.push(y);
        }
        let table = binned(codes, labels, 2);
        let model = fit(&table, 4, &PrivacySpec::non_private(), 200, 0.02, &mut rng).unwrap();

        let mut rng2 = ChaCha20Rng::seed_from_u64(21);
        let (_, diag) = synthesize(
            &model.marginals,
            4,
            2,
            table.feature_names(),
            table.class_names(),
            n,
            200,
            0.02,
            &mut rng2,
        )
        .unwrap();
        assert!(diag.converged, "final mean L1 {}", diag.mean_l1);
        assert!(diag.mean_l1 <= 0.05);
    }

    #[test]
    fn mean_l1_history_non_increasing() {
        let table = binned(
            (0..60).map(|i| vec![i % 4, (i / 3) % 4, (i / 5) % 4]).collect(),
            (0..60).map(|i| i % 3).collect(),
            3,
        );
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        // noisy, mutually inconsistent targets
        let privacy = PrivacySpec::new(2.0, 1e-5).unwrap();
        let model = fit(&table, 4, &privacy, 40, 0.0, &mut rng).unwrap();
        let mut rng2 = ChaCha20Rng::seed_from_u64(3);
        let (_, diag) = synthesize(
            &model.marginals,
            4,
            3,
            table.feature_names(),
            table.class_names(),
            60,
            40,
            0.0,
            &mut rng2,
        )
        .unwrap();
        for w in diag.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "history increased: {:?}", diag.history);
        }
    }

    #[test]
    fn output_stays_in_domain() {
        let table = binned(
            (0..40).map(|i| vec![i % 4, (i / 2) % 4]).collect(),
            (0..40).map(|i| i % 2).collect(),
            2,
        );
        let privacy = PrivacySpec::new(1.0, 1e-5).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let model = fit(&table, 4, &privacy, 60, 0.02, &mut rng).unwrap();
        let samples = model.sample(100, &mut rng).unwrap();
        for &v in samples.features().iter() {
            assert!(v.fract() == 0.0 && (0.0..4.0).contains(&v));
        }
    }

    #[test]
    fn labels_follow_consensus_quotas() {
        let table = binned(
            (0..50).map(|i| vec![i % 4]).collect(),
            (0..50).map(|i| usize::from(i % 5 == 0)).collect(),
            2,
        );
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let model = fit(&table, 4, &PrivacySpec::non_private(), 50, 0.02, &mut rng).unwrap();
        let samples = model.sample(50, &mut rng).unwrap();
        // exact quotas: 10 of class 1, 40 of class 0
        assert_eq!(samples.class_counts(), vec![40, 10]);
    }
}
