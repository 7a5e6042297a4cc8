//! Black-box membership-inference audit: distance-to-nearest-synthetic-row
//! scoring and AUC-ROC via the rank statistic.

use serde::{Deserialize, Serialize};

use crate::dataset::{ContinuousTransform, LabeledTable};
use crate::error::{Error, Result};

/// Attack outcome: one score per query record (members first, then
/// non-members) and the AUC-ROC of separating the two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiaResult {
    pub auc: f64,
    pub scores: Vec<f64>,
    pub member_flags: Vec<bool>,
}

/// Score each query record by the negated Euclidean distance to its nearest
/// synthetic row, after standardizing everything with a transform fit on
/// the synthetic data. Higher scores mean "more likely a member".
pub fn blackbox_attack(
    synth: &LabeledTable,
    members: &LabeledTable,
    nonmembers: &LabeledTable,
) -> Result<MiaResult> {
    if synth.n_rows() == 0 {
        return Err(Error::EmptySet("synthetic table".into()));
    }
    if members.n_rows() == 0 {
        return Err(Error::EmptySet("member set".into()));
    }
    if nonmembers.n_rows() == 0 {
        return Err(Error::EmptySet("non-member set".into()));
    }
    for (name, t) in [("members", members), ("non-members", nonmembers)] {
        if t.n_features() != synth.n_features() {
            return Err(Error::ShapeMismatch(format!(
                "{name} have {} features, synthetic has {}",
                t.n_features(),
                synth.n_features()
            )));
        }
    }

    let transform = ContinuousTransform::fit(synth)?;
    let synth_std = transform.apply(synth);

    let score_table = |t: &LabeledTable| -> Vec<f64> {
        let std = transform.apply(t);
        std.features()
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = f64::INFINITY;
                for synth_row in synth_std.features().rows() {
                    let mut d2 = 0.0;
                    for (a, b) in row.iter().zip(synth_row.iter()) {
                        d2 += (a - b) * (a - b);
                    }
                    best = best.min(d2);
                }
                -best.sqrt()
            })
            .collect()
    };

    let mut scores = score_table(members);
    let member_count = scores.len();
    scores.extend(score_table(nonmembers));
    let member_flags: Vec<bool> = (0..scores.len()).map(|i| i < member_count).collect();
    let auc = auc_from_scores(&scores, &member_flags)?;
    Ok(MiaResult { auc, scores, member_flags })
}

/// AUC via the Mann-Whitney statistic with half credit for ties.
pub fn auc_from_scores(scores: &[f64], member_flags: &[bool]) -> Result<f64> {
    assert_eq!(scores.len(), member_flags.len());
    let n_pos = member_flags.iter().filter(|&&f| f).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::EmptySet("AUC needs both members and non-members".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // average ranks over ties
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if member_flags[idx] {
                rank_sum_pos += rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn table(features: Array2<f64>) -> LabeledTable {
        let n = features.nrows();
        let d = features.ncols();
        LabeledTable::new(
            features,
            vec![0; n],
            (0..d).map(|j| format!("f{j}")).collect(),
            vec!["only".into()],
        )
        .unwrap()
    }

    fn random_table(n: usize, d: usize, rng: &mut ChaCha20Rng) -> LabeledTable {
        table(Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn memorized_members_get_perfect_auc() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let members = random_table(30, 3, &mut rng);
        let synth = members.clone();
        let far = table(Array2::from_shape_fn((30, 3), |_| rng.gen_range(50.0..60.0)));
        let result = blackbox_attack(&synth, &members, &far).unwrap();
        assert_eq!(result.auc, 1.0);
    }

    #[test]
    fn identical_scores_give_half() {
        let scores = vec![0.5; 10];
        let flags: Vec<bool> = (0..10).map(|i| i < 5).collect();
        assert_eq!(auc_from_scores(&scores, &flags).unwrap(), 0.5);
    }

    #[test]
    fn independent_redraw_is_near_chance() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let synth = random_table(500, 4, &mut rng);
        let members = random_table(250, 4, &mut rng);
        let nonmembers = random_table(250, 4, &mut rng);
        let result = blackbox_attack(&synth, &members, &nonmembers).unwrap();
        assert!((0.45..=0.55).contains(&result.auc), "auc {}", result.auc);
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let scores: Vec<f64> = (0..40).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let flags: Vec<bool> = (0..40).map(|_| rng.gen_bool(0.5)).collect();
        if flags.iter().all(|&f| f) || flags.iter().all(|&f| !f) {
            return;
        }
        let base = auc_from_scores(&scores, &flags).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| s.tanh() * 3.0 + 1.0).collect();
        let transformed = auc_from_scores(&squashed, &flags).unwrap();
        assert!((base - transformed).abs() < 1e-12);
    }

    #[test]
    fn auc_complements_when_roles_swap() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let scores: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..1.0)).collect();
        let flags: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let auc = auc_from_scores(&scores, &flags).unwrap();
        let swapped: Vec<bool> = flags.iter().map(|f| !f).collect();
        let auc_swapped = auc_from_scores(&scores, &swapped).unwrap();
        assert!((auc + auc_swapped - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_sets_are_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let t = random_table(5, 2, &mut rng);
        let empty = table(Array2::zeros((0, 2)));
        assert!(matches!(blackbox_attack(&empty, &t, &t), Err(Error::EmptySet(_))));
        assert!(matches!(blackbox_attack(&t, &empty, &t), Err(Error::EmptySet(_))));
        assert!(matches!(blackbox_attack(&t, &t, &empty), Err(Error::EmptySet(_))));
    }
}
