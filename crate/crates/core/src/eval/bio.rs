//! Structure-preservation metrics for expression-like data: rank-test based
//! differential-expression detection with TPR/FPR summaries, Pearson
//! co-expression networks, greedy-modularity module detection, and group
//! fold-changes.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::dataset::LabeledTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    /// First sample stochastically greater.
    Greater,
    /// First sample stochastically smaller.
    Less,
}

/// One-sided two-sample Wilcoxon rank-sum (Mann-Whitney U) p-value.
///
/// Small tie-free inputs (`n_a + n_b <= 12`) are evaluated exactly by
/// enumerating the rank-sum distribution; everything else uses the normal
/// approximation with tie correction and a 0.5 continuity correction.
/// Two groups with identical constant values give p = 1.
pub fn rank_test(a: &[f64], b: &[f64], alternative: Alternative) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::DegenerateInput("rank test needs non-empty samples".into()));
    }
    let first = a[0];
    if a.iter().chain(b).all(|&v| v == first) {
        return Ok(1.0);
    }

    let n_a = a.len();
    let n_b = b.len();
    let n = n_a + n_b;

    let mut pooled: Vec<(f64, bool)> = a.iter().map(|&v| (v, true)).collect();
    pooled.extend(b.iter().map(|&v| (v, false)));
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    // average ranks over ties, collecting tie-group sizes
    let mut rank_sum_a = 0.0;
    let mut ties: Vec<usize> = Vec::new();
    let mut has_ties = false;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let group = j - i;
        if group > 1 {
            has_ties = true;
            ties.push(group);
        }
        let rank = (i + 1 + j) as f64 / 2.0;
        for entry in &pooled[i..j] {
            if entry.1 {
                rank_sum_a += rank;
            }
        }
        i = j;
    }

    if n <= 12 && !has_ties {
        let r_obs = rank_sum_a as u64;
        return Ok(exact_rank_sum_p(n, n_a, r_obs, alternative));
    }

    let u = rank_sum_a - (n_a * (n_a + 1)) as f64 / 2.0;
    let mean_u = (n_a * n_b) as f64 / 2.0;
    let tie_term: f64 =
        ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1)) as f64;
    let var_u = (n_a * n_b) as f64 / 12.0 * ((n + 1) as f64 - tie_term);
    if var_u <= 0.0 {
        return Ok(1.0);
    }
    let sd = var_u.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = match alternative {
        Alternative::Greater => 1.0 - normal.cdf((u - 0.5 - mean_u) / sd),
        Alternative::Less => normal.cdf((u + 0.5 - mean_u) / sd),
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Exact tail probability of the rank sum of the first group under the
/// null, via the subset-sum counting distribution.
fn exact_rank_sum_p(n: usize, n_a: usize, r_obs: u64, alternative: Alternative) -> f64 {
    let max_sum: usize = (n - n_a + 1..=n).sum();
    // count[k][s]: k-subsets of ranks {1..n} with sum s
    let mut count = vec![vec![0u64; max_sum + 1]; n_a + 1];
    count[0][0] = 1;
    for rank in 1..=n {
        for k in (1..=n_a).rev() {
            for s in (rank..=max_sum).rev() {
                count[k][s] += count[k - 1][s - rank];
            }
        }
    }
    let total: u64 = count[n_a].iter().sum();
    let tail: u64 = match alternative {
        Alternative::Greater => count[n_a][r_obs as usize..].iter().sum(),
        Alternative::Less => count[n_a][..=r_obs as usize].iter().sum(),
    };
    tail as f64 / total as f64
}

/// Differential expression between one class pair (`class_a < class_b`).
/// `up` holds genes significantly higher in `class_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DePair {
    pub class_a: usize,
    pub class_b: usize,
    pub up: BTreeSet<usize>,
    pub down: BTreeSet<usize>,
    pub p_up: Vec<f64>,
    pub p_down: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeResult {
    pub pairs: Vec<DePair>,
    /// Class pairs skipped for lacking two samples on either side.
    pub skipped: Vec<(usize, usize)>,
    pub n_genes: usize,
    pub n_classes: usize,
}

pub const DEFAULT_DE_ALPHA: f64 = 0.05;

/// Per unordered class pair and per gene, both one-sided rank tests at
/// level `alpha`. Pairs without at least two samples per side are skipped
/// with a warning.
pub fn de_genes(table: &LabeledTable, alpha: f64) -> Result<DeResult> {
    let d = table.n_features();
    let c = table.n_classes();
    let class_rows: Vec<Vec<usize>> = (0..c).map(|k| table.class_row_indices(k)).collect();

    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for a in 0..c {
        for b in (a + 1)..c {
            if class_rows[a].len() < 2 || class_rows[b].len() < 2 {
                log::warn!("skipping class pair ({a}, {b}): fewer than two samples per side");
                skipped.push((a, b));
                continue;
            }
            let mut pair = DePair {
                class_a: a,
                class_b: b,
                up: BTreeSet::new(),
                down: BTreeSet::new(),
                p_up: Vec::with_capacity(d),
                p_down: Vec::with_capacity(d),
            };
            for gene in 0..d {
                let vals_a: Vec<f64> =
                    class_rows[a].iter().map(|&i| table.features()[[i, gene]]).collect();
                let vals_b: Vec<f64> =
                    class_rows[b].iter().map(|&i| table.features()[[i, gene]]).collect();
                let p_greater = rank_test(&vals_a, &vals_b, Alternative::Greater)?;
                let p_less = rank_test(&vals_a, &vals_b, Alternative::Less)?;
                if p_greater <= alpha {
                    pair.up.insert(gene);
                }
                if p_less <= alpha {
                    pair.down.insert(gene);
                }
                pair.p_up.push(p_greater);
                pair.p_down.push(p_less);
            }
            debug_assert!(pair.up.is_disjoint(&pair.down));
            pairs.push(pair);
        }
    }
    Ok(DeResult { pairs, skipped, n_genes: d, n_classes: c })
}

/// Mean true/false positive rates of `synth` DE sets against `real` ones,
/// over pairs present in both results and both directions. TPR terms with
/// an empty real set are skipped (and counted); FPR uses the standard
/// negatives denominator `d - |real|`.
pub fn de_tpr_fpr(real: &DeResult, synth: &DeResult) -> Result<(f64, f64)> {
    if real.n_genes != synth.n_genes || real.n_classes != synth.n_classes {
        return Err(Error::ShapeMismatch(format!(
            "DE results disagree: {} vs {} genes, {} vs {} classes",
            real.n_genes, synth.n_genes, real.n_classes, synth.n_classes
        )));
    }
    let d = real.n_genes as f64;
    let mut tpr_terms: Vec<f64> = Vec::new();
    let mut fpr_terms: Vec<f64> = Vec::new();
    let mut skipped_empty = 0usize;
    for real_pair in &real.pairs {
        let Some(synth_pair) = synth
            .pairs
            .iter()
            .find(|p| p.class_a == real_pair.class_a && p.class_b == real_pair.class_b)
        else {
            continue;
        };
        for (real_set, synth_set) in [
            (&real_pair.up, &synth_pair.up),
            (&real_pair.down, &synth_pair.down),
        ] {
            let hits = real_set.intersection(synth_set).count() as f64;
            let false_hits = synth_set.difference(real_set).count() as f64;
            if real_set.is_empty() {
                skipped_empty += 1;
            } else {
                tpr_terms.push(hits / real_set.len() as f64);
            }
            let negatives = d - real_set.len() as f64;
            if negatives > 0.0 {
                fpr_terms.push(false_hits / negatives);
            }
        }
    }
    if skipped_empty > 0 {
        log::warn!("{skipped_empty} pair-direction terms skipped (empty real DE set)");
    }
    if tpr_terms.is_empty() {
        return Err(Error::NoValidPairs);
    }
    let tpr = tpr_terms.iter().sum::<f64>() / tpr_terms.len() as f64;
    let fpr = if fpr_terms.is_empty() {
        0.0
    } else {
        fpr_terms.iter().sum::<f64>() / fpr_terms.len() as f64
    };
    Ok((tpr, fpr))
}

/// Pearson correlation and its two-sided p-value from the t statistic
/// `r sqrt((n-2) / (1-r^2))` with n-2 degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} samples", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::DegenerateInput("correlation needs at least 3 samples".into()));
    }
    let nf = n as f64;
    let mean_x = x.iter().sum::<f64>() / nf;
    let mean_y = y.iter().sum::<f64>() / nf;
    let mut num = 0.0;
    let mut den_x = 0.0;
    let mut den_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        num += (a - mean_x) * (b - mean_y);
        den_x += (a - mean_x) * (a - mean_x);
        den_y += (b - mean_y) * (b - mean_y);
    }
    if den_x == 0.0 || den_y == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let r = (num / (den_x.sqrt() * den_y.sqrt())).clamp(-1.0, 1.0);
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * ((nf - 2.0) / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, nf - 2.0).expect("valid t distribution");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok((r, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeStat {
    pub r: f64,
    pub p: f64,
}

/// Co-expression network: undirected edges `(j, k)` with `j < k` kept iff
/// `r > r_min` and `p < alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoexNetwork {
    pub edges: BTreeMap<(usize, usize), EdgeStat>,
    pub r_min: f64,
    pub n_genes: usize,
}

pub fn build_network(table: &LabeledTable, r_min: f64, alpha: f64) -> Result<CoexNetwork> {
    if table.n_rows() < 3 {
        return Err(Error::DegenerateInput("network needs at least 3 samples".into()));
    }
    let d = table.n_features();
    let columns: Vec<Vec<f64>> = (0..d).map(|j| table.column(j).to_vec()).collect();
    let usable: Vec<bool> = columns
        .iter()
        .enumerate()
        .map(|(j, col)| {
            let first = col[0];
            let constant = col.iter().all(|&v| v == first);
            if constant {
                log::warn!("gene {j} has zero variance; excluded from the network");
            }
            !constant
        })
        .collect();

    let mut edges = BTreeMap::new();
    for j in 0..d {
        if !usable[j] {
            continue;
        }
        for k in (j + 1)..d {
            if !usable[k] {
                continue;
            }
            let (r, p) = pearson(&columns[j], &columns[k])?;
            if r > r_min && p < alpha {
                edges.insert((j, k), EdgeStat { r, p });
            }
        }
    }
    Ok(CoexNetwork { edges, r_min, n_genes: d })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkComparison {
    pub correct: usize,
    pub spurious: usize,
    pub real_edges: usize,
}

/// Edges of `synth` that exist in `real` (correct) vs those that do not
/// (spurious), plus the real edge count.
pub fn compare_networks(real: &CoexNetwork, synth: &CoexNetwork) -> Result<NetworkComparison> {
    if real.n_genes != synth.n_genes {
        return Err(Error::NodeSetMismatch(real.n_genes, synth.n_genes));
    }
    let correct = synth.edges.keys().filter(|k| real.edges.contains_key(k)).count();
    Ok(NetworkComparison {
        correct,
        spurious: synth.edges.len() - correct,
        real_edges: real.edges.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleSet {
    pub modules: Vec<BTreeSet<usize>>,
}

pub const DEFAULT_MIN_MODULE_SIZE: usize = 10;

/// Greedy modularity maximization (agglomerative merging on the r-weighted
/// graph), returning the partition with the highest modularity along the
/// merge path. Modules below `min_size` are dropped. Fully deterministic:
/// ties break on the smallest community indices.
pub fn detect_modules(network: &CoexNetwork, min_size: usize) -> Result<ModuleSet> {
    if network.edges.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    let total_weight: f64 = network.edges.values().map(|e| e.r).sum();
    let two_m = 2.0 * total_weight;

    // communities indexed by their smallest original gene
    let mut members: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut degree: BTreeMap<usize, f64> = BTreeMap::new();
    let mut between: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(j, k), stat) in &network.edges {
        members.entry(j).or_insert_with(|| BTreeSet::from([j]));
        members.entry(k).or_insert_with(|| BTreeSet::from([k]));
        *degree.entry(j).or_insert(0.0) += stat.r;
        *degree.entry(k).or_insert(0.0) += stat.r;
        *between.entry((j, k)).or_insert(0.0) += stat.r;
    }

    // Q of the singleton partition (no within-community weight)
    let mut q: f64 = -degree.values().map(|&d| (d / two_m) * (d / two_m)).sum::<f64>();
    let mut best_q = q;
    let mut best_partition: Vec<BTreeSet<usize>> = members.values().cloned().collect();

    loop {
        let mut best_pair: Option<((usize, usize), f64)> = None;
        for (&(a, b), &e_ab) in &between {
            let delta = e_ab / total_weight - degree[&a] * degree[&b] / (2.0 * total_weight * total_weight);
            match best_pair {
                Some((_, best_delta)) if delta <= best_delta => {}
                _ => best_pair = Some(((a, b), delta)),
            }
        }
        let Some(((a, b), delta)) = best_pair else {
            break;
        };
        if delta <= 1e-12 {
            break;
        }

        // merge b into a
        let b_members = members.remove(&b).expect("community exists");
        members.get_mut(&a).expect("community exists").extend(b_members);
        let b_degree = degree.remove(&b).expect("community exists");
        *degree.get_mut(&a).unwrap() += b_degree;

        let mut new_between: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for ((x, y), w) in between {
            let map = |c: usize| if c == b { a } else { c };
            let (nx, ny) = (map(x), map(y));
            if nx == ny {
                continue;
            }
            let key = (nx.min(ny), nx.max(ny));
            *new_between.entry(key).or_insert(0.0) += w;
        }
        between = new_between;

        q += delta;
        if q > best_q {
            best_q = q;
            best_partition = members.values().cloned().collect();
        }
    }

    let modules: Vec<BTreeSet<usize>> =
        best_partition.into_iter().filter(|m| m.len() >= min_size).collect();
    Ok(ModuleSet { modules })
}

/// Group fold-changes of detected modules over class-by-dataset groups,
/// with a hierarchical-clustering column order and the same-class adjacency
/// score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfcReport {
    /// Group labels, real classes first then synthetic classes.
    pub group_names: Vec<String>,
    /// modules x groups.
    pub values: Array2<f64>,
    /// Column order from average-linkage clustering of the group profiles.
    pub column_order: Vec<usize>,
    /// Fraction of synthetic group columns whose nearest column is the real
    /// group of the same class.
    pub same_class_adjacency: f64,
}

/// `GFC(M, g) = mean_{j in M} log2((mean_g(x_j) + pc) / (grand_mean(x_j) + pc))`
/// where the grand mean averages the group means unweighted. The pseudocount
/// defaults to 1 in the pipeline; passing 0 makes the score scale-invariant.
pub fn group_fold_changes(
    modules: &ModuleSet,
    real: &LabeledTable,
    synth: &LabeledTable,
    pseudocount: f64,
) -> Result<GfcReport> {
    if real.n_features() != synth.n_features() {
        return Err(Error::ShapeMismatch(format!(
            "real has {} genes, synthetic has {}",
            real.n_features(),
            synth.n_features()
        )));
    }
    if modules.modules.is_empty() {
        return Err(Error::DegenerateInput("no modules to score".into()));
    }
    let d = real.n_features();
    let c = real.n_classes().max(synth.n_classes());

    // group = (dataset, class), real classes first
    struct Group {
        name: String,
        class: usize,
        synthetic: bool,
        means: Vec<f64>,
    }
    let mut groups: Vec<Group> = Vec::new();
    for (synthetic, table) in [(false, real), (true, synth)] {
        for class in 0..c {
            let rows = table.class_row_indices(class);
            if rows.is_empty() {
                log::warn!(
                    "group ({}, class {class}) is empty; skipped",
                    if synthetic { "synthetic" } else { "real" }
                );
                continue;
            }
            let mut means = vec![0.0; d];
            for &i in &rows {
                for (j, m) in means.iter_mut().enumerate() {
                    *m += table.features()[[i, j]];
                }
            }
            means.iter_mut().for_each(|m| *m /= rows.len() as f64);
            groups.push(Group {
                name: format!(
                    "{}:{}",
                    if synthetic { "synth" } else { "real" },
                    table.class_names().get(class).cloned().unwrap_or_else(|| class.to_string())
                ),
                class,
                synthetic,
                means,
            });
        }
    }
    if groups.is_empty() {
        return Err(Error::DegenerateInput("no non-empty groups".into()));
    }

    let n_groups = groups.len();
    let mut grand = vec![0.0; d];
    for g in &groups {
        for (j, v) in g.means.iter().enumerate() {
            grand[j] += v / n_groups as f64;
        }
    }

    let n_modules = modules.modules.len();
    let mut values = Array2::zeros((n_modules, n_groups));
    for (mi, module) in modules.modules.iter().enumerate() {
        for (gi, g) in groups.iter().enumerate() {
            let mut acc = 0.0;
            for &j in module {
                acc += ((g.means[j] + pseudocount) / (grand[j] + pseudocount)).log2();
            }
            values[[mi, gi]] = acc / module.len() as f64;
        }
    }

    let column_order = average_linkage_order(&values);

    let col_dist = |a: usize, b: usize| -> f64 {
        (0..n_modules).map(|m| (values[[m, a]] - values[[m, b]]).powi(2)).sum::<f64>().sqrt()
    };
    let mut hits = 0usize;
    let mut synth_cols = 0usize;
    for gi in 0..n_groups {
        if !groups[gi].synthetic {
            continue;
        }
        synth_cols += 1;
        let mut nearest = None;
        for other in 0..n_groups {
            if other == gi {
                continue;
            }
            let dist = col_dist(gi, other);
            nearest = match nearest {
                None => Some((other, dist)),
                Some((_, best)) if dist < best => Some((other, dist)),
                keep => keep,
            };
        }
        if let Some((other, _)) = nearest {
            if !groups[other].synthetic && groups[other].class == groups[gi].class {
                hits += 1;
            }
        }
    }
    let same_class_adjacency = if synth_cols > 0 { hits as f64 / synth_cols as f64 } else { 0.0 };

    Ok(GfcReport {
        group_names: groups.iter().map(|g| g.name.clone()).collect(),
        values,
        column_order,
        same_class_adjacency,
    })
}

/// Leaf order of average-linkage (Euclidean) agglomerative clustering of
/// the matrix columns.
fn average_linkage_order(values: &Array2<f64>) -> Vec<usize> {
    let n = values.ncols();
    if n == 0 {
        return Vec::new();
    }
    let dist = |a: usize, b: usize| -> f64 {
        (0..values.nrows()).map(|m| (values[[m, a]] - values[[m, b]]).powi(2)).sum::<f64>().sqrt()
    };
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while clusters.len() > 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let mut total = 0.0;
                for &a in &clusters[i] {
                    for &b in &clusters[j] {
                        total += dist(a, b);
                    }
                }
                let avg = total / (clusters[i].len() * clusters[j].len()) as f64;
                match best {
                    Some((_, _, d)) if avg >= d => {}
                    _ => best = Some((i, j, avg)),
                }
            }
        }
        let (i, j, _) = best.expect("at least one pair");
        let merged = clusters.remove(j);
        clusters[i].extend(merged);
    }
    clusters.pop().unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_planted, PlantedDe, PlantedModule, PlantedSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn exact_rank_test_small_sample() {
        let p = rank_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Less).unwrap();
        assert!((p - 0.05).abs() < 1e-12, "p = {p}");
        let p_greater = rank_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Greater).unwrap();
        assert_eq!(p_greater, 1.0);
    }

    #[test]
    fn exact_mode_matches_enumeration() {
        // brute force over all C(n, n_a) rank assignments
        for (n_a, n_b) in [(2usize, 3usize), (3, 3), (4, 2)] {
            let n = n_a + n_b;
            let indices: Vec<usize> = (0..n).collect();
            let mut assignments = Vec::new();
            fn combos(pool: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
                if cur.len() == k {
                    out.push(cur.clone());
                    return;
                }
                for i in start..pool.len() {
                    cur.push(pool[i]);
                    combos(pool, k, i + 1, cur, out);
                    cur.pop();
                }
            }
            combos(&indices, n_a, 0, &mut Vec::new(), &mut assignments);

            for subset in &assignments {
                let a: Vec<f64> = subset.iter().map(|&i| (i + 1) as f64).collect();
                let b: Vec<f64> = indices
                    .iter()
                    .filter(|i| !subset.contains(i))
                    .map(|&i| (i + 1) as f64)
                    .collect();
                let r_obs: f64 = a.iter().sum();
                let exceed = assignments
                    .iter()
                    .filter(|s| s.iter().map(|&i| (i + 1) as f64).sum::<f64>() >= r_obs)
                    .count();
                let expected = exceed as f64 / assignments.len() as f64;
                let p = rank_test(&a, &b, Alternative::Greater).unwrap();
                assert!((p - expected).abs() < 1e-12, "({n_a},{n_b}) subset {subset:?}: {p} vs {expected}");
            }
        }
    }

    #[test]
    fn identical_samples_are_not_significant() {
        let a = [3.0, 1.0, 2.0, 5.0];
        let p_greater = rank_test(&a, &a, Alternative::Greater).unwrap();
        let p_less = rank_test(&a, &a, Alternative::Less).unwrap();
        assert!(p_greater >= 0.5);
        assert!(p_less >= 0.5);
    }

    #[test]
    fn constant_input_gives_p_one() {
        assert_eq!(rank_test(&[2.0, 2.0], &[2.0, 2.0, 2.0], Alternative::Greater).unwrap(), 1.0);
    }

    #[test]
    fn large_shift_is_significant() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..50).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let b: Vec<f64> =
            (0..50).map(|_| 2.0 + rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let p = rank_test(&b, &a, Alternative::Greater).unwrap();
        assert!(p < 1e-6, "p = {p}");
    }

    fn de_spec() -> PlantedSpec {
        PlantedSpec {
            n_per_class: vec![50, 50],
            d: 12,
            de: vec![PlantedDe {
                class_a: 0,
                class_b: 1,
                up: vec![(0, 5.0), (1, 5.0)],
                down: vec![(2, 5.0)],
            }],
            modules: vec![],
            noise_scale: 1.0,
            baseline: 0.0,
        }
    }

    #[test]
    fn planted_shifts_are_detected() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (table, _) = generate_planted(&de_spec(), &mut rng).unwrap();
        let de = de_genes(&table, 0.05).unwrap();
        assert_eq!(de.pairs.len(), 1);
        assert!(de.pairs[0].up.contains(&0));
        assert!(de.pairs[0].up.contains(&1));
        assert!(de.pairs[0].down.contains(&2));
    }

    #[test]
    fn de_is_invariant_to_row_order() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (table, _) = generate_planted(&de_spec(), &mut rng).unwrap();
        let de_a = de_genes(&table, 0.05).unwrap();
        let mut order: Vec<usize> = (0..table.n_rows()).collect();
        order.reverse();
        let shuffled = table.subset(&order);
        let de_b = de_genes(&shuffled, 0.05).unwrap();
        assert_eq!(de_a, de_b);
    }

    #[test]
    fn tpr_fpr_identities() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (table, _) = generate_planted(&de_spec(), &mut rng).unwrap();
        let de = de_genes(&table, 0.05).unwrap();

        let (tpr, fpr) = de_tpr_fpr(&de, &de).unwrap();
        assert_eq!(tpr, 1.0);
        assert_eq!(fpr, 0.0);

        let mut empty = de.clone();
        empty.pairs[0].up.clear();
        empty.pairs[0].down.clear();
        let (tpr, fpr) = de_tpr_fpr(&de, &empty).unwrap();
        assert_eq!(tpr, 0.0);
        assert_eq!(fpr, 0.0);

        let mut complement = de.clone();
        for pair in &mut complement.pairs {
            let real = &de.pairs[0];
            pair.up = (0..de.n_genes).filter(|g| !real.up.contains(g)).collect();
            pair.down = (0..de.n_genes).filter(|g| !real.down.contains(g)).collect();
        }
        let (tpr, fpr) = de_tpr_fpr(&de, &complement).unwrap();
        assert_eq!(tpr, 0.0);
        assert_eq!(fpr, 1.0);
    }

    #[test]
    fn pearson_hand_values() {
        let (r, _) = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r, 1.0);
        let (r, _) = pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(r, -1.0);
        let (r, _) = pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::ZeroVariance)));
    }

    #[test]
    fn pearson_affine_invariance_and_sign_flip() {
        let x = [0.3, -1.2, 2.0, 0.7, -0.4];
        let y = [1.0, 0.2, 1.4, -0.3, 0.8];
        let (r, _) = pearson(&x, &y).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| 3.0 * v + 7.0).collect();
        let (r_scaled, _) = pearson(&scaled, &y).unwrap();
        assert!((r - r_scaled).abs() < 1e-12);
        let negated: Vec<f64> = x.iter().map(|v| -v).collect();
        let (r_neg, _) = pearson(&negated, &y).unwrap();
        assert!((r + r_neg).abs() < 1e-12);
    }

    fn module_spec() -> PlantedSpec {
        PlantedSpec {
            n_per_class: vec![500],
            d: 10,
            de: vec![],
            modules: vec![PlantedModule { genes: vec![0, 1, 2, 3], rho: 0.9 }],
            noise_scale: 1.0,
            baseline: 0.0,
        }
    }

    #[test]
    fn planted_module_edges_survive_high_threshold() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let (table, _) = generate_planted(&module_spec(), &mut rng).unwrap();
        let net = build_network(&table, 0.7, 0.05).unwrap();
        for j in 0..4 {
            for k in (j + 1)..4 {
                assert!(net.edges.contains_key(&(j, k)), "module edge ({j},{k}) missing");
            }
        }
        // independent genes contribute nothing at r > 0.7
        assert_eq!(net.edges.len(), 6);
    }

    #[test]
    fn perfect_correlation_single_edge() {
        let features =
            Array2::from_shape_fn((5, 2), |(i, j)| if j == 0 { i as f64 } else { 2.0 * i as f64 });
        let table = LabeledTable::new(
            features,
            vec![0; 5],
            vec!["a".into(), "b".into()],
            vec!["c".into()],
        )
        .unwrap();
        let net = build_network(&table, 0.0, 0.05).unwrap();
        assert_eq!(net.edges.len(), 1);
        assert!(net.edges.contains_key(&(0, 1)));
    }

    #[test]
    fn network_comparison_counts() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let (table, _) = generate_planted(&module_spec(), &mut rng).unwrap();
        let net = build_network(&table, 0.7, 0.05).unwrap();

        let same = compare_networks(&net, &net).unwrap();
        assert_eq!(same.correct, net.edges.len());
        assert_eq!(same.spurious, 0);
        assert_eq!(same.real_edges, net.edges.len());

        let empty = CoexNetwork { edges: BTreeMap::new(), r_min: 0.7, n_genes: net.n_genes };
        let vs_empty = compare_networks(&net, &empty).unwrap();
        assert_eq!(vs_empty.correct, 0);
        assert_eq!(vs_empty.spurious, 0);
        assert_eq!(vs_empty.real_edges, net.edges.len());

        let mut extra = net.clone();
        extra.edges.insert((8, 9), EdgeStat { r: 0.99, p: 0.0 });
        let cmp = compare_networks(&net, &extra).unwrap();
        assert_eq!(cmp.correct, net.edges.len());
        assert_eq!(cmp.spurious, 1);
        // counts satisfy correct + spurious = |E_synth|
        assert_eq!(cmp.correct + cmp.spurious, extra.edges.len());
    }

    fn clique_network(cliques: &[&[usize]], n_genes: usize) -> CoexNetwork {
        let mut edges = BTreeMap::new();
        for clique in cliques {
            for (ai, &a) in clique.iter().enumerate() {
                for &b in &clique[ai + 1..] {
                    edges.insert((a.min(b), a.max(b)), EdgeStat { r: 0.9, p: 0.0 });
                }
            }
        }
        CoexNetwork { edges, r_min: 0.7, n_genes }
    }

    #[test]
    fn disjoint_cliques_become_modules() {
        let first: Vec<usize> = (0..15).collect();
        let second: Vec<usize> = (15..30).collect();
        let net = clique_network(&[&first, &second], 30);
        let modules = detect_modules(&net, 10).unwrap();
        assert_eq!(modules.modules.len(), 2);
        assert_eq!(modules.modules[0], first.iter().copied().collect());
        assert_eq!(modules.modules[1], second.iter().copied().collect());
    }

    #[test]
    fn uniform_complete_graph_is_one_module() {
        let nodes: Vec<usize> = (0..12).collect();
        let net = clique_network(&[&nodes], 12);
        let modules = detect_modules(&net, 2).unwrap();
        assert_eq!(modules.modules.len(), 1);
        assert_eq!(modules.modules[0].len(), 12);
    }

    #[test]
    fn empty_network_is_an_error() {
        let net = CoexNetwork { edges: BTreeMap::new(), r_min: 0.7, n_genes: 5 };
        assert!(matches!(detect_modules(&net, 2), Err(Error::EmptyNetwork)));
    }

    #[test]
    fn gfc_zero_when_groups_match_grand_mean() {
        // two classes with identical means in both datasets
        let features = Array2::from_shape_fn((40, 4), |(i, j)| ((i * 7 + j * 3) % 5) as f64);
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let table = LabeledTable::new(
            features,
            labels,
            (0..4).map(|j| format!("g{j}")).collect(),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let modules = ModuleSet { modules: vec![BTreeSet::from([0, 1, 2, 3])] };
        let report = group_fold_changes(&modules, &table, &table, 1.0).unwrap();
        // groups coincide across datasets; same-class adjacency is perfect
        assert_eq!(report.same_class_adjacency, 1.0);
    }

    #[test]
    fn gfc_scale_invariant_with_zero_pseudocount() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let spec = PlantedSpec {
            n_per_class: vec![50, 50],
            d: 6,
            de: vec![],
            modules: vec![],
            noise_scale: 1.0,
            baseline: 100.0,
        };
        let (real, _) = generate_planted(&spec, &mut rng).unwrap();
        let (synth, _) = generate_planted(&spec, &mut rng).unwrap();
        let modules = ModuleSet { modules: vec![BTreeSet::from([0, 1, 2])] };
        let base = group_fold_changes(&modules, &real, &synth, 0.0).unwrap();

        let scale = |t: &LabeledTable| t.subset(&(0..t.n_rows()).collect::<Vec<_>>());
        let mut scaled_real = scale(&real);
        let mut scaled_synth = scale(&synth);
        scaled_real = LabeledTable::new(
            scaled_real.features() * 10.0,
            scaled_real.labels().to_vec(),
            scaled_real.feature_names().to_vec(),
            scaled_real.class_names().to_vec(),
        )
        .unwrap();
        scaled_synth = LabeledTable::new(
            scaled_synth.features() * 10.0,
            scaled_synth.labels().to_vec(),
            scaled_synth.feature_names().to_vec(),
            scaled_synth.class_names().to_vec(),
        )
        .unwrap();
        let scaled = group_fold_changes(&modules, &scaled_real, &scaled_synth, 0.0).unwrap();
        for (a, b) in base.values.iter().zip(scaled.values.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn planted_activation_shows_in_gfc() {
        // 10 classes, module doubled in class 0 only
        let mut spec = PlantedSpec {
            n_per_class: vec![200; 10],
            d: 8,
            de: vec![],
            modules: vec![],
            noise_scale: 1.0,
            baseline: 100.0,
        };
        spec.de.push(PlantedDe {
            class_a: 0,
            class_b: 1,
            up: (0..4).map(|g| (g, 100.0)).collect(),
            down: vec![],
        });
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let (real, _) = generate_planted(&spec, &mut rng).unwrap();
        let (synth, _) = generate_planted(&spec, &mut rng).unwrap();
        let modules = ModuleSet { modules: vec![BTreeSet::from([0, 1, 2, 3])] };
        let report = group_fold_changes(&modules, &real, &synth, 1.0).unwrap();
        // class 0 of the real data is the first column
        let gfc = report.values[[0, 0]];
        assert!((gfc - 1.0).abs() < 0.2, "activation GFC {gfc}");
    }
}
