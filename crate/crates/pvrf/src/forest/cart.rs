//! Classical CART least-squares splitting on pseudo-values.
//!
//! The split criterion is the summed within-daughter squared error
//!
//! ```text
//! MSE(𝓡) = Σ_{i ∈ left} (θ̂ᵢ − c̄₁)² + Σ_{i ∈ right} (θ̂ᵢ − c̄₂)²
//! ```
//!
//! minimized over every candidate rule of every candidate variable.  All
//! scans run on prefix sums of node-centered pseudo-values, which makes the
//! "constant node" case exact: every rule scores exactly the parent SSE and
//! is rejected as non-improving.

use rand_chacha::ChaCha12Rng;

use super::tree::{complete_level_assignment, draw_candidates, Splitter, SplitRule, WorkingColumn};
use crate::error::{Error, Result};

/// Exhaustive categorical subset search is used up to this many levels
/// present in a node (2^11 − 1 = 2047 candidate subsets at the cap); beyond
/// it, levels are ordered by mean pseudo-value and scanned as if ordinal.
pub const MAX_EXHAUSTIVE_LEVELS: usize = 12;

/// Relative improvement a split must achieve over the parent SSE to be
/// accepted; guards against accepting rounding noise as progress.
const MIN_RELATIVE_GAIN: f64 = 1e-12;

/// Summed within-daughter squared error of an explicit partition.
pub fn cart_split_score(values: &[f64], in_left: &[bool]) -> Result<f64> {
    if values.len() != in_left.len() {
        return Err(Error::DimensionMismatch {
            context: "partition length",
            expected: values.len(),
            got: in_left.len(),
        });
    }
    let (mut n_l, mut s_l, mut n_r, mut s_r) = (0.0, 0.0, 0.0, 0.0);
    for (v, &l) in values.iter().zip(in_left) {
        if l {
            n_l += 1.0;
            s_l += v;
        } else {
            n_r += 1.0;
            s_r += v;
        }
    }
    if n_l == 0.0 || n_r == 0.0 {
        return Err(Error::InvalidRequest(String::from(
            "split score requires both daughters nonempty",
        )));
    }
    let (m_l, m_r) = (s_l / n_l, s_r / n_r);
    let mut score = 0.0;
    for (v, &l) in values.iter().zip(in_left) {
        let d = v - if l { m_l } else { m_r };
        score += d * d;
    }
    Ok(score)
}

/// Best CART rule for the members of one node over the given candidate
/// variables.
///
/// Returns `(variable, rule, score)` minimizing the split criterion, or
/// `None` when every candidate is constant within the node.  Ties are broken
/// towards the lowest variable index, then the lowest threshold (for
/// categorical subsets: the earliest subset in the fixed enumeration order).
pub fn cart_best_split(
    columns: &[WorkingColumn],
    theta: &[f64],
    members: &[u32],
    candidates: &[usize],
) -> Option<(usize, SplitRule, f64)> {
    let m = members.len();
    if m < 2 {
        return None;
    }
    let mean = members.iter().map(|&i| theta[i as usize]).sum::<f64>() / m as f64;
    let centered: Vec<f64> = members.iter().map(|&i| theta[i as usize] - mean).collect();

    let mut best: Option<(usize, SplitRule, f64)> = None;
    for &var in candidates {
        let found = match &columns[var] {
            WorkingColumn::Numeric(values) => {
                best_numeric_rule(values, members, &centered, 1)
                    .map(|(t, s)| (SplitRule::Threshold(t), s))
            }
            WorkingColumn::Coded { n_levels, codes } => {
                best_level_rule(*n_levels, codes, members, &centered, 1)
            }
        };
        if let Some((rule, score)) = found {
            let improves = match &best {
                None => true,
                Some((_, _, best_score)) => score < *best_score,
            };
            if improves {
                best = Some((var, rule, score));
            }
        }
    }
    best
}

/// Scan thresholds of a numeric variable; minimizes the split SSE subject to
/// `min_leaf` on both sides.  Returns `(threshold, score)`.
fn best_numeric_rule(
    values: &[f64],
    members: &[u32],
    centered: &[f64],
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let m = members.len();
    let mut pairs: Vec<(f64, f64)> = members
        .iter()
        .zip(centered)
        .map(|(&i, &th)| (values[i as usize], th))
        .collect();
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    let total_sum: f64 = pairs.iter().map(|p| p.1).sum();
    let total_sq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();

    let mut best: Option<(f64, f64)> = None;
    let mut run_sum = 0.0;
    let mut run_sq = 0.0;
    for i in 0..m - 1 {
        run_sum += pairs[i].1;
        run_sq += pairs[i].1 * pairs[i].1;
        if pairs[i].0 >= pairs[i + 1].0 {
            continue; // not a boundary between distinct values
        }
        let n_l = i + 1;
        let n_r = m - n_l;
        if n_l < min_leaf || n_r < min_leaf {
            continue;
        }
        let sse_l = (run_sq - run_sum * run_sum / n_l as f64).max(0.0);
        let r_sum = total_sum - run_sum;
        let sse_r = ((total_sq - run_sq) - r_sum * r_sum / n_r as f64).max(0.0);
        let score = sse_l + sse_r;
        if best.map_or(true, |(_, s)| score < s) {
            best = Some((0.5 * (pairs[i].0 + pairs[i + 1].0), score));
        }
    }
    best
}

/// Per-level aggregates of a categorical variable within a node.
struct LevelStats {
    level: u32,
    count: usize,
    sum: f64,
    sum_sq: f64,
}

fn level_stats(n_levels: u32, codes: &[u32], members: &[u32], centered: &[f64]) -> Vec<LevelStats> {
    let mut count = vec![0usize; n_levels as usize];
    let mut sum = vec![0.0; n_levels as usize];
    let mut sum_sq = vec![0.0; n_levels as usize];
    for (&i, &th) in members.iter().zip(centered) {
        let c = codes[i as usize] as usize;
        count[c] += 1;
        sum[c] += th;
        sum_sq[c] += th * th;
    }
    (0..n_levels)
        .filter(|&l| count[l as usize] > 0)
        .map(|l| LevelStats {
            level: l,
            count: count[l as usize],
            sum: sum[l as usize],
            sum_sq: sum_sq[l as usize],
        })
        .collect()
}

/// Best categorical rule by SSE: exhaustive over level subsets when few
/// levels are present, ordinal scan over mean-ordered levels otherwise.
fn best_level_rule(
    n_levels: u32,
    codes: &[u32],
    members: &[u32],
    centered: &[f64],
    min_leaf: usize,
) -> Option<(SplitRule, f64)> {
    let stats = level_stats(n_levels, codes, members, centered);
    if stats.len() < 2 {
        return None;
    }
    let m = members.len();
    let total_sum: f64 = stats.iter().map(|s| s.sum).sum();
    let total_sq: f64 = stats.iter().map(|s| s.sum_sq).sum();

    let score_of = |n_l: usize, sum_l: f64, sq_l: f64| -> f64 {
        let n_r = m - n_l;
        let sse_l = (sq_l - sum_l * sum_l / n_l as f64).max(0.0);
        let sum_r = total_sum - sum_l;
        let sse_r = ((total_sq - sq_l) - sum_r * sum_r / n_r as f64).max(0.0);
        sse_l + sse_r
    };

    let mut best: Option<(Vec<Option<bool>>, usize, f64)> = None;
    let consider =
        |assignment: Vec<Option<bool>>, n_l: usize, sum_l: f64, sq_l: f64, best: &mut Option<(Vec<Option<bool>>, usize, f64)>| {
            let n_r = m - n_l;
            if n_l < min_leaf || n_r < min_leaf {
                return;
            }
            let score = score_of(n_l, sum_l, sq_l);
            if best.as_ref().map_or(true, |(_, _, s)| score < *s) {
                *best = Some((assignment, n_l, score));
            }
        };

    if stats.len() <= MAX_EXHAUSTIVE_LEVELS {
        // Fix the last present level on the right so each bipartition is
        // enumerated exactly once; masks run in ascending order, which is the
        // documented tie-break order.
        let free = stats.len() - 1;
        for mask in 1u32..(1 << free) {
            let mut n_l = 0usize;
            let mut sum_l = 0.0;
            let mut sq_l = 0.0;
            let mut assignment = vec![None; n_levels as usize];
            for (bit, s) in stats.iter().enumerate() {
                let left = bit < free && mask & (1 << bit) != 0;
                assignment[s.level as usize] = Some(left);
                if left {
                    n_l += s.count;
                    sum_l += s.sum;
                    sq_l += s.sum_sq;
                }
            }
            consider(assignment, n_l, sum_l, sq_l, &mut best);
        }
    } else {
        // Ordinal reduction: order levels by their mean pseudo-value and
        // scan prefixes of that ordering.
        let mut order: Vec<usize> = (0..stats.len()).collect();
        order.sort_by(|&a, &b| {
            let ma = stats[a].sum / stats[a].count as f64;
            let mb = stats[b].sum / stats[b].count as f64;
            ma.total_cmp(&mb).then(stats[a].level.cmp(&stats[b].level))
        });
        let mut n_l = 0usize;
        let mut sum_l = 0.0;
        let mut sq_l = 0.0;
        for r in 0..stats.len() - 1 {
            let s = &stats[order[r]];
            n_l += s.count;
            sum_l += s.sum;
            sq_l += s.sum_sq;
            let mut assignment = vec![None; n_levels as usize];
            for (pos, &idx) in order.iter().enumerate() {
                assignment[stats[idx].level as usize] = Some(pos <= r);
            }
            consider(assignment, n_l, sum_l, sq_l, &mut best);
        }
    }

    best.map(|(assignment, n_l, score)| {
        let in_left = complete_level_assignment(n_levels, &assignment, n_l, m - n_l);
        (SplitRule::LevelSet { in_left }, score)
    })
}

/// CART node splitter: draws `mtry` candidates per node and accepts the best
/// rule only if it strictly improves on the parent's SSE.
pub struct CartSplitter<'a> {
    pub columns: &'a [WorkingColumn],
    pub theta: &'a [f64],
    pub mtry: usize,
    pub min_split: usize,
}

impl Splitter for CartSplitter<'_> {
    fn find_split(&self, members: &[u32], rng: &mut ChaCha12Rng) -> Option<(usize, SplitRule)> {
        let m = members.len();
        if m < self.min_split || m < 2 {
            return None;
        }
        let candidates = draw_candidates(self.columns.len(), self.mtry, rng);
        let (var, rule, score) = cart_best_split(self.columns, self.theta, members, &candidates)?;

        let mean = members.iter().map(|&i| self.theta[i as usize]).sum::<f64>() / m as f64;
        let parent_sse: f64 = members
            .iter()
            .map(|&i| {
                let d = self.theta[i as usize] - mean;
                d * d
            })
            .sum();
        if score < parent_sse * (1.0 - MIN_RELATIVE_GAIN) {
            Some((var, rule))
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric(values: Vec<f64>) -> WorkingColumn {
        WorkingColumn::Numeric(values)
    }

    #[test]
    fn split_score_perfect_separation() {
        let score = cart_split_score(
            &[0.0, 0.0, 10.0, 10.0],
            &[true, true, false, false],
        )
        .unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn split_score_singletons() {
        let score = cart_split_score(&[0.0, 10.0], &[true, false]).unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn split_score_hand_arithmetic() {
        // Left {1}: SSE 0.  Right {2,3,4}: mean 3 → SSE 2.
        let score = cart_split_score(&[1.0, 2.0, 3.0, 4.0], &[true, false, false, false]).unwrap();
        assert!((score - 2.0).abs() < 1e-12);
    }

    #[test]
    fn split_score_rejects_empty_side() {
        assert!(cart_split_score(&[1.0, 2.0], &[true, true]).is_err());
    }

    #[test]
    fn best_split_separating_threshold() {
        let cols = vec![numeric(vec![1.0, 2.0, 3.0, 4.0])];
        let theta = [0.0, 0.0, 10.0, 10.0];
        let members = [0u32, 1, 2, 3];
        let (var, rule, score) = cart_best_split(&cols, &theta, &members, &[0]).unwrap();
        assert_eq!(var, 0);
        assert_eq!(rule, SplitRule::Threshold(2.5));
        assert_eq!(score, 0.0);
    }

    #[test]
    fn best_split_constant_covariate_is_none() {
        let cols = vec![numeric(vec![5.0, 5.0, 5.0, 5.0])];
        let theta = [0.0, 0.0, 10.0, 10.0];
        assert!(cart_best_split(&cols, &theta, &[0, 1, 2, 3], &[0]).is_none());
    }

    #[test]
    fn tie_prefers_lower_variable_index() {
        // Both variables separate perfectly (score 0); variable 0 must win.
        let cols = vec![
            numeric(vec![1.0, 2.0, 3.0, 4.0]),
            numeric(vec![4.0, 3.0, 2.0, 1.0]),
        ];
        let theta = [0.0, 0.0, 10.0, 10.0];
        let (var, _, score) = cart_best_split(&cols, &theta, &[0, 1, 2, 3], &[0, 1]).unwrap();
        assert_eq!(var, 0);
        assert_eq!(score, 0.0);
    }

    #[test]
    fn brute_force_agreement_on_random_numeric_data() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(11, &[0]);
        for _ in 0..50 {
            let m = rng.gen_range(2..25);
            let values: Vec<f64> = (0..m).map(|_| f64::from(rng.gen_range(0..8))).collect();
            let theta: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let members: Vec<u32> = (0..m as u32).collect();
            let cols = vec![numeric(values.clone())];

            let fast = cart_best_split(&cols, &theta, &members, &[0]);

            // Oracle: enumerate every threshold by brute force on raw values.
            let mut distinct: Vec<f64> = values.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let mut best_score = f64::INFINITY;
            for w in distinct.windows(2) {
                let cut = 0.5 * (w[0] + w[1]);
                let in_left: Vec<bool> = values.iter().map(|&v| v <= cut).collect();
                let score = cart_split_score(&theta, &in_left).unwrap();
                if score < best_score {
                    best_score = score;
                }
            }
            match fast {
                None => assert!(distinct.len() < 2),
                Some((_, _, score)) => {
                    assert!(
                        (score - best_score).abs() < 1e-9,
                        "fast {score} vs oracle {best_score}"
                    )
                }
            }
        }
    }

    #[test]
    fn categorical_exhaustive_matches_brute_force() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(12, &[0]);
        for _ in 0..30 {
            let n_levels = 4u32;
            let m = rng.gen_range(4..20);
            let codes: Vec<u32> = (0..m).map(|_| rng.gen_range(0..n_levels)).collect();
            let theta: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let members: Vec<u32> = (0..m as u32).collect();
            let cols = vec![WorkingColumn::Coded {
                n_levels,
                codes: codes.clone(),
            }];

            let fast = cart_best_split(&cols, &theta, &members, &[0]);

            // Oracle: all 2^L subsets inducing nonempty partitions.
            let mut best_score = f64::INFINITY;
            for mask in 1u32..(1 << n_levels) - 1 {
                let in_left: Vec<bool> =
                    codes.iter().map(|&c| mask & (1 << c) != 0).collect();
                let n_l = in_left.iter().filter(|&&b| b).count();
                if n_l == 0 || n_l == m {
                    continue;
                }
                let score = cart_split_score(&theta, &in_left).unwrap();
                if score < best_score {
                    best_score = score;
                }
            }
            match fast {
                None => {
                    let first = codes[0];
                    assert!(codes.iter().all(|&c| c == first));
                }
                Some((_, _, score)) => assert!(
                    (score - best_score).abs() < 1e-9,
                    "fast {score} vs oracle {best_score}"
                ),
            }
        }
    }

    #[test]
    fn many_level_ordinal_reduction_is_reasonable() {
        // 14 levels forces the ordinal path; with level means strongly
        // ordered, the optimum separates low-mean from high-mean levels.
        let n_levels = 14u32;
        let codes: Vec<u32> = (0..28).map(|i| i % 14).collect();
        let theta: Vec<f64> = codes.iter().map(|&c| if c < 7 { 0.0 } else { 5.0 }).collect();
        let members: Vec<u32> = (0..28).collect();
        let cols = vec![WorkingColumn::Coded {
            n_levels,
            codes: codes.clone(),
        }];
        let (_, rule, score) = cart_best_split(&cols, &theta, &members, &[0]).unwrap();
        assert_eq!(score, 0.0);
        if let SplitRule::LevelSet { in_left } = rule {
            for l in 0..14usize {
                assert_eq!(in_left[l], l < 7, "level {l}");
            }
        } else {
            panic!("expected level-set rule");
        }
    }
}
