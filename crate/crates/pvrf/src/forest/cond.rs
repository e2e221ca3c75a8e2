//! Conditional-inference splitting: permutation-test variable selection
//! followed by a standardized two-sample split search.
//!
//! For each candidate variable j the association with the pseudo-values is
//! measured through the linear statistic
//!
//! ```text
//! ρ_j = Σᵢ g_j(Xᵢ⁽ʲ⁾) · θ̂ᵢ
//! ```
//!
//! with g_j the identity for continuous/binary variables and full dummy
//! coding for categorical ones.  Under the permutation null hypothesis
//! (pseudo-values shuffled within the node) each component of ρ_j has
//! closed-form moments: with h̄ the node mean, v the population variance of
//! the pseudo-values, s1 = Σg, s2 = Σg²,
//!
//! ```text
//! E[ρ]   = s1 · h̄
//! Var[ρ] = v · (m·s2 − s1²) / (m − 1)
//! ```
//!
//! The test statistic is the maximum absolute standardized component, and
//! its null distribution is approximated by Monte-Carlo permutations.
//! Because every variable is reduced to a p-value before any split is
//! scored, variables with many possible splits enjoy no selection advantage
//! — the debiasing property that motivates this splitter.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;

use super::cart::MAX_EXHAUSTIVE_LEVELS;
use super::tree::{complete_level_assignment, draw_candidates, Splitter, SplitRule, WorkingColumn};

/// Standardization variance floor: components with null variance below this
/// are treated as exactly degenerate and skipped.
pub const VAR_FLOOR: f64 = 1e-12;

/// Member-aligned data for one candidate variable, with standardization
/// factors precomputed so that evaluating the statistic under a permutation
/// is a single pass.
enum CandidateStat {
    Numeric {
        /// Node-centered covariate values, member-aligned.
        values: Vec<f64>,
        inv_sd: f64,
    },
    Coded {
        /// Member-aligned level codes.
        codes: Vec<u32>,
        n_levels: usize,
        /// 1/√Var per level component; 0.0 marks a floored component.
        inv_sd: Vec<f64>,
    },
}

impl CandidateStat {
    /// Build the statistic for variable `var` over the node members, or
    /// `None` when every component is degenerate (variable constant in
    /// node).  `v` is the population variance of the node's pseudo-values.
    fn build(column: &WorkingColumn, members: &[u32], v: f64) -> Option<CandidateStat> {
        let m = members.len();
        match column {
            WorkingColumn::Numeric(all) => {
                let mut values: Vec<f64> = members.iter().map(|&i| all[i as usize]).collect();
                let mean = values.iter().sum::<f64>() / m as f64;
                for x in &mut values {
                    *x -= mean;
                }
                let s1: f64 = values.iter().sum();
                let s2: f64 = values.iter().map(|x| x * x).sum();
                let var = v * (m as f64 * s2 - s1 * s1) / (m as f64 - 1.0);
                if var < VAR_FLOOR {
                    return None;
                }
                Some(CandidateStat::Numeric {
                    values,
                    inv_sd: 1.0 / var.sqrt(),
                })
            }
            WorkingColumn::Coded { n_levels, codes } => {
                let n_levels = *n_levels as usize;
                let member_codes: Vec<u32> = members.iter().map(|&i| codes[i as usize]).collect();
                let mut counts = vec![0usize; n_levels];
                for &c in &member_codes {
                    counts[c as usize] += 1;
                }
                let mut any = false;
                let inv_sd: Vec<f64> = counts
                    .iter()
                    .map(|&n_k| {
                        let var = v * (n_k * (m - n_k)) as f64 / (m as f64 - 1.0);
                        if var < VAR_FLOOR {
                            0.0
                        } else {
                            any = true;
                            1.0 / var.sqrt()
                        }
                    })
                    .collect();
                if !any {
                    return None;
                }
                Some(CandidateStat::Coded {
                    codes: member_codes,
                    n_levels,
                    inv_sd,
                })
            }
        }
    }

    /// Maximum absolute standardized component for the member-aligned
    /// (possibly permuted) centered pseudo-values.
    fn eval(&self, theta: &[f64], scratch: &mut Vec<f64>) -> f64 {
        match self {
            CandidateStat::Numeric { values, inv_sd } => {
                let mut dot = 0.0;
                for (x, th) in values.iter().zip(theta) {
                    dot += x * th;
                }
                dot.abs() * inv_sd
            }
            CandidateStat::Coded {
                codes,
                n_levels,
                inv_sd,
            } => {
                scratch.clear();
                scratch.resize(*n_levels, 0.0);
                for (&c, th) in codes.iter().zip(theta) {
                    scratch[c as usize] += th;
                }
                let mut best = 0.0f64;
                for (sum, &isd) in scratch.iter().zip(inv_sd) {
                    let t = sum.abs() * isd;
                    if t > best {
                        best = t;
                    }
                }
                best
            }
        }
    }
}

/// Center the node's pseudo-values and return (centered, population
/// variance); `None` when the variance is floored (constant outcome).
fn centered_theta(theta: &[f64], members: &[u32]) -> Option<(Vec<f64>, f64)> {
    let m = members.len();
    if m < 2 {
        return None;
    }
    let mean = members.iter().map(|&i| theta[i as usize]).sum::<f64>() / m as f64;
    let centered: Vec<f64> = members.iter().map(|&i| theta[i as usize] - mean).collect();
    let v = centered.iter().map(|t| t * t).sum::<f64>() / m as f64;
    if v < VAR_FLOOR {
        None
    } else {
        Some((centered, v))
    }
}

/// Select the split variable for a node by Monte-Carlo permutation tests.
///
/// Returns `(variable index, p-value)` for the candidate with the smallest
/// p-value, `(1 + #{t_perm ≥ t_obs}) / (1 + n_permutations)`.  Ties are
/// broken towards the larger observed statistic, then the lower variable
/// index.  `None` when the outcome or every candidate is constant within
/// the node.
pub fn cond_select_variable(
    columns: &[WorkingColumn],
    theta: &[f64],
    members: &[u32],
    candidates: &[usize],
    n_permutations: usize,
    rng: &mut ChaCha12Rng,
) -> Option<(usize, f64)> {
    let (centered, v) = centered_theta(theta, members)?;

    let stats: Vec<(usize, CandidateStat)> = candidates
        .iter()
        .filter_map(|&var| CandidateStat::build(&columns[var], members, v).map(|s| (var, s)))
        .collect();
    if stats.is_empty() {
        return None;
    }

    let mut scratch = Vec::new();
    let t_obs: Vec<f64> = stats
        .iter()
        .map(|(_, s)| s.eval(&centered, &mut scratch))
        .collect();

    let mut hits = vec![0usize; stats.len()];
    let mut perm = centered;
    for _ in 0..n_permutations {
        perm.shuffle(rng);
        for (j, (_, s)) in stats.iter().enumerate() {
            if s.eval(&perm, &mut scratch) >= t_obs[j] {
                hits[j] += 1;
            }
        }
    }

    // Smallest p-value = fewest hits (common denominator 1 + B).
    let mut best = 0usize;
    for j in 1..stats.len() {
        if hits[j] < hits[best] || (hits[j] == hits[best] && t_obs[j] > t_obs[best]) {
            best = j;
        }
    }
    let p = (1 + hits[best]) as f64 / (1 + n_permutations) as f64;
    Some((stats[best].0, p))
}

/// Best split of the selected variable: maximizes the absolute standardized
/// left-daughter sum
///
/// ```text
/// MAE(𝓡) = |Σ_{i ∈ left} θ̂ᵢ − n_L·θ̄| / √(v · n_L(m−n_L)/(m−1))
/// ```
///
/// over all rules whose daughters both contain at least `min_leaf` members.
/// Ties go to the lowest threshold (earliest enumerated subset).  `None`
/// when no admissible rule exists.
pub fn cond_best_split(
    columns: &[WorkingColumn],
    theta: &[f64],
    members: &[u32],
    variable: usize,
    min_leaf: usize,
) -> Option<SplitRule> {
    let (centered, v) = centered_theta(theta, members)?;
    let m = members.len();
    let denom = |n_l: usize| -> Option<f64> {
        let var = v * (n_l * (m - n_l)) as f64 / (m as f64 - 1.0);
        if var < VAR_FLOOR {
            None
        } else {
            Some(var.sqrt())
        }
    };

    match &columns[variable] {
        WorkingColumn::Numeric(all) => {
            let mut pairs: Vec<(f64, f64)> = members
                .iter()
                .zip(&centered)
                .map(|(&i, &th)| (all[i as usize], th))
                .collect();
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut best: Option<(f64, f64)> = None; // (threshold, score)
            let mut run = 0.0;
            for i in 0..m - 1 {
                run += pairs[i].1;
                if pairs[i].0 >= pairs[i + 1].0 {
                    continue;
                }
                let n_l = i + 1;
                if n_l < min_leaf || m - n_l < min_leaf {
                    continue;
                }
                let Some(sd) = denom(n_l) else { continue };
                let score = run.abs() / sd;
                if best.map_or(true, |(_, s)| score > s) {
                    best = Some((0.5 * (pairs[i].0 + pairs[i + 1].0), score));
                }
            }
            best.map(|(t, _)| SplitRule::Threshold(t))
        }
        WorkingColumn::Coded { n_levels, codes } => {
            let n_levels_usize = *n_levels as usize;
            let mut counts = vec![0usize; n_levels_usize];
            let mut sums = vec![0.0; n_levels_usize];
            for (&i, &th) in members.iter().zip(&centered) {
                let c = codes[i as usize] as usize;
                counts[c] += 1;
                sums[c] += th;
            }
            let present: Vec<usize> = (0..n_levels_usize).filter(|&l| counts[l] > 0).collect();
            if present.len() < 2 {
                return None;
            }

            let mut best: Option<(Vec<Option<bool>>, usize, f64)> = None;
            let consider = |assignment: Vec<Option<bool>>,
                                n_l: usize,
                                sum_l: f64,
                                best: &mut Option<(Vec<Option<bool>>, usize, f64)>| {
                if n_l < min_leaf || m - n_l < min_leaf {
                    return;
                }
                let Some(sd) = denom(n_l) else { return };
                let score = sum_l.abs() / sd;
                if best.as_ref().map_or(true, |(_, _, s)| score > *s) {
                    *best = Some((assignment, n_l, score));
                }
            };

            if present.len() <= MAX_EXHAUSTIVE_LEVELS {
                let free = present.len() - 1;
                for mask in 1u32..(1 << free) {
                    let mut n_l = 0usize;
                    let mut sum_l = 0.0;
                    let mut assignment = vec![None; n_levels_usize];
                    for (bit, &level) in present.iter().enumerate() {
                        let left = bit < free && mask & (1 << bit) != 0;
                        assignment[level] = Some(left);
                        if left {
                            n_l += counts[level];
                            sum_l += sums[level];
                        }
                    }
                    consider(assignment, n_l, sum_l, &mut best);
                }
            } else {
                let mut order = present.clone();
                order.sort_by(|&a, &b| {
                    let ma = sums[a] / counts[a] as f64;
                    let mb = sums[b] / counts[b] as f64;
                    ma.total_cmp(&mb).then(a.cmp(&b))
                });
                let mut n_l = 0usize;
                let mut sum_l = 0.0;
                for r in 0..order.len() - 1 {
                    n_l += counts[order[r]];
                    sum_l += sums[order[r]];
                    let mut assignment = vec![None; n_levels_usize];
                    for (pos, &level) in order.iter().enumerate() {
                        assignment[level] = Some(pos <= r);
                    }
                    consider(assignment, n_l, sum_l, &mut best);
                }
            }

            best.map(|(assignment, n_l, _)| SplitRule::LevelSet {
                in_left: complete_level_assignment(*n_levels, &assignment, n_l, m - n_l),
            })
        }
    }
}

/// Conditional-inference node splitter.  There is no p-value-based early
/// stopping: whenever a candidate variable is selectable and a
/// size-admissible rule exists, the node is split (stopping is purely by
/// node size).
pub struct CondSplitter<'a> {
    pub columns: &'a [WorkingColumn],
    pub theta: &'a [f64],
    pub mtry: usize,
    pub min_split: usize,
    pub min_leaf: usize,
    pub n_permutations: usize,
}

impl Splitter for CondSplitter<'_> {
    fn find_split(&self, members: &[u32], rng: &mut ChaCha12Rng) -> Option<(usize, SplitRule)> {
        if members.len() < self.min_split {
            return None;
        }
        let candidates = draw_candidates(self.columns.len(), self.mtry, rng);
        let (variable, _p) = cond_select_variable(
            self.columns,
            self.theta,
            members,
            &candidates,
            self.n_permutations,
            rng,
        )?;
        let rule = cond_best_split(self.columns, self.theta, members, variable, self.min_leaf)?;
        Some((variable, rule))
    }
}
