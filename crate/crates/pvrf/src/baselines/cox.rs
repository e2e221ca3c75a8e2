//! Cox proportional-hazards regression on counting-process episodes.
//!
//! The partial likelihood uses Breslow's approximation for tied event
//! times, which composes exactly across episode boundaries: splitting a
//! subject's follow-up at any time point leaves every risk set — and hence
//! the likelihood — unchanged.  That invariance is what lets the stratified
//! benchmark model switch baseline hazards mid-follow-up.
//!
//! Fitting is Newton-Raphson on the partial log-likelihood with step
//! halving, and the baseline cumulative hazard is the Breslow estimator per
//! stratum.  Design columns are centered at their episode means before
//! exponentiation; the means are stored on the model so predictions use the
//! identical linear predictor.

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::design::{build_design, Design, Term};
use crate::baselines::RmstPrediction;
use crate::data::{whole_follow_up, CovariateFrame, EpisodeDataset, SurvivalDataset};
use crate::error::{Error, Result};

/// Breslow cumulative baseline hazard of one stratum: step function with
/// jumps at the stratum's event times, non-decreasing from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumBaseline {
    pub label: String,
    /// Distinct event times, ascending.
    pub times: Vec<f64>,
    /// Cumulative hazard *after* each time.
    pub cumhaz: Vec<f64>,
}

impl StratumBaseline {
    /// H₀(t): cumulative hazard at the last jump ≤ t.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&u| u <= t);
        if k == 0 {
            0.0
        } else {
            self.cumhaz[k - 1]
        }
    }
}

/// A fitted proportional-hazards model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub terms: Vec<Term>,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Model-based standard errors from the inverse observed information.
    pub se: Vec<f64>,
    /// Column means used for centering; the linear predictor is βᵀ(x − x̄).
    pub means: Vec<f64>,
    pub baselines: Vec<StratumBaseline>,
    pub iterations: usize,
}

impl CoxModel {
    pub fn baseline(&self, label: &str) -> Result<&StratumBaseline> {
        self.baselines
            .iter()
            .find(|b| b.label == label)
            .ok_or_else(|| {
                Error::InvalidRequest(format!("model has no baseline for stratum {label:?}"))
            })
    }

    /// exp(βᵀ(x − x̄)) for every row of a prediction design.
    pub fn risk_scores(&self, design: &Design) -> Result<Vec<f64>> {
        if design.names != self.names {
            return Err(Error::InvalidRequest(String::from(
                "covariate frame does not match the model's training schema",
            )));
        }
        let q = self.names.len();
        Ok((0..design.n_rows())
            .map(|i| {
                let mut eta = 0.0;
                for j in 0..q {
                    eta += self.coefficients[j] * (design.matrix[(i, j)] - self.means[j]);
                }
                eta.exp()
            })
            .collect())
    }
}

/// Newton convergence tolerance on the score norm.
const SCORE_TOL: f64 = 1e-9;
const MAX_ITER: usize = 50;
const MAX_HALVINGS: usize = 10;
/// |β_j|·sd_j beyond this means the partial likelihood is monotone in β_j:
/// a hazard ratio of e²⁰ across two covariate standard deviations is only
/// reachable by separated data.  The check also runs on the converged point,
/// because separation with a wide gap between the groups' event times can
/// drive the score below tolerance at a large but finite β.
const DIVERGENCE_SPAN: f64 = 10.0;

/// Episodes of one stratum, pre-sorted for the risk-set sweeps.
struct StratumIndex {
    label: String,
    /// Episode indices sorted by stop time, descending.
    by_stop_desc: Vec<usize>,
    /// Episode indices sorted by start time, descending.
    by_start_desc: Vec<usize>,
    /// (event time, episodes with an event there), time descending.
    events_desc: Vec<(f64, Vec<usize>)>,
}

fn index_strata(episodes: &EpisodeDataset) -> Result<Vec<StratumIndex>> {
    let mut groups: IndexMap<&str, Vec<usize>> = IndexMap::new();
    for (i, row) in episodes.rows.iter().enumerate() {
        groups.entry(row.stratum.as_str()).or_default().push(i);
    }
    let mut strata = Vec::with_capacity(groups.len());
    for (label, members) in groups {
        let mut by_stop_desc = members.clone();
        by_stop_desc
            .sort_by(|&a, &b| episodes.rows[b].stop.total_cmp(&episodes.rows[a].stop));
        let mut by_start_desc = members.clone();
        by_start_desc
            .sort_by(|&a, &b| episodes.rows[b].start.total_cmp(&episodes.rows[a].start));

        let mut events_desc: Vec<(f64, Vec<usize>)> = Vec::new();
        for &i in &by_stop_desc {
            if episodes.rows[i].status == 1 {
                let t = episodes.rows[i].stop;
                match events_desc.last_mut() {
                    Some((last, list)) if *last == t => list.push(i),
                    _ => events_desc.push((t, vec![i])),
                }
            }
        }
        if events_desc.is_empty() {
            return Err(Error::InvalidRequest(format!(
                "stratum {label:?} has no events; the partial likelihood is undefined"
            )));
        }
        strata.push(StratumIndex {
            label: label.to_string(),
            by_stop_desc,
            by_start_desc,
            events_desc,
        });
    }
    Ok(strata)
}

/// Partial log-likelihood, score, and observed information at β, computed by
/// a single descending sweep per stratum.  Risk sets are `start < t ≤ stop`.
/// `rows_x` is indexed by subject; episodes reach it through their `subject`.
fn evaluate(
    strata: &[StratumIndex],
    episodes: &EpisodeDataset,
    rows_x: &[DVector<f64>],
    beta: &DVector<f64>,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let q = beta.len();
    let eta: Vec<f64> = rows_x.iter().map(|x| beta.dot(x)).collect();
    let mut loglik = 0.0;
    let mut score = DVector::zeros(q);
    let mut info = DMatrix::zeros(q, q);

    for stratum in strata {
        let mut s0 = 0.0f64;
        let mut s1 = DVector::zeros(q);
        let mut s2 = DMatrix::zeros(q, q);
        let mut add = 0usize;
        let mut remove = 0usize;
        for (t, event_rows) in &stratum.events_desc {
            while add < stratum.by_stop_desc.len()
                && episodes.rows[stratum.by_stop_desc[add]].stop >= *t
            {
                let s = episodes.rows[stratum.by_stop_desc[add]].subject;
                let w = eta[s].exp();
                s0 += w;
                s1.axpy(w, &rows_x[s], 1.0);
                s2.ger(w, &rows_x[s], &rows_x[s], 1.0);
                add += 1;
            }
            while remove < stratum.by_start_desc.len()
                && episodes.rows[stratum.by_start_desc[remove]].start >= *t
            {
                let s = episodes.rows[stratum.by_start_desc[remove]].subject;
                let w = eta[s].exp();
                s0 -= w;
                s1.axpy(-w, &rows_x[s], 1.0);
                s2.ger(-w, &rows_x[s], &rows_x[s], 1.0);
                remove += 1;
            }
            let d = event_rows.len() as f64;
            let mean = &s1 / s0;
            for &i in event_rows {
                let s = episodes.rows[i].subject;
                loglik += eta[s];
                score += &rows_x[s];
            }
            loglik -= d * s0.ln();
            score.axpy(-d, &mean, 1.0);
            info += (&s2 / s0 - &mean * mean.transpose()) * d;
        }
    }
    (loglik, score, info)
}

/// Breslow baseline cumulative hazards at β̂: increments d_t / Σ_{risk} w.
fn breslow_baselines(
    strata: &[StratumIndex],
    episodes: &EpisodeDataset,
    rows_x: &[DVector<f64>],
    beta: &DVector<f64>,
) -> Vec<StratumBaseline> {
    let eta: Vec<f64> = rows_x.iter().map(|x| beta.dot(x)).collect();
    strata
        .iter()
        .map(|stratum| {
            // Ascending sweep: enter when start < t, leave when stop < t.
            let mut by_start_asc = stratum.by_start_desc.clone();
            by_start_asc.reverse();
            let mut by_stop_asc = stratum.by_stop_desc.clone();
            by_stop_asc.reverse();
            let mut s0 = 0.0f64;
            let mut add = 0usize;
            let mut remove = 0usize;
            let mut times = Vec::with_capacity(stratum.events_desc.len());
            let mut cumhaz = Vec::with_capacity(stratum.events_desc.len());
            let mut total = 0.0;
            for (t, event_rows) in stratum.events_desc.iter().rev() {
                while add < by_start_asc.len()
                    && episodes.rows[by_start_asc[add]].start < *t
                {
                    s0 += eta[episodes.rows[by_start_asc[add]].subject].exp();
                    add += 1;
                }
                while remove < by_stop_asc.len()
                    && episodes.rows[by_stop_asc[remove]].stop < *t
                {
                    s0 -= eta[episodes.rows[by_stop_asc[remove]].subject].exp();
                    remove += 1;
                }
                total += event_rows.len() as f64 / s0;
                times.push(*t);
                cumhaz.push(total);
            }
            StratumBaseline {
                label: stratum.label.clone(),
                times,
                cumhaz,
            }
        })
        .collect()
}

/// Fit on a plain survival dataset (single stratum, full follow-up).
pub fn fit_cox(data: &SurvivalDataset, design: &Design) -> Result<CoxModel> {
    fit_cox_episodes(&whole_follow_up(data), design)
}

/// Fit on counting-process episodes; `design` must be built on the episode
/// covariate frame (one row per subject — episodes reference design rows
/// through their `subject` index).
pub fn fit_cox_episodes(episodes: &EpisodeDataset, design: &Design) -> Result<CoxModel> {
    if episodes.rows.is_empty() {
        return Err(Error::EmptyData(String::from(" (Cox fit)")));
    }
    let n = episodes.covariates.n_rows();
    if design.n_rows() != n {
        return Err(Error::DimensionMismatch {
            context: "design rows",
            expected: n,
            got: design.n_rows(),
        });
    }
    if let Some(bad) = episodes.rows.iter().find(|row| row.subject >= n) {
        return Err(Error::InvalidRequest(format!(
            "episode refers to subject {} but the covariate frame has {n} rows",
            bad.subject
        )));
    }
    if design.names.iter().any(|name| name == "(intercept)") {
        return Err(Error::InvalidRequest(String::from(
            "a proportional-hazards model has no intercept; drop the intercept term",
        )));
    }
    let q = design.n_cols();
    let strata = index_strata(episodes)?;

    // Center columns at their subject means; remember means and spreads.
    // The centering point only changes the stored (means, baseline) pair,
    // never the likelihood or predictions, so the subject frame is fine.
    let means: Vec<f64> = (0..q)
        .map(|j| design.matrix.column(j).sum() / n as f64)
        .collect();
    let sds: Vec<f64> = (0..q)
        .map(|j| {
            let m = means[j];
            (design
                .matrix
                .column(j)
                .iter()
                .map(|&v| (v - m) * (v - m))
                .sum::<f64>()
                / n as f64)
                .sqrt()
        })
        .collect();
    let rows_x: Vec<DVector<f64>> = (0..n)
        .map(|i| DVector::from_iterator(q, (0..q).map(|j| design.matrix[(i, j)] - means[j])))
        .collect();

    let mut beta = DVector::zeros(q);
    let (mut loglik, mut score, mut info) = evaluate(&strata, episodes, &rows_x, &beta);
    let mut iterations = 0;
    loop {
        let score_norm = score.norm();
        if score_norm < SCORE_TOL {
            break;
        }
        if iterations >= MAX_ITER {
            return Err(diverged_or_not_converged(&beta, &sds, design, score_norm));
        }
        let chol = info.clone().cholesky().ok_or_else(|| Error::RankDeficient {
            context: String::from("Cox observed information is not positive definite"),
        })?;
        let step = chol.solve(&score);

        let mut factor = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate = &beta + &step * factor;
            let (l2, u2, i2) = evaluate(&strata, episodes, &rows_x, &candidate);
            if l2.is_finite() && l2 >= loglik - 1e-12 * loglik.abs().max(1.0) {
                beta = candidate;
                loglik = l2;
                score = u2;
                info = i2;
                accepted = true;
                break;
            }
            factor /= 2.0;
        }
        iterations += 1;
        if !accepted {
            return Err(diverged_or_not_converged(&beta, &sds, design, score_norm));
        }
        for j in 0..q {
            if beta[j].abs() * sds[j] > DIVERGENCE_SPAN {
                return Err(Error::MonotoneLikelihood {
                    column: design.names[j].clone(),
                });
            }
        }
    }

    // Standard errors from the inverse information at the optimum.
    let inverse = info
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient {
            context: String::from("Cox observed information is not positive definite"),
        })?
        .inverse();
    let se: Vec<f64> = (0..q).map(|j| inverse[(j, j)].sqrt()).collect();

    let baselines = breslow_baselines(&strata, episodes, &rows_x, &beta);
    Ok(CoxModel {
        terms: design.terms.clone(),
        names: design.names.clone(),
        coefficients: beta.iter().copied().collect(),
        se,
        means,
        baselines,
        iterations,
    })
}

fn diverged_or_not_converged(
    beta: &DVector<f64>,
    sds: &[f64],
    design: &Design,
    score_norm: f64,
) -> Error {
    let mut worst = 0usize;
    let mut span = 0.0;
    for j in 0..beta.len() {
        let s = beta[j].abs() * sds[j];
        if s > span {
            span = s;
            worst = j;
        }
    }
    if span > DIVERGENCE_SPAN / 2.0 {
        Error::MonotoneLikelihood {
            column: design.names[worst].clone(),
        }
    } else {
        Error::NotConverged {
            what: "Cox partial-likelihood maximization",
            iterations: MAX_ITER,
            criterion: score_norm,
        }
    }
}

/// Restricted mean of S(t) = exp(−H(t)·risk) where H(t) chains baseline
/// segments: segment k applies on (endₖ₋₁, endₖ] and continues from the
/// hazard accumulated by its predecessors.  The last segment must cover τ.
/// The result is flagged when τ lies beyond the last event time used.
pub fn segmented_rmst(
    segments: &[(&StratumBaseline, f64)],
    risk: f64,
    tau: f64,
) -> Result<RmstPrediction> {
    if !(tau > 0.0) {
        return Err(Error::InvalidRequest(format!(
            "horizon must be positive, got {tau}"
        )));
    }
    match segments.last() {
        Some((_, end)) if *end >= tau => {}
        _ => {
            return Err(Error::InvalidRequest(String::from(
                "baseline segments do not cover the requested horizon",
            )))
        }
    }

    let mut area = 0.0;
    let mut t_prev = 0.0;
    let mut s_prev = 1.0;
    let mut h_offset = 0.0;
    let mut seg_start = 0.0;
    let mut support_end = 0.0f64;
    for (baseline, end) in segments {
        let seg_end = end.min(tau);
        let h_base = baseline.eval(seg_start);
        let first = baseline.times.partition_point(|&u| u <= seg_start);
        for j in first..baseline.times.len() {
            let tj = baseline.times[j];
            if tj > seg_end {
                break;
            }
            area += s_prev * (tj - t_prev);
            s_prev = (-(h_offset + baseline.cumhaz[j] - h_base) * risk).exp();
            t_prev = tj;
        }
        // Support is judged over the segment's whole window (seg_start, end],
        // not clipped at τ: a horizon inside the observed range is sound even
        // when it falls past the last jump before it.
        let last = baseline.times.partition_point(|&u| u <= *end);
        if last > first {
            support_end = support_end.max(baseline.times[last - 1]);
        }
        area += s_prev * (seg_end - t_prev);
        t_prev = seg_end;
        h_offset += baseline.eval(seg_end) - h_base;
        seg_start = *end;
        if seg_end >= tau {
            break;
        }
    }
    Ok(RmstPrediction {
        value: area.clamp(0.0, tau),
        tau,
        flagged: tau > support_end,
    })
}

/// Per-row restricted means for an unstratified model.
pub fn cox_rmst(model: &CoxModel, frame: &CovariateFrame, tau: f64) -> Result<Vec<RmstPrediction>> {
    if model.baselines.len() != 1 {
        return Err(Error::InvalidRequest(String::from(
            "model is stratified; predictions must chain strata explicitly",
        )));
    }
    let design = build_design(frame, &model.terms)?;
    let risks = model.risk_scores(&design)?;
    let baseline = &model.baselines[0];
    risks
        .iter()
        .map(|&r| segmented_rmst(&[(baseline, f64::INFINITY)], r, tau))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::design::main_effect_terms;
    use crate::data::{CovariateColumn, EpisodeRow};
    use crate::km::{km_curve, rmst_from_curve};
    use crate::rng::stream_rng;
    use rand::Rng;

    fn binary_frame(groups: &[u8]) -> CovariateFrame {
        CovariateFrame::new(vec![CovariateColumn::binary("g", groups.to_vec())]).unwrap()
    }

    fn fit_simple(times: Vec<f64>, status: Vec<u8>, frame: CovariateFrame) -> Result<CoxModel> {
        let data = SurvivalDataset::new(times, status, frame.clone()).unwrap();
        let design = build_design(&frame, &main_effect_terms(&frame, false)).unwrap();
        fit_cox(&data, &design)
    }

    #[test]
    fn two_group_exponential_recovers_log_rate_ratio() {
        let beta_true = 0.7;
        let mut rng = stream_rng(51, &[0]);
        let n = 2000;
        let mut times = Vec::with_capacity(n);
        let mut groups = Vec::with_capacity(n);
        for i in 0..n {
            let g = (i % 2) as u8;
            let rate = (beta_true * f64::from(g)).exp();
            times.push(-rng.gen::<f64>().ln() / rate);
            groups.push(g);
        }
        let model = fit_simple(times, vec![1; n], binary_frame(&groups)).unwrap();
        assert!(
            (model.coefficients[0] - beta_true).abs() < 0.1,
            "β̂ = {}",
            model.coefficients[0]
        );
        assert!(model.se[0] > 0.0 && model.se[0] < 0.2);
    }

    #[test]
    fn null_covariate_is_calibrated() {
        // Covariate independent of the outcome: |β̂| < 3·SE should hold in
        // the vast majority of replications.
        let mut ok = 0;
        for seed in 0..100u64 {
            let mut rng = stream_rng(52, &[seed]);
            let n = 150;
            let times: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().ln()).collect();
            let status: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.8))).collect();
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let frame =
                CovariateFrame::new(vec![CovariateColumn::continuous("x", x)]).unwrap();
            let model = fit_simple(times, status, frame).unwrap();
            if model.coefficients[0].abs() < 3.0 * model.se[0] {
                ok += 1;
            }
        }
        assert!(ok >= 90, "only {ok}/100 null fits within 3 SE");
    }

    #[test]
    fn episode_splitting_leaves_fit_unchanged() {
        // Splitting follow-up at any point preserves all risk sets, so the
        // fitted coefficient must be identical.
        let mut rng = stream_rng(53, &[0]);
        let n = 80;
        let times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..4.0)).collect();
        let status: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.7))).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let frame = CovariateFrame::new(vec![CovariateColumn::continuous("x", x)]).unwrap();
        let data =
            SurvivalDataset::new(times.clone(), status.clone(), frame.clone())
                .unwrap();

        let design = build_design(&frame, &main_effect_terms(&frame, false)).unwrap();
        let whole = fit_cox(&data, &design).unwrap();

        for cut in [0.5, 1.3, 2.9] {
            let mut rows = Vec::new();
            for i in 0..n {
                if times[i] > cut {
                    rows.push(EpisodeRow {
                        subject: i,
                        start: 0.0,
                        stop: cut,
                        status: 0,
                        stratum: String::new(),
                    });
                    rows.push(EpisodeRow {
                        subject: i,
                        start: cut,
                        stop: times[i],
                        status: status[i],
                        stratum: String::new(),
                    });
                } else {
                    rows.push(EpisodeRow {
                        subject: i,
                        start: 0.0,
                        stop: times[i],
                        status: status[i],
                        stratum: String::new(),
                    });
                }
            }
            let episodes = EpisodeDataset {
                covariates: frame.clone(),
                rows,
            };
            let split = fit_cox_episodes(&episodes, &design).unwrap();
            assert!(
                (split.coefficients[0] - whole.coefficients[0]).abs() < 1e-8,
                "cut {cut}: {} vs {}",
                split.coefficients[0],
                whole.coefficients[0]
            );
        }
    }

    #[test]
    fn balanced_data_gives_zero_coefficient_and_nelson_aalen_baseline() {
        // Perfectly balanced ±1 covariate with shared event times: the score
        // at zero vanishes, so β̂ = 0 and the Breslow baseline equals the
        // Nelson-Aalen estimator of the pooled sample.
        let mut times = Vec::new();
        let mut status = Vec::new();
        let mut x = Vec::new();
        for k in 1..=10 {
            for sign in [-1.0, 1.0] {
                times.push(k as f64);
                status.push(u8::from(k % 4 != 0));
                x.push(sign);
            }
        }
        let frame = CovariateFrame::new(vec![CovariateColumn::continuous("x", x)]).unwrap();
        let model = fit_simple(times.clone(), status.clone(), frame.clone()).unwrap();
        assert!(model.coefficients[0].abs() < 1e-12);

        // Independent Nelson-Aalen from the product-limit bookkeeping.
        let curve = km_curve(&times, &status).unwrap();
        let mut na = 0.0;
        for (j, &t) in curve.jump_times.iter().enumerate() {
            na += curve.n_events[j] as f64 / curve.n_at_risk[j] as f64;
            let h = model.baselines[0].eval(t);
            assert!((h - na).abs() < 1e-12, "H₀({t}) = {h}, NA = {na}");
        }

        // RMST from the model equals the exponentiated Nelson-Aalen area and
        // is close (not identical) to the Kaplan-Meier RMST.
        let tau = 8.0;
        let pred = cox_rmst(&model, &frame, tau).unwrap();
        let mut area = 0.0;
        let mut prev_t = 0.0;
        let mut prev_s = 1.0;
        let mut h = 0.0;
        for (j, &t) in curve.jump_times.iter().enumerate() {
            if t > tau {
                break;
            }
            area += prev_s * (t - prev_t);
            h += curve.n_events[j] as f64 / curve.n_at_risk[j] as f64;
            prev_s = (-h).exp();
            prev_t = t;
        }
        area += prev_s * (tau - prev_t);
        for p in &pred {
            assert!((p.value - area).abs() < 1e-6, "{} vs {area}", p.value);
        }
        let km_rmst = rmst_from_curve(&curve, tau).unwrap();
        assert!((pred[0].value - km_rmst.value).abs() < 0.05 * tau);
    }

    #[test]
    fn rmst_decreases_to_zero_as_risk_grows() {
        let baseline = StratumBaseline {
            label: String::new(),
            times: vec![1.0, 2.0, 3.0],
            cumhaz: vec![0.2, 0.5, 1.0],
        };
        let mut previous = f64::INFINITY;
        for risk in [0.1, 1.0, 10.0, 100.0, 1000.0] {
            let p = segmented_rmst(&[(&baseline, f64::INFINITY)], risk, 4.0).unwrap();
            assert!(p.value < previous);
            previous = p.value;
        }
        assert!(previous < 1.01, "huge risk should drive the RMST near the first jump");
    }

    #[test]
    fn identical_strata_give_identical_rmst() {
        let mut rng = stream_rng(54, &[0]);
        let n = 60;
        let times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..5.0)).collect();
        let status: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.7))).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut rows = Vec::new();
        for stratum in ["s1", "s2"] {
            for i in 0..n {
                rows.push(EpisodeRow {
                    subject: i,
                    start: 0.0,
                    stop: times[i],
                    status: status[i],
                    stratum: stratum.to_string(),
                });
            }
        }
        let frame = CovariateFrame::new(vec![CovariateColumn::continuous("x", x)]).unwrap();
        let episodes = EpisodeDataset {
            covariates: frame.clone(),
            rows,
        };
        let design = build_design(&frame, &main_effect_terms(&frame, false)).unwrap();
        let model = fit_cox_episodes(&episodes, &design).unwrap();
        let risk = 1.3;
        let a = segmented_rmst(&[(model.baseline("s1").unwrap(), f64::INFINITY)], risk, 3.0)
            .unwrap();
        let b = segmented_rmst(&[(model.baseline("s2").unwrap(), f64::INFINITY)], risk, 3.0)
            .unwrap();
        assert!((a.value - b.value).abs() < 1e-8);
    }

    #[test]
    fn stratum_without_events_is_rejected() {
        let rows = vec![
            EpisodeRow {
                subject: 0,
                start: 0.0,
                stop: 1.0,
                status: 1,
                stratum: String::from("a"),
            },
            EpisodeRow {
                subject: 1,
                start: 0.0,
                stop: 2.0,
                status: 0,
                stratum: String::from("b"),
            },
        ];
        let frame =
            CovariateFrame::new(vec![CovariateColumn::continuous("x", vec![0.0, 1.0])]).unwrap();
        let episodes = EpisodeDataset {
            covariates: frame.clone(),
            rows,
        };
        let design = build_design(&frame, &main_effect_terms(&frame, false)).unwrap();
        match fit_cox_episodes(&episodes, &design) {
            Err(Error::InvalidRequest(msg)) => assert!(msg.contains("\"b\"")),
            other => panic!("expected stratum error, got {other:?}"),
        }
    }

    #[test]
    fn separated_data_reports_monotone_likelihood() {
        // Binary covariate where group 1 always fails first: β → ∞.
        let mut times = Vec::new();
        let mut groups = Vec::new();
        for i in 0..40 {
            let g = u8::from(i < 20);
            times.push(if g == 1 {
                1.0 + i as f64 * 0.01
            } else {
                10.0 + i as f64 * 0.01
            });
            groups.push(g);
        }
        match fit_simple(times, vec![1; 40], binary_frame(&groups)) {
            Err(Error::MonotoneLikelihood { column }) => assert_eq!(column, "g"),
            other => panic!("expected monotone likelihood, got {other:?}"),
        }
    }

    #[test]
    fn intercept_is_rejected() {
        let frame = binary_frame(&[0, 1, 0, 1]);
        let data = SurvivalDataset::new(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![1, 1, 1, 1],
            frame.clone(),
        )
        .unwrap();
        let design = build_design(&frame, &main_effect_terms(&frame, true)).unwrap();
        assert!(matches!(
            fit_cox(&data, &design),
            Err(Error::InvalidRequest(_))
        ));
    }

    #[test]
    fn chained_segments_match_single_segment_when_baselines_agree() {
        // Splitting one baseline into pre/post segments of itself must give
        // the same result as using it whole.
        let baseline = StratumBaseline {
            label: String::new(),
            times: vec![0.5, 1.5, 2.5, 3.5],
            cumhaz: vec![0.1, 0.4, 0.9, 1.6],
        };
        let whole = segmented_rmst(&[(&baseline, f64::INFINITY)], 0.8, 3.0).unwrap();
        let chained =
            segmented_rmst(&[(&baseline, 2.0), (&baseline, f64::INFINITY)], 0.8, 3.0).unwrap();
        assert!((whole.value - chained.value).abs() < 1e-12);
    }

    #[test]
    fn horizon_beyond_support_is_flagged() {
        let baseline = StratumBaseline {
            label: String::new(),
            times: vec![1.0, 2.0],
            cumhaz: vec![0.3, 0.8],
        };
        let inside = segmented_rmst(&[(&baseline, f64::INFINITY)], 1.0, 1.5).unwrap();
        assert!(!inside.flagged);
        let beyond = segmented_rmst(&[(&baseline, f64::INFINITY)], 1.0, 5.0).unwrap();
        assert!(beyond.flagged);
        // Extend-last: survival stays at its final value.
        let s_last = (-0.8f64).exp();
        let expected = 1.0 + (-0.3f64).exp() * 1.0 + s_last * 3.0;
        assert!((beyond.value - expected).abs() < 1e-12, "{} vs {expected}", beyond.value);
    }
}
