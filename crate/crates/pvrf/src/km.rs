//! Kaplan-Meier estimation and restricted-mean integration of step survival
//! curves.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};

/// A right-continuous step survival curve.
///
/// `survival[j]` is the value of S(t) for `jump_times[j] ≤ t < jump_times[j+1]`;
/// before the first jump S ≡ 1.  Jumps are recorded only where the curve
/// actually drops (times with at least one event), so `survival` is strictly
/// decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurvivalCurve {
    pub jump_times: Vec<f64>,
    pub survival: Vec<f64>,
    /// Individuals at risk just before each jump.
    pub n_at_risk: Vec<u64>,
    /// Events at each jump.
    pub n_events: Vec<u64>,
}

/// A restricted mean with its horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmstEstimate {
    pub value: f64,
    pub tau: f64,
}

/// Product-limit (Kaplan-Meier) estimator.
///
/// At tied times, events are processed before censorings: an individual
/// censored at `t` is still counted at risk for the event at `t`.
pub fn km_curve(times: &[f64], status: &[u8]) -> Result<StepSurvivalCurve> {
    if times.is_empty() {
        return Err(Error::EmptyData(String::from(" (Kaplan-Meier)")));
    }
    if times.len() != status.len() {
        return Err(Error::DimensionMismatch {
            context: "status length",
            expected: times.len(),
            got: status.len(),
        });
    }

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_unstable_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut jump_times = Vec::new();
    let mut survival = Vec::new();
    let mut n_at_risk = Vec::new();
    let mut n_events = Vec::new();

    let mut at_risk = times.len() as u64;
    let mut s = 1.0_f64;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut d = 0u64;
        let mut c = 0u64;
        let mut j = i;
        while j < order.len() && times[order[j]] == t {
            if status[order[j]] == 1 {
                d += 1;
            } else {
                c += 1;
            }
            j += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / at_risk as f64;
            jump_times.push(t);
            survival.push(s);
            n_at_risk.push(at_risk);
            n_events.push(d);
        }
        at_risk -= d + c;
        i = j;
    }

    Ok(StepSurvivalCurve {
        jump_times,
        survival,
        n_at_risk,
        n_events,
    })
}

/// Kaplan-Meier estimate Ĝ of the *censoring* distribution: the product-limit
/// estimator applied with the status flipped, so censorings are the "events".
pub fn censoring_curve(dataset: &SurvivalDataset) -> Result<StepSurvivalCurve> {
    let flipped: Vec<u8> = dataset.status.iter().map(|&d| 1 - d).collect();
    km_curve(&dataset.time, &flipped)
}

impl StepSurvivalCurve {
    /// Right-continuous evaluation S(t).
    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::InvalidRequest(format!(
                "survival curve evaluated at negative time {t}"
            )));
        }
        // Number of jumps with jump_time ≤ t.
        let k = self.jump_times.partition_point(|&jt| jt <= t);
        Ok(if k == 0 { 1.0 } else { self.survival[k - 1] })
    }

    /// Left-limit evaluation S(t⁻).
    pub fn eval_left(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::InvalidRequest(format!(
                "survival curve evaluated at negative time {t}"
            )));
        }
        let k = self.jump_times.partition_point(|&jt| jt < t);
        Ok(if k == 0 { 1.0 } else { self.survival[k - 1] })
    }

    /// Export as a two-column CSV `(time, survival)`, starting from the
    /// origin (0, 1).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["time", "survival"])?;
        writer.write_record(["0", "1"])?;
        for (t, s) in self.jump_times.iter().zip(&self.survival) {
            writer.write_record([format!("{t}"), format!("{s}")])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Area under a step survival curve on `[0, τ]`.
///
/// The integral is an exact sum of rectangles.  If τ lies beyond the last
/// jump, the curve is extended at its last value ("extend-last" rule), which
/// keeps the estimate defined for every horizon.
pub fn rmst_from_curve(curve: &StepSurvivalCurve, tau: f64) -> Result<RmstEstimate> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidRequest(format!(
            "restricted-mean horizon must be positive, got {tau}"
        )));
    }
    let mut area = 0.0;
    let mut prev_t = 0.0;
    let mut prev_s = 1.0;
    for (&t, &s) in curve.jump_times.iter().zip(&curve.survival) {
        if t >= tau {
            break;
        }
        area += prev_s * (t - prev_t);
        prev_t = t;
        prev_s = s;
    }
    area += prev_s * (tau - prev_t);
    Ok(RmstEstimate { value: area, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovariateFrame, SurvivalDataset};
    use proptest::prelude::*;

    #[test]
    fn three_events_product_limit() {
        let c = km_curve(&[1.0, 2.0, 3.0], &[1, 1, 1]).unwrap();
        assert_eq!(c.jump_times, vec![1.0, 2.0, 3.0]);
        let expect = [2.0 / 3.0, 1.0 / 3.0, 0.0];
        for (got, want) in c.survival.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(c.n_at_risk, vec![3, 2, 1]);
        assert_eq!(c.n_events, vec![1, 1, 1]);
    }

    #[test]
    fn no_events_no_jumps() {
        let c = km_curve(&[1.0, 2.0], &[0, 0]).unwrap();
        assert!(c.jump_times.is_empty());
        assert_eq!(c.eval(5.0).unwrap(), 1.0);
    }

    #[test]
    fn tie_events_processed_before_censorings() {
        // At t=1 one event with 3 at risk (the censored individual still
        // counts), so S(1) = 2/3; at t=2 the last individual fails.
        let c = km_curve(&[1.0, 1.0, 2.0], &[1, 0, 1]).unwrap();
        assert_eq!(c.jump_times, vec![1.0, 2.0]);
        assert!((c.survival[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.survival[1] - 0.0).abs() < 1e-15);
        assert_eq!(c.n_at_risk, vec![3, 1]);
    }

    #[test]
    fn censoring_curve_is_km_on_flipped_status() {
        let frame = CovariateFrame::empty(4);
        let ds = SurvivalDataset::new(vec![1.0, 2.0, 3.0, 4.0], vec![1, 0, 0, 1], frame).unwrap();
        let g = censoring_curve(&ds).unwrap();
        let direct = km_curve(&ds.time, &[0, 1, 1, 0]).unwrap();
        assert_eq!(g, direct);
        assert_eq!(g.jump_times, vec![2.0, 3.0]);
    }

    #[test]
    fn rmst_hand_integration() {
        let c = km_curve(&[1.0, 2.0, 3.0], &[1, 1, 1]).unwrap();
        let r = rmst_from_curve(&c, 3.0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rmst_vanishes_with_horizon() {
        let c = km_curve(&[1.0, 2.0], &[1, 1]).unwrap();
        let r = rmst_from_curve(&c, 1e-12).unwrap();
        assert!(r.value <= 1e-12);
    }

    #[test]
    fn rmst_attains_tau_when_survival_is_one() {
        let c = km_curve(&[5.0, 6.0], &[0, 0]).unwrap();
        let r = rmst_from_curve(&c, 4.0).unwrap();
        assert_eq!(r.value, 4.0);
    }

    #[test]
    fn rmst_extends_last_value_beyond_support() {
        // S = 1/2 after t=1 (one event, one censored later).
        let c = km_curve(&[1.0, 2.0], &[1, 0]).unwrap();
        let r = rmst_from_curve(&c, 10.0).unwrap();
        assert!((r.value - (1.0 + 0.5 * 9.0)).abs() < 1e-12);
    }

    #[test]
    fn eval_conventions() {
        let c = km_curve(&[1.0, 2.0], &[1, 1]).unwrap();
        assert_eq!(c.eval(0.5).unwrap(), 1.0);
        assert!((c.eval(1.0).unwrap() - 0.5).abs() < 1e-15); // right continuity
        assert_eq!(c.eval_left(1.0).unwrap(), 1.0);
        assert!((c.eval_left(1.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(c.eval(-0.1).is_err());
    }

    #[test]
    fn no_censoring_rmst_is_mean_truncated_time() {
        let times = [0.7, 1.3, 2.9, 3.4, 5.5];
        let status = [1u8; 5];
        let c = km_curve(&times, &status).unwrap();
        for tau in [0.5, 1.0, 3.0, 9.0] {
            let r = rmst_from_curve(&c, tau).unwrap().value;
            let mean: f64 = times.iter().map(|t| t.min(tau)).sum::<f64>() / 5.0;
            assert!((r - mean).abs() < 1e-12, "tau={tau}: {r} vs {mean}");
        }
    }

    #[test]
    fn curve_csv_round_trip_values() {
        let c = km_curve(&[1.0, 2.0], &[1, 1]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        c.write_csv(f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert_eq!(text, "time,survival\n0,1\n1,0.5\n2,0\n");
    }

    proptest! {
        #[test]
        fn km_is_monotone_in_unit_interval(
            data in proptest::collection::vec((0.01_f64..100.0, 0..=1u8), 1..60)
        ) {
            let times: Vec<f64> = data.iter().map(|(t, _)| *t).collect();
            let status: Vec<u8> = data.iter().map(|(_, d)| *d).collect();
            let c = km_curve(&times, &status).unwrap();
            let mut prev = 1.0;
            for &s in &c.survival {
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert!(s <= prev + 1e-15);
                prev = s;
            }
            for w in c.jump_times.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }

        #[test]
        fn no_censoring_identity_property(
            times in proptest::collection::vec(0.01_f64..50.0, 1..40),
            tau in 0.1_f64..60.0,
        ) {
            let status = vec![1u8; times.len()];
            let c = km_curve(&times, &status).unwrap();
            let r = rmst_from_curve(&c, tau).unwrap().value;
            let mean: f64 = times.iter().map(|t| t.min(tau)).sum::<f64>() / times.len() as f64;
            prop_assert!((r - mean).abs() < 1e-10);
        }
    }
}
