//! Pseudo-value regression with a linear predictor.
//!
//! The classical alternative to forests: regress the pseudo-values directly
//! on main effects through an identity or log link, solving the estimating
//! equation Σ (∂μᵢ/∂β)ᵀ (θ̂ᵢ − μᵢ) = 0 with unit working variance.  Under
//! the identity link this is ordinary least squares; under the log link a
//! Newton iteration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::design::{build_design, least_squares, Design, Term};
use crate::baselines::RmstPrediction;
use crate::data::CovariateFrame;
use crate::error::{Error, Result};
use crate::pseudo::PseudoValueVector;

/// Link function g with μ = g⁻¹(η).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Log,
}

/// A fitted pseudo-value regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeeModel {
    pub link: Link,
    /// Horizon of the pseudo-values this model was fitted to.
    pub tau: f64,
    pub terms: Vec<Term>,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Newton iterations used (0 for the closed-form identity link).
    pub iterations: usize,
}

/// Cap on the linear predictor before exponentiation, to keep the log-link
/// iteration finite while it is far from the solution.
const ETA_CAP: f64 = 700.0;

fn log_link_mean(eta: f64) -> f64 {
    eta.clamp(-ETA_CAP, ETA_CAP).exp()
}

/// Fit the model by solving the estimating equation for `link`.
pub fn fit_gee(pseudo: &PseudoValueVector, design: &Design, link: Link) -> Result<GeeModel> {
    let n = design.n_rows();
    if pseudo.values.len() != n {
        return Err(Error::DimensionMismatch {
            context: "pseudo-value length",
            expected: n,
            got: pseudo.values.len(),
        });
    }
    let theta = DVector::from_column_slice(&pseudo.values);
    let (coefficients, iterations) = match link {
        Link::Identity => {
            let beta = least_squares(design, &theta, "pseudo-value regression")?;
            (beta.iter().copied().collect(), 0)
        }
        Link::Log => fit_log_link(design, &theta)?,
    };
    Ok(GeeModel {
        link,
        tau: pseudo.tau,
        terms: design.terms.clone(),
        names: design.names.clone(),
        coefficients,
        iterations,
    })
}

/// Newton iteration for the log link: score U(β) = Xᵀ[μ ⊙ (θ − μ)] with
/// μ = exp(Xβ), expected information J = Xᵀ diag(μ²) X.  Converged when the
/// largest coefficient update falls below 1e−9.
fn fit_log_link(design: &Design, theta: &DVector<f64>) -> Result<(Vec<f64>, usize)> {
    const TOL: f64 = 1e-9;
    const MAX_ITER: usize = 100;
    let x = &design.matrix;
    let q = design.n_cols();

    // Start at the log of the mean pseudo-value (a positive overall RMST in
    // any non-degenerate data set), slopes at zero.
    let mut beta = DVector::zeros(q);
    let mean_theta = theta.mean();
    if let Some(intercept) = design.names.iter().position(|n| n == "(intercept)") {
        if mean_theta > 0.0 {
            beta[intercept] = mean_theta.ln();
        }
    }

    let mut last_step = f64::INFINITY;
    for iteration in 1..=MAX_ITER {
        let eta = x * &beta;
        let mu = eta.map(log_link_mean);
        let residual_weighted = mu.component_mul(&(theta - &mu));
        let score = x.transpose() * residual_weighted;

        let mut info = DMatrix::zeros(q, q);
        for i in 0..x.nrows() {
            let w = mu[i] * mu[i];
            let row = x.row(i);
            for a in 0..q {
                for b in 0..q {
                    info[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        let chol = info.cholesky().ok_or_else(|| Error::RankDeficient {
            context: String::from("log-link information matrix"),
        })?;
        let step = chol.solve(&score);
        beta += &step;
        last_step = step.amax();
        if !last_step.is_finite() {
            return Err(Error::Numeric(format!(
                "log-link iteration produced a non-finite update at iteration {iteration}"
            )));
        }
        if last_step < TOL {
            return Ok((beta.iter().copied().collect(), iteration));
        }
    }
    Err(Error::NotConverged {
        what: "log-link pseudo-value regression",
        iterations: MAX_ITER,
        criterion: last_step,
    })
}

/// Predict the restricted mean g⁻¹(βᵀx) for every row.  Values are not
/// clipped to [0, τ]; rows outside that range carry a flag instead.
pub fn predict_gee(
    model: &GeeModel,
    frame: &CovariateFrame,
    tau: f64,
) -> Result<Vec<RmstPrediction>> {
    if (tau - model.tau).abs() > 1e-12 * model.tau.abs().max(1.0) {
        return Err(Error::InvalidRequest(format!(
            "model was fitted at horizon {}, cannot predict at {tau}",
            model.tau
        )));
    }
    let design = build_design(frame, &model.terms)?;
    if design.names != model.names {
        return Err(Error::InvalidRequest(String::from(
            "covariate frame does not match the model's training schema",
        )));
    }
    let eta = design.linear_predictor(&model.coefficients)?;
    Ok(eta
        .iter()
        .map(|&e| {
            let value = match model.link {
                Link::Identity => e,
                Link::Log => log_link_mean(e),
            };
            RmstPrediction {
                value,
                tau,
                flagged: !(0.0..=tau).contains(&value),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::design::main_effect_terms;
    use crate::data::{CovariateColumn, SurvivalDataset};
    use crate::pseudo::pseudo_values_fast;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn x_frame(values: Vec<f64>) -> CovariateFrame {
        CovariateFrame::new(vec![CovariateColumn::continuous("x", values)]).unwrap()
    }

    fn pv(tau: f64, values: Vec<f64>) -> PseudoValueVector {
        PseudoValueVector { tau, values }
    }

    #[test]
    fn identity_link_recovers_exact_linear_data() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 4.0).collect();
        let theta: Vec<f64> = xs.iter().map(|&x| 2.0 + 3.0 * x).collect();
        let frame = x_frame(xs);
        let design = build_design(&frame, &main_effect_terms(&frame, true)).unwrap();
        let model = fit_gee(&pv(10.0, theta), &design, Link::Identity).unwrap();
        assert!((model.coefficients[0] - 2.0).abs() < 1e-10);
        assert!((model.coefficients[1] - 3.0).abs() < 1e-10);
        assert_eq!(model.iterations, 0);
    }

    #[test]
    fn identity_link_without_censoring_equals_least_squares_on_truncated_times() {
        // With no censoring the pseudo-values are exactly min(T, τ), so the
        // fit must coincide with a direct least-squares on those values.
        let mut rng = stream_rng(41, &[0]);
        let n = 60;
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        let times: Vec<f64> = xs.iter().map(|&x| 0.5 + x + rng.gen_range(0.0..1.5)).collect();
        let tau = 2.5;
        let frame = x_frame(xs);
        let data = SurvivalDataset::new(
            times.clone(),
            vec![1; n],
            frame.clone(),
        )
        .unwrap();
        let pseudo = pseudo_values_fast(&data, tau).unwrap();
        let design = build_design(&frame, &main_effect_terms(&frame, true)).unwrap();
        let model = fit_gee(&pseudo, &design, Link::Identity).unwrap();

        let truncated = DVector::from_iterator(n, times.iter().map(|&t| t.min(tau)));
        let direct = least_squares(&design, &truncated, "oracle").unwrap();
        for j in 0..2 {
            assert!((model.coefficients[j] - direct[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn log_link_recovers_exact_exponential_data() {
        let xs: Vec<f64> = (0..21).map(|i| -1.0 + 0.1 * i as f64).collect();
        let theta: Vec<f64> = xs.iter().map(|&x| (0.5 + 0.2 * x).exp()).collect();
        let frame = x_frame(xs);
        let design = build_design(&frame, &main_effect_terms(&frame, true)).unwrap();
        let model = fit_gee(&pv(10.0, theta), &design, Link::Log).unwrap();
        assert!((model.coefficients[0] - 0.5).abs() < 1e-6, "{:?}", model.coefficients);
        assert!((model.coefficients[1] - 0.2).abs() < 1e-6);
        assert!(model.iterations >= 1);
    }

    #[test]
    fn duplicate_column_is_rank_deficient() {
        let frame = x_frame(vec![1.0, 2.0, 3.0]);
        let design = build_design(
            &frame,
            &[
                Term::Intercept,
                Term::Main(String::from("x")),
                Term::Main(String::from("x")),
            ],
        )
        .unwrap();
        let result = fit_gee(&pv(5.0, vec![1.0, 2.0, 3.0]), &design, Link::Identity);
        assert!(matches!(result, Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn identity_intercept_only_predicts_constant() {
        let frame = x_frame(vec![0.0, 1.0, 2.0]);
        let model = GeeModel {
            link: Link::Identity,
            tau: 4.0,
            terms: vec![Term::Intercept, Term::Main(String::from("x"))],
            names: vec![String::from("(intercept)"), String::from("x")],
            coefficients: vec![1.0, 0.0],
            iterations: 0,
        };
        let preds = predict_gee(&model, &frame, 4.0).unwrap();
        for p in &preds {
            assert_eq!(p.value, 1.0);
            assert!(!p.flagged);
        }
    }

    #[test]
    fn log_zero_coefficients_predict_one() {
        let frame = x_frame(vec![0.0, 1.0, 2.0]);
        let model = GeeModel {
            link: Link::Log,
            tau: 4.0,
            terms: vec![Term::Intercept, Term::Main(String::from("x"))],
            names: vec![String::from("(intercept)"), String::from("x")],
            coefficients: vec![0.0, 0.0],
            iterations: 1,
        };
        let preds = predict_gee(&model, &frame, 4.0).unwrap();
        for p in &preds {
            assert_eq!(p.value, 1.0);
        }
    }

    #[test]
    fn out_of_range_predictions_are_flagged() {
        let frame = x_frame(vec![-5.0, 0.5, 5.0]);
        let model = GeeModel {
            link: Link::Identity,
            tau: 2.0,
            terms: vec![Term::Main(String::from("x"))],
            names: vec![String::from("x")],
            coefficients: vec![1.0],
            iterations: 0,
        };
        let preds = predict_gee(&model, &frame, 2.0).unwrap();
        assert!(preds[0].flagged, "negative prediction must be flagged");
        assert!(!preds[1].flagged);
        assert!(preds[2].flagged, "prediction above τ must be flagged");
    }

    #[test]
    fn horizon_mismatch_is_rejected() {
        let frame = x_frame(vec![1.0]);
        let model = GeeModel {
            link: Link::Identity,
            tau: 2.0,
            terms: vec![Term::Main(String::from("x"))],
            names: vec![String::from("x")],
            coefficients: vec![1.0],
            iterations: 0,
        };
        assert!(predict_gee(&model, &frame, 3.0).is_err());
    }
}
