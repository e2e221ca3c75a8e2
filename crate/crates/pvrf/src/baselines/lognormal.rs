//! Lognormal accelerated-failure-time model.
//!
//! log T = βᵀx + σ·ε with standard-normal ε.  The censored-data likelihood
//! takes the normal density for events and the upper-tail probability for
//! censored rows; it is maximized by Newton-Raphson in (β, log σ) with
//! analytic derivatives built on the Mills ratio λ(z) = φ(z)/Φ̄(z).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::design::{build_design, least_squares, Design, Term};
use crate::baselines::RmstPrediction;
use crate::data::{CovariateFrame, SurvivalDataset};
use crate::error::{Error, Result};
use crate::numeric::{adaptive_simpson, mills_ratio, normal_sf};

/// A fitted lognormal AFT model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LognormalAft {
    pub terms: Vec<Term>,
    pub names: Vec<String>,
    /// Coefficients on log time.
    pub coefficients: Vec<f64>,
    /// Residual scale σ > 0.
    pub sigma: f64,
    pub iterations: usize,
}

const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 10;
const SIGMA_FLOOR: f64 = 1e-8;

/// ln Φ̄(z), stable in both tails: direct below the Mills-ratio switch point,
/// via ln φ(z) − ln λ(z) beyond it.
fn log_normal_sf(z: f64) -> f64 {
    if z <= 30.0 {
        normal_sf(z).ln()
    } else {
        -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() - mills_ratio(z).ln()
    }
}

/// Log-likelihood, gradient, and Hessian in the parameter vector
/// (β₁…β_q, ρ = ln σ).
fn evaluate(
    x: &DMatrix<f64>,
    y: &[f64],
    status: &[u8],
    params: &DVector<f64>,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let q = x.ncols();
    let beta = params.rows(0, q);
    let rho = params[q];
    let sigma = rho.exp();

    let mut loglik = 0.0;
    let mut grad = DVector::zeros(q + 1);
    let mut hess = DMatrix::zeros(q + 1, q + 1);
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();

    for i in 0..x.nrows() {
        let eta: f64 = x.row(i).transpose().dot(&beta);
        let z = (y[i] - eta) / sigma;
        let row = x.row(i);
        if status[i] == 1 {
            loglik += -rho - half_log_2pi - 0.5 * z * z;
            // d/dβ_j = z x_j / σ, d/dρ = z² − 1.
            for j in 0..q {
                grad[j] += z * row[j] / sigma;
            }
            grad[q] += z * z - 1.0;
            for a in 0..q {
                for b in 0..q {
                    hess[(a, b)] -= row[a] * row[b] / (sigma * sigma);
                }
                hess[(a, q)] -= 2.0 * z * row[a] / sigma;
                hess[(q, a)] -= 2.0 * z * row[a] / sigma;
            }
            hess[(q, q)] -= 2.0 * z * z;
        } else {
            let lambda = mills_ratio(z);
            let dlambda = lambda * (lambda - z);
            loglik += log_normal_sf(z);
            for j in 0..q {
                grad[j] += lambda * row[j] / sigma;
            }
            grad[q] += z * lambda;
            for a in 0..q {
                for b in 0..q {
                    hess[(a, b)] -= dlambda * row[a] * row[b] / (sigma * sigma);
                }
                let cross = (z * dlambda + lambda) * row[a] / sigma;
                hess[(a, q)] -= cross;
                hess[(q, a)] -= cross;
            }
            hess[(q, q)] -= z * lambda + z * z * dlambda;
        }
    }
    (loglik, grad, hess)
}

/// Maximize the censored-normal likelihood of log survival times.
pub fn fit_lognormal(data: &SurvivalDataset, design: &Design) -> Result<LognormalAft> {
    let n = data.n();
    let q = design.n_cols();
    if design.n_rows() != n {
        return Err(Error::DimensionMismatch {
            context: "design rows",
            expected: n,
            got: design.n_rows(),
        });
    }
    if n <= q + 2 {
        return Err(Error::InvalidRequest(format!(
            "lognormal fit needs more than {} rows for {q} coefficients, got {n}",
            q + 2
        )));
    }
    if data.status.iter().all(|&s| s == 0) {
        return Err(Error::InvalidRequest(String::from(
            "every row is censored; the lognormal likelihood has no maximum",
        )));
    }
    let y: Vec<f64> = data.time.iter().map(|&t| t.ln()).collect();

    // Start from least squares on log time, ignoring censoring.
    let y_vec = DVector::from_column_slice(&y);
    let beta0 = least_squares(design, &y_vec, "lognormal start")?;
    let residual = &y_vec - &design.matrix * &beta0;
    let sigma0 = (residual.norm_squared() / (n - q) as f64).sqrt().max(1e-3);

    let mut params = DVector::zeros(q + 1);
    params.rows_mut(0, q).copy_from(&beta0);
    params[q] = sigma0.ln();

    let (mut loglik, mut grad, mut hess) = evaluate(&design.matrix, &y, &data.status, &params);
    let mut iterations = 0;
    loop {
        let grad_norm = grad.norm();
        if grad_norm < GRAD_TOL {
            break;
        }
        if iterations >= MAX_ITER {
            return Err(Error::NotConverged {
                what: "lognormal likelihood maximization",
                iterations: MAX_ITER,
                criterion: grad_norm,
            });
        }
        // Newton ascent: solve (−H)·step = g; fall back to steepest ascent
        // when the Hessian is not negative definite far from the optimum.
        let step = match (-&hess).cholesky() {
            Some(chol) => chol.solve(&grad),
            None => &grad / grad_norm.max(1.0),
        };
        let mut factor = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate = &params + &step * factor;
            let (l2, g2, h2) = evaluate(&design.matrix, &y, &data.status, &candidate);
            if l2.is_finite() && l2 >= loglik - 1e-12 * loglik.abs().max(1.0) {
                params = candidate;
                loglik = l2;
                grad = g2;
                hess = h2;
                accepted = true;
                break;
            }
            factor /= 2.0;
        }
        iterations += 1;
        if !accepted {
            return Err(Error::NotConverged {
                what: "lognormal likelihood maximization",
                iterations,
                criterion: grad_norm,
            });
        }
        if params[q].exp() < SIGMA_FLOOR {
            return Err(Error::ScaleCollapse { floor: SIGMA_FLOOR });
        }
    }

    Ok(LognormalAft {
        terms: design.terms.clone(),
        names: design.names.clone(),
        coefficients: params.rows(0, q).iter().copied().collect(),
        sigma: params[q].exp(),
        iterations,
    })
}

/// Restricted mean ∫₀^τ Φ̄((ln t − βᵀx)/σ) dt per row, by adaptive Simpson
/// quadrature with absolute tolerance 1e−8.
pub fn lognormal_rmst(
    model: &LognormalAft,
    frame: &CovariateFrame,
    tau: f64,
) -> Result<Vec<RmstPrediction>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidRequest(format!(
            "horizon must be positive, got {tau}"
        )));
    }
    let design = build_design(frame, &model.terms)?;
    if design.names != model.names {
        return Err(Error::InvalidRequest(String::from(
            "covariate frame does not match the model's training schema",
        )));
    }
    let eta = design.linear_predictor(&model.coefficients)?;
    let sigma = model.sigma;
    Ok(eta
        .iter()
        .map(|&e| {
            let survival = |t: f64| normal_sf((t.ln() - e) / sigma);
            let value = adaptive_simpson(survival, 0.0, tau, 1e-8).clamp(0.0, tau);
            RmstPrediction {
                value,
                tau,
                flagged: false,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::design::main_effect_terms;
    use crate::data::CovariateColumn;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn x_frame(values: Vec<f64>) -> CovariateFrame {
        CovariateFrame::new(vec![CovariateColumn::continuous("x", values)]).unwrap()
    }

    #[test]
    fn uncensored_fit_equals_least_squares_on_log_time() {
        let mut rng = stream_rng(61, &[0]);
        let n = 80;
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let times: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let eps: f64 = StandardNormal.sample(&mut rng);
                (1.0 + 0.5 * x + 0.4 * eps).exp()
            })
            .collect();
        let frame = x_frame(xs);
        let data =
            SurvivalDataset::new(times.clone(), vec![1; n], frame.clone())
                .unwrap();
        let design = build_design(&frame, &main_effect_terms(&frame, true)).unwrap();
        let model = fit_lognormal(&data, &design).unwrap();

        let y = DVector::from_iterator(n, times.iter().map(|&t| t.ln()));
        let ols = least_squares(&design, &y, "oracle").unwrap();
        for j in 0..2 {
            assert!(
                (model.coefficients[j] - ols[j]).abs() < 1e-6,
                "β_{j}: {} vs {}",
                model.coefficients[j],
                ols[j]
            );
        }
        // Without censoring the MLE of σ² is the residual sum of squares / n.
        let residual = &y - design.matrix.clone() * ols;
        let sigma_mle = (residual.norm_squared() / n as f64).sqrt();
        assert!((model.sigma - sigma_mle).abs() < 1e-6);
    }

    #[test]
    fn heavy_censoring_recovers_known_coefficients() {
        let mut rng = stream_rng(62, &[0]);
        let n = 5000;
        let (b0, b1, sigma) = (0.8, 0.5, 0.6);
        let mut xs = Vec::with_capacity(n);
        let mut times = Vec::with_capacity(n);
        let mut status = Vec::with_capacity(n);
        let mut censored = 0;
        for _ in 0..n {
            let x = rng.gen_range(-1.0..1.0);
            let eps: f64 = StandardNormal.sample(&mut rng);
            let t = (b0 + b1 * x + sigma * eps).exp();
            let c = -2.6 * rng.gen::<f64>().ln();
            xs.push(x);
            if t <= c {
                times.push(t);
                status.push(1);
            } else {
                times.push(c);
                status.push(0);
                censored += 1;
            }
        }
        assert!(censored as f64 > 0.35 * n as f64, "want heavy censoring, got {censored}");
        let frame = x_frame(xs);
        let data = SurvivalDataset::new(times, status, frame.clone()).unwrap();
        let design = build_design(&frame, &main_effect_terms(&frame, true)).unwrap();
        let model = fit_lognormal(&data, &design).unwrap();
        assert!((model.coefficients[0] - b0).abs() < 0.05, "{:?}", model.coefficients);
        assert!((model.coefficients[1] - b1).abs() < 0.05);
        assert!((model.sigma - sigma).abs() < 0.05);
    }

    #[test]
    fn all_censored_is_rejected() {
        let frame = x_frame(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let data = SurvivalDataset::new(
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![0; 6],
            frame.clone(),
        )
        .unwrap();
        let design = build_design(&frame, &main_effect_terms(&frame, true)).unwrap();
        assert!(matches!(
            fit_lognormal(&data, &design),
            Err(Error::InvalidRequest(_))
        ));
    }

    fn point_mass_model(log_m: f64, sigma: f64) -> LognormalAft {
        LognormalAft {
            terms: vec![Term::Intercept],
            names: vec![String::from("(intercept)")],
            coefficients: vec![log_m],
            sigma,
            iterations: 0,
        }
    }

    #[test]
    fn vanishing_scale_concentrates_at_the_median() {
        // σ → 0 makes the survival a step at m = exp(βᵀx); with m < τ the
        // restricted mean converges to m.
        let frame = CovariateFrame::new(vec![CovariateColumn::continuous("d", vec![0.0])]).unwrap();
        let model = point_mass_model(1.0f64.ln(), 1e-4);
        let pred = lognormal_rmst(&model, &frame, 2.0).unwrap();
        assert!((pred[0].value - 1.0).abs() < 1e-6, "{}", pred[0].value);
    }

    #[test]
    fn tiny_horizon_gives_tiny_rmst() {
        let frame = CovariateFrame::new(vec![CovariateColumn::continuous("d", vec![0.0])]).unwrap();
        let model = point_mass_model(0.0, 1.0);
        let pred = lognormal_rmst(&model, &frame, 1e-8).unwrap();
        assert!(pred[0].value <= 1e-8 && pred[0].value >= 0.0);
    }

    #[test]
    fn quadrature_matches_brute_force_rectangles() {
        let frame = CovariateFrame::new(vec![CovariateColumn::continuous("d", vec![0.0])]).unwrap();
        let model = point_mass_model(0.3, 0.7);
        let tau = 3.0;
        let pred = lognormal_rmst(&model, &frame, tau).unwrap();

        let n = 1_000_000;
        let h = tau / n as f64;
        let mut riemann = 0.0;
        for k in 0..n {
            let t = (k as f64 + 0.5) * h;
            riemann += normal_sf((t.ln() - 0.3) / 0.7) * h;
        }
        assert!((pred[0].value - riemann).abs() < 1e-6, "{} vs {riemann}", pred[0].value);
    }

    #[test]
    fn nonpositive_horizon_is_rejected() {
        let frame = CovariateFrame::new(vec![CovariateColumn::continuous("d", vec![0.0])]).unwrap();
        let model = point_mass_model(0.0, 1.0);
        assert!(lognormal_rmst(&model, &frame, 0.0).is_err());
    }
}
