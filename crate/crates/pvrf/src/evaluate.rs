//! Prediction-error metrics and model-inspection tools.
//!
//! Two situations are covered.  When the ground truth is known (simulated
//! data), [`mse_rmst`] and [`mse_delta`] compare predictions against the true
//! restricted means directly.  On real data the truth is censored, so the
//! squared error against `min(T̃, τ)` must be reweighted by inverse
//! probabilities of censoring to stay consistent — that is the weighted
//! residual sum of squares ([`wrss`]) with weights from [`ipc_weights`].
//! Cross-validated variants ([`cv_wrss`], [`cv_contrast`]), permutation
//! feature importance ([`pfi`]) and Monte-Carlo Shapley values
//! ([`shapley_mc`]) build on those pieces.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateColumn, CovariateData, CovariateFrame, SurvivalDataset};
use crate::effects::individual_contrasts;
use crate::error::{Error, Result};
use crate::km::{censoring_curve, StepSurvivalCurve};
use crate::pipeline::{fit_model, FitSettings, ModelKind};
use crate::predictor::RmstPredictor;
use crate::rng::{derive_seed, stream, stream_rng};

/// Mean squared error of predicted restricted means against known truth.
///
/// Returns `(1/n) Σ (μ̂ᵢ − μᵢ)²`; take the square root for an RMSE.
pub fn mse_rmst(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "predicted vs true values",
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyData(String::from(" (no values to compare)")));
    }
    let n = predicted.len() as f64;
    Ok(predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// Mean squared error of predicted treatment contrasts against true ones.
///
/// Same arithmetic as [`mse_rmst`], kept as a separate entry point because
/// reports list the two metrics side by side and they answer different
/// questions (error in the level vs error in the difference).
pub fn mse_delta(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    mse_rmst(predicted, truth)
}

/// Inverse-probability-of-censoring weights at a fixed horizon.
#[derive(Debug, Clone)]
pub struct IpcWeights {
    /// One weight per row of the dataset the weights were computed for.
    pub weights: Vec<f64>,
    /// Horizon τ the weights refer to.
    pub tau: f64,
    /// Censoring survival curve Ĝ the weights were derived from.
    pub censoring: StepSurvivalCurve,
}

/// Weights that make censored squared errors unbiased for the uncensored
/// ones:
///
/// ```text
/// ŵᵢ = 𝟙{T̃ᵢ ≤ τ}·δᵢ / Ĝ(T̃ᵢ⁻)  +  𝟙{T̃ᵢ > τ} / Ĝ(τ)
/// ```
///
/// A row censored on or before τ gets weight 0 exactly; its follow-up says
/// nothing about `min(T, τ)`.  Rows still under observation at τ are
/// up-weighted by the inverse chance of remaining uncensored that long.
/// `g` should be a Kaplan-Meier estimate of the censoring distribution
/// (status flipped), fitted on *training* data when the weights are used on
/// a held-out fold.
pub fn ipc_weights(data: &SurvivalDataset, tau: f64, g: &StepSurvivalCurve) -> Result<IpcWeights> {
    Ok(IpcWeights {
        weights: weights_for(&data.time, &data.status, tau, g)?,
        tau,
        censoring: g.clone(),
    })
}

/// Slice-level weight computation, shared with fold evaluation (where a test
/// fold may be a single row and is handled without a full dataset).
fn weights_for(time: &[f64], status: &[u8], tau: f64, g: &StepSurvivalCurve) -> Result<Vec<f64>> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidRequest(format!(
            "censoring weights need a positive finite horizon, got {tau}"
        )));
    }
    let g_tau = g.eval(tau)?;
    let mut weights = Vec::with_capacity(time.len());
    for (i, (&t, &d)) in time.iter().zip(status).enumerate() {
        let w = if t <= tau {
            if d == 0 {
                0.0
            } else {
                let denom = g.eval_left(t)?;
                if denom <= 0.0 {
                    return Err(Error::ZeroCensoringWeight { row: i });
                }
                1.0 / denom
            }
        } else {
            if g_tau <= 0.0 {
                return Err(Error::ZeroCensoringWeight { row: i });
            }
            1.0 / g_tau
        };
        weights.push(w);
    }
    Ok(weights)
}

/// Weighted residual sum of squares of explicit predictions on a fold:
/// `(1/n) Σ ŵᵢ (min(T̃ᵢ, τ) − μ̂ᵢ)²`.
pub fn wrss_of_predictions(
    fold: &SurvivalDataset,
    predictions: &[f64],
    tau: f64,
    g: &StepSurvivalCurve,
) -> Result<f64> {
    wrss_slices(&fold.time, &fold.status, predictions, tau, g)
}

fn wrss_slices(
    time: &[f64],
    status: &[u8],
    predictions: &[f64],
    tau: f64,
    g: &StepSurvivalCurve,
) -> Result<f64> {
    if predictions.len() != time.len() {
        return Err(Error::DimensionMismatch {
            context: "predictions vs fold rows",
            expected: time.len(),
            got: predictions.len(),
        });
    }
    let weights = weights_for(time, status, tau, g)?;
    let n = time.len() as f64;
    Ok(time
        .iter()
        .zip(predictions)
        .zip(&weights)
        .map(|((&t, &mu), &wi)| {
            let r = t.min(tau) - mu;
            wi * r * r
        })
        .sum::<f64>()
        / n)
}

/// WRSS of a fitted predictor on a held-out fold.
pub fn wrss(
    model: &dyn RmstPredictor,
    fold: &SurvivalDataset,
    tau: f64,
    g: &StepSurvivalCurve,
) -> Result<f64> {
    let predictions = model.predict_rmst(&fold.covariates, tau)?;
    wrss_of_predictions(fold, &predictions, tau, g)
}

/// A per-fold metric with its summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    /// What was measured (e.g. `"wrss"` or `"contrast"`).
    pub metric: String,
    /// One value per fold, in fold order.
    pub fold_values: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl MetricReport {
    fn from_values(metric: &str, fold_values: Vec<f64>) -> Result<Self> {
        if fold_values.is_empty() {
            return Err(Error::EmptyData(String::from(" (no fold values)")));
        }
        let mean = fold_values.iter().sum::<f64>() / fold_values.len() as f64;
        let min = fold_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = fold_values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(MetricReport {
            metric: metric.to_string(),
            fold_values,
            mean,
            min,
            max,
        })
    }
}

/// Deal rows into `k` folds, stratified by event status.
///
/// Events and censored rows are shuffled separately and dealt round-robin,
/// so fold event counts differ by at most one.  Returns the fold label of
/// each row.
pub fn stratified_folds(status: &[u8], k: usize, rng: &mut ChaCha12Rng) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidRequest(format!(
            "cross-validation needs at least 2 folds, got {k}"
        )));
    }
    if k > status.len() {
        return Err(Error::InvalidRequest(format!(
            "cannot split {} rows into {k} folds",
            status.len()
        )));
    }
    let mut assignment = vec![0usize; status.len()];
    for class in [1u8, 0u8] {
        let mut rows: Vec<usize> = (0..status.len()).filter(|&i| status[i] == class).collect();
        rows.shuffle(rng);
        for (pos, &row) in rows.iter().enumerate() {
            assignment[row] = pos % k;
        }
    }
    Ok(assignment)
}

/// One fold's held-out evaluation: WRSS and, when levels are given, the
/// average contrast on the test fold.
fn evaluate_fold(
    data: &SurvivalDataset,
    assignment: &[usize],
    fold: usize,
    kind: ModelKind,
    settings: &FitSettings,
    tau: f64,
    contrast_levels: Option<(&str, &str)>,
    seed: u64,
) -> Result<(f64, Option<f64>)> {
    let test_rows: Vec<usize> = (0..data.n()).filter(|&i| assignment[i] == fold).collect();
    let train_rows: Vec<usize> = (0..data.n()).filter(|&i| assignment[i] != fold).collect();
    let train = data.select_rows(&train_rows)?;
    if !train.status.iter().any(|&d| d == 1) {
        return Err(Error::InvalidRequest(format!(
            "cross-validation fold {fold}: the training folds contain no events"
        )));
    }
    // The test fold is scored from slices rather than re-packed into a
    // dataset, so leave-one-out (single-row folds) works.
    let test_time: Vec<f64> = test_rows.iter().map(|&i| data.time[i]).collect();
    let test_status: Vec<u8> = test_rows.iter().map(|&i| data.status[i]).collect();
    let test_frame = data.covariates.select_rows(&test_rows);
    let model = fit_model(kind, &train, tau, settings, seed)?;
    let g = censoring_curve(&train)?;
    let predictions = model.predict_rmst(&test_frame, tau)?;
    let w = wrss_slices(&test_time, &test_status, &predictions, tau, &g)?;
    let delta = match contrast_levels {
        Some((a, b)) => {
            let name = data
                .treatment_name()
                .ok_or_else(|| {
                    Error::InvalidRequest(String::from(
                        "dataset has no declared treatment column; a contrast needs one",
                    ))
                })?
                .to_string();
            Some(individual_contrasts(&model, &test_frame, &name, a, b, tau)?.average)
        }
        None => None,
    };
    Ok((w, delta))
}

fn cross_validate(
    data: &SurvivalDataset,
    kind: ModelKind,
    settings: &FitSettings,
    k: usize,
    tau: f64,
    contrast_levels: Option<(&str, &str)>,
    seed: u64,
) -> Result<(MetricReport, Option<MetricReport>)> {
    let assignment = stratified_folds(&data.status, k, &mut stream_rng(seed, &[stream::FOLD]))?;
    let per_fold: Vec<(f64, Option<f64>)> = (0..k)
        .into_par_iter()
        .map(|fold| {
            evaluate_fold(
                data,
                &assignment,
                fold,
                kind,
                settings,
                tau,
                contrast_levels,
                derive_seed(seed, &[stream::FOLD, fold as u64]),
            )
        })
        .collect::<Result<_>>()?;
    let wrss_report =
        MetricReport::from_values("wrss", per_fold.iter().map(|&(w, _)| w).collect())?;
    let contrast_report = if contrast_levels.is_some() {
        Some(MetricReport::from_values(
            "contrast",
            per_fold.iter().map(|&(_, d)| d.unwrap()).collect(),
        )?)
    } else {
        None
    };
    Ok((wrss_report, contrast_report))
}

/// `k`-fold cross-validated WRSS of a model specification.
///
/// Folds are stratified on event status.  For each fold the model (including
/// any `mtry` tuning requested in `settings`) and the censoring curve Ĝ are
/// fitted on the training folds only, then scored on the held-out fold.
pub fn cv_wrss(
    data: &SurvivalDataset,
    kind: ModelKind,
    settings: &FitSettings,
    k: usize,
    tau: f64,
    seed: u64,
) -> Result<MetricReport> {
    Ok(cross_validate(data, kind, settings, k, tau, None, seed)?.0)
}

/// `k`-fold cross-validated average treatment contrast (`level_a` minus
/// `level_b`), one value per held-out fold.
///
/// Same fold discipline as [`cv_wrss`]; the contrast on each test fold is the
/// g-computation average over that fold's rows.
#[allow(clippy::too_many_arguments)]
pub fn cv_contrast(
    data: &SurvivalDataset,
    kind: ModelKind,
    settings: &FitSettings,
    k: usize,
    tau: f64,
    level_a: &str,
    level_b: &str,
    seed: u64,
) -> Result<MetricReport> {
    let (_, contrast) = cross_validate(
        data,
        kind,
        settings,
        k,
        tau,
        Some((level_a, level_b)),
        seed,
    )?;
    Ok(contrast.expect("contrast requested"))
}

/// Permutation feature importance on a held-out fold.
///
/// For each covariate `j` the column is permuted once (rows shuffled within
/// the fold) and the importance is the ratio
///
/// ```text
/// PFI_j = WRSS(fold with column j permuted) / WRSS(fold intact)
/// ```
///
/// so 1 means "breaking the column changed nothing" and values above 1 mean
/// the model relied on it.  A covariate the model never looks at yields
/// exactly 1 for any permutation.  Returns one ratio per covariate, in
/// column order.
pub fn pfi(
    model: &dyn RmstPredictor,
    fold: &SurvivalDataset,
    tau: f64,
    g: &StepSurvivalCurve,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    let intact = wrss(model, fold, tau, g)?;
    if intact == 0.0 {
        return Err(Error::Numeric(String::from(
            "intact WRSS is zero; importance ratios are undefined",
        )));
    }
    let p = fold.covariates.n_cols();
    // Draw all permutations up front so the rng sequence does not depend on
    // evaluation order, then score the covariates in parallel.
    let perms: Vec<Vec<usize>> = (0..p)
        .map(|_| {
            let mut perm: Vec<usize> = (0..fold.n()).collect();
            perm.shuffle(rng);
            perm
        })
        .collect();
    (0..p)
        .into_par_iter()
        .map(|j| {
            let mut columns = fold.covariates.columns().to_vec();
            columns[j] = columns[j].select(&perms[j]);
            let frame = CovariateFrame::new(columns)?;
            let predictions = model.predict_rmst(&frame, tau)?;
            Ok(wrss_of_predictions(fold, &predictions, tau, g)? / intact)
        })
        .collect()
}

/// One output column for the Shapley construction: each virtual row takes
/// its value either from the explained row or from a background row.
fn spliced_column(
    explained: &CovariateColumn,
    explained_row: usize,
    background: &CovariateColumn,
    from_explained: &[bool],
    background_rows: &[usize],
) -> Result<CovariateColumn> {
    let pick = |v: usize| (from_explained[v], background_rows[v]);
    let data = match (&explained.data, &background.data) {
        (CovariateData::Continuous(xv), CovariateData::Continuous(bv)) => {
            CovariateData::Continuous(
                (0..from_explained.len())
                    .map(|v| {
                        let (x, b) = pick(v);
                        if x {
                            xv[explained_row]
                        } else {
                            bv[b]
                        }
                    })
                    .collect(),
            )
        }
        (CovariateData::Binary(xv), CovariateData::Binary(bv)) => CovariateData::Binary(
            (0..from_explained.len())
                .map(|v| {
                    let (x, b) = pick(v);
                    if x {
                        xv[explained_row]
                    } else {
                        bv[b]
                    }
                })
                .collect(),
        ),
        (
            CovariateData::Categorical { levels, codes },
            CovariateData::Categorical {
                levels: blevels,
                codes: bcodes,
            },
        ) if levels == blevels => CovariateData::Categorical {
            levels: levels.clone(),
            codes: (0..from_explained.len())
                .map(|v| {
                    let (x, b) = pick(v);
                    if x {
                        codes[explained_row]
                    } else {
                        bcodes[b]
                    }
                })
                .collect(),
        },
        _ => {
            return Err(Error::InvalidRequest(format!(
                "background column {:?} does not match the explained frame (kind or levels differ)",
                background.name
            )))
        }
    };
    Ok(CovariateColumn {
        name: explained.name.clone(),
        data,
    })
}

/// Monte-Carlo Shapley values of one prediction.
///
/// The permutation estimator of Štrumbelj-Kononenko: for each of `m` draws,
/// pick a background row and a random feature order, then walk through the
/// order replacing background values by the explained row's values one
/// feature at a time; a feature is credited with the prediction change it
/// causes on arrival.  Averaged over draws this converges to the Shapley
/// values of the game `v(S) = E[f(x_S, B_{−S})]` with the background sample
/// as the reference distribution.
///
/// The values satisfy local accuracy: their sum plus the background mean
/// prediction ([`shapley_base`]) reconstructs `f(x)` up to Monte-Carlo error
/// in the background mean.  Returns one value per covariate, in column
/// order.
pub fn shapley_mc(
    model: &dyn RmstPredictor,
    frame: &CovariateFrame,
    row: usize,
    background: &CovariateFrame,
    m: usize,
    tau: f64,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    if background.n_rows() == 0 {
        return Err(Error::EmptyData(String::from(" (no background rows)")));
    }
    if m == 0 {
        return Err(Error::InvalidRequest(String::from(
            "at least one Monte-Carlo permutation is required",
        )));
    }
    if row >= frame.n_rows() {
        return Err(Error::InvalidRequest(format!(
            "row {row} out of range for a frame with {} rows",
            frame.n_rows()
        )));
    }
    if background.n_cols() != frame.n_cols() {
        return Err(Error::DimensionMismatch {
            context: "background columns vs explained frame",
            expected: frame.n_cols(),
            got: background.n_cols(),
        });
    }
    let p = frame.n_cols();
    // Virtual rows: for every draw, the background row followed by p rows in
    // which the explained values arrive one feature at a time.
    let mut from_explained: Vec<Vec<bool>> = Vec::with_capacity(m * (p + 1));
    let mut background_rows: Vec<usize> = Vec::with_capacity(m * (p + 1));
    let mut orders: Vec<Vec<usize>> = Vec::with_capacity(m);
    for _ in 0..m {
        let b = rng.gen_range(0..background.n_rows());
        let mut order: Vec<usize> = (0..p).collect();
        order.shuffle(rng);
        let mut taken = vec![false; p];
        from_explained.push(taken.clone());
        background_rows.push(b);
        for &j in &order {
            taken[j] = true;
            from_explained.push(taken.clone());
            background_rows.push(b);
        }
        orders.push(order);
    }
    let flat: Vec<bool> = (0..p)
        .flat_map(|j| from_explained.iter().map(move |t| t[j]))
        .collect();
    let columns: Result<Vec<CovariateColumn>> = (0..p)
        .map(|j| {
            let picks = &flat[j * from_explained.len()..(j + 1) * from_explained.len()];
            spliced_column(
                frame.column(j),
                row,
                background.column(j),
                picks,
                &background_rows,
            )
        })
        .collect();
    let virtual_frame = CovariateFrame::new(columns?)?;
    let predictions = model.predict_rmst(&virtual_frame, tau)?;
    let mut phi = vec![0.0; p];
    for (s, order) in orders.iter().enumerate() {
        let base = s * (p + 1);
        for (step, &j) in order.iter().enumerate() {
            phi[j] += predictions[base + step + 1] - predictions[base + step];
        }
    }
    for v in &mut phi {
        *v /= m as f64;
    }
    Ok(phi)
}

/// Base value for Shapley explanations: the mean prediction over the
/// background sample.
pub fn shapley_base(
    model: &dyn RmstPredictor,
    background: &CovariateFrame,
    tau: f64,
) -> Result<f64> {
    if background.n_rows() == 0 {
        return Err(Error::EmptyData(String::from(" (no background rows)")));
    }
    let preds = model.predict_rmst(background, tau)?;
    Ok(preds.iter().sum::<f64>() / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovariateColumn, CovariateFrame, SurvivalDataset};
    use crate::pipeline::MtryPolicy;
    use crate::rng::stream_rng;
    use rand_distr::{Distribution, Exp1, StandardNormal};

    /// Predicts the same value for every row.
    struct Constant(f64);

    impl RmstPredictor for Constant {
        fn predict_rmst(&self, frame: &CovariateFrame, _tau: f64) -> Result<Vec<f64>> {
            Ok(vec![self.0; frame.n_rows()])
        }
    }

    /// Additive toy predictor: sum of the first two continuous columns.
    struct Additive;

    impl RmstPredictor for Additive {
        fn predict_rmst(&self, frame: &CovariateFrame, _tau: f64) -> Result<Vec<f64>> {
            Ok((0..frame.n_rows())
                .map(|i| frame.column(0).numeric(i) + frame.column(1).numeric(i))
                .collect())
        }
    }

    fn plain_dataset(time: Vec<f64>, status: Vec<u8>) -> SurvivalDataset {
        let n = time.len();
        let frame = CovariateFrame::new(vec![CovariateColumn::continuous(
            "x",
            (0..n).map(|i| i as f64).collect(),
        )])
        .unwrap();
        SurvivalDataset::new(time, status, frame).unwrap()
    }

    #[test]
    fn mse_hand_values() {
        assert_eq!(mse_rmst(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let off = mse_rmst(&[1.5, 2.5], &[1.0, 2.0]).unwrap();
        assert!((off - 0.25).abs() < 1e-15);
        assert_eq!(mse_rmst(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(mse_rmst(&[1.0], &[1.0, 2.0]).is_err());
        // Swapping the sign of every error leaves the MSE unchanged.
        let a = mse_delta(&[1.0, -2.0], &[0.5, -1.0]).unwrap();
        let b = mse_delta(&[-1.0, 2.0], &[-0.5, 1.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ipc_weights_follow_the_formula() {
        // No censoring: Ĝ ≡ 1 and every weight is 1.
        let data = plain_dataset(vec![1.0, 2.0, 3.0, 4.0], vec![1, 1, 1, 1]);
        let g = censoring_curve(&data).unwrap();
        let w = ipc_weights(&data, 2.5, &g).unwrap();
        assert!(w.weights.iter().all(|&wi| wi == 1.0));

        // One row censored at t=1 among five at risk: Ĝ drops to 4/5, so an
        // event at t=2 is weighted 1/Ĝ(2⁻) = 1.25.  The row censored before
        // τ gets exactly 0.
        let data = plain_dataset(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![0, 1, 1, 1, 1]);
        let g = censoring_curve(&data).unwrap();
        let w = ipc_weights(&data, 4.5, &g).unwrap();
        assert_eq!(w.weights[0], 0.0);
        assert!((w.weights[1] - 1.25).abs() < 1e-12);
        // Row with T̃ > τ is weighted 1/Ĝ(τ) = 1.25 as well.
        assert!((w.weights[4] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn exhausted_censoring_support_is_an_error() {
        // Ĝ fitted on training data that is censored away entirely by t=2
        // cannot weight a test event at t=3.
        let train = plain_dataset(vec![1.0, 2.0], vec![0, 0]);
        let g = censoring_curve(&train).unwrap();
        let test = plain_dataset(vec![3.0, 3.5], vec![1, 1]);
        match ipc_weights(&test, 4.0, &g) {
            Err(Error::ZeroCensoringWeight { row }) => assert_eq!(row, 0),
            other => panic!("expected ZeroCensoringWeight, got {other:?}"),
        }
    }

    #[test]
    fn mean_weight_is_near_one_under_heavy_censoring() {
        // T ~ Exp(1), C ~ Exp(1): half the rows are censored, yet the
        // weights still average to about 1 by construction.
        let mut rng = stream_rng(41, &[stream::EVENT]);
        let n = 5000;
        let mut time = Vec::with_capacity(n);
        let mut status = Vec::with_capacity(n);
        for _ in 0..n {
            let t: f64 = Exp1.sample(&mut rng);
            let c: f64 = Exp1.sample(&mut rng);
            time.push(t.min(c));
            status.push(u8::from(t <= c));
        }
        let data = plain_dataset(time, status);
        let g = censoring_curve(&data).unwrap();
        let w = ipc_weights(&data, 1.0, &g).unwrap();
        let mean = w.weights.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean weight {mean}");
    }

    #[test]
    fn wrss_hand_values() {
        let data = plain_dataset(vec![1.0, 2.0, 3.0, 4.0], vec![1, 1, 1, 1]);
        let g = censoring_curve(&data).unwrap();
        let tau = 3.5;
        // A predictor that reproduces min(T̃, τ) exactly scores 0.
        let exact: Vec<f64> = data.time.iter().map(|&t| t.min(tau)).collect();
        assert_eq!(wrss_of_predictions(&data, &exact, tau, &g).unwrap(), 0.0);
        // A constant predictor scores the mean squared distance to min(T̃, τ).
        let c = 2.0;
        let expect = data
            .time
            .iter()
            .map(|&t| (t.min(tau) - c) * (t.min(tau) - c))
            .sum::<f64>()
            / 4.0;
        let got = wrss(&Constant(c), &data, tau, &g).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn censored_rows_before_tau_cannot_affect_wrss() {
        let data = plain_dataset(vec![1.0, 2.0, 3.0, 4.0], vec![1, 0, 1, 1]);
        let g = censoring_curve(&data).unwrap();
        let tau = 3.5;
        let mut a: Vec<f64> = data.time.iter().map(|&t| t.min(tau)).collect();
        let mut b = a.clone();
        a[1] = 0.0;
        b[1] = 1e6; // wildly different prediction for the censored row
        let wa = wrss_of_predictions(&data, &a, tau, &g).unwrap();
        let wb = wrss_of_predictions(&data, &b, tau, &g).unwrap();
        assert_eq!(wa, wb);
    }

    #[test]
    fn wrss_is_invariant_to_row_order_and_duplication() {
        let data = plain_dataset(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![1, 0, 1, 1, 0]);
        let g = censoring_curve(&data).unwrap();
        let tau = 4.2;
        let base = wrss(&Constant(2.0), &data, tau, &g).unwrap();
        let shuffled = data.select_rows(&[4, 2, 0, 1, 3]).unwrap();
        let doubled = data
            .select_rows(&[0, 1, 2, 3, 4, 0, 1, 2, 3, 4])
            .unwrap();
        let ws = wrss(&Constant(2.0), &shuffled, tau, &g).unwrap();
        let wd = wrss(&Constant(2.0), &doubled, tau, &g).unwrap();
        assert!((ws - base).abs() < 1e-15);
        assert!((wd - base).abs() < 1e-15);
    }

    #[test]
    fn ipc_weighting_recovers_the_uncensored_error() {
        // Oracle check of the weighting itself: with T ~ Exp(1) and an
        // independent censoring mechanism, the IPC-weighted squared error
        // against min(T̃, τ) must agree with the (here observable) squared
        // error computed from the latent uncensored times.
        let mut rng = stream_rng(7, &[stream::EVENT]);
        let n = 4000;
        let tau = 1.0;
        let mu = 1.0 - (-tau as f64).exp(); // true restricted mean
        let mut latent = Vec::with_capacity(n);
        let mut time = Vec::with_capacity(n);
        let mut status = Vec::with_capacity(n);
        for _ in 0..n {
            let t: f64 = Exp1.sample(&mut rng);
            let c: f64 = Exp1.sample(&mut rng);
            latent.push(t);
            time.push(t.min(c));
            status.push(u8::from(t <= c));
        }
        let data = plain_dataset(time, status);
        let g = censoring_curve(&data).unwrap();
        let weighted = wrss(&Constant(mu), &data, tau, &g).unwrap();
        let uncensored = latent
            .iter()
            .map(|&t| (t.min(tau) - mu) * (t.min(tau) - mu))
            .sum::<f64>()
            / n as f64;
        assert!(weighted > 0.0);
        assert!(
            (weighted - uncensored).abs() < 0.02,
            "weighted {weighted} vs uncensored {uncensored}"
        );
    }

    #[test]
    fn stratified_folds_balance_events() {
        let status: Vec<u8> = (0..20).map(|i| u8::from(i % 4 == 0)).collect(); // 5 events
        let mut rng = stream_rng(3, &[stream::FOLD]);
        let assignment = stratified_folds(&status, 5, &mut rng).unwrap();
        for fold in 0..5 {
            let events = (0..20)
                .filter(|&i| assignment[i] == fold && status[i] == 1)
                .count();
            assert_eq!(events, 1);
        }
        assert!(stratified_folds(&status, 1, &mut rng).is_err());
        assert!(stratified_folds(&status, 21, &mut rng).is_err());
    }

    fn synthetic_dataset(n: usize, seed: u64, censor: bool) -> SurvivalDataset {
        let mut rng = stream_rng(seed, &[stream::COVARIATE]);
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let trt: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.5))).collect();
        let mut time = Vec::with_capacity(n);
        let mut status = Vec::with_capacity(n);
        for i in 0..n {
            let e: f64 = Exp1.sample(&mut rng);
            let t = e * (0.8 * x[i]).exp();
            let c = if censor {
                let u: f64 = Exp1.sample(&mut rng);
                u * 1.2
            } else {
                f64::INFINITY
            };
            time.push(t.min(c).max(1e-6));
            status.push(u8::from(t <= c));
        }
        let frame = CovariateFrame::new(vec![
            CovariateColumn::continuous("x", x),
            CovariateColumn::continuous("z", z),
            CovariateColumn::binary("trt", trt),
        ])
        .unwrap();
        SurvivalDataset::with_treatment(time, status, frame, "trt").unwrap()
    }

    fn quick_settings() -> FitSettings {
        FitSettings {
            n_trees: 30,
            subsample_fraction: 0.632,
            n_permutations: 50,
            mtry: MtryPolicy::Fixed(2),
        }
    }

    #[test]
    fn cross_validation_runs_and_is_deterministic() {
        let data = synthetic_dataset(60, 11, true);
        let s = quick_settings();
        let a = cv_wrss(&data, ModelKind::Gee, &s, 5, 1.0, 99).unwrap();
        let b = cv_wrss(&data, ModelKind::Gee, &s, 5, 1.0, 99).unwrap();
        assert_eq!(a.fold_values, b.fold_values);
        assert_eq!(a.fold_values.len(), 5);
        assert!(a.min <= a.mean && a.mean <= a.max);

        let c = cv_contrast(&data, ModelKind::Gee, &s, 5, 1.0, "0", "1", 99).unwrap();
        assert_eq!(c.fold_values.len(), 5);
        assert!(c.min <= c.mean && c.mean <= c.max);
    }

    #[test]
    fn leave_one_out_runs_on_tiny_all_event_data() {
        let data = synthetic_dataset(12, 5, false);
        let s = quick_settings();
        let report = cv_wrss(&data, ModelKind::Gee, &s, 12, 0.8, 1).unwrap();
        assert_eq!(report.fold_values.len(), 12);
    }

    #[test]
    fn training_folds_without_events_are_rejected() {
        // A single event: whichever fold holds it leaves the other training
        // set event-free.
        let data = plain_dataset(
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![0, 0, 0, 0, 0, 1],
        );
        let err = cv_wrss(&data, ModelKind::Gee, &quick_settings(), 2, 2.0, 4).unwrap_err();
        assert!(matches!(err, Error::InvalidRequest(_)), "{err:?}");
    }

    #[test]
    fn unused_covariates_have_importance_exactly_one() {
        let data = synthetic_dataset(40, 21, true);
        let g = censoring_curve(&data).unwrap();
        let mut rng = stream_rng(8, &[stream::IMPORTANCE]);
        // A constant predictor uses nothing, so every ratio is exactly 1.
        let ratios = pfi(&Constant(0.7), &data, 1.0, &g, &mut rng).unwrap();
        assert_eq!(ratios, vec![1.0; 3]);
    }

    #[test]
    fn importance_separates_signal_from_noise() {
        // Forest fitted on data whose hazard depends only on x: permuting x
        // must hurt, permuting the pure-noise z must not.  Nodes are kept
        // large enough that the trees cannot chase noise into deep splits.
        use crate::forest::{fit_forest, ForestConfig, SplitAlgorithm};
        use crate::pseudo::pseudo_values_fast;
        let tau = 1.2;
        let mut worst_signal = f64::INFINITY;
        let mut z_lo = f64::INFINITY;
        let mut z_hi = f64::NEG_INFINITY;
        for seed in 0..10u64 {
            let data = synthetic_dataset(400, 100 + seed, false);
            let pseudo = pseudo_values_fast(&data, tau).unwrap();
            let config = ForestConfig {
                n_trees: 60,
                cart_min_split: 80,
                mtry: Some(2),
                algorithm: SplitAlgorithm::Cart,
                ..ForestConfig::default()
            };
            let model = fit_forest(&data.covariates, &pseudo, &config, seed).unwrap();
            let g = censoring_curve(&data).unwrap();
            let mut rng = stream_rng(seed, &[stream::IMPORTANCE]);
            let ratios = pfi(&model, &data, tau, &g, &mut rng).unwrap();
            worst_signal = worst_signal.min(ratios[0]);
            z_lo = z_lo.min(ratios[1]);
            z_hi = z_hi.max(ratios[1]);
        }
        assert!(worst_signal > 1.1, "signal importance {worst_signal}");
        assert!(
            z_lo > 0.9 && z_hi < 1.2,
            "noise importance range [{z_lo}, {z_hi}]"
        );
    }

    fn normal_frame(n: usize, seed: u64) -> CovariateFrame {
        let mut rng = stream_rng(seed, &[stream::SHAPLEY]);
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        CovariateFrame::new(vec![
            CovariateColumn::continuous("a", x),
            CovariateColumn::continuous("b", y),
        ])
        .unwrap()
    }

    #[test]
    fn shapley_of_an_ignored_input_is_zero() {
        let frame = normal_frame(20, 1);
        let background = normal_frame(15, 2);
        let mut rng = stream_rng(5, &[stream::SHAPLEY]);
        let phi = shapley_mc(&Constant(3.0), &frame, 0, &background, 50, 1.0, &mut rng).unwrap();
        assert_eq!(phi, vec![0.0, 0.0]);
    }

    #[test]
    fn additive_model_recovers_centred_contributions() {
        // For f(a, b) = a + b the Shapley value of `a` is exactly
        // a − mean(background a); the MC estimator sees a finite background
        // draw, so allow 3 standard errors of that mean.
        let frame = normal_frame(5, 3);
        let background = normal_frame(200, 4);
        let m = 400;
        let mut rng = stream_rng(6, &[stream::SHAPLEY]);
        let row = 2;
        let phi = shapley_mc(&Additive, &frame, row, &background, m, 1.0, &mut rng).unwrap();
        for (j, name) in ["a", "b"].iter().enumerate() {
            let col = background.by_name(name).unwrap();
            let vals: Vec<f64> = (0..background.n_rows()).map(|i| col.numeric(i)).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (vals.len() - 1) as f64;
            let se = (var / m as f64).sqrt();
            let exact = frame.column(j).numeric(row) - mean;
            assert!(
                (phi[j] - exact).abs() < 3.0 * se,
                "phi[{j}] = {}, exact {exact}, se {se}",
                phi[j]
            );
        }
    }

    #[test]
    fn shapley_values_reconstruct_the_prediction() {
        let frame = normal_frame(10, 7);
        let background = normal_frame(120, 8);
        let m = 300;
        let tau = 1.0;
        let mut rng = stream_rng(9, &[stream::SHAPLEY]);
        let row = 4;
        let phi = shapley_mc(&Additive, &frame, row, &background, m, tau, &mut rng).unwrap();
        let base = shapley_base(&Additive, &background, tau).unwrap();
        let f = Additive
            .predict_rmst(&frame, tau)
            .unwrap()[row];
        // MC error of the base-value term only; the telescoping sum itself
        // is exact.
        let preds = Additive.predict_rmst(&background, tau).unwrap();
        let mean = preds.iter().sum::<f64>() / preds.len() as f64;
        let var = preds.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (preds.len() - 1) as f64;
        let se = (var / m as f64).sqrt();
        let total: f64 = phi.iter().sum();
        assert!(
            (total + base - f).abs() < 3.0 * se,
            "sum {total} + base {base} vs f {f} (se {se})"
        );
    }

    #[test]
    fn mismatched_background_is_rejected() {
        let frame = normal_frame(5, 1);
        let background = CovariateFrame::new(vec![
            CovariateColumn::binary("a", vec![0, 1, 1]),
            CovariateColumn::continuous("b", vec![0.1, 0.2, 0.3]),
        ])
        .unwrap();
        let mut rng = stream_rng(2, &[stream::SHAPLEY]);
        assert!(shapley_mc(&Additive, &frame, 0, &background, 10, 1.0, &mut rng).is_err());
    }
}
