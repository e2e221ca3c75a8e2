//! One entry point for fitting any of the supported RMST models, shared by
//! the command-line tool, cross-validation, and the simulation benchmark.
//!
//! All regression-style models (forests and pseudo-value regressions) are
//! fitted to jackknife pseudo-values at the requested horizon; the
//! survival-scale models (Cox, lognormal) are fitted to the raw censored
//! outcomes and integrated when predicting.  Every model family except the
//! stratified benchmark form is constructible here from data alone; that one
//! needs to be told the true model structure and is assembled by its caller.

use serde::{Deserialize, Serialize};

use crate::baselines::{
    fit_cox, fit_gee, fit_lognormal, main_effect_terms, build_design, CoxModel, GeeModel, Link,
    LognormalAft, ReferenceModel,
};
use crate::data::{CovariateFrame, SurvivalDataset};
use crate::error::{Error, Result};
use crate::forest::{
    default_mtry_grid, fit_forest, tune_mtry, ForestConfig, ForestModel, SplitAlgorithm,
};
use crate::predictor::RmstPredictor;
use crate::pseudo::pseudo_values_fast;

/// The model families a user can request by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    ForestCart,
    ForestCond,
    Gee,
    GeeLog,
    Cox,
    Lognormal,
    /// Pooled Kaplan-Meier RMST of the training sample, predicted for every
    /// row.  A covariate-blind null baseline.
    PooledKm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::ForestCart,
        ModelKind::ForestCond,
        ModelKind::Gee,
        ModelKind::GeeLog,
        ModelKind::Cox,
        ModelKind::Lognormal,
        ModelKind::PooledKm,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::ForestCart => "forest-cart",
            ModelKind::ForestCond => "forest-cond",
            ModelKind::Gee => "gee",
            ModelKind::GeeLog => "gee-log",
            ModelKind::Cox => "cox",
            ModelKind::Lognormal => "lognormal",
            ModelKind::PooledKm => "pooled-km",
        }
    }

    pub fn parse(s: &str) -> Result<ModelKind> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| {
                Error::InvalidRequest(format!(
                    "unknown model {s:?}; expected one of forest-cart, forest-cond, gee, \
                     gee-log, cox, lognormal, pooled-km"
                ))
            })
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// How the number of candidate split variables is chosen for forests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MtryPolicy {
    /// ⌊√p⌋.
    Default,
    /// A fixed value.
    Fixed(usize),
    /// Cross-validated over {√p, p/4, p/2, p}.
    Tune { folds: usize },
}

/// Fitting knobs that apply across model families (only forests consume
/// them today, but they travel with every fit request).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub n_trees: usize,
    pub subsample_fraction: f64,
    /// Monte-Carlo permutations per variable-selection test
    /// (conditional forests only).
    pub n_permutations: usize,
    pub mtry: MtryPolicy,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            n_trees: 500,
            subsample_fraction: 0.632,
            n_permutations: 1000,
            mtry: MtryPolicy::Default,
        }
    }
}

/// Any fitted model, ready to predict restricted means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FittedModel {
    Forest(ForestModel),
    Gee(GeeModel),
    Cox(CoxModel),
    Lognormal(LognormalAft),
    Reference(ReferenceModel),
    PooledKm { tau: f64, value: f64 },
}

impl FittedModel {
    /// The requestable name of this model's family.
    pub fn label(&self) -> &'static str {
        match self {
            FittedModel::Forest(m) => match m.config.algorithm {
                SplitAlgorithm::Cart => "forest-cart",
                SplitAlgorithm::Conditional => "forest-cond",
            },
            FittedModel::Gee(m) => match m.link {
                Link::Identity => "gee",
                Link::Log => "gee-log",
            },
            FittedModel::Cox(_) => "cox",
            FittedModel::Lognormal(_) => "lognormal",
            FittedModel::Reference(_) => "reference",
            FittedModel::PooledKm { .. } => "pooled-km",
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<FittedModel> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<FittedModel> {
        FittedModel::from_json(&std::fs::read_to_string(path)?)
    }
}

impl RmstPredictor for FittedModel {
    fn predict_rmst(&self, frame: &CovariateFrame, tau: f64) -> Result<Vec<f64>> {
        match self {
            FittedModel::Forest(m) => m.predict_rmst(frame, tau),
            FittedModel::Gee(m) => m.predict_rmst(frame, tau),
            FittedModel::Cox(m) => m.predict_rmst(frame, tau),
            FittedModel::Lognormal(m) => m.predict_rmst(frame, tau),
            FittedModel::Reference(m) => m.predict_rmst(frame, tau),
            FittedModel::PooledKm { tau: fitted, value } => {
                crate::predictor::require_horizon(*fitted, tau)?;
                Ok(vec![*value; frame.n_rows()])
            }
        }
    }
}

/// Fit `kind` on `data` at horizon `tau`.
///
/// Pseudo-value models (forests and GEE) regress jackknife pseudo-values
/// computed at `tau` on the full covariate frame; Cox and lognormal are
/// fitted once on the censored outcomes with main effects of every
/// covariate, so the same fitted object serves any horizon.
pub fn fit_model(
    kind: ModelKind,
    data: &SurvivalDataset,
    tau: f64,
    settings: &FitSettings,
    seed: u64,
) -> Result<FittedModel> {
    let frame = &data.covariates;
    match kind {
        ModelKind::ForestCart | ModelKind::ForestCond => {
            let theta = pseudo_values_fast(data, tau)?;
            let algorithm = if kind == ModelKind::ForestCart {
                SplitAlgorithm::Cart
            } else {
                SplitAlgorithm::Conditional
            };
            let mut config = ForestConfig {
                n_trees: settings.n_trees,
                subsample_fraction: settings.subsample_fraction,
                n_permutations: settings.n_permutations,
                algorithm,
                ..ForestConfig::default()
            };
            config.mtry = match settings.mtry {
                MtryPolicy::Default => None,
                MtryPolicy::Fixed(m) => Some(m),
                MtryPolicy::Tune { folds } => Some(tune_mtry(
                    frame,
                    &theta,
                    &config,
                    &default_mtry_grid(frame.n_cols()),
                    folds,
                    seed,
                )?),
            };
            Ok(FittedModel::Forest(fit_forest(frame, &theta, &config, seed)?))
        }
        ModelKind::Gee | ModelKind::GeeLog => {
            let theta = pseudo_values_fast(data, tau)?;
            let design = build_design(frame, &main_effect_terms(frame, true))?;
            let link = if kind == ModelKind::Gee {
                Link::Identity
            } else {
                Link::Log
            };
            Ok(FittedModel::Gee(fit_gee(&theta, &design, link)?))
        }
        ModelKind::Cox => {
            let design = build_design(frame, &main_effect_terms(frame, false))?;
            Ok(FittedModel::Cox(fit_cox(data, &design)?))
        }
        ModelKind::Lognormal => {
            let design = build_design(frame, &main_effect_terms(frame, true))?;
            Ok(FittedModel::Lognormal(fit_lognormal(data, &design)?))
        }
        ModelKind::PooledKm => {
            let curve = crate::km::km_curve(&data.time, &data.status)?;
            let value = crate::km::rmst_from_curve(&curve, tau)?.value;
            Ok(FittedModel::PooledKm { tau, value })
        }
    }
}
