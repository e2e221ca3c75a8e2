//! A common prediction interface over every fitted RMST model.
//!
//! Treatment contrasts ([`crate::effects`]), cross-validation, and the
//! simulation benchmark all need one thing from a fitted model: restricted
//! means for the rows of a covariate frame.  [`RmstPredictor`] is that
//! surface.  Models fitted at a fixed horizon (forests, pseudo-value
//! regressions) reject other horizons; survival-scale models (Cox,
//! lognormal) integrate their curves to whichever τ is requested.

use crate::baselines::{
    cox_rmst, lognormal_rmst, predict_gee, reference_rmst, CoxModel, GeeModel, LognormalAft,
    ReferenceModel,
};
use crate::data::CovariateFrame;
use crate::error::{Error, Result};
use crate::forest::ForestModel;

/// Restricted-mean predictions for each row of a covariate frame.
///
/// `Send + Sync` so that fitted models can be scored from parallel workers
/// (cross-validation folds, importance permutations).
pub trait RmstPredictor: Send + Sync {
    fn predict_rmst(&self, frame: &CovariateFrame, tau: f64) -> Result<Vec<f64>>;
}

pub(crate) fn require_horizon(fitted: f64, requested: f64) -> Result<()> {
    if (requested - fitted).abs() > 1e-12 * fitted.abs().max(1.0) {
        return Err(Error::InvalidRequest(format!(
            "model was fitted at horizon {fitted}, cannot predict at {requested}"
        )));
    }
    Ok(())
}

impl RmstPredictor for ForestModel {
    fn predict_rmst(&self, frame: &CovariateFrame, tau: f64) -> Result<Vec<f64>> {
        require_horizon(self.tau, tau)?;
        self.predict(frame)
    }
}

impl RmstPredictor for GeeModel {
    fn predict_rmst(&self, frame: &CovariateFrame, tau: f64) -> Result<Vec<f64>> {
        Ok(predict_gee(self, frame, tau)?
            .into_iter()
            .map(|p| p.value)
            .collect())
    }
}

impl RmstPredictor for CoxModel {
    fn predict_rmst(&self, frame: &CovariateFrame, tau: f64) -> Result<Vec<f64>> {
        Ok(cox_rmst(self, frame, tau)?
            .into_iter()
            .map(|p| p.value)
            .collect())
    }
}

impl RmstPredictor for ReferenceModel {
    fn predict_rmst(&self, frame: &CovariateFrame, tau: f64) -> Result<Vec<f64>> {
        Ok(reference_rmst(self, frame, tau)?
            .into_iter()
            .map(|p| p.value)
            .collect())
    }
}

impl RmstPredictor for LognormalAft {
    fn predict_rmst(&self, frame: &CovariateFrame, tau: f64) -> Result<Vec<f64>> {
        Ok(lognormal_rmst(self, frame, tau)?
            .into_iter()
            .map(|p| p.value)
            .collect())
    }
}
