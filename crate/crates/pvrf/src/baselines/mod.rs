//! Comparison estimators: pseudo-value regression with a linear predictor
//! (identity and log links), Cox proportional hazards on counting-process
//! episodes, the stratified benchmark form of the Cox model, and a
//! lognormal accelerated-failure-time model.  Each exposes restricted-mean
//! predictions so all estimators can be evaluated on the same footing as
//! the forests.

pub mod cox;
pub mod design;
pub mod gee;
pub mod lognormal;
pub mod reference;

pub use cox::{cox_rmst, fit_cox, fit_cox_episodes, segmented_rmst, CoxModel, StratumBaseline};
pub use design::{build_design, least_squares, main_effect_terms, Design, Term};
pub use gee::{fit_gee, predict_gee, GeeModel, Link};
pub use lognormal::{fit_lognormal, lognormal_rmst, LognormalAft};
pub use reference::{fit_reference, reference_rmst, ReferenceModel, ReferenceSpec};

use serde::{Deserialize, Serialize};

/// One model-based restricted-mean prediction.
///
/// `flagged` marks values that should be read with care: a linear-link
/// prediction falling outside [0, τ], or a hazard-based prediction whose
/// horizon lies beyond the last observed event (extend-last extrapolation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmstPrediction {
    pub value: f64,
    pub tau: f64,
    pub flagged: bool,
}
