//! The benchmark proportional-hazards model specified to match the data-
//! generating process: only the informative main effects and interactions
//! enter the design, and a time-varying treatment effect is accommodated by
//! stratifying the baseline hazard on treatment crossed with before/after a
//! transition time.  Within each stratum the hazard is proportional, and a
//! subject's survival curve chains the pre-period and post-period strata at
//! the transition.

use serde::{Deserialize, Serialize};

use crate::baselines::cox::{fit_cox_episodes, segmented_rmst, CoxModel};
use crate::baselines::design::{build_design, Term};
use crate::baselines::RmstPrediction;
use crate::data::{split_episodes, stratum_label, whole_follow_up, CovariateFrame, SurvivalDataset};
use crate::error::Result;

/// Which terms the benchmark model includes, and how it treats treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    /// Informative main-effect columns (excluding the treatment).
    pub mains: Vec<String>,
    /// Informative pairwise interactions.
    pub products: Vec<(String, String)>,
    /// Treatment column name.
    pub treatment: String,
    /// `Some(t0)`: the treatment effect changes at t0, so treatment enters
    /// as a time-varying stratification variable instead of a coefficient.
    pub time_varying: Option<f64>,
}

/// A fitted benchmark model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub cox: CoxModel,
    pub treatment: String,
    /// Transition time when the model is stratified.
    pub cut: Option<f64>,
}

fn effect_terms(spec: &ReferenceSpec) -> Vec<Term> {
    let mut terms: Vec<Term> = spec.mains.iter().cloned().map(Term::Main).collect();
    for (a, b) in &spec.products {
        terms.push(Term::Product(a.clone(), b.clone()));
    }
    terms
}

/// Fit the benchmark model on a survival dataset.
pub fn fit_reference(data: &SurvivalDataset, spec: &ReferenceSpec) -> Result<ReferenceModel> {
    data.covariates.index_of(&spec.treatment)?;
    let mut terms = effect_terms(spec);
    let episodes = match spec.time_varying {
        // Time-constant effect: ordinary Cox with treatment as a main effect.
        None => {
            terms.push(Term::Main(spec.treatment.clone()));
            whole_follow_up(data)
        }
        // Time-varying effect: stratify on treatment × before/after t0; the
        // treatment main effect is absorbed into the stratum baselines.
        Some(cut) => split_episodes(data, cut, &spec.treatment)?,
    };
    let design = build_design(&episodes.covariates, &terms)?;
    let cox = fit_cox_episodes(&episodes, &design)?;
    Ok(ReferenceModel {
        cox,
        treatment: spec.treatment.clone(),
        cut: spec.time_varying,
    })
}

/// Per-row restricted means.  For the stratified form, each row follows its
/// treatment's pre-period baseline up to the transition and its post-period
/// baseline afterwards, hazard accumulating across the switch.
pub fn reference_rmst(
    model: &ReferenceModel,
    frame: &CovariateFrame,
    tau: f64,
) -> Result<Vec<RmstPrediction>> {
    let design = build_design(frame, &model.cox.terms)?;
    let risks = model.cox.risk_scores(&design)?;
    let column = &frame.columns()[frame.index_of(&model.treatment)?];

    (0..frame.n_rows())
        .map(|i| {
            let level = column.display(i);
            match model.cut {
                None => {
                    let baseline = model.cox.baseline("")?;
                    segmented_rmst(&[(baseline, f64::INFINITY)], risks[i], tau)
                }
                Some(cut) if tau <= cut => {
                    let pre = model.cox.baseline(&stratum_label(&level, false))?;
                    segmented_rmst(&[(pre, f64::INFINITY)], risks[i], tau)
                }
                Some(cut) => {
                    let pre = model.cox.baseline(&stratum_label(&level, false))?;
                    let post = model.cox.baseline(&stratum_label(&level, true))?;
                    segmented_rmst(&[(pre, cut), (post, f64::INFINITY)], risks[i], tau)
                }
            }
        })
        .collect()
}
