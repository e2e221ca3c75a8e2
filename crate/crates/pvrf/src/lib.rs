//! Pseudo-value random forests for restricted mean survival time regression.
//!
//! The restricted mean survival time (RMST) at a horizon τ,
//! `μ(τ) = E[min(T, τ)]`, is the area under the survival curve up to τ.  It
//! summarizes a survival distribution in time units and stays interpretable
//! when hazards are non-proportional.  This crate implements a two-stage
//! approach to modelling the RMST as a function of covariates:
//!
//! 1. **Pseudo-values** ([`pseudo`]): each individual's incomplete (possibly
//!    censored) outcome is replaced by a leave-one-out jackknife pseudo-value
//!    of the Kaplan-Meier RMST.  Pseudo-values have the same conditional
//!    expectation as `min(T, τ)` under covariate-independent censoring, so
//!    they can be fed to ordinary regression machinery.
//! 2. **Regression forests** ([`forest`]): regression trees on the
//!    pseudo-values, grown either with classical CART least-squares splitting
//!    or with conditional-inference splitting (permutation-test variable
//!    selection, which removes CART's bias towards many-valued covariates),
//!    aggregated into a subsampled random forest.
//!
//! Around that core the crate provides:
//!
//! * Kaplan-Meier curves, censoring-distribution estimates, and step-curve
//!   RMST integration ([`km`]);
//! * baseline regression models for comparison — GEE-style pseudo-value
//!   regression with identity or log link, Cox proportional hazards with
//!   Breslow baseline, a lognormal accelerated-failure-time model, and a
//!   stratified "oracle" Cox variant ([`baselines`]);
//! * covariate-adjusted treatment contrasts by g-computation
//!   ([`effects`]);
//! * a simulation harness with piecewise-constant (time-varying) covariate
//!   effects on the hazard ([`simulate`]);
//! * evaluation tooling: censoring-weighted residual sums of squares,
//!   cross-validation, permutation importance, and Monte-Carlo Shapley
//!   values ([`evaluate`]).
//!
//! Everything stochastic draws from explicitly derived random streams
//! ([`rng`]), so all results are reproducible bit-for-bit from a single seed
//! regardless of thread count.
//!
//! # Example
//!
//! ```
//! use pvrf::data::{CovariateColumn, CovariateFrame, SurvivalDataset};
//! use pvrf::forest::{fit_forest, ForestConfig, SplitAlgorithm};
//! use pvrf::pseudo::pseudo_values_fast;
//!
//! // A tiny dataset: follow-up time, event indicator, one covariate.
//! let x = CovariateColumn::continuous("x", vec![0.4, 1.1, 2.0, 2.9, 3.6, 4.2]);
//! let frame = CovariateFrame::new(vec![x]).unwrap();
//! let data = SurvivalDataset::new(
//!     vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
//!     vec![1, 1, 0, 1, 0, 1],
//!     frame,
//! )
//! .unwrap();
//!
//! // Stage 1: pseudo-values at τ = 4.
//! let theta = pseudo_values_fast(&data, 4.0).unwrap();
//!
//! // Stage 2: a (small) forest regressing pseudo-values on covariates.
//! let config = ForestConfig {
//!     n_trees: 25,
//!     algorithm: SplitAlgorithm::Cart,
//!     mtry: Some(1),
//!     ..ForestConfig::default()
//! };
//! let forest = fit_forest(&data.covariates, &theta, &config, 7).unwrap();
//! let predictions = forest.predict(&data.covariates).unwrap();
//! assert_eq!(predictions.len(), 6);
//! ```

pub mod baselines;
pub mod data;
pub mod effects;
pub mod error;
pub mod evaluate;
pub mod forest;
pub mod km;
pub mod numeric;
pub mod pipeline;
pub mod predictor;
pub mod pseudo;
pub mod rng;
pub mod simulate;

pub use error::{Error, ErrorClass, Result};

#[cfg(doctest)]
mod book;
