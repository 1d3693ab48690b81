//! Prospective safety-benefit assessment of autonomous emergency braking and
//! steering systems (AEBSS) protecting cyclists and pedestrians.
//!
//! The crate combines counterfactual crash simulation with sparse physical
//! test results through conjugate Bayesian updating, propagates the combined
//! avoidance estimate through dose-response injury modelling, extrapolates
//! in-depth reductions to a target region with a classification tree, and
//! scales the result by market penetration and user acceptance.
//!
//! Pipeline stages map onto the modules below:
//!
//! * [`domain`] — crash / test / person data model and CSV ingestion.
//! * [`sim`] — synthetic scenario generation and kinematic counterfactual
//!   re-simulation under four intervention algorithms.
//! * [`avoidance`] — per-speed Beta priors, weighted conjugate updates,
//!   quantile extraction and avoidance-curve fitting.
//! * [`severity`] — collision-speed regression with AIC subset selection and
//!   ordered-probit / logistic injury risk models.
//! * [`benefit`] — dose-response casualty estimation, Monte Carlo cross-check
//!   and deployment scaling.
//! * [`extrapolation`] — CART tree, per-node extrapolation factors and
//!   target-region reduction.
//! * [`pipeline`] — configuration, orchestration and run manifests behind the
//!   `vru-benefit` CLI.

#![forbid(unsafe_code)]

pub mod avoidance;
pub mod benefit;
pub mod domain;
pub mod extrapolation;
pub mod numeric;
pub mod pipeline;
pub mod rng;
pub mod severity;
pub mod sim;
