//! Collision-severity modelling: linear regression of collision speed with
//! exhaustive AIC subset selection and a collinearity guard, and injury risk
//! as a function of collision speed (ordered probit, with a binary logistic
//! alternative for sensitivity analysis).

mod irc;
mod speed;

pub use irc::{
    fit_logistic_irc, fit_logistic_level, fit_ordered_probit, InjuryLevel, InjuryRiskModel,
};
pub use speed::{
    fit_speed_model, intercept_only_model, predict_collision_speed, Covariate, DesignColumn,
    SpeedModel, SpeedPrediction,
};

use thiserror::Error;

use crate::domain::InjurySeverity;

#[derive(Debug, Error)]
pub enum SeverityError {
    #[error("only {n} collision cases available (need at least {needed}); fall back to the intercept-only model")]
    TooFewCollisions { n: usize, needed: usize },
    #[error("injury class {0} absent from the data")]
    MissingClass(InjurySeverity),
    #[error("perfect separation: {0}")]
    Separation(String),
    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: String, iterations: usize },
    #[error("no admissible covariate subset: {0}")]
    NoAdmissibleSubset(String),
}
