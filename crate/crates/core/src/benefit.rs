//! Dose-response estimation of expected casualties with and without the
//! assessed system, posterior benefit with 90% bounds, a Monte Carlo
//! cross-check and deployment scaling.
//!
//! Expected casualties are E(N) = Σ_v f(v)·r(v) over integer collision
//! speeds, where f is the crash frequency function and r the injury risk.
//! The system transforms f into f_new(v) = Σ_c (1−p(c))·1{ṽ(c)=v}: each
//! crash contributes its non-avoidance probability at its predicted
//! collision speed.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::avoidance::{AvoidanceCurve, Bound};
use crate::domain::{CrashRecord, UseCase};
use crate::rng::stream;
use crate::severity::{predict_collision_speed, InjuryLevel, InjuryRiskModel, SpeedModel};
use crate::sim::Algorithm;

#[derive(Debug, Error)]
pub enum BenefitError {
    #[error("zero baseline casualties for {scope} / {level}: nothing to reduce")]
    ZeroBaseline { scope: String, level: InjuryLevel },
}

/// Crash frequency over integer collision speeds (km/h). Real-valued masses:
/// the transformed frequency deposits non-avoidance probabilities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrequencyFunction {
    counts: BTreeMap<i32, f64>,
}

impl FrequencyFunction {
    pub fn add(&mut self, speed: i32, mass: f64) {
        if mass != 0.0 {
            *self.counts.entry(speed.max(0)).or_insert(0.0) += mass;
        }
    }

    pub fn value(&self, speed: i32) -> f64 {
        self.counts.get(&speed).copied().unwrap_or(0.0)
    }

    /// Largest speed with positive mass, or None for an all-zero function.
    pub fn max_speed(&self) -> Option<i32> {
        self.counts
            .iter()
            .rev()
            .find(|(_, m)| **m > 0.0)
            .map(|(v, _)| *v)
    }

    pub fn total_mass(&self) -> f64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.counts.iter().map(|(v, m)| (*v, *m))
    }
}

/// Histogram of original collision speeds, rounded to integers.
pub fn original_frequency(crashes: &[CrashRecord]) -> FrequencyFunction {
    let mut f = FrequencyFunction::default();
    for crash in crashes {
        f.add(crash.original_collision_speed.round() as i32, 1.0);
    }
    f
}

/// Which avoidance-curve / speed-interval pairing to propagate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencyVariant {
    /// Median curve with the point speed prediction.
    Point,
    /// Lower avoidance curve with the high end of the speed interval.
    Pessimistic,
    /// Upper avoidance curve with the low end of the speed interval.
    Optimistic,
}

/// Transformed crash frequency under the assessed system.
pub fn transformed_frequency(
    crashes: &[CrashRecord],
    curve: &AvoidanceCurve,
    model: &SpeedModel,
    variant: FrequencyVariant,
) -> FrequencyFunction {
    let mut f = FrequencyFunction::default();
    for crash in crashes {
        let (p, v) = crash_contribution(crash, curve, model, variant);
        f.add(v, 1.0 - p);
    }
    f
}

/// (avoidance probability, predicted integer collision speed) for one crash.
fn crash_contribution(
    crash: &CrashRecord,
    curve: &AvoidanceCurve,
    model: &SpeedModel,
    variant: FrequencyVariant,
) -> (f64, i32) {
    let pred = predict_collision_speed(model, crash);
    match variant {
        FrequencyVariant::Point => (
            curve.evaluate(Bound::Median, crash.car_speed_init),
            pred.point,
        ),
        FrequencyVariant::Pessimistic => (
            curve.evaluate(Bound::Lower, crash.car_speed_init),
            pred.interval_90.1.round() as i32,
        ),
        FrequencyVariant::Optimistic => (
            curve.evaluate(Bound::Upper, crash.car_speed_init),
            pred.interval_90.0.round() as i32,
        ),
    }
}

/// E(N): expected casualties of the given level under frequency `f`.
pub fn expected_casualties(
    f: &FrequencyFunction,
    irc: &InjuryRiskModel,
    level: InjuryLevel,
) -> f64 {
    f.iter()
        .map(|(v, mass)| mass * irc.risk(level, v as f64))
        .sum()
}

/// What a benefit estimate covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenefitScope {
    UseCase(UseCase),
    Total,
    TotalCyclist,
    TotalPedestrian,
}

impl std::fmt::Display for BenefitScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BenefitScope::UseCase(uc) => write!(f, "{uc}"),
            BenefitScope::Total => f.write_str("Total"),
            BenefitScope::TotalCyclist => f.write_str("TotalCyclist"),
            BenefitScope::TotalPedestrian => f.write_str("TotalPedestrian"),
        }
    }
}

/// Casualty reduction for one scope, algorithm and injury level.
#[derive(Debug, Clone, PartialEq)]
pub struct BenefitEstimate {
    pub scope: BenefitScope,
    pub algorithm: Algorithm,
    pub level: InjuryLevel,
    pub e_orig: f64,
    pub e_new: f64,
    /// E(N) under the pessimistic pairing (upper bound on e_new).
    pub e_new_pessimistic: f64,
    /// E(N) under the optimistic pairing (lower bound on e_new).
    pub e_new_optimistic: f64,
    pub reduction_pct: f64,
    /// (low, high) 90% bounds on the reduction percentage.
    pub bounds_90: (f64, f64),
}

fn reduction_pct(e_orig: f64, e_new: f64) -> f64 {
    100.0 * (1.0 - e_new / e_orig)
}

/// Posterior benefit for one use case: expected casualties with and without
/// the system, with bounds from the pessimistic/optimistic frequencies.
pub fn posterior_benefit(
    crashes: &[CrashRecord],
    curve: &AvoidanceCurve,
    model: &SpeedModel,
    irc: &InjuryRiskModel,
    level: InjuryLevel,
    use_case: UseCase,
    algorithm: Algorithm,
) -> Result<BenefitEstimate, BenefitError> {
    let e_orig = expected_casualties(&original_frequency(crashes), irc, level);
    if e_orig <= 0.0 {
        return Err(BenefitError::ZeroBaseline {
            scope: use_case.to_string(),
            level,
        });
    }
    let e_new = expected_casualties(
        &transformed_frequency(crashes, curve, model, FrequencyVariant::Point),
        irc,
        level,
    );
    let e_pess = expected_casualties(
        &transformed_frequency(crashes, curve, model, FrequencyVariant::Pessimistic),
        irc,
        level,
    );
    let e_opt = expected_casualties(
        &transformed_frequency(crashes, curve, model, FrequencyVariant::Optimistic),
        irc,
        level,
    );
    Ok(BenefitEstimate {
        scope: BenefitScope::UseCase(use_case),
        algorithm,
        level,
        e_orig,
        e_new,
        e_new_pessimistic: e_pess,
        e_new_optimistic: e_opt,
        reduction_pct: reduction_pct(e_orig, e_new),
        bounds_90: (reduction_pct(e_orig, e_pess), reduction_pct(e_orig, e_opt)),
    })
}

/// Aggregate per-use-case estimates by summing expected counts before
/// forming percentages (percent-averaging is not additive).
pub fn aggregate_benefit(
    estimates: &[&BenefitEstimate],
    scope: BenefitScope,
    algorithm: Algorithm,
    level: InjuryLevel,
) -> Result<BenefitEstimate, BenefitError> {
    let e_orig: f64 = estimates.iter().map(|e| e.e_orig).sum();
    if e_orig <= 0.0 {
        return Err(BenefitError::ZeroBaseline {
            scope: scope.to_string(),
            level,
        });
    }
    let e_new: f64 = estimates.iter().map(|e| e.e_new).sum();
    let e_pess: f64 = estimates.iter().map(|e| e.e_new_pessimistic).sum();
    let e_opt: f64 = estimates.iter().map(|e| e.e_new_optimistic).sum();
    Ok(BenefitEstimate {
        scope,
        algorithm,
        level,
        e_orig,
        e_new,
        e_new_pessimistic: e_pess,
        e_new_optimistic: e_opt,
        reduction_pct: reduction_pct(e_orig, e_new),
        bounds_90: (reduction_pct(e_orig, e_pess), reduction_pct(e_orig, e_opt)),
    })
}

/// Stochastic cross-check of the deterministic dose-response computation:
/// per draw each crash is avoided with probability p(c), otherwise it
/// contributes r(ṽ(c)). Returns the sample mean and standard error of the
/// total casualties over `draws` independently seeded draws; the estimator's
/// expectation equals the deterministic E(N) under the transformed
/// frequency.
pub fn monte_carlo_benefit(
    crashes: &[CrashRecord],
    curve: &AvoidanceCurve,
    model: &SpeedModel,
    irc: &InjuryRiskModel,
    level: InjuryLevel,
    draws: usize,
    seed: u64,
) -> (f64, f64) {
    assert!(draws >= 1, "need at least one draw");
    let contributions: Vec<(f64, f64)> = crashes
        .iter()
        .map(|crash| {
            let (p, v) = crash_contribution(crash, curve, model, FrequencyVariant::Point);
            (p, irc.risk(level, v as f64))
        })
        .collect();
    let totals: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|draw| {
            let mut rng = stream(seed, "monte-carlo", draw as u64);
            contributions
                .iter()
                .map(|(p, r)| if rng.gen::<f64>() < *p { 0.0 } else { *r })
                .sum::<f64>()
        })
        .collect();
    let n = draws as f64;
    let mean = totals.iter().sum::<f64>() / n;
    if draws == 1 {
        return (mean, 0.0);
    }
    let var = totals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Deployment adjustment: market penetration (share of equipped vehicles)
/// and user acceptance (probability an equipped system is active).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeploymentParams {
    pub market_penetration: f64,
    pub user_acceptance: f64,
}

impl DeploymentParams {
    pub fn validate(&self) -> Result<(), String> {
        let ok = |x: f64| x > 0.0 && x <= 1.0;
        if !ok(self.market_penetration) {
            return Err(format!(
                "market_penetration must be in (0,1], got {}",
                self.market_penetration
            ));
        }
        if !ok(self.user_acceptance) {
            return Err(format!(
                "user_acceptance must be in (0,1], got {}",
                self.user_acceptance
            ));
        }
        Ok(())
    }

    pub fn factor(&self) -> f64 {
        self.user_acceptance * self.market_penetration
    }
}

/// Linear deployment scaling: benefit × user acceptance × market penetration.
pub fn scale_benefit(max_benefit: f64, params: DeploymentParams) -> f64 {
    params.factor() * max_benefit
}
