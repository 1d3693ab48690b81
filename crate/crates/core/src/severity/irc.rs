//! Injury risk curves: the probability of sustaining at least a given injury
//! severity as a function of collision speed.
//!
//! The primary model is an ordered probit over Slight < Serious < Fatal with
//! the collision speed as the single predictor: P(Slight) = Φ(τ₁ − βv),
//! P(≤ Serious) = Φ(τ₂ − βv), P(Fatal) = 1 − Φ(τ₂ − βv). Threshold ordering
//! is guaranteed by fitting τ₂ = τ₁ + exp(δ). A per-level binary logistic
//! model serves as the sensitivity-analysis alternative.

use nalgebra::{DMatrix, DVector};

use crate::domain::{InjurySeverity, PersonRecord, VruType};
use crate::numeric::{inverse_phi, phi, phi_density, sigmoid};

use super::SeverityError;

const PROBIT_GRAD_TOL: f64 = 1e-8;
const PROBIT_MAX_ITER: usize = 200;
const IRLS_TOL: f64 = 1e-10;
const IRLS_MAX_ITER: usize = 100;
/// A slope this large from km/h data means the optimizer is chasing
/// separated classes.
const SEPARATION_SLOPE: f64 = 1e3;

/// Injury levels the dose-response assessment distinguishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InjuryLevel {
    SeriousOrWorse,
    Fatal,
}

impl std::fmt::Display for InjuryLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InjuryLevel::SeriousOrWorse => f.write_str("SeriousOrWorse"),
            InjuryLevel::Fatal => f.write_str("Fatal"),
        }
    }
}

/// Fitted injury risk model for one VRU type.
#[derive(Debug, Clone, PartialEq)]
pub enum InjuryRiskModel {
    OrderedProbit {
        vru_type: VruType,
        /// Per-(km/h) slope.
        beta: f64,
        tau1: f64,
        tau2: f64,
        /// Standard errors of (β, τ₁, τ₂) from the observed information.
        se: [f64; 3],
        log_lik: f64,
        aic: f64,
        /// A fitted β < 0 would make risk decrease with speed; it is
        /// reported, not corrected.
        negative_slope: bool,
    },
    Logistic {
        vru_type: VruType,
        /// (β₀, β₁) of P(Serious-or-worse | v) = σ(β₀ + β₁v).
        serious: (f64, f64),
        /// (β₀, β₁) of P(Fatal | v).
        fatal: (f64, f64),
        log_lik: f64,
        aic: f64,
        negative_slope: bool,
    },
}

impl InjuryRiskModel {
    pub fn vru_type(&self) -> VruType {
        match self {
            InjuryRiskModel::OrderedProbit { vru_type, .. } => *vru_type,
            InjuryRiskModel::Logistic { vru_type, .. } => *vru_type,
        }
    }

    pub fn log_lik(&self) -> f64 {
        match self {
            InjuryRiskModel::OrderedProbit { log_lik, .. } => *log_lik,
            InjuryRiskModel::Logistic { log_lik, .. } => *log_lik,
        }
    }

    pub fn aic(&self) -> f64 {
        match self {
            InjuryRiskModel::OrderedProbit { aic, .. } => *aic,
            InjuryRiskModel::Logistic { aic, .. } => *aic,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            InjuryRiskModel::OrderedProbit { .. } => "OrderedProbit",
            InjuryRiskModel::Logistic { .. } => "Logistic",
        }
    }

    /// Risk r(v) of at least the given severity at collision speed `v` km/h.
    pub fn risk(&self, level: InjuryLevel, v: f64) -> f64 {
        match self {
            InjuryRiskModel::OrderedProbit {
                beta, tau1, tau2, ..
            } => match level {
                InjuryLevel::Fatal => 1.0 - phi(tau2 - beta * v),
                InjuryLevel::SeriousOrWorse => 1.0 - phi(tau1 - beta * v),
            },
            InjuryRiskModel::Logistic { serious, fatal, .. } => {
                let (b0, b1) = match level {
                    InjuryLevel::SeriousOrWorse => *serious,
                    InjuryLevel::Fatal => *fatal,
                };
                sigmoid(b0 + b1 * v)
            }
        }
    }

    /// Ordered-probit class probabilities (Slight, Serious, Fatal) at `v`.
    /// Sums to 1 by construction.
    pub fn class_probabilities(&self, v: f64) -> Option<[f64; 3]> {
        match self {
            InjuryRiskModel::OrderedProbit {
                beta, tau1, tau2, ..
            } => {
                let p1 = phi(tau1 - beta * v);
                let p12 = phi(tau2 - beta * v);
                Some([p1, p12 - p1, 1.0 - p12])
            }
            InjuryRiskModel::Logistic { .. } => None,
        }
    }
}

fn check_classes(persons: &[PersonRecord]) -> Result<(), SeverityError> {
    for class in [
        InjurySeverity::Slight,
        InjurySeverity::Serious,
        InjurySeverity::Fatal,
    ] {
        if !persons.iter().any(|p| p.injury == class) {
            return Err(SeverityError::MissingClass(class));
        }
    }
    Ok(())
}

/// Log-likelihood of ordered-probit parameters θ = (β, τ₁, δ).
fn probit_loglik(data: &[(f64, InjurySeverity)], theta: &[f64; 3]) -> f64 {
    let (beta, tau1, delta) = (theta[0], theta[1], theta[2]);
    let tau2 = tau1 + delta.exp();
    let mut ll = 0.0;
    for &(v, class) in data {
        let z1 = tau1 - beta * v;
        let z2 = tau2 - beta * v;
        let p = match class {
            InjurySeverity::Slight => phi(z1),
            InjurySeverity::Serious => phi(z2) - phi(z1),
            InjurySeverity::Fatal => 1.0 - phi(z2),
        };
        ll += p.max(1e-300).ln();
    }
    ll
}

/// Analytic score vector ∂ℓ/∂(β, τ₁, δ).
pub(crate) fn probit_score(data: &[(f64, InjurySeverity)], theta: &[f64; 3]) -> [f64; 3] {
    let (beta, tau1, delta) = (theta[0], theta[1], theta[2]);
    let e_delta = delta.exp();
    let tau2 = tau1 + e_delta;
    let mut g = [0.0_f64; 3];
    for &(v, class) in data {
        let z1 = tau1 - beta * v;
        let z2 = tau2 - beta * v;
        let d1 = phi_density(z1);
        let d2 = phi_density(z2);
        match class {
            InjurySeverity::Slight => {
                let p = phi(z1).max(1e-300);
                g[0] += -v * d1 / p;
                g[1] += d1 / p;
            }
            InjurySeverity::Serious => {
                let p = (phi(z2) - phi(z1)).max(1e-300);
                g[0] += -v * (d2 - d1) / p;
                g[1] += (d2 - d1) / p;
                g[2] += e_delta * d2 / p;
            }
            InjurySeverity::Fatal => {
                let p = (1.0 - phi(z2)).max(1e-300);
                g[0] += v * d2 / p;
                g[1] += -d2 / p;
                g[2] += -e_delta * d2 / p;
            }
        }
    }
    g
}

/// Hessian by central finite differences of the analytic score.
fn probit_hessian(data: &[(f64, InjurySeverity)], theta: &[f64; 3]) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(3, 3);
    for j in 0..3 {
        let step = 1e-6 * theta[j].abs().max(1.0);
        let mut plus = *theta;
        plus[j] += step;
        let mut minus = *theta;
        minus[j] -= step;
        let gp = probit_score(data, &plus);
        let gm = probit_score(data, &minus);
        for i in 0..3 {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    // Symmetrize FD noise.
    for i in 0..3 {
        for j in (i + 1)..3 {
            let avg = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = avg;
            h[(j, i)] = avg;
        }
    }
    h
}

/// Fit the ordered probit by Newton iterations with step halving;
/// convergence at score infinity-norm < 1e−8. AIC = −2ℓ + 2·3.
pub fn fit_ordered_probit(persons: &[PersonRecord]) -> Result<InjuryRiskModel, SeverityError> {
    check_classes(persons)?;
    let data: Vec<(f64, InjurySeverity)> = persons
        .iter()
        .map(|p| (p.collision_speed, p.injury))
        .collect();
    let n = data.len() as f64;
    let mean_v = data.iter().map(|(v, _)| v).sum::<f64>() / n;
    let p_slight = data
        .iter()
        .filter(|(_, c)| *c == InjurySeverity::Slight)
        .count() as f64
        / n;
    let p_le_serious = data
        .iter()
        .filter(|(_, c)| *c != InjurySeverity::Fatal)
        .count() as f64
        / n;
    let beta0 = 0.01;
    let t1 = inverse_phi(p_slight.clamp(1e-6, 1.0 - 1e-6)) + beta0 * mean_v;
    let t2 = inverse_phi(p_le_serious.clamp(1e-6, 1.0 - 1e-6)) + beta0 * mean_v;
    let mut theta = [beta0, t1, (t2 - t1).max(1e-3).ln()];

    let mut ll = probit_loglik(&data, &theta);
    let mut converged = false;
    for _ in 0..PROBIT_MAX_ITER {
        let g = probit_score(&data, &theta);
        let g_norm = g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if g_norm < PROBIT_GRAD_TOL {
            converged = true;
            break;
        }
        if theta[0].abs() > SEPARATION_SLOPE || theta[2] > 50.0 {
            return Err(SeverityError::Separation(
                "ordered probit slope diverged".into(),
            ));
        }
        let h = probit_hessian(&data, &theta);
        let gv = DVector::from_column_slice(&g);
        // Newton ascent step −H⁻¹g, with a ridge retry if H is singular.
        let mut step = h.clone().lu().solve(&gv).map(|s| -s);
        if step.is_none() {
            let mut ridged = h;
            for i in 0..3 {
                ridged[(i, i)] -= 1e-6;
            }
            step = ridged.lu().solve(&gv).map(|s| -s);
        }
        let Some(step) = step else {
            return Err(SeverityError::NonConvergence {
                what: "ordered probit (singular Hessian)".into(),
                iterations: PROBIT_MAX_ITER,
            });
        };
        // Parameter-space convergence fallback: with many ties in the speed
        // data the analytic score and the double-precision log-likelihood
        // disagree at the ~1e-7 level, leaving a residual gradient that no
        // ascent step can remove. A Newton displacement below 1e-9 means
        // the parameters are settled far beyond statistical resolution.
        let theta_norm = theta.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if step.amax() < 1e-9 * (1.0 + theta_norm) {
            converged = true;
            break;
        }
        let mut scale = 1.0;
        let mut advanced = false;
        for _ in 0..40 {
            let cand = [
                theta[0] + scale * step[0],
                theta[1] + scale * step[1],
                theta[2] + scale * step[2],
            ];
            let cand_ll = probit_loglik(&data, &cand);
            if cand_ll > ll {
                theta = cand;
                ll = cand_ll;
                advanced = true;
                break;
            }
            scale *= 0.5;
        }
        if !advanced {
            // The likelihood cannot be improved in the Newton direction at
            // any scale; accept only when the gradient is already small,
            // otherwise the Hessian led us astray.
            converged = g_norm < 1e-3;
            break;
        }
    }
    if !converged {
        return Err(SeverityError::NonConvergence {
            what: "ordered probit".into(),
            iterations: PROBIT_MAX_ITER,
        });
    }
    // A saturated likelihood (every class predicted with probability ~1) is
    // only reachable when speed separates the classes perfectly; the MLE
    // does not exist and the "converged" parameters are arbitrary.
    if ll > -1e-8 * data.len() as f64 {
        return Err(SeverityError::Separation(
            "ordered probit likelihood saturated: injury classes are perfectly separated by speed"
                .into(),
        ));
    }

    let (beta, tau1, delta) = (theta[0], theta[1], theta[2]);
    let e_delta = delta.exp();
    let tau2 = tau1 + e_delta;
    // Observed information: covariance = (−H)⁻¹; SE(τ₂) by the delta method.
    let h = probit_hessian(&data, &theta);
    let cov = (-h).try_inverse();
    let se = match cov {
        Some(c) => {
            let var_tau2 = c[(1, 1)] + e_delta * e_delta * c[(2, 2)] + 2.0 * e_delta * c[(1, 2)];
            [
                c[(0, 0)].max(0.0).sqrt(),
                c[(1, 1)].max(0.0).sqrt(),
                var_tau2.max(0.0).sqrt(),
            ]
        }
        None => [f64::NAN; 3],
    };
    Ok(InjuryRiskModel::OrderedProbit {
        vru_type: persons[0].vru_type,
        beta,
        tau1,
        tau2,
        se,
        log_lik: ll,
        aic: -2.0 * ll + 2.0 * 3.0,
        negative_slope: beta < 0.0,
    })
}

/// Binary logistic regression of one injury level on collision speed, by
/// iteratively reweighted least squares. Returns (β₀, β₁, log-likelihood).
pub fn fit_logistic_level(
    persons: &[PersonRecord],
    level: InjuryLevel,
) -> Result<(f64, f64, f64), SeverityError> {
    let reaches = |p: &PersonRecord| match level {
        InjuryLevel::Fatal => p.injury == InjurySeverity::Fatal,
        InjuryLevel::SeriousOrWorse => p.injury != InjurySeverity::Slight,
    };
    let data: Vec<(f64, f64)> = persons
        .iter()
        .map(|p| (p.collision_speed, reaches(p) as u8 as f64))
        .collect();
    let positives = data.iter().filter(|(_, y)| *y == 1.0).count();
    if positives == 0 || positives == data.len() {
        return Err(SeverityError::Separation(format!(
            "{level}: single outcome class"
        )));
    }
    let n = data.len();
    let x = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { data[r].0 });
    let y = DVector::from_iterator(n, data.iter().map(|(_, y)| *y));
    let loglik = |beta: &DVector<f64>| -> f64 {
        (0..n)
            .map(|i| {
                let p = sigmoid(x[(i, 0)] * beta[0] + x[(i, 1)] * beta[1]);
                if y[i] == 1.0 {
                    p.max(1e-300).ln()
                } else {
                    (1.0 - p).max(1e-300).ln()
                }
            })
            .sum()
    };
    let mut beta = DVector::from_column_slice(&[0.0, 0.0]);
    for _ in 0..IRLS_MAX_ITER {
        let eta = &x * &beta;
        let mu: DVector<f64> = eta.map(sigmoid);
        let w: DVector<f64> = mu.map(|m| (m * (1.0 - m)).max(1e-10));
        // Weighted normal equations XᵀWX β = XᵀW z with z = η + (y−μ)/w.
        let z: DVector<f64> =
            &eta + DVector::from_iterator(n, (0..n).map(|i| (y[i] - mu[i]) / w[i]));
        let xtw = DMatrix::from_fn(2, n, |r, c| x[(c, r)] * w[c]);
        let lhs = &xtw * &x;
        let rhs = &xtw * z;
        let Some(next) = lhs.lu().solve(&rhs) else {
            return Err(SeverityError::NonConvergence {
                what: "logistic IRLS (singular system)".into(),
                iterations: IRLS_MAX_ITER,
            });
        };
        let delta = (&next - &beta).amax();
        beta = next;
        if beta[1].abs() > SEPARATION_SLOPE || loglik(&beta) > -1e-8 * n as f64 {
            // The MLE does not exist: the slope escapes to infinity and the
            // likelihood saturates.
            return Err(SeverityError::Separation(format!(
                "{level}: outcome perfectly separated by speed"
            )));
        }
        if delta < IRLS_TOL {
            return Ok((beta[0], beta[1], loglik(&beta)));
        }
    }
    // Ran out of iterations: distinguish quasi-separation (the usual cause)
    // from a genuine convergence failure.
    if loglik(&beta) > -1e-4 * n as f64 {
        return Err(SeverityError::Separation(format!(
            "{level}: outcome (quasi-)separated by speed"
        )));
    }
    Err(SeverityError::NonConvergence {
        what: "logistic IRLS".into(),
        iterations: IRLS_MAX_ITER,
    })
}

/// Sensitivity-analysis alternative: independent binary logistic fits for
/// both injury levels, packaged as one model. AIC counts all four
/// coefficients.
pub fn fit_logistic_irc(persons: &[PersonRecord]) -> Result<InjuryRiskModel, SeverityError> {
    check_classes(persons)?;
    let (s0, s1, ll_s) = fit_logistic_level(persons, InjuryLevel::SeriousOrWorse)?;
    let (f0, f1, ll_f) = fit_logistic_level(persons, InjuryLevel::Fatal)?;
    let log_lik = ll_s + ll_f;
    Ok(InjuryRiskModel::Logistic {
        vru_type: persons[0].vru_type,
        serious: (s0, s1),
        fatal: (f0, f1),
        log_lik,
        aic: -2.0 * log_lik + 2.0 * 4.0,
        negative_slope: s1 < 0.0 || f1 < 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    /// Table-10-style cyclist parameters used as ground truth.
    const TRUE_BETA: f64 = 0.032;
    const TRUE_TAU1: f64 = 1.37;
    const TRUE_TAU2: f64 = 3.56;

    pub(crate) fn sample_persons(
        n: usize,
        seed: u64,
        beta: f64,
        tau1: f64,
        tau2: f64,
    ) -> Vec<PersonRecord> {
        let mut rng = stream(seed, "irc-sample", 0);
        (0..n)
            .map(|_| {
                let v: f64 = rng.gen_range(5.0..80.0);
                let u: f64 = rng.gen();
                let p1 = phi(tau1 - beta * v);
                let p12 = phi(tau2 - beta * v);
                let injury = if u < p1 {
                    InjurySeverity::Slight
                } else if u < p12 {
                    InjurySeverity::Serious
                } else {
                    InjurySeverity::Fatal
                };
                PersonRecord {
                    vru_type: VruType::Cyclist,
                    injury,
                    age: 40.0,
                    gender: "M".into(),
                    weather: "Clear".into(),
                    surface: "Dry".into(),
                    light: "Daylight".into(),
                    site: "Straight".into(),
                    urban: true,
                    collision_speed: v,
                }
            })
            .collect()
    }

    #[test]
    fn table10_model_identities() {
        let model = InjuryRiskModel::OrderedProbit {
            vru_type: VruType::Cyclist,
            beta: 0.03197,
            tau1: 1.3679,
            tau2: 3.5633,
            se: [0.002981, 0.0732, 0.1949],
            log_lik: -1426.122 / 2.0,
            aic: 1426.122 + 6.0,
            negative_slope: false,
        };
        // AIC − residual deviance = 2·3 exactly.
        assert_eq!(model.aic() - (-2.0 * model.log_lik()), 6.0);
        assert!((model.aic() - 1432.122).abs() < 1e-9);
        // Frozen oracle evaluations at v = 30.
        let fatal = model.risk(InjuryLevel::Fatal, 30.0);
        assert!((fatal - 0.004604450073).abs() < 1e-10, "fatal {fatal}");
        let serious = model.risk(InjuryLevel::SeriousOrWorse, 30.0);
        assert!(
            (serious - 0.341343219953).abs() < 1e-10,
            "serious {serious}"
        );
    }

    #[test]
    fn risks_ordered_and_monotone() {
        let model = InjuryRiskModel::OrderedProbit {
            vru_type: VruType::Cyclist,
            beta: 0.03197,
            tau1: 1.3679,
            tau2: 3.5633,
            se: [0.0; 3],
            log_lik: 0.0,
            aic: 0.0,
            negative_slope: false,
        };
        let mut prev_fatal = 0.0;
        for v in 0..100 {
            let v = v as f64;
            let fatal = model.risk(InjuryLevel::Fatal, v);
            let serious = model.risk(InjuryLevel::SeriousOrWorse, v);
            assert!(fatal <= serious, "ordering at {v}");
            assert!(fatal >= prev_fatal, "monotonicity at {v}");
            prev_fatal = fatal;
            let probs = model.class_probabilities(v).unwrap();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn probit_fit_recovers_generating_parameters() {
        let persons = sample_persons(5000, 31, TRUE_BETA, TRUE_TAU1, TRUE_TAU2);
        let model = fit_ordered_probit(&persons).unwrap();
        let InjuryRiskModel::OrderedProbit {
            beta,
            tau1,
            tau2,
            se,
            ..
        } = model
        else {
            panic!("wrong family")
        };
        assert!(
            (beta - TRUE_BETA).abs() < 3.0 * se[0],
            "beta {beta} se {}",
            se[0]
        );
        assert!((tau1 - TRUE_TAU1).abs() < 3.0 * se[1], "tau1 {tau1}");
        assert!((tau2 - TRUE_TAU2).abs() < 3.0 * se[2], "tau2 {tau2}");
        assert!(tau1 < tau2);
    }

    #[test]
    fn perfectly_separated_classes_are_a_separation_error() {
        let persons: Vec<PersonRecord> = (0..300)
            .map(|i| {
                let v = 5.0 + i as f64 * 0.25;
                let injury = if v < 30.0 {
                    InjurySeverity::Slight
                } else if v < 55.0 {
                    InjurySeverity::Serious
                } else {
                    InjurySeverity::Fatal
                };
                let mut p = sample_persons(1, 0, TRUE_BETA, TRUE_TAU1, TRUE_TAU2).remove(0);
                p.injury = injury;
                p.collision_speed = v;
                p
            })
            .collect();
        assert!(matches!(
            fit_ordered_probit(&persons),
            Err(SeverityError::Separation(_))
        ));
    }

    #[test]
    fn missing_class_is_error() {
        let persons: Vec<PersonRecord> = sample_persons(200, 5, TRUE_BETA, TRUE_TAU1, TRUE_TAU2)
            .into_iter()
            .filter(|p| p.injury != InjurySeverity::Fatal)
            .collect();
        assert!(matches!(
            fit_ordered_probit(&persons),
            Err(SeverityError::MissingClass(InjurySeverity::Fatal))
        ));
    }

    #[test]
    fn analytic_score_matches_finite_differences() {
        let persons = sample_persons(400, 77, TRUE_BETA, TRUE_TAU1, TRUE_TAU2);
        let data: Vec<(f64, InjurySeverity)> = persons
            .iter()
            .map(|p| (p.collision_speed, p.injury))
            .collect();
        let mut rng = stream(78, "grad-check", 0);
        for _ in 0..20 {
            let theta = [
                rng.gen_range(0.005..0.08),
                rng.gen_range(0.5..2.0),
                rng.gen_range(-0.5..1.2),
            ];
            let g = probit_score(&data, &theta);
            for j in 0..3 {
                let h = 1e-6;
                let mut plus = theta;
                plus[j] += h;
                let mut minus = theta;
                minus[j] -= h;
                let fd = (probit_loglik(&data, &plus) - probit_loglik(&data, &minus)) / (2.0 * h);
                let denom = fd.abs().max(1.0);
                assert!(
                    ((g[j] - fd) / denom).abs() < 1e-5,
                    "component {j}: analytic {} vs fd {fd}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn logistic_level_crosses_half_at_symmetry_point() {
        // Balanced, overlapping outcomes symmetric around v = 30: the
        // majority pattern is Serious above / Slight below, with a mirrored
        // minority near the centre so the classes are not separable.
        let mk = |speed: f64, serious: bool| PersonRecord {
            vru_type: VruType::Cyclist,
            injury: if serious {
                InjurySeverity::Serious
            } else {
                InjurySeverity::Slight
            },
            age: 40.0,
            gender: "F".into(),
            weather: "Clear".into(),
            surface: "Dry".into(),
            light: "Daylight".into(),
            site: "Straight".into(),
            urban: true,
            collision_speed: speed,
        };
        let mut persons = Vec::new();
        for i in 1..=24 {
            let x = 0.5 * i as f64;
            persons.push(mk(30.0 + x, true));
            persons.push(mk(30.0 - x, false));
        }
        for i in 1..=8 {
            let x = 0.5 * i as f64;
            persons.push(mk(30.0 + x, false));
            persons.push(mk(30.0 - x, true));
        }
        let (b0, b1, _) = fit_logistic_level(&persons, InjuryLevel::SeriousOrWorse).unwrap();
        let crossing = -b0 / b1;
        assert!((crossing - 30.0).abs() < 0.5, "crossing at {crossing}");
        assert!(b1 > 0.0);
    }

    #[test]
    fn logistic_on_probit_data_is_monotone_increasing() {
        let persons = sample_persons(3000, 11, TRUE_BETA, TRUE_TAU1, TRUE_TAU2);
        let model = fit_logistic_irc(&persons).unwrap();
        let InjuryRiskModel::Logistic {
            serious,
            fatal,
            negative_slope,
            ..
        } = &model
        else {
            panic!("wrong family")
        };
        assert!(serious.1 > 0.0 && fatal.1 > 0.0);
        assert!(!negative_slope);
    }

    #[test]
    fn single_class_level_is_separation_error() {
        let persons: Vec<PersonRecord> = sample_persons(300, 5, TRUE_BETA, TRUE_TAU1, TRUE_TAU2)
            .into_iter()
            .map(|mut p| {
                p.injury = InjurySeverity::Slight;
                p
            })
            .collect();
        assert!(matches!(
            fit_logistic_level(&persons, InjuryLevel::Fatal),
            Err(SeverityError::Separation(_))
        ));
    }
}
