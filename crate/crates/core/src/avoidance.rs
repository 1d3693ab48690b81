//! Per-speed Beta priors from simulation, weighted conjugate updates with
//! test results, quantile extraction and avoidance-curve fitting across
//! initial speeds, plus the frequentist sensitivity variant.
//!
//! For a speed bin with `a` avoided and `b` non-avoided simulated crashes the
//! prior is Beta(a, b); `n` tests of which `Σy` avoided update it to
//! Beta(a + wΣy, b + wn − wΣy). Point estimates are posterior medians with a
//! 90% interval from the 0.05/0.95 quantiles; a logistic (or quadratic)
//! curve extends the per-bin values to all initial speeds.

use thiserror::Error;

use crate::domain::TestObservation;
use crate::numeric::{reg_inc_beta, sigmoid};

/// Two-sided 90% standard normal quantile (Φ(z) = 0.95).
pub const Z_90: f64 = 1.6448536269514722;

/// Simulation speed bins are matched to a tested initial speed within this
/// margin (km/h); unmatched bins contribute prior-only points.
pub const SPEED_MATCH_KMH: f64 = 2.5;

#[derive(Debug, Error)]
pub enum AvoidanceError {
    #[error("empty outcome group at {speed} km/h")]
    EmptyGroup { speed: f64 },
    #[error("degenerate fit: all {n} points share one initial speed")]
    DegenerateFit { n: usize },
    #[error(
        "curve fit did not converge within {iterations} iterations (best residual {residual:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },
    #[error("{form} fit needs at least {needed} distinct speeds, got {got}")]
    TooFewPoints {
        form: CurveForm,
        needed: usize,
        got: usize,
    },
}

/// Beta distribution pseudo-counts: `a` avoided, `b` not avoided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> BetaParams {
        assert!(
            a > 0.0 && b > 0.0,
            "BetaParams must be positive, got ({a},{b})"
        );
        BetaParams { a, b }
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

/// One matched initial-speed bin: simulation prior, tests and posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedBin {
    pub car_speed_init: f64,
    pub prior: BetaParams,
    pub posterior: BetaParams,
    pub n_tests: usize,
    pub sum_y: usize,
}

/// Beta prior from a group of simulated outcomes at one initial speed.
/// Zero counts are floored to 0.5 (half a pseudo-observation) so quantiles
/// exist for all-avoided and all-hit bins.
pub fn prior_from_counts(avoided: usize, not_avoided: usize) -> Result<BetaParams, AvoidanceError> {
    prior_from_counts_at(avoided, not_avoided, f64::NAN)
}

fn prior_from_counts_at(
    avoided: usize,
    not_avoided: usize,
    speed: f64,
) -> Result<BetaParams, AvoidanceError> {
    if avoided == 0 && not_avoided == 0 {
        return Err(AvoidanceError::EmptyGroup { speed });
    }
    let floor = |n: usize| if n == 0 { 0.5 } else { n as f64 };
    Ok(BetaParams::new(floor(avoided), floor(not_avoided)))
}

/// Beta priors per initial speed from `(speed, avoided)` pairs. Groups are
/// exact speed values; the caller bins beforehand.
pub fn prior_from_sims(outcomes: &[(f64, bool)]) -> Result<Vec<(f64, BetaParams)>, AvoidanceError> {
    let mut speeds: Vec<f64> = outcomes.iter().map(|(v, _)| *v).collect();
    speeds.sort_by(f64::total_cmp);
    speeds.dedup();
    let mut out = Vec::with_capacity(speeds.len());
    for v in speeds {
        let avoided = outcomes.iter().filter(|(s, a)| *s == v && *a).count();
        let not = outcomes.iter().filter(|(s, a)| *s == v && !*a).count();
        out.push((v, prior_from_counts_at(avoided, not, v)?));
    }
    Ok(out)
}

/// Conjugate update with weighted test results:
/// `c = a + wΣy`, `d = b + wn − wΣy`. Exact arithmetic, no approximation.
pub fn bayes_update(prior: BetaParams, tests: &[TestObservation], w: f64) -> BetaParams {
    assert!(w >= 0.0, "weight must be nonnegative");
    let n = tests.len() as f64;
    let sum_y = tests.iter().filter(|t| t.avoided).count() as f64;
    BetaParams {
        a: prior.a + w * sum_y,
        b: prior.b + w * n - w * sum_y,
    }
}

/// Quantile of Beta(a, b): the x with I_x(a, b) = q, to absolute tolerance
/// 1e−10, by bracketing bisection with a Newton polish.
pub fn beta_quantile(params: BetaParams, q: f64) -> f64 {
    assert!(
        q > 0.0 && q < 1.0,
        "quantile level must be in (0,1), got {q}"
    );
    let (a, b) = (params.a, params.b);
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let mut x = params.mean();
    for _ in 0..200 {
        let f = reg_inc_beta(a, b, x) - q;
        if f.abs() < 1e-14 {
            return x;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo < 1e-15 {
            return 0.5 * (lo + hi);
        }
        // Newton step on I_x; density in log space to survive extreme params.
        let ln_dens = crate::numeric::ln_gamma(a + b)
            - crate::numeric::ln_gamma(a)
            - crate::numeric::ln_gamma(b)
            + (a - 1.0) * x.max(1e-300).ln()
            + (b - 1.0) * (1.0 - x).max(1e-300).ln();
        let dens = ln_dens.exp();
        let newton = if dens > 0.0 { x - f / dens } else { f64::NAN };
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    x
}

/// Fitted functional form of the avoidance curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveForm {
    Logistic,
    Poly2,
}

impl std::fmt::Display for CurveForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CurveForm::Logistic => f.write_str("Logistic"),
            CurveForm::Poly2 => f.write_str("Poly2"),
        }
    }
}

/// Which fitted curve of the triple to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Lower,
    Median,
    Upper,
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::Lower => f.write_str("lower"),
            Bound::Median => f.write_str("median"),
            Bound::Upper => f.write_str("upper"),
        }
    }
}

/// Probability-of-avoidance curve over initial speed, with pointwise 90%
/// bounds. Logistic coefficients are `[β0, β1]`; Poly2 `[c0, c1, c2]`.
///
/// Evaluations are clamped to [0, 1], and bound evaluations are additionally
/// order-clamped against the median so lower ≤ median ≤ upper holds pointwise
/// even where three independently fitted curves would cross.
#[derive(Debug, Clone, PartialEq)]
pub struct AvoidanceCurve {
    pub form: CurveForm,
    pub median_coeffs: Vec<f64>,
    pub lower_coeffs: Vec<f64>,
    pub upper_coeffs: Vec<f64>,
    /// Sum of squared residuals of the median fit.
    pub fit_residual: f64,
}

impl AvoidanceCurve {
    fn eval_raw(&self, coeffs: &[f64], v: f64) -> f64 {
        let raw = match self.form {
            CurveForm::Logistic => sigmoid(coeffs[0] + coeffs[1] * v),
            CurveForm::Poly2 => coeffs[0] + coeffs[1] * v + coeffs[2] * v * v,
        };
        raw.clamp(0.0, 1.0)
    }

    /// Probability of avoidance p(c) at initial speed `v` km/h.
    pub fn evaluate(&self, bound: Bound, v: f64) -> f64 {
        let median = self.eval_raw(&self.median_coeffs, v);
        match bound {
            Bound::Median => median,
            Bound::Lower => self.eval_raw(&self.lower_coeffs, v).min(median),
            Bound::Upper => self.eval_raw(&self.upper_coeffs, v).max(median),
        }
    }
}

/// Target points for a curve fit: initial speed with posterior median and
/// 90% bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub speed: f64,
    pub p_median: f64,
    pub p_lower: f64,
    pub p_upper: f64,
}

fn distinct_speeds(points: &[CurvePoint]) -> usize {
    let mut speeds: Vec<f64> = points.iter().map(|p| p.speed).collect();
    speeds.sort_by(f64::total_cmp);
    speeds.dedup();
    speeds.len()
}

/// Least-squares logistic fit on the probability scale: damped Gauss–Newton
/// initialized from a logit-transform linear fit, converged when the step
/// infinity-norm drops below 1e−10 (at most 200 iterations).
fn fit_logistic_curve(targets: &[(f64, f64)]) -> Result<(Vec<f64>, f64), AvoidanceError> {
    let n = targets.len() as f64;
    // Initialization: linear fit of logit(p) on v with clipped probabilities.
    let logit = |p: f64| {
        let p = p.clamp(1e-6, 1.0 - 1e-6);
        (p / (1.0 - p)).ln()
    };
    let sum_v: f64 = targets.iter().map(|(v, _)| v).sum();
    let sum_z: f64 = targets.iter().map(|(_, p)| logit(*p)).sum();
    let mean_v = sum_v / n;
    let mean_z = sum_z / n;
    let sxx: f64 = targets.iter().map(|(v, _)| (v - mean_v).powi(2)).sum();
    let sxz: f64 = targets
        .iter()
        .map(|(v, p)| (v - mean_v) * (logit(*p) - mean_z))
        .sum();
    let mut beta1 = if sxx > 0.0 { sxz / sxx } else { 0.0 };
    let mut beta0 = mean_z - beta1 * mean_v;

    let sse = |b0: f64, b1: f64| -> f64 {
        targets
            .iter()
            .map(|(v, p)| {
                let r = sigmoid(b0 + b1 * v) - p;
                r * r
            })
            .sum()
    };

    let mut best = (beta0, beta1, sse(beta0, beta1));
    for iter in 0..200 {
        // Gauss–Newton normal equations for residuals σ(η) − p.
        let (mut jtj00, mut jtj01, mut jtj11) = (0.0, 0.0, 0.0);
        let (mut jtr0, mut jtr1) = (0.0, 0.0);
        for (v, p) in targets {
            let s = sigmoid(beta0 + beta1 * v);
            let g = s * (1.0 - s);
            let r = s - p;
            jtj00 += g * g;
            jtj01 += g * g * v;
            jtj11 += g * g * v * v;
            jtr0 += g * r;
            jtr1 += g * v * r;
        }
        let det = jtj00 * jtj11 - jtj01 * jtj01;
        let (d0, d1) = if det.abs() > 1e-300 {
            (
                -(jtj11 * jtr0 - jtj01 * jtr1) / det,
                -(jtj00 * jtr1 - jtj01 * jtr0) / det,
            )
        } else {
            // Saturated curve: fall back to a pure gradient step.
            (-jtr0, -jtr1)
        };
        if !d0.is_finite() || !d1.is_finite() {
            break;
        }
        if d0.abs().max(d1.abs()) < 1e-10 {
            let final_sse = sse(beta0, beta1);
            return Ok((vec![beta0, beta1], final_sse));
        }
        // Damping: halve until the step does not increase the SSE.
        let current = sse(beta0, beta1);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let cand = sse(beta0 + scale * d0, beta1 + scale * d1);
            if cand <= current {
                beta0 += scale * d0;
                beta1 += scale * d1;
                if cand < best.2 {
                    best = (beta0, beta1, cand);
                }
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // No descent direction left; accept the current point.
            return Ok((vec![beta0, beta1], current));
        }
        let _ = iter;
    }
    Err(AvoidanceError::NonConvergence {
        iterations: 200,
        residual: best.2,
        best: vec![best.0, best.1],
    })
}

/// Ordinary least squares for p ≈ c0 + c1·v + c2·v².
fn fit_poly2_curve(targets: &[(f64, f64)]) -> (Vec<f64>, f64) {
    let mut m = [[0.0_f64; 3]; 3];
    let mut rhs = [0.0_f64; 3];
    for (v, p) in targets {
        let row = [1.0, *v, v * v];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
            rhs[i] += row[i] * p;
        }
    }
    let coeffs = solve3(m, rhs);
    let sse = targets
        .iter()
        .map(|(v, p)| {
            let r = coeffs[0] + coeffs[1] * v + coeffs[2] * v * v - p;
            r * r
        })
        .sum();
    (coeffs.to_vec(), sse)
}

#[allow(clippy::needless_range_loop)] // textbook elimination reads best indexed
fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    // Gaussian elimination with partial pivoting; a singular system (e.g.
    // duplicate speeds) falls back to zeros on the unresolved coordinates.
    for col in 0..3 {
        let mut pivot = col;
        for row in col + 1..3 {
            if m[row][col].abs() > m[pivot][col].abs() {
                pivot = row;
            }
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        if m[col][col].abs() < 1e-12 {
            continue;
        }
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0_f64; 3];
    for col in (0..3).rev() {
        if m[col][col].abs() < 1e-12 {
            x[col] = 0.0;
            continue;
        }
        let mut acc = b[col];
        for k in col + 1..3 {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    x
}

/// Fit the median/lower/upper curves of the requested form. Three
/// independent fits share one functional form.
pub fn fit_avoidance_curve(
    points: &[CurvePoint],
    form: CurveForm,
) -> Result<AvoidanceCurve, AvoidanceError> {
    let distinct = distinct_speeds(points);
    let needed = match form {
        CurveForm::Logistic => 2,
        CurveForm::Poly2 => 3,
    };
    if distinct < needed {
        if distinct <= 1 && !points.is_empty() {
            return Err(AvoidanceError::DegenerateFit { n: points.len() });
        }
        return Err(AvoidanceError::TooFewPoints {
            form,
            needed,
            got: distinct,
        });
    }
    let select = |f: fn(&CurvePoint) -> f64| -> Vec<(f64, f64)> {
        points.iter().map(|p| (p.speed, f(p))).collect()
    };
    let (median, lower, upper, residual) = match form {
        CurveForm::Logistic => {
            let (median, sse) = fit_logistic_curve(&select(|p| p.p_median))?;
            let (lower, _) = fit_logistic_curve(&select(|p| p.p_lower))?;
            let (upper, _) = fit_logistic_curve(&select(|p| p.p_upper))?;
            (median, lower, upper, sse)
        }
        CurveForm::Poly2 => {
            let (median, sse) = fit_poly2_curve(&select(|p| p.p_median));
            let (lower, _) = fit_poly2_curve(&select(|p| p.p_lower));
            let (upper, _) = fit_poly2_curve(&select(|p| p.p_upper));
            (median, lower, upper, sse)
        }
    };
    Ok(AvoidanceCurve {
        form,
        median_coeffs: median,
        lower_coeffs: lower,
        upper_coeffs: upper,
        fit_residual: residual,
    })
}

/// Fit a logistic curve, falling back to Poly2 when the logistic residual
/// exceeds 3× the quadratic's (and at least 3 distinct speeds exist).
pub fn fit_curve_auto(points: &[CurvePoint]) -> Result<AvoidanceCurve, AvoidanceError> {
    let logistic = fit_avoidance_curve(points, CurveForm::Logistic);
    if distinct_speeds(points) < 3 {
        return logistic;
    }
    let poly = fit_avoidance_curve(points, CurveForm::Poly2)?;
    match logistic {
        Ok(curve) if curve.fit_residual <= 3.0 * poly.fit_residual => Ok(curve),
        Ok(_) => Ok(poly),
        Err(_) => Ok(poly),
    }
}

/// Frequentist pooled estimate: tests are appended to the simulation sample
/// with multiplicity `w`. Returns the pooled proportion (identical to the
/// Beta posterior mean) and its 90% Wilson score interval.
pub fn frequentist_estimate(
    prior_counts: (f64, f64),
    tests: &[TestObservation],
    w: f64,
) -> (f64, (f64, f64)) {
    let (a, b) = prior_counts;
    let n_tests = tests.len() as f64;
    let sum_y = tests.iter().filter(|t| t.avoided).count() as f64;
    let n = a + b + w * n_tests;
    assert!(n > 0.0, "pooled sample must be non-empty");
    let p_hat = (a + w * sum_y) / n;
    let z2 = Z_90 * Z_90;
    let denom = 1.0 + z2 / n;
    let centre = (p_hat + z2 / (2.0 * n)) / denom;
    let half = Z_90 * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    (p_hat, ((centre - half).max(0.0), (centre + half).min(1.0)))
}

/// Build speed bins for one use case and algorithm: bin simulated outcomes
/// to the nearest tested speed within [`SPEED_MATCH_KMH`], update with the
/// tests at that speed, and keep unmatched bins prior-only.
pub fn build_speed_bins(
    sims: &[(f64, bool)],
    tests: &[TestObservation],
    w: f64,
) -> Result<Vec<SpeedBin>, AvoidanceError> {
    let mut tested_speeds: Vec<f64> = tests.iter().map(|t| t.car_speed_init).collect();
    tested_speeds.sort_by(f64::total_cmp);
    tested_speeds.dedup();

    let bin_of = |v: f64| -> f64 {
        let mut best: Option<f64> = None;
        for &t in &tested_speeds {
            let d = (v - t).abs();
            if d <= SPEED_MATCH_KMH {
                match best {
                    // Ties (equidistant) resolve to the lower tested speed,
                    // which is visited first in sorted order.
                    Some(cur) if (v - cur).abs() <= d => {}
                    _ => best = Some(t),
                }
            }
        }
        best.unwrap_or_else(|| v.round())
    };

    let binned: Vec<(f64, bool)> = sims.iter().map(|(v, a)| (bin_of(*v), *a)).collect();
    let priors = prior_from_sims(&binned)?;
    let mut bins = Vec::with_capacity(priors.len());
    for (speed, prior) in priors {
        let at_speed: Vec<TestObservation> = tests
            .iter()
            .filter(|t| t.car_speed_init == speed)
            .cloned()
            .collect();
        let posterior = bayes_update(prior, &at_speed, w);
        bins.push(SpeedBin {
            car_speed_init: speed,
            prior,
            posterior,
            n_tests: at_speed.len(),
            sum_y: at_speed.iter().filter(|t| t.avoided).count(),
        });
    }
    Ok(bins)
}
