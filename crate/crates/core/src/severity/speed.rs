//! Collision-speed regression.
//!
//! All 2⁶ subsets of {car_speed_init, vru_speed_init, long_dist, lat_dist,
//! sight_obstruction, location} are fitted by OLS; categorical covariates are
//! dummy-coded against the references No/Urban, with levels absent from the
//! data dropped. Subsets failing the collinearity guard (VIF > 10 or a
//! condition number > 30 on the unit-column-scaled design) are skipped, and
//! the lowest-AIC survivor wins; ties break to fewer covariates, then
//! lexicographic covariate names.

use nalgebra::{DMatrix, DVector};

use crate::avoidance::Z_90;
use crate::domain::UseCase;
use crate::domain::{CrashRecord, Location, SightObstruction};
use crate::sim::Algorithm;

use super::SeverityError;

/// Minimum number of collision cases for a covariate search.
pub const MIN_COLLISIONS: usize = 8;
const VIF_LIMIT: f64 = 10.0;
const CONDITION_LIMIT: f64 = 30.0;
const RSS_FLOOR: f64 = 1e-9;

/// Candidate covariates, in the canonical subset-enumeration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Covariate {
    CarSpeedInit,
    VruSpeedInit,
    LongDist,
    LatDist,
    SightObstruction,
    Location,
}

impl Covariate {
    pub const ALL: [Covariate; 6] = [
        Covariate::CarSpeedInit,
        Covariate::VruSpeedInit,
        Covariate::LongDist,
        Covariate::LatDist,
        Covariate::SightObstruction,
        Covariate::Location,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Covariate::CarSpeedInit => "car_speed_init",
            Covariate::VruSpeedInit => "vru_speed_init",
            Covariate::LongDist => "long_dist",
            Covariate::LatDist => "lat_dist",
            Covariate::SightObstruction => "sight_obstruction",
            Covariate::Location => "location",
        }
    }
}

/// One column of the fitted design matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesignColumn {
    Intercept,
    CarSpeedInit,
    VruSpeedInit,
    LongDist,
    LatDist,
    /// Dummy for one non-reference sight-obstruction level.
    Sight(SightObstruction),
    /// Dummy for one non-reference location level.
    Loc(Location),
}

impl DesignColumn {
    fn feature(self, crash: &CrashRecord) -> f64 {
        match self {
            DesignColumn::Intercept => 1.0,
            DesignColumn::CarSpeedInit => crash.car_speed_init,
            DesignColumn::VruSpeedInit => crash.vru_speed_init,
            DesignColumn::LongDist => crash.long_dist,
            DesignColumn::LatDist => crash.lat_dist,
            DesignColumn::Sight(level) => (crash.sight_obstruction == level) as u8 as f64,
            DesignColumn::Loc(level) => (crash.location == level) as u8 as f64,
        }
    }
}

/// Fitted collision-speed model for one (use case, algorithm).
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedModel {
    pub use_case: UseCase,
    pub algorithm: Algorithm,
    pub selected_covariates: Vec<Covariate>,
    pub columns: Vec<DesignColumn>,
    /// Aligned with `columns`.
    pub coefficients: Vec<f64>,
    /// km/h.
    pub residual_std: f64,
    pub n_obs: usize,
    pub aic: f64,
}

/// Point prediction (rounded, clamped) with a 90% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedPrediction {
    pub point: i32,
    pub interval_90: (f64, f64),
}

fn build_columns(subset: &[Covariate], data: &[(&CrashRecord, f64)]) -> Vec<DesignColumn> {
    let mut cols = vec![DesignColumn::Intercept];
    for &cov in subset {
        match cov {
            Covariate::CarSpeedInit => cols.push(DesignColumn::CarSpeedInit),
            Covariate::VruSpeedInit => cols.push(DesignColumn::VruSpeedInit),
            Covariate::LongDist => cols.push(DesignColumn::LongDist),
            Covariate::LatDist => cols.push(DesignColumn::LatDist),
            Covariate::SightObstruction => {
                for level in [
                    SightObstruction::NotPermanent,
                    SightObstruction::Permanent,
                    SightObstruction::Other,
                ] {
                    // Dummies only for levels present in the data.
                    if data.iter().any(|(c, _)| c.sight_obstruction == level) {
                        cols.push(DesignColumn::Sight(level));
                    }
                }
            }
            Covariate::Location => {
                if data.iter().any(|(c, _)| c.location == Location::Rural) {
                    cols.push(DesignColumn::Loc(Location::Rural));
                }
            }
        }
    }
    cols
}

struct OlsFit {
    coefficients: Vec<f64>,
    rss: f64,
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<OlsFit> {
    let svd = x.clone().svd(true, true);
    let coeffs = svd.solve(y, 1e-12).ok()?;
    let resid = y - x * &coeffs;
    Some(OlsFit {
        coefficients: coeffs.iter().copied().collect(),
        rss: resid.norm_squared(),
    })
}

/// Condition number of the column-equilibrated design (columns scaled to
/// unit Euclidean norm). Infinite for a zero column.
fn scaled_condition(x: &DMatrix<f64>) -> f64 {
    let mut scaled = x.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        col /= norm;
    }
    let sv = scaled.svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Max variance inflation factor over the non-intercept columns: regress
/// each on the remaining design and take 1/(1 − R²).
fn max_vif(x: &DMatrix<f64>) -> f64 {
    let k = x.ncols();
    if k <= 2 {
        return 1.0;
    }
    let n = x.nrows();
    let mut worst = 1.0_f64;
    for j in 1..k {
        let target = DVector::from_iterator(n, x.column(j).iter().copied());
        let others = DMatrix::from_fn(n, k - 1, |r, c| {
            let src = if c < j { c } else { c + 1 };
            x[(r, src)]
        });
        let mean = target.mean();
        let tss: f64 = target.iter().map(|v| (v - mean) * (v - mean)).sum();
        if tss <= 1e-12 {
            // (Near-)constant column: perfectly collinear with the intercept.
            return f64::INFINITY;
        }
        match ols(&others, &target) {
            Some(fit) => {
                let r2 = 1.0 - fit.rss / tss;
                let vif = if r2 >= 1.0 - 1e-12 {
                    f64::INFINITY
                } else {
                    1.0 / (1.0 - r2)
                };
                worst = worst.max(vif);
            }
            None => return f64::INFINITY,
        }
    }
    worst
}

/// Gaussian AIC with the residual-variance parameter counted:
/// `n·ln(RSS/n) + 2(k+1)`, RSS floored to keep exact fits finite.
fn gaussian_aic(n: usize, rss: f64, k: usize) -> f64 {
    let n_f = n as f64;
    n_f * (rss.max(RSS_FLOOR) / n_f).ln() + 2.0 * (k as f64 + 1.0)
}

/// Exhaustive best-subset selection over collision cases. `collisions` pairs
/// each crash with its simulated collision speed.
pub fn fit_speed_model(
    use_case: UseCase,
    algorithm: Algorithm,
    collisions: &[(&CrashRecord, f64)],
) -> Result<SpeedModel, SeverityError> {
    let n = collisions.len();
    if n < MIN_COLLISIONS {
        return Err(SeverityError::TooFewCollisions {
            n,
            needed: MIN_COLLISIONS,
        });
    }
    let y = DVector::from_iterator(n, collisions.iter().map(|(_, v)| *v));

    struct Candidate {
        aic: f64,
        n_covariates: usize,
        names: Vec<&'static str>,
        columns: Vec<DesignColumn>,
        coefficients: Vec<f64>,
        rss: f64,
    }
    let mut best: Option<Candidate> = None;

    for mask in 0u32..64 {
        let subset: Vec<Covariate> = Covariate::ALL
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, c)| *c)
            .collect();
        let columns = build_columns(&subset, collisions);
        let k = columns.len();
        if k >= n {
            continue; // insufficient degrees of freedom
        }
        let x = DMatrix::from_fn(n, k, |r, c| columns[c].feature(collisions[r].0));
        if scaled_condition(&x) > CONDITION_LIMIT || max_vif(&x) > VIF_LIMIT {
            continue;
        }
        let Some(fit) = ols(&x, &y) else { continue };
        let aic = gaussian_aic(n, fit.rss, k);
        let mut names: Vec<&'static str> = subset.iter().map(|c| c.name()).collect();
        names.sort_unstable();
        let cand = Candidate {
            aic,
            n_covariates: subset.len(),
            names,
            columns,
            coefficients: fit.coefficients,
            rss: fit.rss,
        };
        let better = match &best {
            None => true,
            Some(cur) => {
                (cand.aic, cand.n_covariates, &cand.names) < (cur.aic, cur.n_covariates, &cur.names)
            }
        };
        if better {
            best = Some(cand);
        }
    }

    let chosen = best.ok_or_else(|| {
        SeverityError::NoAdmissibleSubset(format!(
            "{use_case}/{algorithm}: every subset failed the collinearity guard"
        ))
    })?;
    let k = chosen.columns.len();
    let df = (n - k).max(1);
    let selected: Vec<Covariate> = Covariate::ALL
        .iter()
        .copied()
        .filter(|c| {
            chosen.columns.iter().any(|col| {
                matches!(
                    (c, col),
                    (Covariate::CarSpeedInit, DesignColumn::CarSpeedInit)
                        | (Covariate::VruSpeedInit, DesignColumn::VruSpeedInit)
                        | (Covariate::LongDist, DesignColumn::LongDist)
                        | (Covariate::LatDist, DesignColumn::LatDist)
                        | (Covariate::SightObstruction, DesignColumn::Sight(_))
                        | (Covariate::Location, DesignColumn::Loc(_))
                )
            })
        })
        .collect();
    Ok(SpeedModel {
        use_case,
        algorithm,
        selected_covariates: selected,
        columns: chosen.columns,
        coefficients: chosen.coefficients,
        residual_std: (chosen.rss / df as f64).sqrt(),
        n_obs: n,
        aic: chosen.aic,
    })
}

/// Intercept-only fallback: predicts the mean of `speeds` everywhere.
pub fn intercept_only_model(use_case: UseCase, algorithm: Algorithm, speeds: &[f64]) -> SpeedModel {
    assert!(!speeds.is_empty(), "intercept-only model needs data");
    let n = speeds.len();
    let mean = speeds.iter().sum::<f64>() / n as f64;
    let rss: f64 = speeds.iter().map(|v| (v - mean) * (v - mean)).sum();
    let df = (n - 1).max(1);
    SpeedModel {
        use_case,
        algorithm,
        selected_covariates: Vec::new(),
        columns: vec![DesignColumn::Intercept],
        coefficients: vec![mean],
        residual_std: (rss / df as f64).sqrt(),
        n_obs: n,
        aic: gaussian_aic(n, rss, 1),
    }
}

/// Predict the collision speed for `crash`: the rounded, clamped point and a
/// 90% normal-theory interval widened by the average leverage k/n, clamped
/// to [0, car_speed_init] like the point.
pub fn predict_collision_speed(model: &SpeedModel, crash: &CrashRecord) -> SpeedPrediction {
    let raw: f64 = model
        .columns
        .iter()
        .zip(&model.coefficients)
        .map(|(col, coef)| col.feature(crash) * coef)
        .sum();
    let clamp = |v: f64| v.clamp(0.0, crash.car_speed_init);
    let point = clamp(raw).round();
    let leverage = model.columns.len() as f64 / model.n_obs.max(1) as f64;
    let half = Z_90 * model.residual_std * (1.0 + leverage).sqrt();
    SpeedPrediction {
        point: point as i32,
        interval_90: (clamp(point - half), clamp(point + half)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::VruType;
    use crate::rng::stream;
    use rand::Rng;

    fn crash(v_car: f64, v_vru: f64, long: f64, lat: f64, loc: Location) -> CrashRecord {
        CrashRecord {
            id: String::new(),
            use_case: UseCase::Uc3,
            vru_type: VruType::Cyclist,
            car_speed_init: v_car,
            vru_speed_init: v_vru,
            long_dist: long,
            lat_dist: lat,
            sight_obstruction: SightObstruction::No,
            location: loc,
            original_collision_speed: v_car,
        }
    }

    #[test]
    fn recovers_planted_linear_relation() {
        // v_coll = 0.8·v_init − 2 + N(0, 0.5)
        let mut rng = stream(7, "speed-test", 0);
        let crashes: Vec<CrashRecord> = (0..120)
            .map(|_| {
                let v = rng.gen_range(10.0..60.0);
                crash(
                    v,
                    rng.gen_range(3.0..20.0),
                    rng.gen_range(10.0..80.0),
                    rng.gen_range(-5.0..5.0),
                    if rng.gen::<f64>() < 0.5 {
                        Location::Urban
                    } else {
                        Location::Rural
                    },
                )
            })
            .collect();
        let noise: Vec<f64> = (0..120)
            .map(|_| {
                // Box–Muller from two uniforms.
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen::<f64>();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() * 0.5
            })
            .collect();
        let data: Vec<(&CrashRecord, f64)> = crashes
            .iter()
            .zip(&noise)
            .map(|(c, e)| (c, 0.8 * c.car_speed_init - 2.0 + e))
            .collect();
        let model = fit_speed_model(UseCase::Uc3, Algorithm::A1, &data).unwrap();
        assert!(
            model.selected_covariates.contains(&Covariate::CarSpeedInit),
            "{:?}",
            model.selected_covariates
        );
        let slope_idx = model
            .columns
            .iter()
            .position(|c| *c == DesignColumn::CarSpeedInit)
            .unwrap();
        let slope = model.coefficients[slope_idx];
        assert!((slope - 0.8).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn aic_selection_is_minimal_over_admissible_subsets() {
        // Exhaustive re-check on a small instance: no admissible subset may
        // have strictly lower AIC than the chosen one.
        let mut rng = stream(11, "speed-aic", 0);
        let crashes: Vec<CrashRecord> = (0..40)
            .map(|_| {
                crash(
                    rng.gen_range(10.0..60.0),
                    rng.gen_range(3.0..20.0),
                    rng.gen_range(10.0..80.0),
                    rng.gen_range(-5.0..5.0),
                    if rng.gen::<f64>() < 0.5 {
                        Location::Urban
                    } else {
                        Location::Rural
                    },
                )
            })
            .collect();
        let data: Vec<(&CrashRecord, f64)> = crashes
            .iter()
            .map(|c| (c, 0.5 * c.car_speed_init + 0.2 * c.long_dist))
            .collect();
        let model = fit_speed_model(UseCase::Uc3, Algorithm::A1, &data).unwrap();
        // Any admissible subset re-fitted by hand must have AIC >= chosen.
        for mask in 0u32..64 {
            let subset: Vec<Covariate> = Covariate::ALL
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, c)| *c)
                .collect();
            let columns = build_columns(&subset, &data);
            let k = columns.len();
            if k >= data.len() {
                continue;
            }
            let x = DMatrix::from_fn(data.len(), k, |r, c| columns[c].feature(data[r].0));
            if scaled_condition(&x) > CONDITION_LIMIT || max_vif(&x) > VIF_LIMIT {
                continue;
            }
            let y = DVector::from_iterator(data.len(), data.iter().map(|(_, v)| *v));
            if let Some(fit) = ols(&x, &y) {
                let aic = gaussian_aic(data.len(), fit.rss, k);
                assert!(
                    aic >= model.aic - 1e-9,
                    "subset {subset:?} has lower AIC {aic} than chosen {}",
                    model.aic
                );
            }
        }
    }

    #[test]
    fn duplicated_predictor_rejected_by_vif() {
        // car speed == 2·vru speed exactly: any subset holding both is
        // perfectly collinear and must be skipped, so the winner never
        // contains both.
        let crashes: Vec<CrashRecord> = (0..30)
            .map(|i| {
                let v = 10.0 + i as f64;
                crash(v, v / 2.0, 20.0 + i as f64, 1.0, Location::Urban)
            })
            .collect();
        let data: Vec<(&CrashRecord, f64)> = crashes
            .iter()
            .map(|c| (c, 0.7 * c.car_speed_init))
            .collect();
        let model = fit_speed_model(UseCase::Uc3, Algorithm::A1, &data).unwrap();
        let both = model.selected_covariates.contains(&Covariate::CarSpeedInit)
            && model.selected_covariates.contains(&Covariate::VruSpeedInit);
        assert!(
            !both,
            "collinear pair selected: {:?}",
            model.selected_covariates
        );
    }

    #[test]
    fn too_few_collisions_errors() {
        let c = crash(40.0, 10.0, 30.0, 1.0, Location::Urban);
        let data: Vec<(&CrashRecord, f64)> = (0..5).map(|_| (&c, 20.0)).collect();
        assert!(matches!(
            fit_speed_model(UseCase::Uc3, Algorithm::A1, &data),
            Err(SeverityError::TooFewCollisions { n: 5, .. })
        ));
    }

    #[test]
    fn exact_fit_guarded_by_rss_floor() {
        let crashes: Vec<CrashRecord> = (0..20)
            .map(|i| crash(10.0 + i as f64, 5.0, 20.0, 1.0, Location::Urban))
            .collect();
        let data: Vec<(&CrashRecord, f64)> = crashes
            .iter()
            .map(|c| (c, 0.5 * c.car_speed_init))
            .collect();
        let model = fit_speed_model(UseCase::Uc3, Algorithm::A1, &data).unwrap();
        assert!(model.aic.is_finite());
    }

    #[test]
    fn intercept_only_predicts_mean_everywhere() {
        let model = intercept_only_model(UseCase::Uc3, Algorithm::A1, &[20.0, 25.0, 30.0]);
        let c = crash(50.0, 10.0, 30.0, 1.0, Location::Rural);
        let pred = predict_collision_speed(&model, &c);
        assert_eq!(pred.point, 25);
    }

    #[test]
    fn predictions_clamped_then_rounded() {
        let mut model = intercept_only_model(UseCase::Uc3, Algorithm::A1, &[25.0, 25.0]);
        model.coefficients = vec![-3.0];
        let c = crash(40.0, 10.0, 30.0, 1.0, Location::Urban);
        assert_eq!(predict_collision_speed(&model, &c).point, 0);
        model.coefficients = vec![41.5];
        assert_eq!(predict_collision_speed(&model, &c).point, 40);
        let (lo, hi) = predict_collision_speed(&model, &c).interval_90;
        assert!(lo >= 0.0 && hi <= 40.0);
    }
}
