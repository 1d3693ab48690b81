//! Fixed-step counterfactual integration.

use rayon::prelude::*;

use crate::domain::{CrashRecord, GeometryClass, SightObstruction, UseCase};

use super::{
    steering_unavoidable, ttc, Algorithm, Intervention, SimConfig, SimError, SimOutcome, KMH_TO_MS,
    MS_TO_KMH,
};

/// Hard cap on simulated time; any run this long has long since diverged
/// from a collision course and counts as avoided.
const MAX_SIM_TIME_S: f64 = 300.0;

/// Longitudinal motion of the car along its path.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CarMotion {
    pub pos: f64,
    pub speed: f64,
}

impl CarMotion {
    /// Advance one step under `decel` (≥ 0), trapezoidal in position.
    fn step(&mut self, decel: f64, dt: f64) {
        let v1 = (self.speed - decel * dt).max(0.0);
        self.pos += 0.5 * (self.speed + v1) * dt;
        self.speed = v1;
    }
}

/// Distance covered by pure braking from `v0_kmh` at `decel` m/s² until
/// standstill, using the engine's integrator. Within `v·dt` of `v²/(2a)`.
pub fn stopping_distance(v0_kmh: f64, decel: f64, dt: f64) -> f64 {
    let mut car = CarMotion {
        pos: 0.0,
        speed: v0_kmh * KMH_TO_MS,
    };
    while car.speed > 0.0 {
        car.step(decel, dt);
    }
    car.pos
}

/// Extra diagnostics from a traced run, used by physics sanity checks.
#[derive(Debug, Clone, Copy)]
pub struct SimTrace {
    /// Distance travelled while any braking was active, metres.
    pub braked_distance_m: f64,
    /// Simulated time until collision / avoidance was decided, seconds.
    pub event_time_s: f64,
}

/// Outcome of a no-intervention baseline rollout.
#[derive(Debug, Clone, Copy)]
pub struct BaselineOutcome {
    pub collided: bool,
    /// km/h; car speed at the conflict point (0 when no collision occurs).
    pub collision_speed_kmh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Baseline,
    Algo(Algorithm),
}

struct Rollout {
    collided: bool,
    collision_speed_ms: f64,
    comfort_used: bool,
    emergency_used: bool,
    steer_used: bool,
    trace: SimTrace,
}

/// Re-simulate `crash` under `algorithm`.
pub fn run_counterfactual(
    crash: &CrashRecord,
    algorithm: Algorithm,
    config: &SimConfig,
) -> Result<SimOutcome, SimError> {
    run_counterfactual_traced(crash, algorithm, config).map(|(outcome, _)| outcome)
}

/// As [`run_counterfactual`], additionally returning integration diagnostics.
pub fn run_counterfactual_traced(
    crash: &CrashRecord,
    algorithm: Algorithm,
    config: &SimConfig,
) -> Result<(SimOutcome, SimTrace), SimError> {
    if !algorithm.applicable_to(crash.use_case.geometry()) {
        return Err(SimError::Geometry {
            algorithm,
            use_case: crash.use_case,
            crash_id: crash.id.clone(),
        });
    }
    let r = rollout(crash, Mode::Algo(algorithm), config);
    let intervention = match (r.steer_used, r.emergency_used, r.comfort_used) {
        (true, true, _) => Intervention::SteerThenBrake,
        (true, false, _) => Intervention::Steer,
        (false, true, _) => Intervention::EmergencyBrake,
        (false, false, true) => Intervention::ComfortBrake,
        (false, false, false) => Intervention::None,
    };
    let outcome = if r.collided {
        // The assessed system never worsens the recorded outcome.
        let speed = (r.collision_speed_ms * MS_TO_KMH).min(crash.original_collision_speed);
        SimOutcome {
            crash_id: crash.id.clone(),
            algorithm,
            avoided: false,
            collision_speed: speed,
            speed_reduction: crash.car_speed_init - speed,
            intervention,
        }
    } else {
        SimOutcome {
            crash_id: crash.id.clone(),
            algorithm,
            avoided: true,
            collision_speed: 0.0,
            speed_reduction: crash.car_speed_init,
            intervention,
        }
    };
    Ok((outcome, r.trace))
}

/// Replay a crash without any intervention. The generator uses this to solve
/// the original collision speed, and the self-consistency oracle replays
/// stored records through it.
pub fn run_baseline(crash: &CrashRecord, config: &SimConfig) -> BaselineOutcome {
    let r = rollout(crash, Mode::Baseline, config);
    BaselineOutcome {
        collided: r.collided,
        collision_speed_kmh: if r.collided {
            r.collision_speed_ms * MS_TO_KMH
        } else {
            0.0
        },
    }
}

fn rollout(crash: &CrashRecord, mode: Mode, config: &SimConfig) -> Rollout {
    let geometry = crash.use_case.geometry();
    let dt = config.dt;
    let corridor = config.corridor();
    let hides = matches!(
        crash.sight_obstruction,
        SightObstruction::NotPermanent | SightObstruction::Permanent
    );

    let mut car = CarMotion {
        pos: -crash.long_dist,
        speed: crash.car_speed_init * KMH_TO_MS,
    };
    let vru_speed = crash.vru_speed_init * KMH_TO_MS;

    // Crossing: signed lateral VRU position, moving through the conflict
    // point. Longitudinal: `lat` is the relative lateral overlap offset that
    // steering widens; the VRU travels ahead of the car at `vru_speed`.
    let longitudinal = geometry == GeometryClass::Longitudinal;
    let side = if crash.lat_dist >= 0.0 { 1.0 } else { -1.0 };
    let mut lat = crash.lat_dist;
    let lat_vel_crossing = if longitudinal { 0.0 } else { -side * vru_speed };
    let mut steer_vel = 0.0_f64; // rate of |lat| growth while steering
    let mut vru_pos = 0.0_f64; // longitudinal VRU coordinate (gap frame)

    let mut detected = false;
    let mut steering = false;
    let mut steering_done = false;
    let mut comfort_used = false;
    let mut emergency_used = false;
    let mut steer_used = false;
    let mut braked_distance = 0.0_f64;
    let mut t = 0.0_f64;

    let finish = |collided: bool,
                  speed_ms: f64,
                  comfort: bool,
                  emergency: bool,
                  steer: bool,
                  braked: f64,
                  t: f64| Rollout {
        collided,
        collision_speed_ms: speed_ms,
        comfort_used: comfort,
        emergency_used: emergency,
        steer_used: steer,
        trace: SimTrace {
            braked_distance_m: braked,
            event_time_s: t,
        },
    };

    loop {
        // --- geometry of this instant -----------------------------------
        let gap = if longitudinal {
            vru_pos - car.pos
        } else {
            -car.pos
        };
        let vru_dist_to_conflict = if longitudinal { 0.0 } else { lat.abs() };

        // --- termination before any control -----------------------------
        if t > MAX_SIM_TIME_S || car.speed <= 0.0 {
            return finish(
                false,
                0.0,
                comfort_used,
                emergency_used,
                steer_used,
                braked_distance,
                t,
            );
        }
        if longitudinal && car.speed <= vru_speed && !steering {
            // Not closing and never will be: avoided.
            return finish(
                false,
                0.0,
                comfort_used,
                emergency_used,
                steer_used,
                braked_distance,
                t,
            );
        }

        // --- perception ---------------------------------------------------
        if !detected {
            let dist = if longitudinal {
                (gap * gap + lat * lat).sqrt()
            } else {
                (car.pos * car.pos + lat * lat).sqrt()
            };
            let revealed = !hides || vru_dist_to_conflict <= config.obstruction_reveal_dist;
            if dist <= config.detection_range && revealed {
                detected = true;
            }
        }

        // --- control ------------------------------------------------------
        let mut decel = 0.0_f64;
        let mut steer_accel = 0.0_f64;
        if detected && mode != Mode::Baseline {
            let time_to_conflict = if longitudinal {
                ttc(gap, car.speed, lat, vru_speed, geometry, corridor)
            } else {
                ttc(gap, car.speed, lat, lat_vel_crossing, geometry, corridor)
            };

            if time_to_conflict >= config.comfort_ttc_off
                && time_to_conflict <= config.comfort_ttc_on
            {
                decel = config.comfort_decel;
                comfort_used = true;
            }

            let algo = match mode {
                Mode::Algo(a) => a,
                Mode::Baseline => unreachable!(),
            };
            match algo {
                Algorithm::A1 => {
                    if time_to_conflict < config.emergency_ttc {
                        decel = config.emergency_decel;
                        emergency_used = true;
                    }
                }
                Algorithm::A2 | Algorithm::A3 => {
                    if time_to_conflict.is_finite() {
                        let clearance = required_clearance(
                            lat,
                            if longitudinal { 0.0 } else { lat_vel_crossing },
                            time_to_conflict,
                            corridor,
                        );
                        let car_cannot = steering_unavoidable(
                            clearance,
                            time_to_conflict,
                            config.car_lat_accel_max,
                        );
                        let vru_cannot = steering_unavoidable(
                            clearance,
                            time_to_conflict,
                            config.vru_lat_accel_max,
                        );
                        let escalate = match algo {
                            Algorithm::A2 => car_cannot && vru_cannot,
                            _ => car_cannot,
                        };
                        if escalate {
                            decel = config.emergency_decel;
                            emergency_used = true;
                        }
                    }
                }
                Algorithm::A4 => {
                    // Longitudinal only (checked by the caller).
                    if steering {
                        // No longitudinal speed loss during the lane offset,
                        // unless the remaining time no longer suffices.
                        decel = 0.0;
                        if !steering_done {
                            let closing = car.speed - vru_speed;
                            if closing > 0.0 {
                                let t_close = gap / closing;
                                let predicted = lat.abs()
                                    + steer_vel * t_close
                                    + 0.5 * config.car_lat_accel_max * t_close * t_close;
                                if predicted < corridor {
                                    decel = config.emergency_decel;
                                    emergency_used = true;
                                }
                            }
                            steer_accel = config.car_lat_accel_max;
                        }
                    } else if time_to_conflict.is_finite() {
                        let closing = car.speed - vru_speed;
                        let brake_avoids = closing <= 0.0
                            || closing * closing / (2.0 * config.emergency_decel) < gap;
                        if !brake_avoids {
                            let clearance = corridor - lat.abs();
                            if !steering_unavoidable(
                                clearance,
                                time_to_conflict,
                                config.car_lat_accel_max,
                            ) {
                                steering = true;
                                steer_used = true;
                                steer_accel = config.car_lat_accel_max;
                                decel = 0.0;
                            } else {
                                decel = config.emergency_decel;
                                emergency_used = true;
                            }
                        }
                    }
                }
            }
        }

        // --- integrate one step --------------------------------------------
        let car_prev = car;
        let lat_prev = lat;
        let gap_prev = gap;
        car.step(decel, dt);
        if decel > 0.0 {
            braked_distance += car.pos - car_prev.pos;
        }
        if longitudinal {
            vru_pos += vru_speed * dt;
            if steer_accel > 0.0 && !steering_done {
                // Grow |lat| away from the VRU at constant lateral accel.
                let sv1 = steer_vel + steer_accel * dt;
                let dlat = 0.5 * (steer_vel + sv1) * dt;
                lat += side * dlat;
                steer_vel = sv1;
                if lat.abs() >= corridor {
                    steering_done = true;
                    steer_vel = 0.0;
                }
            }
        } else {
            lat += lat_vel_crossing * dt;
        }
        t += dt;

        // --- collision / passage check -------------------------------------
        let gap_now = if longitudinal {
            vru_pos - car.pos
        } else {
            -car.pos
        };
        if gap_prev > 0.0 && gap_now <= 0.0 {
            // Car front reaches the conflict point within this step.
            let theta = gap_prev / (gap_prev - gap_now);
            let speed_at = car_prev.speed + theta * (car.speed - car_prev.speed);
            let lat_at = lat_prev + theta * (lat - lat_prev);
            if lat_at.abs() <= corridor {
                return finish(
                    true,
                    speed_at,
                    comfort_used,
                    emergency_used,
                    steer_used,
                    braked_distance,
                    t,
                );
            }
            return finish(
                false,
                0.0,
                comfort_used,
                emergency_used,
                steer_used,
                braked_distance,
                t,
            );
        }
    }
}

/// Clearance the evading actor must build before the car arrives: corridor
/// half-width minus the predicted lateral miss at arrival.
fn required_clearance(lat: f64, lat_vel: f64, t_remaining: f64, corridor: f64) -> f64 {
    let predicted = (lat + lat_vel * t_remaining).abs();
    corridor - predicted
}

/// Per-use-case avoided/mitigated summary. Every simulated crash is avoided
/// or mitigated, so the two percentages partition 100%.
#[derive(Debug, Clone, PartialEq)]
pub struct UcSummary {
    pub use_case: UseCase,
    pub total: usize,
    pub avoided: usize,
    pub mitigated: usize,
    pub pct_avoided: f64,
    pub pct_mitigated: f64,
}

/// Simulate a batch under one algorithm. Execution is parallel but the
/// outcome list is in input order and bit-identical for any worker count.
pub fn batch_simulate(
    crashes: &[CrashRecord],
    algorithm: Algorithm,
    config: &SimConfig,
) -> Result<(Vec<SimOutcome>, Vec<UcSummary>), SimError> {
    let outcomes: Vec<SimOutcome> = crashes
        .par_iter()
        .map(|crash| run_counterfactual(crash, algorithm, config))
        .collect::<Result<_, _>>()?;

    let mut summary: Vec<UcSummary> = Vec::new();
    for uc in UseCase::ALL {
        let in_uc: Vec<&SimOutcome> = crashes
            .iter()
            .zip(&outcomes)
            .filter(|(c, _)| c.use_case == uc)
            .map(|(_, o)| o)
            .collect();
        if in_uc.is_empty() {
            continue;
        }
        let total = in_uc.len();
        let avoided = in_uc.iter().filter(|o| o.avoided).count();
        let pct_avoided = 100.0 * avoided as f64 / total as f64;
        summary.push(UcSummary {
            use_case: uc,
            total,
            avoided,
            mitigated: total - avoided,
            pct_avoided,
            pct_mitigated: 100.0 - pct_avoided,
        });
    }
    Ok((outcomes, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Location, VruType};

    fn crossing_crash(car_kmh: f64, vru_kmh: f64, long_dist: f64, lat_dist: f64) -> CrashRecord {
        CrashRecord {
            id: "t1".into(),
            use_case: UseCase::Uc3,
            vru_type: VruType::Cyclist,
            car_speed_init: car_kmh,
            vru_speed_init: vru_kmh,
            long_dist,
            lat_dist,
            sight_obstruction: SightObstruction::No,
            location: Location::Urban,
            original_collision_speed: car_kmh,
        }
    }

    fn longitudinal_crash(car_kmh: f64, vru_kmh: f64, gap: f64, overlap: f64) -> CrashRecord {
        CrashRecord {
            id: "t2".into(),
            use_case: UseCase::Uc9,
            vru_type: VruType::Cyclist,
            car_speed_init: car_kmh,
            vru_speed_init: vru_kmh,
            long_dist: gap,
            lat_dist: overlap,
            sight_obstruction: SightObstruction::No,
            location: Location::Rural,
            original_collision_speed: car_kmh,
        }
    }

    /// A crash on a true collision course: VRU timed to be at the conflict
    /// point when the unbraked car arrives.
    fn collision_course(car_kmh: f64, vru_kmh: f64, t_star: f64) -> CrashRecord {
        let long = car_kmh * KMH_TO_MS * t_star;
        let lat = vru_kmh * KMH_TO_MS * t_star;
        crossing_crash(car_kmh, vru_kmh, long, lat)
    }

    #[test]
    fn stopping_distance_matches_closed_form() {
        let d = stopping_distance(50.0, 9.0, 0.005);
        let v = 50.0 * KMH_TO_MS;
        let expected = v * v / 18.0;
        assert!(
            (d - expected).abs() <= v * 0.005,
            "stopping distance {d} vs {expected}"
        );
    }

    #[test]
    fn baseline_collides_at_initial_speed_on_collision_course() {
        let crash = collision_course(40.0, 15.0, 4.0);
        let cfg = SimConfig::default();
        let base = run_baseline(&crash, &cfg);
        assert!(base.collided);
        assert!((base.collision_speed_kmh - 40.0).abs() < 0.01);
    }

    #[test]
    fn a1_never_exceeds_baseline_speed_and_mitigates_or_avoids() {
        let cfg = SimConfig::default();
        for (car, vru, t_star) in [(50.0, 15.0, 3.0), (30.0, 18.0, 4.5), (60.0, 12.0, 2.8)] {
            let crash = collision_course(car, vru, t_star);
            let out = run_counterfactual(&crash, Algorithm::A1, &cfg).unwrap();
            if !out.avoided {
                assert!(
                    out.collision_speed < crash.original_collision_speed,
                    "({car},{vru},{t_star}): {out:?}"
                );
            }
            assert!(out.collision_speed >= 0.0 && out.collision_speed <= car);
        }
    }

    #[test]
    fn low_speed_early_detection_is_avoided() {
        // 12 km/h with 5 s to the conflict: comfort braking alone stops the car.
        let crash = collision_course(12.0, 15.0, 5.0);
        let out = run_counterfactual(&crash, Algorithm::A1, &SimConfig::default()).unwrap();
        assert!(out.avoided, "{out:?}");
        assert_eq!(out.collision_speed, 0.0);
    }

    #[test]
    fn fast_crash_with_dwelling_vru_is_mitigated_not_avoided() {
        // 50 km/h with only 1 s to the conflict and a slow VRU dwelling in
        // the corridor: emergency braking from the TTC threshold cannot stop
        // in time, so the crash is mitigated at a reduced speed.
        let crash = collision_course(50.0, 2.0, 1.0);
        let out = run_counterfactual(&crash, Algorithm::A1, &SimConfig::default()).unwrap();
        assert!(!out.avoided, "{out:?}");
        assert!(out.collision_speed < 50.0);
        assert!(out.collision_speed > 0.0);
    }

    #[test]
    fn a4_steers_when_braking_cannot_avoid() {
        // Tight gap at high closing speed: braking cannot avoid, steering can.
        let crash = longitudinal_crash(70.0, 15.0, 18.0, 0.3);
        let out = run_counterfactual(&crash, Algorithm::A4, &SimConfig::default()).unwrap();
        assert!(out.avoided, "{out:?}");
        assert!(matches!(
            out.intervention,
            Intervention::Steer | Intervention::SteerThenBrake
        ));
    }

    #[test]
    fn a4_brakes_when_steering_cannot_clear() {
        // With a crippled lateral capability the lane offset is never
        // achievable, so A4 must fall back to mitigating emergency braking.
        let cfg = SimConfig {
            car_lat_accel_max: 0.05,
            ..SimConfig::default()
        };
        let crash = longitudinal_crash(70.0, 15.0, 18.0, 0.3);
        let out = run_counterfactual(&crash, Algorithm::A4, &cfg).unwrap();
        assert!(
            matches!(
                out.intervention,
                Intervention::EmergencyBrake | Intervention::SteerThenBrake
            ),
            "{out:?}"
        );
        assert!(out.avoided || out.collision_speed < 70.0);
    }

    #[test]
    fn a4_on_crossing_is_geometry_error() {
        let crash = collision_course(40.0, 15.0, 3.0);
        assert!(matches!(
            run_counterfactual(&crash, Algorithm::A4, &SimConfig::default()),
            Err(SimError::Geometry { .. })
        ));
    }

    #[test]
    fn a1_handles_longitudinal_geometry() {
        let crash = longitudinal_crash(50.0, 15.0, 40.0, 0.2);
        let out = run_counterfactual(&crash, Algorithm::A1, &SimConfig::default()).unwrap();
        assert!(out.avoided || out.collision_speed < 50.0);
    }

    #[test]
    fn deterministic_outcomes() {
        let crash = collision_course(47.0, 13.0, 3.7);
        let cfg = SimConfig::default();
        let a = run_counterfactual(&crash, Algorithm::A2, &cfg).unwrap();
        let b = run_counterfactual(&crash, Algorithm::A2, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_summary_partitions_totals() {
        let crashes: Vec<CrashRecord> = (0..20)
            .map(|i| {
                let mut c = collision_course(20.0 + i as f64 * 2.0, 15.0, 3.0 + 0.1 * i as f64);
                c.id = format!("c{i}");
                c
            })
            .collect();
        let (outcomes, summary) =
            batch_simulate(&crashes, Algorithm::A1, &SimConfig::default()).unwrap();
        assert_eq!(outcomes.len(), 20);
        let s = &summary[0];
        assert_eq!(s.avoided + s.mitigated, s.total);
        assert!((s.pct_avoided + s.pct_mitigated - 100.0).abs() < 1e-12);
    }

    #[test]
    fn all_low_speed_early_detection_batch_is_fully_avoided() {
        let crashes: Vec<CrashRecord> = (0..15)
            .map(|i| {
                let mut c = collision_course(10.0 + (i % 3) as f64, 14.0, 5.0);
                c.id = format!("lo{i}");
                c
            })
            .collect();
        let (_, summary) = batch_simulate(&crashes, Algorithm::A1, &SimConfig::default()).unwrap();
        assert_eq!(summary[0].avoided, summary[0].total);
        assert_eq!(summary[0].pct_avoided, 100.0);
        assert_eq!(summary[0].pct_mitigated, 0.0);
    }

    #[test]
    fn batch_results_identical_across_worker_counts() {
        let crashes: Vec<CrashRecord> = (0..40)
            .map(|i| {
                let mut c = collision_course(
                    20.0 + i as f64,
                    5.0 + (i % 12) as f64,
                    2.6 + 0.07 * i as f64,
                );
                c.id = format!("p{i}");
                c
            })
            .collect();
        let cfg = SimConfig::default();
        let baseline = batch_simulate(&crashes, Algorithm::A2, &cfg).unwrap();
        for workers in [1usize, 8] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .unwrap();
            let run = pool
                .install(|| batch_simulate(&crashes, Algorithm::A2, &cfg))
                .unwrap();
            assert_eq!(run.0, baseline.0, "{workers} workers");
            assert_eq!(run.1, baseline.1);
        }
    }

    #[test]
    fn energy_sanity_under_braking() {
        let cfg = SimConfig::default();
        for (car, vru, t_star) in [(55.0, 16.0, 2.5), (45.0, 14.0, 3.5)] {
            let crash = collision_course(car, vru, t_star);
            let (out, trace) = run_counterfactual_traced(&crash, Algorithm::A1, &cfg).unwrap();
            if !out.avoided && trace.braked_distance_m > 0.0 {
                let v0 = car * KMH_TO_MS;
                let vc = out.collision_speed * KMH_TO_MS;
                let bound = v0 * v0 - 2.0 * cfg.comfort_decel * trace.braked_distance_m;
                let tol = 2.0 * v0 * (1.0 * KMH_TO_MS); // 1 km/h discretization slack
                assert!(vc * vc <= bound + tol, "vc²={} bound={}", vc * vc, bound);
            }
        }
    }
}
