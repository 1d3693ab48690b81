//! Synthetic scenario generation.
//!
//! Replaces proprietary in-depth pre-crash data with reproducible synthetic
//! conflicts. Every generated record is on a collision course: replayed with
//! no intervention it collides, and the stored original collision speed is
//! solved from that baseline rollout. Values are quantized to 3 decimals so
//! CSV emission at 6 significant digits round-trips exactly.

use rand::Rng;

use crate::domain::{CrashRecord, GeometryClass, Location, SightObstruction, UseCase};
use crate::rng::stream;

use super::engine::run_baseline;
use super::{SimConfig, KMH_TO_MS};

/// Dummy speeds used on the test track, km/h; generated VRU speeds are
/// uniform within ±30% of these.
const CYCLIST_BASE_KMH: f64 = 15.0;
const PEDESTRIAN_BASE_KMH: f64 = 5.0;

/// Time from scenario start to the unbraked car's arrival at the conflict
/// point, seconds.
const T_STAR_RANGE: (f64, f64) = (2.5, 6.0);

/// Fraction of the corridor half-width the VRU's arrival offset may occupy;
/// keeps quantization noise from breaking the collision course.
const OFFSET_FRACTION: f64 = 0.8;

fn quantize3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Approach side of the crossing VRU, by use-case definition (+1 from the
/// right of the car path, −1 from the left).
fn approach_side(uc: UseCase) -> f64 {
    match uc {
        UseCase::Uc4 | UseCase::Uc6 | UseCase::Uc1 => -1.0,
        _ => 1.0,
    }
}

/// Per-use-case sight-obstruction distribution
/// (No / NotPermanent / Permanent / Other).
fn obstruction_weights(uc: UseCase) -> [f64; 4] {
    match uc.geometry() {
        GeometryClass::Longitudinal => [0.90, 0.0, 0.0, 0.10],
        _ if uc == UseCase::Uc11 => [0.10, 0.40, 0.45, 0.05],
        _ => [0.70, 0.15, 0.10, 0.05],
    }
}

/// Per-use-case probability of an urban location.
fn urban_probability(uc: UseCase) -> f64 {
    match uc {
        UseCase::Uc9 => 0.4,
        UseCase::Uc12 => 0.5,
        _ => 0.8,
    }
}

fn draw_obstruction(r: f64, weights: [f64; 4]) -> SightObstruction {
    let kinds = [
        SightObstruction::No,
        SightObstruction::NotPermanent,
        SightObstruction::Permanent,
        SightObstruction::Other,
    ];
    let mut acc = 0.0;
    for (k, w) in kinds.iter().zip(weights) {
        acc += w;
        if r < acc {
            return *k;
        }
    }
    SightObstruction::Other
}

/// Generate `count` synthetic crashes for `uc`. Reproducible: the same
/// `(uc, count, seed)` yields the same list for a given configuration.
pub fn generate_use_case(
    uc: UseCase,
    count: usize,
    seed: u64,
    config: &SimConfig,
) -> Vec<CrashRecord> {
    let geometry = uc.geometry();
    let longitudinal = geometry == GeometryClass::Longitudinal;
    let (speed_lo, speed_hi) = if longitudinal { (30, 80) } else { (10, 60) };
    let vru_base = match uc.vru_type() {
        crate::domain::VruType::Cyclist => CYCLIST_BASE_KMH,
        crate::domain::VruType::Pedestrian => PEDESTRIAN_BASE_KMH,
    };
    let corridor = config.corridor();
    let label = format!("generate/{uc}");

    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut record = None;
        for attempt in 0..64_u64 {
            let mut rng = stream(seed, &label, ((i as u64) << 8) | attempt);
            let car_kmh = rng.gen_range(speed_lo..=speed_hi) as f64;
            let vru_kmh = quantize3(vru_base * rng.gen_range(0.7..=1.3));
            let t_star: f64 = rng.gen_range(T_STAR_RANGE.0..=T_STAR_RANGE.1);
            let offset = rng.gen_range(-OFFSET_FRACTION..=OFFSET_FRACTION) * corridor;

            let car_ms = car_kmh * KMH_TO_MS;
            let vru_ms = vru_kmh * KMH_TO_MS;
            let (long_dist, lat_dist) = if longitudinal {
                // Gap chosen so the unbraked car draws level after t_star.
                let closing = car_ms - vru_ms;
                (quantize3(closing * t_star), quantize3(offset))
            } else {
                // VRU timed to sit at `offset` when the unbraked car arrives.
                let side = approach_side(uc);
                let y0 = side * (vru_ms * t_star) + offset;
                (quantize3(car_ms * t_star), quantize3(y0))
            };

            let sight_obstruction = draw_obstruction(rng.gen::<f64>(), obstruction_weights(uc));
            let location = if rng.gen::<f64>() < urban_probability(uc) {
                Location::Urban
            } else {
                Location::Rural
            };

            let mut crash = CrashRecord {
                id: format!("{uc}-{i:05}"),
                use_case: uc,
                vru_type: uc.vru_type(),
                car_speed_init: car_kmh,
                vru_speed_init: vru_kmh,
                long_dist,
                lat_dist,
                sight_obstruction,
                location,
                original_collision_speed: car_kmh,
            };
            let baseline = run_baseline(&crash, config);
            if baseline.collided {
                crash.original_collision_speed =
                    quantize3(baseline.collision_speed_kmh).min(car_kmh);
                record = Some(crash);
                break;
            }
        }
        out.push(record.unwrap_or_else(|| {
            panic!("generate_use_case: no collision course found for {uc} record {i}")
        }));
    }
    out
}
