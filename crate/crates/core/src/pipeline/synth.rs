//! Synthetic person data accompanying generated crashes.
//!
//! In-depth persons pair 1:1 (by row order) with the generated crashes: the
//! person is the VRU of the crash, carrying its collision speed and an
//! injury sampled from a documented ordered-probit ground truth with age and
//! rural effects. Target-region persons are an independent, larger
//! population with drifted covariates, standing in for official road crash
//! data.

use rand::Rng;

use crate::domain::{CrashRecord, InjurySeverity, Location, PersonRecord, VruType};
use crate::numeric::phi;
use crate::rng::stream;

/// Injury ground truth: latent threshold model with speed slope `beta`,
/// thresholds `tau1 < tau2`, plus age and rural shifts. Chosen so the
/// synthetic world carries enough fatalities for tree extrapolation.
struct GroundTruth {
    beta: f64,
    tau1: f64,
    tau2: f64,
    age_slope: f64,
    rural_shift: f64,
}

fn ground_truth(vru: VruType) -> GroundTruth {
    match vru {
        VruType::Cyclist => GroundTruth {
            beta: 0.034,
            tau1: 1.15,
            tau2: 2.55,
            age_slope: 0.010,
            rural_shift: 0.30,
        },
        VruType::Pedestrian => GroundTruth {
            beta: 0.036,
            tau1: 0.95,
            tau2: 2.35,
            age_slope: 0.011,
            rural_shift: 0.30,
        },
    }
}

fn sample_injury(vru: VruType, speed: f64, age: f64, urban: bool, u: f64) -> InjurySeverity {
    let gt = ground_truth(vru);
    let eta =
        gt.beta * speed + gt.age_slope * (age - 45.0) + if urban { 0.0 } else { gt.rural_shift };
    let p_slight = phi(gt.tau1 - eta);
    let p_le_serious = phi(gt.tau2 - eta);
    if u < p_slight {
        InjurySeverity::Slight
    } else if u < p_le_serious {
        InjurySeverity::Serious
    } else {
        InjurySeverity::Fatal
    }
}

const GENDERS: [&str; 2] = ["M", "F"];
const WEATHERS: [&str; 4] = ["Clear", "Rain", "Snow", "Fog"];
const SURFACES: [&str; 3] = ["Dry", "Wet", "Icy"];
const LIGHTS: [&str; 3] = ["Daylight", "Dusk", "Dark"];
const SITES: [&str; 3] = ["Intersection", "Straight", "Crossing"];

fn pick<'a>(rng: &mut impl Rng, options: &[&'a str], weights: &[f64]) -> &'a str {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (opt, w) in options.iter().zip(weights) {
        acc += w;
        if r < acc {
            return opt;
        }
    }
    options[options.len() - 1]
}

/// One in-depth person per crash, in crash order.
pub fn generate_persons_indepth(crashes: &[CrashRecord], seed: u64) -> Vec<PersonRecord> {
    crashes
        .iter()
        .enumerate()
        .map(|(i, crash)| {
            let mut rng = stream(seed, "persons-indepth", i as u64);
            let age = rng.gen_range(8..=88) as f64;
            let urban = crash.location == Location::Urban;
            let injury = sample_injury(
                crash.vru_type,
                crash.original_collision_speed,
                age,
                urban,
                rng.gen(),
            );
            PersonRecord {
                vru_type: crash.vru_type,
                injury,
                age,
                gender: pick(&mut rng, &GENDERS, &[0.65, 0.35]).to_string(),
                weather: pick(&mut rng, &WEATHERS, &[0.70, 0.20, 0.06, 0.04]).to_string(),
                surface: pick(&mut rng, &SURFACES, &[0.75, 0.20, 0.05]).to_string(),
                light: pick(&mut rng, &LIGHTS, &[0.70, 0.12, 0.18]).to_string(),
                site: pick(&mut rng, &SITES, &[0.45, 0.35, 0.20]).to_string(),
                urban,
                collision_speed: crash.original_collision_speed,
            }
        })
        .collect()
}

/// Target-region population: `scale` persons per in-depth person of each VRU
/// type, with a mild covariate drift (older, less urban, more dark).
pub fn generate_persons_target(
    indepth: &[PersonRecord],
    scale: usize,
    seed: u64,
) -> Vec<PersonRecord> {
    let n_cyclist = indepth
        .iter()
        .filter(|p| p.vru_type == VruType::Cyclist)
        .count();
    let n_pedestrian = indepth.len() - n_cyclist;
    let mut out = Vec::with_capacity(indepth.len() * scale);
    for (vru, count) in [
        (VruType::Cyclist, n_cyclist * scale),
        (VruType::Pedestrian, n_pedestrian * scale),
    ] {
        let label = format!("persons-target/{vru}");
        for i in 0..count {
            let mut rng = stream(seed, &label, i as u64);
            let age = rng.gen_range(12..=92) as f64;
            let urban = rng.gen::<f64>() < 0.68;
            let speed = rng.gen_range(8.0_f64..68.0).round();
            let injury = sample_injury(vru, speed, age, urban, rng.gen());
            out.push(PersonRecord {
                vru_type: vru,
                injury,
                age,
                gender: pick(&mut rng, &GENDERS, &[0.6, 0.4]).to_string(),
                weather: pick(&mut rng, &WEATHERS, &[0.65, 0.22, 0.08, 0.05]).to_string(),
                surface: pick(&mut rng, &SURFACES, &[0.70, 0.24, 0.06]).to_string(),
                light: pick(&mut rng, &LIGHTS, &[0.62, 0.13, 0.25]).to_string(),
                site: pick(&mut rng, &SITES, &[0.40, 0.38, 0.22]).to_string(),
                urban,
                collision_speed: speed,
            });
        }
    }
    out
}
