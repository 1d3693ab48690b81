//! Kinematic counterfactual re-simulation of car-to-VRU conflicts.
//!
//! Each crash is replayed under one of four intervention algorithms with
//! fixed-step integration (default 5 ms). Crossing and turning use cases are
//! reduced to a point-conflict geometry: the car approaches the conflict
//! point along its path while the VRU crosses the path laterally at constant
//! velocity. Longitudinal use cases track the closing gap and a static
//! lateral overlap which emergency steering (Algorithm 4) can widen.
//!
//! A collision occurs when the car front reaches the conflict point while
//! the VRU centre lies within the combined half-width corridor; the collision
//! speed is the car speed at that instant, found by within-step linear
//! interpolation.

mod engine;
mod generate;

pub use engine::{
    batch_simulate, run_baseline, run_counterfactual, run_counterfactual_traced, stopping_distance,
    BaselineOutcome, SimTrace, UcSummary,
};
pub use generate::generate_use_case;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::domain::{AlgorithmFamily, GeometryClass, UseCase};

/// km/h → m/s, exactly 1/3.6.
pub const KMH_TO_MS: f64 = 1.0 / 3.6;
/// m/s → km/h.
pub const MS_TO_KMH: f64 = 3.6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("algorithm {algorithm} is only applicable to longitudinal use cases (crash {crash_id} is {use_case})")]
    Geometry {
        algorithm: Algorithm,
        use_case: UseCase,
        crash_id: String,
    },
}

/// Simulation parameters. Defaults follow the assessed prototype systems:
/// comfort braking at 4 m/s² inside the TTC window [0.5 s, 1.5 s] and
/// emergency braking at 9 m/s².
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Integration step, seconds.
    pub dt: f64,
    /// Comfort braking deceleration, m/s².
    pub comfort_decel: f64,
    /// Emergency braking deceleration, m/s².
    pub emergency_decel: f64,
    /// Comfort braking engages at TTC ≤ this, seconds.
    pub comfort_ttc_on: f64,
    /// Comfort braking window lower edge, seconds.
    pub comfort_ttc_off: f64,
    /// Algorithm 1 escalates to emergency braking below this TTC, seconds.
    pub emergency_ttc: f64,
    /// Car evasive lateral acceleration capability, m/s².
    pub car_lat_accel_max: f64,
    /// VRU evasive lateral acceleration capability, m/s².
    pub vru_lat_accel_max: f64,
    /// Sensor range, metres.
    pub detection_range: f64,
    /// An obstructed VRU becomes visible within this distance of the
    /// conflict point, metres.
    pub obstruction_reveal_dist: f64,
    /// Car half-width, metres.
    pub car_half_width: f64,
    /// VRU half-width, metres.
    pub vru_half_width: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.005,
            comfort_decel: 4.0,
            emergency_decel: 9.0,
            comfort_ttc_on: 1.5,
            comfort_ttc_off: 0.5,
            emergency_ttc: 0.5,
            car_lat_accel_max: 5.0,
            vru_lat_accel_max: 1.5,
            detection_range: 80.0,
            obstruction_reveal_dist: 10.0,
            car_half_width: 0.9,
            vru_half_width: 0.35,
        }
    }
}

impl SimConfig {
    /// Combined collision corridor half-width, metres.
    pub fn corridor(&self) -> f64 {
        self.car_half_width + self.vru_half_width
    }

    pub fn validate(&self) -> Result<(), String> {
        // NaNs fail every comparison, so require the positive form.
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.dt) {
            return Err(format!("dt must be > 0, got {}", self.dt));
        }
        if !positive(self.comfort_decel) || !positive(self.emergency_decel) {
            return Err("decelerations must be > 0".into());
        }
        if !positive(self.comfort_ttc_off) || self.comfort_ttc_on <= self.comfort_ttc_off {
            return Err(format!(
                "need comfort_ttc_on > comfort_ttc_off > 0, got {} / {}",
                self.comfort_ttc_on, self.comfort_ttc_off
            ));
        }
        if !positive(self.car_lat_accel_max) || !positive(self.vru_lat_accel_max) {
            return Err("lateral accelerations must be > 0".into());
        }
        if !positive(self.detection_range)
            || !positive(self.obstruction_reveal_dist)
            || !positive(self.car_half_width)
            || !positive(self.vru_half_width)
        {
            return Err("ranges and widths must be > 0".into());
        }
        Ok(())
    }

    /// Apply one `key=value` pair. Unknown keys are errors.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| format!("{key}: not a number: `{value}`"))?;
        match key {
            "dt" => self.dt = v,
            "comfort_decel" => self.comfort_decel = v,
            "emergency_decel" => self.emergency_decel = v,
            "comfort_ttc_on" => self.comfort_ttc_on = v,
            "comfort_ttc_off" => self.comfort_ttc_off = v,
            "emergency_ttc" => self.emergency_ttc = v,
            "car_lat_accel_max" => self.car_lat_accel_max = v,
            "vru_lat_accel_max" => self.vru_lat_accel_max = v,
            "detection_range" => self.detection_range = v,
            "obstruction_reveal_dist" => self.obstruction_reveal_dist = v,
            "car_half_width" => self.car_half_width = v,
            "vru_half_width" => self.vru_half_width = v,
            _ => return Err(format!("unknown simulator key `{key}`")),
        }
        Ok(())
    }

    /// Parse a flat `key=value` text (one pair per line, `#` comments).
    pub fn from_kv_text(text: &str) -> Result<SimConfig, String> {
        let mut cfg = SimConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value, got `{line}`", i + 1))?;
            cfg.apply_kv(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serialize as flat `key=value` text (round-trips via `from_kv_text`).
    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let pairs = [
            ("dt", self.dt),
            ("comfort_decel", self.comfort_decel),
            ("emergency_decel", self.emergency_decel),
            ("comfort_ttc_on", self.comfort_ttc_on),
            ("comfort_ttc_off", self.comfort_ttc_off),
            ("emergency_ttc", self.emergency_ttc),
            ("car_lat_accel_max", self.car_lat_accel_max),
            ("vru_lat_accel_max", self.vru_lat_accel_max),
            ("detection_range", self.detection_range),
            ("obstruction_reveal_dist", self.obstruction_reveal_dist),
            ("car_half_width", self.car_half_width),
            ("vru_half_width", self.vru_half_width),
        ];
        for (k, v) in pairs {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}

/// The four prototype intervention algorithms.
///
/// All algorithms apply comfort braking inside the TTC window. A1 escalates
/// to emergency braking below a TTC threshold; A2 when the collision is
/// unavoidable by evasive manoeuvres of both car and VRU; A3 when
/// unavoidable for the car alone; A4 (longitudinal only) steers if the
/// collision is avoidable by steering but not by braking, otherwise brakes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    A1,
    A2,
    A3,
    A4,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::A1, Algorithm::A2, Algorithm::A3, Algorithm::A4];

    pub fn applicable_to(self, geometry: GeometryClass) -> bool {
        match self {
            Algorithm::A4 => geometry == GeometryClass::Longitudinal,
            _ => true,
        }
    }

    /// Which family of physical tests updates this algorithm's priors.
    pub fn family(self) -> AlgorithmFamily {
        match self {
            Algorithm::A4 => AlgorithmFamily::BrakingAndSteering,
            _ => AlgorithmFamily::BrakingOnly,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::A1 => f.write_str("A1"),
            Algorithm::A2 => f.write_str("A2"),
            Algorithm::A3 => f.write_str("A3"),
            Algorithm::A4 => f.write_str("A4"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A1" => Ok(Algorithm::A1),
            "A2" => Ok(Algorithm::A2),
            "A3" => Ok(Algorithm::A3),
            "A4" => Ok(Algorithm::A4),
            other => Err(format!("unknown algorithm `{other}` (expected A1..A4)")),
        }
    }
}

/// Strongest intervention the system performed during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intervention {
    None,
    ComfortBrake,
    EmergencyBrake,
    Steer,
    SteerThenBrake,
}

impl fmt::Display for Intervention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Intervention::None => "None",
            Intervention::ComfortBrake => "ComfortBrake",
            Intervention::EmergencyBrake => "EmergencyBrake",
            Intervention::Steer => "Steer",
            Intervention::SteerThenBrake => "SteerThenBrake",
        };
        f.write_str(s)
    }
}

impl FromStr for Intervention {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            t if t.eq_ignore_ascii_case("None") => Ok(Intervention::None),
            t if t.eq_ignore_ascii_case("ComfortBrake") => Ok(Intervention::ComfortBrake),
            t if t.eq_ignore_ascii_case("EmergencyBrake") => Ok(Intervention::EmergencyBrake),
            t if t.eq_ignore_ascii_case("Steer") => Ok(Intervention::Steer),
            t if t.eq_ignore_ascii_case("SteerThenBrake") => Ok(Intervention::SteerThenBrake),
            other => Err(format!("unknown intervention `{other}`")),
        }
    }
}

/// Result of re-simulating one crash under one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub crash_id: String,
    pub algorithm: Algorithm,
    pub avoided: bool,
    /// km/h; 0 when avoided.
    pub collision_speed: f64,
    /// km/h; `car_speed_init − collision_speed`.
    pub speed_reduction: f64,
    pub intervention: Intervention,
}

/// Time to collision, seconds; `f64::INFINITY` when no collision is
/// predicted under constant behaviour.
///
/// Conventions:
/// * Crossing/Turning: `car_dist` is the car front's distance to the conflict
///   point, `vru_offset` the VRU's signed lateral offset from the car path
///   and `vru_vel` its signed lateral velocity. Finite only while the VRU is
///   predicted (constant velocity) to occupy the conflict corridor within the
///   car's arrival horizon.
/// * Longitudinal: `car_dist` is the closing gap, `vru_offset` the current
///   relative lateral overlap offset and `vru_vel` the VRU's forward speed;
///   finite only while closing and laterally overlapping.
pub fn ttc(
    car_dist: f64,
    car_speed: f64,
    vru_offset: f64,
    vru_vel: f64,
    geometry: GeometryClass,
    corridor_half_width: f64,
) -> f64 {
    match geometry {
        GeometryClass::Crossing | GeometryClass::Turning => {
            if car_speed <= 0.0 || car_dist <= 0.0 {
                return f64::INFINITY;
            }
            let t_arrive = car_dist / car_speed;
            // Minimum |lateral offset| over [0, t_arrive] at constant velocity.
            let min_abs = if vru_vel == 0.0 {
                vru_offset.abs()
            } else {
                let t_zero = -vru_offset / vru_vel;
                if (0.0..=t_arrive).contains(&t_zero) {
                    0.0
                } else {
                    vru_offset
                        .abs()
                        .min((vru_offset + vru_vel * t_arrive).abs())
                }
            };
            if min_abs <= corridor_half_width {
                t_arrive
            } else {
                f64::INFINITY
            }
        }
        GeometryClass::Longitudinal => {
            let closing = car_speed - vru_vel;
            if closing <= 0.0 || car_dist <= 0.0 || vru_offset.abs() > corridor_half_width {
                f64::INFINITY
            } else {
                car_dist / closing
            }
        }
    }
}

/// True iff the required lateral clearance cannot be built up within the
/// remaining time at the actor's maximal lateral acceleration:
/// `clearance > a_lat/2 · t²`. A non-positive clearance (already clear) is
/// always avoidable.
pub fn steering_unavoidable(required_clearance: f64, t_remaining: f64, a_lat_max: f64) -> bool {
    required_clearance > 0.5 * a_lat_max * t_remaining * t_remaining
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ttc_crossing_is_distance_over_speed() {
        // Conflict point 20 m ahead at 10 m/s, VRU dwelling in the corridor.
        let t = ttc(20.0, 10.0, 0.5, 0.0, GeometryClass::Crossing, 1.25);
        assert!((t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ttc_longitudinal_closing() {
        let t = ttc(15.0, 12.0, 0.0, 4.0, GeometryClass::Longitudinal, 1.25);
        assert!((t - 1.875).abs() < 1e-12);
    }

    #[test]
    fn ttc_infinite_when_not_closing() {
        assert!(ttc(15.0, 3.0, 0.0, 4.0, GeometryClass::Longitudinal, 1.25).is_infinite());
    }

    #[test]
    fn ttc_infinite_when_vru_clears_corridor() {
        // VRU 10 m out moving away: never inside the corridor within horizon.
        assert!(ttc(20.0, 10.0, 10.0, 2.0, GeometryClass::Crossing, 1.25).is_infinite());
        // VRU crossing through the corridor within the horizon: finite.
        assert!(ttc(20.0, 10.0, 4.0, -3.0, GeometryClass::Crossing, 1.25).is_finite());
    }

    #[test]
    fn steering_unavoidable_examples() {
        // Already clear.
        assert!(!steering_unavoidable(0.0, 0.2, 5.0));
        // 1.25 m needed, 0.5 s available at 5 m/s²: achievable 0.625 m.
        assert!(steering_unavoidable(1.25, 0.5, 5.0));
        // Same clearance with 1 s available: achievable 2.5 m.
        assert!(!steering_unavoidable(1.25, 1.0, 5.0));
    }

    #[test]
    fn sim_config_kv_round_trip_and_unknown_key() {
        let cfg = SimConfig::default();
        let text = cfg.to_kv_text();
        let back = SimConfig::from_kv_text(&text).unwrap();
        assert_eq!(cfg, back);
        assert!(SimConfig::from_kv_text("nope = 1\n").is_err());
        assert!(SimConfig::from_kv_text("dt = -0.1\n").is_err());
    }
}
