//! Run configuration: flat `key=value` text files with CLI overrides.
//! Unknown keys are hard errors; silent typos corrupt studies.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::benefit::DeploymentParams;
use crate::domain::UseCase;
use crate::extrapolation::TreeParams;
use crate::sim::{Algorithm, SimConfig};

/// Injury-risk-curve family used in the dose-response stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrcFamily {
    OrderedProbit,
    Logistic,
}

impl fmt::Display for IrcFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IrcFamily::OrderedProbit => f.write_str("OrderedProbit"),
            IrcFamily::Logistic => f.write_str("Logistic"),
        }
    }
}

impl FromStr for IrcFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            t if t.eq_ignore_ascii_case("OrderedProbit") => Ok(IrcFamily::OrderedProbit),
            t if t.eq_ignore_ascii_case("Logistic") => Ok(IrcFamily::Logistic),
            other => Err(format!("unknown irc_family `{other}`")),
        }
    }
}

/// How simulation and test results are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatisticalMode {
    Bayesian,
    Frequentist,
}

impl fmt::Display for StatisticalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatisticalMode::Bayesian => f.write_str("Bayesian"),
            StatisticalMode::Frequentist => f.write_str("Frequentist"),
        }
    }
}

impl FromStr for StatisticalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            t if t.eq_ignore_ascii_case("Bayesian") => Ok(StatisticalMode::Bayesian),
            t if t.eq_ignore_ascii_case("Frequentist") => Ok(StatisticalMode::Frequentist),
            other => Err(format!("unknown statistical_mode `{other}`")),
        }
    }
}

/// Default crash counts per use case for synthetic generation, matching the
/// reference per-use-case crash frequencies.
pub const DEFAULT_UC_COUNTS: [(UseCase, usize); 10] = [
    (UseCase::Uc1, 131),
    (UseCase::Uc2, 143),
    (UseCase::Uc3, 244),
    (UseCase::Uc4, 216),
    (UseCase::Uc5, 496),
    (UseCase::Uc6, 105),
    (UseCase::Uc9, 21),
    (UseCase::Uc10, 342),
    (UseCase::Uc11, 216),
    (UseCase::Uc12, 20),
];

/// Full pipeline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Weight of one test result relative to one simulated crash.
    pub w: f64,
    pub quantile_low: f64,
    pub quantile_high: f64,
    pub algorithms: Vec<Algorithm>,
    pub irc_family: IrcFamily,
    pub statistical_mode: StatisticalMode,
    pub deployment: DeploymentParams,
    pub sim: SimConfig,
    /// Synthetic crash counts per use case (generate command).
    pub uc_counts: BTreeMap<UseCase, usize>,
    /// Target-region persons per in-depth person (generate command).
    pub target_person_scale: usize,
    /// Extrapolation tree limits.
    pub tree: TreeParams,
    pub out_dir: PathBuf,
    crashes_path: Option<PathBuf>,
    tests_path: Option<PathBuf>,
    persons_indepth_path: Option<PathBuf>,
    persons_target_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            w: 2.0,
            quantile_low: 0.05,
            quantile_high: 0.95,
            algorithms: Algorithm::ALL.to_vec(),
            irc_family: IrcFamily::OrderedProbit,
            statistical_mode: StatisticalMode::Bayesian,
            deployment: DeploymentParams {
                market_penetration: 0.2,
                user_acceptance: 0.82,
            },
            sim: SimConfig::default(),
            uc_counts: DEFAULT_UC_COUNTS.iter().copied().collect(),
            target_person_scale: 50,
            tree: TreeParams::default(),
            out_dir: PathBuf::from("out"),
            crashes_path: None,
            tests_path: None,
            persons_indepth_path: None,
            persons_target_path: None,
        }
    }
}

impl RunConfig {
    /// Input paths default into the output directory, so `generate` feeds
    /// the later stages without configuration.
    pub fn crashes_path(&self) -> PathBuf {
        self.crashes_path
            .clone()
            .unwrap_or_else(|| self.out_dir.join("crashes.csv"))
    }
    pub fn tests_path(&self) -> PathBuf {
        self.tests_path
            .clone()
            .unwrap_or_else(|| self.out_dir.join("tests.csv"))
    }
    pub fn persons_indepth_path(&self) -> PathBuf {
        self.persons_indepth_path
            .clone()
            .unwrap_or_else(|| self.out_dir.join("persons_indepth.csv"))
    }
    pub fn persons_target_path(&self) -> PathBuf {
        self.persons_target_path
            .clone()
            .unwrap_or_else(|| self.out_dir.join("persons_target.csv"))
    }

    /// Apply one `key=value` pair; unknown keys are errors.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        let parse_f64 = |v: &str| -> Result<f64, String> {
            v.parse::<f64>()
                .map_err(|_| format!("{key}: not a number: `{v}`"))
        };
        match key {
            "seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| format!("seed: not a 64-bit integer: `{v}`"))?
            }
            "w" => self.w = parse_f64(v)?,
            "quantile_low" => self.quantile_low = parse_f64(v)?,
            "quantile_high" => self.quantile_high = parse_f64(v)?,
            "algorithms" => {
                let mut algorithms = Vec::new();
                for part in v.split(',') {
                    algorithms.push(part.parse::<Algorithm>()?);
                }
                algorithms.sort_unstable();
                algorithms.dedup();
                if algorithms.is_empty() {
                    return Err("algorithms: empty list".into());
                }
                self.algorithms = algorithms;
            }
            "irc_family" => self.irc_family = v.parse()?,
            "statistical_mode" => self.statistical_mode = v.parse()?,
            "market_penetration" => self.deployment.market_penetration = parse_f64(v)?,
            "user_acceptance" => self.deployment.user_acceptance = parse_f64(v)?,
            "target_person_scale" => {
                self.target_person_scale = v
                    .parse()
                    .map_err(|_| format!("target_person_scale: not an integer: `{v}`"))?
            }
            "tree_max_depth" => {
                self.tree.max_depth = v
                    .parse()
                    .map_err(|_| format!("tree_max_depth: not an integer: `{v}`"))?
            }
            "tree_min_leaf" => {
                let leaf: usize = v
                    .parse()
                    .map_err(|_| format!("tree_min_leaf: not an integer: `{v}`"))?;
                if leaf == 0 {
                    return Err("tree_min_leaf must be >= 1".into());
                }
                self.tree.min_leaf = leaf;
            }
            "out" => self.out_dir = PathBuf::from(v),
            "crashes" => self.crashes_path = Some(PathBuf::from(v)),
            "tests" => self.tests_path = Some(PathBuf::from(v)),
            "persons_indepth" => self.persons_indepth_path = Some(PathBuf::from(v)),
            "persons_target" => self.persons_target_path = Some(PathBuf::from(v)),
            _ => {
                if let Some(sim_key) = key.strip_prefix("sim.") {
                    self.sim.apply_kv(sim_key, v)?;
                } else if let Some(uc_label) = key.strip_prefix("count_") {
                    let uc: UseCase = match uc_label.to_ascii_uppercase().parse_label_helper() {
                        Some(uc) => uc,
                        None => return Err(format!("unknown configuration key `{key}`")),
                    };
                    let count = v
                        .parse()
                        .map_err(|_| format!("{key}: not an integer: `{v}`"))?;
                    self.uc_counts.insert(uc, count);
                } else {
                    return Err(format!("unknown configuration key `{key}`"));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.w < 0.0 || !self.w.is_finite() {
            return Err(format!("w must be >= 0, got {}", self.w));
        }
        if !(self.quantile_low > 0.0
            && self.quantile_low < 0.5
            && self.quantile_high > 0.5
            && self.quantile_high < 1.0)
        {
            return Err(format!(
                "need 0 < quantile_low < 0.5 < quantile_high < 1, got {} / {}",
                self.quantile_low, self.quantile_high
            ));
        }
        self.deployment.validate()?;
        self.sim.validate()?;
        Ok(())
    }

    /// Parse a config file body on top of the defaults.
    pub fn from_kv_text(text: &str) -> Result<RunConfig, String> {
        let mut cfg = RunConfig::default();
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

    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::from_kv_text(&text)
    }

    /// Canonical key=value snapshot for the run manifest.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("seed".into(), self.seed.to_string());
        map.insert("w".into(), self.w.to_string());
        map.insert("quantile_low".into(), self.quantile_low.to_string());
        map.insert("quantile_high".into(), self.quantile_high.to_string());
        map.insert(
            "algorithms".into(),
            self.algorithms
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        map.insert("irc_family".into(), self.irc_family.to_string());
        map.insert("statistical_mode".into(), self.statistical_mode.to_string());
        map.insert(
            "market_penetration".into(),
            self.deployment.market_penetration.to_string(),
        );
        map.insert(
            "user_acceptance".into(),
            self.deployment.user_acceptance.to_string(),
        );
        map.insert(
            "target_person_scale".into(),
            self.target_person_scale.to_string(),
        );
        map.insert("tree_max_depth".into(), self.tree.max_depth.to_string());
        map.insert("tree_min_leaf".into(), self.tree.min_leaf.to_string());
        map.insert("out".into(), self.out_dir.display().to_string());
        map.insert("crashes".into(), self.crashes_path().display().to_string());
        map.insert("tests".into(), self.tests_path().display().to_string());
        map.insert(
            "persons_indepth".into(),
            self.persons_indepth_path().display().to_string(),
        );
        map.insert(
            "persons_target".into(),
            self.persons_target_path().display().to_string(),
        );
        for (uc, count) in &self.uc_counts {
            map.insert(
                format!("count_{}", uc.to_string().to_lowercase()),
                count.to_string(),
            );
        }
        for line in self.sim.to_kv_text().lines() {
            if let Some((k, v)) = line.split_once('=') {
                map.insert(format!("sim.{}", k.trim()), v.trim().to_string());
            }
        }
        map
    }
}

/// Parse "UC5"-style labels without exposing the domain parser's
/// out-of-scope machinery; UC7/UC8 are simply unknown config keys here.
trait ParseLabelHelper {
    fn parse_label_helper(&self) -> Option<UseCase>;
}

impl ParseLabelHelper for String {
    fn parse_label_helper(&self) -> Option<UseCase> {
        UseCase::ALL
            .iter()
            .copied()
            .find(|uc| uc.to_string() == *self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.w, 2.0);
        assert_eq!(cfg.deployment.factor(), 0.164);
        let total: usize = cfg.uc_counts.values().sum();
        assert_eq!(total, 1934);
    }

    #[test]
    fn unknown_key_is_hard_error() {
        assert!(RunConfig::from_kv_text("sneed = 4\n").is_err());
        assert!(RunConfig::from_kv_text("sim.nope = 4\n").is_err());
        assert!(RunConfig::from_kv_text("count_uc7 = 4\n").is_err());
    }

    #[test]
    fn parses_overrides_and_comments() {
        let cfg = RunConfig::from_kv_text(
            "# study config\nseed = 7\nw = 10\nalgorithms = A1,A4\nsim.dt = 0.01\ncount_uc5 = 12\nout = /tmp/x\ntree_max_depth = 2\ntree_min_leaf = 60\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.w, 10.0);
        assert_eq!(cfg.algorithms, vec![Algorithm::A1, Algorithm::A4]);
        assert_eq!(cfg.sim.dt, 0.01);
        assert_eq!(cfg.uc_counts[&UseCase::Uc5], 12);
        assert_eq!(cfg.crashes_path(), PathBuf::from("/tmp/x/crashes.csv"));
        assert_eq!(cfg.tree.max_depth, 2);
        assert_eq!(cfg.tree.min_leaf, 60);
        assert!(RunConfig::from_kv_text("tree_min_leaf = 0\n").is_err());
    }

    #[test]
    fn invalid_quantiles_rejected() {
        assert!(RunConfig::from_kv_text("quantile_low = 0.6\n").is_err());
        assert!(RunConfig::from_kv_text("w = -1\n").is_err());
    }
}
