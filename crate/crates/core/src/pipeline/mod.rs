//! Pipeline orchestration: generate → simulate → assess → extrapolate →
//! sensitivity → report, with seeded reproducibility and run manifests.
//!
//! Every stage is a pure function of (inputs, config, seed); outputs are
//! bit-identical across runs and worker counts. All intermediate tables are
//! written next to the final ones in the output directory.

mod config;
mod report;
mod synth;

pub use config::{IrcFamily, RunConfig, StatisticalMode, DEFAULT_UC_COUNTS};
pub use report::render_report;
pub use synth::{generate_persons_indepth, generate_persons_target};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::avoidance::{
    beta_quantile, build_speed_bins, fit_curve_auto, frequentist_estimate, AvoidanceCurve,
    AvoidanceError, Bound, CurveForm, CurvePoint, SpeedBin,
};
use crate::benefit::{
    aggregate_benefit, posterior_benefit, scale_benefit, BenefitError, BenefitEstimate,
    BenefitScope,
};
use crate::domain::{
    self, emit_table, format_number, Cell, CrashRecord, DomainError, GeometryClass, InjurySeverity,
    PersonRecord, TestObservation, UseCase, VruType,
};
use crate::extrapolation::{
    apply_tree, build_tree, compute_factors, extrapolate_reduction, render_tree, route,
    ExtrapolationError,
};
use crate::severity::{
    fit_logistic_irc, fit_ordered_probit, fit_speed_model, intercept_only_model,
    predict_collision_speed, InjuryLevel, InjuryRiskModel, SeverityError, SpeedModel,
};
use crate::sim::{batch_simulate, generate_use_case, Algorithm, SimError, SimOutcome, UcSummary};

/// Bundled proving-ground test fixture (all collisions avoided).
pub const PROVING_GROUND_TESTS_CSV: &str = include_str!("../../fixtures/proving_ground_tests.csv");

/// One algorithm's simulation pass: (algorithm, crash indices, outcomes in
/// index order, per-use-case summary).
pub type AlgorithmRun = (Algorithm, Vec<usize>, Vec<SimOutcome>, Vec<UcSummary>);

const LEVELS: [InjuryLevel; 2] = [InjuryLevel::Fatal, InjuryLevel::SeriousOrWorse];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl PipelineError {
    /// CLI exit code: 2 input/validation, 3 numerical non-convergence,
    /// 4 configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 4,
            PipelineError::Input(_) => 2,
            PipelineError::Numerical(_) => 3,
        }
    }
}

impl From<DomainError> for PipelineError {
    fn from(e: DomainError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

impl From<SimError> for PipelineError {
    fn from(e: SimError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

fn avoidance_err(context: String, e: AvoidanceError) -> PipelineError {
    match e {
        AvoidanceError::NonConvergence { .. } => {
            PipelineError::Numerical(format!("{context}: {e}"))
        }
        other => PipelineError::Input(format!("{context}: {other}")),
    }
}

fn severity_err(context: String, e: SeverityError) -> PipelineError {
    match e {
        SeverityError::NonConvergence { .. } | SeverityError::Separation(_) => {
            PipelineError::Numerical(format!("{context}: {e}"))
        }
        other => PipelineError::Input(format!("{context}: {other}")),
    }
}

fn benefit_err(context: String, e: BenefitError) -> PipelineError {
    PipelineError::Input(format!("{context}: {e}"))
}

fn extrapolation_err(context: String, e: ExtrapolationError) -> PipelineError {
    PipelineError::Input(format!("{context}: {e}"))
}

fn io_err(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Input(format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub input_digests: BTreeMap<String, String>,
    pub row_counts: BTreeMap<String, u64>,
    pub wall_clock_ms: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, cfg: &RunConfig) -> RunManifest {
        RunManifest {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: cfg.seed,
            config: cfg.snapshot(),
            input_digests: BTreeMap::new(),
            row_counts: BTreeMap::new(),
            wall_clock_ms: BTreeMap::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn digest_input(&mut self, path: &Path) -> Result<(), PipelineError> {
        let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        self.input_digests.insert(
            path.display().to_string(),
            format!("{:x}", hasher.finalize()),
        );
        Ok(())
    }

    fn write(&self, out_dir: &Path) -> Result<PathBuf, PipelineError> {
        let path = out_dir.join(format!("manifest_{}.json", self.command));
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| PipelineError::Input(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, body).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<(), PipelineError> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// Outcome of the `generate` command.
#[derive(Debug)]
pub struct GenerateOutput {
    pub n_crashes: usize,
    pub n_tests: usize,
    pub n_persons_indepth: usize,
    pub n_persons_target: usize,
    pub manifest_path: PathBuf,
}

/// Generate synthetic crashes (per-use-case counts from the config), the
/// bundled test fixture, paired in-depth persons and a target-region
/// population, all under the configured master seed.
pub fn run_generate(cfg: &RunConfig) -> Result<GenerateOutput, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    ensure_out_dir(cfg)?;
    let mut manifest = RunManifest::new("generate", cfg);
    let t0 = Instant::now();

    let mut crashes = Vec::new();
    for uc in UseCase::ALL {
        let count = cfg.uc_counts.get(&uc).copied().unwrap_or(0);
        crashes.extend(generate_use_case(uc, count, cfg.seed, &cfg.sim));
    }
    let crashes_path = cfg.crashes_path();
    domain::emit_crashes(&crashes_path, &crashes)?;
    manifest
        .row_counts
        .insert("crashes".into(), crashes.len() as u64);
    manifest
        .wall_clock_ms
        .insert("crashes".into(), t0.elapsed().as_millis() as u64);

    let t1 = Instant::now();
    let tests_path = cfg.tests_path();
    std::fs::write(&tests_path, PROVING_GROUND_TESTS_CSV).map_err(|e| io_err(&tests_path, e))?;
    let n_tests = domain::parse_tests(&tests_path)?.len();
    manifest.row_counts.insert("tests".into(), n_tests as u64);
    manifest
        .wall_clock_ms
        .insert("tests".into(), t1.elapsed().as_millis() as u64);

    let t2 = Instant::now();
    let persons = generate_persons_indepth(&crashes, cfg.seed);
    domain::emit_persons(&cfg.persons_indepth_path(), &persons)?;
    let target = generate_persons_target(&persons, cfg.target_person_scale, cfg.seed);
    domain::emit_persons(&cfg.persons_target_path(), &target)?;
    manifest
        .row_counts
        .insert("persons_indepth".into(), persons.len() as u64);
    manifest
        .row_counts
        .insert("persons_target".into(), target.len() as u64);
    manifest
        .wall_clock_ms
        .insert("persons".into(), t2.elapsed().as_millis() as u64);

    for path in [
        &crashes_path,
        &tests_path,
        &cfg.persons_indepth_path(),
        &cfg.persons_target_path(),
    ] {
        manifest.outputs.push(path.display().to_string());
    }
    let manifest_path = manifest.write(&cfg.out_dir)?;
    Ok(GenerateOutput {
        n_crashes: crashes.len(),
        n_tests,
        n_persons_indepth: persons.len(),
        n_persons_target: target.len(),
        manifest_path,
    })
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn applicable_indices(crashes: &[CrashRecord], algorithm: Algorithm) -> Vec<usize> {
    crashes
        .iter()
        .enumerate()
        .filter(|(_, c)| algorithm.applicable_to(c.use_case.geometry()))
        .map(|(i, _)| i)
        .collect()
}

fn check_a4(cfg_algorithms: &[Algorithm], crashes: &[CrashRecord]) -> Result<(), PipelineError> {
    if cfg_algorithms.contains(&Algorithm::A4)
        && !crashes
            .iter()
            .any(|c| c.use_case.geometry() == GeometryClass::Longitudinal)
    {
        return Err(PipelineError::Input(
            "algorithm A4 requires longitudinal use cases (UC9/UC12) but none are present in the crash data".into(),
        ));
    }
    Ok(())
}

fn simulate_all(
    crashes: &[CrashRecord],
    algorithms: &[Algorithm],
    sim: &crate::sim::SimConfig,
) -> Result<Vec<AlgorithmRun>, PipelineError> {
    let mut out = Vec::new();
    for &alg in algorithms {
        let indices = applicable_indices(crashes, alg);
        let subset: Vec<CrashRecord> = indices.iter().map(|&i| crashes[i].clone()).collect();
        let (outcomes, summary) = batch_simulate(&subset, alg, sim)?;
        out.push((alg, indices, outcomes, summary));
    }
    Ok(out)
}

fn emit_outcomes(path: &Path, runs: &[AlgorithmRun]) -> Result<(), PipelineError> {
    let header = [
        "crash_id",
        "algorithm",
        "avoided",
        "collision_speed_kmh",
        "speed_reduction_kmh",
        "intervention",
    ];
    let mut rows = Vec::new();
    for (_, _, outcomes, _) in runs {
        for o in outcomes {
            rows.push(vec![
                Cell::Str(o.crash_id.clone()),
                Cell::Str(o.algorithm.to_string()),
                Cell::Str(o.avoided.to_string()),
                Cell::Num(o.collision_speed),
                Cell::Num(o.speed_reduction),
                Cell::Str(o.intervention.to_string()),
            ]);
        }
    }
    emit_table(path, &header, &rows)?;
    Ok(())
}

fn emit_summary(path: &Path, runs: &[AlgorithmRun]) -> Result<(), PipelineError> {
    let header = [
        "algorithm",
        "use_case",
        "total",
        "avoided",
        "mitigated",
        "pct_avoided",
        "pct_mitigated",
    ];
    let mut rows = Vec::new();
    for (alg, _, _, summary) in runs {
        for s in summary {
            rows.push(vec![
                Cell::Str(alg.to_string()),
                Cell::Str(s.use_case.to_string()),
                Cell::Int(s.total as i64),
                Cell::Int(s.avoided as i64),
                Cell::Int(s.mitigated as i64),
                Cell::Num(s.pct_avoided),
                Cell::Num(s.pct_mitigated),
            ]);
        }
    }
    emit_table(path, &header, &rows)?;
    Ok(())
}

/// Outcome of the `simulate` command.
#[derive(Debug)]
pub struct SimulateOutput {
    pub n_outcomes: usize,
    pub manifest_path: PathBuf,
}

/// Re-simulate all crashes under every configured algorithm and write
/// `outcomes.csv` and the per-use-case avoided/mitigated summary.
pub fn run_simulate(cfg: &RunConfig) -> Result<SimulateOutput, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    ensure_out_dir(cfg)?;
    let mut manifest = RunManifest::new("simulate", cfg);
    let t0 = Instant::now();
    let crashes = domain::parse_crashes(&cfg.crashes_path())?;
    manifest.digest_input(&cfg.crashes_path())?;
    check_a4(&cfg.algorithms, &crashes)?;
    let runs = simulate_all(&crashes, &cfg.algorithms, &cfg.sim)?;
    let outcomes_path = cfg.out_dir.join("outcomes.csv");
    let summary_path = cfg.out_dir.join("summary.csv");
    emit_outcomes(&outcomes_path, &runs)?;
    emit_summary(&summary_path, &runs)?;
    let n_outcomes: usize = runs.iter().map(|(_, _, o, _)| o.len()).sum();
    manifest
        .row_counts
        .insert("crashes".into(), crashes.len() as u64);
    manifest
        .row_counts
        .insert("outcomes".into(), n_outcomes as u64);
    manifest
        .wall_clock_ms
        .insert("simulate".into(), t0.elapsed().as_millis() as u64);
    manifest.outputs.push(outcomes_path.display().to_string());
    manifest.outputs.push(summary_path.display().to_string());
    let manifest_path = manifest.write(&cfg.out_dir)?;
    Ok(SimulateOutput {
        n_outcomes,
        manifest_path,
    })
}

// ---------------------------------------------------------------------------
// assess core
// ---------------------------------------------------------------------------

/// Statistical knobs of one assessment run (the sensitivity sweep varies
/// these against fixed inputs).
#[derive(Debug, Clone)]
pub struct AssessParams {
    pub w: f64,
    pub quantile_low: f64,
    pub quantile_high: f64,
    pub statistical_mode: StatisticalMode,
    pub irc_family: IrcFamily,
    pub algorithms: Vec<Algorithm>,
}

impl AssessParams {
    fn from_config(cfg: &RunConfig) -> AssessParams {
        AssessParams {
            w: cfg.w,
            quantile_low: cfg.quantile_low,
            quantile_high: cfg.quantile_high,
            statistical_mode: cfg.statistical_mode,
            irc_family: cfg.irc_family,
            algorithms: cfg.algorithms.clone(),
        }
    }
}

/// Everything assess computes for one (use case, algorithm) pair.
#[derive(Debug, Clone)]
pub struct UcAssessment {
    pub use_case: UseCase,
    pub algorithm: Algorithm,
    /// Indices into the crash list.
    pub indices: Vec<usize>,
    pub bins: Vec<SpeedBin>,
    pub curve: AvoidanceCurve,
    pub speed_model: SpeedModel,
}

/// Full in-memory result of an assessment run.
#[derive(Debug)]
pub struct Assessment {
    pub runs: Vec<AlgorithmRun>,
    pub assessments: Vec<UcAssessment>,
    pub irc_models: Vec<InjuryRiskModel>,
    /// Per (algorithm, use case, level), then per-algorithm aggregates.
    pub benefits: Vec<BenefitEstimate>,
    pub notes: Vec<String>,
}

impl Assessment {
    pub fn irc_for(&self, vru: VruType) -> &InjuryRiskModel {
        self.irc_models
            .iter()
            .find(|m| m.vru_type() == vru)
            .expect("IRC model fitted per VRU type")
    }

    pub fn assessment_for(&self, uc: UseCase, alg: Algorithm) -> Option<&UcAssessment> {
        self.assessments
            .iter()
            .find(|a| a.use_case == uc && a.algorithm == alg)
    }

    /// The aggregate estimate for (scope, algorithm, level).
    pub fn aggregate(
        &self,
        scope: BenefitScope,
        alg: Algorithm,
        level: InjuryLevel,
    ) -> Option<&BenefitEstimate> {
        self.benefits
            .iter()
            .find(|b| b.scope == scope && b.algorithm == alg && b.level == level)
    }
}

fn fit_irc_models(
    persons: &[PersonRecord],
    family: IrcFamily,
) -> Result<Vec<InjuryRiskModel>, PipelineError> {
    let mut models = Vec::new();
    for vru in [VruType::Cyclist, VruType::Pedestrian] {
        let subset: Vec<PersonRecord> = persons
            .iter()
            .filter(|p| p.vru_type == vru)
            .cloned()
            .collect();
        if subset.is_empty() {
            continue;
        }
        let context = format!("assess/irc {vru}");
        let model = match family {
            IrcFamily::OrderedProbit => {
                fit_ordered_probit(&subset).map_err(|e| severity_err(context, e))?
            }
            IrcFamily::Logistic => {
                fit_logistic_irc(&subset).map_err(|e| severity_err(context, e))?
            }
        };
        models.push(model);
    }
    if models.is_empty() {
        return Err(PipelineError::Input(
            "assess/irc: persons data contains no records".into(),
        ));
    }
    Ok(models)
}

/// Posterior per-bin curve points: Bayesian medians and quantiles, or the
/// frequentist pooled estimate with its Wilson interval. The frequentist
/// route reuses the same floored pseudo-counts, which makes its point
/// estimate exactly the Beta posterior mean.
fn curve_points(
    bins: &[SpeedBin],
    params: &AssessParams,
    tests: &[TestObservation],
) -> Vec<CurvePoint> {
    bins.iter()
        .map(|bin| match params.statistical_mode {
            StatisticalMode::Bayesian => CurvePoint {
                speed: bin.car_speed_init,
                p_median: beta_quantile(bin.posterior, 0.5),
                p_lower: beta_quantile(bin.posterior, params.quantile_low),
                p_upper: beta_quantile(bin.posterior, params.quantile_high),
            },
            StatisticalMode::Frequentist => {
                let at_speed: Vec<TestObservation> = tests
                    .iter()
                    .filter(|t| t.car_speed_init == bin.car_speed_init)
                    .cloned()
                    .collect();
                let (p_hat, (lo, hi)) =
                    frequentist_estimate((bin.prior.a, bin.prior.b), &at_speed, params.w);
                CurvePoint {
                    speed: bin.car_speed_init,
                    p_median: p_hat,
                    p_lower: lo,
                    p_upper: hi,
                }
            }
        })
        .collect()
}

/// The assessment core shared by `assess`, `sensitivity` and `extrapolate`.
pub fn compute_assessment(
    crashes: &[CrashRecord],
    tests: &[TestObservation],
    persons: &[PersonRecord],
    sim: &crate::sim::SimConfig,
    params: &AssessParams,
) -> Result<Assessment, PipelineError> {
    check_a4(&params.algorithms, crashes)?;
    let irc_models = fit_irc_models(persons, params.irc_family)?;
    let runs = simulate_all(crashes, &params.algorithms, sim)?;

    let mut assessments = Vec::new();
    let mut benefits = Vec::new();
    let mut notes = Vec::new();

    for (alg, indices, outcomes, _) in &runs {
        let alg = *alg;
        let mut per_alg: Vec<&BenefitEstimate> = Vec::new();
        let mut uc_estimates: Vec<BenefitEstimate> = Vec::new();
        for uc in UseCase::ALL {
            let in_uc: Vec<(usize, &SimOutcome)> = indices
                .iter()
                .zip(outcomes)
                .filter(|(&i, _)| crashes[i].use_case == uc)
                .map(|(&i, o)| (i, o))
                .collect();
            if in_uc.is_empty() {
                continue;
            }
            let context = |stage: &str| format!("assess/{stage} {uc}/{alg}");

            // Bayesian update per matched speed bin. At w = 0 test results
            // are disregarded entirely (including the speed-bin matching),
            // which makes a w = 0 run identical to one without a tests file.
            let sims: Vec<(f64, bool)> = in_uc
                .iter()
                .map(|(i, o)| (crashes[*i].car_speed_init, o.avoided))
                .collect();
            let uc_tests: Vec<TestObservation> = if params.w == 0.0 {
                Vec::new()
            } else {
                tests
                    .iter()
                    .filter(|t| t.use_case == uc && t.algorithm_family == alg.family())
                    .cloned()
                    .collect()
            };
            let bins = build_speed_bins(&sims, &uc_tests, params.w)
                .map_err(|e| avoidance_err(context("avoidance"), e))?;
            let points = curve_points(&bins, params, &uc_tests);
            let curve = fit_curve_auto(&points).map_err(|e| avoidance_err(context("curve"), e))?;

            // Collision-speed model on the mitigated cases.
            let collisions: Vec<(&CrashRecord, f64)> = in_uc
                .iter()
                .filter(|(_, o)| !o.avoided)
                .map(|(i, o)| (&crashes[*i], o.collision_speed))
                .collect();
            let speed_model = match fit_speed_model(uc, alg, &collisions) {
                Ok(model) => model,
                Err(SeverityError::TooFewCollisions { n, .. }) => {
                    notes.push(format!(
                        "{}: {n} collisions; intercept-only fallback",
                        context("speed-model")
                    ));
                    if n > 0 {
                        let speeds: Vec<f64> = collisions.iter().map(|(_, v)| *v).collect();
                        intercept_only_model(uc, alg, &speeds)
                    } else {
                        // Everything avoided in simulation: anchor the
                        // residual-collision speed at the original outcomes.
                        let speeds: Vec<f64> = in_uc
                            .iter()
                            .map(|(i, _)| crashes[*i].original_collision_speed)
                            .collect();
                        intercept_only_model(uc, alg, &speeds)
                    }
                }
                Err(e) => return Err(severity_err(context("speed-model"), e)),
            };

            let uc_crashes: Vec<CrashRecord> =
                in_uc.iter().map(|(i, _)| crashes[*i].clone()).collect();
            let irc = irc_models
                .iter()
                .find(|m| m.vru_type() == uc.vru_type())
                .ok_or_else(|| {
                    PipelineError::Input(format!(
                        "{}: no persons of type {} to fit an injury risk model",
                        context("irc"),
                        uc.vru_type()
                    ))
                })?;
            for level in LEVELS {
                let est = posterior_benefit(&uc_crashes, &curve, &speed_model, irc, level, uc, alg)
                    .map_err(|e| benefit_err(context("benefit"), e))?;
                uc_estimates.push(est);
            }

            assessments.push(UcAssessment {
                use_case: uc,
                algorithm: alg,
                indices: in_uc.iter().map(|(i, _)| *i).collect(),
                bins,
                curve,
                speed_model,
            });
        }

        per_alg.extend(uc_estimates.iter());
        let mut aggregates = Vec::new();
        for level in LEVELS {
            for (scope, filter) in [
                (BenefitScope::Total, None),
                (BenefitScope::TotalCyclist, Some(VruType::Cyclist)),
                (BenefitScope::TotalPedestrian, Some(VruType::Pedestrian)),
            ] {
                let selected: Vec<&BenefitEstimate> = per_alg
                    .iter()
                    .filter(|e| e.level == level)
                    .filter(|e| match (filter, e.scope) {
                        (None, BenefitScope::UseCase(_)) => true,
                        (Some(vru), BenefitScope::UseCase(uc)) => uc.vru_type() == vru,
                        _ => false,
                    })
                    .copied()
                    .collect();
                if selected.is_empty() {
                    continue;
                }
                let agg = aggregate_benefit(&selected, scope, alg, level)
                    .map_err(|e| benefit_err(format!("assess/aggregate {scope}/{alg}"), e))?;
                aggregates.push(agg);
            }
        }
        benefits.extend(uc_estimates);
        benefits.extend(aggregates);
    }

    Ok(Assessment {
        runs,
        assessments,
        irc_models,
        benefits,
        notes,
    })
}

// ---------------------------------------------------------------------------
// assess command
// ---------------------------------------------------------------------------

struct AssessInputs {
    crashes: Vec<CrashRecord>,
    tests: Vec<TestObservation>,
    persons: Vec<PersonRecord>,
    tests_present: bool,
}

fn load_assess_inputs(
    cfg: &RunConfig,
    manifest: &mut RunManifest,
) -> Result<AssessInputs, PipelineError> {
    let crashes_path = cfg.crashes_path();
    let crashes = domain::parse_crashes(&crashes_path)?;
    if crashes.is_empty() {
        return Err(PipelineError::Input(format!(
            "{}: no crash records",
            crashes_path.display()
        )));
    }
    manifest.digest_input(&crashes_path)?;

    let tests_path = cfg.tests_path();
    let (tests, tests_present) = if tests_path.exists() {
        manifest.digest_input(&tests_path)?;
        (domain::parse_tests(&tests_path)?, true)
    } else {
        // Missing test results degrade gracefully to a prior-only run
        // (identical to w = 0).
        (Vec::new(), false)
    };

    let persons_path = cfg.persons_indepth_path();
    let persons = domain::parse_persons(&persons_path)?;
    manifest.digest_input(&persons_path)?;

    manifest
        .row_counts
        .insert("crashes".into(), crashes.len() as u64);
    manifest
        .row_counts
        .insert("tests".into(), tests.len() as u64);
    manifest
        .row_counts
        .insert("persons_indepth".into(), persons.len() as u64);
    Ok(AssessInputs {
        crashes,
        tests,
        persons,
        tests_present,
    })
}

fn emit_avoidance_models(path: &Path, assessments: &[UcAssessment]) -> Result<(), PipelineError> {
    let header = [
        "use_case",
        "algorithm",
        "form",
        "beta0",
        "beta1",
        "c2",
        "bound",
    ];
    let mut rows = Vec::new();
    for a in assessments {
        for (bound, coeffs) in [
            ("lower", &a.curve.lower_coeffs),
            ("median", &a.curve.median_coeffs),
            ("upper", &a.curve.upper_coeffs),
        ] {
            let c2 = match a.curve.form {
                CurveForm::Logistic => Cell::Empty,
                CurveForm::Poly2 => Cell::Num(coeffs[2]),
            };
            rows.push(vec![
                Cell::Str(a.use_case.to_string()),
                Cell::Str(a.algorithm.to_string()),
                Cell::Str(a.curve.form.to_string()),
                Cell::Num(coeffs[0]),
                Cell::Num(coeffs[1]),
                c2,
                Cell::Str(bound.to_string()),
            ]);
        }
    }
    emit_table(path, &header, &rows)?;
    Ok(())
}

fn emit_speed_models(path: &Path, assessments: &[UcAssessment]) -> Result<(), PipelineError> {
    let header = [
        "use_case",
        "algorithm",
        "covariates",
        "coefficients",
        "residual_std",
        "aic",
    ];
    let mut rows = Vec::new();
    for a in assessments {
        let m = &a.speed_model;
        let covariates = if m.selected_covariates.is_empty() {
            "(intercept)".to_string()
        } else {
            m.selected_covariates
                .iter()
                .map(|c| c.name())
                .collect::<Vec<_>>()
                .join(";")
        };
        let coefficients = m
            .coefficients
            .iter()
            .map(|c| format_number(*c))
            .collect::<Vec<_>>()
            .join(";");
        rows.push(vec![
            Cell::Str(m.use_case.to_string()),
            Cell::Str(m.algorithm.to_string()),
            Cell::Str(covariates),
            Cell::Str(coefficients),
            Cell::Num(m.residual_std),
            Cell::Num(m.aic),
        ]);
    }
    emit_table(path, &header, &rows)?;
    Ok(())
}

fn emit_irc_models(path: &Path, models: &[InjuryRiskModel]) -> Result<(), PipelineError> {
    let header = [
        "vru_type", "family", "beta", "tau1", "tau2", "loglik", "aic",
    ];
    let mut rows = Vec::new();
    for m in models {
        match m {
            InjuryRiskModel::OrderedProbit {
                vru_type,
                beta,
                tau1,
                tau2,
                log_lik,
                aic,
                ..
            } => {
                rows.push(vec![
                    Cell::Str(vru_type.to_string()),
                    Cell::Str("OrderedProbit".into()),
                    Cell::Num(*beta),
                    Cell::Num(*tau1),
                    Cell::Num(*tau2),
                    Cell::Num(*log_lik),
                    Cell::Num(*aic),
                ]);
            }
            InjuryRiskModel::Logistic {
                vru_type,
                serious,
                fatal,
                log_lik,
                aic,
                ..
            } => {
                // Two binary fits: slope in `beta`, intercept in `tau1`.
                for (label, (b0, b1)) in [
                    ("LogisticSeriousOrWorse", serious),
                    ("LogisticFatal", fatal),
                ] {
                    rows.push(vec![
                        Cell::Str(vru_type.to_string()),
                        Cell::Str(label.into()),
                        Cell::Num(*b1),
                        Cell::Num(*b0),
                        Cell::Empty,
                        Cell::Num(*log_lik),
                        Cell::Num(*aic),
                    ]);
                }
            }
        }
    }
    emit_table(path, &header, &rows)?;
    Ok(())
}

fn emit_benefit(path: &Path, benefits: &[BenefitEstimate]) -> Result<(), PipelineError> {
    let header = [
        "use_case",
        "algorithm",
        "level",
        "e_orig",
        "e_new",
        "reduction_pct",
        "low90",
        "high90",
    ];
    let rows: Vec<Vec<Cell>> = benefits
        .iter()
        .map(|b| {
            vec![
                Cell::Str(b.scope.to_string()),
                Cell::Str(b.algorithm.to_string()),
                Cell::Str(b.level.to_string()),
                Cell::Num(b.e_orig),
                Cell::Num(b.e_new),
                Cell::Num(b.reduction_pct),
                Cell::Num(b.bounds_90.0),
                Cell::Num(b.bounds_90.1),
            ]
        })
        .collect();
    emit_table(path, &header, &rows)?;
    Ok(())
}

/// Outcome of the `assess` command.
#[derive(Debug)]
pub struct AssessOutput {
    pub assessment: Assessment,
    pub manifest_path: PathBuf,
}

/// Full chain: simulate → priors → update → curves → speed models → injury
/// risk → dose-response. Writes every intermediate table.
pub fn run_assess(cfg: &RunConfig) -> Result<AssessOutput, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    ensure_out_dir(cfg)?;
    let mut manifest = RunManifest::new("assess", cfg);
    let t0 = Instant::now();
    let inputs = load_assess_inputs(cfg, &mut manifest)?;
    if !inputs.tests_present {
        manifest.notes.push(format!(
            "tests file {} absent: prior-only run (equivalent to w = 0)",
            cfg.tests_path().display()
        ));
    }
    manifest
        .wall_clock_ms
        .insert("load".into(), t0.elapsed().as_millis() as u64);

    let t1 = Instant::now();
    let params = AssessParams::from_config(cfg);
    let assessment = compute_assessment(
        &inputs.crashes,
        &inputs.tests,
        &inputs.persons,
        &cfg.sim,
        &params,
    )?;
    manifest
        .wall_clock_ms
        .insert("assess".into(), t1.elapsed().as_millis() as u64);

    let t2 = Instant::now();
    let outcomes_path = cfg.out_dir.join("outcomes.csv");
    emit_outcomes(&outcomes_path, &assessment.runs)?;
    let summary_path = cfg.out_dir.join("summary.csv");
    emit_summary(&summary_path, &assessment.runs)?;
    let avoidance_path = cfg.out_dir.join("avoidance_models.csv");
    emit_avoidance_models(&avoidance_path, &assessment.assessments)?;
    let speed_path = cfg.out_dir.join("speed_models.csv");
    emit_speed_models(&speed_path, &assessment.assessments)?;
    let irc_path = cfg.out_dir.join("irc_models.csv");
    emit_irc_models(&irc_path, &assessment.irc_models)?;
    let benefit_path = cfg.out_dir.join("benefit.csv");
    emit_benefit(&benefit_path, &assessment.benefits)?;
    manifest
        .wall_clock_ms
        .insert("emit".into(), t2.elapsed().as_millis() as u64);

    for path in [
        &outcomes_path,
        &summary_path,
        &avoidance_path,
        &speed_path,
        &irc_path,
        &benefit_path,
    ] {
        manifest.outputs.push(path.display().to_string());
    }
    manifest
        .row_counts
        .insert("benefit_rows".into(), assessment.benefits.len() as u64);
    manifest.notes.extend(assessment.notes.iter().cloned());
    let manifest_path = manifest.write(&cfg.out_dir)?;
    Ok(AssessOutput {
        assessment,
        manifest_path,
    })
}

// ---------------------------------------------------------------------------
// extrapolate command
// ---------------------------------------------------------------------------

/// One extrapolated row: in-depth reduction carried to the target region and
/// scaled by deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapolatedBenefit {
    pub algorithm: Algorithm,
    pub vru_type: VruType,
    pub level: InjuryLevel,
    pub indepth_reduction: f64,
    pub target_reduction: f64,
    pub scaled_reduction: f64,
    /// Scaled target-region bounds.
    pub bounds_90: (f64, f64),
}

/// Outcome of the `extrapolate` command.
#[derive(Debug)]
pub struct ExtrapolateOutput {
    pub rows: Vec<ExtrapolatedBenefit>,
    pub manifest_path: PathBuf,
}

fn severity_of(level: InjuryLevel) -> InjurySeverity {
    match level {
        InjuryLevel::Fatal => InjurySeverity::Fatal,
        InjuryLevel::SeriousOrWorse => InjurySeverity::Serious,
    }
}

/// Per-crash expected-casualty reduction at `level` under the fitted models:
/// r(original speed) − (1 − p)·r(predicted speed), with the documented
/// pessimistic/optimistic pairings for the bounds.
fn crash_reductions(
    crash: &CrashRecord,
    curve: &AvoidanceCurve,
    model: &SpeedModel,
    irc: &InjuryRiskModel,
    level: InjuryLevel,
) -> (f64, f64, f64) {
    let base = irc.risk(level, crash.original_collision_speed.round());
    let pred = predict_collision_speed(model, crash);
    let v = crash.car_speed_init;
    let point =
        base - (1.0 - curve.evaluate(Bound::Median, v)) * irc.risk(level, pred.point as f64);
    let pess = base
        - (1.0 - curve.evaluate(Bound::Lower, v)) * irc.risk(level, pred.interval_90.1.round());
    let opt = base
        - (1.0 - curve.evaluate(Bound::Upper, v)) * irc.risk(level, pred.interval_90.0.round());
    (point, pess, opt)
}

/// Build trees on in-depth persons, apply them to the target region, form
/// the per-node factors, extrapolate per-node reductions and scale by
/// deployment.
pub fn run_extrapolate(cfg: &RunConfig) -> Result<ExtrapolateOutput, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    ensure_out_dir(cfg)?;
    let mut manifest = RunManifest::new("extrapolate", cfg);
    let t0 = Instant::now();
    let inputs = load_assess_inputs(cfg, &mut manifest)?;

    let target_path = cfg.persons_target_path();
    let target = domain::parse_persons(&target_path)?;
    manifest.digest_input(&target_path)?;
    manifest
        .row_counts
        .insert("persons_target".into(), target.len() as u64);

    if inputs.persons.len() != inputs.crashes.len() {
        return Err(PipelineError::Input(format!(
            "extrapolate: persons_indepth rows ({}) must pair 1:1 with crashes ({}) so reductions can be routed through the tree",
            inputs.persons.len(),
            inputs.crashes.len()
        )));
    }
    for (i, (p, c)) in inputs.persons.iter().zip(&inputs.crashes).enumerate() {
        if p.vru_type != c.vru_type {
            return Err(PipelineError::Input(format!(
                "extrapolate: row {}: person vru_type {} does not match crash {}",
                i + 2,
                p.vru_type,
                c.id
            )));
        }
    }

    let params = AssessParams::from_config(cfg);
    let assessment = compute_assessment(
        &inputs.crashes,
        &inputs.tests,
        &inputs.persons,
        &cfg.sim,
        &params,
    )?;
    manifest
        .wall_clock_ms
        .insert("assess".into(), t0.elapsed().as_millis() as u64);

    let t1 = Instant::now();
    let tree_params = cfg.tree;
    let mut tree_text = String::new();
    let mut factor_rows: Vec<Vec<Cell>> = Vec::new();
    let mut rows: Vec<ExtrapolatedBenefit> = Vec::new();

    for vru in [VruType::Cyclist, VruType::Pedestrian] {
        let indepth_vru: Vec<PersonRecord> = inputs
            .persons
            .iter()
            .filter(|p| p.vru_type == vru)
            .cloned()
            .collect();
        let target_vru: Vec<PersonRecord> = target
            .iter()
            .filter(|p| p.vru_type == vru)
            .cloned()
            .collect();
        if indepth_vru.is_empty() {
            continue;
        }
        let context = format!("extrapolate/tree {vru}");
        let tree = build_tree(&indepth_vru, &tree_params)
            .map_err(|e| extrapolation_err(context.clone(), e))?;
        tree_text.push_str(&format!("{vru} tree\n"));
        tree_text.push_str(&render_tree(&tree));
        tree_text.push('\n');

        let indepth_counts = apply_tree(&tree, &indepth_vru);
        let target_counts = apply_tree(&tree, &target_vru);
        let factors = compute_factors(&indepth_counts, &target_counts)
            .map_err(|e| extrapolation_err(format!("extrapolate/factors {vru}"), e))?;
        let rules = tree.leaf_rules();
        for ((node, level), factor) in factors.iter() {
            factor_rows.push(vec![
                Cell::Str(vru.to_string()),
                Cell::Str(level.to_string()),
                Cell::Str(
                    rules
                        .get(&node)
                        .cloned()
                        .unwrap_or_else(|| node.to_string()),
                ),
                Cell::Num(factor.value()),
            ]);
        }

        // Route each crash's reduction through the tree via its person.
        for &alg in &params.algorithms {
            for level in LEVELS {
                let mut point_nodes: BTreeMap<usize, f64> = BTreeMap::new();
                let mut pess_nodes: BTreeMap<usize, f64> = BTreeMap::new();
                let mut opt_nodes: BTreeMap<usize, f64> = BTreeMap::new();
                let mut indepth_total = 0.0;
                let mut any = false;
                for a in assessment
                    .assessments
                    .iter()
                    .filter(|a| a.algorithm == alg && a.use_case.vru_type() == vru)
                {
                    any = true;
                    let irc = assessment.irc_for(vru);
                    for &i in &a.indices {
                        let crash = &inputs.crashes[i];
                        let person = &inputs.persons[i];
                        let node = route(&tree, person);
                        let (point, pess, opt) =
                            crash_reductions(crash, &a.curve, &a.speed_model, irc, level);
                        *point_nodes.entry(node).or_insert(0.0) += point;
                        *pess_nodes.entry(node).or_insert(0.0) += pess;
                        *opt_nodes.entry(node).or_insert(0.0) += opt;
                        indepth_total += point;
                    }
                }
                if !any {
                    continue;
                }
                let severity = severity_of(level);
                let ex_context = format!("extrapolate/reduction {vru}/{alg}/{level}");
                let target_point = extrapolate_reduction(&point_nodes, &factors, severity)
                    .map_err(|e| extrapolation_err(ex_context.clone(), e))?;
                let target_pess = extrapolate_reduction(&pess_nodes, &factors, severity)
                    .map_err(|e| extrapolation_err(ex_context.clone(), e))?;
                let target_opt = extrapolate_reduction(&opt_nodes, &factors, severity)
                    .map_err(|e| extrapolation_err(ex_context, e))?;
                rows.push(ExtrapolatedBenefit {
                    algorithm: alg,
                    vru_type: vru,
                    level,
                    indepth_reduction: indepth_total,
                    target_reduction: target_point,
                    scaled_reduction: scale_benefit(target_point, cfg.deployment),
                    bounds_90: (
                        scale_benefit(target_pess, cfg.deployment),
                        scale_benefit(target_opt, cfg.deployment),
                    ),
                });
            }
        }
    }
    manifest
        .wall_clock_ms
        .insert("extrapolate".into(), t1.elapsed().as_millis() as u64);

    let tree_path = cfg.out_dir.join("tree.txt");
    std::fs::write(&tree_path, &tree_text).map_err(|e| io_err(&tree_path, e))?;
    let factors_path = cfg.out_dir.join("factors.csv");
    emit_table(
        &factors_path,
        &["vru_type", "level", "node_rule", "factor"],
        &factor_rows,
    )?;
    let extr_path = cfg.out_dir.join("extrapolated_benefit.csv");
    let extr_rows: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            vec![
                Cell::Str(r.algorithm.to_string()),
                Cell::Str(r.vru_type.to_string()),
                Cell::Str(r.level.to_string()),
                Cell::Num(r.indepth_reduction),
                Cell::Num(r.target_reduction),
                Cell::Num(r.scaled_reduction),
                Cell::Num(r.bounds_90.0),
                Cell::Num(r.bounds_90.1),
            ]
        })
        .collect();
    emit_table(
        &extr_path,
        &[
            "algorithm",
            "vru_type",
            "level",
            "indepth_reduction",
            "target_reduction",
            "scaled_reduction",
            "low90",
            "high90",
        ],
        &extr_rows,
    )?;
    for path in [&tree_path, &factors_path, &extr_path] {
        manifest.outputs.push(path.display().to_string());
    }
    let manifest_path = manifest.write(&cfg.out_dir)?;
    Ok(ExtrapolateOutput {
        rows,
        manifest_path,
    })
}

// ---------------------------------------------------------------------------
// sensitivity command
// ---------------------------------------------------------------------------

/// One sensitivity variant: a named re-parameterization of the reference
/// assessment.
#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    pub w: f64,
    pub irc_family: IrcFamily,
    pub statistical_mode: StatisticalMode,
}

/// Tables 8/9-style one-factor-at-a-time variants around the reference.
pub fn default_variants(reference_w: f64) -> Vec<Variant> {
    let mut variants = vec![
        Variant {
            name: "irc_logistic".into(),
            w: reference_w,
            irc_family: IrcFamily::Logistic,
            statistical_mode: StatisticalMode::Bayesian,
        },
        Variant {
            name: "reference".into(),
            w: reference_w,
            irc_family: IrcFamily::OrderedProbit,
            statistical_mode: StatisticalMode::Bayesian,
        },
        Variant {
            name: "frequentist".into(),
            w: reference_w,
            irc_family: IrcFamily::OrderedProbit,
            statistical_mode: StatisticalMode::Frequentist,
        },
    ];
    for w in [0.0, 1.0, 2.0, 10.0] {
        if w != reference_w {
            variants.push(Variant {
                name: format!("w{}", format_number(w)),
                w,
                irc_family: IrcFamily::OrderedProbit,
                statistical_mode: StatisticalMode::Bayesian,
            });
        }
    }
    variants
}

/// One (row, variant) cell: the aggregate estimate with bounds, or the
/// failure message for that cell.
pub type SensitivityCell = Result<(f64, f64, f64), String>;

/// Outcome of the `sensitivity` command.
#[derive(Debug)]
pub struct SensitivityOutput {
    pub variants: Vec<Variant>,
    /// Rows: (level, scope) × variants, aligned with `variants`.
    pub cells: Vec<((InjuryLevel, BenefitScope), Vec<SensitivityCell>)>,
    pub manifest_path: PathBuf,
}

/// Re-run the avoidance/severity/benefit stages per variant. Per-cell
/// failures are recorded in the output; the sweep continues. The sweep uses
/// the first configured algorithm.
pub fn run_sensitivity(cfg: &RunConfig) -> Result<SensitivityOutput, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    ensure_out_dir(cfg)?;
    let mut manifest = RunManifest::new("sensitivity", cfg);
    let inputs = load_assess_inputs(cfg, &mut manifest)?;
    let algorithm = cfg.algorithms[0];
    let variants = default_variants(cfg.w);

    let scopes = [
        BenefitScope::Total,
        BenefitScope::TotalCyclist,
        BenefitScope::TotalPedestrian,
    ];
    let mut per_variant: Vec<BTreeMap<(InjuryLevel, usize), SensitivityCell>> = Vec::new();

    let t0 = Instant::now();
    for variant in &variants {
        let params = AssessParams {
            w: variant.w,
            quantile_low: cfg.quantile_low,
            quantile_high: cfg.quantile_high,
            statistical_mode: variant.statistical_mode,
            irc_family: variant.irc_family,
            algorithms: vec![algorithm],
        };
        let mut cells = BTreeMap::new();
        match compute_assessment(
            &inputs.crashes,
            &inputs.tests,
            &inputs.persons,
            &cfg.sim,
            &params,
        ) {
            Ok(assessment) => {
                for level in LEVELS {
                    for (si, scope) in scopes.iter().enumerate() {
                        let cell = assessment
                            .aggregate(*scope, algorithm, level)
                            .map(|b| (b.reduction_pct, b.bounds_90.0, b.bounds_90.1))
                            .ok_or_else(|| "no data".to_string());
                        cells.insert((level, si), cell);
                    }
                }
            }
            Err(e) => {
                for level in LEVELS {
                    for si in 0..scopes.len() {
                        cells.insert((level, si), Err(e.to_string()));
                    }
                }
            }
        }
        per_variant.push(cells);
    }
    manifest
        .wall_clock_ms
        .insert("sweep".into(), t0.elapsed().as_millis() as u64);

    let mut cells_out = Vec::new();
    let header: Vec<String> = std::iter::once("level".to_string())
        .chain(std::iter::once("group".to_string()))
        .chain(variants.iter().map(|v| v.name.clone()))
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for level in LEVELS {
        for (si, scope) in scopes.iter().enumerate() {
            let mut row = vec![Cell::Str(level.to_string()), Cell::Str(scope.to_string())];
            let mut row_cells = Vec::new();
            for variant_cells in &per_variant {
                let cell = variant_cells
                    .get(&(level, si))
                    .cloned()
                    .unwrap_or_else(|| Err("missing".into()));
                row.push(match &cell {
                    Ok((est, lo, hi)) => Cell::Str(format!(
                        "{} ({}-{})",
                        format_number(*est),
                        format_number(*lo),
                        format_number(*hi)
                    )),
                    Err(msg) => Cell::Str(format!("err: {msg}")),
                });
                row_cells.push(cell);
            }
            rows.push(row);
            cells_out.push(((level, *scope), row_cells));
        }
    }
    let path = cfg.out_dir.join("sensitivity.csv");
    emit_table(&path, &header_refs, &rows)?;
    manifest.outputs.push(path.display().to_string());
    let manifest_path = manifest.write(&cfg.out_dir)?;
    Ok(SensitivityOutput {
        variants,
        cells: cells_out,
        manifest_path,
    })
}

/// Render the plain-text report from a directory of pipeline outputs.
pub fn run_report(cfg: &RunConfig) -> Result<String, PipelineError> {
    report::render_report(&cfg.out_dir)
}
