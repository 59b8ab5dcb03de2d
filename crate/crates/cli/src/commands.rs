use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use clap::ValueEnum;
use hbbm_core::analysis::validate::{self, TestFunction};
use hbbm_core::analysis::{
    moment_exponent, run_dimension_study, run_holder_study, BoxMode, DimensionEstimator, EstimateReport,
    HorizonRule, MeasureStudy, MomentStudy, ValidationReport,
};
use hbbm_core::engine::{run_with, typical_count, Normalization, SimConfig, DEFAULT_MAX_PARTICLES};
use hbbm_core::measures::{cdf, project_to_boundary, LineInterval};
use hbbm_core::rng::derive_seed;
use hbbm_core::stats::log_space;
use hbbm_core::Execution;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{check, command_config, positive, usage, CliError};

const EXEC: Execution = Execution::Parallel;
const EXIT_TAG: u64 = 0xe0;

/// What a subcommand produced, for meta.json and the exit status.
#[derive(Debug, Default)]
pub struct Outcome {
    pub cap_hit: Option<bool>,
    pub warnings: Vec<String>,
    /// Names of validation checks that breached their threshold.
    pub breaches: Vec<String>,
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> anyhow::Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_with(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> anyhow::Result<()> {
    let mut w = create(dir, name)?;
    f(&mut w).with_context(|| format!("writing {name}"))?;
    w.flush()?;
    Ok(())
}

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

fn sim_checks(beta: f64, dt: f64, lambda: f64) -> Result<(), CliError> {
    positive(beta, "beta")?;
    positive(dt, "dt")?;
    check(lambda > -0.5 && lambda.is_finite(), "lambda", format_args!("must exceed -1/2, got {lambda}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationArg {
    ByCount,
    ByMean,
}

impl From<NormalizationArg> for Normalization {
    fn from(n: NormalizationArg) -> Self {
        match n {
            NormalizationArg::ByCount => Normalization::ByCount,
            NormalizationArg::ByMean => Normalization::ByMean,
        }
    }
}

command_config! {
    /// Simulate one branching run and export particles and its boundary measure
    SimulateFlags => SimulateConfig {
        /// Branching rate β [1/time], > 0
        beta: f64,
        /// Horizon T [time], > 0
        horizon: f64,
        /// Grid step [time]
        dt: f64 = 0.01,
        /// Vertical drift λ [1/time], > -1/2
        lambda: f64 = 0.0,
        /// Typicality onset K [time], ≤ horizon
        typical_onset: f64 = 1.0,
        /// Population cap [particles]
        max_particles: usize = DEFAULT_MAX_PARTICLES,
        /// Measure normalization
        #[arg(value_enum)]
        normalization: NormalizationArg = NormalizationArg::ByCount,
    }
}

pub fn simulate(c: &SimulateConfig, out: &Path) -> Result<Outcome, CliError> {
    sim_checks(c.beta, c.dt, c.lambda)?;
    positive(c.horizon, "horizon")?;
    check(
        c.typical_onset >= 0.0 && c.typical_onset <= c.horizon,
        "typical-onset",
        format_args!("must lie in [0, horizon], got {}", c.typical_onset),
    )?;
    check(c.max_particles >= 1, "max-particles", "must be at least 1")?;
    let config = SimConfig {
        beta: c.beta,
        lambda: c.lambda,
        horizon: c.horizon,
        dt: c.dt,
        typical_onset: c.typical_onset,
        seed: c.seed,
        max_particles: c.max_particles,
        normalization: c.normalization.into(),
    };
    let snapshot = run_with(&config, EXEC).map_err(runtime)?;
    let measure = project_to_boundary(&snapshot, derive_seed(c.seed, EXIT_TAG, 0));
    write_with(out, "particles.csv", |w| snapshot.write_csv(w))?;
    write_with(out, "measure.csv", |w| measure.write_csv(w))?;
    write_with(out, "cdf.csv", |w| cdf(&measure).write_csv(w))?;
    let onset = c.typical_onset.min(snapshot.time);
    let summary = json!({
        "time": snapshot.time,
        "population": snapshot.population(),
        "typical": typical_count(&snapshot, onset).map_err(runtime)?,
        "total-mass": measure.total(),
        "capped": snapshot.capped,
    });
    write_json(out, "summary.json", &summary)?;
    let mut outcome = Outcome { cap_hit: Some(snapshot.capped), ..Outcome::default() };
    if snapshot.capped {
        outcome.warnings.push(format!(
            "population cap {} reached at time {}; snapshot taken there",
            c.max_particles, snapshot.time
        ));
    }
    Ok(outcome)
}

command_config! {
    /// Simulated exit points against the exact Cauchy law
    ExitlawFlags => ExitlawConfig {
        /// Simulated time before the exact residual [time], ≥ 0
        t: f64 = 5.0,
        /// Number of exits, ≥ 10000
        samples: usize = 100_000,
        /// Grid step [time]
        dt: f64 = 0.01,
        /// Vertical drift λ [1/time], > -1/2
        lambda: f64 = 0.0,
    }
}

pub fn exitlaw(c: &ExitlawConfig, out: &Path) -> Result<Outcome, CliError> {
    sim_checks(1.0, c.dt, c.lambda)?;
    check(c.t >= 0.0 && c.t.is_finite(), "t", format_args!("must be non-negative, got {}", c.t))?;
    check(
        c.samples >= validate::MIN_EXIT_SAMPLES,
        "samples",
        format_args!("must be at least {}, got {}", validate::MIN_EXIT_SAMPLES, c.samples),
    )?;
    let mut config = SimConfig::new(1.0, 1.0, c.seed);
    config.dt = c.dt;
    config.lambda = c.lambda;
    let r = validate::exit_law(&config, c.t, c.samples, c.seed, EXEC).map_err(runtime)?;
    write_json(out, "exitlaw.json", &r)?;
    let mut outcome = Outcome::default();
    if r.p_value < 0.001 {
        outcome.breaches.push(format!("exit-law KS {} (p = {})", r.ks, r.p_value));
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorArg {
    Support,
    AllPoints,
    Correlation,
}

command_config! {
    /// Box-counting and correlation dimensions of the boundary measure
    DimensionFlags => DimensionConfig {
        /// Branching rate β [1/time], > 0
        beta: f64,
        /// Vertical drift λ [1/time], > -1/2
        lambda: f64 = 0.0,
        /// Grid step [time]
        dt: f64 = 0.01,
        /// Estimators to run, comma separated
        #[arg(value_enum, value_delimiter = ',')]
        mode: Vec<EstimatorArg> = vec![EstimatorArg::Support, EstimatorArg::AllPoints],
        /// Fraction of mass the support count may drop, in [0, 1)
        mass_floor: f64 = BoxMode::DEFAULT_MASS_FLOOR,
        /// Stop each replicate at this population [particles]
        population: usize = HorizonRule::DEFAULT_POPULATION,
        /// Fixed horizon [time]; 0 selects the population rule
        horizon: f64 = 0.0,
        /// Independent replicates
        replicates: usize = 20,
        /// Log-spaced scales between 10/N and 2π/8 [rad]
        scales: usize = 12,
    }
}

fn measure_study(
    beta: f64,
    lambda: f64,
    dt: f64,
    population: usize,
    horizon: f64,
    replicates: usize,
    scales: usize,
    seed: u64,
) -> Result<MeasureStudy, CliError> {
    sim_checks(beta, dt, lambda)?;
    check(horizon >= 0.0 && horizon.is_finite(), "horizon", format_args!("must be non-negative, got {horizon}"))?;
    check(population >= 2, "population", "must be at least 2")?;
    check(replicates >= 1, "replicates", "must be at least 1")?;
    check(scales >= 4, "scales", format_args!("need at least 4, got {scales}"))?;
    let mut s = MeasureStudy::new(beta, seed);
    s.lambda = lambda;
    s.dt = dt;
    s.horizon = if horizon > 0.0 { HorizonRule::Fixed(horizon) } else { HorizonRule::Population(population) };
    s.replicates = replicates;
    s.scales = scales;
    Ok(s)
}

fn write_report(out: &Path, stem: &str, r: &EstimateReport) -> anyhow::Result<()> {
    write_with(out, &format!("{stem}.csv"), |w| r.write_points_csv(w))
}

pub fn dimension(c: &DimensionConfig, out: &Path) -> Result<Outcome, CliError> {
    let study = measure_study(c.beta, c.lambda, c.dt, c.population, c.horizon, c.replicates, c.scales, c.seed)?;
    check(
        (0.0..1.0).contains(&c.mass_floor),
        "mass-floor",
        format_args!("must lie in [0, 1), got {}", c.mass_floor),
    )?;
    check(!c.mode.is_empty(), "mode", "need at least one estimator")?;
    let estimators: Vec<DimensionEstimator> = c
        .mode
        .iter()
        .map(|m| match m {
            EstimatorArg::Support => BoxMode::Support { mass_floor: c.mass_floor }.into(),
            EstimatorArg::AllPoints => BoxMode::AllPoints.into(),
            EstimatorArg::Correlation => DimensionEstimator::Correlation,
        })
        .collect();
    let r = run_dimension_study(&study, &estimators, EXEC).map_err(runtime)?;
    let report = json!({
        "estimates": r.estimates.iter().map(EstimateReport::to_json).collect::<Vec<Value>>(),
        "populations": r.populations,
        "horizons": r.horizons,
    });
    write_json(out, "dimension.json", &report)?;
    for e in &r.estimates {
        write_report(out, &format!("dimension-{}", e.name), e)?;
    }
    write_with(out, "replicates.csv", |w| {
        write!(w, "replicate,population,time")?;
        for e in &r.estimates {
            write!(w, ",{}", e.name)?;
        }
        writeln!(w)?;
        for i in 0..r.populations.len() {
            write!(w, "{i},{},{}", r.populations[i], r.horizons[i])?;
            for s in &r.slopes {
                write!(w, ",{}", s[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    let fixed_cap = c.horizon > 0.0 && r.populations.iter().any(|&p| p >= DEFAULT_MAX_PARTICLES);
    let mut outcome = Outcome { cap_hit: Some(fixed_cap), ..Outcome::default() };
    if fixed_cap {
        outcome.warnings.push("a fixed-horizon replicate stopped at the population cap".into());
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureArg {
    Typical,
    Full,
}

command_config! {
    /// Decay exponent of E[μ(I_ε)^k] for centred intervals of width ε
    MomentsFlags => MomentsConfig {
        /// Branching rate β [1/time], > 0
        beta: f64,
        /// Horizon T [time], > 0
        horizon: f64,
        /// Vertical drift λ [1/time], > -1/2
        lambda: f64 = 0.0,
        /// Grid step [time]
        dt: f64 = 0.01,
        /// Measure whose masses are averaged
        #[arg(value_enum)]
        measure: MeasureArg = MeasureArg::Typical,
        /// Typicality onset K [time] for the typical measure
        typical_onset: f64 = 1.0,
        /// Moment order, ≥ 2
        k: u32 = 2,
        /// Smallest interval width [length on the real line]
        eps_min: f64 = 0.01,
        /// Largest interval width [length on the real line]
        eps_max: f64 = 0.2,
        /// Number of log-spaced widths, ≥ 4
        eps_count: usize = 8,
        /// Independent replicates, ≥ 200
        replicates: usize = 500,
    }
}

pub fn moments(c: &MomentsConfig, out: &Path) -> Result<Outcome, CliError> {
    sim_checks(c.beta, c.dt, c.lambda)?;
    positive(c.horizon, "horizon")?;
    check(c.k >= 2, "k", format_args!("must be at least 2, got {}", c.k))?;
    positive(c.eps_min, "eps-min")?;
    check(c.eps_max >= 10.0 * c.eps_min, "eps-max", "must be at least ten times eps-min")?;
    check(c.eps_count >= 4, "eps-count", format_args!("need at least 4, got {}", c.eps_count))?;
    check(c.replicates >= 200, "replicates", format_args!("need at least 200, got {}", c.replicates))?;
    let onset = match c.measure {
        MeasureArg::Typical => {
            check(
                c.typical_onset >= 0.0 && c.typical_onset <= c.horizon,
                "typical-onset",
                format_args!("must lie in [0, horizon], got {}", c.typical_onset),
            )?;
            Some(c.typical_onset)
        }
        MeasureArg::Full => None,
    };
    let mut config = SimConfig::new(c.beta, c.horizon, c.seed);
    config.lambda = c.lambda;
    config.dt = c.dt;
    let study = MomentStudy {
        config,
        onset,
        k: c.k,
        epsilons: log_space(c.eps_min, c.eps_max, c.eps_count),
        replicates: c.replicates,
    };
    let r = moment_exponent(&study, EXEC).map_err(runtime)?;
    write_json(out, "moments.json", &r.to_json())?;
    write_report(out, "moments", &r)?;
    Ok(Outcome::default())
}

command_config! {
    /// Modulus-of-continuity exponent of the boundary CDF
    HolderFlags => HolderConfig {
        /// Branching rate β [1/time], > 0
        beta: f64,
        /// Vertical drift λ [1/time], > -1/2
        lambda: f64 = 0.0,
        /// Grid step [time]
        dt: f64 = 0.01,
        /// Stop each replicate at this population [particles]
        population: usize = HorizonRule::DEFAULT_POPULATION,
        /// Fixed horizon [time]; 0 selects the population rule
        horizon: f64 = 0.0,
        /// Independent replicates
        replicates: usize = 4,
        /// Log-spaced window widths between 10/N and 2π/8 [rad]
        scales: usize = 12,
    }
}

pub fn holder(c: &HolderConfig, out: &Path) -> Result<Outcome, CliError> {
    let study = measure_study(c.beta, c.lambda, c.dt, c.population, c.horizon, c.replicates, c.scales, c.seed)?;
    let r = run_holder_study(&study, EXEC).map_err(runtime)?;
    write_json(out, "holder.json", &r.to_json())?;
    write_report(out, "holder", &r)?;
    Ok(Outcome::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Identity {
    ManyToOne,
    ManyToTwo,
    Harmonic,
    ExitBound,
    Yule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionArg {
    One,
    Interval,
    Envelope,
}

command_config! {
    /// Moment identities, exit bounds and the population law
    ValidateFlags => ValidateConfig {
        /// Identity to check
        #[arg(value_enum)]
        identity: Identity,
        /// Branching rate β [1/time], > 0
        beta: f64 = 0.5,
        /// Time of the identity [time], > 0
        t: f64 = 3.0,
        /// Branching runs
        runs: usize = 10_000,
        /// Single-particle runs for many-to-one
        single_runs: usize = 100_000,
        /// Test function for many-to-one
        #[arg(value_enum)]
        function: FunctionArg = FunctionArg::Interval,
        /// Interval on the real line: `lo,hi` (±inf allowed), `real-line` or `empty`
        #[arg(allow_hyphen_values = true)]
        interval: String = "-1,1".to_string(),
        /// Typicality onset K [time] for the envelope function
        typical_onset: f64 = 1.0,
        /// Grid step [time]
        dt: f64 = 0.01,
        /// Vertical drift λ [1/time], > -1/2
        lambda: f64 = 0.0,
        /// Starting heights for exit-bound, comma separated
        #[arg(value_delimiter = ',')]
        ys: Vec<f64> = vec![0.1, 1.0, 10.0],
        /// Interval widths for exit-bound, comma separated
        #[arg(value_delimiter = ',')]
        widths: Vec<f64> = vec![0.01, 0.1, 1.0],
        /// Exit samples per exit-bound cell
        samples: usize = 10_000_000,
        /// Largest acceptable |z| before a breach is reported
        z_max: f64 = 3.0,
    }
}

pub fn parse_interval(s: &str) -> Result<LineInterval, CliError> {
    let s = s.trim();
    match s {
        "real-line" => return Ok(LineInterval::real_line()),
        "empty" => return Ok(LineInterval::empty()),
        _ => {}
    }
    let bad = || usage(format!("invalid interval: expected `lo,hi`, `real-line` or `empty`, got `{s}`"));
    let (lo, hi) = s.split_once(',').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    check(!lo.is_nan() && !hi.is_nan() && lo <= hi, "interval", format_args!("need lo ≤ hi, got `{s}`"))?;
    Ok(LineInterval::new(lo, hi))
}

pub fn validate_cmd(c: &ValidateConfig, out: &Path) -> Result<Outcome, CliError> {
    sim_checks(c.beta, c.dt, c.lambda)?;
    positive(c.t, "t")?;
    check(c.runs >= 2, "runs", "must be at least 2")?;
    positive(c.z_max, "z-max")?;
    let interval = parse_interval(&c.interval)?;
    let mut config = SimConfig::new(c.beta, c.t, c.seed);
    config.dt = c.dt;
    config.lambda = c.lambda;
    let mut outcome = Outcome::default();
    let mut breach = |r: &ValidationReport| {
        if !r.within(c.z_max) {
            outcome.breaches.push(format!("{} z = {}", r.name, r.z));
        }
    };
    let report: Value = match c.identity {
        Identity::ManyToOne => {
            let f = match c.function {
                FunctionArg::One => TestFunction::One,
                FunctionArg::Interval => TestFunction::InInterval(interval),
                FunctionArg::Envelope => {
                    check(
                        c.typical_onset >= 0.0 && c.typical_onset <= c.t,
                        "typical-onset",
                        format_args!("must lie in [0, t], got {}", c.typical_onset),
                    )?;
                    TestFunction::Envelope { onset: c.typical_onset }
                }
            };
            check(c.single_runs >= 2, "single-runs", "must be at least 2")?;
            let r = validate::many_to_one(&config, c.t, f, c.runs, c.single_runs, c.seed, EXEC).map_err(runtime)?;
            breach(&r);
            json!({ "validation": r.to_json(), "runs": c.runs, "single-runs": c.single_runs })
        }
        Identity::ManyToTwo => {
            let r = validate::many_to_two(&config, interval, c.t, c.runs, c.seed, EXEC).map_err(runtime)?;
            breach(&r);
            json!({ "validation": r.to_json(), "runs": c.runs })
        }
        Identity::Harmonic => {
            let r = validate::harmonic_martingale(&config, interval, c.t, c.runs, c.seed, EXEC).map_err(runtime)?;
            breach(&r);
            json!({ "validation": r.to_json(), "runs": c.runs })
        }
        Identity::ExitBound => {
            check(c.samples >= 1, "samples", "must be at least 1")?;
            let r = validate::exit_bound(&c.ys, &c.widths, c.samples, c.seed).map_err(runtime)?;
            // the empirical supremum may only exceed the exact one by noise
            if r.sup.z > c.z_max {
                outcome.breaches.push(format!("{} z = {}", r.sup.name, r.sup.z));
            }
            if !r.scaling.within(c.z_max) {
                outcome.breaches.push(format!("{} z = {}", r.scaling.name, r.scaling.z));
            }
            serde_json::to_value(&r).map_err(runtime)?
        }
        Identity::Yule => {
            let r = validate::yule_check(c.beta, c.t, c.runs, c.seed, EXEC).map_err(runtime)?;
            breach(&r.mean);
            if r.p_value < 0.001 {
                outcome.breaches.push(format!("yule chi-square p = {}", r.p_value));
            }
            serde_json::to_value(&r).map_err(runtime)?
        }
    };
    write_json(out, "validate.json", &report)?;
    Ok(outcome)
}

command_config! {
    /// Geometric growth statistic of a uniformly re-marked typical lineage
    GrowthFlags => GrowthConfig {
        /// Branching rate β [1/time], > 0
        beta: f64 = 1.0,
        /// Stage length and typicality onset K [time], > 0
        onset: f64 = 1.0,
        /// Number of stages n, ≥ 1
        generations: usize = 10,
        /// Accepted runs
        runs: usize = 200,
        /// Grid end [time]; 0 means n·K
        horizon: f64 = 0.0,
        /// Grid step [time]
        dt: f64 = 0.01,
        /// Vertical drift λ [1/time], > -1/2
        lambda: f64 = 0.0,
        /// Largest acceptable |z| before a breach is reported
        z_max: f64 = 3.0,
    }
}

pub fn growth(c: &GrowthConfig, out: &Path) -> Result<Outcome, CliError> {
    sim_checks(c.beta, c.dt, c.lambda)?;
    positive(c.onset, "onset")?;
    check(c.generations >= 1, "generations", "must be at least 1")?;
    check(c.runs >= 2, "runs", "must be at least 2")?;
    positive(c.z_max, "z-max")?;
    let span = c.generations as f64 * c.onset;
    let horizon = if c.horizon > 0.0 { c.horizon } else { span };
    check(horizon >= span, "horizon", format_args!("must be at least generations·onset = {span}"))?;
    let mut config = SimConfig::new(c.beta, horizon, c.seed);
    config.dt = c.dt;
    config.lambda = c.lambda;
    let r = validate::growth_rate(&config, c.onset, c.generations, c.runs, c.seed, EXEC).map_err(runtime)?;
    let mut outcome = Outcome::default();
    if !r.validation.within(c.z_max) {
        outcome.breaches.push(format!("growth-rate z = {}", r.validation.z));
    }
    write_json(
        out,
        "growth.json",
        &json!({ "validation": r.validation.to_json(), "accepted": r.accepted, "rejected": r.rejected }),
    )?;
    write_with(out, "growth.csv", |w| {
        writeln!(w, "run,statistic")?;
        for (i, s) in r.statistics.iter().enumerate() {
            writeln!(w, "{i},{s}")?;
        }
        Ok(())
    })?;
    Ok(outcome)
}

pub fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(CliError::Runtime)
}
