//! Monte Carlo checks of the exact identities behind the estimators.
//!
//! Every validator derives its replicate seeds from a single `seed`, so a
//! report is a pure function of its arguments whatever the thread count.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use super::ValidationReport;
use crate::diffusion::{advance, sample_exit, simulated_exit, Grid, State};
use crate::engine::{envelope_violated, grow, run_with, Root, SimConfig};
use crate::error::{DomainError, EstimateError};
use crate::exec::{map_indexed, Execution};
use crate::measures::LineInterval;
use crate::rng::{derive_seed, stream, Purpose};
use crate::stats::{self, cauchy_interval, ks_distance, ks_p_value, median, Moments};
use crate::theory;

const LHS_TAG: u64 = 0x10;
const RHS_TAG: u64 = 0x11;
const GROWTH_TAG: u64 = 0x12;
const STAGE_TAG: u64 = 0x13;

pub const MIN_EXIT_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    One,
    /// `1{X_t ∈ I}`.
    InInterval(LineInterval),
    /// `1{|log Y(s) + (1/2+λ)s| ≤ s^{2/3}` at every grid time `s ∈ [onset, t]}`.
    Envelope { onset: f64 },
}

impl TestFunction {
    fn name(&self) -> &'static str {
        match self {
            TestFunction::One => "many-to-one/one",
            TestFunction::InInterval(_) => "many-to-one/interval",
            TestFunction::Envelope { .. } => "many-to-one/envelope",
        }
    }
}

fn replicate_config(config: &SimConfig, t: f64, seed: u64, r: usize) -> SimConfig {
    config.with_horizon(t).with_seed(derive_seed(seed, LHS_TAG, r as u64))
}

/// Simulates one particle on the grid of `[0, t]` and reports whether the
/// envelope held on `[onset, t]`, along with the end state.
fn single_path(config: &SimConfig, t: f64, onset: f64, rng: &mut impl Rng) -> (State, bool) {
    let grid = Grid::new(config.dt, t);
    let params = config.diffusion();
    let mut ok = true;
    let end = advance(State::default(), 0.0, t, &grid, &params, rng, |s, st| {
        if s >= onset && envelope_violated(s, st.log_y, config.lambda) {
            ok = false;
        }
    });
    (end, ok)
}

/// `E[Σ_u f(path_u)]` over `runs` branching runs against `e^{βt}·E[f(path)]`
/// over `single_runs` single-particle paths (exact for `f ≡ 1`).
pub fn many_to_one(
    config: &SimConfig,
    t: f64,
    f: TestFunction,
    runs: usize,
    single_runs: usize,
    seed: u64,
    exec: Execution,
) -> Result<ValidationReport, EstimateError> {
    config.with_horizon(t).validate()?;
    if let TestFunction::Envelope { onset } = f {
        if onset > t {
            return Err(DomainError::OnsetAfterHorizon { onset, time: t }.into());
        }
    }
    let sums = map_indexed(runs, exec, |r| -> Result<f64, EstimateError> {
        let snapshot = run_with(&replicate_config(config, t, seed, r), Execution::Sequential)?;
        let count = match f {
            TestFunction::One => snapshot.population(),
            TestFunction::InInterval(i) => snapshot.particles.iter().filter(|p| i.contains(p.x)).count(),
            TestFunction::Envelope { onset } => snapshot.particles.iter().filter(|p| p.is_typical_for(onset)).count(),
        };
        Ok(count as f64)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let lhs = Moments::from_values(sums);
    let growth = theory::mean_population(config.beta, t);
    let (rhs, rhs_se) = match f {
        TestFunction::One => (growth, 0.0),
        _ => {
            let rhs_seed = derive_seed(seed, RHS_TAG, 0);
            let values = map_indexed(single_runs, exec, |i| {
                let mut rng = stream(rhs_seed, i as u128, Purpose::SinglePath);
                let onset = match f {
                    TestFunction::Envelope { onset } => onset,
                    _ => f64::INFINITY,
                };
                let (end, ok) = single_path(config, t, onset, &mut rng);
                let hit = match f {
                    TestFunction::InInterval(i) => i.contains(end.x),
                    _ => ok,
                };
                hit as u8 as f64
            });
            let m = Moments::from_values(values);
            (growth * m.mean(), growth * m.stderr())
        }
    };
    Ok(ValidationReport::new(f.name(), lhs.mean(), lhs.stderr(), rhs, rhs_se))
}

/// `E[ν_t(I)²]` for the by-mean measure `ν_t = e^{-βt} Σ_u δ_{X_u(t)}`
/// against the two-marked-particle side: the marks share a path up to an
/// exponential split time `r` and move independently afterwards, so the
/// right side is `E[2·1{X¹_t, X²_t ∈ I}; r < t] + E[1{X_t ∈ I}; r ≥ t]`.
pub fn many_to_two(
    config: &SimConfig,
    interval: LineInterval,
    t: f64,
    runs: usize,
    seed: u64,
    exec: Execution,
) -> Result<ValidationReport, EstimateError> {
    config.with_horizon(t).validate()?;
    let name = "many-to-two";
    if interval.is_empty() {
        return Ok(ValidationReport::new(name, 0.0, 0.0, 0.0, 0.0));
    }
    let scale = (-config.beta * t).exp();
    let values = map_indexed(runs, exec, |r| -> Result<f64, EstimateError> {
        let snapshot = run_with(&replicate_config(config, t, seed, r), Execution::Sequential)?;
        let nu = scale * snapshot.particles.iter().filter(|p| interval.contains(p.x)).count() as f64;
        Ok(nu * nu)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let lhs = Moments::from_values(values);
    if interval.is_real_line() {
        return Ok(ValidationReport::new(name, lhs.mean(), lhs.stderr(), 2.0 - scale, 0.0));
    }
    let rhs_seed = derive_seed(seed, RHS_TAG, 0);
    let grid = Grid::new(config.dt, t);
    let params = config.diffusion();
    let weights = map_indexed(runs, exec, |i| {
        let idx = 3 * i as u128;
        let split: f64 = stream(rhs_seed, i as u128, Purpose::Choice).sample::<f64, _>(Exp1) / config.beta;
        let mut common = stream(rhs_seed, idx, Purpose::SinglePath);
        if split >= t {
            let end = advance(State::default(), 0.0, t, &grid, &params, &mut common, |_, _| {});
            return interval.contains(end.x) as u8 as f64;
        }
        let at_split = advance(State::default(), 0.0, split, &grid, &params, &mut common, |_, _| {});
        let mut a = stream(rhs_seed, idx + 1, Purpose::SinglePath);
        let mut b = stream(rhs_seed, idx + 2, Purpose::SinglePath);
        let xa = advance(at_split, split, t, &grid, &params, &mut a, |_, _| {}).x;
        let xb = advance(at_split, split, t, &grid, &params, &mut b, |_, _| {}).x;
        2.0 * (interval.contains(xa) && interval.contains(xb)) as u8 as f64
    });
    let rhs = Moments::from_values(weights);
    Ok(ValidationReport::new(name, lhs.mean(), lhs.stderr(), rhs.mean(), rhs.stderr()))
}

/// `E[e^{-βt} Σ_u h_I(X_u, Y_u)]` against `h_I(0, 1)`, where `h_I(x, y)` is
/// the exit probability of `I` from `(x, y)`.
pub fn harmonic_martingale(
    config: &SimConfig,
    interval: LineInterval,
    t: f64,
    runs: usize,
    seed: u64,
    exec: Execution,
) -> Result<ValidationReport, EstimateError> {
    config.with_horizon(t).validate()?;
    let h = |x: f64, y: f64| {
        if interval.is_empty() {
            0.0
        } else {
            cauchy_interval(interval.lo, interval.hi, x, y)
        }
    };
    let scale = (-config.beta * t).exp();
    let values = map_indexed(runs, exec, |r| -> Result<f64, EstimateError> {
        let snapshot = run_with(&replicate_config(config, t, seed, r), Execution::Sequential)?;
        Ok(scale * snapshot.particles.iter().map(|p| h(p.x, p.y())).sum::<f64>())
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let lhs = Moments::from_values(values);
    Ok(ValidationReport::new("harmonic-martingale", lhs.mean(), lhs.stderr(), h(0.0, 1.0), 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitBoundCell {
    pub y: f64,
    pub width: f64,
    pub empirical: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitBoundReport {
    /// Empirical supremum of `P(exit ∈ I)·y/|I|` over the grid against the
    /// exact supremum.
    pub sup: ValidationReport,
    /// `P_{(0,2)}(exit ∈ [-1, 1])` against `P_{(0,1)}(exit ∈ [-1/2, 1/2])`.
    pub scaling: ValidationReport,
    /// The exit density at the centre is `1/(πy)`, so no ratio exceeds this.
    pub constant: f64,
    pub cells: Vec<ExitBoundCell>,
}

/// Empirical exit probabilities of centred intervals over a grid of starting
/// heights `ys` and widths, each cell from `samples` exact exits.
pub fn exit_bound(ys: &[f64], widths: &[f64], samples: usize, seed: u64) -> Result<ExitBoundReport, EstimateError> {
    if ys.iter().chain(widths).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(DomainError::Invalid("heights and widths must be positive".into()).into());
    }
    if ys.is_empty() || widths.is_empty() || samples == 0 {
        return Err(EstimateError::InsufficientData("empty grid".into()));
    }
    let hits = |y: f64, half: f64, index: u128| -> u64 {
        let mut rng = stream(seed, index, Purpose::Exit);
        (0..samples)
            .filter(|_| sample_exit(0.0, y, &mut rng).expect("positive height").abs() <= half)
            .count() as u64
    };
    let mut cells = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    let mut exact_sup: f64 = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        for (j, &w) in widths.iter().enumerate() {
            let index = (i * widths.len() + j) as u128;
            let p = hits(y, w / 2.0, index) as f64 / samples as f64;
            let factor = y / w;
            let exact = cauchy_interval(-w / 2.0, w / 2.0, 0.0, y) * factor;
            let se = (p * (1.0 - p) / samples as f64).sqrt() * factor;
            if best.is_none_or(|(b, _)| p * factor > b) {
                best = Some((p * factor, se));
            }
            exact_sup = exact_sup.max(exact);
            cells.push(ExitBoundCell { y, width: w, empirical: p * factor, exact });
        }
    }
    let (sup, sup_se) = best.expect("non-empty grid");
    let base = (ys.len() * widths.len()) as u128;
    let p2 = hits(2.0, 1.0, base) as f64 / samples as f64;
    let p1 = hits(1.0, 0.5, base + 1) as f64 / samples as f64;
    let se = |p: f64| (p * (1.0 - p) / samples as f64).sqrt();
    Ok(ExitBoundReport {
        sup: ValidationReport::new("exit-bound/sup", sup, sup_se, exact_sup, 0.0),
        scaling: ValidationReport::new("exit-bound/scaling", p2, se(p2), p1, se(p1)),
        constant: 1.0 / PI,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitLawReport {
    pub ks: f64,
    pub p_value: f64,
    pub median: f64,
    pub samples: usize,
    pub t: f64,
    pub dt: f64,
}

/// Simulated exits (grid path to `t`, then the exact residual) against the
/// standard Cauchy law.
pub fn exit_law(config: &SimConfig, t: f64, samples: usize, seed: u64, exec: Execution) -> Result<ExitLawReport, EstimateError> {
    if samples < MIN_EXIT_SAMPLES {
        return Err(EstimateError::InsufficientData(format!(
            "at least {MIN_EXIT_SAMPLES} samples, got {samples}"
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(DomainError::Invalid(format!("time must be non-negative, got {t}")).into());
    }
    let params = config.diffusion();
    params.validate()?;
    let exits = exit_samples(t, &params, samples, seed, exec);
    let ks = ks_distance(&exits, |x| stats::cauchy_cdf(x, 0.0, 1.0));
    Ok(ExitLawReport { ks, p_value: ks_p_value(ks, samples), median: median(&exits), samples, t, dt: config.dt })
}

pub fn exit_samples(
    t: f64,
    params: &crate::diffusion::DiffusionParams,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Vec<f64> {
    map_indexed(samples, exec, |i| {
        let mut rng = stream(seed, i as u128, Purpose::SinglePath);
        simulated_exit(t, params, &mut rng)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    /// Mean of `(Π_j 1/N_j)^{1/n}` against `e^{-βK}`.
    pub validation: ValidationReport,
    pub accepted: usize,
    pub rejected: usize,
    pub statistics: Vec<f64>,
}

/// One attempt of the re-marked typical lineage: at each of `n` stages the
/// marked particle's subtree is grown for `K` and a new mark is chosen
/// uniformly among its typical descendants. `None` if some stage has none.
fn growth_attempt(config: &SimConfig, k: f64, n: usize, seed: u64) -> Result<Option<f64>, EstimateError> {
    let grid_end = config.horizon;
    let mut mark = Root::origin();
    let mut log_sum = 0.0;
    for j in 1..=n {
        let until = j as f64 * k;
        let stage_seed = derive_seed(seed, STAGE_TAG, j as u64);
        let snapshot = grow(config, mark, until, grid_end, stage_seed, Execution::Sequential)?;
        let typical: Vec<_> = snapshot.particles.iter().filter(|p| p.is_typical_for(k)).collect();
        if typical.is_empty() {
            return Ok(None);
        }
        let pick = stream(seed, j as u128, Purpose::Choice).random_range(0..typical.len());
        log_sum += (typical.len() as f64).ln();
        mark = Root::from_particle(typical[pick], until);
    }
    Ok(Some((-log_sum / n as f64).exp()))
}

/// Mean geometric statistic over `runs` accepted attempts; attempts with an
/// empty typical set at some stage are rejected and replaced.
pub fn growth_rate(
    config: &SimConfig,
    k: f64,
    n: usize,
    runs: usize,
    seed: u64,
    exec: Execution,
) -> Result<GrowthReport, EstimateError> {
    let mut config = *config;
    config.typical_onset = k;
    config.validate()?;
    if n == 0 || !(k > 0.0) {
        return Err(DomainError::Invalid("need n ≥ 1 and K > 0".into()).into());
    }
    if n as f64 * k > config.horizon + 1e-9 {
        return Err(DomainError::OnsetAfterHorizon { onset: n as f64 * k, time: config.horizon }.into());
    }
    let max_attempts = 50 * runs.max(1);
    let mut statistics = Vec::new();
    let mut attempts = 0;
    while statistics.len() < runs && attempts < max_attempts {
        let batch = (runs - statistics.len()).max(16).min(max_attempts - attempts);
        let results = map_indexed(batch, exec, |b| {
            growth_attempt(&config, k, n, derive_seed(seed, GROWTH_TAG, (attempts + b) as u64))
        });
        for r in results {
            attempts += 1;
            if let Some(s) = r? {
                if statistics.len() < runs {
                    statistics.push(s);
                }
            }
        }
    }
    if statistics.is_empty() {
        return Err(EstimateError::ConditioningFailure(attempts));
    }
    let m = Moments::from_values(statistics.iter().copied());
    Ok(GrowthReport {
        validation: ValidationReport::new("growth-rate", m.mean(), m.stderr(), (-config.beta * k).exp(), 0.0),
        accepted: statistics.len(),
        rejected: attempts - statistics.len(),
        statistics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YuleReport {
    /// Mean population against `e^{βt}`.
    pub mean: ValidationReport,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    /// `(smallest count in bin, observed, expected)`; the last bin is a tail.
    pub bins: Vec<(u64, u64, f64)>,
}

/// Population counts at `t` against the geometric law with success
/// probability `e^{-βt}`.
pub fn yule_check(beta: f64, t: f64, runs: usize, seed: u64, exec: Execution) -> Result<YuleReport, EstimateError> {
    let config = SimConfig::new(beta, t, seed);
    config.validate()?;
    let counts: Vec<u64> = map_indexed(runs, exec, |r| -> Result<u64, EstimateError> {
        Ok(run_with(&replicate_config(&config, t, seed, r), Execution::Sequential)?.population() as u64)
    })
    .into_iter()
    .collect::<Result<_, _>>()?;
    let moments = Moments::from_values(counts.iter().map(|&c| c as f64));
    let n = runs as f64;
    let q = 1.0 - (-beta * t).exp();
    // single bins 1..m-1 and a tail {N ≥ m}, every expectation at least 5
    let mut m = 1u64;
    while n * theory::yule_pmf(beta, t, m) >= 5.0 && n * q.powf(m as f64) >= 5.0 {
        m += 1;
    }
    let mut bins: Vec<(u64, u64, f64)> = (1..m).map(|k| (k, 0, n * theory::yule_pmf(beta, t, k))).collect();
    bins.push((m, 0, n * q.powf((m - 1) as f64)));
    for &c in &counts {
        let i = (c.min(m) - 1) as usize;
        bins[i].1 += 1;
    }
    let chi_square: f64 = bins.iter().map(|&(_, o, e)| (o as f64 - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    Ok(YuleReport {
        mean: ValidationReport::new("yule/mean", moments.mean(), moments.stderr(), theory::mean_population(beta, t), 0.0),
        chi_square,
        dof,
        p_value: stats::chi_square_sf(chi_square, dof),
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn many_to_one_with_constant_function() {
        let c = SimConfig::new(0.5, 1.0, 0);
        let r = many_to_one(&c, 2.0, TestFunction::One, 2000, 0, 4, Execution::Parallel).unwrap();
        assert_eq!(r.rhs, 1f64.exp());
        assert!(r.within(4.0), "{r:?}");
    }

    #[test]
    fn empty_interval_is_exactly_zero() {
        let c = SimConfig::new(0.5, 1.0, 0);
        let r = many_to_two(&c, LineInterval::empty(), 1.0, 10, 1, Execution::Sequential).unwrap();
        assert_eq!((r.lhs, r.rhs, r.z), (0.0, 0.0, 0.0));
        let h = harmonic_martingale(&c, LineInterval::empty(), 1.0, 10, 1, Execution::Sequential).unwrap();
        assert_eq!((h.lhs, h.rhs), (0.0, 0.0));
    }

    #[test]
    fn harmonic_with_whole_line_tracks_population() {
        let c = SimConfig::new(0.5, 1.0, 0);
        let r = harmonic_martingale(&c, LineInterval::real_line(), 1.0, 500, 2, Execution::Parallel).unwrap();
        assert_eq!(r.rhs, 1.0);
        assert!(r.within(4.0));
        let half = harmonic_martingale(&c, LineInterval::new(0.0, f64::INFINITY), 1.0, 10, 2, Execution::Parallel).unwrap();
        assert!((half.rhs - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exit_bound_saturates_for_wide_intervals() {
        let r = exit_bound(&[0.01], &[100.0], 1000, 3).unwrap();
        // probability near 1, ratio y/|I| tiny
        assert!(r.cells[0].empirical < 1e-3);
        assert!(r.cells[0].exact <= 1.0 / PI);
        assert!(exit_bound(&[-1.0], &[1.0], 10, 0).is_err());
    }

    #[test]
    fn exit_law_needs_enough_samples() {
        let c = SimConfig::default();
        assert!(exit_law(&c, 1.0, 100, 0, Execution::Sequential).is_err());
    }

    #[test]
    fn single_generation_growth() {
        let c = SimConfig::new(1.0, 1.0, 0);
        let r = growth_rate(&c, 1.0, 1, 400, 8, Execution::Parallel).unwrap();
        assert_eq!(r.accepted, 400);
        assert!(r.statistics.iter().all(|&s| s > 0.0 && s <= 1.0));
        // 1/N with N at most the full population, whose mean is e
        assert!(r.validation.lhs > (-1.0f64).exp() && r.validation.lhs < 1.0);
        assert!(growth_rate(&c, 1.0, 2, 10, 8, Execution::Parallel).is_err());
    }

    #[test]
    fn yule_bins_cover_all_runs() {
        let r = yule_check(1.0, 1.0, 2000, 5, Execution::Parallel).unwrap();
        assert_eq!(r.bins.iter().map(|b| b.1).sum::<u64>(), 2000);
        let e: f64 = r.bins.iter().map(|b| b.2).sum();
        assert!((e - 2000.0).abs() < 1e-6);
        assert!(r.bins.iter().all(|b| b.2 >= 5.0));
    }
}
