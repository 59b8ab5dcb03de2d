//! Box-counting and correlation dimension of boundary measures.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::EstimateReport;
use crate::engine::{run_with, SimConfig};
use crate::error::EstimateError;
use crate::exec::{map_indexed, Execution};
use crate::measures::{project_to_boundary, BoundaryMeasure};
use crate::rng::derive_seed;
use crate::stats::{fit_line, log_space, Moments};
use crate::theory;

pub const MIN_SCALES: usize = 4;
/// Minimum `log10(δ_max/δ_min)` for a scaling fit.
pub const MIN_DECADES: f64 = 1.5;
/// Smallest usable box is `RESOLUTION_FACTOR / N` radians for `N` atoms.
pub const RESOLUTION_FACTOR: f64 = 10.0;
pub const LARGEST_SCALE: f64 = TAU / 8.0;
pub const MIN_CORRELATION_ATOMS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxMode {
    /// Boxes needed to cover all but a `mass_floor` fraction of the total
    /// mass, heaviest boxes first. The dropped light boxes together carry at
    /// most `mass_floor·total`.
    Support { mass_floor: f64 },
    /// Boxes holding at least one atom, whatever its weight.
    AllPoints,
}

impl BoxMode {
    pub const DEFAULT_MASS_FLOOR: f64 = 0.05;

    pub fn support() -> Self {
        BoxMode::Support { mass_floor: Self::DEFAULT_MASS_FLOOR }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BoxMode::Support { .. } => "support",
            BoxMode::AllPoints => "all-points",
        }
    }
}

/// Masses of the non-empty boxes `[kδ, (k+1)δ)` partitioning `[0, 2π)`.
pub fn box_masses(measure: &BoundaryMeasure, delta: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut current: Option<(u64, f64)> = None;
    for a in measure.atoms() {
        let k = (a.angle / delta).floor() as u64;
        match current {
            Some((j, ref mut m)) if j == k => *m += a.weight,
            _ => {
                if let Some((_, m)) = current {
                    out.push(m);
                }
                current = Some((k, a.weight));
            }
        }
    }
    if let Some((_, m)) = current {
        out.push(m);
    }
    out
}

pub fn box_count(measure: &BoundaryMeasure, delta: f64, mode: BoxMode) -> usize {
    let masses = box_masses(measure, delta);
    match mode {
        BoxMode::AllPoints => masses.len(),
        BoxMode::Support { mass_floor } => {
            let total: f64 = masses.iter().sum();
            if total <= 0.0 {
                return 0;
            }
            let mut sorted = masses;
            sorted.sort_by(|a, b| b.total_cmp(a));
            let need = (1.0 - mass_floor) * total;
            let mut acc = 0.0;
            for (i, m) in sorted.iter().enumerate() {
                acc += m;
                if acc >= need * (1.0 - 1e-12) {
                    return i + 1;
                }
            }
            sorted.len()
        }
    }
}

fn check_scales(scales: &[f64]) -> Result<(f64, f64), EstimateError> {
    if scales.len() < MIN_SCALES {
        return Err(EstimateError::TooFewScales { needed: MIN_SCALES, got: scales.len() });
    }
    if scales.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(EstimateError::Degenerate("scales must be positive and finite".into()));
    }
    let lo = scales.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scales.iter().copied().fold(0.0, f64::max);
    let decades = (hi / lo).log10();
    if decades < MIN_DECADES {
        return Err(EstimateError::NarrowScaleRange { needed: MIN_DECADES, got: decades });
    }
    Ok((lo, hi))
}

/// Log-spaced scales from `10/atoms` up to `2π/8`.
pub fn default_scales(atoms: usize, n: usize) -> Result<Vec<f64>, EstimateError> {
    if atoms == 0 {
        return Err(EstimateError::InsufficientData("no atoms".into()));
    }
    let lo = RESOLUTION_FACTOR / atoms as f64;
    let decades = (LARGEST_SCALE / lo).log10();
    if decades < MIN_DECADES {
        return Err(EstimateError::NarrowScaleRange { needed: MIN_DECADES, got: decades });
    }
    Ok(log_space(lo, LARGEST_SCALE, n.max(MIN_SCALES)))
}

/// Slope of `ln N(δ)` against `ln(1/δ)`.
pub fn box_dimension(measure: &BoundaryMeasure, scales: &[f64], mode: BoxMode) -> Result<EstimateReport, EstimateError> {
    let (lo, hi) = check_scales(scales)?;
    let mut sorted = scales.to_vec();
    sorted.sort_by(f64::total_cmp);
    let counts: Vec<usize> = sorted.iter().map(|&d| box_count(measure, d, mode)).collect();
    if *counts.last().expect("non-empty") == 0 {
        return Err(EstimateError::Degenerate("no occupied box at the largest scale".into()));
    }
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(EstimateError::Degenerate(format!("no occupied box at scale {}", sorted[i])));
    }
    let xs: Vec<f64> = sorted.iter().map(|d| -d.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let fit = fit_line(&xs, &ys).ok_or_else(|| EstimateError::Degenerate("singular fit".into()))?;
    Ok(EstimateReport {
        name: format!("box-{}", mode.name()),
        estimate: fit.slope,
        stderr: fit.slope_stderr,
        scales: (lo, hi),
        points_per_scale: 1,
        replicates: 1,
        target: None,
        provenance: String::new(),
        points: sorted.iter().zip(&counts).map(|(&d, &c)| (d, c as f64)).collect(),
    })
}

/// Weighted pair correlation sum `C(δ)` over distinct atoms at circular
/// distance `≤ δ`, normalized by the total pair weight. Requires `δ < π`.
pub fn correlation_sum(measure: &BoundaryMeasure, delta: f64) -> f64 {
    let atoms = measure.atoms();
    let n = atoms.len();
    if n < 2 {
        return 0.0;
    }
    // three copies of the circle so every window is contiguous
    let mut angles = Vec::with_capacity(3 * n);
    let mut prefix = Vec::with_capacity(3 * n + 1);
    prefix.push(0.0);
    for shift in [-TAU, 0.0, TAU] {
        for a in atoms {
            angles.push(a.angle + shift);
            prefix.push(prefix.last().unwrap() + a.weight);
        }
    }
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    let sum_sq: f64 = atoms.iter().map(|a| a.weight * a.weight).sum();
    let pair_total = total * total - sum_sq;
    if pair_total <= 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, a) in atoms.iter().enumerate() {
        let c = n + i;
        let lo = angles[..=c].partition_point(|&x| x < a.angle - delta);
        let hi = c + angles[c..].partition_point(|&x| x <= a.angle + delta);
        let window = prefix[hi] - prefix[lo];
        acc += a.weight * (window - a.weight);
    }
    (acc / pair_total).max(0.0)
}

/// Slope of `ln C(δ)` against `ln δ`.
pub fn correlation_dimension(measure: &BoundaryMeasure, scales: &[f64]) -> Result<EstimateReport, EstimateError> {
    if measure.len() < MIN_CORRELATION_ATOMS {
        return Err(EstimateError::InsufficientData(format!(
            "correlation sum needs at least {MIN_CORRELATION_ATOMS} atoms, got {}",
            measure.len()
        )));
    }
    let (lo, hi) = check_scales(scales)?;
    if hi >= std::f64::consts::PI {
        return Err(EstimateError::Degenerate("scales must stay below π".into()));
    }
    let mut sorted = scales.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sums: Vec<f64> = sorted.iter().map(|&d| correlation_sum(measure, d)).collect();
    if let Some(i) = sums.iter().position(|&c| c <= 0.0) {
        return Err(EstimateError::Degenerate(format!("no close pairs at scale {}", sorted[i])));
    }
    let xs: Vec<f64> = sorted.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = sums.iter().map(|c| c.ln()).collect();
    let fit = fit_line(&xs, &ys).ok_or_else(|| EstimateError::Degenerate("singular fit".into()))?;
    Ok(EstimateReport {
        name: "correlation".into(),
        estimate: fit.slope,
        stderr: fit.slope_stderr,
        scales: (lo, hi),
        points_per_scale: 1,
        replicates: 1,
        target: None,
        provenance: String::new(),
        points: sorted.iter().copied().zip(sums).collect(),
    })
}

/// How long each replicate runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HorizonRule {
    Fixed(f64),
    /// Stop when the population first reaches this size, so every replicate
    /// carries the same number of atoms whatever its branching luck.
    Population(usize),
}

impl HorizonRule {
    pub const DEFAULT_POPULATION: usize = 200_000;
}

pub fn mode_target(mode: BoxMode, beta: f64, lambda: f64) -> f64 {
    match mode {
        BoxMode::Support { .. } => theory::support_dimension(beta, lambda),
        BoxMode::AllPoints => theory::limit_set_dimension(beta, lambda),
    }
}

fn mode_provenance(mode: BoxMode) -> &'static str {
    match mode {
        BoxMode::Support { .. } => "closed form min(2β/(1+2λ), 1)",
        BoxMode::AllPoints => {
            "closed form ((1+2λ) - sqrt((1+2λ)² - 8β))/2 capped at 1; heuristic estimate from all exit atoms"
        }
    }
}

/// Replicate setup shared by the dimension and Hölder studies.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureStudy {
    pub beta: f64,
    pub lambda: f64,
    pub dt: f64,
    pub horizon: HorizonRule,
    pub replicates: usize,
    /// Number of log-spaced scales between `10/N` and `2π/8`.
    pub scales: usize,
    pub seed: u64,
}

impl MeasureStudy {
    pub fn new(beta: f64, seed: u64) -> Self {
        Self {
            beta,
            lambda: 0.0,
            dt: crate::diffusion::DEFAULT_DT,
            horizon: HorizonRule::Population(HorizonRule::DEFAULT_POPULATION),
            replicates: 20,
            scales: 12,
            seed,
        }
    }

    pub fn config(&self, replicate: usize) -> SimConfig {
        let mut c = SimConfig::new(self.beta, 1.0, derive_seed(self.seed, DIMENSION_TAG, replicate as u64));
        c.lambda = self.lambda;
        c.dt = self.dt;
        c.typical_onset = 0.0;
        match self.horizon {
            HorizonRule::Fixed(t) => c.horizon = t,
            HorizonRule::Population(n) => {
                // generous ceiling; the population cap ends the run first
                c.horizon = 20.0 * (n.max(2) as f64).ln() / self.beta;
                c.max_particles = n;
            }
        }
        c
    }

    /// Runs replicate `r` and returns its boundary measure with the snapshot
    /// population and time.
    pub fn measure(&self, r: usize, exec: Execution) -> Result<(BoundaryMeasure, usize, f64), EstimateError> {
        let config = self.config(r);
        config.validate()?;
        let snapshot = run_with(&config, exec)?;
        let measure = project_to_boundary(&snapshot, derive_seed(config.seed, EXIT_TAG, 0));
        Ok((measure, snapshot.population(), snapshot.time))
    }
}

const DIMENSION_TAG: u64 = 0xd1;
const EXIT_TAG: u64 = 0xe1;

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionReport {
    /// One report per requested mode, in order.
    pub estimates: Vec<EstimateReport>,
    /// `slopes[m][r]`: slope of mode `m` in replicate `r`.
    pub slopes: Vec<Vec<f64>>,
    pub populations: Vec<usize>,
    pub horizons: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DimensionEstimator {
    Box(BoxMode),
    Correlation,
}

impl DimensionEstimator {
    pub fn name(&self) -> String {
        match self {
            DimensionEstimator::Box(mode) => format!("box-{}", mode.name()),
            DimensionEstimator::Correlation => "correlation".into(),
        }
    }

    pub fn target(&self, beta: f64, lambda: f64) -> f64 {
        match self {
            DimensionEstimator::Box(mode) => mode_target(*mode, beta, lambda),
            DimensionEstimator::Correlation => theory::support_dimension(beta, lambda),
        }
    }

    fn provenance(&self) -> &'static str {
        match self {
            DimensionEstimator::Box(mode) => mode_provenance(*mode),
            DimensionEstimator::Correlation => "closed form min(2β/(1+2λ), 1) for the support; pair scaling of the measure",
        }
    }

    fn fit(&self, measure: &BoundaryMeasure, scales: &[f64]) -> Result<EstimateReport, EstimateError> {
        match self {
            DimensionEstimator::Box(mode) => box_dimension(measure, scales, *mode),
            DimensionEstimator::Correlation => correlation_dimension(measure, scales),
        }
    }
}

impl From<BoxMode> for DimensionEstimator {
    fn from(mode: BoxMode) -> Self {
        DimensionEstimator::Box(mode)
    }
}

/// Runs independent replicates and averages their slopes for every requested
/// estimator; all estimators share the same replicates.
pub fn run_dimension_study(
    study: &MeasureStudy,
    estimators: &[DimensionEstimator],
    exec: Execution,
) -> Result<DimensionReport, EstimateError> {
    if study.replicates == 0 {
        return Err(EstimateError::InsufficientData("at least one replicate".into()));
    }
    if estimators.is_empty() {
        return Err(EstimateError::InsufficientData("at least one estimator".into()));
    }
    let results = map_indexed(study.replicates, exec, |r| -> Result<_, EstimateError> {
        let (measure, population, time) = study.measure(r, exec)?;
        let scales = default_scales(measure.len(), study.scales)?;
        let fits = estimators
            .iter()
            .map(|e| e.fit(&measure, &scales))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((fits, population, time))
    });
    let mut fits_by_mode: Vec<Vec<EstimateReport>> = vec![Vec::new(); estimators.len()];
    let mut populations = Vec::new();
    let mut horizons = Vec::new();
    for r in results {
        let (fits, pop, t) = r?;
        for (m, fit) in fits.into_iter().enumerate() {
            fits_by_mode[m].push(fit);
        }
        populations.push(pop);
        horizons.push(t);
    }
    let mut estimates = Vec::new();
    let mut slopes = Vec::new();
    for (mode, fits) in estimators.iter().zip(fits_by_mode) {
        let s: Vec<f64> = fits.iter().map(|f| f.estimate).collect();
        let m = Moments::from_values(s.iter().copied());
        let stderr = if s.len() > 1 { m.stderr() } else { fits[0].stderr };
        let lo = fits.iter().map(|f| f.scales.0).fold(f64::INFINITY, f64::min);
        let hi = fits.iter().map(|f| f.scales.1).fold(0.0, f64::max);
        estimates.push(EstimateReport {
            name: mode.name(),
            estimate: m.mean(),
            stderr,
            scales: (lo, hi),
            points_per_scale: study.replicates,
            replicates: study.replicates,
            target: Some(mode.target(study.beta, study.lambda)),
            provenance: mode.provenance().into(),
            points: fits.into_iter().flat_map(|f| f.points).collect(),
        });
        slopes.push(s);
    }
    Ok(DimensionReport { estimates, slopes, populations, horizons })
}
