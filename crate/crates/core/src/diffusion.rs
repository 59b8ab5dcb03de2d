//! Hyperbolic Brownian motion in the upper half-plane.
//!
//! The vertical coordinate is a geometric Brownian motion and is sampled
//! exactly: `log Y` moves by `-(1/2+λ)h + √h·G₁`. The horizontal coordinate is
//! conditionally Gaussian with variance `∫Y²ds`; each step approximates that
//! integral by `h·exp(log Y + log Y')`, the squared geometric midpoint of `Y`.
//! The remaining displacement after the last simulated time is sampled exactly:
//! hyperbolic BM is a time change of planar BM, so its exit point from `(x, y)`
//! is Cauchy with location `x` and scale `y`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DomainError};

pub const DEFAULT_DT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    /// Vertical drift away from the boundary point at infinity; 0 is the plain model.
    pub lambda: f64,
    /// Grid step.
    pub dt: f64,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self { lambda: 0.0, dt: DEFAULT_DT }
    }
}

impl DiffusionParams {
    pub fn new(lambda: f64, dt: f64) -> Result<Self, ConfigError> {
        let p = Self { lambda, dt };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigError::invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.lambda > -0.5 && self.lambda.is_finite()) {
            return Err(ConfigError::invalid(
                "lambda",
                format!("must exceed -1/2, got {}", self.lambda),
            ));
        }
        Ok(())
    }

    /// Drift of `log Y` per unit time.
    pub fn log_drift(&self) -> f64 {
        -(0.5 + self.lambda)
    }
}

/// Planar state `(x, log y)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub log_y: f64,
}

impl State {
    pub fn new(x: f64, log_y: f64) -> Self {
        Self { x, log_y }
    }

    pub fn y(&self) -> f64 {
        self.log_y.exp()
    }
}

/// One step of length `h`.
pub fn step<R: Rng + ?Sized>(state: State, h: f64, params: &DiffusionParams, rng: &mut R) -> State {
    let g1: f64 = rng.sample(StandardNormal);
    let g2: f64 = rng.sample(StandardNormal);
    let log_y = state.log_y + params.log_drift() * h + h.sqrt() * g1;
    let sd = h.sqrt() * (0.5 * (state.log_y + log_y)).exp();
    State { x: state.x + sd * g2, log_y }
}

/// Standard Cauchy sample by inversion.
pub fn standard_cauchy<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // open interval (0, 1)
    let u = (rng.random::<u64>() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) + 0.5 / (1u64 << 53) as f64;
    (PI * (u - 0.5)).tan()
}

/// Boundary exit point of hyperbolic BM started at `(x, y)`: `x + y·C`.
pub fn sample_exit<R: Rng + ?Sized>(x: f64, y: f64, rng: &mut R) -> Result<f64, DomainError> {
    if !(y > 0.0) {
        return Err(DomainError::OutsideHalfPlane { x, y });
    }
    Ok(x + y * standard_cauchy(rng))
}

/// The simulation grid on `[0, end]`: points `k·dt` below `end`, then `end` itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dt: f64,
    end: f64,
    steps: u64,
}

impl Grid {
    pub fn new(dt: f64, end: f64) -> Self {
        let steps = if end <= 0.0 { 0 } else { ((end / dt) - 1e-9).ceil().max(1.0) as u64 };
        Self { dt, end, steps }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, k: u64) -> f64 {
        if k >= self.steps {
            self.end
        } else {
            k as f64 * self.dt
        }
    }

    /// Smallest index whose time is strictly after `t`.
    pub fn next_after(&self, t: f64) -> u64 {
        let mut k = ((t / self.dt).floor().max(0.0) as u64 + 1).min(self.steps);
        while k > 0 && self.time(k - 1) > t {
            k -= 1;
        }
        while k <= self.steps && self.time(k) <= t {
            k += 1;
        }
        k
    }
}

/// Advances `state` from `t0` to `t1` (both within the grid), splitting
/// steps at grid points. `visit` sees every grid point in `(t0, t1]`.
pub fn advance<R, V>(
    mut state: State,
    t0: f64,
    t1: f64,
    grid: &Grid,
    params: &DiffusionParams,
    rng: &mut R,
    mut visit: V,
) -> State
where
    R: Rng + ?Sized,
    V: FnMut(f64, &State),
{
    let mut t = t0;
    let mut k = grid.next_after(t0);
    while t < t1 {
        let grid_t = grid.time(k);
        let (next, on_grid) = if grid_t <= t1 { (grid_t, true) } else { (t1, false) };
        state = step(state, next - t, params, rng);
        t = next;
        if on_grid {
            visit(t, &state);
            k += 1;
            if k > grid.steps() {
                break;
            }
        }
    }
    state
}

/// A sampled path at grid resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSegment {
    pub times: Vec<f64>,
    pub log_y: Vec<f64>,
    pub x: Vec<f64>,
}

impl PathSegment {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> State {
        let i = self.times.len() - 1;
        State::new(self.x[i], self.log_y[i])
    }
}

/// Path from `start` at time 0 to `horizon` on the grid of step `params.dt`.
pub fn simulate_path<R: Rng + ?Sized>(
    start: State,
    horizon: f64,
    params: &DiffusionParams,
    rng: &mut R,
) -> PathSegment {
    let grid = Grid::new(params.dt, horizon.max(0.0));
    let cap = grid.steps() as usize + 1;
    let mut seg = PathSegment {
        times: Vec::with_capacity(cap),
        log_y: Vec::with_capacity(cap),
        x: Vec::with_capacity(cap),
    };
    seg.times.push(0.0);
    seg.log_y.push(start.log_y);
    seg.x.push(start.x);
    if horizon > 0.0 {
        advance(start, 0.0, horizon, &grid, params, rng, |t, s| {
            seg.times.push(t);
            seg.log_y.push(s.log_y);
            seg.x.push(s.x);
        });
    }
    seg
}

/// Simulated exit of a single particle: grid path to `t`, then the exact residual.
pub fn simulated_exit<R: Rng + ?Sized>(t: f64, params: &DiffusionParams, rng: &mut R) -> f64 {
    let grid = Grid::new(params.dt, t.max(0.0));
    let end = if t > 0.0 {
        advance(State::default(), 0.0, t, &grid, params, rng, |_, _| {})
    } else {
        State::default()
    };
    x_plus_residual(end, rng)
}

pub(crate) fn x_plus_residual<R: Rng + ?Sized>(s: State, rng: &mut R) -> f64 {
    s.x + s.y() * standard_cauchy(rng)
}
