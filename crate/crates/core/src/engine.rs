//! The branching layer: binary branching at rate β on top of [`diffusion`],
//! with per-particle typicality tracking.
//!
//! A run has two phases. The genealogy (who branches when) is built first in
//! time order, which is where the population cap is enforced. The motion is
//! then simulated down the tree, each particle drawing from its own stream
//! keyed on `(seed, id)`; the two halves of a subtree can run concurrently.
//! The root has id 0 and the children of `i` are `2i+1` and `2i+2`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::{self, Write};

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::diffusion::{advance, DiffusionParams, Grid, State};
use crate::error::{ConfigError, DomainError, EngineError};
use crate::exec::{self, Execution};
use crate::rng::{self, Purpose, StreamRng};

pub const DEFAULT_MAX_PARTICLES: usize = 2_000_000;

/// Exponent of the typicality envelope `|log Y(s) + s/2| ≤ s^{2/3}`.
pub const ENVELOPE_EXPONENT: f64 = 2.0 / 3.0;

/// Subtrees with fewer leaves than this are simulated on one thread.
const PARALLEL_LEAF_THRESHOLD: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Atoms weigh `1/|N(T)|`.
    #[default]
    ByCount,
    /// Atoms weigh `e^{-βT}`.
    ByMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub beta: f64,
    pub lambda: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Typicality onset time `K`.
    pub typical_onset: f64,
    pub seed: u64,
    pub max_particles: usize,
    pub normalization: Normalization,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            lambda: 0.0,
            horizon: 1.0,
            dt: crate::diffusion::DEFAULT_DT,
            typical_onset: 1.0,
            seed: 0,
            max_particles: DEFAULT_MAX_PARTICLES,
            normalization: Normalization::ByCount,
        }
    }
}

impl SimConfig {
    pub fn new(beta: f64, horizon: f64, seed: u64) -> Self {
        Self { beta, horizon, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(ConfigError::invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::invalid(
                "horizon",
                format!("must be positive, got {}", self.horizon),
            ));
        }
        if !(self.typical_onset >= 0.0 && self.typical_onset.is_finite()) {
            return Err(ConfigError::invalid(
                "K",
                format!("must be non-negative, got {}", self.typical_onset),
            ));
        }
        if self.max_particles < 1 {
            return Err(ConfigError::invalid("max_particles", "must be at least 1"));
        }
        self.diffusion().validate()
    }

    pub fn diffusion(&self) -> DiffusionParams {
        DiffusionParams { lambda: self.lambda, dt: self.dt }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Whether `log_y` at time `s` lies outside the typicality envelope.
///
/// The envelope is centred on the mean of `log Y`, `-(1/2+λ)s`.
pub fn envelope_violated(s: f64, log_y: f64, lambda: f64) -> bool {
    // |d| > s^(2/3) compared as |d|³ > s² to stay off powf in the hot loop
    let d = (log_y + (0.5 + lambda) * s).abs();
    d * d * d > s * s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub id: u128,
    pub parent: Option<u128>,
    pub birth_time: f64,
    pub x: f64,
    pub log_y: f64,
    /// No envelope violation at grid times in `[K, T]` for the configured `K`.
    pub typical_ok: bool,
    /// First grid time in `[K, T]` at which the lineage left the envelope.
    pub first_violation: Option<f64>,
    /// Last grid time in `(0, T]` at which the lineage left the envelope;
    /// the particle is typical for onset `K` exactly when this is `< K`.
    pub last_violation: Option<f64>,
}

impl Particle {
    pub fn state(&self) -> State {
        State::new(self.x, self.log_y)
    }

    pub fn y(&self) -> f64 {
        self.log_y.exp()
    }

    pub fn is_typical_for(&self, onset: f64) -> bool {
        self.last_violation.is_none_or(|v| v < onset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSnapshot {
    pub config: SimConfig,
    pub time: f64,
    pub particles: Vec<Particle>,
    /// `(time, population)` after each branch event, starting with `(t₀, 1)`.
    pub population_history: Vec<(f64, usize)>,
    pub capped: bool,
}

impl ParticleSnapshot {
    pub fn population(&self) -> usize {
        self.particles.len()
    }

    pub fn find(&self, id: u128) -> Option<&Particle> {
        self.particles.iter().find(|p| p.id == id)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "id,parent,birth_time,x,logY,typical_ok,first_violation")?;
        for p in &self.particles {
            let parent = p.parent.map(|v| v.to_string()).unwrap_or_default();
            let fv = p.first_violation.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                p.id, parent, p.birth_time, p.x, p.log_y, p.typical_ok as u8, fv
            )?;
        }
        Ok(())
    }
}

/// Start of a (sub)tree: the particle's id, time and state, plus the
/// violation record it inherits from its ancestors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub id: u128,
    pub parent: Option<u128>,
    pub birth_time: f64,
    pub time: f64,
    pub state: State,
    pub first_violation: Option<f64>,
    pub last_violation: Option<f64>,
}

impl Root {
    pub fn origin() -> Self {
        Root {
            id: 0,
            parent: None,
            birth_time: 0.0,
            time: 0.0,
            state: State::default(),
            first_violation: None,
            last_violation: None,
        }
    }

    pub fn from_particle(p: &Particle, time: f64) -> Self {
        Root {
            id: p.id,
            parent: p.parent,
            birth_time: p.birth_time,
            time,
            state: p.state(),
            first_violation: p.first_violation,
            last_violation: p.last_violation,
        }
    }
}

/// Runs the branching process from the origin `(0, 1)` to `config.horizon`.
pub fn run(config: &SimConfig) -> Result<ParticleSnapshot, EngineError> {
    run_with(config, Execution::default())
}

pub fn run_with(config: &SimConfig, exec: Execution) -> Result<ParticleSnapshot, EngineError> {
    config.validate()?;
    grow(config, Root::origin(), config.horizon, config.horizon, config.seed, exec)
}

/// Grows the subtree of `root` from `root.time` to `until` on the grid that
/// ends at `grid_end`, with streams keyed on `stream_seed`.
pub fn grow(
    config: &SimConfig,
    root: Root,
    until: f64,
    grid_end: f64,
    stream_seed: u64,
    exec: Execution,
) -> Result<ParticleSnapshot, EngineError> {
    config.validate()?;
    let genealogy = Genealogy::build(config, &root, until, stream_seed)?;
    let grid = Grid::new(config.dt, grid_end);
    let ctx = MotionContext { config, grid, seed: stream_seed, end: genealogy.end, exec };
    let leaves = genealogy.nodes[0].leaves;
    let mut out = vec![Particle::placeholder(); leaves];
    let carry = Carry {
        state: root.state,
        first_violation: root.first_violation,
        last_violation: root.last_violation,
    };
    ctx.simulate(&genealogy.nodes, 0, root.time, carry, &mut out);
    for p in out.iter_mut() {
        if p.id == root.id {
            p.birth_time = root.birth_time;
            p.parent = root.parent;
        }
    }
    Ok(ParticleSnapshot {
        config: *config,
        time: genealogy.end,
        particles: out,
        population_history: genealogy.history,
        capped: genealogy.capped,
    })
}

impl Particle {
    fn placeholder() -> Self {
        Particle {
            id: 0,
            parent: None,
            birth_time: 0.0,
            x: 0.0,
            log_y: 0.0,
            typical_ok: true,
            first_violation: None,
            last_violation: None,
        }
    }
}

fn branch_clock(rng: &mut StreamRng, beta: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / beta
}

fn child_ids(id: u128) -> Result<(u128, u128), EngineError> {
    let base = id.checked_mul(2).ok_or(EngineError::IdOverflow)?;
    let left = base.checked_add(1).ok_or(EngineError::IdOverflow)?;
    let right = base.checked_add(2).ok_or(EngineError::IdOverflow)?;
    Ok((left, right))
}

pub fn parent_id(id: u128) -> Option<u128> {
    if id == 0 {
        None
    } else {
        Some((id - 1) / 2)
    }
}

#[derive(Debug, Clone)]
struct Node {
    id: u128,
    birth: f64,
    /// Branch time for internal nodes; the run end for leaves.
    end: f64,
    children: Option<(usize, usize)>,
    leaves: usize,
}

struct Genealogy {
    nodes: Vec<Node>,
    history: Vec<(f64, usize)>,
    end: f64,
    capped: bool,
}

struct EventTime(f64);

impl PartialEq for EventTime {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for EventTime {}

impl PartialOrd for EventTime {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EventTime {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Genealogy {
    fn build(config: &SimConfig, root: &Root, until: f64, seed: u64) -> Result<Self, EngineError> {
        let mut nodes = vec![Node {
            id: root.id,
            birth: root.time,
            end: until,
            children: None,
            leaves: 0,
        }];
        let mut queue = BinaryHeap::new();
        let first = root.time + branch_clock(&mut rng::stream(seed, root.id, Purpose::Motion), config.beta);
        queue.push(Reverse((EventTime(first), 0usize)));
        let mut history = vec![(root.time, 1usize)];
        let mut alive = 1usize;
        let mut end = until;
        let mut capped = false;

        while let Some(Reverse((EventTime(t), idx))) = queue.pop() {
            if t > until {
                break;
            }
            if alive + 1 > config.max_particles {
                end = t;
                capped = true;
                break;
            }
            let (left, right) = child_ids(nodes[idx].id)?;
            nodes[idx].end = t;
            let li = nodes.len();
            for (k, id) in [left, right].into_iter().enumerate() {
                let clock = branch_clock(&mut rng::stream(seed, id, Purpose::Motion), config.beta);
                nodes.push(Node { id, birth: t, end: until, children: None, leaves: 0 });
                queue.push(Reverse((EventTime(t + clock), li + k)));
            }
            nodes[idx].children = Some((li, li + 1));
            alive += 1;
            history.push((t, alive));
        }
        for node in nodes.iter_mut().filter(|n| n.children.is_none()) {
            node.end = end;
        }
        // children always come after their parent
        for i in (0..nodes.len()).rev() {
            nodes[i].leaves = match nodes[i].children {
                Some((l, r)) => nodes[l].leaves + nodes[r].leaves,
                None => 1,
            };
        }
        Ok(Genealogy { nodes, history, end, capped })
    }
}

#[derive(Debug, Clone, Copy)]
struct Carry {
    state: State,
    first_violation: Option<f64>,
    last_violation: Option<f64>,
}

struct MotionContext<'a> {
    config: &'a SimConfig,
    grid: Grid,
    seed: u64,
    end: f64,
    exec: Execution,
}

impl MotionContext<'_> {
    fn simulate(&self, nodes: &[Node], idx: usize, start: f64, carry: Carry, out: &mut [Particle]) {
        let node = &nodes[idx];
        let carry = self.move_segment(node.id, start, node.end, carry);
        match node.children {
            None => {
                out[0] = Particle {
                    id: node.id,
                    parent: parent_id(node.id),
                    birth_time: node.birth,
                    x: carry.state.x,
                    log_y: carry.state.log_y,
                    typical_ok: carry.first_violation.is_none(),
                    first_violation: carry.first_violation,
                    last_violation: carry.last_violation,
                };
            }
            Some((l, r)) => {
                let (left_out, right_out) = out.split_at_mut(nodes[l].leaves);
                let t = node.end;
                if out_len(left_out, right_out) >= PARALLEL_LEAF_THRESHOLD {
                    exec::join(
                        self.exec,
                        || self.simulate(nodes, l, t, carry, left_out),
                        || self.simulate(nodes, r, t, carry, right_out),
                    );
                } else {
                    self.simulate(nodes, l, t, carry, left_out);
                    self.simulate(nodes, r, t, carry, right_out);
                }
            }
        }
    }

    fn move_segment(&self, id: u128, t0: f64, t1: f64, mut carry: Carry) -> Carry {
        let mut rng = rng::stream(self.seed, id, Purpose::Motion);
        // the branch clock is the first draw of every motion stream
        let _ = branch_clock(&mut rng, self.config.beta);
        let params = self.config.diffusion();
        let onset = self.config.typical_onset;
        let lambda = self.config.lambda;
        let t1 = t1.min(self.end);
        carry.state = advance(carry.state, t0, t1, &self.grid, &params, &mut rng, |s, st| {
            if envelope_violated(s, st.log_y, lambda) {
                carry.last_violation = Some(s);
                if s >= onset && carry.first_violation.is_none() {
                    carry.first_violation = Some(s);
                }
            }
        });
        carry
    }
}

fn out_len(a: &[Particle], b: &[Particle]) -> usize {
    a.len() + b.len()
}

/// Number of particles that stayed in the envelope on `[onset, T]`.
pub fn typical_count(snapshot: &ParticleSnapshot, onset: f64) -> Result<usize, DomainError> {
    if onset > snapshot.time {
        return Err(DomainError::OnsetAfterHorizon { onset, time: snapshot.time });
    }
    Ok(snapshot.particles.iter().filter(|p| p.is_typical_for(onset)).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineagePoint {
    pub time: f64,
    pub x: f64,
    pub log_y: f64,
}

/// Ancestral path of a particle of a snapshot produced by [`run`]: every
/// grid point and every branch time from 0 to the snapshot time.
pub fn lineage(snapshot: &ParticleSnapshot, id: u128) -> Result<Vec<LineagePoint>, EngineError> {
    if snapshot.find(id).is_none() {
        return Err(EngineError::UnknownParticle(id));
    }
    let config = &snapshot.config;
    let mut chain = vec![id];
    while let Some(p) = parent_id(*chain.last().unwrap()) {
        chain.push(p);
    }
    chain.reverse();

    let grid = Grid::new(config.dt, config.horizon);
    let params = config.diffusion();
    let mut state = State::default();
    let mut t = 0.0;
    let mut path = vec![LineagePoint { time: 0.0, x: state.x, log_y: state.log_y }];
    for (i, &ancestor) in chain.iter().enumerate() {
        let mut rng = rng::stream(config.seed, ancestor, Purpose::Motion);
        let clock = branch_clock(&mut rng, config.beta);
        let end = if i + 1 == chain.len() { snapshot.time } else { t + clock };
        state = advance(state, t, end, &grid, &params, &mut rng, |s, st| {
            path.push(LineagePoint { time: s, x: st.x, log_y: st.log_y });
        });
        if path.last().map(|p| p.time) != Some(end) {
            path.push(LineagePoint { time: end, x: state.x, log_y: state.log_y });
        }
        t = end;
    }
    Ok(path)
}
