//! Atomic measures on the boundary circle built from particle snapshots.
//!
//! Each particle contributes one atom at the disk angle of an exact exit
//! sample drawn from its current position. Exit samples are keyed on the
//! particle id, so the full measure and every typical restriction built from
//! the same snapshot and exit seed share their atoms.

use std::f64::consts::TAU;
use std::io::{self, Write};

use crate::diffusion::sample_exit;
use crate::engine::{Normalization, ParticleSnapshot};
use crate::error::DomainError;
use crate::geometry::line_to_angle;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    /// Disk angle in `[0, 2π)`.
    pub angle: f64,
    pub weight: f64,
    pub typical: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMeasure {
    atoms: Vec<Atom>,
    normalization: Normalization,
    /// `cumulative[i]` is the mass of atoms `0..=i`.
    cumulative: Vec<f64>,
    total: f64,
}

impl BoundaryMeasure {
    /// Measure whose atoms all weigh `1/denominator`; cumulative masses are
    /// computed as `count/denominator`, so a full by-count measure has total
    /// mass exactly 1.
    pub fn uniform(mut angles: Vec<(f64, bool)>, denominator: f64, normalization: Normalization) -> Self {
        angles.sort_by(|a, b| a.0.total_cmp(&b.0));
        let weight = 1.0 / denominator;
        let atoms: Vec<Atom> = angles
            .into_iter()
            .map(|(angle, typical)| Atom { angle, weight, typical })
            .collect();
        let cumulative: Vec<f64> = (1..=atoms.len()).map(|i| i as f64 / denominator).collect();
        let total = cumulative.last().copied().unwrap_or(0.0);
        Self { atoms, normalization, cumulative, total }
    }

    /// Measure with arbitrary non-negative weights.
    pub fn from_atoms(mut atoms: Vec<Atom>, normalization: Normalization) -> Result<Self, DomainError> {
        if let Some(a) = atoms.iter().find(|a| !(a.weight >= 0.0) || !a.angle.is_finite()) {
            return Err(DomainError::Invalid(format!("bad atom {a:?}")));
        }
        for a in atoms.iter_mut() {
            a.angle = crate::geometry::BoundaryPoint::from_angle(a.angle).angle();
        }
        atoms.sort_by(|a, b| a.angle.total_cmp(&b.angle));
        let mut acc = 0.0;
        let cumulative: Vec<f64> = atoms
            .iter()
            .map(|a| {
                acc += a.weight;
                acc
            })
            .collect();
        Ok(Self { atoms, normalization, cumulative, total: acc })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn max_atom(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).fold(0.0, f64::max)
    }

    /// Rotates every atom by `by` radians.
    pub fn rotated(&self, by: f64) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom { angle: a.angle + by, ..*a })
            .collect();
        Self::from_atoms(atoms, self.normalization).expect("rotation keeps atoms valid")
    }

    /// Mass of atoms with angle `< a`.
    fn mass_below(&self, a: f64) -> f64 {
        let i = self.atoms.partition_point(|x| x.angle < a);
        if i == 0 {
            0.0
        } else {
            self.cumulative[i - 1]
        }
    }

    /// Mass of atoms with angle `≤ a`.
    fn mass_up_to(&self, a: f64) -> f64 {
        let i = self.atoms.partition_point(|x| x.angle <= a);
        if i == 0 {
            0.0
        } else {
            self.cumulative[i - 1]
        }
    }

    /// Mass of the closed arc `[lo, hi]` with `0 ≤ lo ≤ hi ≤ 2π`.
    fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        if hi < lo {
            return 0.0;
        }
        (self.mass_up_to(hi) - self.mass_below(lo)).max(0.0)
    }

    pub fn interval_mass(&self, interval: &Interval) -> f64 {
        match *interval {
            Interval::Arc(arc) => {
                if arc.length >= TAU {
                    return self.total;
                }
                if arc.length < 0.0 {
                    return 0.0;
                }
                let end = arc.start + arc.length;
                if end < TAU {
                    self.mass_between(arc.start, end)
                } else {
                    self.mass_between(arc.start, TAU) + self.mass_between(0.0, end - TAU)
                }
            }
            Interval::Line(line) => {
                if line.is_empty() {
                    return 0.0;
                }
                // angle 0 is the point at infinity and never belongs to a line interval
                let lo = if line.lo == f64::NEG_INFINITY {
                    self.total - self.mass_up_to(0.0)
                } else {
                    self.total - self.mass_below(line_to_angle(line.lo))
                };
                let hi_excluded = if line.hi == f64::INFINITY {
                    0.0
                } else {
                    self.total - self.mass_up_to(line_to_angle(line.hi))
                };
                (lo - hi_excluded).max(0.0)
            }
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "angle,weight,typical")?;
        for a in &self.atoms {
            writeln!(w, "{},{},{}", a.angle, a.weight, a.typical as u8)?;
        }
        Ok(())
    }
}

/// A closed arc of the circle, `[start, start + length]` taken mod 2π.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub start: f64,
    pub length: f64,
}

impl Arc {
    pub fn new(start: f64, length: f64) -> Self {
        Self { start: crate::geometry::BoundaryPoint::from_angle(start).angle(), length }
    }

    pub fn full() -> Self {
        Self { start: 0.0, length: TAU }
    }
}

/// A closed interval of the half-plane boundary line; endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineInterval {
    pub lo: f64,
    pub hi: f64,
}

impl LineInterval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn real_line() -> Self {
        Self { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn empty() -> Self {
        Self { lo: 1.0, hi: 0.0 }
    }

    /// `[-width/2, width/2]`.
    pub fn centered(width: f64) -> Self {
        Self { lo: -width / 2.0, hi: width / 2.0 }
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn is_real_line(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.hi - self.lo
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interval {
    Arc(Arc),
    Line(LineInterval),
}

impl From<Arc> for Interval {
    fn from(a: Arc) -> Self {
        Interval::Arc(a)
    }
}

impl From<LineInterval> for Interval {
    fn from(l: LineInterval) -> Self {
        Interval::Line(l)
    }
}

fn denominator(snapshot: &ParticleSnapshot) -> f64 {
    match snapshot.config.normalization {
        Normalization::ByCount => snapshot.population() as f64,
        Normalization::ByMean => (snapshot.config.beta * snapshot.time).exp(),
    }
}

fn exit_angles<F>(snapshot: &ParticleSnapshot, exit_seed: u64, keep: F) -> Vec<(f64, bool)>
where
    F: Fn(&crate::engine::Particle) -> bool,
{
    snapshot
        .particles
        .iter()
        .filter(|p| keep(p))
        .map(|p| {
            let mut rng = rng::stream(exit_seed, p.id, Purpose::Exit);
            let x = sample_exit(p.x, p.y(), &mut rng).expect("particles live in the half-plane");
            (line_to_angle(x), p.typical_ok)
        })
        .collect()
}

/// The time-`T` population pushed to the boundary, one exit atom per particle.
pub fn project_to_boundary(snapshot: &ParticleSnapshot, exit_seed: u64) -> BoundaryMeasure {
    BoundaryMeasure::uniform(
        exit_angles(snapshot, exit_seed, |_| true),
        denominator(snapshot),
        snapshot.config.normalization,
    )
}

/// Restriction of [`project_to_boundary`] to particles that stayed in the
/// envelope on `[onset, T]`; the denominator is still the full population.
pub fn typical_measure(
    snapshot: &ParticleSnapshot,
    onset: f64,
    exit_seed: u64,
) -> Result<BoundaryMeasure, DomainError> {
    if onset > snapshot.time {
        return Err(DomainError::OnsetAfterHorizon { onset, time: snapshot.time });
    }
    let mut angles = exit_angles(snapshot, exit_seed, |p| p.is_typical_for(onset));
    for a in angles.iter_mut() {
        a.1 = true;
    }
    Ok(BoundaryMeasure::uniform(angles, denominator(snapshot), snapshot.config.normalization))
}

/// Right-continuous cumulative distribution function of a boundary measure.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfView {
    angles: Vec<f64>,
    cumulative: Vec<f64>,
    total: f64,
}

pub fn cdf(measure: &BoundaryMeasure) -> CdfView {
    CdfView {
        angles: measure.atoms.iter().map(|a| a.angle).collect(),
        cumulative: measure.cumulative.clone(),
        total: measure.total,
    }
}

impl CdfView {
    /// `F(θ)`: mass of atoms with angle `≤ θ`.
    pub fn eval(&self, theta: f64) -> f64 {
        if theta < 0.0 {
            return 0.0;
        }
        if theta >= TAU {
            return self.total;
        }
        let i = self.angles.partition_point(|&a| a <= theta);
        if i == 0 {
            0.0
        } else {
            self.cumulative[i - 1]
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn jump_points(&self) -> &[f64] {
        &self.angles
    }

    /// Largest increment `F(x + ε) - F(x)` over all `x`.
    pub fn max_increment(&self, eps: f64) -> f64 {
        let n = self.angles.len();
        let mut best: f64 = 0.0;
        let mut j = 0;
        for i in 0..n {
            // window [θ_i, θ_i + ε): the supremum is approached as x ↑ θ_i
            if j < i {
                j = i;
            }
            while j < n && self.angles[j] < self.angles[i] + eps {
                j += 1;
            }
            let below = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
            best = best.max(self.cumulative[j - 1] - below);
        }
        best
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "angle,F")?;
        for (a, f) in self.angles.iter().zip(&self.cumulative) {
            writeln!(w, "{a},{f}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run, SimConfig};
    use std::f64::consts::PI;

    fn atoms(angles: &[f64]) -> BoundaryMeasure {
        BoundaryMeasure::uniform(angles.iter().map(|&a| (a, true)).collect(), angles.len() as f64, Normalization::ByCount)
    }

    #[test]
    fn single_particle_gives_unit_atom() {
        let c = SimConfig { beta: 1e-9, ..SimConfig::new(1.0, 0.01, 1) };
        let s = run(&c).unwrap();
        let m = project_to_boundary(&s, 5);
        assert_eq!(m.len(), 1);
        assert_eq!(m.atoms()[0].weight, 1.0);
        assert_eq!(m.total(), 1.0);
    }

    #[test]
    fn by_count_total_is_exactly_one() {
        for seed in 0..20 {
            let s = run(&SimConfig::new(1.0, 3.0, seed)).unwrap();
            assert_eq!(project_to_boundary(&s, seed).total(), 1.0);
        }
    }

    #[test]
    fn by_mean_total_is_scaled_population() {
        let mut c = SimConfig::new(0.5, 4.0, 3);
        c.normalization = Normalization::ByMean;
        let s = run(&c).unwrap();
        let m = project_to_boundary(&s, 1);
        let expected = s.population() as f64 / 2f64.exp();
        assert!((m.total() - expected).abs() < 1e-12);
    }

    #[test]
    fn typical_measure_is_dominated_and_monotone_in_onset() {
        let mut c = SimConfig::new(0.5, 8.0, 12);
        c.typical_onset = 1.0;
        let s = run(&c).unwrap();
        let full = project_to_boundary(&s, 9);
        assert!(typical_measure(&s, 9.0, 9).is_err());
        let onsets = [0.5, 1.0, 2.0, 4.0, 8.0];
        let ms: Vec<_> = onsets.iter().map(|&k| typical_measure(&s, k, 9).unwrap()).collect();
        for w in ms.windows(2) {
            assert!(w[0].total() <= w[1].total());
            // atoms of the smaller onset are a subset of the larger onset's atoms
            for a in w[0].atoms() {
                assert!(w[1].atoms().iter().any(|b| b.angle == a.angle));
            }
            for i in 0..16 {
                let arc = Arc::new(i as f64 * TAU / 16.0, TAU / 16.0).into();
                assert!(w[0].interval_mass(&arc) <= w[1].interval_mass(&arc) + 1e-15);
            }
        }
        assert!(ms.last().unwrap().total() <= full.total());
        for a in ms[0].atoms() {
            assert!(full.atoms().iter().any(|b| b.angle == a.angle));
        }
    }

    #[test]
    fn cdf_basics() {
        let empty = BoundaryMeasure::uniform(vec![], 1.0, Normalization::ByCount);
        let f = cdf(&empty);
        assert_eq!(f.eval(1.0), 0.0);
        assert_eq!(f.eval(TAU), 0.0);

        let one = atoms(&[2.0]);
        let f = cdf(&one);
        assert_eq!(f.eval(1.999), 0.0);
        assert_eq!(f.eval(2.0), 1.0);
        assert_eq!(f.eval(-1.0), 0.0);
        assert_eq!(f.eval(TAU), one.total());
    }

    #[test]
    fn interval_mass_additivity_and_complement() {
        let m = atoms(&[0.1, 0.5, 1.0, 2.0, 3.0, 4.0, 5.5, 6.2]);
        let full = m.interval_mass(&Arc::full().into());
        assert_eq!(full, m.total());
        let a = m.interval_mass(&Arc::new(0.0, 1.5).into());
        let b = m.interval_mass(&Arc::new(1.6, 2.0).into());
        let ab = m.interval_mass(&Arc::new(0.0, 3.6).into());
        assert!((a + b - ab).abs() < 1e-15);
        // wrap-around arc and its complement
        let wrap = m.interval_mass(&Arc::new(6.0, 1.0).into());
        assert!((wrap - 3.0 / 8.0).abs() < 1e-15);
        let rest = m.interval_mass(&Arc::new(0.7172, 5.2659).into());
        assert!((wrap + rest - m.total()).abs() < 1e-15);
    }

    #[test]
    fn line_intervals_map_through_the_boundary() {
        // atoms at the images of x = -2, 0, 0.5, 3 and at infinity
        let xs = [-2.0, 0.0, 0.5, 3.0];
        let mut angles: Vec<f64> = xs.iter().map(|&x| line_to_angle(x)).collect();
        angles.push(0.0);
        let m = atoms(&angles);
        let w = 0.2;
        let mass = |lo, hi| m.interval_mass(&LineInterval::new(lo, hi).into());
        assert!((mass(-1.0, 1.0) - 2.0 * w).abs() < 1e-12);
        assert!((mass(f64::NEG_INFINITY, f64::INFINITY) - 4.0 * w).abs() < 1e-12);
        assert!((mass(0.0, f64::INFINITY) - 3.0 * w).abs() < 1e-12);
        assert!((mass(f64::NEG_INFINITY, 0.0) - 2.0 * w).abs() < 1e-12);
        assert_eq!(m.interval_mass(&LineInterval::empty().into()), 0.0);
        assert!((line_to_angle(0.0) - PI).abs() < 1e-15);
    }

    #[test]
    fn max_increment_of_single_atom_is_its_weight() {
        let f = cdf(&atoms(&[1.0]));
        assert_eq!(f.max_increment(1e-6), 1.0);
        let g = cdf(&atoms(&[1.0, 1.5, 3.0]));
        assert!((g.max_increment(0.6) - 2.0 / 3.0).abs() < 1e-15);
        assert!((g.max_increment(0.4) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn csv_exports() {
        let m = atoms(&[1.0, 2.0]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "angle,weight,typical\n1,0.5,1\n2,0.5,1\n");
        let mut buf = Vec::new();
        cdf(&m).write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "angle,F\n1,0.5\n2,1\n");
    }
}
