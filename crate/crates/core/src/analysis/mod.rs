//! Estimators for the boundary measures and Monte Carlo validators for the
//! identities that drive them.

pub mod dimension;
pub mod holder;
pub mod moments;
pub mod validate;

use std::io::{self, Write};

use serde::Serialize;

pub use dimension::{
    box_count, box_dimension, correlation_dimension, default_scales, mode_target, run_dimension_study, BoxMode,
    DimensionEstimator, DimensionReport, HorizonRule, MeasureStudy,
};
pub use holder::{holder_exponent, run_holder_study};
pub use moments::{moment_exponent, moment_fit, MomentStudy};
pub use validate::{
    exit_bound, exit_law, growth_rate, harmonic_martingale, many_to_one, many_to_two, yule_check, ExitBoundReport,
    ExitLawReport, GrowthReport, TestFunction, YuleReport,
};


/// Result of a log-log scaling fit.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    /// Smallest and largest scale used in the fit.
    pub scales: (f64, f64),
    pub points_per_scale: usize,
    pub replicates: usize,
    pub target: Option<f64>,
    /// Free-form note on how the target was obtained.
    pub provenance: String,
    /// `(scale, value)` pairs behind the fit.
    pub points: Vec<(f64, f64)>,
}

#[derive(Serialize)]
struct EstimateJson<'a> {
    name: &'a str,
    estimate: f64,
    stderr: f64,
    scales: [f64; 2],
    replicates: usize,
    target: Option<f64>,
    provenance: &'a str,
}

impl EstimateReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(EstimateJson {
            name: &self.name,
            estimate: self.estimate,
            stderr: self.stderr,
            scales: [self.scales.0, self.scales.1],
            replicates: self.replicates,
            target: self.target,
            provenance: &self.provenance,
        })
        .expect("plain struct serializes")
    }

    pub fn write_points_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "delta,value")?;
        for (d, v) in &self.points {
            writeln!(w, "{d},{v}")?;
        }
        Ok(())
    }
}

/// Both sides of a Monte Carlo identity with their standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub name: String,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub z: f64,
}

impl ValidationReport {
    pub fn new(name: impl Into<String>, lhs: f64, lhs_se: f64, rhs: f64, rhs_se: f64) -> Self {
        let se = (lhs_se * lhs_se + rhs_se * rhs_se).sqrt();
        let diff = lhs - rhs;
        let z = if diff == 0.0 {
            0.0
        } else if se > 0.0 {
            diff / se
        } else {
            f64::INFINITY.copysign(diff)
        };
        Self { name: name.into(), lhs, lhs_se, rhs, rhs_se, z }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain struct serializes")
    }

    pub fn within(&self, sigmas: f64) -> bool {
        self.z.abs() <= sigmas
    }
}
