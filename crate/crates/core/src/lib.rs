//! Branching Brownian motion on the hyperbolic plane: simulation, boundary
//! measures and fractal estimators.
//!
//! Particles move as hyperbolic Brownian motion with drift `λ` in the upper
//! half-plane and split in two at rate `β`. The [`engine`] produces particle
//! snapshots, [`measures`] pushes them to the boundary circle and
//! [`analysis`] estimates dimensions and checks identities against them.

pub mod analysis;
pub mod diffusion;
pub mod engine;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod measures;
pub mod rng;
pub mod stats;
pub mod theory;

pub use diffusion::{DiffusionParams, Grid, PathSegment, State};
pub use engine::{
    grow, lineage, run, run_with, typical_count, LineagePoint, Normalization, Particle, ParticleSnapshot, Root,
    SimConfig,
};
pub use error::{ConfigError, DomainError, EngineError, EstimateError};
pub use exec::Execution;
pub use geometry::{BoundaryPoint, ExtendedReal, Model, PlanePoint};
pub use measures::{cdf, project_to_boundary, typical_measure, Arc, BoundaryMeasure, CdfView, Interval, LineInterval};
