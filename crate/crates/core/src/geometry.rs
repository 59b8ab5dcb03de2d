//! The two models of the hyperbolic plane (unit disk and upper half-plane),
//! the Cayley isometry between them and its extension to the boundary.
//!
//! The disk-to-half-plane map is `f(z) = i(1+z)/(1-z)`, sending the disk
//! origin to `i`; its inverse is `z ↦ (z-i)/(z+i)`. Boundary measures are kept
//! in disk-angle coordinates, so the boundary map sends a half-plane boundary
//! coordinate `x` (or the point at infinity) to an angle in `[0, 2π)`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// Points closer than this to the unit circle are rejected by [`disk_to_half`].
pub const DISK_EDGE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    Disk,
    HalfPlane,
}

/// A point of the disk or of the upper half-plane, tagged with its model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanePoint {
    x: f64,
    y: f64,
    model: Model,
}

impl PlanePoint {
    pub fn disk(x: f64, y: f64) -> Result<Self, DomainError> {
        if !(x.is_finite() && y.is_finite()) || x * x + y * y >= 1.0 {
            return Err(DomainError::OutsideDisk { x, y });
        }
        Ok(Self { x, y, model: Model::Disk })
    }

    pub fn half_plane(x: f64, y: f64) -> Result<Self, DomainError> {
        if !(x.is_finite() && y.is_finite()) || y <= 0.0 {
            return Err(DomainError::OutsideHalfPlane { x, y });
        }
        Ok(Self { x, y, model: Model::HalfPlane })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn modulus(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// A point on the half-plane boundary `ℝ ∪ {∞}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    Infinity,
}

impl From<f64> for ExtendedReal {
    fn from(x: f64) -> Self {
        if x.is_finite() {
            ExtendedReal::Finite(x)
        } else {
            ExtendedReal::Infinity
        }
    }
}

/// A point of the boundary circle, stored as an angle reduced to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct BoundaryPoint(f64);

impl BoundaryPoint {
    pub fn from_angle(angle: f64) -> Self {
        let mut a = angle.rem_euclid(TAU);
        // rem_euclid can round up to exactly 2π for tiny negative inputs
        if a >= TAU {
            a = 0.0;
        }
        BoundaryPoint(a)
    }

    pub fn angle(self) -> f64 {
        self.0
    }

    /// Half-plane boundary coordinate of this point; angle 0 is the point at infinity.
    pub fn to_half_plane(self) -> ExtendedReal {
        if self.0 == 0.0 {
            return ExtendedReal::Infinity;
        }
        // inverse of angle = 2·atan2(-1, x) + 2π
        let phi = self.0 / 2.0 - PI;
        ExtendedReal::Finite(-1.0 / phi.tan())
    }
}

/// Cayley map from the disk to the half-plane, `z ↦ i(1+z)/(1-z)`.
pub fn disk_to_half(p: PlanePoint) -> Result<PlanePoint, DomainError> {
    if p.model != Model::Disk {
        return Err(DomainError::WrongModel { expected: Model::Disk });
    }
    let r2 = p.x * p.x + p.y * p.y;
    if r2.sqrt() > 1.0 - DISK_EDGE_TOLERANCE {
        return Err(DomainError::OutsideDisk { x: p.x, y: p.y });
    }
    // i(1+z)/(1-z) = i(1+z)(1-z̄)/|1-z|^2, (1+z)(1-z̄) = 1 - |z|^2 + 2i·Im z
    let denom = (1.0 - p.x) * (1.0 - p.x) + p.y * p.y;
    let x = -2.0 * p.y / denom;
    let y = (1.0 - r2) / denom;
    PlanePoint::half_plane(x, y)
}

/// Inverse Cayley map from the half-plane to the disk, `z ↦ (z-i)/(z+i)`.
pub fn half_to_disk(p: PlanePoint) -> Result<PlanePoint, DomainError> {
    if p.model != Model::HalfPlane {
        return Err(DomainError::WrongModel { expected: Model::HalfPlane });
    }
    if p.y <= 0.0 {
        return Err(DomainError::OutsideHalfPlane { x: p.x, y: p.y });
    }
    // (z-i)/(z+i) = (z-i)(z̄-i)/|z+i|^2
    let denom = p.x * p.x + (p.y + 1.0) * (p.y + 1.0);
    let x = (p.x * p.x + p.y * p.y - 1.0) / denom;
    let y = -2.0 * p.x / denom;
    Ok(PlanePoint { x, y, model: Model::Disk })
}

/// Angle of the disk-boundary image of a half-plane boundary point.
///
/// Increasing in `x` on `ℝ`, with `0 ↦ π` and `±∞ ↦ 0`.
pub fn boundary_to_angle(x: ExtendedReal) -> BoundaryPoint {
    match x {
        ExtendedReal::Infinity => BoundaryPoint(0.0),
        // arg((x-i)/(x+i)) = 2·arg(x-i)
        ExtendedReal::Finite(x) => BoundaryPoint::from_angle(2.0 * (-1.0f64).atan2(x) + TAU),
    }
}

/// Shorthand for finite boundary coordinates.
pub fn line_to_angle(x: f64) -> f64 {
    boundary_to_angle(ExtendedReal::from(x)).angle()
}
