//! Unit-carrying scalar and vector types shared by the physical models.
//!
//! Every constructor rejects NaN and infinities, so downstream code can
//! assume finite inputs.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidValue { what, value })
    }
}

/// A point in space, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Ok(Self {
            x: finite("position.x", x)?,
            y: finite("position.y", y)?,
            z: finite("position.z", z)?,
        })
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<Self> {
        Self::new(v.x, v.y, v.z)
    }

    pub fn coords(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.coords() - other.coords()).norm()
    }

    /// Shift by a displacement. The result is not re-validated; callers pass
    /// finite displacements.
    pub fn offset(&self, d: Vector3<f64>) -> Position {
        Position {
            x: self.x + d.x,
            y: self.y + d.y,
            z: self.z + d.z,
        }
    }

    pub fn lerp(&self, other: &Position, w: f64) -> Position {
        Position {
            x: self.x + (other.x - self.x) * w,
            y: self.y + (other.y - self.y) * w,
            z: self.z + (other.z - self.z) * w,
        }
    }
}

/// Time in seconds, non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct TimePoint(f64);

impl TimePoint {
    pub const ZERO: TimePoint = TimePoint(0.0);

    pub fn new(t: f64) -> Result<Self> {
        let t = finite("time", t)?;
        if t < 0.0 {
            return Err(Error::InvalidValue { what: "time", value: t });
        }
        Ok(Self(t))
    }

    pub fn seconds(self) -> f64 {
        self.0
    }
}

/// Effective diffusion coefficient, m²/s. Turbulent mixing is represented
/// by supplying a larger value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diffusivity(f64);

impl Diffusivity {
    pub fn new(d: f64) -> Result<Self> {
        let d = finite("diffusivity", d)?;
        if d <= 0.0 {
            return Err(Error::InvalidValue { what: "diffusivity", value: d });
        }
        Ok(Self(d))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Bulk airflow velocity, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Velocity {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl Velocity {
    pub const ZERO: Velocity = Velocity { vx: 0.0, vy: 0.0, vz: 0.0 };

    pub fn new(vx: f64, vy: f64, vz: f64) -> Result<Self> {
        Ok(Self {
            vx: finite("velocity.vx", vx)?,
            vy: finite("velocity.vy", vy)?,
            vz: finite("velocity.vz", vz)?,
        })
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.vx, self.vy, self.vz)
    }

    pub fn speed(&self) -> f64 {
        self.vector().norm()
    }

    pub fn is_zero(&self) -> bool {
        self.vx == 0.0 && self.vy == 0.0 && self.vz == 0.0
    }
}
