//! Constant-curvature kinematics of the cable-driven arm that carries the
//! moving mass.
//!
//! Three cables spaced 120° apart bend an incompressible backbone of length
//! `L`. Cable-length differences give the q-parameters `(δx, δy)`, and the
//! q-parameters give the tip position in the body frame, measured from the
//! centre of buoyancy.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{BlimpError, Result};

/// Below this deflection norm (m) the tip position uses a Taylor expansion.
pub const SERIES_THRESHOLD: f64 = 1e-6;

/// Half width of the actuation box on each q component, m.
pub const DEFLECTION_LIMIT: f64 = 0.045;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CableLengths {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl CableLengths {
    pub fn new(l1: f64, l2: f64, l3: f64) -> Result<Self> {
        for (name, l) in [("l1", l1), ("l2", l2), ("l3", l3)] {
            if !l.is_finite() || l <= 0.0 {
                return Err(BlimpError::InvalidCables(format!("{name} = {l}")));
            }
        }
        Ok(Self { l1, l2, l3 })
    }
}

/// The q-parameters of the arm, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeflectionParams {
    pub delta_x: f64,
    pub delta_y: f64,
}

impl DeflectionParams {
    pub const ZERO: Self = Self { delta_x: 0.0, delta_y: 0.0 };

    pub fn new(delta_x: f64, delta_y: f64) -> Self {
        Self { delta_x, delta_y }
    }

    pub fn norm(&self) -> f64 {
        self.delta_x.hypot(self.delta_y)
    }

    pub fn within_box(&self, limit: f64) -> bool {
        self.delta_x.abs() <= limit && self.delta_y.abs() <= limit
    }

    pub fn clamped(&self, limit: f64) -> Self {
        Self {
            delta_x: self.delta_x.clamp(-limit, limit),
            delta_y: self.delta_y.clamp(-limit, limit),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumGeometry {
    /// Backbone length `L`, m.
    pub backbone_length: f64,
    /// Radial offset `d` of the cables from the backbone, m.
    pub cable_offset: f64,
    /// Offset `h` of the arm base below the centre of buoyancy, m. Also the
    /// moment arm of the thrust about the body y axis.
    pub base_offset: f64,
}

impl ContinuumGeometry {
    /// Checks the geometry and that the arc angle stays within `[0, π/2]`
    /// over the whole `±limit` actuation box.
    pub fn validate(&self, limit: f64) -> Result<()> {
        if !(self.backbone_length > 0.0 && self.backbone_length.is_finite()) {
            return Err(BlimpError::InvalidParameter("backbone_length must be > 0".into()));
        }
        if !(self.cable_offset > 0.0 && self.cable_offset.is_finite()) {
            return Err(BlimpError::InvalidParameter("cable_offset must be > 0".into()));
        }
        if !(self.base_offset >= 0.0 && self.base_offset.is_finite()) {
            return Err(BlimpError::InvalidParameter("base_offset must be >= 0".into()));
        }
        let worst = limit * std::f64::consts::SQRT_2 / self.cable_offset;
        if worst > FRAC_PI_2 {
            return Err(BlimpError::ArcAngleOutOfRange { arc_angle: worst });
        }
        Ok(())
    }
}

pub fn cable_to_q(lengths: &CableLengths) -> DeflectionParams {
    DeflectionParams {
        delta_x: (lengths.l2 + lengths.l3 - 2.0 * lengths.l1) / 3.0,
        delta_y: 3f64.sqrt() / 3.0 * (lengths.l3 - lengths.l2),
    }
}

/// Tip (moving-mass) position in the body frame.
pub fn q_to_mass_position(q: &DeflectionParams, geom: &ContinuumGeometry) -> Result<Vector3<f64>> {
    let delta = q.norm();
    let d = geom.cable_offset;
    let len = geom.backbone_length;
    let arc = delta / d;
    if !arc.is_finite() {
        return Err(BlimpError::NonFinite("deflection"));
    }
    if arc > FRAC_PI_2 {
        return Err(BlimpError::ArcAngleOutOfRange { arc_angle: arc });
    }

    let (lateral_gain, axial) = if delta < SERIES_THRESHOLD {
        // L·d/δ² · (1 − cos(δ/d)) → L/(2d);  L·d/δ · sin(δ/d) → L − Lδ²/(6d²)
        (len / (2.0 * d), len - len * delta * delta / (6.0 * d * d))
    } else {
        let half = (0.5 * arc).sin();
        // 1 − cos x = 2 sin²(x/2) keeps the small-angle regime accurate.
        (len * d / (delta * delta) * 2.0 * half * half, len * d / delta * arc.sin())
    };

    Ok(Vector3::new(
        lateral_gain * q.delta_x,
        lateral_gain * q.delta_y,
        geom.base_offset + axial,
    ))
}

/// Bending direction in `[−π, π)` and arc angle of the arm.
pub fn q_to_arc(q: &DeflectionParams, geom: &ContinuumGeometry) -> (f64, f64) {
    let delta = q.norm();
    if delta == 0.0 {
        return (0.0, 0.0);
    }
    let mut direction = q.delta_y.atan2(q.delta_x);
    if direction >= PI {
        direction -= 2.0 * PI;
    }
    (direction, delta / geom.cable_offset)
}
