//! Attitude helpers: ZYX (yaw-pitch-roll) Euler angles.

use nalgebra::{Matrix3, Vector3};

use crate::error::{BlimpError, Result};

/// Closest approach to ±π/2 pitch allowed by the Euler kinematics.
pub const PITCH_MARGIN: f64 = 1e-3;

/// Body-to-inertial rotation `Rz(ψ)·Ry(θ)·Rx(φ)` for `e = (φ, θ, ψ)`.
pub fn rotation_matrix(e: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = e.x.sin_cos();
    let (sp, cp) = e.y.sin_cos();
    let (sy, cy) = e.z.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Map `W(e)` with `ė = W(e)·ω_b`.
pub fn euler_rate_matrix(e: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let pitch = e.y;
    if !pitch.is_finite() || pitch.abs() >= std::f64::consts::FRAC_PI_2 - PITCH_MARGIN {
        return Err(BlimpError::EulerSingularity { pitch });
    }
    let (sr, cr) = e.x.sin_cos();
    let cp = pitch.cos();
    let tp = pitch.tan();
    Ok(Matrix3::new(
        1.0,
        sr * tp,
        cr * tp,
        0.0,
        cr,
        -sr,
        0.0,
        sr / cp,
        cr / cp,
    ))
}

#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Extracts ZYX Euler angles from a rotation matrix (away from gimbal lock).
pub fn euler_from_rotation(r: &Matrix3<f64>) -> Vector3<f64> {
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    Vector3::new(roll, pitch, yaw)
}
