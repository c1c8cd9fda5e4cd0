//! Wind-relative aerodynamics: air-relative velocity, flow angles and the
//! aerodynamic force/moment pair in the body frame.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{BlimpError, Result};

/// Airspeed below which the flow angles are undefined and the aerodynamic
/// wrench is switched off, m/s.
pub const NO_FLOW_AIRSPEED: f64 = 1e-3;

/// Polynomial coefficient model in angle of attack `α` and sideslip `β`.
///
/// ```text
/// C_L  = lift0 + lift_alpha·α
/// C_D  = drag0 + drag_alpha2·α² + drag_beta2·β²
/// C_S  = side_beta·β
/// C_Tx = roll_bias + roll_beta·β
/// C_Ty = pitch0 + pitch_alpha·α
/// C_Tz = yaw_bias + yaw_beta·β
/// ```
///
/// `damping` holds the angular-rate gains `[K_x, K_y, K_z]` (N·m·s/rad),
/// applied in the body frame. The bias terms are zero for the nominal
/// vehicle and exist to model small build asymmetries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeroModel {
    pub lift0: f64,
    pub lift_alpha: f64,
    pub drag0: f64,
    pub drag_alpha2: f64,
    pub drag_beta2: f64,
    pub side_beta: f64,
    pub roll_bias: f64,
    pub roll_beta: f64,
    pub pitch0: f64,
    pub pitch_alpha: f64,
    pub yaw_bias: f64,
    pub yaw_beta: f64,
    pub damping: [f64; 3],
}

impl Default for AeroModel {
    /// Chosen so that straight flight at 10 gf settles near 1.1 m/s with a
    /// few degrees of angle of attack.
    fn default() -> Self {
        Self {
            lift0: 0.25,
            lift_alpha: 2.0,
            drag0: 0.33,
            drag_alpha2: 1.2,
            drag_beta2: 0.6,
            side_beta: -0.6,
            roll_bias: 0.0,
            roll_beta: -0.03,
            pitch0: 0.0,
            pitch_alpha: -0.06,
            yaw_bias: 0.0,
            yaw_beta: 0.06,
            damping: [-0.02, -0.03, -0.01],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeroCoefficients {
    pub drag: f64,
    pub side: f64,
    pub lift: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl AeroModel {
    pub fn zero() -> Self {
        Self {
            lift0: 0.0,
            lift_alpha: 0.0,
            drag0: 0.0,
            drag_alpha2: 0.0,
            drag_beta2: 0.0,
            side_beta: 0.0,
            roll_bias: 0.0,
            roll_beta: 0.0,
            pitch0: 0.0,
            pitch_alpha: 0.0,
            yaw_bias: 0.0,
            yaw_beta: 0.0,
            damping: [0.0; 3],
        }
    }

    pub fn coefficients(&self, alpha: f64, beta: f64) -> AeroCoefficients {
        AeroCoefficients {
            drag: self.drag0 + self.drag_alpha2 * alpha * alpha + self.drag_beta2 * beta * beta,
            side: self.side_beta * beta,
            lift: self.lift0 + self.lift_alpha * alpha,
            roll: self.roll_bias + self.roll_beta * beta,
            pitch: self.pitch0 + self.pitch_alpha * alpha,
            yaw: self.yaw_bias + self.yaw_beta * beta,
        }
    }

    /// Drag must stay non-negative for every flow angle.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.lift0,
            self.lift_alpha,
            self.drag0,
            self.drag_alpha2,
            self.drag_beta2,
            self.side_beta,
            self.roll_bias,
            self.roll_beta,
            self.pitch0,
            self.pitch_alpha,
            self.yaw_bias,
            self.yaw_beta,
        ];
        if fields.iter().chain(self.damping.iter()).any(|v| !v.is_finite()) {
            return Err(BlimpError::InvalidParameter("aerodynamic coefficients must be finite".into()));
        }
        if self.drag0 < 0.0 || self.drag_alpha2 < 0.0 || self.drag_beta2 < 0.0 {
            return Err(BlimpError::InvalidParameter(
                "drag coefficients must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeroAngles {
    pub alpha: f64,
    pub beta: f64,
    pub airspeed: f64,
    /// Set when the airspeed is below [`NO_FLOW_AIRSPEED`].
    pub no_flow: bool,
}

/// Body-frame air-relative velocity `v_b − Rᵀ·v_w`.
#[inline]
pub fn relative_velocity(
    v_body: &Vector3<f64>,
    body_to_inertial: &Matrix3<f64>,
    wind: &Vector3<f64>,
) -> Vector3<f64> {
    v_body - body_to_inertial.transpose() * wind
}

pub fn aero_angles(v_air: &Vector3<f64>) -> AeroAngles {
    let airspeed = v_air.norm();
    if airspeed <= NO_FLOW_AIRSPEED {
        return AeroAngles { alpha: 0.0, beta: 0.0, airspeed: 0.0, no_flow: true };
    }
    AeroAngles {
        alpha: v_air.z.atan2(v_air.x),
        beta: (v_air.y / airspeed).clamp(-1.0, 1.0).asin(),
        airspeed,
        no_flow: false,
    }
}

/// `R_v^b = R_y(−α)·R_z(β)`: flow frame to body frame.
pub fn flow_to_body(alpha: f64, beta: f64) -> Matrix3<f64> {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    // R_y(−α) = [[cα, 0, −sα], [0, 1, 0], [sα, 0, cα]]
    // R_z(β)  = [[cβ, −sβ, 0], [sβ, cβ, 0], [0, 0, 1]]
    Matrix3::new(
        ca * cb,
        -ca * sb,
        -sa,
        sb,
        cb,
        0.0,
        sa * cb,
        -sa * sb,
        ca,
    )
}

/// Aerodynamic force and moment in the body frame.
pub fn aero_wrench(
    angles: &AeroAngles,
    w_body: &Vector3<f64>,
    model: &AeroModel,
    air_density: f64,
    reference_area: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let damping = Vector3::new(
        model.damping[0] * w_body.x,
        model.damping[1] * w_body.y,
        model.damping[2] * w_body.z,
    );
    if angles.no_flow {
        return (Vector3::zeros(), damping);
    }
    let c = model.coefficients(angles.alpha, angles.beta);
    let q_area = 0.5 * air_density * angles.airspeed * angles.airspeed * reference_area;
    let rot = flow_to_body(angles.alpha, angles.beta);
    let force = rot * Vector3::new(-c.drag, c.side, -c.lift) * q_area;
    let torque = rot * Vector3::new(c.roll, c.pitch, c.yaw) * q_area + damping;
    (force, torque)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    use crate::dynamics::frames::rotation_matrix;

    #[test]
    fn relative_velocity_examples() {
        let still = Vector3::zeros();
        let r0 = rotation_matrix(&Vector3::zeros());
        assert_eq!(relative_velocity(&Vector3::x(), &r0, &still), Vector3::x());
        assert_eq!(relative_velocity(&Vector3::zeros(), &r0, &Vector3::x()), -Vector3::x());
        let r_yaw = rotation_matrix(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        // Inertial +x wind is body −y after a quarter-turn yaw.
        let va = relative_velocity(&Vector3::x(), &r_yaw, &Vector3::x());
        assert!((va - Vector3::new(1.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn angle_examples() {
        let a = aero_angles(&Vector3::new(1.0, 0.0, 0.0));
        assert_eq!((a.alpha, a.beta, a.airspeed), (0.0, 0.0, 1.0));
        let a = aero_angles(&Vector3::new(1.0, 0.0, 1.0));
        assert!((a.alpha - FRAC_PI_4).abs() < 1e-15 && a.beta == 0.0);
        assert!((a.airspeed - SQRT_2).abs() < 1e-15);
        let a = aero_angles(&Vector3::new(1.0, 1.0, 0.0));
        assert!(a.alpha == 0.0 && (a.beta - FRAC_PI_4).abs() < 1e-15);
        assert!((a.airspeed - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn no_flow_below_dead_zone() {
        let a = aero_angles(&Vector3::new(1e-4, 2e-4, 0.0));
        assert!(a.no_flow);
        assert_eq!((a.alpha, a.beta, a.airspeed), (0.0, 0.0, 0.0));
        let (f, t) = aero_wrench(&a, &Vector3::zeros(), &AeroModel::default(), 1.225, 0.25);
        assert_eq!(f, Vector3::zeros());
        assert_eq!(t, Vector3::zeros());
    }

    #[test]
    fn pure_drag_by_hand() {
        let model = AeroModel { drag0: 1.0, ..AeroModel::zero() };
        let a = aero_angles(&Vector3::x());
        let (f, t) = aero_wrench(&a, &Vector3::zeros(), &model, 1.2, 0.1);
        assert!((f - Vector3::new(-0.06, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(t, Vector3::zeros());
    }

    #[test]
    fn drag_opposes_airflow() {
        let model = AeroModel { drag0: 0.7, ..AeroModel::zero() };
        let va = Vector3::new(0.8, -0.3, 0.4);
        let (f, _) = aero_wrench(&aero_angles(&va), &Vector3::zeros(), &model, 1.2, 0.2);
        assert!((f.normalize() + va.normalize()).norm() < 1e-12);
    }

    #[test]
    fn lift_is_perpendicular_to_airflow() {
        let model = AeroModel { lift0: 0.5, ..AeroModel::zero() };
        let va = Vector3::new(0.9, 0.2, 0.3);
        let (f, _) = aero_wrench(&aero_angles(&va), &Vector3::zeros(), &model, 1.2, 0.2);
        assert!(f.dot(&va).abs() < 1e-14);
    }

    #[test]
    fn drag_nonnegative_validation() {
        let bad = AeroModel { drag_beta2: -0.1, ..AeroModel::default() };
        assert!(bad.validate().is_err());
        assert!(AeroModel::default().validate().is_ok());
    }
}
