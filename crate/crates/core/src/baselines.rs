//! Comparison controllers: constant open-loop input and a two-loop PID.
//!
//! The PID reads only pose measurements and the reference. Yaw error drives
//! the lateral deflection `δy` and altitude error drives `δx`; thrust is
//! fixed.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, InputLimits};
use crate::error::{BlimpError, Result};
use crate::mhe::Measurement;
use crate::mpc::Reference;
use crate::units::{gf_to_newtons, wrap_angle};

/// Thrust held during launch and by the open-loop arm, gf.
pub const OPEN_LOOP_THRUST_GF: f64 = 10.0;

pub fn open_loop(_t: f64) -> ControlInput {
    ControlInput::new(gf_to_newtons(OPEN_LOOP_THRUST_GF), 0.0, 0.0)
}

/// Gains of one loop. Outputs are deflections in metres, so `kp` is in m
/// per unit error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidLoop {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub yaw: PidLoop,
    pub altitude: PidLoop,
    pub thrust_gf: f64,
    /// Bound on each integrator's contribution to the output, m.
    pub integrator_limit: f64,
    /// Time constant of the derivative filter, s.
    pub derivative_filter: f64,
}

impl Default for PidGains {
    /// Grid-searched once in still air (`examples/tune_pid.rs`) and then
    /// frozen for every wind condition.
    fn default() -> Self {
        Self {
            yaw: PidLoop { kp: 0.4, ki: 0.05, kd: 0.0 },
            altitude: PidLoop { kp: 0.4, ki: 0.0, kd: 0.1 },
            thrust_gf: OPEN_LOOP_THRUST_GF,
            integrator_limit: 0.02,
            derivative_filter: 0.1,
        }
    }
}

impl PidGains {
    pub const ZERO: Self = Self {
        yaw: PidLoop { kp: 0.0, ki: 0.0, kd: 0.0 },
        altitude: PidLoop { kp: 0.0, ki: 0.0, kd: 0.0 },
        thrust_gf: OPEN_LOOP_THRUST_GF,
        integrator_limit: 0.0,
        derivative_filter: 0.1,
    };

    pub fn validate(&self, limits: &InputLimits) -> Result<()> {
        let values = [
            self.yaw.kp,
            self.yaw.ki,
            self.yaw.kd,
            self.altitude.kp,
            self.altitude.ki,
            self.altitude.kd,
            self.integrator_limit,
            self.derivative_filter,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BlimpError::InvalidParameter("PID gains must be finite".into()));
        }
        if self.integrator_limit < 0.0 || self.integrator_limit > limits.deflection {
            return Err(BlimpError::InvalidParameter(format!(
                "integrator limit {} m outside [0, {}]",
                self.integrator_limit, limits.deflection
            )));
        }
        if self.derivative_filter < 0.0 {
            return Err(BlimpError::InvalidParameter("derivative filter time constant must be non-negative".into()));
        }
        let thrust = gf_to_newtons(self.thrust_gf);
        if !(thrust >= limits.thrust_min && thrust <= limits.thrust_max) {
            return Err(BlimpError::InvalidParameter(format!("PID thrust {} gf outside the input box", self.thrust_gf)));
        }
        Ok(())
    }
}

/// Integrator and filtered-derivative memory of one loop.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoopState {
    pub integral: f64,
    pub derivative: f64,
    pub last_measurement: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub yaw: LoopState,
    pub altitude: LoopState,
}

fn loop_step(
    gains: &PidLoop,
    error: f64,
    measurement: f64,
    difference: impl Fn(f64, f64) -> f64,
    dt: f64,
    integrator_limit: f64,
    filter: f64,
    state: &LoopState,
) -> (f64, LoopState) {
    let integral = (state.integral + gains.ki * error * dt).clamp(-integrator_limit, integrator_limit);
    let raw = state.last_measurement.map_or(0.0, |last| -difference(measurement, last) / dt);
    let derivative = state.derivative + dt / (filter + dt) * (raw - state.derivative);
    let output = gains.kp * error + integral + gains.kd * derivative;
    (output, LoopState { integral, derivative, last_measurement: Some(measurement) })
}

pub fn pid_step(
    measurement: &Measurement,
    reference: &Reference,
    dt: f64,
    gains: &PidGains,
    limits: &InputLimits,
    state: &PidState,
) -> Result<(ControlInput, PidState)> {
    if !(dt > 0.0) {
        return Err(BlimpError::InvalidParameter(format!("PID time step must be positive, got {dt}")));
    }
    let psi = measurement.y[5];
    let z = measurement.y[2];
    let (dy, yaw) = loop_step(
        &gains.yaw,
        wrap_angle(reference.yaw - psi),
        psi,
        |a, b| wrap_angle(a - b),
        dt,
        gains.integrator_limit,
        gains.derivative_filter,
        &state.yaw,
    );
    let (dx, altitude) = loop_step(
        &gains.altitude,
        reference.position.z - z,
        z,
        |a, b| a - b,
        dt,
        gains.integrator_limit,
        gains.derivative_filter,
        &state.altitude,
    );
    let input = limits.clamp(&ControlInput::new(gf_to_newtons(gains.thrust_gf), dx, dy));
    Ok((input, PidState { yaw, altitude }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector6;
    use proptest::prelude::*;

    fn pose(z: f64, psi: f64, t: f64) -> Measurement {
        Measurement { y: Vector6::new(0.0, 0.0, z, 0.0, 0.0, psi), timestamp: t }
    }

    #[test]
    fn open_loop_is_constant() {
        for t in [0.0, 1.0, 1e3] {
            let u = open_loop(t);
            assert_eq!(u.thrust, 0.0980665);
            assert_eq!(u.delta.delta_x, 0.0);
            assert_eq!(u.delta.delta_y, 0.0);
        }
    }

    #[test]
    fn zero_error_gives_open_loop() {
        let (u, _) = pid_step(
            &pose(1.5, 0.0, 0.0),
            &Reference::default(),
            0.025,
            &PidGains::default(),
            &InputLimits::default(),
            &PidState::default(),
        )
        .unwrap();
        assert_eq!(u, open_loop(0.0));
    }

    #[test]
    fn large_yaw_error_saturates() {
        let gains = PidGains { yaw: PidLoop { kp: 10.0, ki: 0.0, kd: 0.0 }, ..PidGains::default() };
        let limits = InputLimits::default();
        let (u, _) =
            pid_step(&pose(1.5, -0.5, 0.0), &Reference::default(), 0.025, &gains, &limits, &PidState::default())
                .unwrap();
        assert_eq!(u.delta.delta_y, limits.deflection);
    }

    #[test]
    fn integrator_follows_closed_form_until_clamp() {
        let ki = 0.4;
        let e0 = 0.1;
        let gains = PidGains {
            yaw: PidLoop { kp: 0.0, ki, kd: 0.0 },
            altitude: PidLoop::default(),
            integrator_limit: 0.03,
            ..PidGains::default()
        };
        let limits = InputLimits::default();
        let dt = 0.025;
        let mut state = PidState::default();
        for k in 1..=200 {
            let (u, next) = pid_step(&pose(1.5, -e0, k as f64 * dt), &Reference::default(), dt, &gains, &limits, &state)
                .unwrap();
            state = next;
            let expected = (ki * e0 * k as f64 * dt).min(0.03);
            assert_relative_eq!(u.delta.delta_y, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_acts_on_measurement() {
        // A reference step produces no derivative kick.
        let gains = PidGains { yaw: PidLoop { kp: 0.0, ki: 0.0, kd: 1.0 }, ..PidGains::ZERO };
        let limits = InputLimits::default();
        let (_, s) =
            pid_step(&pose(1.5, 0.0, 0.0), &Reference::default(), 0.025, &gains, &limits, &PidState::default())
                .unwrap();
        let reference = Reference { yaw: 0.3, ..Reference::default() };
        let (u, _) = pid_step(&pose(1.5, 0.0, 0.025), &reference, 0.025, &gains, &limits, &s).unwrap();
        assert_eq!(u.delta.delta_y, 0.0);
        // A measured yaw increase opposes the motion.
        let (u, _) = pid_step(&pose(1.5, 0.01, 0.025), &Reference::default(), 0.025, &gains, &limits, &s).unwrap();
        assert!(u.delta.delta_y < 0.0);
    }

    #[test]
    fn yaw_derivative_ignores_wrap() {
        let gains = PidGains { yaw: PidLoop { kp: 0.0, ki: 0.0, kd: 0.1 }, ..PidGains::ZERO };
        let limits = InputLimits::default();
        let reference = Reference { yaw: std::f64::consts::PI, ..Reference::default() };
        let (_, s) = pid_step(&pose(1.5, 3.14, 0.0), &reference, 0.025, &gains, &limits, &PidState::default()).unwrap();
        let (u, _) = pid_step(&pose(1.5, -3.14, 0.025), &reference, 0.025, &gains, &limits, &s).unwrap();
        assert!(u.delta.delta_y.abs() < 0.01);
    }

    #[test]
    fn altitude_sign_pitches_back_when_low() {
        // z grows downward: sitting below the reference moves the mass aft.
        let (u, _) = pid_step(
            &pose(1.8, 0.0, 0.0),
            &Reference::default(),
            0.025,
            &PidGains::default(),
            &InputLimits::default(),
            &PidState::default(),
        )
        .unwrap();
        assert!(u.delta.delta_x < 0.0);
    }

    #[test]
    fn rejects_bad_dt_and_gains() {
        let limits = InputLimits::default();
        assert!(pid_step(&pose(1.5, 0.0, 0.0), &Reference::default(), 0.0, &PidGains::default(), &limits, &PidState::default())
            .is_err());
        let bad = PidGains { integrator_limit: 1.0, ..PidGains::default() };
        assert!(bad.validate(&limits).is_err());
        assert!(PidGains { thrust_gf: 20.0, ..PidGains::default() }.validate(&limits).is_err());
        assert!(PidGains::default().validate(&limits).is_ok());
    }

    proptest! {
        #[test]
        fn outputs_stay_in_box(z in -5.0..5.0f64, psi in -10.0..10.0f64, z2 in -5.0..5.0f64, psi2 in -10.0..10.0f64) {
            let gains = PidGains { yaw: PidLoop { kp: 3.0, ki: 1.0, kd: 2.0 }, altitude: PidLoop { kp: 3.0, ki: 1.0, kd: 2.0 }, ..PidGains::default() };
            let limits = InputLimits::default();
            let (_, s) = pid_step(&pose(z, psi, 0.0), &Reference::default(), 0.025, &gains, &limits, &PidState::default()).unwrap();
            let (u, _) = pid_step(&pose(z2, psi2, 0.025), &Reference::default(), 0.025, &gains, &limits, &s).unwrap();
            prop_assert!(limits.contains(&u));
        }

        #[test]
        fn zero_gains_reduce_to_open_loop(z in -5.0..5.0f64, psi in -10.0..10.0f64, t in 0.0..100.0f64) {
            let limits = InputLimits::default();
            let mut state = PidState::default();
            for k in 0..3 {
                let (u, s) = pid_step(&pose(z + k as f64, psi, t + k as f64), &Reference::default(), 0.025, &PidGains::ZERO, &limits, &state).unwrap();
                state = s;
                prop_assert_eq!(u, open_loop(t));
            }
        }
    }
}
