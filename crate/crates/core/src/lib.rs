//! Simulation and control stack for a robotic gliding blimp steered by a
//! two-degree-of-freedom internal moving mass.
//!
//! * [`continuum`]: cable-driven arm kinematics (q-parametrization).
//! * [`dynamics`]: 6-DoF rigid-body model with wind-relative aerodynamics.
//! * [`wind`]: synthetic fan jets with turbulence.
//! * [`trajopt`]: box-constrained Gauss–Newton shared by estimator and controller.
//! * [`mhe`]: joint state and wind moving horizon estimation.
//! * [`mpc`]: wind-compensating model predictive control.
//! * [`baselines`]: open-loop and PID comparison controllers.
//! * [`harness`]: episodes, campaigns, metrics and logs.

pub mod baselines;
pub mod config;
pub mod continuum;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod mhe;
pub mod mpc;
pub mod trajopt;
pub mod units;
pub mod wind;

pub use error::{BlimpError, Result};
