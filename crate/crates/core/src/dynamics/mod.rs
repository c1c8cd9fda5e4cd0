//! Six-degree-of-freedom dynamics of the gliding blimp with an internal
//! moving mass.
//!
//! The body frame sits at the centre of buoyancy with `z` pointing down, so
//! gravity acts along `+Rᵀe_z` and the moving mass hangs at positive `z`.
//! The same [`discrete_step`] drives the simulator, the estimator and the
//! controller.

pub mod aero;
pub mod frames;

use nalgebra::{Cholesky, Matrix3, Matrix6, SVector, Vector3, Vector6, U6};

use crate::continuum::{q_to_mass_position, ContinuumGeometry, DeflectionParams};
use crate::error::{BlimpError, Result};
use crate::units::{gf_to_newtons, NEWTONS_PER_GF};

pub use aero::{aero_angles, aero_wrench, relative_velocity, AeroAngles, AeroModel};
pub use frames::{euler_rate_matrix, rotation_matrix, skew};

pub type StateVector = SVector<f64, 12>;

/// Pose, attitude and body-frame velocities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    /// Inertial position of the centre of buoyancy, m.
    pub p: Vector3<f64>,
    /// Roll, pitch, yaw, rad.
    pub e: Vector3<f64>,
    /// Body-frame translational velocity, m/s.
    pub v_b: Vector3<f64>,
    /// Body-frame angular velocity, rad/s.
    pub w_b: Vector3<f64>,
}

impl State {
    pub fn at_rest(p: Vector3<f64>) -> Self {
        Self { p, ..Self::default() }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.p);
        x.fixed_rows_mut::<3>(3).copy_from(&self.e);
        x.fixed_rows_mut::<3>(6).copy_from(&self.v_b);
        x.fixed_rows_mut::<3>(9).copy_from(&self.w_b);
        x
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            p: x.fixed_rows::<3>(0).into_owned(),
            e: x.fixed_rows::<3>(3).into_owned(),
            v_b: x.fixed_rows::<3>(6).into_owned(),
            w_b: x.fixed_rows::<3>(9).into_owned(),
        }
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self::from_vector(&StateVector::from_column_slice(&x[..12]))
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_matrix(&self.e)
    }
}

/// Thrust (N) and arm deflection (m).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub thrust: f64,
    pub delta: DeflectionParams,
}

impl ControlInput {
    pub fn new(thrust: f64, delta_x: f64, delta_y: f64) -> Self {
        Self { thrust, delta: DeflectionParams::new(delta_x, delta_y) }
    }

    pub fn from_gf_mm(thrust_gf: f64, delta_x_mm: f64, delta_y_mm: f64) -> Self {
        Self::new(gf_to_newtons(thrust_gf), delta_x_mm * 1e-3, delta_y_mm * 1e-3)
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.thrust, self.delta.delta_x, self.delta.delta_y]
    }

    pub fn from_array(u: [f64; 3]) -> Self {
        Self::new(u[0], u[1], u[2])
    }
}

/// Actuator box: thrust range and symmetric deflection limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputLimits {
    pub thrust_min: f64,
    pub thrust_max: f64,
    pub deflection: f64,
}

impl Default for InputLimits {
    fn default() -> Self {
        Self {
            thrust_min: gf_to_newtons(1.0),
            thrust_max: gf_to_newtons(15.0),
            deflection: crate::continuum::DEFLECTION_LIMIT,
        }
    }
}

impl InputLimits {
    pub fn contains(&self, u: &ControlInput) -> bool {
        u.thrust >= self.thrust_min && u.thrust <= self.thrust_max && u.delta.within_box(self.deflection)
    }

    pub fn clamp(&self, u: &ControlInput) -> ControlInput {
        ControlInput {
            thrust: u.thrust.clamp(self.thrust_min, self.thrust_max),
            delta: u.delta.clamped(self.deflection),
        }
    }

    pub fn lower(&self) -> [f64; 3] {
        [self.thrust_min, -self.deflection, -self.deflection]
    }

    pub fn upper(&self) -> [f64; 3] {
        [self.thrust_max, self.deflection, self.deflection]
    }
}

/// Rigid-body and environment constants, SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialParams {
    /// Stationary mass, kg.
    pub mass: f64,
    /// Moving mass, kg.
    pub moving_mass: f64,
    /// Buoyancy force, N.
    pub buoyancy: f64,
    pub gravity: f64,
    /// Inertia of the stationary body about the centre of buoyancy, kg·m².
    pub inertia: Matrix3<f64>,
    /// Stationary-body centre of mass relative to the centre of buoyancy, m.
    pub stationary_com: Vector3<f64>,
    pub air_density: f64,
    pub reference_area: f64,
}

impl InertialParams {
    /// `(m + m̄)·g − B`, N.
    pub fn net_weight(&self) -> f64 {
        (self.mass + self.moving_mass) * self.gravity - self.buoyancy
    }

    pub fn net_weight_gf(&self) -> f64 {
        self.net_weight() / NEWTONS_PER_GF
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.moving_mass > 0.0) {
            return Err(BlimpError::InvalidParameter("masses must be positive".into()));
        }
        if !(self.buoyancy > 0.0) {
            return Err(BlimpError::InvalidParameter("buoyancy must be positive".into()));
        }
        if !(self.gravity > 0.0 && self.air_density > 0.0 && self.reference_area > 0.0) {
            return Err(BlimpError::InvalidParameter(
                "gravity, air density and reference area must be positive".into(),
            ));
        }
        if (self.inertia - self.inertia.transpose()).norm() > 1e-12 * self.inertia.norm() {
            return Err(BlimpError::InvalidParameter("inertia must be symmetric".into()));
        }
        if Cholesky::new(self.inertia).is_none() {
            return Err(BlimpError::InvalidParameter("inertia must be positive definite".into()));
        }
        Ok(())
    }
}

/// Everything needed to evaluate the dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plant {
    pub inertial: InertialParams,
    pub geometry: ContinuumGeometry,
    pub aero: AeroModel,
}

impl Plant {
    pub fn validate(&self, deflection_limit: f64) -> Result<()> {
        self.inertial.validate()?;
        self.geometry.validate(deflection_limit)?;
        self.aero.validate()?;
        for q in [
            DeflectionParams::ZERO,
            DeflectionParams::new(deflection_limit, deflection_limit),
            DeflectionParams::new(-deflection_limit, deflection_limit),
        ] {
            mass_matrix(&q, self)?;
        }
        Ok(())
    }
}

pub fn mass_position(q: &DeflectionParams, plant: &Plant) -> Result<Vector3<f64>> {
    q_to_mass_position(q, &plant.geometry)
}

/// Total first mass moment `l_g = m·r + m̄·r̄(q)`.
pub fn total_com(q: &DeflectionParams, plant: &Plant) -> Result<Vector3<f64>> {
    let r_bar = mass_position(q, plant)?;
    Ok(plant.inertial.stationary_com * plant.inertial.mass + r_bar * plant.inertial.moving_mass)
}

/// Configuration-dependent terms shared by every dynamics evaluation with a
/// fixed arm deflection.
#[derive(Debug, Clone)]
pub struct ConfigurationTerms {
    pub moving_mass_position: Vector3<f64>,
    pub first_moment: Vector3<f64>,
    /// Rotational block `I − m̄(r̄×)²`.
    pub rotational_inertia: Matrix3<f64>,
    pub mass_matrix: Matrix6<f64>,
    factor: Cholesky<f64, U6>,
}

impl ConfigurationTerms {
    pub fn new(q: &DeflectionParams, plant: &Plant) -> Result<Self> {
        let p = &plant.inertial;
        let r_bar = mass_position(q, plant)?;
        let l_g = p.stationary_com * p.mass + r_bar * p.moving_mass;
        let r_skew = skew(&r_bar);
        let l_skew = skew(&l_g);
        let j = p.inertia - r_skew * r_skew * p.moving_mass;
        let total = p.mass + p.moving_mass;

        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * total));
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-l_skew));
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&l_skew);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&j);

        let factor = Cholesky::new(m).ok_or(BlimpError::MassMatrixNotPositiveDefinite)?;
        Ok(Self {
            moving_mass_position: r_bar,
            first_moment: l_g,
            rotational_inertia: j,
            mass_matrix: m,
            factor,
        })
    }

    pub fn solve(&self, rhs: &Vector6<f64>) -> Vector6<f64> {
        self.factor.solve(rhs)
    }
}

/// `M(δx, δy)`, symmetric positive definite for valid parameters.
pub fn mass_matrix(q: &DeflectionParams, plant: &Plant) -> Result<Matrix6<f64>> {
    Ok(ConfigurationTerms::new(q, plant)?.mass_matrix)
}

/// Generalized force `f̃` and torque `t̃` in the body frame.
pub fn generalized_forces(
    state: &State,
    input: &ControlInput,
    wind: &Vector3<f64>,
    plant: &Plant,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let terms = ConfigurationTerms::new(&input.delta, plant)?;
    Ok(forces_with_terms(state, input, wind, plant, &terms, &state.rotation()))
}

fn forces_with_terms(
    state: &State,
    input: &ControlInput,
    wind: &Vector3<f64>,
    plant: &Plant,
    terms: &ConfigurationTerms,
    rot: &Matrix3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let p = &plant.inertial;
    let v = &state.v_b;
    let w = &state.w_b;
    let l_g = &terms.first_moment;
    let total = p.mass + p.moving_mass;
    // Rᵀe_z is the third row of R.
    let down = Vector3::new(rot[(2, 0)], rot[(2, 1)], rot[(2, 2)]);

    let v_air = relative_velocity(v, rot, wind);
    let angles = aero_angles(&v_air);
    let (f_aero, t_aero) = aero_wrench(&angles, w, &plant.aero, p.air_density, p.reference_area);

    let v_cross_w = v.cross(w);
    let force = v_cross_w * total
        + w.cross(l_g).cross(w)
        + down * (total * p.gravity - p.buoyancy)
        + f_aero
        + Vector3::x() * input.thrust;
    let torque = l_g.cross(&v_cross_w)
        + (terms.rotational_inertia * w).cross(w)
        + l_g.cross(&(down * p.gravity))
        + t_aero
        + Vector3::y() * (input.thrust * plant.geometry.base_offset);
    (force, torque)
}

fn derivative_with_terms(
    x: &StateVector,
    input: &ControlInput,
    wind: &Vector3<f64>,
    plant: &Plant,
    terms: &ConfigurationTerms,
) -> Result<StateVector> {
    let state = State::from_vector(x);
    let rot = state.rotation();
    let w_map = euler_rate_matrix(&state.e)?;
    let (f, t) = forces_with_terms(&state, input, wind, plant, terms, &rot);
    let accel = terms.solve(&Vector6::new(f.x, f.y, f.z, t.x, t.y, t.z));

    let mut dx = StateVector::zeros();
    dx.fixed_rows_mut::<3>(0).copy_from(&(rot * state.v_b));
    dx.fixed_rows_mut::<3>(3).copy_from(&(w_map * state.w_b));
    dx.fixed_rows_mut::<6>(6).copy_from(&accel);
    Ok(dx)
}

/// `ẋ = [R·v_b; W(e)·ω_b; M⁻¹·(f̃, t̃)]`.
pub fn continuous_dynamics(
    state: &State,
    input: &ControlInput,
    wind: &Vector3<f64>,
    plant: &Plant,
) -> Result<StateVector> {
    let terms = ConfigurationTerms::new(&input.delta, plant)?;
    derivative_with_terms(&state.to_vector(), input, wind, plant, &terms)
}

/// One RK4 step with input and wind held constant over `dt`.
pub fn discrete_step(
    state: &State,
    input: &ControlInput,
    wind: &Vector3<f64>,
    plant: &Plant,
    dt: f64,
) -> Result<State> {
    let terms = ConfigurationTerms::new(&input.delta, plant)?;
    step_with_terms(state, input, wind, plant, &terms, dt)
}

/// [`discrete_step`] reusing precomputed configuration terms; the rollouts in
/// the estimator and controller call this in their inner loops.
pub fn step_with_terms(
    state: &State,
    input: &ControlInput,
    wind: &Vector3<f64>,
    plant: &Plant,
    terms: &ConfigurationTerms,
    dt: f64,
) -> Result<State> {
    if !(dt > 0.0) {
        return Err(BlimpError::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let x = state.to_vector();
    let k1 = derivative_with_terms(&x, input, wind, plant, terms)?;
    let k2 = derivative_with_terms(&(x + k1 * (0.5 * dt)), input, wind, plant, terms)?;
    let k3 = derivative_with_terms(&(x + k2 * (0.5 * dt)), input, wind, plant, terms)?;
    let k4 = derivative_with_terms(&(x + k3 * dt), input, wind, plant, terms)?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(BlimpError::NonFinite("integrated state"));
    }
    Ok(State::from_vector(&next))
}

/// Kinetic plus gravity/buoyancy potential energy, J.
///
/// Conserved by the dynamics when aerodynamics, thrust and wind are absent.
pub fn mechanical_energy(state: &State, q: &DeflectionParams, plant: &Plant) -> Result<f64> {
    let terms = ConfigurationTerms::new(q, plant)?;
    let p = &plant.inertial;
    let nu = Vector6::new(
        state.v_b.x, state.v_b.y, state.v_b.z, state.w_b.x, state.w_b.y, state.w_b.z,
    );
    let kinetic = 0.5 * nu.dot(&(terms.mass_matrix * nu));
    let rot = state.rotation();
    let potential = -p.net_weight() * state.p.z - p.gravity * (rot * terms.first_moment).z;
    Ok(kinetic + potential)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use nalgebra::{Matrix4, Vector4};

    fn level(z: &Vector4<f64>) -> (State, ControlInput) {
        let state = State {
            p: Vector3::new(0.0, 0.0, 1.5),
            e: Vector3::new(0.0, z[2], 0.0),
            v_b: Vector3::new(z[0], 0.0, z[1]),
            w_b: Vector3::zeros(),
        };
        (state, ControlInput::new(z[3], 0.0, 0.0))
    }

    fn longitudinal(z: &Vector4<f64>, plant: &Plant) -> Vector4<f64> {
        let (state, input) = level(z);
        let d = continuous_dynamics(&state, &input, &Vector3::zeros(), plant).unwrap();
        Vector4::new(d[6], d[8], d[10], d[2])
    }

    /// Straight, level, unaccelerated flight in still air with the moving mass
    /// centred, found by Newton iteration on forward speed, heave speed, pitch
    /// and thrust.
    pub(crate) fn level_trim(plant: &Plant) -> (State, ControlInput) {
        let mut z = Vector4::new(1.0, 0.0, 0.0, 0.1);
        for _ in 0..50 {
            let r = longitudinal(&z, plant);
            if r.norm() < 1e-13 {
                break;
            }
            let mut j = Matrix4::zeros();
            for c in 0..4 {
                let mut zc = z;
                let h = 1e-7 * (1.0 + z[c].abs());
                zc[c] += h;
                j.set_column(c, &((longitudinal(&zc, plant) - r) / h));
            }
            z -= j.lu().solve(&r).expect("trim Jacobian is singular");
        }
        level(&z)
    }
}
