//! Moving horizon estimation of the vehicle state and a constant wind.
//!
//! Over a window of `N + 1` pose measurements and the `N` inputs between
//! them, the estimator minimises
//!
//! ```text
//! ‖x₀ − x̂₀‖²_Px + ‖v_w − v̂_w‖²_Pw + Σᵢ ‖yᵢ − h(xᵢ)‖²_Pu
//! ```
//!
//! with `x_{i+1} = f(x_i, u_i, v_w, Δt)` enforced by rolling the dynamics,
//! so the decision variables are only the oldest state and the wind.

use std::collections::VecDeque;

use nalgebra::{DVector, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{step_with_terms, ConfigurationTerms, ControlInput, Plant, State};
use crate::error::{BlimpError, Result};
use crate::trajopt::{self, ByRef, DecisionLayout, ResidualProblem, Residuals, SolveReport, SolverOptions};
use crate::units::wrap_angle;

/// Pose measurement `y = [p; e]` at a time stamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub y: Vector6<f64>,
    pub timestamp: f64,
}

impl Measurement {
    pub fn position(&self) -> Vector3<f64> {
        self.y.fixed_rows::<3>(0).into_owned()
    }

    pub fn attitude(&self) -> Vector3<f64> {
        self.y.fixed_rows::<3>(3).into_owned()
    }
}

/// Measurement map `h(x) = [p; e]`.
pub fn measurement_map(state: &State) -> Vector6<f64> {
    Vector6::new(state.p.x, state.p.y, state.p.z, state.e.x, state.e.y, state.e.z)
}

/// Gaussian noise on the motion-capture pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementNoise {
    /// Per-axis position standard deviation, m.
    pub position_std: f64,
    /// Per-axis attitude standard deviation, rad.
    pub attitude_std: f64,
}

impl Default for MeasurementNoise {
    fn default() -> Self {
        Self { position_std: 0.0008, attitude_std: 0.2f64.to_radians() }
    }
}

impl MeasurementNoise {
    pub const NONE: Self = Self { position_std: 0.0, attitude_std: 0.0 };
}

/// Seeded pose sensor.
#[derive(Debug, Clone)]
pub struct PoseSensor {
    noise: MeasurementNoise,
    rng: ChaCha8Rng,
}

impl PoseSensor {
    pub fn new(noise: MeasurementNoise, seed: u64) -> Self {
        Self { noise, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn measure(&mut self, state: &State, timestamp: f64) -> Measurement {
        let mut y = measurement_map(state);
        if self.noise.position_std > 0.0 {
            let n = Normal::new(0.0, self.noise.position_std).expect("finite std");
            for i in 0..3 {
                y[i] += n.sample(&mut self.rng);
            }
        }
        if self.noise.attitude_std > 0.0 {
            let n = Normal::new(0.0, self.noise.attitude_std).expect("finite std");
            for i in 3..6 {
                y[i] += n.sample(&mut self.rng);
            }
        }
        Measurement { y, timestamp }
    }
}

const DEGREES: f64 = 180.0 / std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MheConfig {
    /// Number of intervals `N` in a full window.
    pub horizon: usize,
    pub state_weights: [f64; 12],
    pub wind_weights: [f64; 3],
    pub measurement_weights: [f64; 6],
    /// Unit conversion applied to pose residuals before weighting. The
    /// default expresses them in millimetres and degrees.
    pub measurement_scale: [f64; 6],
    /// Symmetric box on each wind component, m/s.
    pub wind_bound: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for MheConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            state_weights: [10.0; 12],
            wind_weights: [50.0; 3],
            measurement_weights: [5.0; 6],
            measurement_scale: [1e3, 1e3, 1e3, DEGREES, DEGREES, DEGREES],
            wind_bound: 3.0,
            max_iters: 20,
            tol: 1e-10,
        }
    }
}

impl MheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(BlimpError::InvalidParameter("MHE horizon must be at least one step".into()));
        }
        for w in self.state_weights.iter().chain(&self.wind_weights).chain(&self.measurement_weights) {
            if *w < 0.0 || !w.is_finite() {
                return Err(BlimpError::NegativeWeight(*w));
            }
        }
        if !(self.wind_bound > 0.0) {
            return Err(BlimpError::InvalidParameter("wind bound must be positive".into()));
        }
        Ok(())
    }
}

/// Sliding buffer of measurements and the inputs applied between them.
#[derive(Debug, Clone, Default)]
pub struct MheWindow {
    horizon: usize,
    measurements: VecDeque<Measurement>,
    inputs: VecDeque<ControlInput>,
}

impl MheWindow {
    pub fn new(horizon: usize) -> Self {
        Self { horizon, ..Self::default() }
    }

    /// Appends `measurement` together with the input applied since the
    /// previous one (ignored for the first measurement). Returns `true` when
    /// the oldest entry was evicted.
    pub fn push(&mut self, measurement: Measurement, input: ControlInput) -> Result<bool> {
        if let Some(last) = self.measurements.back() {
            if !(measurement.timestamp > last.timestamp) {
                return Err(BlimpError::OutOfOrderMeasurement {
                    last: last.timestamp,
                    got: measurement.timestamp,
                });
            }
            self.inputs.push_back(input);
        }
        self.measurements.push_back(measurement);
        if self.measurements.len() > self.horizon + 1 {
            self.measurements.pop_front();
            self.inputs.pop_front();
            return Ok(true);
        }
        Ok(false)
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.measurements.len() == self.horizon + 1
    }

    pub fn measurements(&self) -> &VecDeque<Measurement> {
        &self.measurements
    }

    pub fn inputs(&self) -> &VecDeque<ControlInput> {
        &self.inputs
    }
}

/// The three cost terms at a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MheCost {
    pub arrival: f64,
    pub disturbance: f64,
    pub measurement: f64,
}

impl MheCost {
    pub fn total(&self) -> f64 {
        self.arrival + self.disturbance + self.measurement
    }
}

#[derive(Debug, Clone)]
pub struct MheEstimate {
    /// Smoothed states aligned with the window's measurements.
    pub trajectory: Vec<State>,
    pub wind: Vector3<f64>,
    pub cost: MheCost,
    pub report: SolveReport,
}

impl MheEstimate {
    /// Estimate at the newest measurement.
    pub fn current(&self) -> State {
        *self.trajectory.last().expect("trajectory is never empty")
    }
}

/// Priors for the next window after the oldest measurement is evicted.
pub fn advance_priors(previous: &MheEstimate) -> (State, Vector3<f64>) {
    let state = previous.trajectory.get(1).copied().unwrap_or_else(|| previous.current());
    (state, previous.wind)
}

fn state_difference(a: &State, b: &State) -> [f64; 12] {
    let mut d = [0.0; 12];
    let (va, vb) = (a.to_vector(), b.to_vector());
    for i in 0..12 {
        d[i] = va[i] - vb[i];
    }
    for i in 3..6 {
        d[i] = wrap_angle(d[i]);
    }
    d
}

fn measurement_residual(y: &Measurement, state: &State, scale: &[f64; 6]) -> [f64; 6] {
    let diff = y.y - measurement_map(state);
    let mut r = [0.0; 6];
    for i in 0..6 {
        r[i] = scale[i] * if i >= 3 { wrap_angle(diff[i]) } else { diff[i] };
    }
    r
}

/// One MHE problem over a fixed window.
pub struct MheProblem<'a> {
    pub plant: &'a Plant,
    pub config: &'a MheConfig,
    pub measurements: Vec<Measurement>,
    pub inputs: Vec<ControlInput>,
    pub prior_state: State,
    pub prior_wind: Vector3<f64>,
    terms: Vec<ConfigurationTerms>,
}

impl<'a> MheProblem<'a> {
    pub fn new(
        plant: &'a Plant,
        config: &'a MheConfig,
        window: &MheWindow,
        prior_state: State,
        prior_wind: Vector3<f64>,
    ) -> Result<Self> {
        if window.len() < 2 {
            return Err(BlimpError::WindowTooShort { needed: 2, have: window.len() });
        }
        let inputs: Vec<ControlInput> = window.inputs().iter().copied().collect();
        let terms = inputs
            .iter()
            .map(|u| ConfigurationTerms::new(&u.delta, plant))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            plant,
            config,
            measurements: window.measurements().iter().copied().collect(),
            inputs,
            prior_state,
            prior_wind,
            terms,
        })
    }

    pub fn layout() -> DecisionLayout {
        DecisionLayout::new().push("initial_state", 12).push("wind", 3)
    }

    pub fn unpack(z: &DVector<f64>) -> (State, Vector3<f64>) {
        (State::from_slice(&z.as_slice()[0..12]), Vector3::new(z[12], z[13], z[14]))
    }

    pub fn pack(state: &State, wind: &Vector3<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(15);
        z.rows_mut(0, 12).copy_from(&state.to_vector());
        z.rows_mut(12, 3).copy_from(wind);
        z
    }

    /// States at every measurement, from `x0` under constant `wind`.
    pub fn rollout(&self, x0: &State, wind: &Vector3<f64>) -> Result<Vec<State>> {
        let mut states = Vec::with_capacity(self.measurements.len());
        states.push(*x0);
        for (i, (u, terms)) in self.inputs.iter().zip(&self.terms).enumerate() {
            let dt = self.measurements[i + 1].timestamp - self.measurements[i].timestamp;
            let next = step_with_terms(&states[i], u, wind, self.plant, terms, dt)?;
            states.push(next);
        }
        Ok(states)
    }

    /// Cost terms recomputed from their definitions.
    pub fn cost_terms(&self, x0: &State, wind: &Vector3<f64>) -> Result<MheCost> {
        let states = self.rollout(x0, wind)?;
        let c = self.config;
        let arrival = state_difference(x0, &self.prior_state)
            .iter()
            .zip(&c.state_weights)
            .map(|(d, w)| w * d * d)
            .sum();
        let dw = wind - self.prior_wind;
        let disturbance = (0..3).map(|i| c.wind_weights[i] * dw[i] * dw[i]).sum();
        let measurement = self
            .measurements
            .iter()
            .zip(&states)
            .map(|(y, x)| {
                measurement_residual(y, x, &c.measurement_scale)
                    .iter()
                    .zip(&c.measurement_weights)
                    .map(|(r, w)| w * r * r)
                    .sum::<f64>()
            })
            .sum();
        Ok(MheCost { arrival, disturbance, measurement })
    }

    pub fn solve(&self, initial_state: &State, initial_wind: &Vector3<f64>) -> Result<MheEstimate> {
        let bound = self.config.wind_bound;
        let mut lower = DVector::from_element(15, f64::NEG_INFINITY);
        let mut upper = DVector::from_element(15, f64::INFINITY);
        for i in 12..15 {
            lower[i] = -bound;
            upper[i] = bound;
        }
        let problem = ResidualProblem::new(ByRef(self), lower, upper, Self::pack(initial_state, initial_wind))?;
        let options = SolverOptions {
            max_iters: self.config.max_iters,
            tol: self.config.tol,
            ..SolverOptions::default()
        };
        let report = trajopt::solve(&problem, &options)?;
        let (x0, wind) = Self::unpack(&report.solution);
        let trajectory = self.rollout(&x0, &wind)?;
        let cost = self.cost_terms(&x0, &wind)?;
        Ok(MheEstimate { trajectory, wind, cost, report })
    }
}

impl Residuals for MheProblem<'_> {
    fn residuals(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let (x0, wind) = Self::unpack(z);
        let states = self.rollout(&x0, &wind)?;
        let c = self.config;
        let mut r = Vec::with_capacity(15 + 6 * states.len());
        trajopt::push_weighted(&mut r, &state_difference(&x0, &self.prior_state), &c.state_weights)?;
        let dw = wind - self.prior_wind;
        trajopt::push_weighted(&mut r, dw.as_slice(), &c.wind_weights)?;
        for (y, x) in self.measurements.iter().zip(&states) {
            trajopt::push_weighted(&mut r, &measurement_residual(y, x, &c.measurement_scale), &c.measurement_weights)?;
        }
        Ok(DVector::from_vec(r))
    }
}

/// Recursive estimator: owns the window and the arrival-cost priors.
#[derive(Debug, Clone)]
pub struct MovingHorizonEstimator {
    config: MheConfig,
    window: MheWindow,
    prior_state: State,
    prior_wind: Vector3<f64>,
    last: Option<MheEstimate>,
}

impl MovingHorizonEstimator {
    /// Starts from the launch state and a wind prior (normally zero).
    pub fn new(config: MheConfig, initial_state: State, initial_wind: Vector3<f64>) -> Self {
        let window = MheWindow::new(config.horizon);
        Self { config, window, prior_state: initial_state, prior_wind: initial_wind, last: None }
    }

    pub fn config(&self) -> &MheConfig {
        &self.config
    }

    pub fn window(&self) -> &MheWindow {
        &self.window
    }

    pub fn priors(&self) -> (State, Vector3<f64>) {
        (self.prior_state, self.prior_wind)
    }

    pub fn last_estimate(&self) -> Option<&MheEstimate> {
        self.last.as_ref()
    }

    /// Adds a measurement (with the input applied since the previous one)
    /// and re-solves once at least two measurements are available.
    pub fn update(
        &mut self,
        plant: &Plant,
        measurement: Measurement,
        input: ControlInput,
    ) -> Result<Option<&MheEstimate>> {
        let evicted = self.window.push(measurement, input)?;
        let mut guess_state = self.prior_state;
        if let Some(previous) = &self.last {
            let (state, wind) = advance_priors(previous);
            if evicted {
                self.prior_state = state;
                guess_state = state;
            } else {
                guess_state = previous.trajectory[0];
            }
            self.prior_wind = wind;
        }
        if self.window.len() < 2 {
            return Ok(None);
        }
        let problem =
            MheProblem::new(plant, &self.config, &self.window, self.prior_state, self.prior_wind)?;
        match problem.solve(&guess_state, &self.prior_wind) {
            Ok(estimate) => {
                self.last = Some(estimate);
                Ok(self.last.as_ref())
            }
            Err(e) => Err(e),
        }
    }
}
