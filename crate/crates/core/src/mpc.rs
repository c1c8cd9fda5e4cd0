//! Wind-compensating model predictive control.
//!
//! Given the current state and wind estimates the controller chooses `M`
//! inputs minimising
//!
//! ```text
//! Σᵢ ‖xᵢ − x_des‖²_Qx + Σᵢ ‖uᵢ − uᵢ₋₁‖²_Qu
//! ```
//!
//! over states rolled out from the estimate, with the input box enforced as
//! solver bounds and the state box as hinge penalties. `u₋₁` is the input
//! applied on the previous tick.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{step_with_terms, ConfigurationTerms, ControlInput, InputLimits, Plant, State};
use crate::error::{BlimpError, Result};
use crate::trajopt::{
    self, fd_step, hinge, ByRef, Jacobian, ResidualProblem, Residuals, SolveReport, SolverOptions,
    PENALTY_WEIGHT,
};
use crate::units::{gf_to_newtons, newtons_to_gf, wrap_angle, NEWTONS_PER_GF};

/// Set-point for the tracked states. Forward position carries zero weight
/// by default, so `position.x` only matters if that weight is changed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub position: Vector3<f64>,
    pub yaw: f64,
    pub body_rates: Vector3<f64>,
}

impl Default for Reference {
    fn default() -> Self {
        Self { position: Vector3::new(0.0, 0.0, 1.5), yaw: 0.0, body_rates: Vector3::zeros() }
    }
}

impl Reference {
    pub fn as_state(&self) -> State {
        State {
            p: self.position,
            e: Vector3::new(0.0, 0.0, self.yaw),
            v_b: Vector3::zeros(),
            w_b: self.body_rates,
        }
    }
}

/// Box on predicted states, enforced through hinge penalties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateBox {
    /// Bound on each Euler angle, rad.
    pub attitude: f64,
    pub forward_speed: (f64, f64),
    pub lateral_speed: f64,
    pub vertical_speed: f64,
}

impl Default for StateBox {
    fn default() -> Self {
        Self {
            attitude: std::f64::consts::FRAC_PI_2,
            forward_speed: (0.0, 1.5),
            lateral_speed: 1.5,
            vertical_speed: 1.5,
        }
    }
}

const DEG: f64 = 180.0 / std::f64::consts::PI;

/// Millimetres for positions and velocities, degrees for angles and rates.
pub const STATE_SCALE_MM_DEG: [f64; 12] =
    [1e3, 1e3, 1e3, DEG, DEG, DEG, 1e3, 1e3, 1e3, DEG, DEG, DEG];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    pub state_weights: [f64; 12],
    pub input_rate_weights: [f64; 3],
    /// Unit conversion applied to state residuals (tracking and state box)
    /// before weighting.
    pub state_scale: [f64; 12],
    /// Unit conversion applied to input differences before weighting.
    pub input_scale: [f64; 3],
    #[serde(skip)]
    pub limits: InputLimits,
    pub state_box: StateBox,
    pub penalty_weight: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.025,
            state_weights: [0.0, 10.0, 10.0, 0.0, 0.0, 100.0, 0.0, 0.0, 0.0, 5.0, 5.0, 5.0],
            input_rate_weights: [200.0, 300.0, 300.0],
            state_scale: STATE_SCALE_MM_DEG,
            input_scale: [1.0 / NEWTONS_PER_GF, 1e3, 1e3],
            limits: InputLimits::default(),
            state_box: StateBox::default(),
            penalty_weight: PENALTY_WEIGHT,
            max_iters: 8,
            tol: 1e-9,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(BlimpError::InvalidParameter("MPC horizon must be at least one step".into()));
        }
        if !(self.dt > 0.0) {
            return Err(BlimpError::InvalidParameter(format!("MPC time step must be positive, got {}", self.dt)));
        }
        for w in self.state_weights.iter().chain(&self.input_rate_weights) {
            if *w < 0.0 || !w.is_finite() {
                return Err(BlimpError::NegativeWeight(*w));
            }
        }
        Ok(())
    }
}

/// Decision variables are kept in grams-force and millimetres so that the
/// three input channels have comparable magnitudes.
fn to_decision(u: &ControlInput) -> [f64; 3] {
    [newtons_to_gf(u.thrust), u.delta.delta_x * 1e3, u.delta.delta_y * 1e3]
}

fn from_decision(z: &[f64]) -> ControlInput {
    ControlInput::new(gf_to_newtons(z[0]), z[1] * 1e-3, z[2] * 1e-3)
}

/// MPC objective split into per-component tracking terms, state-box
/// penalties and input-rate terms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MpcCost {
    pub tracking: [f64; 12],
    pub penalty: f64,
    pub input_rate: [f64; 3],
}

impl MpcCost {
    pub fn total(&self) -> f64 {
        self.tracking.iter().sum::<f64>() + self.penalty + self.input_rate.iter().sum::<f64>()
    }
}

/// Result of one receding-horizon solve.
#[derive(Debug, Clone)]
pub struct Plan {
    pub inputs: Vec<ControlInput>,
    /// Predicted states, `inputs.len() + 1` of them starting at the estimate.
    pub states: Vec<State>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The solver failed outright; `inputs` is the unsolved initial guess.
    pub degraded: bool,
}

impl Plan {
    /// The plan shifted by one tick, repeating the final input.
    pub fn shifted(&self) -> Vec<ControlInput> {
        let mut u: Vec<ControlInput> = self.inputs.iter().skip(1).copied().collect();
        if let Some(last) = self.inputs.last() {
            u.push(*last);
        }
        u
    }
}

/// One MPC problem instance.
pub struct MpcProblem<'a> {
    pub plant: &'a Plant,
    pub config: &'a MpcConfig,
    pub initial: State,
    pub wind: Vector3<f64>,
    pub reference: Reference,
    pub previous_input: ControlInput,
}

impl MpcProblem<'_> {
    pub fn unpack(&self, z: &DVector<f64>) -> Vec<ControlInput> {
        z.as_slice().chunks_exact(3).map(from_decision).collect()
    }

    pub fn pack(inputs: &[ControlInput]) -> DVector<f64> {
        DVector::from_iterator(inputs.len() * 3, inputs.iter().flat_map(to_decision))
    }

    fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let m = self.config.horizon;
        let lo = to_decision(&ControlInput::from_array(self.config.limits.lower()));
        let hi = to_decision(&ControlInput::from_array(self.config.limits.upper()));
        (
            DVector::from_iterator(3 * m, (0..m).flat_map(|_| lo)),
            DVector::from_iterator(3 * m, (0..m).flat_map(|_| hi)),
        )
    }

    fn extend(
        &self,
        states: &mut [State],
        inputs: &[ControlInput],
        terms: &[ConfigurationTerms],
        from: usize,
    ) -> Result<()> {
        for k in from..inputs.len() {
            states[k + 1] =
                step_with_terms(&states[k], &inputs[k], &self.wind, self.plant, &terms[k], self.config.dt)?;
        }
        Ok(())
    }

    fn terms(&self, inputs: &[ControlInput]) -> Result<Vec<ConfigurationTerms>> {
        inputs.iter().map(|u| ConfigurationTerms::new(&u.delta, self.plant)).collect()
    }

    pub fn rollout(&self, inputs: &[ControlInput]) -> Result<Vec<State>> {
        let terms = self.terms(inputs)?;
        let mut states = vec![self.initial; inputs.len() + 1];
        self.extend(&mut states, inputs, &terms, 0)?;
        Ok(states)
    }

    /// Scaled deviation of `x` from the reference.
    fn tracking_error(&self, x: &State) -> [f64; 12] {
        let target = self.reference.as_state().to_vector();
        let v = x.to_vector();
        let mut d = [0.0; 12];
        for i in 0..12 {
            d[i] = v[i] - target[i];
            if (3..6).contains(&i) {
                d[i] = wrap_angle(d[i]);
            }
            d[i] *= self.config.state_scale[i];
        }
        d
    }

    /// Unweighted scaled hinge violations of the state box.
    fn box_violation(&self, x: &State) -> [f64; 6] {
        let b = &self.config.state_box;
        let sc = &self.config.state_scale;
        [
            sc[3] * hinge(x.e.x, -b.attitude, b.attitude, 1.0),
            sc[4] * hinge(x.e.y, -b.attitude, b.attitude, 1.0),
            sc[5] * hinge(x.e.z, -b.attitude, b.attitude, 1.0),
            sc[6] * hinge(x.v_b.x, b.forward_speed.0, b.forward_speed.1, 1.0),
            sc[7] * hinge(x.v_b.y, -b.lateral_speed, b.lateral_speed, 1.0),
            sc[8] * hinge(x.v_b.z, -b.vertical_speed, b.vertical_speed, 1.0),
        ]
    }

    fn input_changes(&self, inputs: &[ControlInput]) -> Vec<[f64; 3]> {
        let s = &self.config.input_scale;
        let mut previous = self.previous_input.to_array();
        inputs
            .iter()
            .map(|u| {
                let now = u.to_array();
                let d = [0, 1, 2].map(|i| s[i] * (now[i] - previous[i]));
                previous = now;
                d
            })
            .collect()
    }

    fn assemble(&self, states: &[State], inputs: &[ControlInput]) -> Result<DVector<f64>> {
        let c = self.config;
        let mut r = Vec::with_capacity(states.len() * 18 + inputs.len() * 3);
        for x in states {
            trajopt::push_weighted(&mut r, &self.tracking_error(x), &c.state_weights)?;
        }
        let w = c.penalty_weight.sqrt();
        for x in &states[1..] {
            r.extend(self.box_violation(x).iter().map(|v| w * v));
        }
        for d in self.input_changes(inputs) {
            trajopt::push_weighted(&mut r, &d, &c.input_rate_weights)?;
        }
        Ok(DVector::from_vec(r))
    }

    /// Cost of an input sequence split by source.
    pub fn cost_terms(&self, inputs: &[ControlInput]) -> Result<MpcCost> {
        let c = self.config;
        let states = self.rollout(inputs)?;
        let mut cost = MpcCost::default();
        for x in &states {
            for (i, d) in self.tracking_error(x).iter().enumerate() {
                cost.tracking[i] += c.state_weights[i] * d * d;
            }
        }
        for x in &states[1..] {
            cost.penalty += c.penalty_weight * self.box_violation(x).iter().map(|v| v * v).sum::<f64>();
        }
        for d in self.input_changes(inputs) {
            for i in 0..3 {
                cost.input_rate[i] += c.input_rate_weights[i] * d[i] * d[i];
            }
        }
        Ok(cost)
    }

    /// Solves from `guess` (clamped into the input box).
    pub fn solve(&self, guess: &[ControlInput]) -> Result<(Plan, SolveReport)> {
        let (lower, upper) = self.bounds();
        let guess: Vec<ControlInput> = guess.iter().map(|u| self.config.limits.clamp(u)).collect();
        let problem = ResidualProblem::new(ByRef(self), lower, upper, Self::pack(&guess))?;
        let options = SolverOptions {
            max_iters: self.config.max_iters,
            tol: self.config.tol,
            ..SolverOptions::default()
        };
        let report = trajopt::solve(&problem, &options)?;
        let inputs = self.unpack(&report.solution);
        let states = self.rollout(&inputs)?;
        let plan = Plan {
            inputs,
            states,
            cost: report.cost,
            iterations: report.iterations,
            converged: report.converged,
            degraded: false,
        };
        Ok((plan, report))
    }
}

impl Residuals for MpcProblem<'_> {
    fn residuals(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let inputs = self.unpack(z);
        let states = self.rollout(&inputs)?;
        self.assemble(&states, &inputs)
    }

    /// Forward differences that exploit causality: perturbing input `j`
    /// leaves states `0..=j` untouched, so only the tail is re-integrated.
    fn jacobian(&self, z: &DVector<f64>, r: &DVector<f64>) -> Result<Jacobian> {
        let inputs = self.unpack(z);
        let terms = self.terms(&inputs)?;
        let mut base = vec![self.initial; inputs.len() + 1];
        self.extend(&mut base, &inputs, &terms, 0)?;

        let mut matrix = DMatrix::zeros(r.len(), z.len());
        let mut flagged = Vec::new();
        let mut states = base.clone();
        let mut perturbed_inputs = inputs.clone();
        let mut perturbed_terms = terms.clone();
        for col in 0..z.len() {
            let j = col / 3;
            let h = fd_step(z[col]);
            let mut zj = to_decision(&inputs[j]);
            zj[col % 3] += h;
            perturbed_inputs[j] = from_decision(&zj);
            let column = (|| -> Result<DVector<f64>> {
                if col % 3 != 0 {
                    perturbed_terms[j] = ConfigurationTerms::new(&perturbed_inputs[j].delta, self.plant)?;
                }
                states[..=j].copy_from_slice(&base[..=j]);
                self.extend(&mut states, &perturbed_inputs, &perturbed_terms, j)?;
                let rp = self.assemble(&states, &perturbed_inputs)?;
                Ok((rp - r) / h)
            })();
            match column {
                Ok(c) if c.iter().all(|v| v.is_finite()) => matrix.set_column(col, &c),
                _ => flagged.push(col),
            }
            perturbed_inputs[j] = inputs[j];
            perturbed_terms[j] = terms[j].clone();
        }
        Ok(Jacobian { matrix, flagged })
    }
}

/// Clamps the first planned input into the box, or holds `previous` when the
/// plan is degraded.
pub fn apply_first(plan: &Plan, limits: &InputLimits, previous: ControlInput) -> ControlInput {
    match plan.inputs.first() {
        Some(u) if !plan.degraded && u.thrust.is_finite() && u.delta.norm().is_finite() => limits.clamp(u),
        _ => previous,
    }
}

/// Receding-horizon controller with warm starting.
#[derive(Debug, Clone)]
pub struct ModelPredictiveController {
    config: MpcConfig,
    previous_input: ControlInput,
    warm: Option<Vec<ControlInput>>,
}

impl ModelPredictiveController {
    pub fn new(config: MpcConfig, initial_input: ControlInput) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, previous_input: initial_input, warm: None })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    pub fn previous_input(&self) -> ControlInput {
        self.previous_input
    }

    /// Plans from the estimates and returns the plan together with the input
    /// to apply now.
    pub fn step(
        &mut self,
        plant: &Plant,
        state: &State,
        wind: &Vector3<f64>,
        reference: &Reference,
    ) -> (Plan, ControlInput) {
        let guess = self
            .warm
            .take()
            .unwrap_or_else(|| vec![self.previous_input; self.config.horizon]);
        let problem = MpcProblem {
            plant,
            config: &self.config,
            initial: *state,
            wind: *wind,
            reference: *reference,
            previous_input: self.previous_input,
        };
        let plan = match problem.solve(&guess) {
            Ok((plan, _)) => plan,
            Err(_) => Plan {
                inputs: guess,
                states: vec![*state],
                cost: f64::NAN,
                iterations: 0,
                converged: false,
                degraded: true,
            },
        };
        let applied = apply_first(&plan, &self.config.limits, self.previous_input);
        if !plan.degraded {
            self.warm = Some(plan.shifted());
        }
        self.previous_input = applied;
        (plan, applied)
    }
}
