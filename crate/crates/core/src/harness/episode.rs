//! One simulated flight.
//!
//! Per tick: sample wind at the vehicle, integrate the truth over the tick,
//! measure the pose, update the estimator and controller, apply the input.
//! The control stack only ever sees measurements.

use std::io::Write;
use std::path::Path;

use nalgebra::{Vector3, Vector6};

use super::metrics::{cumulative_rmse, Metrics, TerminationCause};
use super::scenario::{derive_seed, Arm, Scenario};
use crate::baselines::{open_loop, pid_step, PidGains, PidState};
use crate::dynamics::{discrete_step, ControlInput, InputLimits, Plant, State};
use crate::error::{BlimpError, Result};
use crate::mhe::{Measurement, MovingHorizonEstimator, PoseSensor};
use crate::mpc::{ModelPredictiveController, Reference};
use crate::units::{newtons_to_gf, wrap_angle};
use crate::wind::WindField;

const WIND_STREAM: u64 = 1;
const SENSOR_STREAM: u64 = 2;

/// What the control stack produced on one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutput {
    pub input: ControlInput,
    pub estimate: Option<(State, Vector3<f64>)>,
    pub mhe_iterations: usize,
    pub mhe_converged: bool,
    pub mpc_iterations: usize,
    pub degraded: bool,
}

enum Controller {
    OpenLoop,
    Pid { gains: PidGains, state: PidState },
    MheMpc { estimator: Box<MovingHorizonEstimator>, mpc: Box<ModelPredictiveController>, estimate: (State, Vector3<f64>) },
}

/// Estimator and controller for one arm. Its inputs are measurements only.
pub struct ControlStack {
    controller: Controller,
    model: Plant,
    reference: Reference,
    limits: InputLimits,
    launch: ControlInput,
    launch_end: f64,
    tick: f64,
    applied: ControlInput,
}

impl ControlStack {
    pub fn new(scenario: &Scenario, arm: Arm) -> Result<Self> {
        let model = scenario.model_plant()?;
        let launch = scenario.launch.input();
        let controller = match arm {
            Arm::OpenLoop => Controller::OpenLoop,
            Arm::Pid => Controller::Pid { gains: scenario.pid, state: PidState::default() },
            Arm::MheMpc => {
                let initial = scenario.initial.state();
                Controller::MheMpc {
                    estimator: Box::new(MovingHorizonEstimator::new(
                        scenario.mhe.clone(),
                        initial,
                        Vector3::zeros(),
                    )),
                    mpc: Box::new(ModelPredictiveController::new(scenario.mpc.clone(), launch)?),
                    estimate: (initial, Vector3::zeros()),
                }
            }
        };
        Ok(Self {
            controller,
            model,
            reference: scenario.reference.reference(),
            limits: scenario.mpc.limits,
            launch,
            launch_end: scenario.launch.duration_s,
            tick: scenario.tick_s,
            applied: launch,
        })
    }

    /// Consumes the measurement at `measurement.timestamp` and returns the
    /// input to hold until the next one.
    pub fn tick(&mut self, measurement: &Measurement) -> Result<TickOutput> {
        let t = measurement.timestamp;
        let launching = t < self.launch_end - 1e-9;
        let mut out = TickOutput {
            input: self.launch,
            estimate: None,
            mhe_iterations: 0,
            mhe_converged: true,
            mpc_iterations: 0,
            degraded: false,
        };
        match &mut self.controller {
            Controller::OpenLoop => {
                if !launching {
                    out.input = open_loop(t);
                }
            }
            Controller::Pid { gains, state } => {
                // The PID runs during launch too so its derivative filter is
                // primed, but its output is only applied afterwards.
                let (u, next) = pid_step(measurement, &self.reference, self.tick, gains, &self.limits, state)?;
                *state = next;
                if !launching {
                    out.input = u;
                }
            }
            Controller::MheMpc { estimator, mpc, estimate } => {
                match estimator.update(&self.model, *measurement, self.applied) {
                    Ok(Some(e)) => {
                        *estimate = (e.current(), e.wind);
                        out.mhe_iterations = e.report.iterations;
                        out.mhe_converged = e.report.converged;
                    }
                    Ok(None) => {}
                    Err(BlimpError::OutOfOrderMeasurement { last, got }) => {
                        return Err(BlimpError::OutOfOrderMeasurement { last, got });
                    }
                    Err(_) => {
                        out.mhe_converged = false;
                        out.degraded = true;
                    }
                }
                out.estimate = Some(*estimate);
                if !launching {
                    let (plan, u) = mpc.step(&self.model, &estimate.0, &estimate.1, &self.reference);
                    out.input = u;
                    out.mpc_iterations = plan.iterations;
                    out.degraded |= plan.degraded;
                }
            }
        }
        self.applied = out.input;
        Ok(out)
    }
}

/// One log row. The input and wind are those held from `t` to the next tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub state: State,
    pub measurement: Vector6<f64>,
    pub estimate: Option<(State, Vector3<f64>)>,
    pub input: ControlInput,
    pub wind: Vector3<f64>,
    pub mhe_iterations: usize,
    pub mhe_converged: bool,
    pub mpc_iterations: usize,
    pub degraded: bool,
}

pub const LOG_COLUMNS: [&str; 46] = [
    "t", "x", "y", "z", "roll", "pitch", "yaw", "vx", "vy", "vz", "wx", "wy", "wz",
    "meas_x", "meas_y", "meas_z", "meas_roll", "meas_pitch", "meas_yaw",
    "est_x", "est_y", "est_z", "est_roll", "est_pitch", "est_yaw",
    "est_vx", "est_vy", "est_vz", "est_wx", "est_wy", "est_wz",
    "est_wind_x", "est_wind_y", "est_wind_z",
    "thrust_gf", "delta_x_mm", "delta_y_mm",
    "wind_x", "wind_y", "wind_z",
    "mhe_iterations", "mhe_converged", "mpc_iterations", "degraded",
    "true_airspeed", "ground_speed",
];

impl LogRow {
    fn fields(&self) -> Vec<String> {
        let mut f = Vec::with_capacity(LOG_COLUMNS.len());
        f.push(format!("{}", self.t));
        f.extend(self.state.to_vector().iter().map(|v| v.to_string()));
        f.extend(self.measurement.iter().map(|v| v.to_string()));
        match &self.estimate {
            Some((s, w)) => {
                f.extend(s.to_vector().iter().map(|v| v.to_string()));
                f.extend(w.iter().map(|v| v.to_string()));
            }
            None => f.extend(std::iter::repeat_n("NaN".to_string(), 15)),
        }
        f.push(newtons_to_gf(self.input.thrust).to_string());
        f.push((self.input.delta.delta_x * 1e3).to_string());
        f.push((self.input.delta.delta_y * 1e3).to_string());
        f.extend(self.wind.iter().map(|v| v.to_string()));
        f.push(self.mhe_iterations.to_string());
        f.push(u8::from(self.mhe_converged).to_string());
        f.push(self.mpc_iterations.to_string());
        f.push(u8::from(self.degraded).to_string());
        let ground = self.state.rotation() * self.state.v_b;
        f.push((ground - self.wind).norm().to_string());
        f.push(ground.norm().to_string());
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub scenario: String,
    pub arm: Arm,
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<LogRow>,
}

impl EpisodeLog {
    /// Headered CSV. The first line is a `#` comment naming the scenario,
    /// arm, seed and config hash.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# scenario={} arm={} seed={} config_sha256={}",
            self.scenario, self.arm, self.seed, self.config_hash
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LOG_COLUMNS)?;
        for row in &self.rows {
            w.write_record(row.fields())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn outside_corridor(scenario: &Scenario, state: &State) -> Option<TerminationCause> {
    if !state.is_finite() {
        Some(TerminationCause::NonFinite)
    } else if state.p.y.abs() >= scenario.lateral_limit_m {
        Some(TerminationCause::LateralLimit)
    } else if state.p.x >= scenario.corridor_end_m {
        Some(TerminationCause::CorridorEnd)
    } else {
        None
    }
}

/// Simulates `scenario` flown by `arm` with the given seed.
pub fn run_episode(scenario: &Scenario, arm: Arm, seed: u64) -> Result<(EpisodeLog, Metrics)> {
    scenario.validate()?;
    let truth = scenario.truth_plant()?;
    let mut field = WindField::new(scenario.wind.fan(derive_seed(seed, WIND_STREAM))?);
    let mut sensor = PoseSensor::new(scenario.sensor.noise(), derive_seed(seed, SENSOR_STREAM));
    let mut stack = ControlStack::new(scenario, arm)?;

    let dt = scenario.tick_s;
    let h = dt / scenario.substeps as f64;
    let steps = (scenario.duration_s / dt).round() as usize;
    let mut state = scenario.initial.state();
    let mut measurement = sensor.measure(&state, 0.0);
    let mut output = stack.tick(&measurement)?;
    let mut rows = Vec::with_capacity(steps + 1);
    let mut termination = TerminationCause::Duration;

    for k in 0..=steps {
        let t = k as f64 * dt;
        let wind = field.sample(&state.p, t)?;
        rows.push(LogRow {
            t,
            state,
            measurement: measurement.y,
            estimate: output.estimate,
            input: output.input,
            wind,
            mhe_iterations: output.mhe_iterations,
            mhe_converged: output.mhe_converged,
            mpc_iterations: output.mpc_iterations,
            degraded: output.degraded,
        });
        if let Some(cause) = outside_corridor(scenario, &state) {
            termination = cause;
            break;
        }
        if k == steps {
            break;
        }
        let mut next = state;
        for _ in 0..scenario.substeps {
            match discrete_step(&next, &output.input, &wind, &truth, h) {
                Ok(s) => next = s,
                Err(_) => {
                    termination = TerminationCause::NonFinite;
                    break;
                }
            }
        }
        if termination == TerminationCause::NonFinite {
            break;
        }
        state = next;
        measurement = sensor.measure(&state, (k + 1) as f64 * dt);
        output = stack.tick(&measurement)?;
    }

    let log = EpisodeLog {
        scenario: scenario.name.clone(),
        arm,
        seed,
        config_hash: scenario.config_hash(),
        rows,
    };
    let metrics = compute_metrics(&log, scenario.launch.duration_s, termination);
    Ok((log, metrics))
}

pub fn compute_metrics(log: &EpisodeLog, launch_end: f64, termination: TerminationCause) -> Metrics {
    let flight: Vec<&LogRow> = log.rows.iter().filter(|r| r.t >= launch_end - 1e-9).collect();
    let t: Vec<f64> = flight.iter().map(|r| r.t).collect();
    let ey: Vec<(f64, f64)> = flight.iter().map(|r| (r.t, r.state.p.y)).collect();
    let epsi: Vec<(f64, f64)> = flight.iter().map(|r| (r.t, wrap_angle(r.state.e.z))).collect();
    let crmse_y = cumulative_rmse(&ey);
    let crmse_psi = cumulative_rmse(&epsi);
    let path_length = log.rows.windows(2).map(|w| (w[1].state.p - w[0].state.p).norm()).sum();
    let last = log.rows.last();
    Metrics {
        final_crmse_y: crmse_y.last().copied().unwrap_or(0.0),
        final_crmse_psi: crmse_psi.last().copied().unwrap_or(0.0),
        t,
        crmse_y,
        crmse_psi,
        termination,
        path_length,
        flight_time: last.map_or(0.0, |r| r.t),
        final_x: last.map_or(0.0, |r| r.state.p.x),
        max_abs_y: log.rows.iter().fold(0.0, |m, r| m.max(r.state.p.y.abs())),
        degraded_ticks: log.rows.iter().filter(|r| r.degraded).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wind::WindPreset;

    fn short(preset: WindPreset, duration: f64) -> Scenario {
        Scenario { duration_s: duration, ..Scenario::preset(preset) }
    }

    #[test]
    fn open_loop_log_is_complete_and_monotone() {
        let s = short(WindPreset::None, 2.0);
        let (log, m) = run_episode(&s, Arm::OpenLoop, 3).unwrap();
        assert_eq!(m.termination, TerminationCause::Duration);
        assert_eq!(log.rows.len(), 81);
        for w in log.rows.windows(2) {
            assert!((w[1].t - w[0].t - 0.025).abs() < 1e-12);
        }
        assert!(log.rows.iter().all(|r| r.estimate.is_none()));
        assert!(log.rows.iter().all(|r| r.input == open_loop(0.0)));
        assert_eq!(m.t.first().copied(), Some(0.5));
        assert!(m.path_length > 0.5);
    }

    #[test]
    fn identical_seed_identical_log() {
        let s = short(WindPreset::CrosswindLight, 1.0);
        let (a, _) = run_episode(&s, Arm::Pid, 9).unwrap();
        let (b, _) = run_episode(&s, Arm::Pid, 9).unwrap();
        assert_eq!(a, b);
        let (c, _) = run_episode(&s, Arm::Pid, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn csv_has_fixed_schema() {
        let s = short(WindPreset::None, 0.2);
        let (log, _) = run_episode(&s, Arm::MheMpc, 1).unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("# scenario=") && header.contains("config_sha256="));
        assert_eq!(lines.next().unwrap(), LOG_COLUMNS.join(","));
        for line in lines {
            assert_eq!(line.split(',').count(), LOG_COLUMNS.len());
        }
    }

    #[test]
    fn lateral_limit_ends_episode_on_the_violating_row() {
        let s = Scenario { lateral_limit_m: 0.01, ..short(WindPreset::CrosswindStrong, 15.0) };
        let (log, m) = run_episode(&s, Arm::OpenLoop, 2).unwrap();
        assert_eq!(m.termination, TerminationCause::LateralLimit);
        let (last, rest) = log.rows.split_last().unwrap();
        assert!(last.state.p.y.abs() >= 0.01);
        assert!(rest.iter().all(|r| r.state.p.y.abs() < 0.01));
    }

    #[test]
    fn launch_holds_launch_input() {
        let s = short(WindPreset::None, 1.0);
        let (log, _) = run_episode(&s, Arm::MheMpc, 0).unwrap();
        for r in log.rows.iter().filter(|r| r.t < 0.5 - 1e-9) {
            assert_eq!(r.input, s.launch.input());
            assert_eq!(r.mpc_iterations, 0);
        }
        assert!(log.rows.iter().any(|r| r.t >= 0.5 && r.mpc_iterations > 0));
    }
}
