//! Scenario × arm × trial campaigns.
//!
//! ```toml
//! master_seed = 1
//! trials = 10
//! arms = ["mhe_mpc", "pid", "open_loop"]
//! presets = ["none", "headwind_strong"]   # built-in scenarios
//! scenarios = ["my_scenario.toml"]        # relative to this file
//! ```
//!
//! Every arm of a given scenario and trial sees the same seed, so wind and
//! sensor noise are paired across arms.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use super::episode::run_episode;
use super::metrics::{Metrics, TerminationCause};
use super::scenario::{derive_seed, Arm, Scenario};
use crate::error::{BlimpError, Result};
use crate::wind::WindPreset;

/// Environment variable holding the number of parallel episode workers.
pub const WORKERS_ENV: &str = "RGBLIMP_WORKERS";

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MatrixFile {
    master_seed: u64,
    trials: usize,
    arms: Vec<Arm>,
    presets: Vec<String>,
    scenarios: Vec<PathBuf>,
}

impl Default for MatrixFile {
    fn default() -> Self {
        Self { master_seed: 0, trials: 10, arms: Arm::ALL.to_vec(), presets: Vec::new(), scenarios: Vec::new() }
    }
}

#[derive(Debug, Clone)]
pub struct CampaignMatrix {
    pub master_seed: u64,
    pub trials: usize,
    pub arms: Vec<Arm>,
    pub scenarios: Vec<Scenario>,
}

impl CampaignMatrix {
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let file: MatrixFile = toml::from_str(text).map_err(|e| BlimpError::Config(format!("matrix: {e}")))?;
        let mut scenarios = Vec::new();
        for name in &file.presets {
            let preset = WindPreset::parse(name)
                .ok_or_else(|| BlimpError::Config(format!("unknown preset '{name}' in matrix")))?;
            scenarios.push(Scenario::preset(preset));
        }
        for path in &file.scenarios {
            let resolved = match base {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.clone(),
            };
            scenarios.push(Scenario::load(&resolved)?);
        }
        let matrix = Self { master_seed: file.master_seed, trials: file.trials, arms: file.arms, scenarios };
        matrix.validate()?;
        Ok(matrix)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BlimpError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() || self.arms.is_empty() {
            return Err(BlimpError::Config("matrix needs at least one scenario and one arm".into()));
        }
        let mut names: Vec<&str> = self.scenarios.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(BlimpError::Config("scenario names in a matrix must be unique".into()));
        }
        Ok(())
    }

    /// Seed of `trial` in scenario `index`, shared by all arms.
    pub fn trial_seed(&self, index: usize, trial: usize) -> u64 {
        derive_seed(self.master_seed, ((index as u64) << 32) | trial as u64)
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub scenario: String,
    pub arm: Arm,
    pub trial: usize,
    pub seed: u64,
    pub outcome: std::result::Result<Metrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub scenario: String,
    pub arm: Arm,
    pub trials: usize,
    pub failed: usize,
    pub mean_crmse_y: f64,
    pub std_crmse_y: f64,
    pub mean_crmse_psi: f64,
    pub std_crmse_psi: f64,
    pub terminations: [usize; 4],
    pub mean_path_length: f64,
}

#[derive(Debug, Clone)]
pub struct CampaignSummary {
    pub cells: Vec<CellSummary>,
    pub episodes: Vec<EpisodeResult>,
}

impl CampaignSummary {
    pub fn cell(&self, scenario: &str, arm: Arm) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.scenario == scenario && c.arm == arm)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn summarise(scenario: &str, arm: Arm, results: &[&EpisodeResult]) -> CellSummary {
    let ok: Vec<&Metrics> = results.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let ys: Vec<f64> = ok.iter().map(|m| m.final_crmse_y).collect();
    let psis: Vec<f64> = ok.iter().map(|m| m.final_crmse_psi).collect();
    let paths: Vec<f64> = ok.iter().map(|m| m.path_length).collect();
    let (mean_crmse_y, std_crmse_y) = mean_std(&ys);
    let (mean_crmse_psi, std_crmse_psi) = mean_std(&psis);
    let mut terminations = [0; 4];
    for m in &ok {
        let i = TerminationCause::ALL.iter().position(|c| *c == m.termination).expect("known cause");
        terminations[i] += 1;
    }
    CellSummary {
        scenario: scenario.to_string(),
        arm,
        trials: results.len(),
        failed: results.len() - ok.len(),
        mean_crmse_y,
        std_crmse_y,
        mean_crmse_psi,
        std_crmse_psi,
        terminations,
        mean_path_length: mean_std(&paths).0,
    }
}

/// Number of workers from [`WORKERS_ENV`], defaulting to the CPU count.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every episode of `matrix`. With `out`, writes one log per episode
/// under `episodes/`, `summary.csv` and `traces.csv`. A failing episode is
/// recorded in its cell and the campaign carries on.
pub fn run_campaign(matrix: &CampaignMatrix, out: Option<&Path>) -> Result<CampaignSummary> {
    matrix.validate()?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir.join("episodes"))?;
    }
    let mut jobs = Vec::new();
    for (si, scenario) in matrix.scenarios.iter().enumerate() {
        for &arm in &matrix.arms {
            for trial in 0..matrix.trials {
                jobs.push((si, scenario, arm, trial));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| BlimpError::InvalidParameter(format!("worker pool: {e}")))?;
    let results: Vec<(EpisodeResult, Option<Vec<String>>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(si, scenario, arm, trial)| {
                let seed = matrix.trial_seed(si, trial);
                let outcome = run_episode(scenario, arm, seed).and_then(|(log, metrics)| {
                    let mut traces = None;
                    if let Some(dir) = out {
                        let name = format!("{}__{}__{:03}.csv", scenario.name, arm, trial);
                        log.save(&dir.join("episodes").join(name))?;
                        traces = Some(trace_lines(&scenario.name, arm, trial, &log, &metrics));
                    }
                    Ok((metrics, traces))
                });
                let (outcome, traces) = match outcome {
                    Ok((m, t)) => (Ok(m), t),
                    Err(e) => (Err(e.to_string()), None),
                };
                (EpisodeResult { scenario: scenario.name.clone(), arm, trial, seed, outcome }, traces)
            })
            .collect()
    });

    let mut cells = Vec::new();
    for scenario in &matrix.scenarios {
        for &arm in &matrix.arms {
            let members: Vec<&EpisodeResult> = results
                .iter()
                .map(|(r, _)| r)
                .filter(|r| r.scenario == scenario.name && r.arm == arm)
                .collect();
            cells.push(summarise(&scenario.name, arm, &members));
        }
    }
    if let Some(dir) = out {
        write_summary(&dir.join("summary.csv"), &cells)?;
        let mut text = String::from(TRACE_HEADER);
        text.push('\n');
        for line in results.iter().filter_map(|(_, t)| t.as_ref()).flatten() {
            text.push_str(line);
            text.push('\n');
        }
        std::fs::write(dir.join("traces.csv"), text)?;
    }
    Ok(CampaignSummary { cells, episodes: results.into_iter().map(|(r, _)| r).collect() })
}

const TRACE_HEADER: &str =
    "scenario,arm,trial,t,x,y,yaw,est_wind_x,est_wind_y,est_wind_z,wind_x,wind_y,wind_z,crmse_y,crmse_yaw";

fn trace_lines(scenario: &str, arm: Arm, trial: usize, log: &super::EpisodeLog, metrics: &Metrics) -> Vec<String> {
    log.rows
        .iter()
        .map(|r| {
            let k = metrics.t.iter().position(|t| (*t - r.t).abs() < 1e-9);
            let (cy, cp) = k.map_or((f64::NAN, f64::NAN), |k| (metrics.crmse_y[k], metrics.crmse_psi[k]));
            let w = r.estimate.map_or([f64::NAN; 3], |(_, w)| [w.x, w.y, w.z]);
            format!(
                "{scenario},{arm},{trial},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t, r.state.p.x, r.state.p.y, r.state.e.z, w[0], w[1], w[2], r.wind.x, r.wind.y, r.wind.z, cy, cp
            )
        })
        .collect()
}

fn write_summary(path: &Path, cells: &[CellSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "scenario",
        "arm",
        "trials",
        "failed",
        "mean_crmse_y",
        "std_crmse_y",
        "mean_crmse_yaw",
        "std_crmse_yaw",
    ];
    header.extend(TerminationCause::ALL.iter().map(|c| c.name()));
    header.push("mean_path_length");
    w.write_record(&header)?;
    for c in cells {
        let mut row = vec![
            c.scenario.clone(),
            c.arm.to_string(),
            c.trials.to_string(),
            c.failed.to_string(),
            c.mean_crmse_y.to_string(),
            c.std_crmse_y.to_string(),
            c.mean_crmse_psi.to_string(),
            c.std_crmse_psi.to_string(),
        ];
        row.extend(c.terminations.iter().map(|n| n.to_string()));
        row.push(c.mean_path_length.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
