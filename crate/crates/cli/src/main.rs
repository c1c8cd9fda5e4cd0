use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rgblimp::config::PlantConfig;
use rgblimp::harness::{run_campaign, run_episode, Arm, CampaignMatrix, Metrics, Scenario, WORKERS_ENV};
use rgblimp::BlimpError;

#[derive(Parser)]
#[command(name = "rgblimp", version, about = "Gliding-blimp wind rejection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fly one episode and write its log.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_parser = parse_arm)]
        arm: Arm,
        /// Defaults to the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario x arm x trial matrix.
    #[command(after_help = format!("Parallel workers are read from {WORKERS_ENV} (default: all cores)."))]
    Campaign {
        #[arg(long)]
        matrix: PathBuf,
        /// Overrides the trial count in the matrix file.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a configuration file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// File type; by default every type is tried.
        #[arg(long, value_enum)]
        kind: Option<Kind>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Scenario,
    Matrix,
    Plant,
}

fn parse_arm(s: &str) -> Result<Arm, String> {
    s.parse::<Arm>().map_err(|e| e.to_string())
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn config(e: BlimpError) -> Self {
        Failure::Config(e.to_string())
    }

    fn runtime(e: BlimpError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { scenario, arm, seed, out } => simulate(&scenario, arm, seed, &out),
        Command::Campaign { matrix, trials, out } => campaign(&matrix, trials, &out),
        Command::Validate { config, kind } => validate(&config, kind),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn describe(m: &Metrics) -> String {
    format!(
        "crmse_y={:.4} m crmse_yaw={:.4} rad termination={} flight_time={:.2} s final_x={:.2} m path={:.2} m degraded_ticks={}",
        m.final_crmse_y,
        m.final_crmse_psi,
        m.termination.name(),
        m.flight_time,
        m.final_x,
        m.path_length,
        m.degraded_ticks
    )
}

fn simulate(path: &Path, arm: Arm, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let scenario = Scenario::load(path).map_err(Failure::config)?;
    scenario.validate().map_err(Failure::config)?;
    let seed = seed.unwrap_or(scenario.seed);
    let (log, metrics) = run_episode(&scenario, arm, seed).map_err(Failure::runtime)?;
    std::fs::create_dir_all(out).map_err(|e| Failure::runtime(e.into()))?;
    let stem = format!("{}__{}__{}", scenario.name, arm, seed);
    let log_path = out.join(format!("{stem}.csv"));
    log.save(&log_path).map_err(Failure::runtime)?;
    let mut text = String::from("t,crmse_y,crmse_yaw\n");
    for k in 0..metrics.t.len() {
        text.push_str(&format!("{},{},{}\n", metrics.t[k], metrics.crmse_y[k], metrics.crmse_psi[k]));
    }
    let metrics_path = out.join(format!("{stem}__metrics.csv"));
    std::fs::write(&metrics_path, text).map_err(|e| Failure::runtime(e.into()))?;
    println!("{} {} seed={} {}", scenario.name, arm, seed, describe(&metrics));
    println!("log: {}", log_path.display());
    println!("metrics: {}", metrics_path.display());
    Ok(())
}

fn campaign(path: &Path, trials: Option<usize>, out: &Path) -> Result<(), Failure> {
    let mut matrix = CampaignMatrix::load(path).map_err(Failure::config)?;
    if let Some(n) = trials {
        matrix.trials = n;
    }
    matrix.validate().map_err(Failure::config)?;
    for s in &matrix.scenarios {
        s.validate().map_err(|e| Failure::Config(format!("scenario '{}': {e}", s.name)))?;
    }
    let summary = run_campaign(&matrix, Some(out)).map_err(Failure::runtime)?;
    println!(
        "{:<24} {:<10} {:>6} {:>6} {:>16} {:>16}  terminations",
        "scenario", "arm", "trials", "failed", "crmse_y", "crmse_yaw"
    );
    for c in &summary.cells {
        println!(
            "{:<24} {:<10} {:>6} {:>6} {:>7.4} ± {:<6.4} {:>7.4} ± {:<6.4}  {:?}",
            c.scenario,
            c.arm.to_string(),
            c.trials,
            c.failed,
            c.mean_crmse_y,
            c.std_crmse_y,
            c.mean_crmse_psi,
            c.std_crmse_psi,
            c.terminations
        );
    }
    println!("summary: {}", out.join("summary.csv").display());
    Ok(())
}

fn check(path: &Path, kind: Kind) -> Result<String, BlimpError> {
    match kind {
        Kind::Scenario => {
            let s = Scenario::load(path)?;
            s.validate()?;
            Ok(format!("scenario '{}' (config sha256 {})", s.name, s.config_hash()))
        }
        Kind::Matrix => {
            let m = CampaignMatrix::load(path)?;
            m.validate()?;
            for s in &m.scenarios {
                s.validate().map_err(|e| BlimpError::Config(format!("scenario '{}': {e}", s.name)))?;
            }
            Ok(format!("campaign matrix: {} scenarios, {} arms, {} trials", m.scenarios.len(), m.arms.len(), m.trials))
        }
        Kind::Plant => {
            let p = PlantConfig::load(path)?;
            p.to_plant()?;
            Ok("plant parameters".to_string())
        }
    }
}

fn validate(path: &Path, kind: Option<Kind>) -> Result<(), Failure> {
    if !path.exists() {
        return Err(Failure::Config(format!("{} does not exist", path.display())));
    }
    let kinds = match kind {
        Some(k) => vec![k],
        None => vec![Kind::Scenario, Kind::Matrix, Kind::Plant],
    };
    let mut errors = Vec::new();
    for k in kinds {
        match check(path, k) {
            Ok(what) => {
                println!("{}: valid {what}", path.display());
                return Ok(());
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    Err(Failure::Config(errors.join("; ")))
}
