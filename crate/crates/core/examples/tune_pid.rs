//! Grid search for the PID baseline gains.
//!
//! Flies the still-air scenario with a small yaw-moment bias in the truth
//! plant (the only disturbance present without wind) and scores each gain
//! set by `cRMSE_y + cRMSE_ψ` for the yaw loop and by RMS altitude error for
//! the altitude loop, averaged over a few seeds. Runs that leave the
//! corridor sideways are discarded. The loops are tuned one after the other
//! because they barely interact.
//!
//! ```text
//! cargo run --release -p rgblimp-core --example tune_pid
//! ```

use rgblimp::baselines::{PidGains, PidLoop};
use rgblimp::harness::{run_episode, Arm, Scenario, TerminationCause, TruthSection};
use rgblimp::wind::WindPreset;

const SEEDS: [u64; 3] = [1, 2, 3];

fn score(scenario: &Scenario, gains: PidGains) -> Option<(f64, f64)> {
    let s = Scenario { pid: gains, ..scenario.clone() };
    let mut lateral = 0.0;
    let mut altitude = 0.0;
    for seed in SEEDS {
        let (log, m) = run_episode(&s, Arm::Pid, seed).ok()?;
        if matches!(m.termination, TerminationCause::LateralLimit | TerminationCause::NonFinite) {
            return None;
        }
        lateral += m.final_crmse_y + m.final_crmse_psi;
        let flight: Vec<f64> = log
            .rows
            .iter()
            .filter(|r| r.t >= s.launch.duration_s)
            .map(|r| r.state.p.z - s.reference.altitude_m)
            .collect();
        altitude += (flight.iter().map(|e| e * e).sum::<f64>() / flight.len() as f64).sqrt();
    }
    let n = SEEDS.len() as f64;
    Some((lateral / n, altitude / n))
}

fn main() {
    let scenario = Scenario {
        truth: TruthSection { yaw_bias: 0.005, ..TruthSection::default() },
        ..Scenario::preset(WindPreset::None)
    };
    let kp = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2];
    let ki = [0.0, 0.02, 0.05, 0.1, 0.2];
    let kd = [0.0, 0.02, 0.05, 0.1, 0.2];

    let mut best = PidGains { altitude: PidLoop::default(), ..PidGains::default() };
    let mut best_score = f64::INFINITY;
    for &p in &kp {
        for &i in &ki {
            for &d in &kd {
                let gains = PidGains { yaw: PidLoop { kp: p, ki: i, kd: d }, ..best };
                if let Some((lateral, _)) = score(&scenario, gains) {
                    if lateral < best_score {
                        best_score = lateral;
                        best.yaw = gains.yaw;
                    }
                }
            }
        }
    }
    println!("yaw loop      {:?}  cRMSE_y + cRMSE_psi = {best_score:.4}", best.yaw);

    best_score = f64::INFINITY;
    let yaw = best.yaw;
    for &p in &kp {
        for &i in &ki {
            for &d in &kd {
                let gains = PidGains { altitude: PidLoop { kp: p, ki: i, kd: d }, yaw, ..best };
                if let Some((_, altitude)) = score(&scenario, gains) {
                    if altitude < best_score {
                        best_score = altitude;
                        best.altitude = gains.altitude;
                    }
                }
            }
        }
    }
    println!("altitude loop {:?}  RMS altitude error = {best_score:.4} m", best.altitude);
    if let Some((lateral, altitude)) = score(&scenario, best) {
        println!("combined      cRMSE_y + cRMSE_psi = {lateral:.4}, RMS altitude error = {altitude:.4} m");
    }
}
