//! Tracking metrics over a flight.

use serde::Serialize;

/// Why an episode stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    /// `|y|` reached the lateral limit.
    LateralLimit,
    /// The vehicle reached the end of the corridor.
    CorridorEnd,
    Duration,
    NonFinite,
}

impl TerminationCause {
    pub const ALL: [TerminationCause; 4] = [
        TerminationCause::LateralLimit,
        TerminationCause::CorridorEnd,
        TerminationCause::Duration,
        TerminationCause::NonFinite,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TerminationCause::LateralLimit => "lateral_limit",
            TerminationCause::CorridorEnd => "corridor_end",
            TerminationCause::Duration => "duration",
            TerminationCause::NonFinite => "non_finite",
        }
    }
}

/// Cumulative RMSE of `(t, error)` samples relative to the first timestamp:
/// `sqrt(Σ_{i≤k} e_i² Δt_i / (t_k − t_0))`, with `Δt_i = t_i − t_{i−1}`.
/// The first entry is `|e_0|`.
pub fn cumulative_rmse(series: &[(f64, f64)]) -> Vec<f64> {
    let Some(&(t0, e0)) = series.first() else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(series.len());
    out.push(e0.abs());
    let mut integral = 0.0;
    for w in series.windows(2) {
        let (t_prev, _) = w[0];
        let (t, e) = w[1];
        integral += e * e * (t - t_prev);
        let span = t - t0;
        out.push(if span > 0.0 { (integral / span).sqrt() } else { e.abs() });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// Times from the end of launch onward.
    pub t: Vec<f64>,
    pub crmse_y: Vec<f64>,
    pub crmse_psi: Vec<f64>,
    pub final_crmse_y: f64,
    pub final_crmse_psi: f64,
    pub termination: TerminationCause,
    pub path_length: f64,
    pub flight_time: f64,
    pub final_x: f64,
    pub max_abs_y: f64,
    pub degraded_ticks: usize,
}
