//! Episode orchestration, scenario files, metrics and campaigns.

mod campaign;
mod episode;
mod metrics;
mod scenario;

pub use campaign::{run_campaign, CampaignMatrix, CampaignSummary, CellSummary, WORKERS_ENV};
pub use episode::{compute_metrics, run_episode, ControlStack, EpisodeLog, LogRow, TickOutput, LOG_COLUMNS};
pub use metrics::{cumulative_rmse, Metrics, TerminationCause};
pub use scenario::{
    derive_seed, Arm, InitialSection, LaunchSection, ReferenceSection, Scenario, SensorSection, TruthSection,
    WindSection,
};
