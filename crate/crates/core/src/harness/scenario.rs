//! Scenario files.
//!
//! A scenario is a TOML file describing one flight setup. User-facing values
//! use gram-force, millimetres and degrees where the field name says so.
//!
//! ```toml
//! name = "crosswind_strong"
//! plant = "plant.toml"      # optional, relative to this file
//! duration_s = 15.0
//! seed = 1
//!
//! [wind]
//! preset = "crosswind_strong"
//! half_width = 0.7          # optional fan overrides
//!
//! [truth]                   # perturbs the simulated vehicle only
//! stationary_com_offset_mm = [0.0, 1.0, 0.0]
//! ```
//!
//! Omitted sections take their defaults; unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::PidGains;
use crate::config::PlantConfig;
use crate::dynamics::{ControlInput, InputLimits, Plant, State};
use crate::error::{BlimpError, Result};
use crate::mhe::{MeasurementNoise, MheConfig};
use crate::mpc::{MpcConfig, Reference};
use crate::units::{gf_to_newtons, mm_to_m};
use crate::wind::{FanConfig, WindPreset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    MheMpc,
    Pid,
    OpenLoop,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::MheMpc, Arm::Pid, Arm::OpenLoop];

    pub fn name(&self) -> &'static str {
        match self {
            Arm::MheMpc => "mhe_mpc",
            Arm::Pid => "pid",
            Arm::OpenLoop => "open_loop",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = BlimpError;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| BlimpError::Config(format!("unknown arm '{s}' (expected mhe_mpc, pid or open_loop)")))
    }
}

/// Fan preset plus optional overrides of individual fan parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindSection {
    pub preset: String,
    pub position: Option<[f64; 3]>,
    pub axis: Option<[f64; 3]>,
    pub core_speed: Option<f64>,
    pub decay_length: Option<f64>,
    pub half_width: Option<f64>,
    pub turbulence_intensity: Option<f64>,
    pub noise_correlation_time: Option<f64>,
    pub turbulence_ramp: Option<f64>,
}

impl Default for WindSection {
    fn default() -> Self {
        Self {
            preset: WindPreset::None.name().to_string(),
            position: None,
            axis: None,
            core_speed: None,
            decay_length: None,
            half_width: None,
            turbulence_intensity: None,
            noise_correlation_time: None,
            turbulence_ramp: None,
        }
    }
}

impl WindSection {
    pub fn preset(&self) -> Result<WindPreset> {
        WindPreset::parse(&self.preset)
            .ok_or_else(|| BlimpError::Config(format!("unknown wind preset '{}'", self.preset)))
    }

    fn has_overrides(&self) -> bool {
        self.position.is_some()
            || self.axis.is_some()
            || self.core_speed.is_some()
            || self.decay_length.is_some()
            || self.half_width.is_some()
            || self.turbulence_intensity.is_some()
            || self.noise_correlation_time.is_some()
            || self.turbulence_ramp.is_some()
    }

    /// The fan for this episode, with turbulence seeded by `seed`.
    pub fn fan(&self, seed: u64) -> Result<Option<FanConfig>> {
        let Some(mut fan) = self.preset()?.fan(seed) else {
            if self.has_overrides() {
                return Err(BlimpError::Config("wind overrides need a preset other than 'none'".into()));
            }
            return Ok(None);
        };
        if let Some(v) = self.position {
            fan.position = v;
        }
        if let Some(v) = self.axis {
            fan.axis = v;
        }
        if let Some(v) = self.core_speed {
            fan.core_speed = v;
        }
        if let Some(v) = self.decay_length {
            fan.decay_length = v;
        }
        if let Some(v) = self.half_width {
            fan.half_width = v;
        }
        if let Some(v) = self.turbulence_intensity {
            fan.turbulence_intensity = v;
        }
        if let Some(v) = self.noise_correlation_time {
            fan.noise_correlation_time = v;
        }
        if let Some(v) = self.turbulence_ramp {
            fan.turbulence_ramp = v;
        }
        fan.validate().map_err(|e| BlimpError::Config(format!("wind: {e}")))?;
        Ok(Some(fan))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub position_m: [f64; 3],
    pub attitude_rad: [f64; 3],
    pub velocity_mps: [f64; 3],
    pub rates_radps: [f64; 3],
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { position_m: [0.0, 0.0, 1.5], attitude_rad: [0.0; 3], velocity_mps: [0.0; 3], rates_radps: [0.0; 3] }
    }
}

impl InitialSection {
    pub fn state(&self) -> State {
        State {
            p: Vector3::from(self.position_m),
            e: Vector3::from(self.attitude_rad),
            v_b: Vector3::from(self.velocity_mps),
            w_b: Vector3::from(self.rates_radps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaunchSection {
    pub thrust_gf: f64,
    pub duration_s: f64,
}

impl Default for LaunchSection {
    fn default() -> Self {
        Self { thrust_gf: 10.0, duration_s: 0.5 }
    }
}

impl LaunchSection {
    pub fn input(&self) -> ControlInput {
        ControlInput::new(gf_to_newtons(self.thrust_gf), 0.0, 0.0)
    }
}

/// Deviations of the simulated vehicle from the controller's model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthSection {
    pub stationary_com_offset_mm: [f64; 3],
    pub roll_bias: f64,
    pub yaw_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    pub position_std_mm: f64,
    pub attitude_std_deg: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        Self { position_std_mm: 0.8, attitude_std_deg: 0.2 }
    }
}

impl SensorSection {
    pub fn noise(&self) -> MeasurementNoise {
        MeasurementNoise {
            position_std: mm_to_m(self.position_std_mm),
            attitude_std: self.attitude_std_deg.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSection {
    pub forward_m: f64,
    pub lateral_m: f64,
    pub altitude_m: f64,
    pub yaw_rad: f64,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        Self { forward_m: 0.0, lateral_m: 0.0, altitude_m: 1.5, yaw_rad: 0.0 }
    }
}

impl ReferenceSection {
    pub fn reference(&self) -> Reference {
        Reference {
            position: Vector3::new(self.forward_m, self.lateral_m, self.altitude_m),
            yaw: self.yaw_rad,
            body_rates: Vector3::zeros(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Plant parameter file; defaults are used when absent.
    pub plant: Option<PathBuf>,
    pub duration_s: f64,
    pub seed: u64,
    pub arm: Arm,
    /// Control and measurement period, s.
    pub tick_s: f64,
    /// Truth integration steps per tick.
    pub substeps: usize,
    pub corridor_end_m: f64,
    pub lateral_limit_m: f64,
    pub wind: WindSection,
    pub initial: InitialSection,
    pub launch: LaunchSection,
    pub truth: TruthSection,
    pub sensor: SensorSection,
    pub reference: ReferenceSection,
    pub pid: PidGains,
    pub mhe: MheConfig,
    pub mpc: MpcConfig,
    /// Parameters loaded from `plant`, or the defaults.
    #[serde(skip)]
    pub plant_params: PlantConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            plant: None,
            duration_s: 15.0,
            seed: 0,
            arm: Arm::MheMpc,
            tick_s: 0.025,
            substeps: 5,
            corridor_end_m: 6.0,
            lateral_limit_m: 2.0,
            wind: WindSection::default(),
            initial: InitialSection::default(),
            launch: LaunchSection::default(),
            truth: TruthSection::default(),
            sensor: SensorSection::default(),
            reference: ReferenceSection::default(),
            pid: PidGains::default(),
            mhe: MheConfig::default(),
            mpc: MpcConfig::default(),
            plant_params: PlantConfig::default(),
        }
    }
}

impl Scenario {
    /// Built-in scenario flying through one of the wind presets.
    pub fn preset(preset: WindPreset) -> Self {
        Self {
            name: preset.name().to_string(),
            wind: WindSection { preset: preset.name().to_string(), ..WindSection::default() },
            ..Self::default()
        }
    }

    /// Parses scenario text; a relative plant path is resolved against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut scenario: Scenario =
            toml::from_str(text).map_err(|e| BlimpError::Config(format!("scenario: {e}")))?;
        if let Some(path) = &scenario.plant {
            let resolved = match base {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.clone(),
            };
            scenario.plant_params = PlantConfig::load(&resolved)?;
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BlimpError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration_s", self.duration_s),
            ("tick_s", self.tick_s),
            ("corridor_end_m", self.corridor_end_m),
            ("lateral_limit_m", self.lateral_limit_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(BlimpError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.substeps == 0 {
            return Err(BlimpError::Config("substeps must be at least 1".into()));
        }
        if !(self.launch.duration_s >= 0.0) {
            return Err(BlimpError::Config("launch duration must be non-negative".into()));
        }
        let limits = InputLimits::default();
        let launch = self.launch.input();
        if !limits.contains(&launch) {
            return Err(BlimpError::Config(format!("launch thrust {} gf outside the input box", self.launch.thrust_gf)));
        }
        if self.sensor.position_std_mm < 0.0 || self.sensor.attitude_std_deg < 0.0 {
            return Err(BlimpError::Config("sensor noise must be non-negative".into()));
        }
        if (self.mpc.dt - self.tick_s).abs() > 1e-12 {
            return Err(BlimpError::Config(format!(
                "mpc.dt ({}) must equal tick_s ({})",
                self.mpc.dt, self.tick_s
            )));
        }
        if !self.initial.state().is_finite() {
            return Err(BlimpError::Config("initial state must be finite".into()));
        }
        self.wind.fan(self.seed)?;
        self.pid.validate(&limits).map_err(config_error("pid"))?;
        self.mhe.validate().map_err(config_error("mhe"))?;
        self.mpc.validate().map_err(config_error("mpc"))?;
        self.model_plant()?;
        self.truth_plant()?;
        Ok(())
    }

    /// The plant the estimator and controller believe in.
    pub fn model_plant(&self) -> Result<Plant> {
        self.plant_params.to_plant()
    }

    /// The simulated vehicle: the model plus the `[truth]` perturbations.
    pub fn truth_plant(&self) -> Result<Plant> {
        let mut plant = self.model_plant()?;
        let offset = Vector3::from(self.truth.stationary_com_offset_mm) * 1e-3;
        plant.inertial.stationary_com += offset;
        plant.aero.roll_bias += self.truth.roll_bias;
        plant.aero.yaw_bias += self.truth.yaw_bias;
        plant.validate(InputLimits::default().deflection).map_err(config_error("truth"))?;
        Ok(plant)
    }

    /// Hex SHA-256 over the resolved scenario and plant parameters.
    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        hasher.update(self.plant_params.to_toml().as_bytes());
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn config_error(section: &'static str) -> impl Fn(BlimpError) -> BlimpError {
    move |e| match e {
        BlimpError::Config(_) => e,
        other => BlimpError::Config(format!("{section}: {other}")),
    }
}

/// SplitMix64 mix used to derive independent stream seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let s = Scenario::default();
        s.validate().unwrap();
        let back = Scenario::from_toml(&s.to_toml(), None).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let s = Scenario::from_toml("seed = 4\n[wind]\npreset = \"headwind_light\"\n", None).unwrap();
        assert_eq!(s.seed, 4);
        assert_eq!(s.wind.preset().unwrap(), WindPreset::HeadwindLight);
        assert_eq!(s.launch.thrust_gf, 10.0);
        assert_eq!(s.mpc, MpcConfig::default());
    }

    #[test]
    fn rejects_bad_files() {
        for text in [
            "bogus = 1",
            "duration_s = -1.0",
            "arm = \"lqr\"",
            "[wind]\npreset = \"gale\"",
            "[wind]\nhalf_width = 0.5",
            "[wind]\npreset = \"headwind_light\"\nhalf_width = -0.5",
            "[launch]\nthrust_gf = 40.0",
            "[mpc]\ndt = 0.05",
            "[mhe]\nwind_weights = [-1.0, 1.0, 1.0]",
            "[pid]\nintegrator_limit = 0.5",
        ] {
            assert!(matches!(Scenario::from_toml(text, None), Err(BlimpError::Config(_))), "{text}");
        }
    }

    #[test]
    fn wind_overrides_apply() {
        let s = Scenario::from_toml("[wind]\npreset = \"crosswind_strong\"\nhalf_width = 0.4\n", None).unwrap();
        assert_eq!(s.wind.fan(0).unwrap().unwrap().half_width, 0.4);
    }

    #[test]
    fn truth_offset_only_touches_truth() {
        let s = Scenario {
            truth: TruthSection { stationary_com_offset_mm: [0.0, 2.0, 0.0], ..TruthSection::default() },
            ..Scenario::default()
        };
        let model = s.model_plant().unwrap();
        let truth = s.truth_plant().unwrap();
        assert!((truth.inertial.stationary_com.y - model.inertial.stationary_com.y - 0.002).abs() < 1e-15);
    }

    #[test]
    fn hash_tracks_content() {
        let a = Scenario::default();
        let b = Scenario { seed: 1, ..Scenario::default() };
        assert_eq!(a.config_hash(), Scenario::default().config_hash());
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn arm_names_round_trip() {
        for arm in Arm::ALL {
            assert_eq!(arm.name().parse::<Arm>().unwrap(), arm);
        }
        assert!("mpc".parse::<Arm>().is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 100);
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
