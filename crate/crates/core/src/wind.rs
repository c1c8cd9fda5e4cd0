//! Synthetic fan-driven wind: a one-sided jet with exponential axial decay
//! and a Gaussian cross-section, plus low-pass filtered Gaussian turbulence.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{BlimpError, Result};

/// Fan mouth speed of the reference fan, m/s.
pub const FAN_MOUTH_SPEED: f64 = 1.5;
/// Distance from the fan at which scenario intensities are quoted, m.
pub const REFERENCE_DISTANCE: f64 = 2.0;
/// Height of the fans and the nominal flight altitude, m.
pub const FAN_HEIGHT: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanConfig {
    pub position: [f64; 3],
    /// Jet direction; normalised on use.
    pub axis: [f64; 3],
    pub core_speed: f64,
    pub decay_length: f64,
    pub half_width: f64,
    /// Turbulence standard deviation as a fraction of the local mean speed.
    pub turbulence_intensity: f64,
    pub noise_correlation_time: f64,
    /// Downstream distance over which turbulence ramps up from zero, m.
    #[serde(default = "default_ramp")]
    pub turbulence_ramp: f64,
    pub seed: u64,
}

fn default_ramp() -> f64 {
    REFERENCE_DISTANCE
}

impl FanConfig {
    pub fn validate(&self) -> Result<()> {
        let axis = Vector3::from(self.axis);
        if !(axis.norm() > 0.0) || self.position.iter().any(|v| !v.is_finite()) {
            return Err(BlimpError::Config("fan axis must be non-zero and position finite".into()));
        }
        if !(self.core_speed >= 0.0) {
            return Err(BlimpError::Config("core_speed must be >= 0".into()));
        }
        if !(self.decay_length > 0.0 && self.half_width > 0.0) {
            return Err(BlimpError::Config("decay_length and half_width must be > 0".into()));
        }
        if !(self.turbulence_intensity >= 0.0
            && self.noise_correlation_time > 0.0
            && self.turbulence_ramp > 0.0)
        {
            return Err(BlimpError::Config("invalid turbulence parameters".into()));
        }
        Ok(())
    }

    fn unit_axis(&self) -> Vector3<f64> {
        Vector3::from(self.axis).normalize()
    }

    /// Axial (downstream) and radial distance of `point` from the jet.
    fn jet_coordinates(&self, point: &Vector3<f64>) -> (f64, f64) {
        let axis = self.unit_axis();
        let rel = point - Vector3::from(self.position);
        let axial = rel.dot(&axis);
        let radial = (rel - axis * axial).norm();
        (axial, radial)
    }
}

/// Decay length that brings `core_speed` down to `reference_speed` at
/// `reference_distance` on the jet axis.
pub fn calibrate_decay_length(core_speed: f64, reference_speed: f64, reference_distance: f64) -> f64 {
    reference_distance / (core_speed / reference_speed).ln()
}

pub fn mean_wind(fan: &FanConfig, point: &Vector3<f64>) -> Vector3<f64> {
    let (axial, radial) = fan.jet_coordinates(point);
    if axial < 0.0 {
        return Vector3::zeros();
    }
    let speed = fan.core_speed
        * (-axial / fan.decay_length).exp()
        * (-radial * radial / (2.0 * fan.half_width * fan.half_width)).exp();
    fan.unit_axis() * speed
}

/// Turbulence standard deviation at `point`.
pub fn turbulence_sigma(fan: &FanConfig, point: &Vector3<f64>) -> f64 {
    let (axial, _) = fan.jet_coordinates(point);
    let ramp = (axial / fan.turbulence_ramp).clamp(0.0, 1.0);
    fan.turbulence_intensity * ramp * mean_wind(fan, point).norm()
}

/// Per-episode state of the turbulence process: one unit-variance
/// Ornstein–Uhlenbeck process per axis.
#[derive(Debug, Clone)]
pub struct WindNoise {
    rng: ChaCha8Rng,
    value: Vector3<f64>,
    last_t: Option<f64>,
}

impl WindNoise {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let value = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
        Self { rng, value, last_t: None }
    }

    fn advance(&mut self, t: f64, correlation_time: f64) -> Result<Vector3<f64>> {
        if let Some(last) = self.last_t {
            if t < last {
                return Err(BlimpError::InvalidParameter(format!(
                    "wind sampled at t = {t} after t = {last}"
                )));
            }
            let dt = t - last;
            if dt > 0.0 {
                let a = (-dt / correlation_time).exp();
                let b = (1.0 - a * a).sqrt();
                for i in 0..3 {
                    let xi: f64 = StandardNormal.sample(&mut self.rng);
                    self.value[i] = a * self.value[i] + b * xi;
                }
            }
        }
        self.last_t = Some(t);
        Ok(self.value)
    }
}

pub fn sample_wind(
    fan: &FanConfig,
    point: &Vector3<f64>,
    t: f64,
    noise: &mut WindNoise,
) -> Result<Vector3<f64>> {
    let mean = mean_wind(fan, point);
    let n = noise.advance(t, fan.noise_correlation_time)?;
    if fan.turbulence_intensity == 0.0 {
        return Ok(mean);
    }
    Ok(mean + n * turbulence_sigma(fan, point))
}

/// A wind field that can be empty (no fan).
#[derive(Debug, Clone)]
pub struct WindField {
    fan: Option<FanConfig>,
    noise: WindNoise,
}

impl WindField {
    pub fn new(fan: Option<FanConfig>) -> Self {
        let seed = fan.map(|f| f.seed).unwrap_or(0);
        Self { fan, noise: WindNoise::new(seed) }
    }

    pub fn fan(&self) -> Option<&FanConfig> {
        self.fan.as_ref()
    }

    pub fn mean(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.fan.as_ref().map_or_else(Vector3::zeros, |f| mean_wind(f, point))
    }

    pub fn sample(&mut self, point: &Vector3<f64>, t: f64) -> Result<Vector3<f64>> {
        match &self.fan {
            Some(f) => sample_wind(f, point, t, &mut self.noise),
            None => Ok(Vector3::zeros()),
        }
    }
}

/// Named fan set-ups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindPreset {
    None,
    HeadwindLight,
    HeadwindStrong,
    CrosswindLight,
    CrosswindStrong,
}

impl WindPreset {
    pub const ALL: [WindPreset; 5] = [
        WindPreset::None,
        WindPreset::HeadwindLight,
        WindPreset::HeadwindStrong,
        WindPreset::CrosswindLight,
        WindPreset::CrosswindStrong,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            WindPreset::None => "none",
            WindPreset::HeadwindLight => "headwind_light",
            WindPreset::HeadwindStrong => "headwind_strong",
            WindPreset::CrosswindLight => "crosswind_light",
            WindPreset::CrosswindStrong => "crosswind_strong",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Mean speed at the reference point 2 m in front of the fan, m/s.
    pub fn reference_speed(&self) -> f64 {
        match self {
            WindPreset::None => 0.0,
            WindPreset::HeadwindLight | WindPreset::CrosswindLight => 0.5,
            WindPreset::HeadwindStrong | WindPreset::CrosswindStrong => 1.0,
        }
    }

    pub fn fan(&self, seed: u64) -> Option<FanConfig> {
        let (position, axis) = match self {
            WindPreset::None => return None,
            WindPreset::HeadwindLight | WindPreset::HeadwindStrong => {
                ([6.0, 0.0, FAN_HEIGHT], [-1.0, 0.0, 0.0])
            }
            WindPreset::CrosswindLight | WindPreset::CrosswindStrong => {
                ([3.0, -2.0, FAN_HEIGHT], [0.0, 1.0, 0.0])
            }
        };
        // Fan throttled so that the quoted speed is reached at the reference
        // point; the mouth-to-reference ratio of the full-power fan is kept.
        let reference = self.reference_speed();
        let core_speed = FAN_MOUTH_SPEED * reference;
        Some(FanConfig {
            position,
            axis,
            core_speed,
            decay_length: calibrate_decay_length(FAN_MOUTH_SPEED, 1.0, REFERENCE_DISTANCE),
            half_width: 0.7,
            turbulence_intensity: 0.1,
            noise_correlation_time: 0.5,
            turbulence_ramp: REFERENCE_DISTANCE,
            seed,
        })
    }
}
