//! Plant parameter files.
//!
//! Plain TOML. Masses are given in grams (gram-force equivalent), buoyancy
//! and thrust in gram-force, lengths in millimetres; everything else is SI.
//! Missing keys fall back to the documented defaults below.
//!
//! ```toml
//! [mass]
//! stationary_g = 108.7
//! moving_g = 92.2
//! buoyancy_gf = 194.2
//! inertia_kgm2 = [0.004, 0.008, 0.009]     # diagonal
//! inertia_products_kgm2 = [0.0, 0.0, 0.0]  # Ixy, Ixz, Iyz
//! stationary_com_mm = [0.0, 0.0, 10.0]
//!
//! [environment]
//! gravity = 9.80665
//! air_density = 1.225
//! reference_area_m2 = 0.4
//!
//! [geometry]
//! backbone_length_mm = 150.0
//! cable_offset_mm = 45.0
//! base_offset_mm = 50.0
//!
//! [aero]
//! lift0 = 0.25
//! # ... see AeroModel
//! ```

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::continuum::{ContinuumGeometry, DEFLECTION_LIMIT};
use crate::dynamics::{AeroModel, InertialParams, Plant};
use crate::error::{BlimpError, Result};
use crate::units::{gf_to_newtons, grams_to_kg, mm_to_m, STANDARD_GRAVITY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassSection {
    pub stationary_g: f64,
    pub moving_g: f64,
    pub buoyancy_gf: f64,
    pub inertia_kgm2: [f64; 3],
    pub inertia_products_kgm2: [f64; 3],
    pub stationary_com_mm: [f64; 3],
}

impl Default for MassSection {
    fn default() -> Self {
        Self {
            stationary_g: 108.7,
            moving_g: 92.2,
            buoyancy_gf: 194.2,
            // Not published for the prototype; sized for a ~1 m envelope.
            inertia_kgm2: [0.004, 0.008, 0.009],
            inertia_products_kgm2: [0.0; 3],
            stationary_com_mm: [0.0, 0.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSection {
    pub gravity: f64,
    pub air_density: f64,
    pub reference_area_m2: f64,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        Self { gravity: STANDARD_GRAVITY, air_density: 1.225, reference_area_m2: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub backbone_length_mm: f64,
    pub cable_offset_mm: f64,
    pub base_offset_mm: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        // Assumed values; the arc stays below a quarter turn over ±45 mm.
        Self { backbone_length_mm: 150.0, cable_offset_mm: 45.0, base_offset_mm: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub mass: MassSection,
    pub environment: EnvironmentSection,
    pub geometry: GeometrySection,
    pub aero: AeroModel,
}

impl PlantConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BlimpError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BlimpError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plant config serializes")
    }

    /// Converts to SI and validates.
    pub fn to_plant(&self) -> Result<Plant> {
        let m = &self.mass;
        let [ixx, iyy, izz] = m.inertia_kgm2;
        let [ixy, ixz, iyz] = m.inertia_products_kgm2;
        let inertial = InertialParams {
            mass: grams_to_kg(m.stationary_g),
            moving_mass: grams_to_kg(m.moving_g),
            buoyancy: gf_to_newtons(m.buoyancy_gf) * self.environment.gravity / STANDARD_GRAVITY,
            gravity: self.environment.gravity,
            inertia: Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz),
            stationary_com: Vector3::from(m.stationary_com_mm) * 1e-3,
            air_density: self.environment.air_density,
            reference_area: self.environment.reference_area_m2,
        };
        let geometry = ContinuumGeometry {
            backbone_length: mm_to_m(self.geometry.backbone_length_mm),
            cable_offset: mm_to_m(self.geometry.cable_offset_mm),
            base_offset: mm_to_m(self.geometry.base_offset_mm),
        };
        let plant = Plant { inertial, geometry, aero: self.aero };
        plant.validate(DEFLECTION_LIMIT).map_err(|e| BlimpError::Config(e.to_string()))?;
        Ok(plant)
    }
}
