//! Physical scenario definition: geometry, channel constants, rotor constants
//! and protocol parameters, plus loading/validation of scenario files.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A point in the horizontal plane. The x/y coordinates map onto the real and
/// imaginary parts of a complex number where phase arithmetic is convenient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }

    pub fn from_complex(c: Complex64) -> Self {
        Self { x: c.re, y: c.im }
    }

    /// Euclidean distance to another planar point.
    pub fn dist(&self, other: &PlanarPoint) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Rotary-wing propulsion-model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorParams {
    /// Blade profile power in hovering status (W).
    pub p0_hover_blade_power: f64,
    /// Induced power in hovering status (W).
    pub p_induced_hover: f64,
    /// Tip speed of the rotor blade (m/s).
    pub tip_speed: f64,
    /// Mean rotor induced velocity in hover (m/s).
    pub mean_induced_velocity: f64,
    /// Fuselage drag ratio.
    pub fuselage_drag_ratio: f64,
    /// Air density (kg/m^3).
    pub air_density: f64,
    /// Rotor solidity.
    pub rotor_solidity: f64,
    /// Rotor disc area (m^2).
    pub rotor_disc_area: f64,
}

impl Default for RotorParams {
    fn default() -> Self {
        Self {
            p0_hover_blade_power: 79.8563,
            p_induced_hover: 88.6279,
            tip_speed: 120.0,
            mean_induced_velocity: 4.03,
            fuselage_drag_ratio: 0.6,
            air_density: 1.225,
            rotor_solidity: 0.05,
            rotor_disc_area: 0.503,
        }
    }
}

/// Large-scale and small-scale channel constants shared by all links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Linear channel gain at the 1 m reference distance.
    pub beta0_ref_gain: f64,
    /// Path-loss exponent of the UAV-RIS link.
    pub pathloss_uav_ris: f64,
    /// Path-loss exponent of the RIS-sensor links.
    pub pathloss_ris_sensor: f64,
    /// Path-loss exponent of the direct UAV-sensor links.
    pub pathloss_direct: f64,
    /// Rician factor of the UAV-RIS link (linear).
    pub rician_uav_ris: f64,
    /// Rician factor of the RIS-sensor links (linear).
    pub rician_ris_sensor: f64,
    /// Rician factor of the direct links (linear).
    pub rician_direct: f64,
    /// Carrier wavelength (m).
    pub wavelength: f64,
    /// RIS element spacing (m).
    pub element_spacing: f64,
    /// Evaluate the AoD cosine relative to the UAV x-coordinate instead of
    /// the RIS x-coordinate. Off by default; the RIS-sensor link geometry is
    /// fixed, so the RIS-relative cosine is used unless this is set.
    #[serde(default)]
    pub aod_relative_to_uav: bool,
    /// Suppress all NLoS components (deterministic channel draws).
    #[serde(default)]
    pub los_only: bool,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            beta0_ref_gain: 1e-3,
            pathloss_uav_ris: 2.2,
            pathloss_ris_sensor: 2.2,
            pathloss_direct: 2.6,
            rician_uav_ris: 10.0,
            rician_ris_sensor: 10.0,
            rician_direct: 10.0,
            wavelength: 1.0,
            element_spacing: 0.5,
            aod_relative_to_uav: false,
            los_only: false,
        }
    }
}

/// Radiated power as written in a scenario file: either plain watts or a
/// string with an explicit unit suffix ("40 dBm", "10 W").
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PowerField {
    Watts(f64),
    WithUnit(String),
}

fn deserialize_power<'de, D>(de: D) -> Result<f64, D::Error>
where
    D: serde::Deserializer<'de>,
{
    use serde::de::Error;
    match PowerField::deserialize(de)? {
        PowerField::Watts(w) => Ok(w),
        PowerField::WithUnit(s) => parse_power(&s).map_err(D::Error::custom),
    }
}

/// Parse a power value with unit suffix into watts.
pub fn parse_power(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Some(v) = s.strip_suffix("dBm") {
        let dbm: f64 = v
            .trim()
            .parse()
            .map_err(|e| format!("invalid dBm value {s:?}: {e}"))?;
        Ok(10f64.powf((dbm - 30.0) / 10.0))
    } else if let Some(v) = s.strip_suffix('W') {
        v.trim()
            .parse()
            .map_err(|e| format!("invalid watt value {s:?}: {e}"))
    } else {
        Err(format!("power {s:?} must end in 'W' or 'dBm'"))
    }
}

/// Full physical setup of one mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Sensor plane coordinates (m).
    pub sensors: Vec<PlanarPoint>,
    /// Per-sensor required harvested energy (J).
    pub sensor_energy_req: Vec<f64>,
    /// RIS plane coordinates (m).
    pub ris_position: PlanarPoint,
    /// RIS altitude (m).
    pub ris_height: f64,
    /// Number of RIS reflecting elements.
    pub ris_elements: usize,
    /// UAV flight altitude (m).
    pub uav_height: f64,
    /// UAV maximum speed (m/s).
    pub uav_max_speed: f64,
    /// UAV radiated power (W); scenario files may also give "40 dBm".
    #[serde(deserialize_with = "deserialize_power")]
    pub radiated_power: f64,
    /// Mission start point (m).
    pub start: PlanarPoint,
    /// Mission finish point (m).
    pub finish: PlanarPoint,
    /// Sensor energy conversion efficiency, in (0, 1].
    pub conversion_efficiency: f64,
    /// Maximum path-segment length under path discretization (m).
    pub max_segment_length: f64,
    pub rotor: RotorParams,
    pub channel: ChannelParams,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("failed to read scenario file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Validation(String),
}

impl ScenarioConfig {
    /// Number of sensors.
    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    /// Check every structural invariant, returning the first violation.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Validation(msg));
        if self.sensors.is_empty() {
            return fail("at least one sensor required".into());
        }
        if self.sensor_energy_req.len() != self.sensors.len() {
            return fail(format!(
                "sensor_energy_req has {} entries for {} sensors",
                self.sensor_energy_req.len(),
                self.sensors.len()
            ));
        }
        for (k, e) in self.sensor_energy_req.iter().enumerate() {
            if *e <= 0.0 || e.is_nan() {
                return fail(format!("sensor_energy_req[{k}] must be > 0, got {e}"));
            }
        }
        for (k, s) in self.sensors.iter().enumerate() {
            if !s.is_finite() {
                return fail(format!("sensor {k} has non-finite coordinates"));
            }
        }
        if !self.ris_position.is_finite() || !self.start.is_finite() || !self.finish.is_finite() {
            return fail("ris_position/start/finish must be finite".into());
        }
        if self.ris_height <= 0.0 || self.ris_height.is_nan() {
            return fail(format!("ris_height must be > 0, got {}", self.ris_height));
        }
        if self.uav_height <= self.ris_height || self.uav_height.is_nan() {
            return fail(format!(
                "uav_height ({}) must exceed ris_height ({})",
                self.uav_height, self.ris_height
            ));
        }
        if self.uav_max_speed <= 0.0 || self.uav_max_speed.is_nan() {
            return fail("uav_max_speed must be > 0".into());
        }
        if self.radiated_power < 0.0 || self.radiated_power.is_nan() {
            return fail("radiated_power must be >= 0".into());
        }
        if !(self.conversion_efficiency > 0.0 && self.conversion_efficiency <= 1.0) {
            return fail(format!(
                "conversion_efficiency out of (0,1]: {}",
                self.conversion_efficiency
            ));
        }
        if self.max_segment_length <= 0.0 || self.max_segment_length.is_nan() {
            return fail("max_segment_length must be > 0".into());
        }
        let r = &self.rotor;
        for (name, v) in [
            ("p0_hover_blade_power", r.p0_hover_blade_power),
            ("p_induced_hover", r.p_induced_hover),
            ("tip_speed", r.tip_speed),
            ("mean_induced_velocity", r.mean_induced_velocity),
            ("fuselage_drag_ratio", r.fuselage_drag_ratio),
            ("air_density", r.air_density),
            ("rotor_solidity", r.rotor_solidity),
            ("rotor_disc_area", r.rotor_disc_area),
        ] {
            if v <= 0.0 || v.is_nan() {
                return fail(format!("rotor.{name} must be > 0, got {v}"));
            }
        }
        let c = &self.channel;
        if c.beta0_ref_gain <= 0.0 || c.beta0_ref_gain.is_nan() {
            return fail("channel.beta0_ref_gain must be > 0".into());
        }
        for (name, v) in [
            ("pathloss_uav_ris", c.pathloss_uav_ris),
            ("pathloss_ris_sensor", c.pathloss_ris_sensor),
            ("pathloss_direct", c.pathloss_direct),
        ] {
            if v < 2.0 || v.is_nan() {
                return fail(format!("channel.{name} must be >= 2, got {v}"));
            }
        }
        for (name, v) in [
            ("rician_uav_ris", c.rician_uav_ris),
            ("rician_ris_sensor", c.rician_ris_sensor),
            ("rician_direct", c.rician_direct),
        ] {
            if v < 0.0 || v.is_nan() {
                return fail(format!("channel.{name} must be >= 0, got {v}"));
            }
        }
        if c.wavelength <= 0.0 || c.wavelength.is_nan() {
            return fail("channel.wavelength must be > 0".into());
        }
        if c.element_spacing <= 0.0 || c.element_spacing.is_nan() {
            return fail("channel.element_spacing must be > 0".into());
        }
        Ok(())
    }

    /// Serialize to the scenario file format.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serialization cannot fail")
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_toml()).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Load and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let cfg: ScenarioConfig = toml::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Five-sensor semicircular layout: the semicircle (upper half-plane) is cut
/// into four equal sectors by five radii; sensors 1-4 sit on the circle at
/// 180/135/90/45 degrees and sensor 5 at the midpoint of the 0-degree radius.
pub fn semicircle_layout(radius: f64, num_sensors: usize) -> Result<Vec<PlanarPoint>, ScenarioError> {
    if num_sensors != 5 {
        return Err(ScenarioError::Validation(format!(
            "semicircle layout is defined for 5 sensors, got {num_sensors}"
        )));
    }
    let mut pts = Vec::with_capacity(5);
    for deg in [180.0f64, 135.0, 90.0, 45.0] {
        let a = deg.to_radians();
        pts.push(PlanarPoint::new(radius * a.cos(), radius * a.sin()));
    }
    pts.push(PlanarPoint::new(radius / 2.0, 0.0));
    Ok(pts)
}

/// The reference five-sensor scenario used throughout the test suite.
pub fn default_scenario() -> ScenarioConfig {
    let sensors = semicircle_layout(30.0, 5).expect("fixed layout");
    let cfg = ScenarioConfig {
        sensor_energy_req: vec![2.0e-4; sensors.len()],
        sensors,
        ris_position: PlanarPoint::new(0.0, 0.0),
        ris_height: 10.0,
        ris_elements: 8,
        uav_height: 20.0,
        uav_max_speed: 30.0,
        radiated_power: 10.0, // 40 dBm
        start: PlanarPoint::new(-35.0, 0.0),
        finish: PlanarPoint::new(35.0, 0.0),
        conversion_efficiency: 0.6,
        max_segment_length: 0.5,
        rotor: RotorParams::default(),
        channel: ChannelParams::default(),
    };
    cfg.validate().expect("default scenario is valid");
    cfg
}
