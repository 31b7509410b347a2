//! Deterministic channel statistics (distances, large-scale gains, the
//! phase-offset vector) and random Rician channel draws for Monte-Carlo
//! validation.

use crate::scenario::{PlanarPoint, ScenarioConfig};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::TAU;

/// Distances and array-steering cosines of one UAV position / sensor pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    /// UAV-RIS distance (m).
    pub dist_uav_ris: f64,
    /// RIS-sensor distance (m).
    pub dist_ris_sensor: f64,
    /// UAV-sensor distance (m).
    pub dist_uav_sensor: f64,
    /// Cosine of the angle of arrival at the RIS.
    pub cos_aoa: f64,
    /// Cosine of the angle of departure from the RIS.
    pub cos_aod: f64,
}

/// Large-scale gains of the three links.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LargeScaleGains {
    pub beta_t: f64,
    pub beta_r: f64,
    pub beta_d: f64,
}

/// The vector of per-element phase offsets that the reflected LoS paths
/// accumulate relative to the direct path. Entries are exp(-j psi_m); angles
/// are stored so the unit modulus is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOffsetVector {
    /// Angles psi_m in radians.
    pub angles: Vec<f64>,
}

impl PhaseOffsetVector {
    /// Complex entries exp(-j psi_m).
    pub fn entries(&self) -> Vec<Complex64> {
        self.angles
            .iter()
            .map(|&a| Complex64::from_polar(1.0, -a))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// One random draw of the three fading channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Direct UAV-sensor channel.
    pub g_direct: Complex64,
    /// UAV-RIS channel, one entry per RIS element.
    pub g_uav_ris: Vec<Complex64>,
    /// RIS-sensor channel, one entry per RIS element.
    pub g_ris_sensor: Vec<Complex64>,
}

/// Distances and steering cosines for the given UAV position and sensor.
pub fn link_geometry(
    q_uav: PlanarPoint,
    sensor_index: usize,
    cfg: &ScenarioConfig,
) -> LinkGeometry {
    let sensor = cfg.sensors[sensor_index];
    let ris = cfg.ris_position;
    let dh = cfg.uav_height - cfg.ris_height;
    let dist_uav_ris = (q_uav.dist(&ris).powi(2) + dh * dh).sqrt();
    let dist_ris_sensor = (sensor.dist(&ris).powi(2) + cfg.ris_height.powi(2)).sqrt();
    let dist_uav_sensor = (q_uav.dist(&sensor).powi(2) + cfg.uav_height.powi(2)).sqrt();
    let cos_aoa = (ris.x - q_uav.x) / dist_uav_ris;
    let aod_ref_x = if cfg.channel.aod_relative_to_uav {
        q_uav.x
    } else {
        ris.x
    };
    let cos_aod = (sensor.x - aod_ref_x) / dist_ris_sensor;
    LinkGeometry {
        dist_uav_ris,
        dist_ris_sensor,
        dist_uav_sensor,
        cos_aoa,
        cos_aod,
    }
}

/// Large-scale gains beta = beta0 / d^alpha for each link.
pub fn large_scale_gains(geometry: &LinkGeometry, cfg: &ScenarioConfig) -> LargeScaleGains {
    let c = &cfg.channel;
    LargeScaleGains {
        beta_t: c.beta0_ref_gain / geometry.dist_uav_ris.powf(c.pathloss_uav_ris),
        beta_r: c.beta0_ref_gain / geometry.dist_ris_sensor.powf(c.pathloss_ris_sensor),
        beta_d: c.beta0_ref_gain / geometry.dist_uav_sensor.powf(c.pathloss_direct),
    }
}

/// Phase-offset vector of the reflected LoS path relative to the direct path:
/// psi_m = (2 pi / lambda) ((d_d + d_r - d_t) + d (cos aod - cos aoa)(m - 1)).
pub fn psi_vector(geometry: &LinkGeometry, cfg: &ScenarioConfig) -> PhaseOffsetVector {
    let c = &cfg.channel;
    let base = geometry.dist_uav_sensor + geometry.dist_ris_sensor - geometry.dist_uav_ris;
    let step = c.element_spacing * (geometry.cos_aod - geometry.cos_aoa);
    let scale = TAU / c.wavelength;
    let angles = (0..cfg.ris_elements)
        .map(|m| scale * (base + step * m as f64))
        .collect();
    PhaseOffsetVector { angles }
}

fn steering(dist: f64, cos_angle: f64, m: usize, cfg: &ScenarioConfig) -> Vec<Complex64> {
    let c = &cfg.channel;
    (0..m)
        .map(|i| {
            let phase = -TAU / c.wavelength * (dist + c.element_spacing * cos_angle * i as f64);
            Complex64::from_polar(1.0, phase)
        })
        .collect()
}

fn draw_cscg<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    // unit variance overall: 1/2 per real and imaginary part
    let n = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).unwrap();
    Complex64::new(n.sample(rng), n.sample(rng))
}

/// Draw one Rician realization of all three channels at the given position.
pub fn sample_realization<R: Rng + ?Sized>(
    q_uav: PlanarPoint,
    sensor_index: usize,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> ChannelRealization {
    let geo = link_geometry(q_uav, sensor_index, cfg);
    let gains = large_scale_gains(&geo, cfg);
    let c = &cfg.channel;
    let m = cfg.ris_elements;

    let mix = |kappa: f64| -> (f64, f64) {
        if c.los_only {
            (1.0, 0.0)
        } else {
            ((kappa / (kappa + 1.0)).sqrt(), (1.0 / (kappa + 1.0)).sqrt())
        }
    };
    let (wt_los, wt_nlos) = mix(c.rician_uav_ris);
    let (wr_los, wr_nlos) = mix(c.rician_ris_sensor);
    let (wd_los, wd_nlos) = mix(c.rician_direct);

    let los_t = steering(geo.dist_uav_ris, geo.cos_aoa, m, cfg);
    let los_r = steering(geo.dist_ris_sensor, geo.cos_aod, m, cfg);
    let los_d = Complex64::from_polar(1.0, -TAU / c.wavelength * geo.dist_uav_sensor);

    let g_uav_ris = los_t
        .iter()
        .map(|&los| gains.beta_t.sqrt() * (wt_los * los + wt_nlos * draw_cscg(rng)))
        .collect();
    let g_ris_sensor = los_r
        .iter()
        .map(|&los| gains.beta_r.sqrt() * (wr_los * los + wr_nlos * draw_cscg(rng)))
        .collect();
    let g_direct = gains.beta_d.sqrt() * (wd_los * los_d + wd_nlos * draw_cscg(rng));

    ChannelRealization {
        g_direct,
        g_uav_ris,
        g_ris_sensor,
    }
}
