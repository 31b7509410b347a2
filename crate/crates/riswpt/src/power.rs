//! Propulsion power/energy models, the maximum-range speed, the expected and
//! instantaneous received powers, a Monte-Carlo estimator of the expected
//! received power and per-sensor harvested-energy accounting.

use crate::channel::{self, ChannelRealization};
use crate::scenario::{PlanarPoint, RotorParams, ScenarioConfig};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Broadcast protocol of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Fly-hover-broadcast: the UAV radiates only while hovering.
    Fhb,
    /// Path discretization: the UAV radiates continuously along the path.
    Pd,
}

/// UAV path and timing.
///
/// Waypoints run from the mission start to the mission finish. Under FHB the
/// durations are hover times at the interior waypoints (one fewer than the
/// segment count); under PD they are flight times of the segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub protocol: Protocol,
    pub waypoints: Vec<PlanarPoint>,
    pub durations: Vec<f64>,
}

impl Trajectory {
    /// Number of path segments.
    pub fn num_segments(&self) -> usize {
        self.waypoints.len().saturating_sub(1)
    }

    /// Segment lengths |q_l - q_{l-1}|.
    pub fn segment_lengths(&self) -> Vec<f64> {
        self.waypoints
            .windows(2)
            .map(|w| w[0].dist(&w[1]))
            .collect()
    }

    /// Positions at which the UAV radiates: interior waypoints under FHB,
    /// segment endpoints under PD.
    pub fn radiating_positions(&self) -> &[PlanarPoint] {
        match self.protocol {
            Protocol::Fhb => &self.waypoints[1..self.waypoints.len() - 1],
            Protocol::Pd => &self.waypoints[1..],
        }
    }

    /// Check the structural invariants against a scenario.
    pub fn validate(&self, cfg: &ScenarioConfig) -> Result<(), String> {
        if self.waypoints.len() < 2 {
            return Err("trajectory needs at least two waypoints".into());
        }
        let expected = match self.protocol {
            Protocol::Fhb => self.waypoints.len() - 2,
            Protocol::Pd => self.waypoints.len() - 1,
        };
        if self.durations.len() != expected {
            return Err(format!(
                "expected {expected} durations, got {}",
                self.durations.len()
            ));
        }
        if self.durations.iter().any(|&t| t < 0.0 || t.is_nan()) {
            return Err("durations must be nonnegative".into());
        }
        let close = |a: &PlanarPoint, b: &PlanarPoint| a.dist(b) < 1e-9;
        if !close(&self.waypoints[0], &cfg.start) {
            return Err("first waypoint must be the mission start".into());
        }
        if !close(self.waypoints.last().unwrap(), &cfg.finish) {
            return Err("last waypoint must be the mission finish".into());
        }
        if self.protocol == Protocol::Pd {
            for (l, (delta, &t)) in self
                .segment_lengths()
                .iter()
                .zip(&self.durations)
                .enumerate()
            {
                let cap = cfg.max_segment_length.min(cfg.uav_max_speed * t);
                if *delta > cap + 1e-9 {
                    return Err(format!(
                        "segment {l} length {delta} exceeds bound {cap}"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// RIS reflection angles, one vector per radiating slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePlan {
    /// Per-slot angle vectors, each of length M, angles in [0, 2 pi).
    pub angles: Vec<Vec<f64>>,
}

impl PhasePlan {
    /// Same angle vector in every slot.
    pub fn uniform(angle: f64, num_elements: usize, num_slots: usize) -> Self {
        Self {
            angles: vec![vec![angle; num_elements]; num_slots],
        }
    }

    /// Unit-modulus reflection vector e^{j theta} of one slot.
    pub fn phi(&self, slot: usize) -> Vec<Complex64> {
        self.angles[slot]
            .iter()
            .map(|&a| Complex64::from_polar(1.0, a))
            .collect()
    }

    pub fn num_slots(&self) -> usize {
        self.angles.len()
    }
}

/// Coefficients of the expected received power as a function of the
/// reflection vector: quad |psi^H phi|^2 + cross Re{psi^H phi} + constant.
/// All three include the radiated-power factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedPowerTerms {
    pub quad_coeff: f64,
    pub cross_coeff: f64,
    pub constant: f64,
}

/// Propulsion power of the rotary-wing UAV at forward speed v.
pub fn propulsion_power(speed: f64, rotor: &RotorParams) -> f64 {
    let v2 = speed * speed;
    let blade = rotor.p0_hover_blade_power * (1.0 + 3.0 * v2 / rotor.tip_speed.powi(2));
    let v0_4 = rotor.mean_induced_velocity.powi(4);
    let induced = rotor.p_induced_hover
        * ((1.0 + v2 * v2 / (4.0 * v0_4)).sqrt() - v2 / (2.0 * rotor.mean_induced_velocity.powi(2)))
            .max(0.0)
            .sqrt();
    let parasite = 0.5
        * rotor.fuselage_drag_ratio
        * rotor.air_density
        * rotor.rotor_solidity
        * rotor.rotor_disc_area
        * v2
        * speed;
    blade + induced + parasite
}

/// Propulsion power over a path segment of length delta flown in time t.
pub fn propulsion_power_segment(delta: f64, t: f64, rotor: &RotorParams) -> Result<f64, String> {
    if t <= 0.0 || t.is_nan() {
        return Err(format!("segment time must be > 0, got {t}"));
    }
    Ok(propulsion_power(delta / t, rotor))
}

/// Hover power P_p(0).
pub fn hover_power(rotor: &RotorParams) -> f64 {
    rotor.p0_hover_blade_power + rotor.p_induced_hover
}

/// Maximum-range speed: the speed minimizing propulsion energy per meter,
/// located by golden-section search to within 1e-3 m/s.
pub fn mr_speed(rotor: &RotorParams) -> f64 {
    let per_meter = |v: f64| propulsion_power(v, rotor) / v;
    // coarse bracket of the interior minimum
    let mut best_v = 1.0;
    let mut best = per_meter(best_v);
    let mut v = 1.0;
    while v <= 60.0 {
        let f = per_meter(v);
        if f < best {
            best = f;
            best_v = v;
        }
        v += 1.0;
    }
    let (mut a, mut b) = (best_v - 1.0, best_v + 1.0);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - inv_phi * (b - a), a + inv_phi * (b - a));
    let (mut fc, mut fd) = (per_meter(c), per_meter(d));
    while b - a > 1e-4 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = per_meter(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = per_meter(d);
        }
    }
    0.5 * (a + b)
}

/// Coefficients of the expected received power at the given UAV position.
pub fn expected_power_terms(
    q_uav: PlanarPoint,
    sensor_index: usize,
    cfg: &ScenarioConfig,
) -> ExpectedPowerTerms {
    let geo = channel::link_geometry(q_uav, sensor_index, cfg);
    let g = channel::large_scale_gains(&geo, cfg);
    let c = &cfg.channel;
    let (kt, kr, kd) = (c.rician_uav_ris, c.rician_ris_sensor, c.rician_direct);
    let denom_rt = (kr + 1.0) * (kt + 1.0);
    let p = cfg.radiated_power;
    let m = cfg.ris_elements as f64;
    ExpectedPowerTerms {
        quad_coeff: p * kr * kt * g.beta_r * g.beta_t / denom_rt,
        cross_coeff: 2.0
            * p
            * (kd * kr * kt * g.beta_d * g.beta_r * g.beta_t / ((kd + 1.0) * denom_rt)).sqrt(),
        constant: p * (g.beta_d + m * (kr + kt + 1.0) * g.beta_r * g.beta_t / denom_rt),
    }
}

/// Inner product psi^H phi for a reflection vector phi.
pub fn psi_inner(psi: &channel::PhaseOffsetVector, phi: &[Complex64]) -> Complex64 {
    psi.entries()
        .iter()
        .zip(phi)
        .map(|(e, p)| e.conj() * p)
        .sum()
}

/// Expected received power at a sensor for the given reflection vector.
pub fn expected_power(
    q_uav: PlanarPoint,
    phi: &[Complex64],
    sensor_index: usize,
    cfg: &ScenarioConfig,
) -> f64 {
    let terms = expected_power_terms(q_uav, sensor_index, cfg);
    let geo = channel::link_geometry(q_uav, sensor_index, cfg);
    let psi = channel::psi_vector(&geo, cfg);
    let inner = psi_inner(&psi, phi);
    terms.quad_coeff * inner.norm_sqr() + terms.cross_coeff * inner.re + terms.constant
}

/// Received power of one channel realization under the reflection vector phi.
pub fn instantaneous_power(
    realization: &ChannelRealization,
    phi: &[Complex64],
    radiated_power: f64,
) -> f64 {
    debug_assert_eq!(realization.g_uav_ris.len(), phi.len());
    let reflected: Complex64 = realization
        .g_ris_sensor
        .iter()
        .zip(phi)
        .zip(&realization.g_uav_ris)
        .map(|((gr, p), gt)| gr.conj() * p * gt)
        .sum();
    radiated_power * (realization.g_direct + reflected).norm_sqr()
}

/// Monte-Carlo estimate of the expected received power, parallelized across a
/// fixed worker count with per-worker generators and a deterministic
/// reduction order.
pub fn monte_carlo_expected_power(
    q_uav: PlanarPoint,
    phi: &[Complex64],
    sensor_index: usize,
    cfg: &ScenarioConfig,
    realizations: u64,
    seed: u64,
) -> f64 {
    const WORKERS: u64 = 8;
    let base = realizations / WORKERS;
    let rem = realizations % WORKERS;
    let sums: Vec<f64> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..WORKERS)
            .map(|w| {
                let phi = phi.to_vec();
                scope.spawn(move || {
                    let n = base + if w < rem { 1 } else { 0 };
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(w * 0x9e37_79b9));
                    let mut sum = 0.0;
                    for _ in 0..n {
                        let r = channel::sample_realization(q_uav, sensor_index, cfg, &mut rng);
                        sum += instantaneous_power(&r, &phi, cfg.radiated_power);
                    }
                    sum
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    sums.iter().sum::<f64>() / realizations as f64
}

/// Total UAV energy of a fly-hover-broadcast mission: flight at the
/// maximum-range speed plus hover and radiation energy at each hover point.
pub fn fhb_total_energy(traj: &Trajectory, cfg: &ScenarioConfig) -> Result<f64, String> {
    if traj.protocol != Protocol::Fhb {
        return Err("fhb_total_energy requires an FHB trajectory".into());
    }
    let v = mr_speed(&cfg.rotor);
    let flight: f64 = traj.segment_lengths().iter().sum::<f64>() / v * propulsion_power(v, &cfg.rotor);
    let hover: f64 = traj
        .durations
        .iter()
        .map(|t| (hover_power(&cfg.rotor) + cfg.radiated_power) * t)
        .sum();
    Ok(flight + hover)
}

/// Total UAV energy of a path-discretized mission.
pub fn pd_total_energy(traj: &Trajectory, cfg: &ScenarioConfig) -> Result<f64, String> {
    if traj.protocol != Protocol::Pd {
        return Err("pd_total_energy requires a PD trajectory".into());
    }
    let mut total = 0.0;
    for (l, (delta, &t)) in traj
        .segment_lengths()
        .iter()
        .zip(&traj.durations)
        .enumerate()
    {
        if t <= 0.0 {
            if *delta > 0.0 {
                return Err(format!("segment {l} has length {delta} but zero duration"));
            }
            continue;
        }
        total += t * (cfg.radiated_power + propulsion_power_segment(*delta, t, &cfg.rotor)?);
    }
    Ok(total)
}

/// Energy harvested by each sensor over the mission.
pub fn harvested_energy(
    traj: &Trajectory,
    plan: &PhasePlan,
    cfg: &ScenarioConfig,
) -> Result<Vec<f64>, String> {
    let positions = traj.radiating_positions();
    if plan.num_slots() != positions.len() || traj.durations.len() != positions.len() {
        return Err(format!(
            "plan has {} slots for {} radiating positions and {} durations",
            plan.num_slots(),
            positions.len(),
            traj.durations.len()
        ));
    }
    let mut out = vec![0.0; cfg.num_sensors()];
    for (slot, (&q, &t)) in positions.iter().zip(&traj.durations).enumerate() {
        let phi = plan.phi(slot);
        for (k, acc) in out.iter_mut().enumerate() {
            *acc += cfg.conversion_efficiency * t * expected_power(q, &phi, k, cfg);
        }
    }
    Ok(out)
}
