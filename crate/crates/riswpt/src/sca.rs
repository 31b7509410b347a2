//! Convex trajectory/time subproblem builders. Each builder lowers one
//! linearized subproblem into a cone program and records, for every variable
//! it creates, the value that variable takes at the reference iterate, so
//! reference feasibility can be checked by direct substitution.

use crate::channel;
use crate::cone::{ConeProgram, ConeSolution, ConeStatus};
use crate::power::{expected_power, mr_speed, propulsion_power, PhasePlan, Protocol, Trajectory};
use crate::scenario::{PlanarPoint, ScenarioConfig};

/// Minimum segment duration under path discretization (s). Keeps the
/// quadratic-over-linear denominators away from zero.
pub const MIN_SEGMENT_TIME: f64 = 1e-6;

/// Linearization coefficients of the expected power of one (sensor, slot)
/// pair: approx power / radiated power = (u1 + u3) beta_t + u2
/// sqrt(beta_d beta_t) + beta_d, exact at the reference point.
#[derive(Debug, Clone, Copy)]
pub struct PhaseCoeffs {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
}

fn phase_coeffs(
    q_ref: PlanarPoint,
    phi_angles: &[f64],
    sensor_index: usize,
    cfg: &ScenarioConfig,
) -> PhaseCoeffs {
    let geo = channel::link_geometry(q_ref, sensor_index, cfg);
    let gains = channel::large_scale_gains(&geo, cfg);
    let psi = channel::psi_vector(&geo, cfg);
    let phi: Vec<num_complex::Complex64> = phi_angles
        .iter()
        .map(|&a| num_complex::Complex64::from_polar(1.0, a))
        .collect();
    let inner = crate::power::psi_inner(&psi, &phi);
    let c = &cfg.channel;
    let (kt, kr, kd) = (c.rician_uav_ris, c.rician_ris_sensor, c.rician_direct);
    let denom_rt = (kr + 1.0) * (kt + 1.0);
    PhaseCoeffs {
        u1: kr * kt * gains.beta_r / denom_rt * inner.norm_sqr(),
        u2: 2.0 * (kd * kr * kt * gains.beta_r / ((kd + 1.0) * denom_rt)).sqrt() * inner.re,
        u3: cfg.ris_elements as f64 * (kr + kt + 1.0) * gains.beta_r / denom_rt,
    }
}

/// First-order lower bound of beta = beta0 / (d2 + h2)^(alpha/2) in the
/// squared horizontal distance d2, expanded at d2_ref:
/// beta >= c1 - c2 (d2 - d2_ref).
pub fn taylor_gain_bound(d2_ref: f64, h2: f64, alpha: f64, beta0: f64) -> (f64, f64) {
    let base = d2_ref + h2;
    let c1 = beta0 / base.powf(alpha / 2.0);
    let c2 = alpha * beta0 / (2.0 * base.powf(alpha / 2.0 + 1.0));
    (c1, c2)
}

/// Reference iterate of the fly-hover-broadcast subproblem.
#[derive(Debug, Clone)]
pub struct FhbIterate {
    pub traj: Trajectory,
    /// Linearization coefficients per sensor per hover slot.
    pub coeffs: Vec<Vec<PhaseCoeffs>>,
    /// Energy-split references e[k][l], normalized to sum of squares 1.
    pub e_ref: Vec<Vec<f64>>,
}

/// Reference iterate of the path-discretization subproblem.
#[derive(Debug, Clone)]
pub struct PdIterate {
    pub traj: Trajectory,
    pub coeffs: Vec<Vec<PhaseCoeffs>>,
    pub e_ref: Vec<Vec<f64>>,
    /// Induced-power slack references, at equality per segment.
    pub x_ref: Vec<f64>,
    /// Parasite-term slack references z_l = delta_l^2 / t_l.
    pub z_ref: Vec<f64>,
}

/// Energy-split references proportional to the square root of each slot's
/// contribution, normalized so the linearized sum-of-squares row is tight.
fn energy_split(traj: &Trajectory, plan: &PhasePlan, cfg: &ScenarioConfig) -> Vec<Vec<f64>> {
    let positions = traj.radiating_positions();
    (0..cfg.num_sensors())
        .map(|k| {
            let contrib: Vec<f64> = positions
                .iter()
                .zip(&traj.durations)
                .enumerate()
                .map(|(l, (&q, &t))| t * expected_power(q, &plan.phi(l), k, cfg))
                .collect();
            let total: f64 = contrib.iter().sum();
            if total <= 0.0 {
                return vec![0.0; contrib.len()];
            }
            contrib.iter().map(|&c| (c / total).sqrt()).collect()
        })
        .collect()
}

impl FhbIterate {
    pub fn new(traj: &Trajectory, plan: &PhasePlan, cfg: &ScenarioConfig) -> Result<Self, String> {
        if traj.protocol != Protocol::Fhb {
            return Err("FHB iterate requires an FHB trajectory".into());
        }
        if plan.num_slots() != traj.durations.len() {
            return Err("phase plan does not match trajectory slots".into());
        }
        let positions = traj.radiating_positions();
        let coeffs = (0..cfg.num_sensors())
            .map(|k| {
                positions
                    .iter()
                    .enumerate()
                    .map(|(l, &q)| phase_coeffs(q, &plan.angles[l], k, cfg))
                    .collect()
            })
            .collect();
        let e_ref = energy_split(traj, plan, cfg);
        if e_ref.iter().any(|row| row.iter().all(|&e| e == 0.0)) {
            return Err("degenerate iterate: a sensor receives no energy".into());
        }
        Ok(Self {
            traj: traj.clone(),
            coeffs,
            e_ref,
        })
    }
}

impl PdIterate {
    pub fn new(traj: &Trajectory, plan: &PhasePlan, cfg: &ScenarioConfig) -> Result<Self, String> {
        if traj.protocol != Protocol::Pd {
            return Err("PD iterate requires a PD trajectory".into());
        }
        if plan.num_slots() != traj.durations.len() {
            return Err("phase plan does not match trajectory slots".into());
        }
        if traj.durations.iter().any(|&t| t < MIN_SEGMENT_TIME) {
            return Err(format!("segment durations must be >= {MIN_SEGMENT_TIME}"));
        }
        let positions = traj.radiating_positions();
        let coeffs = (0..cfg.num_sensors())
            .map(|k| {
                positions
                    .iter()
                    .enumerate()
                    .map(|(l, &q)| phase_coeffs(q, &plan.angles[l], k, cfg))
                    .collect()
            })
            .collect();
        let e_ref = energy_split(traj, plan, cfg);
        if e_ref.iter().any(|row| row.iter().all(|&e| e == 0.0)) {
            return Err("degenerate iterate: a sensor receives no energy".into());
        }
        let v0 = cfg.rotor.mean_induced_velocity;
        let lengths = traj.segment_lengths();
        let x_ref = lengths
            .iter()
            .zip(&traj.durations)
            .map(|(&d, &t)| {
                ((t.powi(4) + d.powi(4) / (4.0 * v0.powi(4))).sqrt() - d * d / (2.0 * v0 * v0))
                    .max(0.0)
                    .sqrt()
            })
            .collect();
        let z_ref = lengths
            .iter()
            .zip(&traj.durations)
            .map(|(&d, &t)| d * d / t)
            .collect();
        Ok(Self {
            traj: traj.clone(),
            coeffs,
            e_ref,
            x_ref,
            z_ref,
        })
    }
}

/// Indices of the trajectory variables inside a built program.
#[derive(Debug, Clone)]
pub struct VarMap {
    /// (x, y) index pair per waypoint, endpoints included.
    pub q: Vec<(usize, usize)>,
    /// Duration variable per slot.
    pub t: Vec<usize>,
    /// Segment-length epigraph variable per segment.
    pub delta: Vec<usize>,
}

/// A lowered subproblem plus the reference assignment of every variable.
#[derive(Debug)]
pub struct BuiltProgram {
    pub program: ConeProgram,
    pub map: VarMap,
    pub reference: Vec<f64>,
}

impl BuiltProgram {
    /// Residuals of the reference iterate under the built constraints:
    /// (max equality violation, max cone violation).
    pub fn reference_residuals(&self) -> (f64, f64) {
        self.program.residuals(&self.reference)
    }

    pub fn reference_objective(&self) -> f64 {
        self.program.objective_value(&self.reference)
    }
}

/// Cone-program builder that carries a reference value for every variable.
struct Builder {
    p: ConeProgram,
    reference: Vec<f64>,
    one: Option<usize>,
    half: Option<usize>,
}

impl Builder {
    fn new() -> Self {
        Self {
            p: ConeProgram::new(),
            reference: Vec::new(),
            one: None,
            half: None,
        }
    }

    fn var(&mut self, name: &str, ref_val: f64) -> usize {
        let idx = self.p.add_var(name);
        self.reference.push(ref_val);
        idx
    }

    /// Constant variable pinned to 1 by an equality row.
    fn one(&mut self) -> usize {
        if let Some(i) = self.one {
            return i;
        }
        let i = self.var("aux_one", 1.0);
        self.p.add_eq(vec![(i, 1.0)], 1.0);
        self.one = Some(i);
        i
    }

    /// Constant variable pinned to 0.5.
    fn half(&mut self) -> usize {
        if let Some(i) = self.half {
            return i;
        }
        let i = self.var("aux_half", 0.5);
        self.p.add_eq(vec![(i, 1.0)], 0.5);
        self.half = Some(i);
        i
    }

    fn ref_of(&self, terms: &[(usize, f64)]) -> f64 {
        terms.iter().map(|&(i, c)| c * self.reference[i]).sum()
    }

    /// sum terms <= rhs, lowered as terms + slack = rhs with slack >= 0.
    fn ineq_le(&mut self, name: &str, mut terms: Vec<(usize, f64)>, rhs: f64) {
        let slack_ref = rhs - self.ref_of(&terms);
        let s = self.var(&format!("aux_slack_{name}"), slack_ref);
        self.p.mark_nonneg(s);
        terms.push((s, 1.0));
        self.p.add_eq(terms, rhs);
    }

    /// Variable defined as an affine combination of others.
    fn defined_var(&mut self, name: &str, terms: Vec<(usize, f64)>, offset: f64) -> usize {
        let ref_val = self.ref_of(&terms) + offset;
        let v = self.var(name, ref_val);
        let mut row = terms;
        row.push((v, -1.0));
        self.p.add_eq(row, -offset);
        v
    }

    /// Epigraph d2 >= (affine dx)^2 + (affine dy)^2 via a rotated cone with
    /// the pinned 0.5 scalar. Returns the d2 variable.
    fn dist_sqr_epigraph(
        &mut self,
        name: &str,
        dx_terms: Vec<(usize, f64)>,
        dx_off: f64,
        dy_terms: Vec<(usize, f64)>,
        dy_off: f64,
    ) -> usize {
        let dx = self.defined_var(&format!("aux_{name}.dx"), dx_terms, dx_off);
        let dy = self.defined_var(&format!("aux_{name}.dy"), dy_terms, dy_off);
        let d2_ref = self.reference[dx].powi(2) + self.reference[dy].powi(2);
        let d2 = self.var(&format!("aux_{name}.d2"), d2_ref);
        let half = self.half();
        self.p.add_rsoc(vec![d2, half, dx, dy]);
        d2
    }
}

struct EnergyBlockInput<'a> {
    /// Waypoint variable index pair per radiating slot.
    slot_q: Vec<(usize, usize)>,
    /// Duration variable per slot.
    slot_t: Vec<usize>,
    /// Reference waypoint per slot.
    slot_q_ref: Vec<PlanarPoint>,
    coeffs: &'a [Vec<PhaseCoeffs>],
    e_ref: &'a [Vec<f64>],
}

/// Shared energy-requirement block: per-slot gain bounds, the bilinear
/// product cones and the linearized energy-split rows.
fn add_energy_block(b: &mut Builder, input: &EnergyBlockInput, cfg: &ScenarioConfig) {
    let num_slots = input.slot_t.len();
    let k_count = cfg.num_sensors();
    let c = &cfg.channel;
    let h_u2 = cfg.uav_height.powi(2);
    let h_rel2 = (cfg.uav_height - cfg.ris_height).powi(2);
    // Gain variables live around 1e-6..1e-9 while times and squared distances
    // reach 1e3..1e4, which stalls the interior-point solver. Model the gains
    // in units of the nadir direct-link gain and absorb the unit into the
    // energy-time coefficient; the cones are invariant under this rescaling.
    let g_unit = c.beta0_ref_gain / h_u2.powf(c.pathloss_direct / 2.0);

    // per-slot RIS-link gain bound: y_t <= taylor cap in |q - q_R|^2
    let mut y_t = Vec::with_capacity(num_slots);
    let mut yt_half = Vec::with_capacity(num_slots);
    for l in 0..num_slots {
        let q_ref = input.slot_q_ref[l];
        let d2_ref = q_ref.dist(&cfg.ris_position).powi(2);
        let beta_ref = c.beta0_ref_gain / (d2_ref + h_rel2).powf(c.pathloss_uav_ris / 2.0);
        let yt = b.var(&format!("y_t[{l}]"), beta_ref / g_unit);
        b.p.mark_nonneg(yt);
        let (qx, qy) = input.slot_q[l];
        let d2 = b.dist_sqr_epigraph(
            &format!("ris_d2[{l}]"),
            vec![(qx, 1.0)],
            -cfg.ris_position.x,
            vec![(qy, 1.0)],
            -cfg.ris_position.y,
        );
        let (c1, c2) = taylor_gain_bound(d2_ref, h_rel2, c.pathloss_uav_ris, c.beta0_ref_gain);
        b.ineq_le(
            &format!("yt_cap[{l}]"),
            vec![(yt, 1.0), (d2, c2 / g_unit)],
            (c1 + c2 * d2_ref) / g_unit,
        );
        let h = b.defined_var(&format!("aux_yt_half[{l}]"), vec![(yt, 0.5)], 0.0);
        y_t.push(yt);
        yt_half.push(h);
    }

    for k in 0..k_count {
        let e_req = cfg.sensor_energy_req[k];
        let sensor = cfg.sensors[k];
        let mut split_row: Vec<(usize, f64)> = Vec::with_capacity(num_slots);
        let mut split_rhs = 1.0;
        for l in 0..num_slots {
            let q_ref = input.slot_q_ref[l];
            let d2_ref = q_ref.dist(&sensor).powi(2);
            let beta_d_ref = c.beta0_ref_gain / (d2_ref + h_u2).powf(c.pathloss_direct / 2.0);
            let beta_t_ref = b.reference[y_t[l]];
            let co = input.coeffs[k][l];

            let yd = b.var(&format!("y_d[{k},{l}]"), beta_d_ref / g_unit);
            b.p.mark_nonneg(yd);
            let (qx, qy) = input.slot_q[l];
            let d2 = b.dist_sqr_epigraph(
                &format!("sensor_d2[{k},{l}]"),
                vec![(qx, 1.0)],
                -sensor.x,
                vec![(qy, 1.0)],
                -sensor.y,
            );
            let (c1, c2) = taylor_gain_bound(d2_ref, h_u2, c.pathloss_direct, c.beta0_ref_gain);
            b.ineq_le(
                &format!("yd_cap[{k},{l}]"),
                vec![(yd, 1.0), (d2, c2 / g_unit)],
                (c1 + c2 * d2_ref) / g_unit,
            );

            // cross-term slack y_a with y_a^2 <= y_t y_d
            let ya_ref = (beta_t_ref * beta_d_ref / g_unit).sqrt();
            let ya = b.var(&format!("y_a[{k},{l}]"), ya_ref);
            b.p.add_rsoc(vec![yt_half[l], yd, ya]);

            // energy cone: e^2 <= (eta P_t / E) t * ((u1+u3) y_t + u2 y_a + y_d)
            let lhs = b.defined_var(
                &format!("aux_energy_lhs[{k},{l}]"),
                vec![(y_t[l], co.u1 + co.u3), (ya, co.u2), (yd, 1.0)],
                0.0,
            );
            let t_scaled = b.defined_var(
                &format!("aux_energy_t[{k},{l}]"),
                vec![(
                    input.slot_t[l],
                    g_unit * cfg.conversion_efficiency * cfg.radiated_power / (2.0 * e_req),
                )],
                0.0,
            );
            let e_var = b.var(&format!("e[{k},{l}]"), input.e_ref[k][l]);
            b.p.mark_nonneg(e_var);
            b.p.add_rsoc(vec![lhs, t_scaled, e_var]);

            let e_n = input.e_ref[k][l];
            split_row.push((e_var, -2.0 * e_n));
            split_rhs += e_n * e_n;
        }
        // linearized sum of squares: sum 2 e^n e >= 1 + sum (e^n)^2
        b.ineq_le(&format!("energy_split[{k}]"), split_row, -split_rhs);
    }
}

fn add_waypoint_vars(b: &mut Builder, waypoints: &[PlanarPoint], cfg: &ScenarioConfig) -> Vec<(usize, usize)> {
    let q: Vec<(usize, usize)> = waypoints
        .iter()
        .enumerate()
        .map(|(i, p)| {
            (
                b.var(&format!("q[{i}].x"), p.x),
                b.var(&format!("q[{i}].y"), p.y),
            )
        })
        .collect();
    let last = q.len() - 1;
    b.p.add_eq(vec![(q[0].0, 1.0)], cfg.start.x);
    b.p.add_eq(vec![(q[0].1, 1.0)], cfg.start.y);
    b.p.add_eq(vec![(q[last].0, 1.0)], cfg.finish.x);
    b.p.add_eq(vec![(q[last].1, 1.0)], cfg.finish.y);
    q
}

/// Segment-length epigraph delta_l >= |q_l - q_{l-1}| per segment.
fn add_segment_lengths(
    b: &mut Builder,
    q: &[(usize, usize)],
    waypoints: &[PlanarPoint],
) -> Vec<usize> {
    let mut delta = Vec::with_capacity(q.len() - 1);
    for l in 1..q.len() {
        let d_ref = waypoints[l].dist(&waypoints[l - 1]);
        let d = b.var(&format!("delta[{l}]"), d_ref);
        let dx = b.defined_var(
            &format!("aux_seg[{l}].dx"),
            vec![(q[l].0, 1.0), (q[l - 1].0, -1.0)],
            0.0,
        );
        let dy = b.defined_var(
            &format!("aux_seg[{l}].dy"),
            vec![(q[l].1, 1.0), (q[l - 1].1, -1.0)],
            0.0,
        );
        b.p.add_soc(vec![d, dx, dy]);
        delta.push(d);
    }
    delta
}

/// Build the convex fly-hover-broadcast subproblem at the given iterate.
pub fn build_fhb_subproblem(iter: &FhbIterate, cfg: &ScenarioConfig) -> Result<BuiltProgram, String> {
    let traj = &iter.traj;
    if traj.protocol != Protocol::Fhb {
        return Err("iterate is not FHB".into());
    }
    let mut b = Builder::new();
    let q = add_waypoint_vars(&mut b, &traj.waypoints, cfg);
    let delta = add_segment_lengths(&mut b, &q, &traj.waypoints);

    let v_mr = mr_speed(&cfg.rotor);
    let p_mr = propulsion_power(v_mr, &cfg.rotor);
    let p_hov = cfg.rotor.p0_hover_blade_power + cfg.rotor.p_induced_hover;
    for &d in &delta {
        b.p.add_objective(d, p_mr / v_mr);
    }
    let t: Vec<usize> = traj
        .durations
        .iter()
        .enumerate()
        .map(|(l, &tv)| {
            let idx = b.var(&format!("t[{l}]"), tv);
            b.p.mark_nonneg(idx);
            b.p.add_objective(idx, p_hov + cfg.radiated_power);
            idx
        })
        .collect();

    let slots = traj.durations.len();
    let input = EnergyBlockInput {
        slot_q: (0..slots).map(|l| q[l + 1]).collect(),
        slot_t: t.clone(),
        slot_q_ref: (0..slots).map(|l| traj.waypoints[l + 1]).collect(),
        coeffs: &iter.coeffs,
        e_ref: &iter.e_ref,
    };
    add_energy_block(&mut b, &input, cfg);

    if let Err(errs) = b.p.validate() {
        return Err(format!("built FHB program invalid: {}", errs.join("; ")));
    }
    Ok(BuiltProgram {
        program: b.p,
        map: VarMap { q, t, delta },
        reference: b.reference,
    })
}

/// Build the convex path-discretization subproblem at the given iterate.
pub fn build_pd_subproblem(iter: &PdIterate, cfg: &ScenarioConfig) -> Result<BuiltProgram, String> {
    let traj = &iter.traj;
    if traj.protocol != Protocol::Pd {
        return Err("iterate is not PD".into());
    }
    if traj.durations.iter().any(|&t| t < MIN_SEGMENT_TIME) {
        return Err("PD iterate has segments below the minimum duration".into());
    }
    let rotor = &cfg.rotor;
    let v0 = rotor.mean_induced_velocity;
    let lengths = traj.segment_lengths();

    let mut b = Builder::new();
    let q = add_waypoint_vars(&mut b, &traj.waypoints, cfg);
    let delta = add_segment_lengths(&mut b, &q, &traj.waypoints);

    let mut t = Vec::with_capacity(traj.durations.len());
    for (l, &tv) in traj.durations.iter().enumerate() {
        let idx = b.var(&format!("t[{l}]"), tv);
        b.p.mark_nonneg(idx);
        // keep denominators strictly positive
        b.ineq_le(&format!("t_min[{l}]"), vec![(idx, -1.0)], -MIN_SEGMENT_TIME);
        // radiation and hover-blade power are linear in t
        b.p.add_objective(
            idx,
            cfg.radiated_power + rotor.p0_hover_blade_power,
        );
        t.push(idx);
    }

    let parasite = 0.5
        * rotor.fuselage_drag_ratio
        * rotor.air_density
        * rotor.rotor_solidity
        * rotor.rotor_disc_area;
    for l in 0..t.len() {
        let t_ref = traj.durations[l];
        let d_ref = lengths[l];
        let (x_n, z_n) = (iter.x_ref[l], iter.z_ref[l]);

        // segment-length caps (speed and discretization)
        b.ineq_le(
            &format!("delta_max[{l}]"),
            vec![(delta[l], 1.0)],
            cfg.max_segment_length,
        );
        b.ineq_le(
            &format!("speed_cap[{l}]"),
            vec![(delta[l], 1.0), (t[l], -cfg.uav_max_speed)],
            0.0,
        );

        let t_half = b.defined_var(&format!("aux_t_half[{l}]"), vec![(t[l], 0.5)], 0.0);

        // induced-power slack x with t^4/x^2 <= linearized x^2 + delta^2/v0^2
        let x = b.var(&format!("x[{l}]"), x_n);
        b.p.mark_nonneg(x);
        b.p.add_objective(x, rotor.p_induced_hover);
        let x_half = b.defined_var(&format!("aux_x_half[{l}]"), vec![(x, 0.5)], 0.0);
        let s_ref = if x_n > 0.0 { t_ref * t_ref / x_n } else { 0.0 };
        let s = b.var(&format!("aux_s[{l}]"), s_ref);
        // t^2 <= s x
        b.p.add_rsoc(vec![s, x_half, t[l]]);
        // s^2 <= 2 x^n x - x^2n + (2/v0^2) delta^n delta - delta^2n / v0^2
        let rhs_half = b.defined_var(
            &format!("aux_x_rhs[{l}]"),
            vec![(x, x_n), (delta[l], d_ref / (v0 * v0))],
            -0.5 * (x_n * x_n + d_ref * d_ref / (v0 * v0)),
        );
        let one = b.one();
        b.p.add_rsoc(vec![rhs_half, one, s]);

        // blade profile drag: g >= delta^2 / t, objective 3 P0 / U_tip^2
        let g_ref = d_ref * d_ref / t_ref;
        let g = b.var(&format!("aux_blade[{l}]"), g_ref);
        b.p.add_rsoc(vec![g, t_half, delta[l]]);
        b.p.add_objective(g, 3.0 * rotor.p0_hover_blade_power / rotor.tip_speed.powi(2));

        // parasite chain: delta <= dbar, dbar^4/t^2 <= 2 z^n z - z^2n,
        // z^2 <= w dbar, objective on w
        let dbar = b.var(&format!("dbar[{l}]"), d_ref);
        b.p.mark_nonneg(dbar);
        b.ineq_le(
            &format!("dbar_lb[{l}]"),
            vec![(delta[l], 1.0), (dbar, -1.0)],
            0.0,
        );
        let z = b.var(&format!("z[{l}]"), z_n);
        b.p.mark_nonneg(z);
        let w_ref = if t_ref > 0.0 {
            d_ref.powi(3) / (t_ref * t_ref)
        } else {
            0.0
        };
        let w = b.var(&format!("w[{l}]"), w_ref);
        b.p.add_objective(w, parasite);
        let p_ref = if t_ref > 0.0 { d_ref * d_ref / t_ref } else { 0.0 };
        let p = b.var(&format!("aux_p[{l}]"), p_ref);
        // dbar^2 <= p t
        b.p.add_rsoc(vec![p, t_half, dbar]);
        // p^2 <= 2 z^n z - z^2n
        let z_rhs_half = b.defined_var(
            &format!("aux_z_rhs[{l}]"),
            vec![(z, z_n)],
            -0.5 * z_n * z_n,
        );
        let one = b.one();
        b.p.add_rsoc(vec![z_rhs_half, one, p]);
        // z^2 <= w dbar
        let dbar_half = b.defined_var(&format!("aux_dbar_half[{l}]"), vec![(dbar, 0.5)], 0.0);
        b.p.add_rsoc(vec![w, dbar_half, z]);
    }

    let slots = traj.durations.len();
    let input = EnergyBlockInput {
        slot_q: (0..slots).map(|l| q[l + 1]).collect(),
        slot_t: t.clone(),
        slot_q_ref: (0..slots).map(|l| traj.waypoints[l + 1]).collect(),
        coeffs: &iter.coeffs,
        e_ref: &iter.e_ref,
    };
    add_energy_block(&mut b, &input, cfg);

    if let Err(errs) = b.p.validate() {
        return Err(format!("built PD program invalid: {}", errs.join("; ")));
    }
    Ok(BuiltProgram {
        program: b.p,
        map: VarMap { q, t, delta },
        reference: b.reference,
    })
}

/// Read a trajectory back out of a solved subproblem.
pub fn extract(
    solution: &ConeSolution,
    map: &VarMap,
    protocol: Protocol,
    cfg: &ScenarioConfig,
) -> Result<Trajectory, String> {
    if solution.status != ConeStatus::Optimal {
        return Err(format!("cannot extract from status {:?}", solution.status));
    }
    let mut waypoints: Vec<PlanarPoint> = map
        .q
        .iter()
        .map(|&(ix, iy)| PlanarPoint::new(solution.x[ix], solution.x[iy]))
        .collect();
    // endpoints are pinned by equality rows; snap away the solver tolerance
    waypoints[0] = cfg.start;
    let last = waypoints.len() - 1;
    waypoints[last] = cfg.finish;
    let durations: Vec<f64> = map
        .t
        .iter()
        .map(|&i| match protocol {
            Protocol::Fhb => solution.x[i].max(0.0),
            Protocol::Pd => solution.x[i].max(MIN_SEGMENT_TIME),
        })
        .collect();
    let traj = Trajectory {
        protocol,
        waypoints,
        durations,
    };
    if protocol == Protocol::Pd {
        for (l, (d, &t)) in traj
            .segment_lengths()
            .iter()
            .zip(&traj.durations)
            .enumerate()
        {
            let cap = cfg.max_segment_length.min(cfg.uav_max_speed * t);
            if *d > cap + 1e-6 {
                return Err(format!("extracted segment {l} violates length cap: {d} > {cap}"));
            }
        }
    }
    Ok(traj)
}
