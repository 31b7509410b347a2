//! Outer alternating loops: per-protocol runs that interleave the convex
//! trajectory/time subproblem with the phase-tuning fixed point, plus
//! baselines (no reflector, quantized phases), initialization heuristics,
//! the smoothing schedule, exact-constraint repair and CSV reporting.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::cone::ConeStatus;
use crate::phase_opt::{optimize_phases, MmOptions};
use crate::power::{
    expected_power, fhb_total_energy, harvested_energy, hover_power, mr_speed, pd_total_energy,
    PhasePlan, Protocol, Trajectory,
};
use crate::sca::{
    build_fhb_subproblem, build_pd_subproblem, extract, FhbIterate, PdIterate, MIN_SEGMENT_TIME,
};
use crate::scenario::{PlanarPoint, ScenarioConfig};

/// Tolerance on the exact per-sensor energy requirement after repair.
pub const FEASIBILITY_SLACK: f64 = 1e-6;

/// Knobs of the outer loops.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Maximum outer iterations.
    pub n_max: usize,
    /// Relative tolerance of the phase fixed-point stage.
    pub mm_eps: f64,
    /// Maximum phase fixed-point iterations per outer round.
    pub mm_rmax: usize,
    /// Initial smoothing parameter.
    pub mu0: f64,
    /// Smoothing parameter ceiling.
    pub mu_max: f64,
    /// Exponential growth rate of the smoothing parameter.
    pub mu_growth: f64,
    /// Cone solver tolerance.
    pub cone_tol: f64,
    /// Durations below this are treated as pass-through segments.
    pub t_floor: f64,
    /// Early exit when the relative objective change falls below this and
    /// the exact energy constraints hold.
    pub outer_rel_stop: f64,
    /// Jump the smoothing parameter straight to its ceiling instead of
    /// growing it gradually.
    pub mu_schedule_literal: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            n_max: 60,
            mm_eps: 1e-6,
            mm_rmax: 10,
            mu0: 100.0,
            mu_max: 1000.0,
            mu_growth: 1.07,
            cone_tol: 1e-8,
            t_floor: MIN_SEGMENT_TIME,
            outer_rel_stop: 1e-4,
            mu_schedule_literal: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_max == 0 || self.mm_rmax == 0 {
            return Err("iteration limits must be positive".into());
        }
        for (name, v) in [
            ("mm_eps", self.mm_eps),
            ("mu0", self.mu0),
            ("mu_max", self.mu_max),
            ("mu_growth", self.mu_growth),
            ("cone_tol", self.cone_tol),
            ("t_floor", self.t_floor),
            ("outer_rel_stop", self.outer_rel_stop),
        ] {
            if v <= 0.0 || v.is_nan() {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.mu0 > self.mu_max {
            return Err(format!(
                "mu0 ({}) must not exceed mu_max ({})",
                self.mu0, self.mu_max
            ));
        }
        Ok(())
    }
}

/// One outer-iteration row of a run.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub n: usize,
    /// Exact mission energy at the end of the round.
    pub total_energy: f64,
    /// Worst exact harvested-over-required ratio across sensors.
    pub min_ratio: f64,
    pub mu: f64,
    pub cone_status: ConeStatus,
    pub mm_iterations: usize,
    /// Independent feasibility of the reference point in the built program.
    pub ref_residual: f64,
    /// Independent residual of the returned cone solution.
    pub solution_residual: f64,
    pub reference_objective: f64,
    pub solved_objective: f64,
}

/// Full account of one run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub protocol: Protocol,
    pub iterations: Vec<IterationRecord>,
    pub trajectory: Trajectory,
    pub plan: PhasePlan,
    /// Exact per-sensor harvested energy after repair.
    pub harvested: Vec<f64>,
    /// Exact mission energy after repair.
    pub total_energy: f64,
    /// Duration scaling applied by the final repair (1 when none needed).
    pub repair_factor: f64,
    pub wall_seconds: f64,
    /// Set when the run aborted early; the other fields hold the last
    /// usable iterate.
    pub failure: Option<String>,
}

impl RunReport {
    /// Exact constraints hold for every sensor.
    pub fn feasible(&self, cfg: &ScenarioConfig) -> bool {
        self.failure.is_none()
            && self
                .harvested
                .iter()
                .zip(&cfg.sensor_energy_req)
                .all(|(&h, &e)| h >= e * (1.0 - FEASIBILITY_SLACK))
    }
}

/// Pairs a quantized-phase rerun with the continuous run it started from.
#[derive(Debug, Clone)]
pub struct QuantizedReport {
    pub bits: u32,
    pub continuous: RunReport,
    pub quantized: RunReport,
}

impl QuantizedReport {
    /// Quantized-over-continuous mission energy.
    pub fn energy_ratio(&self) -> f64 {
        self.quantized.total_energy / self.continuous.total_energy
    }
}

/// Hover-and-broadcast starting point: one hover above each sensor in the
/// configured order, equal hover times from a nadir-gain heuristic, all
/// phases zero.
pub fn init_fhb(cfg: &ScenarioConfig) -> (Trajectory, PhasePlan) {
    let mut waypoints = Vec::with_capacity(cfg.num_sensors() + 2);
    waypoints.push(cfg.start);
    waypoints.extend(cfg.sensors.iter().copied());
    waypoints.push(cfg.finish);

    // nadir direct gain bounds the per-hover charging rate; split the total
    // across hovers and let the first solve correct it
    let c = &cfg.channel;
    let beta_nadir =
        c.beta0_ref_gain / cfg.uav_height.powi(2).powf(c.pathloss_direct / 2.0);
    let e_max = cfg
        .sensor_energy_req
        .iter()
        .copied()
        .fold(0.0f64, f64::max);
    let t0 = e_max / (cfg.conversion_efficiency * cfg.radiated_power * beta_nadir).max(1e-300);
    let hovers = cfg.num_sensors();
    let traj = Trajectory {
        protocol: Protocol::Fhb,
        waypoints,
        durations: vec![t0; hovers],
    };
    let plan = PhasePlan::uniform(0.0, cfg.ris_elements, hovers);
    (traj, plan)
}

/// Path-discretized starting point: the hover polyline subdivided so no
/// segment exceeds max_segment_length / 1.8, flown at the maximum-range
/// speed, all phases zero.
pub fn init_pd(cfg: &ScenarioConfig) -> (Trajectory, PhasePlan) {
    let (fhb, _) = init_fhb(cfg);
    let cap = cfg.max_segment_length / 1.8;
    let v = mr_speed(&cfg.rotor);
    let mut waypoints = vec![fhb.waypoints[0]];
    let mut durations = Vec::new();
    for pair in fhb.waypoints.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let len = a.dist(&b);
        let pieces = (len / cap).ceil().max(1.0) as usize;
        for i in 1..=pieces {
            let f = i as f64 / pieces as f64;
            waypoints.push(PlanarPoint::new(
                a.x + f * (b.x - a.x),
                a.y + f * (b.y - a.y),
            ));
            durations.push((len / pieces as f64 / v).max(MIN_SEGMENT_TIME));
        }
    }
    let slots = durations.len();
    let traj = Trajectory {
        protocol: Protocol::Pd,
        waypoints,
        durations,
    };
    (traj, PhasePlan::uniform(0.0, cfg.ris_elements, slots))
}

/// Scale radiating durations by the smallest common factor that restores the
/// exact per-sensor energy requirements. Harvested energy is linear in the
/// durations at fixed waypoints, so the factor is closed-form. Speeds only
/// drop when durations grow, so the speed cap stays satisfied.
pub fn feasibility_repair(
    traj: &Trajectory,
    plan: &PhasePlan,
    cfg: &ScenarioConfig,
) -> Result<(Trajectory, f64), String> {
    let harvested = harvested_energy(traj, plan, cfg)?;
    let mut rho = 1.0f64;
    for (k, (&h, &e)) in harvested.iter().zip(&cfg.sensor_energy_req).enumerate() {
        if h <= 0.0 {
            return Err(format!("sensor {k} receives no energy; cannot repair"));
        }
        rho = rho.max(e / h);
    }
    if rho <= 1.0 {
        return Ok((traj.clone(), 1.0));
    }
    let mut out = traj.clone();
    for t in out.durations.iter_mut() {
        *t *= rho;
    }
    Ok((out, rho))
}

/// Map every phase to the nearest of the 2^bits uniform grid points on
/// [0, 2 pi) under wraparound distance; ties round down.
pub fn quantize_plan(plan: &PhasePlan, bits: u32) -> PhasePlan {
    assert!(bits >= 1, "at least one bit required");
    let levels = 1u64 << bits;
    let step = std::f64::consts::TAU / levels as f64;
    let angles = plan
        .angles
        .iter()
        .map(|slot| {
            slot.iter()
                .map(|&theta| {
                    let t = theta.rem_euclid(std::f64::consts::TAU);
                    let below = (t / step).floor();
                    let d_down = t - below * step;
                    let d_up = step - d_down;
                    let idx = if d_down <= d_up {
                        below as u64 % levels
                    } else {
                        (below as u64 + 1) % levels
                    };
                    idx as f64 * step
                })
                .collect()
        })
        .collect();
    PhasePlan { angles }
}

fn total_energy(traj: &Trajectory, cfg: &ScenarioConfig) -> Result<f64, String> {
    match traj.protocol {
        Protocol::Fhb => fhb_total_energy(traj, cfg),
        Protocol::Pd => pd_total_energy(traj, cfg),
    }
}

fn min_ratio(harvested: &[f64], cfg: &ScenarioConfig) -> f64 {
    harvested
        .iter()
        .zip(&cfg.sensor_energy_req)
        .map(|(&h, &e)| h / e)
        .fold(f64::INFINITY, f64::min)
}

fn next_mu(mu: f64, opts: &SolverOptions) -> f64 {
    if opts.mu_schedule_literal {
        opts.mu_max
    } else {
        mu.powf(opts.mu_growth).min(opts.mu_max)
    }
}

fn finish_report(
    protocol: Protocol,
    iterations: Vec<IterationRecord>,
    traj: &Trajectory,
    plan: &PhasePlan,
    cfg: &ScenarioConfig,
    started: Instant,
    failure: Option<String>,
) -> RunReport {
    // close the approximation gap exactly before reporting
    let (repaired, mut rho, harvested) = match feasibility_repair(traj, plan, cfg) {
        Ok((r, f)) => {
            let h = harvested_energy(&r, plan, cfg).unwrap_or_default();
            (r, f, h)
        }
        Err(_) => (traj.clone(), 1.0, Vec::new()),
    };
    if failure.is_some() {
        rho = 1.0;
    }
    let energy = total_energy(&repaired, cfg).unwrap_or(f64::NAN);
    RunReport {
        protocol,
        iterations,
        trajectory: repaired,
        plan: plan.clone(),
        harvested,
        total_energy: energy,
        repair_factor: rho,
        wall_seconds: started.elapsed().as_secs_f64(),
        failure,
    }
}

/// The alternating loop shared by both protocols: repair the reference,
/// then per round rebuild the convex subproblem at the current iterate,
/// solve it, retune the phases and grow the smoothing parameter.
fn run_loop(
    cfg: &ScenarioConfig,
    opts: &SolverOptions,
    mut traj: Trajectory,
    mut plan: PhasePlan,
    tune_phases: bool,
) -> RunReport {
    let started = Instant::now();
    let protocol = traj.protocol;
    let mut iterations = Vec::new();

    // the energy-split reference requires an exactly feasible iterate
    match feasibility_repair(&traj, &plan, cfg) {
        Ok((t, _)) => traj = t,
        Err(e) => {
            return finish_report(protocol, iterations, &traj, &plan, cfg, started, Some(e))
        }
    }

    let mut mu = opts.mu0;
    let mut prev_energy = f64::INFINITY;
    let mut quiet_streak = 0usize;
    for n in 1..=opts.n_max {
        let built = match protocol {
            Protocol::Fhb => FhbIterate::new(&traj, &plan, cfg)
                .and_then(|it| build_fhb_subproblem(&it, cfg)),
            Protocol::Pd => {
                PdIterate::new(&traj, &plan, cfg).and_then(|it| build_pd_subproblem(&it, cfg))
            }
        };
        let built = match built {
            Ok(b) => b,
            Err(e) => {
                let msg = format!("iteration {n}: {e}");
                return finish_report(protocol, iterations, &traj, &plan, cfg, started, Some(msg));
            }
        };
        let (ref_eq, ref_cone) = built.reference_residuals();
        let reference_objective = built.reference_objective();
        let sol = built.program.solve(opts.cone_tol, 200);
        if sol.status != ConeStatus::Optimal {
            let msg = format!("iteration {n}: cone solve ended with {:?}", sol.status);
            return finish_report(protocol, iterations, &traj, &plan, cfg, started, Some(msg));
        }
        traj = match extract(&sol, &built.map, protocol, cfg) {
            Ok(t) => t,
            Err(e) => {
                let msg = format!("iteration {n}: {e}");
                return finish_report(protocol, iterations, &traj, &plan, cfg, started, Some(msg));
            }
        };

        let mut mm_iterations = 0;
        if tune_phases && cfg.ris_elements > 0 {
            let mm_opts = MmOptions {
                tol_rel: opts.mm_eps,
                max_iters: opts.mm_rmax,
            };
            let (next_plan, mm) = optimize_phases(&traj, cfg, &plan, mu, &mm_opts);
            plan = next_plan;
            mm_iterations = mm.iterates.len().saturating_sub(1);
        }
        mu = next_mu(mu, opts);

        let harvested = match harvested_energy(&traj, &plan, cfg) {
            Ok(h) => h,
            Err(e) => {
                return finish_report(protocol, iterations, &traj, &plan, cfg, started, Some(e))
            }
        };
        let ratio = min_ratio(&harvested, cfg);
        let energy = match total_energy(&traj, cfg) {
            Ok(v) => v,
            Err(e) => {
                return finish_report(protocol, iterations, &traj, &plan, cfg, started, Some(e))
            }
        };
        iterations.push(IterationRecord {
            n,
            total_energy: energy,
            min_ratio: ratio,
            mu,
            cone_status: sol.status,
            mm_iterations,
            ref_residual: ref_eq.max(ref_cone),
            solution_residual: sol.primal_residual.max(sol.cone_violation),
            reference_objective,
            solved_objective: sol.objective_value,
        });

        let feasible = ratio >= 1.0 - FEASIBILITY_SLACK;
        let rel = (prev_energy - energy).abs() / energy.max(1e-12);
        // require the small-change condition to hold for several consecutive
        // feasible rounds so a single flat step does not mask ongoing descent
        if n > 1 && feasible && rel < opts.outer_rel_stop {
            quiet_streak += 1;
            if quiet_streak >= 4 {
                break;
            }
        } else {
            quiet_streak = 0;
        }
        prev_energy = energy;

        // the surrogate only guarantees the approximate constraints; pull the
        // iterate back into the exact feasible set before the next round
        if !feasible {
            match feasibility_repair(&traj, &plan, cfg) {
                Ok((t, _)) => traj = t,
                Err(e) => {
                    return finish_report(
                        protocol, iterations, &traj, &plan, cfg, started, Some(e),
                    )
                }
            }
        }
    }
    finish_report(protocol, iterations, &traj, &plan, cfg, started, None)
}

/// Fly-hover-broadcast optimization from the standard starting point.
pub fn run_fhb(cfg: &ScenarioConfig, opts: &SolverOptions) -> RunReport {
    let (traj, plan) = init_fhb(cfg);
    run_loop(cfg, opts, traj, plan, true)
}

/// Path-discretized optimization from the standard starting point.
pub fn run_pd(cfg: &ScenarioConfig, opts: &SolverOptions) -> RunReport {
    let (traj, plan) = init_pd(cfg);
    run_loop(cfg, opts, traj, plan, true)
}

/// Baseline without the reflector: the same loop with zero elements, so the
/// phase stage is skipped and only the direct links charge the sensors.
pub fn run_noris(cfg: &ScenarioConfig, opts: &SolverOptions, protocol: Protocol) -> RunReport {
    let mut bare = cfg.clone();
    bare.ris_elements = 0;
    match protocol {
        Protocol::Fhb => run_fhb(&bare, opts),
        Protocol::Pd => run_pd(&bare, opts),
    }
}

/// Quantized-phase baseline: complete a continuous run, quantize its final
/// plan, then rerun the trajectory/time stage alone with the phases frozen.
pub fn run_quantized(
    cfg: &ScenarioConfig,
    opts: &SolverOptions,
    bits: u32,
    protocol: Protocol,
) -> QuantizedReport {
    let continuous = match protocol {
        Protocol::Fhb => run_fhb(cfg, opts),
        Protocol::Pd => run_pd(cfg, opts),
    };
    let plan = quantize_plan(&continuous.plan, bits);
    let quantized = run_loop(cfg, opts, continuous.trajectory.clone(), plan, false);
    QuantizedReport {
        bits,
        continuous,
        quantized,
    }
}

fn write_file(dir: &Path, name: &str, content: &str) -> std::io::Result<()> {
    std::fs::write(dir.join(name), content)
}

/// Emit the CSV bundle of a run: convergence trace, final trajectory,
/// per-segment speeds, per-slot expected received power and per-sensor
/// harvested energy.
pub fn write_csv_bundle(
    report: &RunReport,
    cfg: &ScenarioConfig,
    dir: &Path,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut conv = String::from(
        "iter,E_U_J,min_hk,mu,status,mm_iters,ref_residual,solution_residual,ref_obj_J,solved_obj_J\n",
    );
    for r in &report.iterations {
        let _ = writeln!(
            conv,
            "{},{:.9e},{:.9e},{:.4},{:?},{},{:.3e},{:.3e},{:.9e},{:.9e}",
            r.n,
            r.total_energy,
            r.min_ratio,
            r.mu,
            r.cone_status,
            r.mm_iterations,
            r.ref_residual,
            r.solution_residual,
            r.reference_objective,
            r.solved_objective
        );
    }
    write_file(dir, "convergence.csv", &conv)?;

    let traj = &report.trajectory;
    // radiating slots start at the second waypoint for both protocols
    let mut tr = String::from("idx,x_m,y_m,t_s\n");
    for (i, w) in traj.waypoints.iter().enumerate() {
        let t = if i >= 1 && i - 1 < traj.durations.len() {
            traj.durations[i - 1]
        } else {
            0.0
        };
        let _ = writeln!(tr, "{i},{:.6},{:.6},{:.6e}", w.x, w.y, t);
    }
    write_file(dir, "trajectory.csv", &tr)?;

    let v_fly = mr_speed(&cfg.rotor);
    let mut sp = String::from("segment,length_m,duration_s,speed_mps\n");
    for (l, d) in traj.segment_lengths().iter().enumerate() {
        let (t, v) = match traj.protocol {
            Protocol::Fhb => (d / v_fly, v_fly),
            Protocol::Pd => {
                let t = traj.durations[l];
                (t, if t > 0.0 { d / t } else { 0.0 })
            }
        };
        let _ = writeln!(sp, "{l},{d:.6},{t:.6e},{v:.6}");
    }
    write_file(dir, "speed.csv", &sp)?;

    let mut rp = String::from("slot,x_m,y_m");
    for k in 0..cfg.num_sensors() {
        let _ = write!(rp, ",P_hat_{k}_W");
    }
    rp.push('\n');
    for (l, q) in traj.radiating_positions().iter().enumerate() {
        let _ = write!(rp, "{l},{:.6},{:.6}", q.x, q.y);
        let phi = report.plan.phi(l);
        for k in 0..cfg.num_sensors() {
            let _ = write!(rp, ",{:.9e}", expected_power(*q, &phi, k, cfg));
        }
        rp.push('\n');
    }
    write_file(dir, "received_power.csv", &rp)?;

    let mut hv = String::from("sensor,x_m,y_m,required_J,harvested_J,ratio\n");
    for (k, s) in cfg.sensors.iter().enumerate() {
        let (req, got) = (
            cfg.sensor_energy_req[k],
            report.harvested.get(k).copied().unwrap_or(f64::NAN),
        );
        let _ = writeln!(
            hv,
            "{k},{:.6},{:.6},{:.9e},{:.9e},{:.6}",
            s.x,
            s.y,
            req,
            got,
            got / req
        );
    }
    write_file(dir, "harvested.csv", &hv)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "protocol: {:?}", report.protocol);
    let _ = writeln!(summary, "iterations: {}", report.iterations.len());
    let _ = writeln!(summary, "total_energy_J: {:.6}", report.total_energy);
    let _ = writeln!(summary, "repair_factor: {:.9}", report.repair_factor);
    let _ = writeln!(summary, "feasible: {}", report.feasible(cfg));
    let _ = writeln!(summary, "wall_seconds: {:.3}", report.wall_seconds);
    let _ = writeln!(
        summary,
        "hover_power_W: {:.4}",
        hover_power(&cfg.rotor)
    );
    if let Some(f) = &report.failure {
        let _ = writeln!(summary, "failure: {f}");
    }
    write_file(dir, "summary.txt", &summary)
}
