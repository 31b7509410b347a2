//! Acceptance suite: one test per release criterion, each printing a single
//! pass/fail line (run with --nocapture to see them).

use std::f64::consts::TAU;
use std::time::Instant;

use nalgebra::{Complex, DMatrix};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riswpt::cone::{ConeProgram, ConeStatus};
use riswpt::orchestrate::{
    run_fhb, run_pd, run_quantized, RunReport, SolverOptions, FEASIBILITY_SLACK,
};
use riswpt::phase_opt::{
    assemble_quadratics, h_value, min_h, minorizer_params, optimize_phases, smooth_objective,
    surrogate_value, MmOptions, SensorQuadratic,
};
use riswpt::power::{
    expected_power, monte_carlo_expected_power, mr_speed, PhasePlan, Protocol, Trajectory,
};
use riswpt::scenario::{default_scenario, PlanarPoint, ScenarioConfig};

fn criterion(n: u32, desc: &str, pass: bool, detail: &str) {
    println!(
        "criterion {n} ({desc}): {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} ({desc}) failed: {detail}");
}

fn random_unit_phi<R: Rng>(rng: &mut R, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..TAU)))
        .collect()
}

fn random_hover_traj<R: Rng>(rng: &mut R, hovers: usize, cfg: &ScenarioConfig) -> Trajectory {
    let mut waypoints = vec![cfg.start];
    for _ in 0..hovers {
        waypoints.push(PlanarPoint::new(
            rng.gen_range(-35.0..35.0),
            rng.gen_range(-5.0..30.0),
        ));
    }
    waypoints.push(cfg.finish);
    Trajectory {
        protocol: Protocol::Fhb,
        waypoints,
        durations: (0..hovers).map(|_| rng.gen_range(5.0..50.0)).collect(),
    }
}

#[test]
fn criterion_1_expected_power_matches_monte_carlo() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20260823);
    let m_choices = [1usize, 2, 4, 8];
    let realizations = 1_000_000u64;
    let mut worst = 0.0f64;
    for i in 0..20 {
        let mut cfg = default_scenario();
        cfg.ris_elements = m_choices[i % m_choices.len()];
        let q = PlanarPoint::new(rng.gen_range(-35.0..35.0), rng.gen_range(-5.0..30.0));
        let k = rng.gen_range(0..cfg.num_sensors());
        let phi = random_unit_phi(&mut rng, cfg.ris_elements);
        let closed = expected_power(q, &phi, k, &cfg);
        let mc = monte_carlo_expected_power(q, &phi, k, &cfg, realizations, 1000 + i as u64);
        worst = worst.max((mc - closed).abs() / closed);
    }
    criterion(
        1,
        "closed-form expected power vs Monte Carlo",
        worst < 0.01,
        &format!(
            "max rel error {worst:.5} over 20 configs at 1e6 realizations in {:.1}s",
            started.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_2_max_range_speed_checksum() {
    let cfg = default_scenario();
    let v = mr_speed(&cfg.rotor);
    criterion(
        2,
        "maximum-range speed checksum",
        (v - 18.3).abs() <= 0.2,
        &format!("v_mr = {v:.3} m/s, expected 18.3 +/- 0.2"),
    );
}

#[test]
fn criterion_3_smoothing_sandwich() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = default_scenario();
    let traj = random_hover_traj(&mut rng, 5, &cfg);
    let quads = assemble_quadratics(&traj, &cfg);
    let dim: usize = quads[0].dim();
    let k = quads.len() as f64;
    let mut worst_low = 0.0f64;
    let mut worst_high = 0.0f64;
    for _ in 0..100 {
        let mu = 10f64.powf(rng.gen_range(0.0..3.0));
        let phi = random_unit_phi(&mut rng, dim);
        let gap = min_h(&phi, &quads) - smooth_objective(&phi, &quads, mu);
        worst_low = worst_low.max(-gap);
        worst_high = worst_high.max(gap - k.ln() / mu);
    }
    criterion(
        3,
        "log-sum-exp sandwich bound",
        worst_low <= 1e-9 && worst_high <= 1e-9,
        &format!("lower slack {worst_low:.2e}, upper slack {worst_high:.2e} over 100 instances"),
    );
}

fn dense_quadratic(quad: &SensorQuadratic) -> (DMatrix<Complex<f64>>, Vec<Complex64>) {
    let n = quad.dim();
    let mut b = DMatrix::zeros(n, n);
    let mut offset = 0;
    for block in &quad.blocks {
        let m = block.psi.len();
        for i in 0..m {
            for j in 0..m {
                b[(offset + i, offset + j)] =
                    block.weight * block.psi[i] * block.psi[j].conj();
            }
        }
        offset += m;
    }
    (b, quad.linear())
}

/// Smallest eigenvalue of the exact curvature matrix of the smoothed
/// objective along the segment phi_r + gamma (phi_t - phi_r), assembled
/// densely in the doubled real representation.
fn curvature_lambda_min(
    quads: &[SensorQuadratic],
    phi_r: &[Complex64],
    phi_t: &[Complex64],
    gamma: f64,
    mu: f64,
) -> f64 {
    let n = phi_r.len();
    let phi_g: Vec<Complex64> = phi_r
        .iter()
        .zip(phi_t)
        .map(|(r, t)| r + gamma * (t - r))
        .collect();
    let h: Vec<f64> = quads.iter().map(|q| h_value(&phi_g, q)).collect();
    let h_min = h.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = h.iter().map(|&v| (-mu * (v - h_min)).exp()).collect();
    let w_sum: f64 = w.iter().sum();
    let g: Vec<f64> = w.into_iter().map(|v| v / w_sum).collect();

    let mut lambda = DMatrix::<Complex<f64>>::zeros(2 * n, 2 * n);
    let mut s = vec![Complex64::default(); 2 * n];
    for (quad, &gk) in quads.iter().zip(&g) {
        let (bk, b_lin) = dense_quadratic(quad);
        let e: Vec<Complex64> = quad
            .apply(&phi_g)
            .iter()
            .zip(&b_lin)
            .map(|(bp, bi)| bp + bi)
            .collect();
        for i in 0..n {
            for j in 0..n {
                lambda[(i, j)] += gk * bk[(i, j)];
                lambda[(n + i, n + j)] += gk * bk[(i, j)].conj();
            }
        }
        let v: Vec<Complex64> = e.iter().copied().chain(e.iter().map(|x| x.conj())).collect();
        for i in 0..2 * n {
            s[i] += gk * v[i];
            for j in 0..2 * n {
                lambda[(i, j)] -= mu * gk * v[i] * v[j].conj();
            }
        }
    }
    for i in 0..2 * n {
        for j in 0..2 * n {
            lambda[(i, j)] += mu * s[i] * s[j].conj();
        }
    }
    let eig = lambda.symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_4_minorizer_validity() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_dom = f64::NEG_INFINITY;
    let mut worst_tan = 0.0f64;
    let mut worst_curv = f64::NEG_INFINITY;
    for _ in 0..100 {
        let mut cfg = default_scenario();
        let k = rng.gen_range(1..=3usize);
        cfg.sensors.truncate(k);
        cfg.sensor_energy_req.truncate(k);
        let hovers = rng.gen_range(1..=2usize);
        cfg.ris_elements = [1usize, 2, 4, 8][rng.gen_range(0..4)];
        while cfg.ris_elements * hovers > 16 {
            cfg.ris_elements /= 2;
        }
        let traj = random_hover_traj(&mut rng, hovers, &cfg);
        let quads = assemble_quadratics(&traj, &cfg);
        let dim = quads[0].dim();
        let mu = 10f64.powf(rng.gen_range(0.0..3.0));
        let phi_r = random_unit_phi(&mut rng, dim);
        let params = minorizer_params(&phi_r, &quads, mu);

        let f_ref = smooth_objective(&phi_r, &quads, mu);
        worst_tan = worst_tan.max((surrogate_value(&phi_r, &params) - f_ref).abs());
        for _ in 0..1000 {
            let phi = random_unit_phi(&mut rng, dim);
            let gap = surrogate_value(&phi, &params) - smooth_objective(&phi, &quads, mu);
            worst_dom = worst_dom.max(gap);
        }
        for _ in 0..10 {
            let gamma: f64 = rng.gen_range(0.0..=1.0);
            let phi_t = random_unit_phi(&mut rng, dim);
            let lam = curvature_lambda_min(&quads, &phi_r, &phi_t, gamma, mu);
            worst_curv = worst_curv.max(params.alpha - lam);
        }
    }
    criterion(
        4,
        "minorizer domination, tangency and curvature bound",
        worst_dom <= 1e-9 && worst_tan <= 1e-9 && worst_curv <= 1e-9,
        &format!(
            "domination slack {worst_dom:.2e}, tangency {worst_tan:.2e}, curvature slack {worst_curv:.2e} in {:.1}s",
            started.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_5_ascent_and_tiny_instance_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // accepted objective sequence never decreases on randomized runs
    let mut worst_drop = 0.0f64;
    for _ in 0..20 {
        let mut cfg = default_scenario();
        cfg.ris_elements = [2usize, 4, 8][rng.gen_range(0..3)];
        let hovers = rng.gen_range(1..=3);
        let traj = random_hover_traj(&mut rng, hovers, &cfg);
        let plan = PhasePlan {
            angles: (0..traj.durations.len())
                .map(|_| (0..cfg.ris_elements).map(|_| rng.gen_range(0.0..TAU)).collect())
                .collect(),
        };
        let mu = 10f64.powf(rng.gen_range(0.0..3.0));
        let (_, report) = optimize_phases(&traj, &cfg, &plan, mu, &MmOptions::default());
        for pair in report.iterates.windows(2) {
            worst_drop = worst_drop.max(pair[0].f_value - pair[1].f_value);
        }
    }

    // single sensor, single hover, single element: exhaustive grid oracle
    let mut cfg = default_scenario();
    cfg.sensors.truncate(1);
    cfg.sensor_energy_req.truncate(1);
    cfg.ris_elements = 1;
    let traj = Trajectory {
        protocol: Protocol::Fhb,
        waypoints: vec![cfg.start, PlanarPoint::new(10.0, 12.0), cfg.finish],
        durations: vec![30.0],
    };
    let quads = assemble_quadratics(&traj, &cfg);
    let mut grid_best = f64::NEG_INFINITY;
    let mut theta = 0.0;
    while theta < TAU {
        let phi = vec![Complex64::from_polar(1.0, theta)];
        grid_best = grid_best.max(h_value(&phi, &quads[0]));
        theta += 0.001;
    }
    let plan = PhasePlan::uniform(1.0, 1, 1);
    let (opt_plan, _) = optimize_phases(&traj, &cfg, &plan, 100.0, &MmOptions::default());
    let phi_opt = vec![Complex64::from_polar(1.0, opt_plan.angles[0][0])];
    let converged = h_value(&phi_opt, &quads[0]);

    criterion(
        5,
        "fixed-point ascent and tiny-instance optimality",
        worst_drop <= 1e-9 && (converged - grid_best).abs() <= 1e-6,
        &format!(
            "worst objective drop {worst_drop:.2e}; converged {converged:.9} vs grid {grid_best:.9}"
        ),
    );
}

fn check_surrogate_contract(report: &RunReport) -> (f64, f64) {
    let mut worst_ref = 0.0f64;
    let mut worst_gap = 0.0f64;
    for r in &report.iterations {
        worst_ref = worst_ref.max(r.ref_residual);
        worst_gap = worst_gap
            .max(r.solved_objective - r.reference_objective * (1.0 + 1e-9) - 1e-9);
    }
    (worst_ref, worst_gap)
}

#[test]
fn criterion_6_surrogate_reference_feasible_and_descending() {
    let cfg = default_scenario();
    let opts = SolverOptions::default();
    let fhb = run_fhb(&cfg, &opts);
    let mut cfg_pd = cfg.clone();
    cfg_pd.max_segment_length = 2.0;
    let pd = run_pd(&cfg_pd, &opts);
    let (fr, fg) = check_surrogate_contract(&fhb);
    let (pr, pg) = check_surrogate_contract(&pd);
    let pass = fhb.failure.is_none()
        && pd.failure.is_none()
        && fr <= 1e-9
        && pr <= 1e-9
        && fg <= 0.0
        && pg <= 0.0;
    criterion(
        6,
        "convex surrogate tight and solved at or below reference",
        pass,
        &format!(
            "worst reference residual {:.2e}, worst objective excess {:.2e}",
            fr.max(pr),
            fg.max(pg).max(0.0)
        ),
    );
}

#[test]
fn criterion_7_end_to_end_feasibility() {
    let opts = SolverOptions::default();
    let cfg = default_scenario();
    let t0 = Instant::now();
    let fhb = run_fhb(&cfg, &opts);
    let t_fhb = t0.elapsed().as_secs_f64();
    let mut cfg_pd = cfg.clone();
    cfg_pd.max_segment_length = 2.0;
    let t1 = Instant::now();
    let pd = run_pd(&cfg_pd, &opts);
    let t_pd = t1.elapsed().as_secs_f64();
    let floor = 2e-4 * (1.0 - FEASIBILITY_SLACK);
    let min_h = |r: &RunReport| r.harvested.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = fhb.failure.is_none()
        && pd.failure.is_none()
        && min_h(&fhb) >= floor
        && min_h(&pd) >= floor
        && t_fhb < 180.0
        && t_pd < 600.0;
    criterion(
        7,
        "end-to-end energy requirements met",
        pass,
        &format!(
            "min harvested FHB {:.4e} J in {t_fhb:.1}s, PD {:.4e} J in {t_pd:.1}s (floor {floor:.4e})",
            min_h(&fhb),
            min_h(&pd)
        ),
    );
}

fn tail_converged(report: &RunReport) -> bool {
    let e: Vec<f64> = report.iterations.iter().map(|r| r.total_energy).collect();
    let window = e.len().min(5);
    e[e.len() - window..]
        .windows(2)
        .all(|p| (p[1] - p[0]).abs() / p[0] < 1e-3)
}

#[test]
fn criterion_8_energy_trends() {
    let opts = SolverOptions::default();
    let mut energies = std::collections::BTreeMap::new();
    let mut converged = true;
    for m in [0usize, 8, 16] {
        let mut cfg = default_scenario();
        cfg.ris_elements = m;
        let fhb = run_fhb(&cfg, &opts);
        let mut cfg_pd = cfg.clone();
        cfg_pd.max_segment_length = 2.0;
        let pd = run_pd(&cfg_pd, &opts);
        assert!(fhb.failure.is_none() && pd.failure.is_none());
        converged &= fhb.iterations.len() <= opts.n_max && tail_converged(&fhb);
        converged &= pd.iterations.len() <= opts.n_max && tail_converged(&pd);
        energies.insert((m, false), fhb.total_energy);
        energies.insert((m, true), pd.total_energy);
    }
    let e = |m: usize, p: Protocol| energies[&(m, matches!(p, Protocol::Pd))];
    let pass = e(8, Protocol::Pd) < e(8, Protocol::Fhb)
        && e(16, Protocol::Fhb) < e(8, Protocol::Fhb)
        && e(8, Protocol::Fhb) < e(0, Protocol::Fhb)
        && e(16, Protocol::Pd) < e(8, Protocol::Pd)
        && e(8, Protocol::Pd) < e(0, Protocol::Pd)
        && converged;
    criterion(
        8,
        "protocol and element-count energy trends",
        pass,
        &format!(
            "FHB (0/8/16): {:.1}/{:.1}/{:.1} J, PD: {:.1}/{:.1}/{:.1} J, tails converged {converged}",
            e(0, Protocol::Fhb),
            e(8, Protocol::Fhb),
            e(16, Protocol::Fhb),
            e(0, Protocol::Pd),
            e(8, Protocol::Pd),
            e(16, Protocol::Pd)
        ),
    );
}

#[test]
fn criterion_9_two_bit_baseline() {
    let cfg = default_scenario();
    let opts = SolverOptions::default();
    let q = run_quantized(&cfg, &opts, 2, Protocol::Fhb);
    let ratio = q.energy_ratio();
    let pass = q.quantized.failure.is_none()
        && q.quantized.feasible(&cfg)
        && ratio >= 1.0 - 1e-9;
    criterion(
        9,
        "2-bit phase baseline feasible with bounded loss",
        pass,
        &format!("quantized-over-continuous energy ratio {ratio:.6}"),
    );
}

#[test]
fn criterion_10_cone_solver_contract() {
    // three elementary problems solved to tight tolerance
    let tol = 1e-8;
    let mut worst_unit = 0.0f64;
    let mut unit_ok = true;

    // linear: minimize x + y subject to x + y >= 1 via slack, x, y >= 0
    let mut lp = ConeProgram::new();
    let x = lp.add_var("x");
    let y = lp.add_var("y");
    let s = lp.add_var("s");
    lp.add_objective(x, 1.0);
    lp.add_objective(y, 1.0);
    lp.add_eq(vec![(x, 1.0), (y, 1.0), (s, -1.0)], 1.0);
    for v in [x, y, s] {
        lp.mark_nonneg(v);
    }
    let sol = lp.solve(tol, 100);
    unit_ok &= sol.status == ConeStatus::Optimal && (sol.objective_value - 1.0).abs() < 1e-7;
    worst_unit = worst_unit.max(sol.primal_residual.max(sol.cone_violation));

    // second-order: minimize t subject to ||(3, 4)|| <= t
    let mut soc = ConeProgram::new();
    let t = soc.add_var("t");
    let a = soc.add_var("a");
    let b = soc.add_var("b");
    soc.add_objective(t, 1.0);
    soc.add_eq(vec![(a, 1.0)], 3.0);
    soc.add_eq(vec![(b, 1.0)], 4.0);
    soc.add_soc(vec![t, a, b]);
    let sol = soc.solve(tol, 100);
    unit_ok &= sol.status == ConeStatus::Optimal && (sol.objective_value - 5.0).abs() < 1e-7;
    worst_unit = worst_unit.max(sol.primal_residual.max(sol.cone_violation));

    // rotated: minimize r subject to x^2 <= 2 r s, x = 4, s = 2 -> r = 4
    let mut rsoc = ConeProgram::new();
    let r = rsoc.add_var("r");
    let s2 = rsoc.add_var("s");
    let x2 = rsoc.add_var("x");
    rsoc.add_objective(r, 1.0);
    rsoc.add_eq(vec![(s2, 1.0)], 2.0);
    rsoc.add_eq(vec![(x2, 1.0)], 4.0);
    rsoc.add_rsoc(vec![r, s2, x2]);
    let sol = rsoc.solve(tol, 100);
    unit_ok &= sol.status == ConeStatus::Optimal && (sol.objective_value - 4.0).abs() < 1e-7;
    worst_unit = worst_unit.max(sol.primal_residual.max(sol.cone_violation));

    // every accepted solve of a full run passes the independent check within
    // the implemented bound (10 tol with a floor for equilibration scale)
    let cfg = default_scenario();
    let opts = SolverOptions::default();
    let fhb = run_fhb(&cfg, &opts);
    let mut cfg_pd = cfg.clone();
    cfg_pd.max_segment_length = 2.0;
    let pd = run_pd(&cfg_pd, &opts);
    let run_bound = (100.0 * opts.cone_tol).max(1e-5);
    let worst_run = fhb
        .iterations
        .iter()
        .chain(&pd.iterations)
        .map(|r| r.solution_residual)
        .fold(0.0f64, f64::max);
    let runs_ok = fhb.failure.is_none() && pd.failure.is_none() && worst_run <= run_bound;

    criterion(
        10,
        "independent cone-solution verification",
        unit_ok && worst_unit <= 10.0 * tol && runs_ok,
        &format!(
            "unit-problem residuals {worst_unit:.2e} (bound {:.0e}), run residuals {worst_run:.2e} (bound {run_bound:.0e})",
            10.0 * tol
        ),
    );
}
