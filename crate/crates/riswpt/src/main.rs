//! Command-line front end: parse a scenario and options, dispatch runs and
//! sweeps, emit CSV bundles and static SVG plots.
//!
//! Exit codes: 0 success, 1 domain failure (infeasible, solver error,
//! unreadable scenario), 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riswpt::orchestrate::{
    run_fhb, run_noris, run_pd, run_quantized, write_csv_bundle, RunReport, SolverOptions,
};
use riswpt::power::{
    expected_power, monte_carlo_expected_power, mr_speed, Protocol, Trajectory,
};
use riswpt::scenario::{default_scenario, load_scenario, PlanarPoint, ScenarioConfig};

mod plot;

#[derive(Parser)]
#[command(name = "riswpt", version, about = "UAV wireless-power-transfer planner with a reflecting surface")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one mission and write its CSV bundle and plots.
    Run(RunArgs),
    /// One run per element count and protocol; merged energy-vs-M table.
    SweepM(SweepMArgs),
    /// One run per energy requirement and protocol.
    SweepEreq(SweepEreqArgs),
    /// Parse and validate a scenario file.
    Validate(ValidateArgs),
    /// Monte-Carlo validation of the closed-form expected received power.
    OracleCheck(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Fhb,
    Pd,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Fhb => Protocol::Fhb,
            ProtocolArg::Pd => Protocol::Pd,
        }
    }
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Scenario TOML file; the built-in default scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory for CSVs and plots.
    #[arg(long, default_value = "out", env = "RISWPT_OUT_DIR")]
    out_dir: PathBuf,
    /// Seed for every randomized stage.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Maximum outer iterations.
    #[arg(long)]
    n_max: Option<usize>,
    /// Cone solver tolerance.
    #[arg(long)]
    cone_tol: Option<f64>,
    /// Initial smoothing parameter.
    #[arg(long)]
    mu0: Option<f64>,
    /// Smoothing parameter ceiling.
    #[arg(long)]
    mu_max: Option<f64>,
    /// Relative objective change for early exit.
    #[arg(long)]
    outer_rel_stop: Option<f64>,
    /// Jump the smoothing parameter straight to its ceiling.
    #[arg(long)]
    mu_schedule_literal: bool,
    /// Override the segment-length cap (meters).
    #[arg(long)]
    max_segment_length: Option<f64>,
}

impl CommonArgs {
    fn solver_options(&self) -> Result<SolverOptions, String> {
        let mut opts = SolverOptions::default();
        if let Some(v) = self.n_max {
            opts.n_max = v;
        }
        if let Some(v) = self.cone_tol {
            opts.cone_tol = v;
        }
        if let Some(v) = self.mu0 {
            opts.mu0 = v;
        }
        if let Some(v) = self.mu_max {
            opts.mu_max = v;
        }
        if let Some(v) = self.outer_rel_stop {
            opts.outer_rel_stop = v;
        }
        opts.mu_schedule_literal = self.mu_schedule_literal;
        opts.validate()?;
        Ok(opts)
    }

    fn load(&self) -> Result<ScenarioConfig, String> {
        let mut cfg = match &self.scenario {
            Some(path) => load_scenario(path)
                .map_err(|e| format!("scenario {}: {e}", path.display()))?,
            None => default_scenario(),
        };
        if let Some(cap) = self.max_segment_length {
            cfg.max_segment_length = cap;
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value = "fhb")]
    protocol: ProtocolArg,
    /// Override the reflecting element count.
    #[arg(long)]
    m: Option<usize>,
    /// Run the quantized-phase baseline with this resolution.
    #[arg(long)]
    bits: Option<u32>,
    /// Drop the reflector entirely (same as --m 0).
    #[arg(long)]
    no_ris: bool,
}

#[derive(Args)]
struct SweepMArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Element counts to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [0usize, 8, 16])]
    m: Vec<usize>,
    /// Parallel sweep cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct SweepEreqArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Per-sensor energy requirements in joules.
    #[arg(long, value_delimiter = ',', default_values_t = [2e-5, 2e-4])]
    ereq: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ValidateArgs {
    scenario: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    /// Realizations per configuration.
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Randomized configurations to test.
    #[arg(long, default_value_t = 20)]
    configs: usize,
}

fn mission_time(traj: &Trajectory, cfg: &ScenarioConfig) -> f64 {
    let radiate: f64 = traj.durations.iter().sum();
    match traj.protocol {
        Protocol::Fhb => {
            radiate + traj.segment_lengths().iter().sum::<f64>() / mr_speed(&cfg.rotor)
        }
        Protocol::Pd => radiate,
    }
}

fn report_plots(report: &RunReport, cfg: &ScenarioConfig, dir: &Path) -> std::io::Result<()> {
    let energy: Vec<(f64, f64)> = report
        .iterations
        .iter()
        .map(|r| (r.n as f64, r.total_energy))
        .collect();
    let svg = plot::line_plot(
        "outer iteration",
        "mission energy (J)",
        &[plot::Series::line("E_U", &energy)],
    );
    std::fs::write(dir.join("convergence.svg"), svg)?;

    let path: Vec<(f64, f64)> = report
        .trajectory
        .waypoints
        .iter()
        .map(|w| (w.x, w.y))
        .collect();
    let sensors: Vec<(f64, f64)> = cfg.sensors.iter().map(|s| (s.x, s.y)).collect();
    let ris = vec![(cfg.ris_position.x, cfg.ris_position.y)];
    let svg = plot::line_plot(
        "x (m)",
        "y (m)",
        &[
            plot::Series::line("path", &path),
            plot::Series::scatter("sensors", &sensors),
            plot::Series::scatter("reflector", &ris),
        ],
    );
    std::fs::write(dir.join("trajectory.svg"), svg)
}

fn cmd_run(args: &RunArgs) -> Result<bool, String> {
    let mut cfg = args.common.load()?;
    if let Some(m) = args.m {
        cfg.ris_elements = m;
    }
    if args.no_ris {
        cfg.ris_elements = 0;
    }
    let opts = args.common.solver_options()?;
    let protocol: Protocol = args.protocol.into();
    let dir = &args.common.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| format!("out dir {}: {e}", dir.display()))?;

    let (report, note) = if let Some(bits) = args.bits {
        let q = run_quantized(&cfg, &opts, bits, protocol);
        write_csv_bundle(&q.continuous, &cfg, &dir.join("continuous"))
            .map_err(|e| e.to_string())?;
        let note = format!(
            "quantized-vs-continuous energy ratio ({bits} bit): {:.6}\n",
            q.energy_ratio()
        );
        (q.quantized, note)
    } else if cfg.ris_elements == 0 {
        (run_noris(&cfg, &opts, protocol), String::new())
    } else {
        let r = match protocol {
            Protocol::Fhb => run_fhb(&cfg, &opts),
            Protocol::Pd => run_pd(&cfg, &opts),
        };
        (r, String::new())
    };

    write_csv_bundle(&report, &cfg, dir).map_err(|e| e.to_string())?;
    report_plots(&report, &cfg, dir).map_err(|e| e.to_string())?;
    if !note.is_empty() {
        print!("{note}");
        std::fs::OpenOptions::new()
            .append(true)
            .open(dir.join("summary.txt"))
            .and_then(|mut f| std::io::Write::write_all(&mut f, note.as_bytes()))
            .map_err(|e| e.to_string())?;
    }
    println!(
        "{:?}: energy {:.3} J, {} iterations, repair {:.6}, feasible {}",
        report.protocol,
        report.total_energy,
        report.iterations.len(),
        report.repair_factor,
        report.feasible(&cfg)
    );
    if let Some(f) = &report.failure {
        eprintln!("run aborted: {f}");
        return Ok(false);
    }
    Ok(report.feasible(&cfg))
}

/// Run sweep cells in batches of `jobs` threads, keeping the output order.
fn run_cells<T: Sync>(cells: Vec<T>, jobs: usize, f: impl Fn(&T) -> CellResult + Sync) -> Vec<CellResult> {
    let jobs = jobs.max(1);
    let mut out = Vec::with_capacity(cells.len());
    for batch in cells.chunks(jobs) {
        let results: Vec<CellResult> = std::thread::scope(|scope| {
            let handles: Vec<_> = batch.iter().map(|cell| scope.spawn(|| f(cell))).collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        out.extend(results);
    }
    out
}

struct CellResult {
    label: String,
    energy: f64,
    time: f64,
    iterations: usize,
    feasible: bool,
    failure: Option<String>,
}

fn sweep_cell(cfg: &ScenarioConfig, opts: &SolverOptions, protocol: Protocol, label: String) -> CellResult {
    let report = match protocol {
        Protocol::Fhb => run_fhb(cfg, opts),
        Protocol::Pd => run_pd(cfg, opts),
    };
    CellResult {
        label,
        energy: report.total_energy,
        time: mission_time(&report.trajectory, cfg),
        iterations: report.iterations.len(),
        feasible: report.feasible(cfg),
        failure: report.failure.clone(),
    }
}

fn cmd_sweep_m(args: &SweepMArgs) -> Result<bool, String> {
    let base = args.common.load()?;
    let opts = args.common.solver_options()?;
    let dir = &args.common.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;

    let cells: Vec<(usize, Protocol)> = args
        .m
        .iter()
        .flat_map(|&m| [(m, Protocol::Fhb), (m, Protocol::Pd)])
        .collect();
    let results = run_cells(cells.clone(), args.jobs, |&(m, protocol)| {
        let mut cfg = base.clone();
        cfg.ris_elements = m;
        sweep_cell(&cfg, &opts, protocol, format!("{m},{protocol:?}"))
    });

    let mut csv = String::from("m,protocol,E_U_J,mission_time_s,iterations,feasible\n");
    let mut ok = true;
    for r in &results {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{},{}\n",
            r.label, r.energy, r.time, r.iterations, r.feasible
        ));
        if let Some(f) = &r.failure {
            eprintln!("cell {}: {f}", r.label);
            ok = false;
        }
        ok &= r.feasible;
    }
    std::fs::write(dir.join("energy_vs_m.csv"), &csv).map_err(|e| e.to_string())?;

    // qualitative trend summary
    for (i, &m) in args.m.iter().enumerate() {
        let fhb = results[2 * i].energy;
        let pd = results[2 * i + 1].energy;
        println!(
            "M={m}: FHB {fhb:.2} J, PD {pd:.2} J, PD<FHB {}",
            pd < fhb
        );
    }
    let series: Vec<plot::Series> = [Protocol::Fhb, Protocol::Pd]
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let pts: Vec<(f64, f64)> = args
                .m
                .iter()
                .enumerate()
                .map(|(i, &m)| (m as f64, results[2 * i + j].energy))
                .collect();
            plot::Series::owned_line(format!("{p:?}"), pts)
        })
        .collect();
    let svg = plot::line_plot("reflecting elements M", "mission energy (J)", &series);
    std::fs::write(dir.join("energy_vs_m.svg"), svg).map_err(|e| e.to_string())?;
    Ok(ok)
}

fn cmd_sweep_ereq(args: &SweepEreqArgs) -> Result<bool, String> {
    let base = args.common.load()?;
    let opts = args.common.solver_options()?;
    let dir = &args.common.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;

    let cells: Vec<(f64, Protocol)> = args
        .ereq
        .iter()
        .flat_map(|&e| [(e, Protocol::Fhb), (e, Protocol::Pd)])
        .collect();
    let results = run_cells(cells, args.jobs, |&(e, protocol)| {
        let mut cfg = base.clone();
        for req in cfg.sensor_energy_req.iter_mut() {
            *req = e;
        }
        sweep_cell(&cfg, &opts, protocol, format!("{e:.3e},{protocol:?}"))
    });

    let mut csv = String::from("ereq_J,protocol,E_U_J,mission_time_s,iterations,feasible\n");
    let mut ok = true;
    for r in &results {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{},{}\n",
            r.label, r.energy, r.time, r.iterations, r.feasible
        ));
        if let Some(f) = &r.failure {
            eprintln!("cell {}: {f}", r.label);
            ok = false;
        }
        ok &= r.feasible;
    }
    std::fs::write(dir.join("energy_vs_ereq.csv"), &csv).map_err(|e| e.to_string())?;
    for r in &results {
        println!("E_req,protocol {}: {:.2} J, {:.1} s", r.label, r.energy, r.time);
    }
    Ok(ok)
}

fn cmd_validate(args: &ValidateArgs) -> Result<bool, String> {
    let cfg = load_scenario(&args.scenario)
        .map_err(|e| format!("scenario {}: {e}", args.scenario.display()))?;
    cfg.validate().map_err(|e| e.to_string())?;
    println!(
        "ok: {} sensors, {} elements, radiated power {} W",
        cfg.num_sensors(),
        cfg.ris_elements,
        cfg.radiated_power
    );
    Ok(true)
}

fn cmd_oracle_check(args: &OracleArgs) -> Result<bool, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    // standard-error scaling: the 1% bound is only meaningful with enough
    // realizations, smaller sample counts get the documented looser bound
    let bound = if args.samples >= 100_000 { 0.01 } else { 0.1 };
    let m_choices = [1usize, 2, 4, 8];
    let mut worst = 0.0f64;
    let mut worst_desc = String::new();
    for i in 0..args.configs {
        let mut cfg = default_scenario();
        cfg.ris_elements = m_choices[i % m_choices.len()];
        let q = PlanarPoint::new(rng.gen_range(-35.0..35.0), rng.gen_range(-5.0..30.0));
        let k = rng.gen_range(0..cfg.num_sensors());
        let phi: Vec<_> = (0..cfg.ris_elements)
            .map(|_| {
                let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                num_complex::Complex64::from_polar(1.0, a)
            })
            .collect();
        let closed = expected_power(q, &phi, k, &cfg);
        let mc = monte_carlo_expected_power(q, &phi, k, &cfg, args.samples, args.seed + i as u64);
        let rel = (mc - closed).abs() / closed;
        if rel > worst {
            worst = rel;
            worst_desc = format!(
                "config {i}: M={}, uav=({:.2},{:.2}), sensor {k}, closed {closed:.6e}, mc {mc:.6e}",
                cfg.ris_elements, q.x, q.y
            );
        }
    }
    println!("max relative error over {} configs: {worst:.5} (bound {bound})", args.configs);
    if worst >= bound {
        eprintln!("worst case: {worst_desc}");
        return Ok(false);
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::SweepM(a) => cmd_sweep_m(a),
        Command::SweepEreq(a) => cmd_sweep_ereq(a),
        Command::Validate(a) => cmd_validate(a),
        Command::OracleCheck(a) => cmd_oracle_check(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
