//! Command-line driver for the domain/eigen/simulation pipeline.
//!
//! Every subcommand routes randomness through `--seed`, so a rerun with the
//! same arguments produces byte-identical CSV/JSON/SVG outputs.  Exit codes:
//! 0 success, 1 failed checks or runtime errors, 2 usage/config errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use hotspots_core::coupling::coupling_records_csv;
use hotspots_core::experiments::{
    coupling_probability_study, coupling_summary_csv, domain_figure, hotspots_verdict,
    run_full_study, survival_figure, tails_csv, write_artifacts, StudyConfig,
};
use hotspots_core::geometry::{
    build_domain, build_quarter, export_domain, import_domain, p2, DomainParams, DomainSpec,
    EdgeTag, P2,
};
use hotspots_core::rbm::{simulate, survival_curve, trace_csv, SimConfig, Stepper, TraceRow};
use hotspots_core::spectral::{
    eigenfunction_csv, extrema_report, mesh_svg, mixed_ground_state, second_neumann,
    symmetric_ring_mesh, triangulate, EigenOpts, Mesh, MeshOptions,
};

#[derive(Parser)]
#[command(
    name = "hotspots",
    version,
    about = "Build the horn-and-tube ring domain, solve its Neumann spectrum, \
             simulate reflected paths, and run coupled-path studies"
)]
struct Cli {
    /// Cap worker threads (fallback: HOTSPOTS_JOBS, then all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Emit a domain boundary file (and optional SVG sketch)
    Domain(DomainArgs),
    /// Triangulate a domain and emit the mesh file plus an SVG
    Mesh(MeshArgs),
    /// Solve the eigenproblem on a mesh; emit CSV field + JSON summary
    Eigen(MeshArgs),
    /// Extrema margins of the second Neumann mode across mesh resolutions
    Verdict(VerdictArgs),
    /// Reflected-path survival curves on the quarter domain
    Rbm(RbmArgs),
    /// Staged coupled-path runs at one horn width
    Couple(CoupleArgs),
    /// Full study suite from a JSON config (flags override the file)
    Study(StudyArgs),
}

#[derive(Args)]
struct DomainArgs {
    /// Horn half-width at the open left end (length units)
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Tube half-width at the narrow end (length units)
    #[arg(long, default_value_t = 0.01)]
    epsilon0: f64,
    /// Build the quarter domain (absorbing cut + one wall pair) instead of
    /// the full ring
    #[arg(long)]
    quarter: bool,
    /// Output file for the boundary; stdout when omitted
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also write an SVG sketch here
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct MeshArgs {
    /// Read the domain from a boundary file instead of building it
    #[arg(long)]
    domain: Option<PathBuf>,
    /// Horn half-width at the open left end (length units)
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Tube half-width at the narrow end (length units)
    #[arg(long, default_value_t = 0.01)]
    epsilon0: f64,
    /// Build the quarter domain instead of the full ring
    #[arg(long)]
    quarter: bool,
    /// Target mesh edge length (length units)
    #[arg(long, default_value_t = 0.02)]
    h: f64,
    /// Output directory
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct VerdictArgs {
    /// Horn half-width at the open left end (length units)
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Tube half-width at the narrow end (length units)
    #[arg(long, default_value_t = 0.01)]
    epsilon0: f64,
    /// Mesh edge lengths, coarse to fine, comma-separated (length units)
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.01")]
    h: Vec<f64>,
    /// Output file for the JSON report; stdout when omitted
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RbmArgs {
    /// Horn half-width at the open left end (length units)
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Tube half-width at the narrow end (length units)
    #[arg(long, default_value_t = 0.01)]
    epsilon0: f64,
    /// Euler time step (time units)
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Paths per start point
    #[arg(long, default_value_t = 2000)]
    n_paths: usize,
    /// Survival evaluation times, comma-separated (time units)
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2,4")]
    t_grid: Vec<f64>,
    /// Start points as flattened x,y pairs
    #[arg(long, value_delimiter = ',', default_value = "0,0,0.5,0")]
    start: Vec<f64>,
    /// Master seed; all path streams derive from it
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Also write a step trace of path 0 from the first start
    #[arg(long)]
    trace: bool,
    /// Output directory
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CoupleArgs {
    /// Horn half-width (length units); the tube width is epsilon/10
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Inner-window scale factor in (0, 1]
    #[arg(long, default_value_t = 0.5)]
    c_star: f64,
    /// Mesh edge length for the level-curve solve (length units)
    #[arg(long, default_value_t = 0.02)]
    h: f64,
    /// Euler time step for the coupled paths (time units)
    #[arg(long, default_value_t = 1e-5)]
    dt: f64,
    /// Number of staged runs
    #[arg(long, default_value_t = 1000)]
    n_runs: usize,
    /// Tail-table times, comma-separated (time units)
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2,4")]
    t_grid: Vec<f64>,
    /// Master seed; all run streams derive from it
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Output directory
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    /// JSON config file mirroring the study configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override: horn half-widths, comma-separated (length units)
    #[arg(long, value_delimiter = ',')]
    eps_grid: Option<Vec<f64>>,
    /// Override: tube half-widths for the eigenvalue trend (length units)
    #[arg(long, value_delimiter = ',')]
    eps0_grid: Option<Vec<f64>>,
    /// Override: inner-window scale factor in (0, 1]
    #[arg(long)]
    c_star: Option<f64>,
    /// Override: mesh edge lengths, coarse to fine (length units)
    #[arg(long, value_delimiter = ',')]
    h: Option<Vec<f64>>,
    /// Override: Euler step for coupled paths (time units)
    #[arg(long)]
    dt: Option<f64>,
    /// Override: Monte Carlo paths/runs per study
    #[arg(long)]
    n_paths: Option<usize>,
    /// Override: tail/survival times, comma-separated (time units)
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    /// Override: master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override: output directory
    #[arg(short, long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Run(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> CliError {
        CliError::Usage(msg.into())
    }
    fn run(msg: impl Into<String>) -> CliError {
        CliError::Run(msg.into())
    }
}

/// Parse and dispatch; returns the process exit code.  Callable from tests.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_jobs(cli.jobs);
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(CliError::Run(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

fn configure_jobs(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("HOTSPOTS_JOBS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(n) = n.filter(|&n| n > 0) {
        // Already-built pools (e.g. a second call in the same process) keep
        // their size; that is fine for determinism, which never depends on
        // thread count.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn dispatch(cmd: Cmd) -> Result<i32, CliError> {
    match cmd {
        Cmd::Domain(a) => cmd_domain(a),
        Cmd::Mesh(a) => cmd_mesh(a, false),
        Cmd::Eigen(a) => cmd_mesh(a, true),
        Cmd::Verdict(a) => cmd_verdict(a),
        Cmd::Rbm(a) => cmd_rbm(a),
        Cmd::Couple(a) => cmd_couple(a),
        Cmd::Study(a) => cmd_study(a),
    }
}

fn check_pos(key: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::usage(format!("{key}: must be positive and finite, got {v}")))
    }
}

fn params_from(key_eps: f64, eps0: f64) -> Result<DomainParams, CliError> {
    check_pos("epsilon", key_eps)?;
    check_pos("epsilon0", eps0)?;
    if eps0 >= key_eps {
        return Err(CliError::usage(format!(
            "epsilon0: must be smaller than epsilon ({eps0} >= {key_eps})"
        )));
    }
    Ok(DomainParams {
        epsilon: key_eps,
        epsilon0: eps0,
        ..DomainParams::default()
    })
}

fn build_spec(params: &DomainParams, quarter: bool) -> Result<DomainSpec, CliError> {
    let r = if quarter { build_quarter(params) } else { build_domain(params) };
    r.map_err(|e| CliError::run(format!("domain construction failed: {e}")))
}

fn write_out(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)
                .map_err(|e| CliError::run(format!("cannot create {}: {e}", dir.display())))?;
        }
    }
    fs::write(path, content)
        .map_err(|e| CliError::run(format!("cannot write {}: {e}", path.display())))
}

fn cmd_domain(a: DomainArgs) -> Result<i32, CliError> {
    let params = params_from(a.epsilon, a.epsilon0)?;
    let spec = build_spec(&params, a.quarter)?;
    let text = export_domain(&spec);
    match &a.out {
        Some(p) => write_out(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(p) = &a.svg {
        write_out(p, &domain_figure(&spec, None, None, None))?;
    }
    Ok(0)
}

/// Shared mesh/eigen driver: `solve` additionally runs the eigenproblem.
fn cmd_mesh(a: MeshArgs, solve: bool) -> Result<i32, CliError> {
    check_pos("h", a.h)?;
    let opts = MeshOptions::new(a.h);
    let mesh: Mesh = match &a.domain {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::run(format!("cannot read {}: {e}", path.display())))?;
            let spec = import_domain(&text)
                .map_err(|e| CliError::usage(format!("domain file: {e}")))?;
            triangulate(&spec, &opts).map_err(|e| CliError::run(format!("meshing failed: {e}")))?
        }
        None => {
            let params = params_from(a.epsilon, a.epsilon0)?;
            if a.quarter {
                let spec = build_spec(&params, true)?;
                triangulate(&spec, &opts)
                    .map_err(|e| CliError::run(format!("meshing failed: {e}")))?
            } else {
                symmetric_ring_mesh(&params, &opts)
                    .map_err(|e| CliError::run(format!("meshing failed: {e}")))?
            }
        }
    };
    fs::create_dir_all(&a.out)
        .map_err(|e| CliError::run(format!("cannot create {}: {e}", a.out.display())))?;
    if !solve {
        write_out(&a.out.join("mesh.txt"), &mesh.export())?;
        write_out(&a.out.join("mesh.svg"), &mesh_svg(&mesh, None))?;
        println!(
            "mesh: {} nodes, {} triangles, min angle {:.1} deg",
            mesh.n_nodes(),
            mesh.n_tris(),
            mesh.min_angle_deg()
        );
        return Ok(0);
    }
    let mixed = mesh.boundary.iter().any(|e| e.tag == EdgeTag::DirichletD);
    let rep = if mixed {
        mixed_ground_state(&mesh, &EigenOpts::default())
    } else {
        second_neumann(&mesh, &EigenOpts::default())
    };
    let ext = extrema_report(&mesh, &rep.phi);
    let summary = serde_json::json!({
        "mode": if mixed { "mixed_ground_state" } else { "second_neumann" },
        "lambdas": rep.lambdas,
        "residuals": rep.residuals,
        "gap_ratio": rep.gap_ratio,
        "n_dofs": rep.n_dofs,
        "max_val": ext.max_val,
        "max_pos": [ext.max_pos.x, ext.max_pos.y],
        "min_val": ext.min_val,
        "min_pos": [ext.min_pos.x, ext.min_pos.y],
        "margin_high": ext.margin_high,
        "margin_low": ext.margin_low,
    });
    write_out(&a.out.join("eigen.csv"), &eigenfunction_csv(&mesh, &rep.phi))?;
    write_out(
        &a.out.join("summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    write_out(&a.out.join("eigen.svg"), &mesh_svg(&mesh, Some(&rep.phi)))?;
    println!(
        "{}: lambda = {:.6}, {} dofs",
        if mixed { "mixed ground state" } else { "second Neumann" },
        if mixed { rep.lambdas[0] } else { rep.lambdas[1] },
        rep.n_dofs
    );
    Ok(0)
}

fn cmd_verdict(a: VerdictArgs) -> Result<i32, CliError> {
    let params = params_from(a.epsilon, a.epsilon0)?;
    if a.h.len() < 2 {
        return Err(CliError::usage("h: verdict needs at least two mesh resolutions"));
    }
    for &h in &a.h {
        check_pos("h", h)?;
    }
    let v = hotspots_verdict(&params, &a.h).map_err(CliError::run)?;
    let json = serde_json::to_string_pretty(&v).expect("verdict serializes");
    match &a.out {
        Some(p) => write_out(p, &json)?,
        None => println!("{json}"),
    }
    let last = v.rows.last().unwrap();
    println!(
        "verdict: {:?}; finest margins high {:.3e} (err {:.1e}), low {:.3e} (err {:.1e})",
        v.kind, last.margin_high, v.margin_high_err, last.margin_low, v.margin_low_err
    );
    Ok(0)
}

fn cmd_rbm(a: RbmArgs) -> Result<i32, CliError> {
    check_pos("dt", a.dt)?;
    if a.n_paths == 0 {
        return Err(CliError::usage("n_paths: must be at least 1"));
    }
    if a.t_grid.is_empty() || a.t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::usage("t_grid: must be ascending and nonempty"));
    }
    if a.start.is_empty() || a.start.len() % 2 != 0 {
        return Err(CliError::usage("start: expected flattened x,y pairs"));
    }
    let starts: Vec<P2> = a.start.chunks(2).map(|c| p2(c[0], c[1])).collect();
    let params = params_from(a.epsilon, a.epsilon0)?;
    // Survival needs the absorbing cut, so this always runs on the quarter.
    let spec = build_spec(&params, true)?;
    let stepper = Stepper::new(spec);
    let cfg = SimConfig::new(a.dt, a.seed);
    let table = survival_curve(&stepper, &starts, &a.t_grid, a.n_paths, &cfg)
        .map_err(|e| CliError::run(format!("survival runs failed: {e:?}")))?;
    fs::create_dir_all(&a.out)
        .map_err(|e| CliError::run(format!("cannot create {}: {e}", a.out.display())))?;
    write_out(&a.out.join("survival.csv"), &table.csv())?;
    write_out(&a.out.join("survival.svg"), &survival_figure(&table))?;
    if a.trace {
        let mut rows: Vec<TraceRow> = Vec::new();
        let t_end = *a.t_grid.last().unwrap();
        let cfg_t = SimConfig::new(a.dt, a.seed).with_max_time(t_end);
        simulate(&stepper, starts[0], &cfg_t, 0, |_, _| false, Some(&mut rows))
            .map_err(|e| CliError::run(format!("trace path failed: {e:?}")))?;
        write_out(&a.out.join("trace.csv"), &trace_csv(&rows))?;
    }
    for (si, s) in table.starts.iter().enumerate() {
        println!(
            "start ({}, {}): survival at t={} is {:.4}",
            s.x,
            s.y,
            table.t_grid.last().unwrap(),
            table.p[si].last().unwrap()
        );
    }
    Ok(0)
}

fn cmd_couple(a: CoupleArgs) -> Result<i32, CliError> {
    check_pos("epsilon", a.epsilon)?;
    check_pos("h", a.h)?;
    check_pos("dt", a.dt)?;
    if !(a.c_star > 0.0 && a.c_star <= 1.0) {
        return Err(CliError::usage(format!("c_star: must lie in (0, 1], got {}", a.c_star)));
    }
    if a.n_runs == 0 {
        return Err(CliError::usage("n_runs: must be at least 1"));
    }
    let (study, batches) = coupling_probability_study(
        &[a.epsilon],
        a.c_star,
        a.h,
        a.dt,
        a.n_runs,
        a.seed,
        &a.t_grid,
    )
    .map_err(CliError::run)?;
    fs::create_dir_all(&a.out)
        .map_err(|e| CliError::run(format!("cannot create {}: {e}", a.out.display())))?;
    write_out(&a.out.join("coupling_summary.csv"), &coupling_summary_csv(&study))?;
    write_out(&a.out.join("coupling_tails.csv"), &tails_csv(&study))?;
    for (eps, records) in &batches {
        write_out(
            &a.out.join(format!("coupling_runs_eps{eps}.csv")),
            &coupling_records_csv(records),
        )?;
    }
    let r = &study.rows[0];
    println!(
        "eps {}: {} runs, lower-first {:?}, upper-first-and-left {:?}, censored {}",
        r.eps, r.n_runs, r.p_bad, r.p_good, r.n_censored
    );
    Ok(0)
}

fn cmd_study(a: StudyArgs) -> Result<i32, CliError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::run(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<StudyConfig>(&text)
                .map_err(|e| CliError::usage(format!("config: {e}")))?
        }
        None => StudyConfig::default(),
    };
    if let Some(v) = a.eps_grid {
        cfg.eps_grid = v;
    }
    if let Some(v) = a.eps0_grid {
        cfg.eps0_grid = v;
    }
    if let Some(v) = a.c_star {
        cfg.c_star = v;
    }
    if let Some(v) = a.h {
        cfg.h_grid = v;
    }
    if let Some(v) = a.dt {
        cfg.dt = v;
    }
    if let Some(v) = a.n_paths {
        cfg.n_paths = v;
    }
    if let Some(v) = a.t_grid {
        cfg.t_grid = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.out {
        cfg.out_dir = v;
    }
    cfg.validate().map_err(CliError::Usage)?;
    let (report, artifacts) = run_full_study(&cfg).map_err(CliError::Run)?;
    write_artifacts(&cfg.out_dir, &artifacts)
        .map_err(|e| CliError::run(format!("cannot write artifacts: {e}")))?;
    print!("{}", report.summary());
    println!(
        "wrote {} artifacts to {} (config {})",
        artifacts.len(),
        cfg.out_dir.display(),
        &report.config_hash[..12]
    );
    Ok(if report.failed().is_empty() { 0 } else { 1 })
}
