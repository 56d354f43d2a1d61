//! `gbu`: command-line laboratory for gradient blow-up experiments.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 time resolution
//! exhausted (underflow), 3 scientific assertion failed.

mod config;

use clap::{Parser, Subcommand};
use config::{InitialConfig, RunConfig};
use gbu_core::certifier::{certify_all, ParamGrid};
use gbu_core::estimates::{bernstein_profile, scan_functional_j, Variant};
use gbu_core::geometry::{build_mesh, Mesh};
use gbu_core::minimal::{
    bisect_lambda_star, probe_at_lambda, validate_initial_class, BisectConfig,
};
use gbu_core::rates::fit_blowup;
use gbu_core::solver::{run, Outcome, Problem, RunResult, StepControl, Trace, TraceSample};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "gbu", version, about = "Gradient blow-up numerical laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a configured simulation; writes trace.csv and manifest.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the blow-up model m = C (T - t)^{-gamma} to a trace CSV.
    Fit {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        decades: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a simulation and report the Bernstein boundary-layer profile.
    Bernstein {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scan the (epsilon, kappa) grid for a sign-definite J functional.
    Functional {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify the analytic inequality families on a parameter grid.
    Certify {
        /// Add an extra p value to the default grid.
        #[arg(long)]
        p_extend: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bisect the critical amplitude lambda* for u0 = lambda phi, h = 0.
    Bisect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lambda_lo: f64,
        #[arg(long)]
        lambda_hi: f64,
        #[arg(long, default_value_t = 1e-3)]
        rel_tol: f64,
        #[arg(long, default_value_t = 1.0)]
        settle_threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probe the singular-rate signature of a run at a given amplitude.
    Singular {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        decades: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Command-level failure carrying the exit code contract.
enum CliError {
    Usage(String),
    Assertion(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Assertion(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Assertion(m) => m,
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate { config, out } => cmd_simulate(&config, out),
        Cmd::Fit { trace, decades, out } => cmd_fit(&trace, decades, out),
        Cmd::Bernstein { config, out } => cmd_bernstein(&config, out),
        Cmd::Functional { config, out } => cmd_functional(&config, out),
        Cmd::Certify { p_extend, out } => cmd_certify(p_extend, out),
        Cmd::Bisect {
            config,
            lambda_lo,
            lambda_hi,
            rel_tol,
            settle_threshold,
            out,
        } => cmd_bisect(&config, lambda_lo, lambda_hi, rel_tol, settle_threshold, out),
        Cmd::Singular { config, lambda, decades, out } => {
            cmd_singular(&config, lambda, decades, out)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
}

fn out_dir(cli_out: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cli_out
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os("GBU_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(usage)?;
    Ok(dir)
}

/// Write via a temp file + rename so readers never see partial output.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    fs::write(&tmp, bytes).map_err(usage)?;
    fs::rename(&tmp, path).map_err(usage)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(usage)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn trace_csv(trace: &Trace) -> Vec<u8> {
    let mut out = String::from("t,m,sup_u,sup_ut,u_nu_boundary,bernstein_sup\n");
    for s in &trace.samples {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.t, s.m, s.sup_u, s.sup_ut, s.u_nu_boundary, s.bernstein_sup
        ));
    }
    out.into_bytes()
}

/// FNV-1a over the canonical JSON bytes of the parsed config.
fn config_hash(cfg: &RunConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in &bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

fn build_problem(cfg: &RunConfig) -> Result<(Mesh, Problem), CliError> {
    let mesh = build_mesh(cfg.domain, cfg.mesh.cells, cfg.mesh.grading).map_err(usage)?;
    let h = cfg.forcing.field(&mesh);
    let u0 = cfg.initial.field(&mesh).map_err(CliError::Usage)?;
    let problem = Problem::new(&mesh, cfg.p, h, u0, cfg.solver.t_max, cfg.solver.g_max)
        .map_err(usage)?;
    Ok((mesh, problem))
}

fn step_control(cfg: &RunConfig) -> StepControl {
    StepControl {
        safety: cfg.solver.safety,
        sample_ratio: cfg.solver.sample_ratio,
        keep_states: cfg.solver.keep_states,
        ..StepControl::default()
    }
}

fn execute(cfg: &RunConfig) -> Result<(Mesh, Problem, RunResult, f64), CliError> {
    let (mesh, problem) = build_problem(cfg)?;
    let start = Instant::now();
    let result = run(&problem, &mesh, &step_control(cfg));
    Ok((mesh, problem, result, start.elapsed().as_secs_f64()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a RunConfig,
    config_hash: String,
    version: &'static str,
    determinism: &'static str,
    outcome: Outcome,
    steps: u64,
    g_stop: f64,
    n_nodes: usize,
    h_min: f64,
    wall_time_s: f64,
}

fn cmd_simulate(config: &Path, out: Option<PathBuf>) -> Result<u8, CliError> {
    let cfg = load_config(config)?;
    if cfg.analysis.assert_rate && cfg.p <= 2.0 {
        return Err(usage("rate checks require p>2"));
    }
    let dir = out_dir(out, &cfg)?;
    let (mesh, problem, result, wall) = execute(&cfg)?;
    write_atomic(&dir.join("trace.csv"), &trace_csv(&result.trace))?;
    let manifest = Manifest {
        config: &cfg,
        config_hash: config_hash(&cfg),
        version: env!("CARGO_PKG_VERSION"),
        determinism: "no randomness; identical config yields a bit-identical trace",
        outcome: result.trace.outcome,
        steps: result.steps,
        g_stop: result.g_stop,
        n_nodes: mesh.n_nodes(),
        h_min: mesh.h_min(),
        wall_time_s: wall,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    if cfg.analysis.bernstein {
        let report = bernstein_profile(&result.final_state, &mesh, &problem.exponents)
            .map_err(|e| CliError::Assertion(e.to_string()))?;
        write_json(&dir.join("bernstein.json"), &report)?;
    }
    if cfg.analysis.assert_rate {
        let fit = fit_blowup(&result.trace, cfg.analysis.rate_window_decades)
            .map_err(|e| CliError::Assertion(e.to_string()))?;
        write_json(&dir.join("ratefit.json"), &fit)?;
    }
    Ok(match result.trace.outcome {
        Outcome::Underflow => 2,
        _ => 0,
    })
}

fn read_trace_csv(path: &Path) -> Result<Trace, CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let expected = ["t", "m", "sup_u", "sup_ut", "u_nu_boundary", "bernstein_sup"];
    let headers = rdr.headers().map_err(usage)?;
    if headers.iter().ne(expected) {
        return Err(usage(format!("unexpected trace header: {headers:?}")));
    }
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(usage)?;
        let f = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .ok_or_else(|| usage("short record"))?
                .parse()
                .map_err(usage)
        };
        samples.push(TraceSample {
            t: f(0)?,
            m: f(1)?,
            sup_u: f(2)?,
            sup_ut: f(3)?,
            u_nu_boundary: f(4)?,
            bernstein_sup: f(5)?,
        });
    }
    if samples.is_empty() {
        return Err(usage("trace has no samples"));
    }
    let t_stop = samples.last().unwrap().t;
    Ok(Trace {
        samples,
        outcome: Outcome::BlewUp { t_stop },
    })
}

fn cmd_fit(trace_path: &Path, decades: f64, out: Option<PathBuf>) -> Result<u8, CliError> {
    let trace = read_trace_csv(trace_path)?;
    let fit = fit_blowup(&trace, decades).map_err(|e| CliError::Assertion(e.to_string()))?;
    let dir = out
        .or_else(|| trace_path.parent().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(usage)?;
    write_json(&dir.join("ratefit.json"), &fit)?;
    println!(
        "T = {:.8}  gamma = {:.5}  C = {:.5}  residual = {:.3e}",
        fit.t_est, fit.gamma, fit.c_pref, fit.residual
    );
    Ok(0)
}

fn cmd_bernstein(config: &Path, out: Option<PathBuf>) -> Result<u8, CliError> {
    let cfg = load_config(config)?;
    if cfg.p <= 2.0 {
        return Err(usage("rate checks require p>2"));
    }
    let dir = out_dir(out, &cfg)?;
    let (mesh, problem, result, _) = execute(&cfg)?;
    let report = bernstein_profile(&result.final_state, &mesh, &problem.exponents)
        .map_err(|e| CliError::Assertion(e.to_string()))?;
    write_json(&dir.join("bernstein.json"), &report)?;
    println!(
        "profile peak = {:.6} (d_p = {:.6}), excess = {:.3e}",
        report.profile_peak, problem.exponents.d_p, report.bernstein_excess
    );
    Ok(0)
}

#[derive(Serialize)]
struct FunctionalReport {
    t_est: f64,
    epsilon: f64,
    kappa: f64,
    worst_min_j: f64,
    states_scanned: usize,
}

fn cmd_functional(config: &Path, out: Option<PathBuf>) -> Result<u8, CliError> {
    let mut cfg = load_config(config)?;
    if cfg.p <= 2.0 {
        return Err(usage("rate checks require p>2"));
    }
    if cfg.solver.keep_states == 0 {
        cfg.solver.keep_states = 64;
    }
    let dir = out_dir(out, &cfg)?;
    let (mesh, problem, result, _) = execute(&cfg)?;
    let fit = fit_blowup(&result.trace, cfg.analysis.rate_window_decades)
        .map_err(|e| CliError::Assertion(e.to_string()))?;
    let states: Vec<_> = result
        .states
        .iter()
        .filter(|s| s.t > 0.5 * fit.t_est && s.t < fit.t_est)
        .collect();
    if states.is_empty() {
        return Err(CliError::Assertion("no kept states in (T/2, T)".into()));
    }
    let eps_grid: Vec<f64> = (0..7).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect();
    let kappa_grid = [0.02, 0.05, 0.1, 0.2];
    let best = scan_functional_j(
        &states,
        &mesh,
        &problem.exponents,
        &eps_grid,
        &kappa_grid,
        Variant::H1General,
        mesh.boundary_layer_width,
    )
    .ok_or_else(|| CliError::Assertion("no admissible (epsilon, kappa) on the grid".into()))?;
    let (fc, worst) = best;
    let report = FunctionalReport {
        t_est: fit.t_est,
        epsilon: fc.epsilon,
        kappa: fc.kappa,
        worst_min_j: worst,
        states_scanned: states.len(),
    };
    write_json(&dir.join("functional.json"), &report)?;
    println!(
        "best J config: epsilon = {:.4e}, kappa = {:.3}, worst min J = {:.4e}",
        fc.epsilon, fc.kappa, worst
    );
    Ok(0)
}

fn cmd_certify(p_extend: Option<f64>, out: Option<PathBuf>) -> Result<u8, CliError> {
    let mut grid = ParamGrid::default_grid();
    if let Some(p) = p_extend {
        grid = grid.with_extra_p(p);
    }
    grid.validate().map_err(usage)?;
    let certs = certify_all(&grid, &[0.0, 1.0, 10.0]);
    let dir = out.unwrap_or_else(|| {
        std::env::var_os("GBU_OUT_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."))
    });
    fs::create_dir_all(&dir).map_err(usage)?;
    write_json(&dir.join("certificates.json"), &certs)?;
    let mut failed = Vec::new();
    for c in &certs {
        println!(
            "{:<24} worst_margin = {:+.3e}  {}",
            c.family,
            c.worst_margin,
            if c.pass { "pass" } else { "FAIL" }
        );
        if !c.pass {
            failed.push(format!("{} (margin {:.3e})", c.family, c.worst_margin));
        }
    }
    if failed.is_empty() {
        Ok(0)
    } else {
        Err(CliError::Assertion(format!(
            "certificate families failed: {}",
            failed.join(", ")
        )))
    }
}

fn cmd_bisect(
    config: &Path,
    lambda_lo: f64,
    lambda_hi: f64,
    rel_tol: f64,
    settle_threshold: f64,
    out: Option<PathBuf>,
) -> Result<u8, CliError> {
    let cfg = load_config(config)?;
    if cfg.forcing.amplitude() != 0.0 {
        return Err(usage("bisection requires h = 0 (forcing amplitude 0)"));
    }
    let dir = out_dir(out, &cfg)?;
    let mesh = build_mesh(cfg.domain, cfg.mesh.cells, cfg.mesh.grading).map_err(usage)?;
    let phi = match cfg.initial {
        InitialConfig::AdmissibleCubic { amplitude } => InitialConfig::AdmissibleCubic {
            amplitude,
        }
        .field(&mesh)
        .map_err(CliError::Usage)?,
        _ => return Err(usage("bisection requires the admissible_cubic initial preset")),
    };
    validate_initial_class(&phi, &mesh, cfg.p).map_err(usage)?;
    let bc = BisectConfig {
        p: cfg.p,
        lambda_lo,
        lambda_hi,
        rel_tol,
        t_max: cfg.solver.t_max,
        g_max: cfg.solver.g_max,
        settle_threshold,
    };
    let result =
        bisect_lambda_star(&bc, &phi, &mesh).map_err(|e| CliError::Assertion(e.to_string()))?;
    let mut probes = String::from("lambda,outcome,t_stop_or_horizon,m_final\n");
    for r in &result.probes {
        let label = match r.classification {
            gbu_core::minimal::Classification::Global => "global",
            gbu_core::minimal::Classification::BlewUp { .. } => "blew_up",
            gbu_core::minimal::Classification::Undecided => "undecided",
        };
        probes.push_str(&format!(
            "{},{},{},{}\n",
            r.lambda, label, r.t_stop_or_horizon, r.m_final
        ));
    }
    write_atomic(&dir.join("probes.csv"), probes.as_bytes())?;
    write_json(&dir.join("lambdastar.json"), &result)?;
    println!(
        "lambda* in [{:.6}, {:.6}] after {} accepted steps ({} probes, {} undecided)",
        result.lambda_lo_final,
        result.lambda_hi_final,
        result.accepted_steps,
        result.probes.len(),
        result.undecided_count
    );
    Ok(0)
}

fn cmd_singular(
    config: &Path,
    lambda: f64,
    decades: f64,
    out: Option<PathBuf>,
) -> Result<u8, CliError> {
    let cfg = load_config(config)?;
    if cfg.p <= 2.0 {
        return Err(usage("rate checks require p>2"));
    }
    if cfg.forcing.amplitude() != 0.0 {
        return Err(usage("singular probe requires h = 0 (forcing amplitude 0)"));
    }
    let dir = out_dir(out, &cfg)?;
    let mesh = build_mesh(cfg.domain, cfg.mesh.cells, cfg.mesh.grading).map_err(usage)?;
    let phi = cfg.initial.field(&mesh).map_err(CliError::Usage)?;
    let bc = BisectConfig {
        p: cfg.p,
        lambda_lo: 0.0,
        lambda_hi: lambda,
        rel_tol: 1e-3,
        t_max: cfg.solver.t_max,
        g_max: cfg.solver.g_max,
        settle_threshold: 1.0,
    };
    let probe = probe_at_lambda(&bc, &phi, &mesh, lambda, decades)
        .map_err(|e| CliError::Assertion(e.to_string()))?;
    write_json(&dir.join("singular.json"), &probe)?;
    println!(
        "lambda = {:.6}: gamma = {:.4}, compensated growth = {:.3}, u_t bound holds = {}",
        probe.lambda, probe.fit.gamma, probe.compensated_growth, probe.ut_bound_holds
    );
    Ok(0)
}
