//! The `stochosc` command line.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 when
//! `verify` finds no applicable non-explosion criterion.

pub mod cli;
pub mod config;
pub mod custom;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use clap::Parser;
use serde::Serialize;
use stochosc_core::integrator::{estimate_strong_order, simulate_ensemble, simulate_path, Dynamics};
use stochosc_core::lyapunov::verify_nonexplosion;
use stochosc_core::models::{self, ParamValue};
use stochosc_core::transform::{build_transformed_system, TransformedSystem};
use stochosc_core::{reduce_to_phase_system, PhaseSystem};

use crate::cli::{Cli, Command};
use crate::config::{resolve, Representation, RunConfig, Task, SEED_ENV};
use crate::output::{ensemble_csv, ensure_writable, render_svg, trajectory_csv};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NOT_VERIFIED: u8 = 2;

enum Integrable {
    Direct(PhaseSystem),
    Transformed(TransformedSystem),
}

impl Integrable {
    fn new(cfg: &RunConfig) -> Result<Self> {
        Ok(match cfg.integration.representation {
            Representation::Direct => Integrable::Direct(reduce_to_phase_system(&cfg.model)),
            Representation::Transformed => Integrable::Transformed(
                build_transformed_system(&cfg.model).map_err(|e| anyhow!("transformed representation: {e}"))?,
            ),
        })
    }

    fn dynamics(&self) -> &dyn Dynamics {
        match self {
            Integrable::Direct(s) => s,
            Integrable::Transformed(t) => t,
        }
    }
}

/// Parses `args` (including the program name) and runs the command, writing
/// to the given streams. Returns the exit code.
pub fn run<I, T>(args: I, env_seed: Option<&str>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli.command, env_seed, stdout, stderr) {
        Ok(code) => code,
        // a closed pipe on stdout (`| head`) is not an error
        Err(e) if is_broken_pipe(&e) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            EXIT_CONFIG
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

/// Entry point used by the binary.
pub fn main_with_env() -> u8 {
    let env = std::env::var(SEED_ENV).ok();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), env.as_deref(), &mut stdout.lock(), &mut stderr.lock())
}

fn dispatch(command: Command, env: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8> {
    match command {
        Command::Simulate(a) => simulate(&resolve(Task::Simulate, &a.overrides(), env)?, out, err),
        Command::Ensemble(a) => ensemble(&resolve(Task::Ensemble, &a.overrides(), env)?, out, err),
        Command::Verify(a) => verify(&resolve(Task::Verify, &a.overrides(), env)?, out),
        Command::Convergence(a) => convergence(&resolve(Task::Convergence, &a.overrides(), env)?, out, err),
        Command::Catalog(a) => catalog(a.json, out),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn outputs(paths: &[&Option<std::path::PathBuf>]) -> Result<()> {
    ensure_writable(paths.iter().filter_map(|p| p.as_deref()))
}

pub fn simulate(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8> {
    outputs(&[&cfg.output.csv, &cfg.output.svg])?;
    let system = Integrable::new(cfg)?;
    let tr = simulate_path(system.dynamics(), &cfg.integration.config())?;
    let csv = trajectory_csv(&tr);
    match &cfg.output.csv {
        Some(path) => write_file(path, &csv)?,
        None => out.write_all(csv.as_bytes())?,
    }
    if let Some(path) = &cfg.output.svg {
        write_file(path, &render_svg(&tr, cfg.model.name())?)?;
    }
    if let Some(t) = tr.escape_time {
        writeln!(err, "warning: path escaped |z| >= {} at t = {t}", cfg.integration.r_max)?;
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct EnsembleStats<'a> {
    model: &'a str,
    representation: &'static str,
    seed: u64,
    dt: f64,
    t_end: f64,
    r_max: f64,
    n_paths: u64,
    escape_count: u64,
    escape_times: &'a [f64],
    escaped_paths: &'a [u64],
}

pub fn ensemble(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8> {
    outputs(&[&cfg.output.csv, &cfg.output.json])?;
    let system = Integrable::new(cfg)?;
    let s = &cfg.integration;
    let result = simulate_ensemble(system.dynamics(), &s.config(), s.paths, s.threads)?;
    let stats = EnsembleStats {
        model: cfg.model.name(),
        representation: s.representation.as_str(),
        seed: s.seed,
        dt: s.dt,
        t_end: s.t_end,
        r_max: s.r_max,
        n_paths: result.n_paths,
        escape_count: result.escape_count,
        escape_times: &result.escape_times,
        escaped_paths: &result.escaped_paths,
    };
    let json = serde_json::to_string_pretty(&stats)? + "\n";
    if let Some(path) = &cfg.output.csv {
        write_file(path, &ensemble_csv(&result.summary))?;
    }
    match &cfg.output.json {
        Some(path) => write_file(path, &json)?,
        None => out.write_all(json.as_bytes())?,
    }
    if result.escape_count > 0 {
        writeln!(err, "warning: {} of {} paths escaped", result.escape_count, result.n_paths)?;
    }
    Ok(EXIT_OK)
}

pub fn verify(cfg: &RunConfig, out: &mut dyn Write) -> Result<u8> {
    outputs(&[&cfg.output.json, &cfg.output.report])?;
    let cert = verify_nonexplosion(&cfg.model, &cfg.verify);
    let report = cert.report_text();
    out.write_all(report.as_bytes())?;
    if let Some(path) = &cfg.output.json {
        write_file(path, &(serde_json::to_string_pretty(&cert)? + "\n"))?;
    }
    if let Some(path) = &cfg.output.report {
        write_file(path, &report)?;
    }
    Ok(if cert.applies() { EXIT_OK } else { EXIT_NOT_VERIFIED })
}

#[derive(Serialize)]
struct ConvergenceReport<'a> {
    model: &'a str,
    representation: &'static str,
    seed: u64,
    dt: f64,
    t_end: f64,
    levels: usize,
    order_estimate: f64,
    errors_per_level: &'a [f64],
    dts: &'a [f64],
    paths_used: u64,
    paths_excluded: u64,
    unreliable: bool,
}

pub fn convergence(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8> {
    outputs(&[&cfg.output.json])?;
    let system = Integrable::new(cfg)?;
    let s = &cfg.integration;
    let est = estimate_strong_order(system.dynamics(), &s.config(), s.paths, s.levels, s.threads)?;
    let report = ConvergenceReport {
        model: cfg.model.name(),
        representation: s.representation.as_str(),
        seed: s.seed,
        dt: s.dt,
        t_end: s.t_end,
        levels: s.levels,
        order_estimate: est.order_estimate,
        errors_per_level: &est.errors_per_level,
        dts: &est.dts,
        paths_used: est.paths_used,
        paths_excluded: est.paths_excluded,
        unreliable: est.unreliable,
    };
    let json = serde_json::to_string_pretty(&report)? + "\n";
    out.write_all(json.as_bytes())?;
    if let Some(path) = &cfg.output.json {
        write_file(path, &json)?;
    }
    if est.unreliable {
        writeln!(err, "warning: {} of {} paths escaped; estimate is unreliable", est.paths_excluded, s.paths)?;
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct CatalogItem {
    name: &'static str,
    description: &'static str,
    params: models::Params,
}

pub fn catalog(json: bool, out: &mut dyn Write) -> Result<u8> {
    let items: Vec<CatalogItem> = models::catalog()
        .iter()
        .map(|e| CatalogItem {
            name: e.name,
            description: e.description,
            params: (e.default_params)(),
        })
        .collect();
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&items)?)?;
        return Ok(EXIT_OK);
    }
    for item in items {
        writeln!(out, "{}: {}", item.name, item.description)?;
        for (k, v) in &item.params {
            let shown = match v {
                ParamValue::Text(s) => s.clone(),
                other => serde_json::to_string(other)?,
            };
            writeln!(out, "    {k} = {shown}")?;
        }
    }
    Ok(EXIT_OK)
}
