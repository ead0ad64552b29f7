use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use stochosc_core::models::ParamValue;

use crate::config::{parse_param, IntegrationLayer, OutputLayer, Overrides, Preset, Representation, VerifyLayer};

#[derive(Debug, Parser)]
#[command(name = "stochosc", version, about = "Stochastic oscillators: simulation and non-explosion checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one path and write it as CSV (and optionally SVG).
    Simulate(SimulateArgs),
    /// Simulate many paths and summarize |z| and escapes.
    Ensemble(EnsembleArgs),
    /// Check the Lyapunov non-explosion criteria and emit a certificate.
    Verify(VerifyArgs),
    /// Estimate the strong order of the Euler-Maruyama scheme.
    Convergence(ConvergenceArgs),
    /// List the built-in models and their default parameters.
    Catalog(CatalogArgs),
}

#[derive(Debug, Default, Args)]
pub struct ModelArgs {
    /// TOML config file with [model], [integration], [output] and [verify] sections.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Catalog model name, or `custom` with coefficients from the config file.
    #[arg(long)]
    pub model: Option<String>,
    /// Model parameter override, e.g. `--param sigma=0` or `--param xi=[0,0,0,1]`.
    #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_param)]
    pub params: Vec<(String, ParamValue)>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// Seed; overrides the config file and STOCHOSC_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Time horizon T.
    #[arg(long = "t-end", value_name = "T")]
    pub t_end: Option<f64>,
    /// Initial positions, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Initial velocities, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub v0: Option<Vec<f64>>,
    /// Escape radius in phase-space norm.
    #[arg(long = "r-max")]
    pub r_max: Option<f64>,
    /// Record every k-th step.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, value_enum)]
    pub representation: Option<Representation>,
    /// Worker threads for ensembles; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl RunArgs {
    fn layer(&self) -> IntegrationLayer {
        IntegrationLayer {
            dt: self.dt,
            t_end: self.t_end,
            x0: self.x0.clone(),
            v0: self.v0.clone(),
            seed: self.seed,
            r_max: self.r_max,
            record_stride: self.stride,
            representation: self.representation,
            threads: self.threads,
            paths: None,
            levels: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Trajectory CSV; printed to stdout when omitted.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub paths: Option<u64>,
    /// Per-time summary CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Escape statistics JSON; printed to stdout when omitted.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Half-width of the checked box.
    #[arg(long = "r-check")]
    pub r_check: Option<f64>,
    /// Grid points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Growth constant c of the energy criterion.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long = "alpha-max")]
    pub alpha_max: Option<f64>,
    /// Certificate JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Text report; always printed to stdout as well.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub paths: Option<u64>,
    /// Number of dyadic step sizes, at least 3.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Order report JSON; printed to stdout as well.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CatalogArgs {
    /// Emit JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

fn overrides(model: &ModelArgs, integration: IntegrationLayer, output: OutputLayer, verify: VerifyLayer) -> Overrides {
    Overrides {
        config: model.config.clone(),
        model: model.model.clone(),
        params: model.params.clone(),
        preset: model.preset,
        integration,
        output,
        verify,
    }
}

impl SimulateArgs {
    pub fn overrides(&self) -> Overrides {
        let output = OutputLayer {
            csv: self.csv.clone(),
            svg: self.svg.clone(),
            ..OutputLayer::default()
        };
        overrides(&self.model, self.run.layer(), output, VerifyLayer::default())
    }
}

impl EnsembleArgs {
    pub fn overrides(&self) -> Overrides {
        let integration = IntegrationLayer {
            paths: self.paths,
            ..self.run.layer()
        };
        let output = OutputLayer {
            csv: self.csv.clone(),
            json: self.json.clone(),
            ..OutputLayer::default()
        };
        overrides(&self.model, integration, output, VerifyLayer::default())
    }
}

impl VerifyArgs {
    pub fn overrides(&self) -> Overrides {
        let output = OutputLayer {
            json: self.json.clone(),
            report: self.report.clone(),
            ..OutputLayer::default()
        };
        let verify = VerifyLayer {
            r_check: self.r_check,
            grid: self.grid,
            monte_carlo_samples: None,
            c: self.c,
            alpha_max: self.alpha_max,
        };
        overrides(&self.model, IntegrationLayer::default(), output, verify)
    }
}

impl ConvergenceArgs {
    pub fn overrides(&self) -> Overrides {
        let integration = IntegrationLayer {
            paths: self.paths,
            levels: self.levels,
            ..self.run.layer()
        };
        let output = OutputLayer {
            json: self.json.clone(),
            ..OutputLayer::default()
        };
        overrides(&self.model, integration, output, VerifyLayer::default())
    }
}
