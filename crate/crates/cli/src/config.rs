//! Run configuration. Values come from four layers, later ones winning:
//! built-in defaults, `--preset paper`, the TOML file, command-line flags.
//! The `STOCHOSC_SEED` environment variable replaces the default seed only.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use stochosc_core::integrator::{IntegrationConfig, DEFAULT_R_MAX};
use stochosc_core::lyapunov::{VerificationDomain, VerifyOptions};
use stochosc_core::models::{self, ParamValue, Params};
use stochosc_core::{OscillatorModel, PhasePoint};

use crate::custom::{build_custom, CustomModel};

pub const SEED_ENV: &str = "STOCHOSC_SEED";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    #[default]
    Direct,
    Transformed,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Direct => "direct",
            Representation::Transformed => "transformed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Parameter sets and run lengths of the reference figures.
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Simulate,
    Ensemble,
    Verify,
    Convergence,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub integration: IntegrationLayer,
    #[serde(default)]
    pub output: OutputLayer,
    #[serde(default)]
    pub verify: VerifyLayer,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: Option<String>,
    #[serde(default)]
    pub params: toml::Table,
    pub custom: Option<CustomModel>,
}

macro_rules! layer {
    ($(#[$meta:meta])* $name:ident { $($field:ident : $ty:ty),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Debug, Default, PartialEq, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(pub $field: Option<$ty>,)*
        }

        impl $name {
            /// Fields set in `over` replace those in `self`.
            pub fn merge(&mut self, over: &$name) {
                $(if over.$field.is_some() {
                    self.$field = over.$field.clone();
                })*
            }
        }
    };
}

layer!(IntegrationLayer {
    dt: f64,
    t_end: f64,
    x0: Vec<f64>,
    v0: Vec<f64>,
    seed: u64,
    r_max: f64,
    record_stride: usize,
    representation: Representation,
    threads: usize,
    paths: u64,
    levels: usize,
});

layer!(OutputLayer {
    csv: PathBuf,
    svg: PathBuf,
    json: PathBuf,
    report: PathBuf,
});

layer!(VerifyLayer {
    r_check: f64,
    grid: usize,
    monte_carlo_samples: usize,
    c: f64,
    alpha_max: f64,
});

/// Everything the command line can set.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub model: Option<String>,
    pub params: Vec<(String, ParamValue)>,
    pub preset: Option<Preset>,
    pub integration: IntegrationLayer,
    pub output: OutputLayer,
    pub verify: VerifyLayer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrationSettings {
    pub dt: f64,
    pub t_end: f64,
    pub initial: PhasePoint,
    pub seed: u64,
    pub r_max: f64,
    pub record_stride: usize,
    pub representation: Representation,
    pub threads: Option<usize>,
    pub paths: u64,
    pub levels: usize,
}

impl IntegrationSettings {
    pub fn config(&self) -> IntegrationConfig {
        IntegrationConfig {
            dt: self.dt,
            t_end: self.t_end,
            initial: self.initial.clone(),
            seed: self.seed,
            r_max: self.r_max,
            record_stride: self.record_stride,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: OscillatorModel,
    pub integration: IntegrationSettings,
    pub output: OutputLayer,
    pub verify: VerifyOptions,
}

fn defaults() -> IntegrationLayer {
    IntegrationLayer {
        dt: Some(1e-3),
        t_end: Some(50.0),
        seed: Some(0),
        r_max: Some(DEFAULT_R_MAX),
        record_stride: Some(1),
        representation: Some(Representation::Direct),
        paths: Some(100),
        levels: Some(4),
        ..IntegrationLayer::default()
    }
}

fn paper_preset(task: Task) -> IntegrationLayer {
    match task {
        Task::Simulate => IntegrationLayer {
            dt: Some(1e-3),
            t_end: Some(50.0),
            x0: Some(vec![1.0]),
            v0: Some(vec![0.0]),
            record_stride: Some(10),
            ..IntegrationLayer::default()
        },
        Task::Ensemble => IntegrationLayer {
            dt: Some(1e-3),
            t_end: Some(10.0),
            x0: Some(vec![1.0]),
            v0: Some(vec![0.0]),
            r_max: Some(1e4),
            paths: Some(500),
            record_stride: Some(100),
            ..IntegrationLayer::default()
        },
        Task::Convergence => IntegrationLayer {
            dt: Some(1.0 / 1024.0),
            t_end: Some(1.0),
            x0: Some(vec![1.0]),
            v0: Some(vec![0.0]),
            paths: Some(200),
            levels: Some(4),
            ..IntegrationLayer::default()
        },
        Task::Verify => IntegrationLayer::default(),
    }
}

/// A command-line `key=value` model parameter. The value is read as JSON; text
/// that is not a number, vector or matrix is kept verbatim.
pub fn parse_param(arg: &str) -> Result<(String, ParamValue), String> {
    let (key, value) = arg.split_once('=').ok_or_else(|| format!("expected key=value, got `{arg}`"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(format!("empty parameter name in `{arg}`"));
    }
    let value = serde_json::from_str::<ParamValue>(value).unwrap_or_else(|_| ParamValue::Text(value.to_string()));
    Ok((key.to_string(), value))
}

/// TOML parameter to a model parameter; structured values that are not plain
/// numbers become JSON text.
fn toml_param(key: &str, v: &toml::Value) -> Result<ParamValue> {
    if let toml::Value::String(s) = v {
        return Ok(ParamValue::Text(s.clone()));
    }
    if let Ok(p) = v.clone().try_into::<ParamValue>() {
        if !matches!(p, ParamValue::Text(_)) {
            return Ok(p);
        }
    }
    let json = serde_json::to_string(v).with_context(|| format!("model parameter `{key}`"))?;
    Ok(ParamValue::Text(json))
}

pub fn read_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
    toml::from_str(&text).map_err(|e| anyhow!("config file {}: {}", path.display(), e.message()))
}

fn env_seed(env: Option<&str>) -> Result<Option<u64>> {
    match env {
        None => Ok(None),
        Some(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| anyhow!("{SEED_ENV} must be an unsigned 64-bit integer, got `{s}`")),
    }
}

/// Merges all layers and builds the model. `env` is the value of
/// `STOCHOSC_SEED`, if set.
pub fn resolve(task: Task, over: &Overrides, env: Option<&str>) -> Result<RunConfig> {
    let file = match &over.config {
        Some(path) => read_file(path)?,
        None => FileConfig::default(),
    };

    let mut integration = defaults();
    if over.preset == Some(Preset::Paper) {
        integration.merge(&paper_preset(task));
    }
    if let Some(seed) = env_seed(env)? {
        integration.seed = Some(seed);
    }
    integration.merge(&file.integration);
    integration.merge(&over.integration);

    let mut output = file.output.clone();
    output.merge(&over.output);
    let mut verify = file.verify.clone();
    verify.merge(&over.verify);

    let model = build_model(&file.model, over)?;
    let n = model.n();

    let x0 = pad(integration.x0.take(), n, 1.0, "x0")?;
    let v0 = pad(integration.v0.take(), n, 0.0, "v0")?;
    let initial = PhasePoint::new(x0, v0).map_err(|e| anyhow!("initial state: {e}"))?;

    let settings = IntegrationSettings {
        dt: integration.dt.unwrap(),
        t_end: integration.t_end.unwrap(),
        initial,
        seed: integration.seed.unwrap(),
        r_max: integration.r_max.unwrap(),
        record_stride: integration.record_stride.unwrap(),
        representation: integration.representation.unwrap(),
        threads: integration.threads,
        paths: integration.paths.unwrap(),
        levels: integration.levels.unwrap(),
    };
    if settings.threads == Some(0) {
        bail!("threads must be at least 1");
    }
    if settings.paths == 0 {
        bail!("paths must be at least 1");
    }
    settings
        .config()
        .validate(n)
        .map_err(|e| anyhow!("integration settings: {e}"))?;

    let base = VerifyOptions::default();
    let domain = VerificationDomain {
        r_check: verify.r_check.unwrap_or(base.domain.r_check),
        grid: verify.grid.or(base.domain.grid),
        monte_carlo_samples: verify.monte_carlo_samples.unwrap_or(base.domain.monte_carlo_samples),
        seed: base.domain.seed,
    };
    let verify = VerifyOptions {
        domain,
        c: verify.c.unwrap_or(base.c),
        alpha_max: verify.alpha_max.unwrap_or(base.alpha_max),
    };
    verify.validate().map_err(|e| anyhow!("verify settings: {e}"))?;

    Ok(RunConfig {
        model,
        integration: settings,
        output,
        verify,
    })
}

/// Missing trailing coordinates of the initial state: `x0 = (1, 0, ..)`,
/// `v0 = 0`.
fn pad(given: Option<Vec<f64>>, n: usize, first: f64, name: &str) -> Result<Vec<f64>> {
    match given {
        Some(v) if v.len() == n => Ok(v),
        Some(v) if v.len() == 1 && n > 1 => {
            let mut out = vec![0.0; n];
            out[0] = v[0];
            Ok(out)
        }
        Some(v) => bail!("{name} has {} entries but the model has {n} coordinates", v.len()),
        None => {
            let mut out = vec![0.0; n];
            out[0] = first;
            Ok(out)
        }
    }
}

fn build_model(section: &ModelSection, over: &Overrides) -> Result<OscillatorModel> {
    let name = over
        .model
        .clone()
        .or_else(|| section.name.clone())
        .ok_or_else(|| anyhow!("no model given; pass --model or set [model] name"))?;

    let mut params = Params::new();
    for (k, v) in &section.params {
        params.insert(k.clone(), toml_param(k, v)?);
    }
    for (k, v) in &over.params {
        params.insert(k.clone(), v.clone());
    }

    if name == "custom" {
        let custom = section
            .custom
            .as_ref()
            .ok_or_else(|| anyhow!("model `custom` needs a [model.custom] section in the config file"))?;
        if !params.is_empty() {
            bail!("model `custom` takes its coefficients from [model.custom], not params");
        }
        return build_custom(custom);
    }
    if section.custom.is_some() && section.name.as_deref() == Some(name.as_str()) {
        bail!("[model.custom] is only read when the model name is `custom`");
    }
    models::build(&name, &params).map_err(|e| anyhow!("model `{name}`: {e}"))
}
