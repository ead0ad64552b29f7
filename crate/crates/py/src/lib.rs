//! Python module `stochosc`: catalog models, simulation, ensembles,
//! strong-order estimates and the non-explosion verifier.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;
use stochosc_cli::output::trajectory_csv;
use stochosc_core::integrator::{self, Dynamics, IntegrationConfig};
use stochosc_core::lyapunov::{self, build_energy_lyapunov, GeneratorOperator, VerificationDomain, VerifyOptions};
use stochosc_core::models::{self, ParamValue, Params};
use stochosc_core::transform::{build_transformed_system, TransformedSystem};
use stochosc_core::{reduce_to_phase_system, OscillatorModel, PhasePoint, PhaseSystem};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn param_value(obj: &Bound<'_, PyAny>) -> PyResult<ParamValue> {
    if let Ok(v) = obj.extract::<f64>() {
        return Ok(ParamValue::Scalar(v));
    }
    if let Ok(v) = obj.extract::<Vec<f64>>() {
        return Ok(ParamValue::Vector(v));
    }
    if let Ok(v) = obj.extract::<Vec<Vec<f64>>>() {
        return Ok(ParamValue::Matrix(v));
    }
    if let Ok(v) = obj.extract::<String>() {
        return Ok(ParamValue::Text(v));
    }
    Err(PyValueError::new_err("parameter must be a number, a list, a nested list or a JSON string"))
}

/// An oscillator model `x'' + b(x, x') + g(x) = sigma W'`.
#[pyclass(name = "Model", module = "stochosc", frozen)]
pub struct PyModel {
    model: OscillatorModel,
}

enum Integrable {
    Direct(PhaseSystem),
    Transformed(TransformedSystem),
}

impl Integrable {
    fn dynamics(&self) -> &dyn Dynamics {
        match self {
            Integrable::Direct(s) => s,
            Integrable::Transformed(t) => t,
        }
    }
}

impl PyModel {
    fn integrable(&self, representation: &str) -> PyResult<Integrable> {
        match representation {
            "direct" => Ok(Integrable::Direct(reduce_to_phase_system(&self.model))),
            "transformed" => Ok(Integrable::Transformed(build_transformed_system(&self.model).map_err(err)?)),
            other => Err(PyValueError::new_err(format!("unknown representation `{other}`"))),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn config(
        &self,
        dt: f64,
        t_end: f64,
        x0: Option<Vec<f64>>,
        v0: Option<Vec<f64>>,
        seed: u64,
        r_max: f64,
        stride: usize,
    ) -> PyResult<IntegrationConfig> {
        let n = self.model.n();
        let pad = |v: Option<Vec<f64>>, fill: f64| {
            let mut v = v.unwrap_or_default();
            if v.is_empty() {
                v = vec![0.0; n];
                v[0] = fill;
            }
            v
        };
        let initial = PhasePoint::new(pad(x0, 1.0), pad(v0, 0.0)).map_err(err)?;
        let cfg = IntegrationConfig::new(dt, t_end, initial).with_seed(seed).with_r_max(r_max).with_stride(stride);
        cfg.validate(n).map_err(err)?;
        Ok(cfg)
    }
}

#[pymethods]
impl PyModel {
    /// Builds a catalog model; `params` overrides its defaults.
    #[new]
    #[pyo3(signature = (name, params = None))]
    fn new(name: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut overrides = Params::new();
        if let Some(d) = params {
            for (k, v) in d.iter() {
                overrides.insert(k.extract::<String>()?, param_value(&v)?);
            }
        }
        Ok(PyModel {
            model: models::build(name, &overrides).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> &str {
        self.model.name()
    }

    /// Number of degrees of freedom.
    #[getter]
    fn n(&self) -> usize {
        self.model.n()
    }

    #[getter]
    fn is_lienard(&self) -> bool {
        self.model.is_lienard()
    }

    /// Exact generator of the energy function `|y|^2/2 + G(x)`, as text in
    /// the phase variables `z0..` (positions first, then velocities).
    fn energy_generator(&self) -> PyResult<String> {
        let v = build_energy_lyapunov(&self.model, 0.0).map_err(err)?;
        let sys = reduce_to_phase_system(&self.model);
        Ok(GeneratorOperator::new(&sys).apply(&v.v).to_string())
    }

    /// Checks the non-explosion criteria and returns the certificate as a dict.
    #[pyo3(signature = (r_check = 10.0, grid = None, c = 1.0, alpha_max = 10.0))]
    fn verify<'py>(
        &self,
        py: Python<'py>,
        r_check: f64,
        grid: Option<usize>,
        c: f64,
        alpha_max: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let opts = VerifyOptions {
            domain: VerificationDomain {
                r_check,
                grid,
                ..VerificationDomain::default()
            },
            c,
            alpha_max,
        };
        opts.validate().map_err(err)?;
        let cert = lyapunov::verify_nonexplosion(&self.model, &opts);
        let out = to_py(py, &cert)?;
        out.set_item("applies", cert.applies())?;
        out.set_item("report", cert.report_text())?;
        Ok(out)
    }

    /// Simulates one Euler-Maruyama path.
    #[pyo3(signature = (dt = 1e-3, t_end = 50.0, x0 = None, v0 = None, seed = 0, r_max = 1e6, stride = 1, representation = "direct"))]
    #[allow(clippy::too_many_arguments)]
    fn simulate(
        &self,
        py: Python<'_>,
        dt: f64,
        t_end: f64,
        x0: Option<Vec<f64>>,
        v0: Option<Vec<f64>>,
        seed: u64,
        r_max: f64,
        stride: usize,
        representation: &str,
    ) -> PyResult<PyTrajectory> {
        let cfg = self.config(dt, t_end, x0, v0, seed, r_max, stride)?;
        let system = self.integrable(representation)?;
        let tr = py.detach(|| integrator::simulate_path(system.dynamics(), &cfg)).map_err(err)?;
        Ok(PyTrajectory { inner: tr })
    }

    /// Simulates `paths` independent paths; returns escape statistics and the
    /// per-time summary of `|z|`.
    #[pyo3(signature = (paths = 100, dt = 1e-3, t_end = 10.0, x0 = None, v0 = None, seed = 0, r_max = 1e6, stride = 1, threads = None, representation = "direct"))]
    #[allow(clippy::too_many_arguments)]
    fn ensemble<'py>(
        &self,
        py: Python<'py>,
        paths: u64,
        dt: f64,
        t_end: f64,
        x0: Option<Vec<f64>>,
        v0: Option<Vec<f64>>,
        seed: u64,
        r_max: f64,
        stride: usize,
        threads: Option<usize>,
        representation: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg = self.config(dt, t_end, x0, v0, seed, r_max, stride)?;
        let system = self.integrable(representation)?;
        let r = py
            .detach(|| integrator::simulate_ensemble(system.dynamics(), &cfg, paths, threads))
            .map_err(err)?;
        to_py(py, &r)
    }

    /// Strong-order estimate from `levels` dyadic step sizes starting at `dt`.
    #[pyo3(signature = (paths = 200, levels = 4, dt = 1.0 / 1024.0, t_end = 1.0, x0 = None, v0 = None, seed = 0, r_max = 1e6, threads = None, representation = "direct"))]
    #[allow(clippy::too_many_arguments)]
    fn strong_order<'py>(
        &self,
        py: Python<'py>,
        paths: u64,
        levels: usize,
        dt: f64,
        t_end: f64,
        x0: Option<Vec<f64>>,
        v0: Option<Vec<f64>>,
        seed: u64,
        r_max: f64,
        threads: Option<usize>,
        representation: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg = self.config(dt, t_end, x0, v0, seed, r_max, 1)?;
        let system = self.integrable(representation)?;
        let est = py
            .detach(|| integrator::estimate_strong_order(system.dynamics(), &cfg, paths, levels, threads))
            .map_err(err)?;
        to_py(py, &est)
    }

    fn __repr__(&self) -> String {
        format!("Model({:?}, n={})", self.model.name(), self.model.n())
    }
}

/// A recorded path. States are in physical coordinates `(x, x')`.
#[pyclass(name = "Trajectory", module = "stochosc", frozen)]
pub struct PyTrajectory {
    inner: integrator::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        self.inner.states.iter().map(|z| z.x.clone()).collect()
    }

    #[getter]
    fn v(&self) -> Vec<Vec<f64>> {
        self.inner.states.iter().map(|z| z.y.clone()).collect()
    }

    #[getter]
    fn escaped(&self) -> bool {
        self.inner.escaped
    }

    #[getter]
    fn escape_time(&self) -> Option<f64> {
        self.inner.escape_time
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed_used
    }

    fn to_csv(&self) -> String {
        trajectory_csv(&self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Catalog entries as dicts with `name`, `description` and default `params`.
#[pyfunction]
fn catalog(py: Python<'_>) -> PyResult<Vec<Bound<'_, PyAny>>> {
    models::catalog()
        .iter()
        .map(|e| {
            let d = PyDict::new(py);
            d.set_item("name", e.name)?;
            d.set_item("description", e.description)?;
            d.set_item("params", to_py(py, &(e.default_params)())?)?;
            Ok(d.into_any())
        })
        .collect()
}

#[pymodule]
fn stochosc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(catalog, m)?)?;
    Ok(())
}
