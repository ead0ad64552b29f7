//! Built-in oscillators and the named-parameter catalog that builds them.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::phase::{Damping, Diffusion, OscillatorModel};
use crate::poly::{MultiPolynomial, Polynomial, Term};

/// A single named model parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
    /// JSON text, used for polynomial diffusion matrices.
    Text(String),
}

pub type Params = BTreeMap<String, ParamValue>;

/// Noise amplitude as supplied to the builders.
#[derive(Clone, Debug, PartialEq)]
pub enum DiffusionSpec {
    /// `s * I`
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
    /// `n x m` polynomial entries over the `2n` phase variables.
    Polynomial(Vec<Vec<MultiPolynomial>>),
}

impl DiffusionSpec {
    fn into_diffusion(self, n: usize) -> Result<Diffusion, ModelError> {
        match self {
            DiffusionSpec::Scalar(s) => {
                if !s.is_finite() {
                    return Err(ModelError::Constraint("sigma must be finite".into()));
                }
                Ok(Diffusion::scalar_identity(n, s))
            }
            DiffusionSpec::Matrix(m) => Ok(Diffusion::Constant(m)),
            DiffusionSpec::Polynomial(m) => Ok(Diffusion::Polynomial(m)),
        }
    }
}

fn require_positive(name: &str, value: f64) -> Result<(), ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonPositive {
            name: name.to_string(),
            value,
        })
    }
}

/// `x'' + 2 alpha omega0 x' + omega0^2 (x + lambda x^3) = sigma W'`
pub fn build_duffing(alpha: f64, omega0: f64, lambda: f64, sigma: f64) -> Result<OscillatorModel, ModelError> {
    require_positive("alpha", alpha)?;
    require_positive("omega0", omega0)?;
    require_positive("lambda", lambda)?;
    let w2 = omega0 * omega0;
    let b = MultiPolynomial::var(2, 1).scale(2.0 * alpha * omega0);
    let g = Polynomial::new(vec![0.0, w2, 0.0, w2 * lambda]).to_multi(0, 1);
    let pot = Polynomial::new(vec![0.0, 0.0, w2 / 2.0, 0.0, w2 * lambda / 4.0]).to_multi(0, 1);
    OscillatorModel::new(
        "duffing",
        Damping::General(vec![b]),
        vec![g],
        Some(pot),
        DiffusionSpec::Scalar(sigma).into_diffusion(1)?,
    )
}

/// `x'' + 2 xi omega0 (x^2 - 1) x' + omega0^2 (x + gamma x^3) = sigma W'`
///
/// The damping is kept in Lienard form `f(x) = 2 xi omega0 (x^2 - 1)` so the
/// model can be passed to the change of variables.
pub fn build_van_der_pol(xi: f64, omega0: f64, gamma: f64, sigma: f64) -> Result<OscillatorModel, ModelError> {
    require_positive("xi", xi)?;
    require_positive("omega0", omega0)?;
    require_positive("gamma", gamma)?;
    let w2 = omega0 * omega0;
    let k = 2.0 * xi * omega0;
    let f = Polynomial::new(vec![-k, 0.0, k]);
    let g = Polynomial::new(vec![0.0, w2, 0.0, w2 * gamma]).to_multi(0, 1);
    let pot = Polynomial::new(vec![0.0, 0.0, w2 / 2.0, 0.0, w2 * gamma / 4.0]).to_multi(0, 1);
    OscillatorModel::new(
        "vanderpol",
        Damping::Lienard(vec![f]),
        vec![g],
        Some(pot),
        DiffusionSpec::Scalar(sigma).into_diffusion(1)?,
    )
}

/// Scalar Duffing-Van der Pol family with polynomial damping and stiffness:
/// `f(x) = sum_{j=1}^{2m} xi_j x^j`, `g(x) = sum_{j=1}^{2n} a_j x^{j+1}`.
///
/// `xi` holds `xi_1..xi_2m` and `a` holds `a_1..a_2n`; requires `m > n >= 1`,
/// `xi_2m > 0` and `a_2n < 0`.
pub fn build_duffing_vdp_general(xi: &[f64], a: &[f64], sigma: DiffusionSpec) -> Result<OscillatorModel, ModelError> {
    if xi.is_empty() || xi.len() % 2 != 0 {
        return Err(ModelError::Constraint(format!(
            "xi must hold an even number 2m >= 2 of coefficients, got {}",
            xi.len()
        )));
    }
    if a.is_empty() || a.len() % 2 != 0 {
        return Err(ModelError::Constraint(format!(
            "a must hold an even number 2n >= 2 of coefficients, got {}",
            a.len()
        )));
    }
    let (m, n) = (xi.len() / 2, a.len() / 2);
    if m <= n {
        return Err(ModelError::Constraint(format!("m > n required, got m = {m}, n = {n}")));
    }
    if xi[xi.len() - 1] <= 0.0 {
        return Err(ModelError::Constraint(format!(
            "xi_2m > 0 required, got {}",
            xi[xi.len() - 1]
        )));
    }
    if a[a.len() - 1] >= 0.0 {
        return Err(ModelError::Constraint(format!("a_2n < 0 required, got {}", a[a.len() - 1])));
    }
    if xi.iter().chain(a).any(|c| !c.is_finite()) {
        return Err(ModelError::Constraint("coefficients must be finite".into()));
    }

    let mut f = vec![0.0];
    f.extend_from_slice(xi);
    let f = Polynomial::new(f);
    let mut g = vec![0.0, 0.0];
    g.extend_from_slice(a);
    let g = Polynomial::new(g);
    let pot = g.antiderivative();
    OscillatorModel::new(
        "duffing_vdp",
        Damping::Lienard(vec![f]),
        vec![g.to_multi(0, 1)],
        Some(pot.to_multi(0, 1)),
        sigma.into_diffusion(1)?,
    )
}

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-12;
const POSITIVITY_SAMPLES: usize = 1000;

/// `X'' + B X' + A X + sum_i K_ii X_i^3 e_i = sigma W'` with potential
/// `G(x) = <x, A x>/2 + sum_i K_ii x_i^4 / 4`.
pub fn build_vector_duffing(
    b: &[Vec<f64>],
    a: &[Vec<f64>],
    k_diag: &[f64],
    sigma: DiffusionSpec,
) -> Result<OscillatorModel, ModelError> {
    let n = k_diag.len();
    if n == 0 {
        return Err(ModelError::Dimension("K must have at least one entry".into()));
    }
    for (name, mat) in [("B", b), ("A", a)] {
        if mat.len() != n || mat.iter().any(|r| r.len() != n) {
            return Err(ModelError::Dimension(format!("{name} must be {n} x {n}")));
        }
        if mat.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::Constraint(format!("{name} entries must be finite")));
        }
    }
    for i in 0..n {
        for j in 0..i {
            if (a[i][j] - a[j][i]).abs() > SYMMETRY_TOL * (1.0 + a[i][j].abs()) {
                return Err(ModelError::Constraint(format!(
                    "A must be symmetric, A[{i}][{j}] = {} but A[{j}][{i}] = {}",
                    a[i][j], a[j][i]
                )));
            }
        }
    }
    for (i, &k) in k_diag.iter().enumerate() {
        if !(k > 0.0) {
            return Err(ModelError::NonPositive {
                name: format!("K[{i}]"),
                value: k,
            });
        }
    }
    if min_eigenvalue(a) < -PSD_TOL {
        return Err(ModelError::Constraint("A must be positive semidefinite".into()));
    }
    check_damping_matrix(b)?;

    let nv = 2 * n;
    let damping: Vec<MultiPolynomial> = (0..n)
        .map(|i| {
            (0..n).fold(MultiPolynomial::zero(nv), |acc, j| {
                &acc + &MultiPolynomial::var(nv, n + j).scale(b[i][j])
            })
        })
        .collect();

    let mut pot = MultiPolynomial::zero(n);
    for i in 0..n {
        let mut e = vec![0; n];
        e[i] = 2;
        pot = &pot + &MultiPolynomial::monomial(e.clone(), a[i][i] / 2.0);
        for j in (i + 1)..n {
            let mut e = vec![0; n];
            e[i] = 1;
            e[j] = 1;
            pot = &pot + &MultiPolynomial::monomial(e, (a[i][j] + a[j][i]) / 2.0);
        }
        e[i] = 4;
        pot = &pot + &MultiPolynomial::monomial(e, k_diag[i] / 4.0);
    }
    let g: Vec<MultiPolynomial> = (0..n)
        .map(|i| {
            let mut gi = MultiPolynomial::zero(n);
            for j in 0..n {
                gi = &gi + &MultiPolynomial::var(n, j).scale(a[i][j]);
            }
            let mut e = vec![0; n];
            e[i] = 3;
            &gi + &MultiPolynomial::monomial(e, k_diag[i])
        })
        .collect();

    OscillatorModel::new(
        "vector_duffing",
        Damping::General(damping),
        g,
        Some(pot),
        sigma.into_diffusion(n)?,
    )
}

/// `<y, B y> >= 0`: eigenvalues of the symmetric part plus a sampled check.
fn check_damping_matrix(b: &[Vec<f64>]) -> Result<(), ModelError> {
    let n = b.len();
    let sym: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (b[i][j] + b[j][i])).collect())
        .collect();
    let lambda_min = min_eigenvalue(&sym);
    if lambda_min < -PSD_TOL {
        return Err(ModelError::Constraint(format!(
            "B must satisfy <y, By> >= 0; symmetric part has eigenvalue {lambda_min}"
        )));
    }
    let scale = 1.0 + b.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_b0b);
    for _ in 0..POSITIVITY_SAMPLES {
        let mut y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        y.iter_mut().for_each(|v| *v /= norm);
        let q: f64 = (0..n)
            .map(|i| (0..n).map(|j| y[i] * b[i][j] * y[j]).sum::<f64>())
            .sum();
        if q < -PSD_TOL * scale {
            return Err(ModelError::Constraint(format!(
                "B must satisfy <y, By> >= 0; found {q} at y = {y:?}"
            )));
        }
    }
    Ok(())
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
fn min_eigenvalue(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).fold(f64::INFINITY, f64::min)
}

/// Coupled Lienard system with `f_i(x) = xi_i x^{2 n1}` and potential
/// `G(x) = -sum_i (a_i x_i^{2 n2 + 2} + nu x_1 x_i)`; requires `n1 > n2 > 0`.
///
/// The potential is built exactly as written even though it is unbounded
/// below; whether the system is admissible is left to the verifier.
pub fn build_coupled_lienard(
    xi: &[f64],
    a: &[f64],
    nu: f64,
    n1: u32,
    n2: u32,
    sigma: DiffusionSpec,
) -> Result<OscillatorModel, ModelError> {
    let n = xi.len();
    if n == 0 || a.len() != n {
        return Err(ModelError::Dimension(format!(
            "xi and a must have the same positive length, got {} and {}",
            xi.len(),
            a.len()
        )));
    }
    if !(n1 > n2 && n2 > 0) {
        return Err(ModelError::Constraint(format!("n1 > n2 > 0 required, got n1 = {n1}, n2 = {n2}")));
    }
    for (i, &v) in xi.iter().enumerate() {
        require_positive(&format!("xi[{i}]"), v)?;
    }
    for (i, &v) in a.iter().enumerate() {
        require_positive(&format!("a[{i}]"), v)?;
    }
    if !nu.is_finite() {
        return Err(ModelError::Constraint("nu must be finite".into()));
    }

    let f: Vec<Polynomial> = xi
        .iter()
        .map(|&c| Polynomial::monomial(2 * n1 as usize, c))
        .collect();
    let mut pot = MultiPolynomial::zero(n);
    for i in 0..n {
        let mut e = vec![0; n];
        e[i] = 2 * n2 + 2;
        pot = &pot - &MultiPolynomial::monomial(e, a[i]);
        let cross = &MultiPolynomial::var(n, 0) * &MultiPolynomial::var(n, i);
        pot = &pot - &cross.scale(nu);
    }
    OscillatorModel::from_potential("coupled_lienard", Damping::Lienard(f), pot, sigma.into_diffusion(n)?)
}

/// Linear damped oscillator `x'' + c x' + omega0^2 x = sigma W'`; its phase
/// system is an Ornstein-Uhlenbeck process.
pub fn build_damped_linear(damping: f64, omega0: f64, sigma: f64) -> Result<OscillatorModel, ModelError> {
    require_positive("damping", damping)?;
    require_positive("omega0", omega0)?;
    let w2 = omega0 * omega0;
    OscillatorModel::new(
        "damped_linear",
        Damping::Lienard(vec![Polynomial::constant(damping)]),
        vec![Polynomial::new(vec![0.0, w2]).to_multi(0, 1)],
        Some(Polynomial::new(vec![0.0, 0.0, w2 / 2.0]).to_multi(0, 1)),
        DiffusionSpec::Scalar(sigma).into_diffusion(1)?,
    )
}

/// A named entry of the built-in model registry.
pub struct ModelCatalogEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub default_params: fn() -> Params,
    builder: fn(&Params) -> Result<OscillatorModel, ModelError>,
}

impl ModelCatalogEntry {
    /// Builds with `overrides` layered on the defaults. Keys that the model
    /// does not know are rejected.
    pub fn build(&self, overrides: &Params) -> Result<OscillatorModel, ModelError> {
        let mut params = (self.default_params)();
        for (k, v) in overrides {
            if !params.contains_key(k) {
                return Err(ModelError::UnknownParameter {
                    model: self.name.to_string(),
                    param: k.clone(),
                });
            }
            params.insert(k.clone(), v.clone());
        }
        (self.builder)(&params)
    }
}

impl std::fmt::Debug for ModelCatalogEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelCatalogEntry")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

fn params<const N: usize>(items: [(&str, ParamValue); N]) -> Params {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn scalar(p: &Params, key: &str) -> Result<f64, ModelError> {
    match p.get(key) {
        Some(ParamValue::Scalar(v)) => Ok(*v),
        _ => Err(ModelError::ParameterShape(key.to_string())),
    }
}

fn vector(p: &Params, key: &str) -> Result<Vec<f64>, ModelError> {
    match p.get(key) {
        Some(ParamValue::Vector(v)) => Ok(v.clone()),
        Some(ParamValue::Scalar(v)) => Ok(vec![*v]),
        _ => Err(ModelError::ParameterShape(key.to_string())),
    }
}

fn matrix(p: &Params, key: &str) -> Result<Vec<Vec<f64>>, ModelError> {
    match p.get(key) {
        Some(ParamValue::Matrix(m)) => Ok(m.clone()),
        Some(ParamValue::Scalar(v)) => Ok(vec![vec![*v]]),
        // an empty TOML array is ambiguous between shapes
        Some(ParamValue::Vector(v)) if v.is_empty() => Ok(Vec::new()),
        _ => Err(ModelError::ParameterShape(key.to_string())),
    }
}

fn natural(p: &Params, key: &str) -> Result<u32, ModelError> {
    let v = scalar(p, key)?;
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u32)
    } else {
        Err(ModelError::ParameterShape(key.to_string()))
    }
}

/// `sigma` as a scalar, a constant matrix, or JSON text holding a matrix of
/// term lists.
pub fn diffusion_param(p: &Params, key: &str, n: usize) -> Result<DiffusionSpec, ModelError> {
    match p.get(key) {
        Some(ParamValue::Scalar(s)) => Ok(DiffusionSpec::Scalar(*s)),
        Some(ParamValue::Matrix(m)) => Ok(DiffusionSpec::Matrix(m.clone())),
        Some(ParamValue::Text(js)) => {
            let rows: Vec<Vec<Vec<Term>>> =
                serde_json::from_str(js).map_err(|_| ModelError::ParameterShape(key.to_string()))?;
            let polys = rows
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|t| MultiPolynomial::from_terms(2 * n, t))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(DiffusionSpec::Polynomial(polys))
        }
        _ => Err(ModelError::ParameterShape(key.to_string())),
    }
}

static CATALOG: [ModelCatalogEntry; 6] = [
    ModelCatalogEntry {
        name: "duffing",
        description: "Duffing oscillator with additive white noise",
        default_params: || {
            params([
                ("alpha", ParamValue::Scalar(0.5)),
                ("omega0", ParamValue::Scalar(1.0)),
                ("lambda", ParamValue::Scalar(3.0)),
                ("sigma", ParamValue::Scalar(2.0)),
            ])
        },
        builder: |p| build_duffing(scalar(p, "alpha")?, scalar(p, "omega0")?, scalar(p, "lambda")?, scalar(p, "sigma")?),
    },
    ModelCatalogEntry {
        name: "vanderpol",
        description: "Van der Pol oscillator with cubic stiffness and additive white noise",
        default_params: || {
            params([
                ("xi", ParamValue::Scalar(0.1)),
                ("omega0", ParamValue::Scalar(1.0)),
                ("gamma", ParamValue::Scalar(0.25)),
                ("sigma", ParamValue::Scalar(0.1)),
            ])
        },
        builder: |p| build_van_der_pol(scalar(p, "xi")?, scalar(p, "omega0")?, scalar(p, "gamma")?, scalar(p, "sigma")?),
    },
    ModelCatalogEntry {
        name: "duffing_vdp",
        description: "scalar Duffing-Van der Pol family with polynomial damping and stiffness",
        default_params: || {
            params([
                ("xi", ParamValue::Vector(vec![0.0, 0.0, 0.0, 1.0])),
                ("a", ParamValue::Vector(vec![0.0, -1.0])),
                ("sigma", ParamValue::Scalar(0.5)),
            ])
        },
        builder: |p| build_duffing_vdp_general(&vector(p, "xi")?, &vector(p, "a")?, diffusion_param(p, "sigma", 1)?),
    },
    ModelCatalogEntry {
        name: "vector_duffing",
        description: "n-dimensional Duffing oscillator with damping matrix B and stiffness A",
        default_params: || {
            params([
                ("b", ParamValue::Matrix(vec![vec![1.0, 0.5], vec![-0.5, 1.0]])),
                ("a", ParamValue::Matrix(vec![vec![2.0, -1.0], vec![-1.0, 2.0]])),
                ("k", ParamValue::Vector(vec![1.0, 1.0])),
                ("sigma", ParamValue::Scalar(0.5)),
            ])
        },
        builder: |p| {
            let k = vector(p, "k")?;
            let n = k.len();
            build_vector_duffing(&matrix(p, "b")?, &matrix(p, "a")?, &k, diffusion_param(p, "sigma", n)?)
        },
    },
    ModelCatalogEntry {
        name: "coupled_lienard",
        description: "coupled Lienard oscillators with potential unbounded below",
        default_params: || {
            params([
                ("xi", ParamValue::Vector(vec![1.0, 1.0])),
                ("a", ParamValue::Vector(vec![1.0, 1.0])),
                ("nu", ParamValue::Scalar(0.5)),
                ("n1", ParamValue::Scalar(2.0)),
                ("n2", ParamValue::Scalar(1.0)),
                ("sigma", ParamValue::Scalar(0.5)),
            ])
        },
        builder: |p| {
            let xi = vector(p, "xi")?;
            let n = xi.len();
            build_coupled_lienard(
                &xi,
                &vector(p, "a")?,
                scalar(p, "nu")?,
                natural(p, "n1")?,
                natural(p, "n2")?,
                diffusion_param(p, "sigma", n)?,
            )
        },
    },
    ModelCatalogEntry {
        name: "damped_linear",
        description: "linear damped oscillator (Ornstein-Uhlenbeck in phase space)",
        default_params: || {
            params([
                ("damping", ParamValue::Scalar(0.5)),
                ("omega0", ParamValue::Scalar(1.0)),
                ("sigma", ParamValue::Scalar(0.5)),
            ])
        },
        builder: |p| build_damped_linear(scalar(p, "damping")?, scalar(p, "omega0")?, scalar(p, "sigma")?),
    },
];

pub fn catalog() -> &'static [ModelCatalogEntry] {
    &CATALOG
}

pub fn lookup(name: &str) -> Result<&'static ModelCatalogEntry, ModelError> {
    CATALOG
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| ModelError::UnknownModel(name.to_string()))
}

/// Builds a catalog model from parameter overrides.
pub fn build(name: &str, overrides: &Params) -> Result<OscillatorModel, ModelError> {
    lookup(name)?.build(overrides)
}
