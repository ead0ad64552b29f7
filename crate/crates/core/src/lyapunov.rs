//! Lyapunov functions, the diffusion generator, and the non-explosion checks.
//!
//! A system is non-explosive when coefficients are locally Lipschitz and a
//! `C^2` function `V >= 0` with `V -> +inf` satisfies `LV <= cV`. Here `V`,
//! the drift and the diffusion are all polynomials, so `LV` is computed
//! exactly. Each inequality hypothesis is then checked two ways:
//!
//! * a scan over a box `[-R, R]^d` (full grid for `d <= 4`, seeded Monte
//!   Carlo beyond), and
//! * the sign of the leading coefficient of the polynomial restricted to
//!   coordinate rays and a fixed set of random rays.
//!
//! Neither is a proof. A condition passes only if both agree, and the
//! certificate records the box that was scanned.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::VerifyError;
use crate::phase::{reduce_to_phase_system, OscillatorModel, PhaseSystem};
use crate::poly::{CompiledPoly, MultiPolynomial, Polynomial};
use crate::transform::build_transformed_system;

/// Relative rounding allowance for a grid value against the sum of the
/// absolute values of its terms.
const REL_TOL: f64 = 1e-12;
/// Leading ray coefficients below this fraction of the largest one are
/// treated as cancelled.
const CANCEL_TOL: f64 = 1e-12;
const RANDOM_RAYS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Construction {
    /// `G(x) + |y|^2 / 2`
    EnergyForm,
    /// `int_0^x (F + g) + y^2 / 2` in transformed coordinates.
    ScalarTransformed,
    /// `H(x) + G(x) + |y|^2 / 2` in transformed coordinates.
    VectorTransformed,
}

/// `V + K` with `V` a polynomial over the `2n` phase variables.
#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovFunction {
    pub v: MultiPolynomial,
    pub k: f64,
    pub construction: Construction,
}

impl LyapunovFunction {
    pub fn eval(&self, z: &[f64]) -> f64 {
        self.v.eval(z) + self.k
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k = k;
        self
    }
}

fn half_velocity_square(n: usize) -> MultiPolynomial {
    let nv = 2 * n;
    (0..n).fold(MultiPolynomial::zero(nv), |acc, i| {
        let mut e = vec![0; nv];
        e[n + i] = 2;
        &acc + &MultiPolynomial::monomial(e, 0.5)
    })
}

/// `V = G(x) + |y|^2 / 2`; `K` is kept separately.
pub fn build_energy_lyapunov(model: &OscillatorModel, k: f64) -> Result<LyapunovFunction, VerifyError> {
    let pot = model.potential().ok_or(VerifyError::MissingPotential)?;
    let n = model.n();
    Ok(LyapunovFunction {
        v: &pot.embed(2 * n, 0) + &half_velocity_square(n),
        k,
        construction: Construction::EnergyForm,
    })
}

/// `V = int_0^x [F(s) + g(s)] ds + y^2 / 2` for a scalar Lienard model, in the
/// transformed coordinates.
pub fn build_transformed_lyapunov_scalar(model: &OscillatorModel) -> Result<LyapunovFunction, VerifyError> {
    let f = model.lienard_coefficients().ok_or(VerifyError::NotLienard)?;
    if model.n() != 1 {
        return Err(VerifyError::NotScalar(model.n()));
    }
    let big_f = f[0].antiderivative();
    let g = scalar_restoring(model);
    let integral = (&big_f + &g).antiderivative();
    Ok(LyapunovFunction {
        v: &integral.to_multi(0, 2) + &half_velocity_square(1),
        k: 0.0,
        construction: Construction::ScalarTransformed,
    })
}

/// `V = H(x) + G(x) + |y|^2 / 2` in the transformed coordinates.
pub fn build_transformed_lyapunov_vector(model: &OscillatorModel) -> Result<LyapunovFunction, VerifyError> {
    let t = build_transformed_system(model).map_err(|_| VerifyError::NotLienard)?;
    let pot = model.potential().ok_or(VerifyError::MissingPotential)?;
    let n = model.n();
    let hg = t.h() + pot;
    Ok(LyapunovFunction {
        v: &hg.embed(2 * n, 0) + &half_velocity_square(n),
        k: 0.0,
        construction: Construction::VectorTransformed,
    })
}

fn scalar_restoring(model: &OscillatorModel) -> Polynomial {
    model.potential_gradient()[0]
        .to_univariate()
        .expect("scalar model has a univariate restoring force")
}

/// `L = sum_i drift_i d/dz_i + 1/2 sum_ij (sigma sigma^T)_ij d^2/dz_i dz_j`
/// acting on polynomials.
#[derive(Clone, Debug)]
pub struct GeneratorOperator<'a> {
    system: &'a PhaseSystem,
    covariance: Vec<Vec<MultiPolynomial>>,
}

impl<'a> GeneratorOperator<'a> {
    pub fn new(system: &'a PhaseSystem) -> Self {
        let sigma = system.diffusion_polys();
        let d = system.dim();
        let covariance = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        sigma[i]
                            .iter()
                            .zip(&sigma[j])
                            .fold(MultiPolynomial::zero(d), |acc, (a, b)| &acc + &(a * b))
                    })
                    .collect()
            })
            .collect();
        GeneratorOperator { system, covariance }
    }

    pub fn system(&self) -> &PhaseSystem {
        self.system
    }

    /// `(sigma sigma^T)_ij`
    pub fn covariance(&self) -> &[Vec<MultiPolynomial>] {
        &self.covariance
    }

    pub fn apply(&self, v: &MultiPolynomial) -> MultiPolynomial {
        let d = self.system.dim();
        let grad = v.gradient();
        let mut out = MultiPolynomial::zero(d);
        for (drift, dv) in self.system.drift_polys().iter().zip(&grad) {
            out = &out + &(drift * dv);
        }
        for i in 0..d {
            for j in 0..d {
                if self.covariance[i][j].is_zero() {
                    continue;
                }
                let second = grad[i].partial(j);
                out = &out + &(&self.covariance[i][j] * &second).scale(0.5);
            }
        }
        out
    }
}

/// Exact `LV`; the additive constant of `V` drops out.
pub fn apply_generator(system: &PhaseSystem, lyap: &LyapunovFunction) -> MultiPolynomial {
    GeneratorOperator::new(system).apply(&lyap.v)
}

/// `LV(z)` from central differences of `v`, combined with the system's drift
/// and diffusion at `z`.
pub fn finite_difference_generator(system: &PhaseSystem, v: impl Fn(&[f64]) -> f64, z: &[f64], h: f64) -> f64 {
    let d = system.dim();
    let drift = system.drift_at(z);
    let sigma = system.diffusion_at(z);
    let cov = |i: usize, j: usize| -> f64 { sigma[i].iter().zip(&sigma[j]).map(|(a, b)| a * b).sum() };
    let mut p = z.to_vec();
    let at = |p: &mut Vec<f64>, moves: &[(usize, f64)]| -> f64 {
        for &(i, s) in moves {
            p[i] += s;
        }
        let val = v(p);
        for &(i, s) in moves {
            p[i] -= s;
        }
        val
    };
    let v0 = v(z);
    let mut lv = 0.0;
    for i in 0..d {
        if drift[i] != 0.0 {
            let dvi = (at(&mut p, &[(i, h)]) - at(&mut p, &[(i, -h)])) / (2.0 * h);
            lv += drift[i] * dvi;
        }
    }
    for i in 0..d {
        for j in 0..d {
            let a = cov(i, j);
            if a == 0.0 {
                continue;
            }
            let second = if i == j {
                (at(&mut p, &[(i, h)]) - 2.0 * v0 + at(&mut p, &[(i, -h)])) / (h * h)
            } else {
                (at(&mut p, &[(i, h), (j, h)]) - at(&mut p, &[(i, h), (j, -h)]) - at(&mut p, &[(i, -h), (j, h)])
                    + at(&mut p, &[(i, -h), (j, -h)]))
                    / (4.0 * h * h)
            };
            lv += 0.5 * a * second;
        }
    }
    lv
}

/// Region and resolution of the inequality scans.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationDomain {
    pub r_check: f64,
    /// Points per axis for full grids; `None` picks 201 up to two dimensions
    /// and 41 up to four.
    pub grid: Option<usize>,
    /// Samples used above four dimensions.
    pub monte_carlo_samples: usize,
    pub seed: u64,
}

impl Default for VerificationDomain {
    fn default() -> Self {
        VerificationDomain {
            r_check: 10.0,
            grid: None,
            monte_carlo_samples: 100_000,
            seed: 0x1ea5_u64,
        }
    }
}

enum Sampling {
    Grid { per_axis: usize },
    MonteCarlo(Vec<Vec<f64>>),
}

impl VerificationDomain {
    pub fn grid_points(&self, dims: usize) -> Option<usize> {
        match (self.grid, dims) {
            (Some(g), d) if d <= 4 => Some(g.max(2)),
            (None, d) if d <= 2 => Some(201),
            (None, d) if d <= 4 => Some(41),
            _ => None,
        }
    }

    fn sampling(&self, dims: usize) -> Sampling {
        match self.grid_points(dims) {
            Some(per_axis) => Sampling::Grid { per_axis },
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let pts = (0..self.monte_carlo_samples)
                    .map(|_| (0..dims).map(|_| rng.random_range(-self.r_check..=self.r_check)).collect())
                    .collect();
                Sampling::MonteCarlo(pts)
            }
        }
    }

    /// Coordinate rays `+-e_i` followed by seeded random unit directions.
    fn rays(&self, dims: usize) -> Vec<Vec<f64>> {
        let mut rays = Vec::with_capacity(2 * dims + RANDOM_RAYS);
        for i in 0..dims {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; dims];
                e[i] = s;
                rays.push(e);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x7a75);
        while rays.len() < 2 * dims + RANDOM_RAYS {
            let u: Vec<f64> = (0..dims).map(|_| rng.sample(StandardNormal)).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-8 {
                rays.push(u.iter().map(|v| v / norm).collect());
            }
        }
        rays
    }
}

/// Minimum of `key` over the scan, ties broken by lowest sample index.
fn scan_min<F>(dims: usize, domain: &VerificationDomain, key: F) -> (f64, Vec<f64>)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let pick = |a: (f64, usize), b: (f64, usize)| {
        if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
            b
        } else {
            a
        }
    };
    // NaN keys count as violations
    let sanitize = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    match domain.sampling(dims) {
        Sampling::Grid { per_axis } => {
            let r = domain.r_check;
            let coord = |k: usize| -r + 2.0 * r * k as f64 / (per_axis - 1) as f64;
            let total = per_axis.pow(dims as u32);
            let fill = |buf: &mut [f64], mut idx: usize| {
                for slot in buf.iter_mut() {
                    *slot = coord(idx % per_axis);
                    idx /= per_axis;
                }
            };
            let (best, idx) = (0..total)
                .into_par_iter()
                .map_init(
                    || vec![0.0; dims],
                    |buf, idx| {
                        fill(buf, idx);
                        (sanitize(key(buf)), idx)
                    },
                )
                .reduce(|| (f64::INFINITY, usize::MAX), pick);
            let mut point = vec![0.0; dims];
            if idx != usize::MAX {
                fill(&mut point, idx);
            }
            (best, point)
        }
        Sampling::MonteCarlo(points) => {
            let (best, idx) = points
                .par_iter()
                .enumerate()
                .map(|(i, p)| (sanitize(key(p)), i))
                .reduce(|| (f64::INFINITY, usize::MAX), pick);
            (best, points.get(idx).cloned().unwrap_or_default())
        }
    }
}

struct Evaluator {
    terms: CompiledPoly,
    abs: CompiledPoly,
}

impl Evaluator {
    fn new(p: &MultiPolynomial) -> Self {
        let abs = abs_poly(p);
        Evaluator {
            terms: CompiledPoly::new(p),
            abs: CompiledPoly::new(&abs),
        }
    }

    fn value(&self, z: &[f64]) -> f64 {
        self.terms.eval(z)
    }

    /// Value plus the rounding allowance; nonnegative means "holds".
    fn margin(&self, z: &[f64]) -> f64 {
        let mag: f64 = self.abs.eval(&z.iter().map(|v| v.abs()).collect::<Vec<_>>());
        self.terms.eval(z) + REL_TOL * mag
    }
}

/// Minimum of `p` over the scan.
fn grid_min(p: &MultiPolynomial, domain: &VerificationDomain) -> (f64, Vec<f64>) {
    let ev = Evaluator::new(p);
    scan_min(p.nvars(), domain, |z| ev.value(z))
}

/// Worst rounding-adjusted margin of `p >= 0` over the scan.
fn grid_margin(p: &MultiPolynomial, domain: &VerificationDomain) -> (f64, Vec<f64>) {
    let ev = Evaluator::new(p);
    scan_min(p.nvars(), domain, |z| ev.margin(z))
}

/// Behaviour of a polynomial far out along a ray.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RaySign {
    /// Grows to `+inf`.
    Growing,
    /// No non-constant term survives.
    Bounded,
    /// Goes to `-inf`.
    Falling,
    /// The leading coefficient cancelled to rounding level.
    Unclear,
}

/// Sign of the leading non-constant coefficient of `p` along `dir`. A
/// coefficient is cancelled when it is within rounding of the sum of the
/// absolute values of its contributions.
fn ray_sign(p: &MultiPolynomial, dir: &[f64]) -> RaySign {
    let restricted = p.restrict_to_ray(dir);
    let magnitude = abs_poly(p).restrict_to_ray(&dir.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let c = restricted.coeffs();
    let mag = magnitude.coeffs();
    for d in (1..mag.len()).rev() {
        let v = c.get(d).copied().unwrap_or(0.0);
        if mag[d] == 0.0 {
            continue;
        }
        if v.abs() <= CANCEL_TOL * mag[d] {
            return RaySign::Unclear;
        }
        return if v > 0.0 { RaySign::Growing } else { RaySign::Falling };
    }
    RaySign::Bounded
}

fn abs_poly(p: &MultiPolynomial) -> MultiPolynomial {
    let terms: Vec<_> = p
        .to_terms()
        .into_iter()
        .map(|mut t| {
            t.coeff = t.coeff.abs();
            t
        })
        .collect();
    MultiPolynomial::from_terms(p.nvars(), &terms).expect("same arity")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Indeterminate,
}

/// Constants and, on failure, the offending point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub point: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub direction: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub name: String,
    pub status: Status,
    pub witness: Witness,
}

impl ConditionResult {
    fn new(name: &str, status: Status, witness: Witness) -> Self {
        ConditionResult {
            name: name.to_string(),
            status,
            witness,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    fn structural(name: &str, note: &str) -> Self {
        ConditionResult::new(
            name,
            Status::Pass,
            Witness {
                note: Some(note.to_string()),
                ..Witness::default()
            },
        )
    }
}

fn constants<const N: usize>(items: [(&str, f64); N]) -> BTreeMap<String, f64> {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// `p >= 0` on the scan and not falling to `-inf` along any ray.
fn check_nonnegative(name: &str, p: &MultiPolynomial, domain: &VerificationDomain, consts: BTreeMap<String, f64>) -> ConditionResult {
    let (margin, point) = grid_margin(p, domain);
    if margin < 0.0 {
        return ConditionResult::new(
            name,
            Status::Fail,
            Witness {
                constants: consts,
                point: Some(point.clone()),
                note: Some(format!("value {} at the witness point", p.eval(&point))),
                ..Witness::default()
            },
        );
    }
    let mut unclear = None;
    for ray in domain.rays(p.nvars()) {
        match ray_sign(p, &ray) {
            RaySign::Growing | RaySign::Bounded => {}
            RaySign::Falling => {
                return ConditionResult::new(
                    name,
                    Status::Fail,
                    Witness {
                        constants: consts,
                        direction: Some(ray),
                        note: Some("leading term is negative along the witness direction".into()),
                        ..Witness::default()
                    },
                );
            }
            RaySign::Unclear => {
                unclear.get_or_insert(ray);
            }
        }
    }
    match unclear {
        None => ConditionResult::new(
            name,
            Status::Pass,
            Witness {
                constants: consts,
                ..Witness::default()
            },
        ),
        Some(ray) => ConditionResult::new(
            name,
            Status::Indeterminate,
            Witness {
                constants: consts,
                direction: Some(ray),
                note: Some("grid passes but the leading coefficient cancels along the witness direction".into()),
                ..Witness::default()
            },
        ),
    }
}

/// `p -> +inf` as `|x| -> inf`: positive leading term along every ray plus
/// increasing ring minima at radii `R/2, R, 2R`.
fn check_radially_unbounded(name: &str, p: &MultiPolynomial, domain: &VerificationDomain) -> ConditionResult {
    let rays = domain.rays(p.nvars());
    let mut unclear = None;
    for ray in &rays {
        match ray_sign(p, ray) {
            RaySign::Growing => {}
            RaySign::Bounded | RaySign::Falling => {
                return ConditionResult::new(
                    name,
                    Status::Fail,
                    Witness {
                        direction: Some(ray.clone()),
                        note: Some("does not grow to +inf along the witness direction".into()),
                        ..Witness::default()
                    },
                );
            }
            RaySign::Unclear => {
                unclear.get_or_insert(ray.clone());
            }
        }
    }
    if let Some(ray) = unclear {
        return ConditionResult::new(
            name,
            Status::Indeterminate,
            Witness {
                direction: Some(ray),
                note: Some("leading coefficient cancels along the witness direction".into()),
                ..Witness::default()
            },
        );
    }
    let radii = [domain.r_check / 2.0, domain.r_check, 2.0 * domain.r_check];
    let ring_min: Vec<f64> = radii
        .iter()
        .map(|&r| {
            rays.iter()
                .map(|u| p.eval(&u.iter().map(|v| v * r).collect::<Vec<_>>()))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut consts = BTreeMap::new();
    for (r, m) in radii.iter().zip(&ring_min) {
        consts.insert(format!("ring_min_r{r}"), *m);
    }
    if ring_min.windows(2).all(|w| w[1] > w[0]) {
        ConditionResult::new(
            name,
            Status::Pass,
            Witness {
                constants: consts,
                ..Witness::default()
            },
        )
    } else {
        ConditionResult::new(
            name,
            Status::Indeterminate,
            Witness {
                constants: consts,
                note: Some("leading terms grow but ring minima are not increasing inside the box".into()),
                ..Witness::default()
            },
        )
    }
}

fn velocity_dot(n: usize, v: &[MultiPolynomial]) -> MultiPolynomial {
    let nv = 2 * n;
    (0..n).fold(MultiPolynomial::zero(nv), |acc, i| &acc + &(&MultiPolynomial::var(nv, n + i) * &v[i]))
}

fn half_trace(sigma: &[Vec<MultiPolynomial>], nv: usize) -> MultiPolynomial {
    sigma
        .iter()
        .flatten()
        .fold(MultiPolynomial::zero(nv), |acc, s| &acc + &(s * s))
        .scale(0.5)
}

/// `<y, b> + c (G + |y|^2 / 2) - Tr(sigma sigma^T) / 2` without `K_1`.
fn thm2_slack(model: &OscillatorModel, c: f64) -> Result<MultiPolynomial, VerifyError> {
    let pot = model.potential().ok_or(VerifyError::MissingPotential)?;
    let n = model.n();
    let nv = 2 * n;
    let energy = &pot.embed(nv, 0) + &half_velocity_square(n);
    let yb = velocity_dot(n, &model.damping_polys());
    Ok(&(&yb + &energy.scale(c)) - &half_trace(&model.diffusion_polys(), nv))
}

/// `Tr(sigma sigma^T) / 2 <= <y, b> + c (G + |y|^2 / 2) + K_1` on the box and
/// asymptotically.
pub fn check_thm2_condition3(
    model: &OscillatorModel,
    c: f64,
    k1: f64,
    domain: &VerificationDomain,
) -> Result<ConditionResult, VerifyError> {
    let nv = 2 * model.n();
    let slack = &thm2_slack(model, c)? + &MultiPolynomial::constant(nv, k1);
    Ok(check_nonnegative(
        "theorem2.noise_bound",
        &slack,
        domain,
        constants([("c", c), ("K1", k1)]),
    ))
}

/// Smallest `K_1 >= 0` for which condition 3 holds on the box.
pub fn find_thm2_k1(model: &OscillatorModel, c: f64, domain: &VerificationDomain) -> Result<f64, VerifyError> {
    let (min, _) = grid_min(&thm2_slack(model, c)?, domain);
    Ok((-min).max(0.0))
}

/// Alpha grid resolution of [`check_corollary1`].
pub const ALPHA_STEPS: u32 = 10_000;

/// Smallest `alpha` on the grid `alpha_max * k / ALPHA_STEPS` with
/// `<b, y> + alpha |y|^2 >= 0` on the box and asymptotically.
pub fn check_corollary1(
    model: &OscillatorModel,
    alpha_max: f64,
    domain: &VerificationDomain,
) -> Result<ConditionResult, VerifyError> {
    const NAME: &str = "corollary1.dissipation";
    if model.diffusion().as_constant().is_none() {
        return Err(VerifyError::NonConstantDiffusion);
    }
    let n = model.n();
    let nv = 2 * n;
    let yb = velocity_dot(n, &model.damping_polys());
    let y2 = half_velocity_square(n).scale(2.0);

    // alpha needed on the box: max of -<b, y> / |y|^2
    let yb_eval = CompiledPoly::new(&yb);
    let (min_ratio, _) = scan_min(nv, domain, |z| {
        let s: f64 = z[n..].iter().map(|v| v * v).sum();
        if s == 0.0 {
            f64::INFINITY
        } else {
            yb_eval.eval(z) / s
        }
    });
    let needed = (-min_ratio).max(0.0);
    let alpha_at = |k: u32| alpha_max * k as f64 / ALPHA_STEPS as f64;
    let start = if needed.is_finite() {
        ((needed / alpha_max * ALPHA_STEPS as f64).floor() as i64 - 1).clamp(0, ALPHA_STEPS as i64) as u32
    } else {
        ALPHA_STEPS + 1
    };

    let mut last = None;
    for k in start..=ALPHA_STEPS {
        let alpha = alpha_at(k);
        let poly = &yb + &y2.scale(alpha);
        let res = check_nonnegative(NAME, &poly, domain, constants([("alpha", alpha)]));
        match res.status {
            Status::Pass => return Ok(res),
            // grid failures at this alpha; a larger one may still work
            Status::Fail if res.witness.point.is_some() => last = Some(res),
            // the leading term is negative for every alpha
            Status::Fail => {
                let mut res = res;
                res.witness.note = Some(format!(
                    "<b, y> falls faster than -alpha |y|^2 for every alpha; {}",
                    res.witness.note.unwrap_or_default()
                ));
                return Ok(res);
            }
            Status::Indeterminate => last = Some(res),
        }
    }
    let mut res = last.unwrap_or_else(|| {
        ConditionResult::new(
            NAME,
            Status::Fail,
            Witness {
                note: Some(format!("needs alpha >= {needed}, beyond the search limit {alpha_max}")),
                ..Witness::default()
            },
        )
    });
    if res.status == Status::Fail {
        res.witness.constants.insert("alpha_max".into(), alpha_max);
    }
    Ok(res)
}

/// Outcome of a theorem-level check: its conditions and the constants found.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoremCheck {
    pub conditions: Vec<ConditionResult>,
    pub constants: Constants,
}

impl TheoremCheck {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(ConditionResult::passed)
    }
}

/// Conditions of the scalar transformed criterion:
///
/// * `01` regularity (structural for polynomial coefficients),
/// * `02` `x [F(x) + g(x)] >= c1 x^2` for `|x| >= c2`,
/// * `03` `sigma^2(x, y - F)/2 <= (y - F)^2/2 + F (F/2 + g) + K1`.
///
/// Condition 03 bounds the noise from above, which is the direction the
/// Lyapunov estimate `LV <= y^2/2 + K1` needs.
pub fn check_thm3_conditions(model: &OscillatorModel, domain: &VerificationDomain) -> Result<TheoremCheck, VerifyError> {
    let f = model.lienard_coefficients().ok_or(VerifyError::NotLienard)?;
    if model.n() != 1 {
        return Err(VerifyError::NotScalar(model.n()));
    }
    let big_f = f[0].antiderivative();
    let g = scalar_restoring(model);
    let mut consts = Constants::default();

    let regularity = ConditionResult::structural(
        "theorem3.regularity",
        "polynomial f, g are C^1 and polynomial sigma is locally Lipschitz",
    );

    // condition 02
    let x = Polynomial::monomial(1, 1.0);
    let p = &x * &(&big_f + &g);
    let coercive = coercivity(&p, domain);
    if let Some((c1, c2)) = coercive.1 {
        consts.c1 = Some(c1);
        consts.c2 = Some(c2);
    }
    let coercive = coercive.0;

    // condition 03 in transformed coordinates (x, y)
    let t = build_transformed_system(model).map_err(|_| VerifyError::NotLienard)?;
    let nv = 2;
    let f2 = big_f.to_multi(0, nv);
    let g2 = g.to_multi(0, nv);
    let w = &MultiPolynomial::var(nv, 1) - &f2;
    let sigma = t.system().diffusion_polys();
    let base = &(&w * &w).scale(0.5) + &(&f2 * &(&f2.scale(0.5) + &g2));
    let slack = &base - &half_trace(&sigma[1..], nv);
    let (min, _) = grid_min(&slack, domain);
    let k1 = (-min).max(0.0);
    consts.k1 = Some(k1);
    let mut noise = check_nonnegative(
        "theorem3.noise_bound",
        &(&slack + &MultiPolynomial::constant(nv, k1)),
        domain,
        constants([("K1", k1)]),
    );
    noise.witness.note.get_or_insert_with(|| {
        "checked as sigma^2/2 <= (y-F)^2/2 + F(F/2+g) + K1 (noise bounded from above)".to_string()
    });

    // V = int (F + g) + y^2/2 + K needs K >= K1 and V >= 0
    let integral = (&big_f + &g).antiderivative().to_multi(0, 1);
    let (vmin, _) = grid_min(&integral, domain);
    consts.c = Some(1.0);
    consts.k = Some(k1 + (-vmin).max(0.0));

    Ok(TheoremCheck {
        conditions: vec![regularity, coercive, noise],
        constants: consts,
    })
}

/// Finds `c1 > 0`, `c2 > 0` with `p(x) >= c1 x^2` for `|x| >= c2`.
fn coercivity(p: &Polynomial, domain: &VerificationDomain) -> (ConditionResult, Option<(f64, f64)>) {
    const NAME: &str = "theorem3.coercivity";
    let fail = |note: String| {
        (
            ConditionResult::new(
                NAME,
                Status::Fail,
                Witness {
                    note: Some(note),
                    ..Witness::default()
                },
            ),
            None,
        )
    };
    let p = p.pruned(CANCEL_TOL);
    let Some(deg) = p.degree() else {
        return fail("x [F(x) + g(x)] is identically zero".into());
    };
    let lead = p.leading_coeff();
    if deg < 2 || deg % 2 == 1 || lead <= 0.0 {
        return fail(format!(
            "x [F(x) + g(x)] has degree {deg} and leading coefficient {lead}; needs even degree >= 2 with positive lead"
        ));
    }
    let c1 = if deg == 2 { lead / 2.0 } else { 0.5 };
    let q = &p - &Polynomial::monomial(2, c1);

    let per_axis = domain.grid_points(1).unwrap_or(201);
    let r = domain.r_check;
    let spacing = 2.0 * r / (per_axis - 1) as f64;
    let q_multi = q.to_multi(0, 1);
    let ev = Evaluator::new(&q_multi);
    let worst_violation = (0..per_axis)
        .map(|k| -r + spacing * k as f64)
        .filter(|&x| ev.margin(&[x]) < 0.0)
        .map(f64::abs)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let c2 = worst_violation.map_or(spacing, |v| v + spacing);
    if c2 > r {
        return (
            ConditionResult::new(
                NAME,
                Status::Fail,
                Witness {
                    constants: constants([("c1", c1)]),
                    note: Some(format!("x [F + g] < c1 x^2 out to the edge of the box |x| = {r}")),
                    ..Witness::default()
                },
            ),
            None,
        );
    }
    let mut consts = constants([("c1", c1), ("c2", c2)]);
    consts.insert("degree".into(), deg as f64);
    (
        ConditionResult::new(
            NAME,
            Status::Pass,
            Witness {
                constants: consts,
                ..Witness::default()
            },
        ),
        Some((c1, c2)),
    )
}

/// Conditions of the vector transformed criterion:
///
/// * `01` regularity (structural),
/// * `02` `H(x) + G(x) -> +inf` as `|x| -> inf`,
/// * `03` `Tr[sigma sigma^T](x, y - F) <= |y|^2 + <grad H, grad H + 2 grad G> + K2`.
pub fn check_thm4_conditions(model: &OscillatorModel, domain: &VerificationDomain) -> Result<TheoremCheck, VerifyError> {
    if !model.is_lienard() {
        return Err(VerifyError::NotLienard);
    }
    let pot = model.potential().ok_or(VerifyError::MissingPotential)?;
    let t = build_transformed_system(model).map_err(|_| VerifyError::NotLienard)?;
    let n = model.n();
    let nv = 2 * n;
    let mut consts = Constants::default();

    let regularity = ConditionResult::structural(
        "theorem4.regularity",
        "polynomial f_i and dG/dx_i are C^1",
    );
    let hg = t.h() + pot;
    let radial = check_radially_unbounded("theorem4.radial_growth", &hg, domain);

    let grad_h: Vec<MultiPolynomial> = t
        .antiderivatives()
        .iter()
        .enumerate()
        .map(|(i, f)| f.to_multi(i, nv))
        .collect();
    let g = model.restoring_polys();
    let cross = (0..n).fold(MultiPolynomial::zero(nv), |acc, i| {
        &acc + &(&grad_h[i] * &(&grad_h[i] + &g[i].scale(2.0)))
    });
    let y2 = half_velocity_square(n).scale(2.0);
    let sigma = t.system().diffusion_polys();
    let slack = &(&y2 + &cross) - &half_trace(&sigma[n..], nv).scale(2.0);
    let (min, _) = grid_min(&slack, domain);
    let k2 = (-min).max(0.0);
    consts.k2 = Some(k2);
    let noise = check_nonnegative(
        "theorem4.noise_bound",
        &(&slack + &MultiPolynomial::constant(nv, k2)),
        domain,
        constants([("K2", k2)]),
    );

    // LV <= |y|^2 + K2/2 <= 2 V once H + G + K >= K2/4
    let (hg_min, _) = grid_min(&hg, domain);
    consts.c = Some(2.0);
    consts.k = Some(k2 / 4.0 + (-hg_min).max(0.0));

    Ok(TheoremCheck {
        conditions: vec![regularity, radial, noise],
        constants: consts,
    })
}

/// Energy-route criterion with constant `c`; `K_1` is the smallest value that
/// makes condition 3 hold on the box.
pub fn check_thm2_conditions(model: &OscillatorModel, c: f64, domain: &VerificationDomain) -> Result<TheoremCheck, VerifyError> {
    let pot = model.potential().ok_or(VerifyError::MissingPotential)?;
    let regularity = ConditionResult::structural("theorem2.regularity", "polynomial b and g are locally Lipschitz");
    let radial = check_radially_unbounded("theorem2.potential_growth", pot, domain);
    let k1 = find_thm2_k1(model, c, domain)?;
    let noise = check_thm2_condition3(model, c, k1, domain)?;
    let (gmin, _) = grid_min(pot, domain);
    let constants = Constants {
        c: Some(c),
        k1: Some(k1),
        k: Some((k1 / c).max((-gmin).max(0.0))),
        ..Constants::default()
    };
    Ok(TheoremCheck {
        conditions: vec![regularity, radial, noise],
        constants,
    })
}

fn corollary1_conditions(model: &OscillatorModel, opts: &VerifyOptions) -> Result<TheoremCheck, VerifyError> {
    let pot = model.potential().ok_or(VerifyError::MissingPotential)?;
    let domain = &opts.domain;
    let regularity = ConditionResult::structural("corollary1.regularity", "polynomial b and g are locally Lipschitz");
    let radial = check_radially_unbounded("corollary1.potential_growth", pot, domain);
    let constant_noise = ConditionResult::structural("corollary1.constant_noise", "sigma is constant");
    let dissipation = check_corollary1(model, opts.alpha_max, domain)?;
    let mut constants = Constants::default();
    if let Some(&alpha) = dissipation.witness.constants.get("alpha") {
        constants.alpha = Some(alpha);
        let c = if opts.c > 2.0 * alpha { opts.c } else { 2.0 * alpha + 1.0 };
        let k1 = find_thm2_k1(model, c, domain)?;
        let (gmin, _) = grid_min(pot, domain);
        constants.c = Some(c);
        constants.k1 = Some(k1);
        constants.k = Some((k1 / c).max((-gmin).max(0.0)));
    }
    Ok(TheoremCheck {
        conditions: vec![regularity, radial, constant_noise, dissipation],
        constants,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    Corollary1,
    Theorem2,
    Theorem3,
    Theorem4,
    None,
}

impl std::fmt::Display for Theorem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Theorem::Corollary1 => "Corollary1",
            Theorem::Theorem2 => "Theorem2",
            Theorem::Theorem3 => "Theorem3",
            Theorem::Theorem4 => "Theorem4",
            Theorem::None => "None",
        };
        f.write_str(s)
    }
}

/// Constants of the applied criterion; irrelevant ones stay `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    #[serde(rename = "K1")]
    pub k1: Option<f64>,
    #[serde(rename = "K2")]
    pub k2: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    #[serde(rename = "R_check")]
    pub r_check: f64,
    /// Points per axis of the phase-space grid; zero when Monte Carlo was used.
    pub grid: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub monte_carlo_samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    pub model: String,
    pub theorem: Theorem,
    pub conditions: Vec<ConditionResult>,
    pub constants: Constants,
    pub domain: DomainSummary,
    pub notes: Vec<String>,
}

impl LyapunovCertificate {
    pub fn applies(&self) -> bool {
        self.theorem != Theorem::None
    }

    pub fn report_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model: {}", self.model);
        match self.theorem {
            Theorem::None => {
                let _ = writeln!(out, "result: no criterion established non-explosion");
            }
            t => {
                let _ = writeln!(out, "result: non-explosive by {t}");
            }
        }
        let _ = write!(out, "domain: box radius {}", self.domain.r_check);
        match self.domain.monte_carlo_samples {
            Some(s) => {
                let _ = writeln!(out, ", {s} Monte Carlo samples");
            }
            None => {
                let _ = writeln!(out, ", {} points per axis", self.domain.grid);
            }
        }
        let _ = writeln!(out, "conditions:");
        for c in &self.conditions {
            let status = match c.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Indeterminate => "indeterminate",
            };
            let _ = write!(out, "  [{status}] {}", c.name);
            for (k, v) in &c.witness.constants {
                let _ = write!(out, " {k}={v}");
            }
            if let Some(p) = &c.witness.point {
                let _ = write!(out, " at {p:?}");
            }
            if let Some(d) = &c.witness.direction {
                let _ = write!(out, " along {d:?}");
            }
            if let Some(note) = &c.witness.note {
                let _ = write!(out, " ({note})");
            }
            let _ = writeln!(out);
        }
        let consts = [
            ("c", self.constants.c),
            ("K", self.constants.k),
            ("K1", self.constants.k1),
            ("K2", self.constants.k2),
            ("c1", self.constants.c1),
            ("c2", self.constants.c2),
            ("alpha", self.constants.alpha),
        ];
        let shown: Vec<String> = consts
            .iter()
            .filter_map(|(k, v)| v.map(|v| format!("{k}={v}")))
            .collect();
        if !shown.is_empty() {
            let _ = writeln!(out, "constants: {}", shown.join(" "));
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub domain: VerificationDomain,
    /// Growth constant `c` of the energy route.
    pub c: f64,
    pub alpha_max: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            domain: VerificationDomain::default(),
            c: 1.0,
            alpha_max: 10.0,
        }
    }
}

impl VerifyOptions {
    pub fn validate(&self) -> Result<(), VerifyError> {
        let bad = |m: String| Err(VerifyError::BadOptions(m));
        if !(self.domain.r_check > 0.0 && self.domain.r_check.is_finite()) {
            return bad(format!("r_check must be positive, got {}", self.domain.r_check));
        }
        if self.domain.grid.is_some_and(|g| g < 2) {
            return bad("grid needs at least 2 points per axis".into());
        }
        if self.domain.monte_carlo_samples == 0 {
            return bad("monte_carlo_samples must be at least 1".into());
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("c must be positive, got {}", self.c));
        }
        if !(self.alpha_max >= 0.0 && self.alpha_max.is_finite()) {
            return bad(format!("alpha_max must be nonnegative, got {}", self.alpha_max));
        }
        Ok(())
    }
}

/// Tries, in order, the constant-noise corollary, the energy criterion, the
/// scalar transformed criterion and the vector transformed criterion, and
/// certifies the first one whose conditions all pass.
pub fn verify_nonexplosion(model: &OscillatorModel, opts: &VerifyOptions) -> LyapunovCertificate {
    let domain = &opts.domain;
    let dims = 2 * model.n();
    let summary = DomainSummary {
        r_check: domain.r_check,
        grid: domain.grid_points(dims).unwrap_or(0),
        monte_carlo_samples: domain.grid_points(dims).is_none().then_some(domain.monte_carlo_samples),
    };
    let mut attempted: Vec<ConditionResult> = Vec::new();
    let mut notes = Vec::new();

    let mut attempts: Vec<(Theorem, Result<TheoremCheck, VerifyError>)> = Vec::new();
    let mut run = |theorem: Theorem| -> Option<TheoremCheck> {
        let result = match theorem {
            Theorem::Corollary1 => corollary1_conditions(model, opts),
            Theorem::Theorem2 => check_thm2_conditions(model, opts.c, domain),
            Theorem::Theorem3 => check_thm3_conditions(model, domain),
            Theorem::Theorem4 => check_thm4_conditions(model, domain),
            Theorem::None => unreachable!(),
        };
        match &result {
            Ok(check) if check.all_pass() => return Some(check.clone()),
            _ => attempts.push((theorem, result)),
        }
        None
    };

    let order = [
        (Theorem::Corollary1, model.diffusion().as_constant().is_some()),
        (Theorem::Theorem2, true),
        (Theorem::Theorem3, model.is_lienard() && model.n() == 1),
        (Theorem::Theorem4, model.is_lienard()),
    ];
    for (theorem, applicable) in order {
        if !applicable {
            continue;
        }
        if let Some(check) = run(theorem) {
            if theorem == Theorem::Theorem3 {
                notes.push("noise condition is checked with sigma^2 bounded from above, as the Lyapunov estimate requires".into());
            }
            return LyapunovCertificate {
                model: model.name().to_string(),
                theorem,
                conditions: check.conditions,
                constants: check.constants,
                domain: summary,
                notes,
            };
        }
    }

    for (theorem, result) in attempts {
        match result {
            Ok(check) => attempted.extend(check.conditions),
            Err(e) => {
                notes.push(format!("{theorem} not applicable: {e}"));
            }
        }
    }
    LyapunovCertificate {
        model: model.name().to_string(),
        theorem: Theorem::None,
        conditions: attempted,
        constants: Constants::default(),
        domain: summary,
        notes,
    }
}

/// The phase system a Lyapunov construction is stated in.
pub fn system_for(model: &OscillatorModel, construction: Construction) -> Result<PhaseSystem, VerifyError> {
    match construction {
        Construction::EnergyForm => Ok(reduce_to_phase_system(model)),
        Construction::ScalarTransformed | Construction::VectorTransformed => build_transformed_system(model)
            .map(|t| t.system().clone())
            .map_err(|_| VerifyError::NotLienard),
    }
}
