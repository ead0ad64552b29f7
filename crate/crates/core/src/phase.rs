//! Second-order oscillators and their first-order phase-space form.
//!
//! Phase-space polynomials use `2n` variables ordered `(x_1..x_n, y_1..y_n)`,
//! so variable `i < n` is a position and variable `n + i` the matching
//! velocity.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::poly::{CompiledPoly, MultiPolynomial, Polynomial};

/// A point `(x, y)` of phase space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, ModelError> {
        if x.len() != y.len() || x.is_empty() {
            return Err(ModelError::Dimension(format!(
                "position has {} entries, velocity has {}",
                x.len(),
                y.len()
            )));
        }
        Ok(PhasePoint { x, y })
    }

    /// Splits a flat `[x.., y..]` vector of even length.
    pub fn from_flat(z: &[f64]) -> Self {
        assert!(z.len() % 2 == 0 && !z.is_empty(), "flat phase vector must have even length");
        let n = z.len() / 2;
        PhasePoint {
            x: z[..n].to_vec(),
            y: z[n..].to_vec(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut z = self.x.clone();
        z.extend_from_slice(&self.y);
        z
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn norm(&self) -> f64 {
        self.x.iter().chain(&self.y).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }
}

/// Velocity-dependent force `b` of the oscillator.
#[derive(Clone, Debug, PartialEq)]
pub enum Damping {
    /// `b_i(x, y)` as polynomials over the `2n` phase variables.
    General(Vec<MultiPolynomial>),
    /// `b_i = f_i(x_i) * y_i`.
    Lienard(Vec<Polynomial>),
}

/// Noise amplitude `sigma`, an `n x m` matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum Diffusion {
    Constant(Vec<Vec<f64>>),
    /// Entries are polynomials over the `2n` phase variables.
    Polynomial(Vec<Vec<MultiPolynomial>>),
}

impl Diffusion {
    /// `s * I` with `n` rows and `n` noise channels.
    pub fn scalar_identity(n: usize, s: f64) -> Self {
        Diffusion::Constant(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { s } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn rows(&self) -> usize {
        match self {
            Diffusion::Constant(m) => m.len(),
            Diffusion::Polynomial(m) => m.len(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Diffusion::Constant(m) => m.first().map_or(0, Vec::len),
            Diffusion::Polynomial(m) => m.first().map_or(0, Vec::len),
        }
    }

    /// Constant value of the matrix, if every entry is constant.
    pub fn as_constant(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            Diffusion::Constant(m) => Some(m.clone()),
            Diffusion::Polynomial(m) => {
                if m.iter().flatten().all(MultiPolynomial::is_constant) {
                    Some(
                        m.iter()
                            .map(|row| row.iter().map(MultiPolynomial::constant_term).collect())
                            .collect(),
                    )
                } else {
                    None
                }
            }
        }
    }

    /// Entries as polynomials over `nvars` phase variables.
    pub fn to_polys(&self, nvars: usize) -> Vec<Vec<MultiPolynomial>> {
        match self {
            Diffusion::Constant(m) => m
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&c| MultiPolynomial::constant(nvars, c))
                        .collect()
                })
                .collect(),
            Diffusion::Polynomial(m) => m.clone(),
        }
    }
}

/// `x'' + b(x, x') + g(x) = sigma(x, x') W'`.
#[derive(Clone, Debug, PartialEq)]
pub struct OscillatorModel {
    name: String,
    n: usize,
    m: usize,
    damping: Damping,
    potential_gradient: Vec<MultiPolynomial>,
    potential: Option<MultiPolynomial>,
    diffusion: Diffusion,
}

const POTENTIAL_TOL: f64 = 1e-12;

impl OscillatorModel {
    pub fn new(
        name: impl Into<String>,
        damping: Damping,
        potential_gradient: Vec<MultiPolynomial>,
        potential: Option<MultiPolynomial>,
        diffusion: Diffusion,
    ) -> Result<Self, ModelError> {
        let n = potential_gradient.len();
        if n == 0 {
            return Err(ModelError::Dimension("model needs at least one coordinate".into()));
        }
        for (i, g) in potential_gradient.iter().enumerate() {
            if g.nvars() != n {
                return Err(ModelError::Dimension(format!(
                    "g_{} has {} variables, expected {n}",
                    i + 1,
                    g.nvars()
                )));
            }
        }
        match &damping {
            Damping::General(b) => {
                if b.len() != n {
                    return Err(ModelError::Dimension(format!(
                        "damping has {} components, expected {n}",
                        b.len()
                    )));
                }
                if let Some(bad) = b.iter().find(|p| p.nvars() != 2 * n) {
                    return Err(ModelError::Dimension(format!(
                        "damping entries must use {} phase variables, found {}",
                        2 * n,
                        bad.nvars()
                    )));
                }
            }
            Damping::Lienard(f) => {
                if f.len() != n {
                    return Err(ModelError::Dimension(format!(
                        "Lienard damping has {} components, expected {n}",
                        f.len()
                    )));
                }
            }
        }
        if diffusion.rows() != n {
            return Err(ModelError::Dimension(format!(
                "diffusion has {} rows, expected {n}",
                diffusion.rows()
            )));
        }
        let m = diffusion.cols();
        if m == 0 {
            return Err(ModelError::Dimension("diffusion needs at least one noise channel".into()));
        }
        match &diffusion {
            Diffusion::Constant(rows) => {
                if rows.iter().any(|r| r.len() != m) {
                    return Err(ModelError::Dimension("ragged diffusion matrix".into()));
                }
                if rows.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(ModelError::Dimension("diffusion entries must be finite".into()));
                }
            }
            Diffusion::Polynomial(rows) => {
                if rows.iter().any(|r| r.len() != m) {
                    return Err(ModelError::Dimension("ragged diffusion matrix".into()));
                }
                if rows.iter().flatten().any(|p| p.nvars() != 2 * n) {
                    return Err(ModelError::Dimension(format!(
                        "diffusion entries must use {} phase variables",
                        2 * n
                    )));
                }
            }
        }
        if let Some(pot) = &potential {
            if pot.nvars() != n {
                return Err(ModelError::Dimension(format!(
                    "potential has {} variables, expected {n}",
                    pot.nvars()
                )));
            }
            for (i, (dg, g)) in pot.gradient().iter().zip(&potential_gradient).enumerate() {
                let scale = 1.0 + g.max_abs_coeff().max(dg.max_abs_coeff());
                if dg.max_coeff_diff(g) > POTENTIAL_TOL * scale {
                    return Err(ModelError::PotentialMismatch(i));
                }
            }
        }
        Ok(OscillatorModel {
            name: name.into(),
            n,
            m,
            damping,
            potential_gradient,
            potential,
            diffusion,
        })
    }

    /// Model whose restoring force is the exact gradient of `potential`.
    pub fn from_potential(
        name: impl Into<String>,
        damping: Damping,
        potential: MultiPolynomial,
        diffusion: Diffusion,
    ) -> Result<Self, ModelError> {
        let g = potential.gradient();
        OscillatorModel::new(name, damping, g, Some(potential), diffusion)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn damping(&self) -> &Damping {
        &self.damping
    }

    pub fn potential_gradient(&self) -> &[MultiPolynomial] {
        &self.potential_gradient
    }

    pub fn potential(&self) -> Option<&MultiPolynomial> {
        self.potential.as_ref()
    }

    pub fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    pub fn is_lienard(&self) -> bool {
        matches!(self.damping, Damping::Lienard(_))
    }

    pub fn lienard_coefficients(&self) -> Option<&[Polynomial]> {
        match &self.damping {
            Damping::Lienard(f) => Some(f),
            Damping::General(_) => None,
        }
    }

    /// `b(x, y)` as polynomials over the phase variables.
    pub fn damping_polys(&self) -> Vec<MultiPolynomial> {
        let nv = 2 * self.n;
        match &self.damping {
            Damping::General(b) => b.clone(),
            Damping::Lienard(f) => f
                .iter()
                .enumerate()
                .map(|(i, fi)| &fi.to_multi(i, nv) * &MultiPolynomial::var(nv, self.n + i))
                .collect(),
        }
    }

    /// `g(x)` lifted to the phase variables.
    pub fn restoring_polys(&self) -> Vec<MultiPolynomial> {
        self.potential_gradient
            .iter()
            .map(|g| g.embed(2 * self.n, 0))
            .collect()
    }

    pub fn diffusion_polys(&self) -> Vec<Vec<MultiPolynomial>> {
        self.diffusion.to_polys(2 * self.n)
    }

    /// Evaluates `b(x, y)` at a phase point.
    pub fn damping_at(&self, z: &PhasePoint) -> Vec<f64> {
        let flat = z.to_flat();
        match &self.damping {
            Damping::General(b) => b.iter().map(|p| p.eval(&flat)).collect(),
            Damping::Lienard(f) => f
                .iter()
                .enumerate()
                .map(|(i, fi)| fi.eval(z.x[i]) * z.y[i])
                .collect(),
        }
    }

    pub fn restoring_at(&self, x: &[f64]) -> Vec<f64> {
        self.potential_gradient.iter().map(|g| g.eval(x)).collect()
    }
}

/// Where a [`PhaseSystem`] came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// `dx = y dt`, `dy = -(b + g) dt + sigma dW`.
    #[serde(rename = "direct")]
    DirectReduction,
    /// Coordinates `(x, y + F(x))` of a Lienard oscillator.
    #[serde(rename = "transformed")]
    TransformedReduction,
}

/// Diffusion of a first-order system, a `2n x m` matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum DiffusionField {
    Constant(Vec<Vec<f64>>),
    Polynomial(Vec<Vec<MultiPolynomial>>),
}

impl DiffusionField {
    pub fn as_polys(&self, nvars: usize) -> Vec<Vec<MultiPolynomial>> {
        match self {
            DiffusionField::Constant(m) => m
                .iter()
                .map(|row| row.iter().map(|&c| MultiPolynomial::constant(nvars, c)).collect())
                .collect(),
            DiffusionField::Polynomial(m) => m.clone(),
        }
    }
}

#[derive(Clone, Debug)]
enum CompiledDiffusion {
    Constant(Vec<f64>),
    Polynomial(Vec<CompiledPoly>),
}

/// First-order SDE `dz = drift(z) dt + diffusion(z) dW` on `R^{2n}`.
#[derive(Clone, Debug)]
pub struct PhaseSystem {
    n: usize,
    m: usize,
    drift: Vec<MultiPolynomial>,
    diffusion: DiffusionField,
    provenance: Provenance,
    compiled_drift: Vec<CompiledPoly>,
    compiled_diffusion: CompiledDiffusion,
}

impl PhaseSystem {
    pub fn new(
        n: usize,
        m: usize,
        drift: Vec<MultiPolynomial>,
        diffusion: DiffusionField,
        provenance: Provenance,
    ) -> Result<Self, ModelError> {
        let dim = 2 * n;
        if n == 0 || m == 0 {
            return Err(ModelError::Dimension("system needs n >= 1 and m >= 1".into()));
        }
        if drift.len() != dim || drift.iter().any(|p| p.nvars() != dim) {
            return Err(ModelError::Dimension(format!(
                "drift must have {dim} components over {dim} variables"
            )));
        }
        let compiled_diffusion = match &diffusion {
            DiffusionField::Constant(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != m) {
                    return Err(ModelError::Dimension(format!("diffusion must be {dim} x {m}")));
                }
                CompiledDiffusion::Constant(rows.iter().flatten().copied().collect())
            }
            DiffusionField::Polynomial(rows) => {
                if rows.len() != dim
                    || rows.iter().any(|r| r.len() != m)
                    || rows.iter().flatten().any(|p| p.nvars() != dim)
                {
                    return Err(ModelError::Dimension(format!("diffusion must be {dim} x {m}")));
                }
                CompiledDiffusion::Polynomial(rows.iter().flatten().map(CompiledPoly::new).collect())
            }
        };
        let compiled_drift = drift.iter().map(CompiledPoly::new).collect();
        Ok(PhaseSystem {
            n,
            m,
            drift,
            diffusion,
            provenance,
            compiled_drift,
            compiled_diffusion,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn noise_dim(&self) -> usize {
        self.m
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn drift_polys(&self) -> &[MultiPolynomial] {
        &self.drift
    }

    pub fn diffusion(&self) -> &DiffusionField {
        &self.diffusion
    }

    pub fn diffusion_polys(&self) -> Vec<Vec<MultiPolynomial>> {
        self.diffusion.as_polys(self.dim())
    }

    pub fn has_constant_diffusion(&self) -> bool {
        matches!(self.diffusion, DiffusionField::Constant(_))
    }

    /// Writes `drift(z)` into `out`.
    #[inline]
    pub fn drift_into(&self, z: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.compiled_drift) {
            *o = p.eval(z);
        }
    }

    /// Writes the row-major `2n x m` diffusion matrix at `z` into `out`.
    #[inline]
    pub fn diffusion_into(&self, z: &[f64], out: &mut [f64]) {
        match &self.compiled_diffusion {
            CompiledDiffusion::Constant(c) => out.copy_from_slice(c),
            CompiledDiffusion::Polynomial(ps) => {
                for (o, p) in out.iter_mut().zip(ps) {
                    *o = p.eval(z);
                }
            }
        }
    }

    pub fn drift_at(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.drift_into(z, &mut out);
        out
    }

    pub fn diffusion_at(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let mut flat = vec![0.0; self.dim() * self.m];
        self.diffusion_into(z, &mut flat);
        flat.chunks(self.m).map(<[f64]>::to_vec).collect()
    }
}

/// `dx = y dt`, `dy = -(b(x, y) + g(x)) dt + sigma(x, y) dW`.
pub fn reduce_to_phase_system(model: &OscillatorModel) -> PhaseSystem {
    let n = model.n();
    let nv = 2 * n;
    let b = model.damping_polys();
    let g = model.restoring_polys();
    let mut drift: Vec<MultiPolynomial> = (0..n).map(|i| MultiPolynomial::var(nv, n + i)).collect();
    drift.extend(b.iter().zip(&g).map(|(bi, gi)| -&(bi + gi)));

    let m = model.m();
    let diffusion = match model.diffusion() {
        Diffusion::Constant(rows) => {
            let mut full = vec![vec![0.0; m]; n];
            full.extend(rows.iter().cloned());
            DiffusionField::Constant(full)
        }
        Diffusion::Polynomial(rows) => {
            let mut full = vec![vec![MultiPolynomial::zero(nv); m]; n];
            full.extend(rows.iter().cloned());
            DiffusionField::Polynomial(full)
        }
    };
    PhaseSystem::new(n, m, drift, diffusion, Provenance::DirectReduction)
        .expect("reduction of a validated model is well-formed")
}
