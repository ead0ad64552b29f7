//! Lienard change of variables.
//!
//! For `x_i'' + f_i(x_i) x_i' + dG/dx_i = sum_j sigma_ij W_j'` the map
//! `(x, y) -> (x, y + F(x))` with `F_i(s) = int_0^s f_i` turns the phase
//! system into
//!
//! ```text
//! dx_i = (y_i - F_i(x_i)) dt
//! dy_i = -dG/dx_i dt + sum_j sigma_ij(x, y - F(x)) dW_j
//! ```
//!
//! The velocity component of the map is linear in `y` and the position
//! equation carries no noise, so Ito's formula adds no second-order term.

use crate::error::ModelError;
use crate::phase::{Diffusion, DiffusionField, OscillatorModel, PhasePoint, PhaseSystem, Provenance};
use crate::poly::{MultiPolynomial, Polynomial};

#[derive(Clone, Debug)]
pub struct TransformedSystem {
    base: OscillatorModel,
    antiderivatives: Vec<Polynomial>,
    h: MultiPolynomial,
    system: PhaseSystem,
}

impl TransformedSystem {
    pub fn base(&self) -> &OscillatorModel {
        &self.base
    }

    /// `F_i`, each vanishing at the origin.
    pub fn antiderivatives(&self) -> &[Polynomial] {
        &self.antiderivatives
    }

    /// `H(x) = sum_i int_0^{x_i} F_i(s) ds`, a polynomial in the `n` positions.
    pub fn h(&self) -> &MultiPolynomial {
        &self.h
    }

    pub fn system(&self) -> &PhaseSystem {
        &self.system
    }

    pub fn forward(&self, z: &PhasePoint) -> PhasePoint {
        phi_forward(z, &self.antiderivatives)
    }

    pub fn inverse(&self, z: &PhasePoint) -> PhasePoint {
        phi_inverse(z, &self.antiderivatives)
    }

    /// In-place `phi_forward` on a flat `[x.., y..]` vector.
    pub fn forward_flat(&self, z: &mut [f64]) {
        let n = self.antiderivatives.len();
        for (i, f) in self.antiderivatives.iter().enumerate() {
            z[n + i] += f.eval(z[i]);
        }
    }

    /// In-place `phi_inverse` on a flat `[x.., y..]` vector.
    pub fn inverse_flat(&self, z: &mut [f64]) {
        let n = self.antiderivatives.len();
        for (i, f) in self.antiderivatives.iter().enumerate() {
            z[n + i] -= f.eval(z[i]);
        }
    }
}

/// `(x, y) -> (x, y + F(x))`, componentwise.
pub fn phi_forward(z: &PhasePoint, antiderivatives: &[Polynomial]) -> PhasePoint {
    assert_eq!(z.n(), antiderivatives.len(), "dimension mismatch");
    PhasePoint {
        x: z.x.clone(),
        y: z.y
            .iter()
            .zip(&z.x)
            .zip(antiderivatives)
            .map(|((y, x), f)| y + f.eval(*x))
            .collect(),
    }
}

/// `(x, y) -> (x, y - F(x))`, componentwise.
pub fn phi_inverse(z: &PhasePoint, antiderivatives: &[Polynomial]) -> PhasePoint {
    assert_eq!(z.n(), antiderivatives.len(), "dimension mismatch");
    PhasePoint {
        x: z.x.clone(),
        y: z.y
            .iter()
            .zip(&z.x)
            .zip(antiderivatives)
            .map(|((y, x), f)| y - f.eval(*x))
            .collect(),
    }
}

/// Builds the transformed first-order system of a Lienard-form model.
pub fn build_transformed_system(model: &OscillatorModel) -> Result<TransformedSystem, ModelError> {
    let f = model
        .lienard_coefficients()
        .ok_or(ModelError::Unsupported("damping of Lienard form f_i(x_i) y_i"))?;
    let n = model.n();
    let nv = 2 * n;
    let antiderivatives: Vec<Polynomial> = f.iter().map(Polynomial::antiderivative).collect();

    let h = antiderivatives
        .iter()
        .enumerate()
        .fold(MultiPolynomial::zero(n), |acc, (i, big_f)| {
            &acc + &big_f.antiderivative().to_multi(i, n)
        });

    // y_i -> y_i - F_i(x_i)
    let pullback: Vec<MultiPolynomial> = antiderivatives
        .iter()
        .enumerate()
        .map(|(i, big_f)| &MultiPolynomial::var(nv, n + i) - &big_f.to_multi(i, nv))
        .collect();

    let mut drift = pullback.clone();
    drift.extend(model.restoring_polys().iter().map(|g| -g));

    let m = model.m();
    let diffusion = match model.diffusion() {
        Diffusion::Constant(rows) => {
            let mut full = vec![vec![0.0; m]; n];
            full.extend(rows.iter().cloned());
            DiffusionField::Constant(full)
        }
        Diffusion::Polynomial(rows) => {
            let mut full = vec![vec![MultiPolynomial::zero(nv); m]; n];
            full.extend(rows.iter().map(|row| {
                row.iter()
                    .map(|entry| {
                        pullback
                            .iter()
                            .enumerate()
                            .fold(entry.clone(), |acc, (i, r)| acc.substitute(n + i, r))
                    })
                    .collect::<Vec<_>>()
            }));
            DiffusionField::Polynomial(full)
        }
    };

    let system = PhaseSystem::new(n, m, drift, diffusion, Provenance::TransformedReduction)?;
    Ok(TransformedSystem {
        base: model.clone(),
        antiderivatives,
        h,
        system,
    })
}
