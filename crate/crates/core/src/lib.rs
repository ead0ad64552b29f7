//! Second-order stochastic oscillators as phase-space SDEs.
//!
//! The crate covers four pieces that share one polynomial representation:
//!
//! * [`phase`] and [`models`]: oscillator models `x'' + b(x, x') + g(x) = sigma W'`
//!   and their reduction to first-order systems on `R^{2n}`;
//! * [`transform`]: the Lienard change of variables `(x, y) -> (x, y + F(x))`;
//! * [`lyapunov`]: exact generator calculus and grid/asymptotic checks of the
//!   Lyapunov non-explosion conditions, summarized in a certificate;
//! * [`integrator`]: seeded Euler-Maruyama paths, ensembles, escape detection
//!   and strong-order estimation.

pub mod error;
pub mod integrator;
pub mod lyapunov;
pub mod models;
pub mod phase;
pub mod poly;
pub mod rng;
pub mod transform;

pub use error::{IntegrationError, ModelError, PolyError, VerifyError};
pub use phase::{
    reduce_to_phase_system, Damping, Diffusion, DiffusionField, OscillatorModel, PhasePoint, PhaseSystem,
    Provenance,
};
pub use poly::{MultiPolynomial, Polynomial, Term};
