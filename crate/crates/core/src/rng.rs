//! Reproducible Brownian increments.
//!
//! Every path owns an independent ChaCha8 stream selected by
//! `(seed, path_index)`; within a path, step `k` consumes the next `m`
//! standard normals. Outputs therefore depend only on those indices and never
//! on how paths are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Sequential source of `N(0, dt)` increments for one path.
#[derive(Clone, Debug)]
pub struct IncrementStream {
    rng: ChaCha8Rng,
    sqrt_dt: f64,
}

impl IncrementStream {
    pub fn new(seed: u64, path_index: u64, dt: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        IncrementStream {
            rng,
            sqrt_dt: dt.sqrt(),
        }
    }

    /// Fills `out` with the increments of the next step.
    #[inline]
    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *v = z * self.sqrt_dt;
        }
    }
}

/// `n_steps x m` Wiener increments (row `k` is step `k`), each `N(0, dt)`.
pub fn wiener_increments(seed: u64, path_index: u64, m: usize, n_steps: usize, dt: f64) -> Vec<Vec<f64>> {
    let mut stream = IncrementStream::new(seed, path_index, dt);
    (0..n_steps)
        .map(|_| {
            let mut row = vec![0.0; m];
            stream.fill(&mut row);
            row
        })
        .collect()
}
