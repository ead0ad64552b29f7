//! Euler-Maruyama integration of phase systems.
//!
//! One step is `z' = z + drift(z) dt + diffusion(z) dW`. For a directly
//! reduced oscillator this is exactly
//!
//! ```text
//! x(t + dt) = x(t) + v(t) dt
//! v(t + dt) = v(t) + a dt + sigma dW
//! ```
//!
//! with `a = -b(x, v) - g(x)`. Internal stepping always happens at `dt`;
//! `record_stride` only thins what is stored, so escape detection sees every
//! step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::IntegrationError;
use crate::phase::{PhasePoint, PhaseSystem};
use crate::rng::IncrementStream;
use crate::transform::TransformedSystem;

pub const DEFAULT_R_MAX: f64 = 1e6;

/// A phase system together with the coordinate change between its internal
/// state and the physical `(x, x')` state.
pub trait Dynamics: Sync {
    fn system(&self) -> &PhaseSystem;

    /// Physical state to integration coordinates, in place.
    fn to_internal(&self, _z: &mut [f64]) {}

    /// Integration coordinates to physical state, in place.
    fn to_physical(&self, _z: &mut [f64]) {}
}

impl Dynamics for PhaseSystem {
    fn system(&self) -> &PhaseSystem {
        self
    }
}

impl Dynamics for TransformedSystem {
    fn system(&self) -> &PhaseSystem {
        TransformedSystem::system(self)
    }

    fn to_internal(&self, z: &mut [f64]) {
        self.forward_flat(z);
    }

    fn to_physical(&self, z: &mut [f64]) {
        self.inverse_flat(z);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub dt: f64,
    pub t_end: f64,
    pub initial: PhasePoint,
    pub seed: u64,
    pub r_max: f64,
    pub record_stride: usize,
}

impl IntegrationConfig {
    pub fn new(dt: f64, t_end: f64, initial: PhasePoint) -> Self {
        IntegrationConfig {
            dt,
            t_end,
            initial,
            seed: 0,
            r_max: DEFAULT_R_MAX,
            record_stride: 1,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_r_max(mut self, r_max: f64) -> Self {
        self.r_max = r_max;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    /// Number of internal steps, `floor(T / dt)` up to rounding of the ratio.
    pub fn n_steps(&self) -> usize {
        let ratio = self.t_end / self.dt;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            ratio.floor() as usize
        }
    }

    pub fn n_records(&self) -> usize {
        self.n_steps() / self.record_stride + 1
    }

    pub fn validate(&self, n: usize) -> Result<(), IntegrationError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(IntegrationError::BadStep(self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) || self.n_steps() < 1 {
            return Err(IntegrationError::BadHorizon {
                t_end: self.t_end,
                dt: self.dt,
            });
        }
        if self.record_stride == 0 {
            return Err(IntegrationError::BadStride);
        }
        if self.initial.n() != n || self.initial.y.len() != n {
            return Err(IntegrationError::InitialDimension {
                expected: n,
                found: self.initial.n(),
            });
        }
        if !self.initial.is_finite() {
            return Err(IntegrationError::NonFiniteInitial);
        }
        let initial_norm = self.initial.norm();
        if !(self.r_max > initial_norm) {
            return Err(IntegrationError::BadEscapeRadius {
                r_max: self.r_max,
                initial_norm,
            });
        }
        Ok(())
    }
}

/// One recorded sample path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub escaped: bool,
    pub escape_time: Option<f64>,
    pub seed_used: u64,
    pub path_index: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&PhasePoint> {
        self.states.last()
    }
}

/// `z + drift(z) dt + diffusion(z) dW`.
pub fn em_step(system: &PhaseSystem, z: &PhasePoint, dt: f64, dw: &[f64]) -> PhasePoint {
    let mut stepper = Stepper::new(system);
    let mut flat = z.to_flat();
    stepper.step(&mut flat, dt, dw);
    PhasePoint::from_flat(&flat)
}

/// Reusable scratch space for repeated steps of one system.
pub struct Stepper<'a> {
    system: &'a PhaseSystem,
    drift: Vec<f64>,
    diffusion: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(system: &'a PhaseSystem) -> Self {
        Stepper {
            system,
            drift: vec![0.0; system.dim()],
            diffusion: vec![0.0; system.dim() * system.noise_dim()],
        }
    }

    #[inline]
    pub fn step(&mut self, z: &mut [f64], dt: f64, dw: &[f64]) {
        let m = self.system.noise_dim();
        self.system.drift_into(z, &mut self.drift);
        self.system.diffusion_into(z, &mut self.diffusion);
        for (i, zi) in z.iter_mut().enumerate() {
            let row = &self.diffusion[i * m..(i + 1) * m];
            let noise = row.iter().zip(dw).fold(0.0, |acc, (s, w)| acc + s * w);
            *zi = *zi + self.drift[i] * dt + noise;
        }
    }
}

fn has_escaped(z: &[f64], r_max: f64) -> bool {
    let mut sq = 0.0;
    for v in z {
        if !v.is_finite() {
            return true;
        }
        sq += v * v;
    }
    sq.sqrt() >= r_max
}

/// Integrates one path from caller-supplied increments and reports every
/// recorded physical state to `record(step, state, escaped)`. Returns the escape step,
/// if any.
fn integrate<D, I, R>(dynamics: &D, config: &IntegrationConfig, n_steps: usize, dt: f64, stride: usize, mut next_dw: I, mut record: R) -> Option<usize>
where
    D: Dynamics + ?Sized,
    I: FnMut(&mut [f64]),
    R: FnMut(usize, &[f64], bool),
{
    let system = dynamics.system();
    let mut stepper = Stepper::new(system);
    let mut z = config.initial.to_flat();
    let mut physical = z.clone();
    dynamics.to_internal(&mut z);
    record(0, &physical, false);
    let mut dw = vec![0.0; system.noise_dim()];
    for k in 1..=n_steps {
        next_dw(&mut dw);
        stepper.step(&mut z, dt, &dw);
        let escaped = has_escaped(&z, config.r_max);
        if escaped || k % stride == 0 {
            physical.copy_from_slice(&z);
            dynamics.to_physical(&mut physical);
            record(k, &physical, escaped);
        }
        if escaped {
            return Some(k);
        }
    }
    None
}

/// Simulates path 0 of `config.seed`.
pub fn simulate_path<D: Dynamics + ?Sized>(dynamics: &D, config: &IntegrationConfig) -> Result<Trajectory, IntegrationError> {
    simulate_path_indexed(dynamics, config, 0)
}

/// Simulates the path with the given stream index.
pub fn simulate_path_indexed<D: Dynamics + ?Sized>(
    dynamics: &D,
    config: &IntegrationConfig,
    path_index: u64,
) -> Result<Trajectory, IntegrationError> {
    config.validate(dynamics.system().n())?;
    let mut stream = IncrementStream::new(config.seed, path_index, config.dt);
    let n_steps = config.n_steps();
    let mut times = Vec::with_capacity(config.n_records());
    let mut states = Vec::with_capacity(config.n_records());
    let escape = integrate(
        dynamics,
        config,
        n_steps,
        config.dt,
        config.record_stride,
        |dw| stream.fill(dw),
        |k, z, _| {
            times.push(k as f64 * config.dt);
            states.push(PhasePoint::from_flat(z));
        },
    );
    Ok(Trajectory {
        times,
        states,
        escaped: escape.is_some(),
        escape_time: escape.map(|k| k as f64 * config.dt),
        seed_used: config.seed,
        path_index,
    })
}

/// Simulates with explicit increments (`increments[k]` drives step `k + 1`)
/// and returns the recorded trajectory. Used to couple runs to a common
/// Brownian path.
pub fn simulate_with_increments<D: Dynamics + ?Sized>(
    dynamics: &D,
    config: &IntegrationConfig,
    increments: &[Vec<f64>],
) -> Result<Trajectory, IntegrationError> {
    config.validate(dynamics.system().n())?;
    let n_steps = config.n_steps().min(increments.len());
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut it = increments.iter();
    let escape = integrate(
        dynamics,
        config,
        n_steps,
        config.dt,
        config.record_stride,
        |dw| dw.copy_from_slice(it.next().expect("enough increments")),
        |k, z, _| {
            times.push(k as f64 * config.dt);
            states.push(PhasePoint::from_flat(z));
        },
    );
    Ok(Trajectory {
        times,
        states,
        escaped: escape.is_some(),
        escape_time: escape.map(|k| k as f64 * config.dt),
        seed_used: config.seed,
        path_index: 0,
    })
}

/// Per-time statistics of `|z|` over the paths still alive at that time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub counts: Vec<u64>,
    pub mean_norm: Vec<f64>,
    /// Sample variance; zero where fewer than two paths contribute.
    pub var_norm: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub n_paths: u64,
    pub escape_count: u64,
    /// Escape times in path-index order.
    pub escape_times: Vec<f64>,
    /// Path indices matching `escape_times`.
    pub escaped_paths: Vec<u64>,
    /// Terminal states of the paths that did not escape, in path-index order.
    pub terminal_states: Vec<PhasePoint>,
    pub summary: EnsembleSummary,
}

/// Fixed so that the floating-point reduction order never depends on the
/// thread count.
const CHUNK_PATHS: u64 = 16;

#[derive(Clone)]
struct Accumulator {
    count: Vec<u64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Accumulator {
            count: vec![0; len],
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, idx: usize, v: f64) {
        self.count[idx] += 1;
        let n = self.count[idx] as f64;
        let delta = v - self.mean[idx];
        self.mean[idx] += delta / n;
        self.m2[idx] += delta * (v - self.mean[idx]);
    }

    fn merge(&mut self, other: &Accumulator) {
        for i in 0..self.count.len() {
            let (na, nb) = (self.count[i], other.count[i]);
            if nb == 0 {
                continue;
            }
            if na == 0 {
                self.count[i] = nb;
                self.mean[i] = other.mean[i];
                self.m2[i] = other.m2[i];
                continue;
            }
            let n = (na + nb) as f64;
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb as f64 / n;
            self.m2[i] += other.m2[i] + delta * delta * na as f64 * nb as f64 / n;
            self.count[i] = na + nb;
        }
    }
}

struct ChunkResult {
    acc: Accumulator,
    escapes: Vec<(u64, f64)>,
    terminals: Vec<PhasePoint>,
}

fn run_chunk<D: Dynamics + ?Sized>(dynamics: &D, config: &IntegrationConfig, paths: std::ops::Range<u64>) -> ChunkResult {
    let n_steps = config.n_steps();
    let stride = config.record_stride;
    let mut acc = Accumulator::new(config.n_records());
    let mut escapes = Vec::new();
    let mut terminals = Vec::new();
    for p in paths {
        let mut stream = IncrementStream::new(config.seed, p, config.dt);
        let mut last = Vec::new();
        let escape = integrate(
            dynamics,
            config,
            n_steps,
            config.dt,
            stride,
            |dw| stream.fill(dw),
            |k, z, escaped| {
                if !escaped {
                    acc.push(k / stride, z.iter().map(|v| v * v).sum::<f64>().sqrt());
                }
                last.clear();
                last.extend_from_slice(z);
            },
        );
        match escape {
            Some(k) => escapes.push((p, k as f64 * config.dt)),
            None => terminals.push(PhasePoint::from_flat(&last)),
        }
    }
    ChunkResult {
        acc,
        escapes,
        terminals,
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, IntegrationError> {
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| IntegrationError::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// `n_paths` independent paths (stream indices `0..n_paths`), optionally on a
/// dedicated pool of `threads` workers. The result is bit-identical for any
/// thread count.
pub fn simulate_ensemble<D: Dynamics + ?Sized>(
    dynamics: &D,
    config: &IntegrationConfig,
    n_paths: u64,
    threads: Option<usize>,
) -> Result<EnsembleResult, IntegrationError> {
    if n_paths == 0 {
        return Err(IntegrationError::NoPaths);
    }
    config.validate(dynamics.system().n())?;
    let n_chunks = n_paths.div_ceil(CHUNK_PATHS);
    let chunks: Vec<ChunkResult> = with_threads(threads, || {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let start = c * CHUNK_PATHS;
                run_chunk(dynamics, config, start..(start + CHUNK_PATHS).min(n_paths))
            })
            .collect()
    })?;

    let mut acc = Accumulator::new(config.n_records());
    let mut escape_times = Vec::new();
    let mut escaped_paths = Vec::new();
    let mut terminal_states = Vec::new();
    for chunk in chunks {
        acc.merge(&chunk.acc);
        for (p, t) in chunk.escapes {
            escaped_paths.push(p);
            escape_times.push(t);
        }
        terminal_states.extend(chunk.terminals);
    }
    let step = config.dt * config.record_stride as f64;
    let times = (0..config.n_records()).map(|i| i as f64 * step).collect();
    let var_norm = acc
        .count
        .iter()
        .zip(&acc.m2)
        .map(|(&c, &m2)| if c > 1 { m2 / (c - 1) as f64 } else { 0.0 })
        .collect();
    Ok(EnsembleResult {
        n_paths,
        escape_count: escape_times.len() as u64,
        escape_times,
        escaped_paths,
        terminal_states,
        summary: EnsembleSummary {
            times,
            counts: acc.count,
            mean_norm: acc.mean,
            var_norm,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongOrderEstimate {
    pub order_estimate: f64,
    /// `E|z_l(T) - z_{l-1}(T)|` for `l = 1..levels`, finest pair first.
    pub errors_per_level: Vec<f64>,
    /// Coarser step size of each pair in `errors_per_level`.
    pub dts: Vec<f64>,
    pub paths_used: u64,
    pub paths_excluded: u64,
    /// More than 10% of paths escaped at some level.
    pub unreliable: bool,
}

pub const MIN_LEVELS: usize = 3;

/// Strong-order estimate from dyadic step sizes `dt * 2^l`, `l < levels`, all
/// driven by the same Brownian path per sample: coarse increments are sums of
/// fine ones. The order is the least-squares slope of `log2` error against
/// `log2` step size over consecutive-level differences.
pub fn estimate_strong_order<D: Dynamics + ?Sized>(
    dynamics: &D,
    config: &IntegrationConfig,
    n_paths: u64,
    levels: usize,
    threads: Option<usize>,
) -> Result<StrongOrderEstimate, IntegrationError> {
    if levels < MIN_LEVELS {
        return Err(IntegrationError::TooFewLevels {
            min: MIN_LEVELS,
            found: levels,
        });
    }
    if n_paths == 0 {
        return Err(IntegrationError::NoPaths);
    }
    config.validate(dynamics.system().n())?;
    let n_fine = config.n_steps();
    let ratio = 1usize << (levels - 1);
    if n_fine % ratio != 0 {
        return Err(IntegrationError::IndivisibleLevels { steps: n_fine, ratio });
    }
    let m = dynamics.system().noise_dim();

    let per_path: Vec<Option<Vec<Vec<f64>>>> = with_threads(threads, || {
        (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let mut stream = IncrementStream::new(config.seed, p, config.dt);
                let mut fine = vec![0.0; n_fine * m];
                for row in fine.chunks_mut(m) {
                    stream.fill(row);
                }
                let mut terminals = Vec::with_capacity(levels);
                for l in 0..levels {
                    let block = 1usize << l;
                    let dt_l = config.dt * block as f64;
                    let mut rows = fine.chunks(m * block);
                    let mut last = Vec::new();
                    let escape = integrate(
                        dynamics,
                        config,
                        n_fine / block,
                        dt_l,
                        n_fine / block,
                        |dw| {
                            let chunk = rows.next().expect("enough increments");
                            dw.iter_mut().for_each(|v| *v = 0.0);
                            for step in chunk.chunks(m) {
                                for (acc, w) in dw.iter_mut().zip(step) {
                                    *acc += w;
                                }
                            }
                        },
                        |_, z, _| {
                            last.clear();
                            last.extend_from_slice(z);
                        },
                    );
                    if escape.is_some() {
                        return None;
                    }
                    terminals.push(last);
                }
                Some(terminals)
            })
            .collect()
    })?;

    let mut sums = vec![0.0; levels - 1];
    let mut used = 0u64;
    for terminals in per_path.iter().flatten() {
        used += 1;
        for l in 1..levels {
            let d: f64 = terminals[l]
                .iter()
                .zip(&terminals[l - 1])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            sums[l - 1] += d;
        }
    }
    let excluded = n_paths - used;
    let errors: Vec<f64> = sums.iter().map(|s| s / used.max(1) as f64).collect();
    let dts: Vec<f64> = (1..levels).map(|l| config.dt * (1u64 << l) as f64).collect();
    let order = log_log_slope(&dts, &errors);
    Ok(StrongOrderEstimate {
        order_estimate: order,
        errors_per_level: errors,
        dts,
        paths_used: used,
        paths_excluded: excluded,
        unreliable: excluded as f64 > 0.1 * n_paths as f64,
    })
}

/// Least-squares slope of `log2 y` against `log2 x`.
fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.log2(), b.log2())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
