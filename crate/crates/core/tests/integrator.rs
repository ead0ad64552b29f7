use stochosc_core::integrator::*;
use stochosc_core::models::{build_damped_linear, build_duffing};
use stochosc_core::phase::{Damping, Diffusion};
use stochosc_core::rng::wiener_increments;
use stochosc_core::transform::build_transformed_system;
use stochosc_core::{reduce_to_phase_system, MultiPolynomial, OscillatorModel, PhasePoint, Polynomial};

fn p(x: f64, y: f64) -> PhasePoint {
    PhasePoint::new(vec![x], vec![y]).unwrap()
}

fn duffing(sigma: f64) -> OscillatorModel {
    build_duffing(0.5, 1.0, 3.0, sigma).unwrap()
}

/// `x'' + g(x) = sigma(x, y) W'` with the given restoring force and diffusion.
fn custom(g: Vec<f64>, diffusion: Diffusion) -> OscillatorModel {
    let g = Polynomial::new(g);
    OscillatorModel::new(
        "custom",
        Damping::Lienard(vec![Polynomial::zero()]),
        vec![g.to_multi(0, 1)],
        None,
        diffusion,
    )
    .unwrap()
}

#[test]
fn em_step_duffing_hand_value() {
    let sys = reduce_to_phase_system(&duffing(2.0));
    let z = em_step(&sys, &p(1.0, 0.0), 0.01, &[0.0]);
    assert_eq!(z.x[0], 1.0);
    assert!((z.y[0] + 0.04).abs() < 1e-15);
}

#[test]
fn em_step_matches_two_line_update() {
    let sys = reduce_to_phase_system(&duffing(2.0));
    let (x, v, dt, dw) = (0.3, -1.2, 1e-3, 0.05);
    let z = em_step(&sys, &p(x, v), dt, &[dw]);
    let a = -2.0 * 0.5 * v - x - 3.0 * x * x * x;
    assert_eq!(z.x[0], x + v * dt);
    assert!((z.y[0] - (v + a * dt + 2.0 * dw)).abs() < 1e-15);
}

#[test]
fn em_step_zero_drift_zero_noise_is_identity() {
    let sys = reduce_to_phase_system(&custom(vec![], Diffusion::Constant(vec![vec![0.0]])));
    let z = em_step(&sys, &p(0.0, 0.0), 0.1, &[0.7]);
    assert_eq!(z, p(0.0, 0.0));
}

#[test]
fn em_step_additive_noise_gain() {
    let sys = reduce_to_phase_system(&custom(vec![], Diffusion::Constant(vec![vec![2.0]])));
    let z = em_step(&sys, &p(0.0, 0.0), 0.01, &[0.1]);
    assert_eq!(z.y[0], 0.2);
}

#[test]
fn horizon_of_one_step_records_two_states() {
    let sys = reduce_to_phase_system(&duffing(2.0));
    let cfg = IntegrationConfig::new(0.01, 0.01, p(1.0, 0.0));
    let tr = simulate_path(&sys, &cfg).unwrap();
    assert_eq!(tr.len(), 2);
    assert_eq!(tr.times, vec![0.0, 0.01]);
}

#[test]
fn deterministic_duffing_decays() {
    let sys = reduce_to_phase_system(&duffing(0.0));
    let cfg = IntegrationConfig::new(1e-3, 10.0, p(1.0, 0.0)).with_stride(100);
    let tr = simulate_path(&sys, &cfg).unwrap();
    assert!(!tr.escaped);
    assert_eq!(tr.len(), 101);
    assert!(tr.final_state().unwrap().norm() < 1.0);
    // agrees with a much finer run
    let fine = IntegrationConfig::new(1e-5, 10.0, p(1.0, 0.0)).with_stride(100_000);
    let reference = simulate_path(&sys, &fine).unwrap();
    let a = tr.final_state().unwrap();
    let b = reference.final_state().unwrap();
    assert!((a.x[0] - b.x[0]).abs() < 1e-2 && (a.y[0] - b.y[0]).abs() < 1e-2);
}

#[test]
fn quintic_blow_up_escapes() {
    // x'' = x^5
    let sys = reduce_to_phase_system(&custom(vec![0.0, 0.0, 0.0, 0.0, 0.0, -1.0], Diffusion::Constant(vec![vec![0.0]])));
    let cfg = IntegrationConfig::new(1e-3, 10.0, p(2.0, 0.0));
    let tr = simulate_path(&sys, &cfg).unwrap();
    assert!(tr.escaped);
    let te = tr.escape_time.unwrap();
    assert!(te < 10.0);
    assert_eq!(*tr.times.last().unwrap(), te);
    assert!(tr.final_state().unwrap().norm() >= 1e6 || !tr.final_state().unwrap().is_finite());
}

#[test]
fn stride_only_thins_output() {
    let sys = reduce_to_phase_system(&duffing(2.0));
    let cfg = IntegrationConfig::new(1e-3, 1.0, p(1.0, 0.0)).with_seed(5);
    let full = simulate_path(&sys, &cfg).unwrap();
    let thin = simulate_path(&sys, &cfg.clone().with_stride(10)).unwrap();
    assert_eq!(thin.len(), 101);
    for (i, s) in thin.states.iter().enumerate() {
        assert_eq!(s, &full.states[10 * i]);
    }
}

#[test]
fn config_validation() {
    let sys = reduce_to_phase_system(&duffing(2.0));
    let ok = IntegrationConfig::new(1e-2, 1.0, p(1.0, 0.0));
    assert!(simulate_path(&sys, &IntegrationConfig { dt: 0.0, ..ok.clone() }).is_err());
    assert!(simulate_path(&sys, &IntegrationConfig { t_end: 1e-3, ..ok.clone() }).is_err());
    assert!(simulate_path(&sys, &ok.clone().with_r_max(0.5)).is_err());
    assert!(simulate_path(&sys, &ok.clone().with_stride(0)).is_err());
    assert!(simulate_path(&sys, &IntegrationConfig { initial: PhasePoint::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap(), ..ok.clone() }).is_err());
    assert!(simulate_path(&sys, &IntegrationConfig { initial: p(f64::NAN, 0.0), ..ok }).is_err());
}

#[test]
fn same_seed_same_path() {
    let sys = reduce_to_phase_system(&duffing(2.0));
    let cfg = IntegrationConfig::new(1e-3, 2.0, p(1.0, 0.0)).with_seed(42);
    assert_eq!(simulate_path(&sys, &cfg).unwrap(), simulate_path(&sys, &cfg).unwrap());
    let other = simulate_path(&sys, &cfg.clone().with_seed(43)).unwrap();
    assert_ne!(simulate_path(&sys, &cfg).unwrap().states, other.states);
}

#[test]
fn explicit_increments_reproduce_stream() {
    let sys = reduce_to_phase_system(&duffing(2.0));
    let cfg = IntegrationConfig::new(1e-3, 1.0, p(1.0, 0.0)).with_seed(9);
    let dw = wiener_increments(9, 0, 1, cfg.n_steps(), cfg.dt);
    assert_eq!(simulate_with_increments(&sys, &cfg, &dw).unwrap().states, simulate_path(&sys, &cfg).unwrap().states);
}

#[test]
fn pure_noise_sums_increments_exactly() {
    let sys = reduce_to_phase_system(&custom(vec![], Diffusion::Constant(vec![vec![1.0]])));
    let cfg = IntegrationConfig::new(1e-3, 1.0, p(0.0, 0.0)).with_seed(3);
    let dw = wiener_increments(3, 0, 1, cfg.n_steps(), cfg.dt);
    let tr = simulate_path(&sys, &cfg).unwrap();
    let mut sum = 0.0;
    for (k, row) in dw.iter().enumerate() {
        sum += row[0];
        assert_eq!(tr.states[k + 1].y[0], sum);
    }
}

#[test]
fn single_path_ensemble_matches_path() {
    let sys = reduce_to_phase_system(&duffing(2.0));
    let cfg = IntegrationConfig::new(1e-3, 1.0, p(1.0, 0.0)).with_seed(11).with_stride(10);
    let tr = simulate_path(&sys, &cfg).unwrap();
    let ens = simulate_ensemble(&sys, &cfg, 1, None).unwrap();
    assert_eq!(ens.summary.times, tr.times);
    let norms: Vec<f64> = tr.states.iter().map(PhasePoint::norm).collect();
    assert_eq!(ens.summary.mean_norm, norms);
    assert!(ens.summary.var_norm.iter().all(|v| *v == 0.0));
    assert_eq!(ens.terminal_states, vec![tr.final_state().unwrap().clone()]);
}

#[test]
fn ensemble_is_thread_count_independent() {
    let sys = reduce_to_phase_system(&duffing(2.0));
    let cfg = IntegrationConfig::new(1e-3, 1.0, p(1.0, 0.0)).with_seed(7).with_stride(50);
    let a = simulate_ensemble(&sys, &cfg, 100, Some(1)).unwrap();
    let b = simulate_ensemble(&sys, &cfg, 100, Some(4)).unwrap();
    let c = simulate_ensemble(&sys, &cfg, 100, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(a.escape_count, a.escape_times.len() as u64);
}

#[test]
fn duffing_ensemble_does_not_escape() {
    let sys = reduce_to_phase_system(&duffing(2.0));
    let cfg = IntegrationConfig::new(1e-3, 10.0, p(1.0, 0.0)).with_seed(1).with_r_max(1e4).with_stride(1000);
    let ens = simulate_ensemble(&sys, &cfg, 500, None).unwrap();
    assert_eq!(ens.escape_count, 0);
    assert_eq!(ens.terminal_states.len(), 500);
}

#[test]
fn escape_count_monotone_in_radius() {
    // x'' = x^3 - x with noise: some paths leave, more for a smaller radius
    let sys = reduce_to_phase_system(&custom(vec![0.0, 1.0, 0.0, -1.0], Diffusion::Constant(vec![vec![1.0]])));
    let base = IntegrationConfig::new(1e-3, 5.0, p(0.0, 0.0)).with_seed(2).with_stride(100);
    let mut last = u64::MAX;
    for r in [3.0, 10.0, 100.0, 1e6] {
        let ens = simulate_ensemble(&sys, &base.clone().with_r_max(r), 200, None).unwrap();
        assert!(ens.escape_count <= last, "radius {r}");
        assert_eq!(ens.escape_count as usize + ens.terminal_states.len(), 200);
        last = ens.escape_count;
    }
}

#[test]
fn ornstein_uhlenbeck_mean_decay() {
    let (c, w, sigma, t) = (0.5, 1.0, 0.5, 2.0);
    let sys = reduce_to_phase_system(&build_damped_linear(c, w, sigma).unwrap());
    let cfg = IntegrationConfig::new(1e-3, t, p(1.0, 0.0)).with_seed(17).with_stride(2000);
    let ens = simulate_ensemble(&sys, &cfg, 2000, None).unwrap();
    let xs: Vec<f64> = ens.terminal_states.iter().map(|s| s.x[0]).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let wd = (w * w - c * c / 4.0_f64).sqrt();
    let exact = (-c * t / 2.0).exp() * ((wd * t).cos() + c / (2.0 * wd) * (wd * t).sin());
    assert!((mean - exact).abs() < 3.0 * (var / n).sqrt(), "mean {mean} vs {exact}");
}

#[test]
fn transformed_representation_tracks_direct() {
    let model = stochosc_core::models::build_van_der_pol(0.1, 1.0, 0.25, 0.1).unwrap();
    let direct = reduce_to_phase_system(&model);
    let transformed = build_transformed_system(&model).unwrap();
    let cfg = IntegrationConfig::new(1e-4, 2.0, p(1.0, 0.0)).with_seed(4).with_stride(20000);
    let a = simulate_path(&direct, &cfg).unwrap();
    let b = simulate_path(&transformed, &cfg).unwrap();
    assert_eq!(b.states[0], p(1.0, 0.0));
    let (za, zb) = (a.final_state().unwrap(), b.final_state().unwrap());
    assert!((za.x[0] - zb.x[0]).abs() < 1e-2 && (za.y[0] - zb.y[0]).abs() < 1e-2);
}

#[test]
fn strong_order_additive_noise() {
    let sys = reduce_to_phase_system(&duffing(2.0));
    let cfg = IntegrationConfig::new(1e-3, 1.0, p(1.0, 0.0)).with_seed(21);
    let est = estimate_strong_order(&sys, &cfg, 200, 4, None).unwrap();
    assert_eq!(est.errors_per_level.len(), 3);
    assert!(!est.unreliable);
    assert!((0.7..=1.3).contains(&est.order_estimate), "{est:?}");
}

#[test]
fn strong_order_deterministic_linear() {
    let sys = reduce_to_phase_system(&build_damped_linear(0.5, 1.0, 0.0).unwrap());
    let cfg = IntegrationConfig::new(1.0 / 1024.0, 1.0, p(1.0, 0.0));
    let est = estimate_strong_order(&sys, &cfg, 4, 5, None).unwrap();
    assert!((est.order_estimate - 1.0).abs() < 0.05, "{est:?}");
}

#[test]
fn strong_order_velocity_multiplicative_noise() {
    // noise proportional to the velocity, the component it drives
    let sigma = Diffusion::Polynomial(vec![vec![MultiPolynomial::var(2, 1)]]);
    let sys = reduce_to_phase_system(&custom(vec![0.0, 1.0], sigma));
    let cfg = IntegrationConfig::new(1e-3, 1.0, p(1.0, 1.0)).with_seed(23);
    let est = estimate_strong_order(&sys, &cfg, 400, 4, None).unwrap();
    assert!((0.3..=0.7).contains(&est.order_estimate), "{est:?}");
}

#[test]
fn strong_order_position_multiplicative_noise_is_first_order() {
    // sigma(x) = x multiplies a noise entering only the velocity equation;
    // x is differentiable in time, so EM coincides with Milstein here
    let sigma = Diffusion::Polynomial(vec![vec![MultiPolynomial::var(2, 0)]]);
    let sys = reduce_to_phase_system(&custom(vec![0.0, 1.0], sigma));
    let cfg = IntegrationConfig::new(1e-3, 1.0, p(1.0, 1.0)).with_seed(23);
    let est = estimate_strong_order(&sys, &cfg, 400, 4, None).unwrap();
    assert!((0.7..=1.3).contains(&est.order_estimate), "{est:?}");
}

#[test]
fn strong_order_flags_escapes() {
    let sys = reduce_to_phase_system(&custom(vec![0.0, 0.0, 0.0, 0.0, 0.0, -1.0], Diffusion::Constant(vec![vec![1.0]])));
    let cfg = IntegrationConfig::new(1e-3, 2.0, p(2.0, 0.0));
    let est = estimate_strong_order(&sys, &cfg, 20, 3, None).unwrap();
    assert!(est.unreliable);
    assert_eq!(est.paths_excluded, 20);
    assert!(estimate_strong_order(&sys, &cfg, 20, 2, None).is_err());
}
