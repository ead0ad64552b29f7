use proptest::prelude::*;
use stochosc_core::integrator::{simulate_with_increments, IntegrationConfig};
use stochosc_core::models::{self, build_van_der_pol};
use stochosc_core::rng::wiener_increments;
use stochosc_core::transform::build_transformed_system;
use stochosc_core::{reduce_to_phase_system, MultiPolynomial, PhasePoint, Polynomial, Term};

fn poly() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec(-100.0..100.0f64, 0..9).prop_map(Polynomial::new)
}

fn multi(nvars: usize) -> impl Strategy<Value = MultiPolynomial> {
    prop::collection::vec((prop::collection::vec(0u32..4, nvars), -5.0..5.0f64), 0..8).prop_map(move |terms| {
        let terms: Vec<Term> = terms.into_iter().map(|(exponents, coeff)| Term { exponents, coeff }).collect();
        MultiPolynomial::from_terms(nvars, &terms).unwrap()
    })
}

proptest! {
    #[test]
    fn antiderivative_then_derivative_is_identity(p in poly()) {
        let back = p.antiderivative().derivative();
        prop_assert_eq!(back.coeffs().len(), p.coeffs().len());
        for (a, b) in back.coeffs().iter().zip(p.coeffs()) {
            prop_assert!((a - b).abs() <= 1e-13 * b.abs());
        }
    }

    #[test]
    fn gradient_matches_central_differences(g in multi(3), z in prop::collection::vec(-2.0..2.0f64, 3)) {
        let h = 1e-5;
        for (i, dg) in g.gradient().iter().enumerate() {
            let mut plus = z.clone();
            let mut minus = z.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (g.eval(&plus) - g.eval(&minus)) / (2.0 * h);
            let exact = dg.eval(&z);
            let scale: f64 = g.terms().map(|(_, c)| c.abs()).sum::<f64>() * 40.0;
            prop_assert!((fd - exact).abs() <= 1e-6 * (exact.abs() + scale * 1e-3 + 1e-6), "{} vs {}", fd, exact);
        }
    }

    #[test]
    fn direct_reduction_structure(x in prop::collection::vec(-5.0..5.0f64, 2), y in prop::collection::vec(-5.0..5.0f64, 2)) {
        for entry in models::catalog() {
            let model = models::build(entry.name, &Default::default()).unwrap();
            let sys = reduce_to_phase_system(&model);
            let n = model.n();
            let z: Vec<f64> = x[..n].iter().chain(&y[..n]).copied().collect();
            let drift = sys.drift_at(&z);
            prop_assert_eq!(&drift[..n], &y[..n]);
            let sigma = sys.diffusion_at(&z);
            prop_assert!(sigma[..n].iter().flatten().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn phi_round_trip(x in -4.0..4.0f64, y in -4.0..4.0f64) {
        let t = build_transformed_system(&build_van_der_pol(0.1, 1.0, 0.25, 0.1).unwrap()).unwrap();
        let z = PhasePoint::new(vec![x], vec![y]).unwrap();
        let back = t.inverse(&t.forward(&z));
        prop_assert_eq!(back.x[0], x);
        prop_assert!((back.y[0] - y).abs() <= 1e-14 * (1.0 + y.abs() + x.abs().powi(3)));
    }
}

/// Direct and transformed Van der Pol driven by the same increments: the
/// largest position gap on [0, 1] shrinks in proportion to dt.
#[test]
fn direct_and_transformed_paths_converge() {
    let model = build_van_der_pol(0.1, 1.0, 0.25, 0.1).unwrap();
    let direct = reduce_to_phase_system(&model);
    let transformed = build_transformed_system(&model).unwrap();
    let fine_steps = 1 << 12;
    let fine_dt = 1.0 / fine_steps as f64;
    let dw = wiener_increments(31, 0, 1, fine_steps, fine_dt);
    let gap = |block: usize| -> f64 {
        let coarse: Vec<Vec<f64>> = dw.chunks(block).map(|c| vec![c.iter().map(|r| r[0]).sum()]).collect();
        let cfg = IntegrationConfig::new(fine_dt * block as f64, 1.0, PhasePoint::new(vec![1.0], vec![0.5]).unwrap());
        let a = simulate_with_increments(&direct, &cfg, &coarse).unwrap();
        let b = simulate_with_increments(&transformed, &cfg, &coarse).unwrap();
        a.states.iter().zip(&b.states).map(|(p, q)| (p.x[0] - q.x[0]).abs()).fold(0.0, f64::max)
    };
    let gaps: Vec<f64> = [64, 32, 16, 8].iter().map(|&b| gap(b)).collect();
    for w in gaps.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.5..=3.0).contains(&ratio), "gaps {gaps:?}");
    }
}
