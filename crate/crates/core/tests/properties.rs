//! Randomized invariants of the model, the minimizer, the adversary and the
//! cubic step.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hosc::adversary::{run_duel, AdversaryState};
use hosc::minimizer::solve_chain_minimizer;
use hosc::model::params::chain_constant;
use hosc::model::{g_bregman, g_derivative, Instance, InstanceParams, Regime, RotationBasis};
use hosc::numeric::{dot, norm, SymTridiagonal};
use hosc::oracle::Oracle;
use hosc::solvers::{gradient_descent, solve_cubic_secular};

fn params(k: usize, lt: f64, gamma: f64, t: usize) -> InstanceParams {
    InstanceParams::from_lambda_tilde(k, lt, chain_constant(k), gamma, t, t + 2, Regime::High).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bregman_is_non_negative_and_matches_definition(k in 2usize..6, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let v = g_bregman(k, a, b);
        prop_assert!(v >= 0.0);
        let direct = g_derivative(k, 0, a) - g_derivative(k, 0, b) - g_derivative(k, 1, b) * (a - b);
        let scale = 1.0 + g_derivative(k, 0, a).abs() + g_derivative(k, 0, b).abs() + (g_derivative(k, 1, b) * (a - b)).abs();
        prop_assert!((v - direct).abs() <= 1e-12 * scale);
    }

    #[test]
    fn minimizer_is_monotone_and_balances_the_linear_term(
        k in 2usize..5,
        lt_exp in -2i32..4,
        gamma in 0.5f64..200.0,
        t in 4usize..80,
    ) {
        let p = params(k, 2f64.powi(lt_exp), gamma, t);
        let s = solve_chain_minimizer(&p).unwrap();
        prop_assert!(s.x_star.iter().all(|v| *v >= 0.0));
        prop_assert!(s.x_star.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(s.residual_max <= 1e-9 * p.gamma);
        let target = p.gamma / p.lambda_tilde();
        prop_assert!((s.x_star.iter().sum::<f64>() - target).abs() <= 1e-10 * target);
    }

    #[test]
    fn rotated_instance_is_lambda_strongly_convex(seed in 0u64..1000, k in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = InstanceParams::from_lambda_tilde(k, 0.5, chain_constant(k), 3.0, 10, 14, Regime::High).unwrap();
        let lambda = p.lambda;
        let basis = RotationBasis::random(10, 14, &mut rng).unwrap();
        let mut inst = Instance::new(p, basis).unwrap();
        let x = hosc::numeric::random_gaussian(&mut rng, 14);
        let y = hosc::numeric::random_gaussian(&mut rng, 14);
        let bx = inst.query(&x, 1).unwrap();
        let by = inst.query(&y, 1).unwrap();
        let d: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let lower = bx.value + dot(&bx.gradient, &d) + 0.5 * lambda * dot(&d, &d);
        prop_assert!(by.value >= lower - 1e-10 * (1.0 + by.value.abs()));
    }

    #[test]
    fn cubic_step_satisfies_first_order_condition(
        diag in prop::collection::vec(0.1f64..5.0, 2..20),
        seed in 0u64..1000,
        m2 in 0.01f64..10.0,
    ) {
        let n = diag.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // diagonally dominant, hence positive definite
        let off: Vec<f64> = (0..n - 1).map(|i| 0.45 * diag[i].min(diag[i + 1]) * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let h = SymTridiagonal { diag: diag.clone(), off };
        let g = hosc::numeric::random_gaussian(&mut rng, n);
        let step = solve_cubic_secular(|s, r| h.solve_shifted(s, r), &g, m2, 0.0).unwrap();
        let hh = h.matvec(&step.h);
        let r = norm(&step.h);
        let foc: Vec<f64> = (0..n).map(|i| g[i] + hh[i] + 0.5 * m2 * r * step.h[i]).collect();
        prop_assert!(norm(&foc) <= 1e-9 * (1.0 + norm(&g)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn certificate_never_exceeds_the_true_gap(seed in 0u64..10_000, k in 2usize..4) {
        let p = params(k, 1.0, 20.0, 24);
        let mut state = AdversaryState::new(&p, 40, seed).unwrap();
        run_duel(&mut state, |o, x0| gradient_descent(o, x0, 1e-12, 40).map(|_| ()), 1e-12, 40, false).unwrap();
        for t in 1..=state.answered() {
            prop_assert!(state.gap_certificate(t) <= state.true_gap(t));
            prop_assert!(state.true_gap(t) >= 0.0);
        }
    }

    #[test]
    fn repeated_queries_replay_bitwise(seed in 0u64..10_000) {
        let p = params(3, 1.0, 20.0, 16);
        let mut state = AdversaryState::new(&p, 8, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let x = hosc::numeric::random_gaussian(&mut rng, state.dim());
        let a = state.answer_query(&x, 3).unwrap();
        let _ = state.answer_query(&vec![0.5; state.dim()], 3).unwrap();
        let b = state.answer_query(&x, 3).unwrap();
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        prop_assert!(a.gradient.iter().zip(&b.gradient).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}
