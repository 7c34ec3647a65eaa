//! Property tests for the spec-level invariants that hold across the whole
//! parameter space, checked against independent dense oracles.

use std::sync::Arc;

use proptest::prelude::*;

use ofl_core::factorization::{build_binary_tree, build_identity, build_toeplitz, Factorization};
use ofl_core::federation::{DataSpec, DiagnosticsFlags, NoiseSpec, SimConfig};
use ofl_core::matrix::Matrix;
use ofl_core::privacy::rho_from_eps_delta;
use ofl_core::streams::clip_gradient;
use ofl_core::{open_channel, run_simulation};

fn build(kind: u8, steps: usize) -> Factorization {
    match kind % 3 {
        0 => build_binary_tree(steps).unwrap(),
        1 => build_toeplitz(steps).unwrap(),
        _ => build_identity(steps).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // B·C = A within 1e-9 for every kind, dense-oracle route.
    #[test]
    fn factor_product_is_prefix_matrix(kind in 0u8..3, steps in 1usize..=96) {
        let f = build(kind, steps);
        let product = f.dense_b().matmul(&f.dense_c()).unwrap();
        let a = Matrix::lower_triangular_ones(steps);
        let (residual, _, _) = product.max_abs_diff(&a).unwrap();
        prop_assert!(residual <= 1e-9);
    }

    // The telescoped channel sum equals the running row product exactly.
    #[test]
    fn increment_telescoping_exact(
        kind in 0u8..3,
        steps in 1usize..=32,
        dim in 1usize..=4,
        seed in any::<u64>(),
        learner in 0u64..64,
        std in 0.0f64..4.0,
    ) {
        let f = Arc::new(build(kind, steps));
        let mut ch = open_channel(Arc::clone(&f), dim, std, seed, learner).unwrap();
        let mut acc = vec![0.0f64; dim];
        for _ in 0..steps {
            let inc = ch.next_increment().unwrap();
            for (a, i) in acc.iter_mut().zip(&inc) {
                *a += i;
            }
        }
        for (a, p) in acc.iter().zip(ch.prev_row_product()) {
            prop_assert_eq!(a.to_bits(), p.to_bits());
        }
    }

    // Clipping never exceeds the bound and is the identity inside the ball.
    #[test]
    fn clip_is_projection(g in prop::collection::vec(-100.0f64..100.0, 1..8), bound in 0.01f64..50.0) {
        let clipped = clip_gradient(&g, bound);
        let norm = clipped.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm <= bound * (1.0 + 1e-12));
        let g_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if g_norm <= bound {
            prop_assert_eq!(&clipped, &g);
        }
    }

    // rho is monotone in epsilon and delta.
    #[test]
    fn rho_monotonicity(
        eps in 0.01f64..8.0,
        bump in 0.01f64..2.0,
        delta in 1e-8f64..0.5,
        scale in 1.01f64..10.0,
    ) {
        let base = rho_from_eps_delta(eps, delta).unwrap();
        prop_assert!(rho_from_eps_delta(eps + bump, delta).unwrap() > base);
        let shifted = (delta * scale).min(1.0);
        prop_assert!(rho_from_eps_delta(eps, shifted).unwrap() >= base);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Sequential and parallel learner execution produce bit-identical runs,
    // and reruns reproduce themselves.
    #[test]
    fn simulation_schedule_independence(
        seed in any::<u64>(),
        kind in 0u8..3,
        n in 1usize..5,
        rounds in 1usize..6,
        tau in 1usize..4,
    ) {
        let mechanism = match kind {
            0 => "binary-tree",
            1 => "toeplitz",
            _ => "identity",
        };
        let cfg = SimConfig {
            n,
            rounds,
            tau,
            dim: 3,
            eta: 0.05,
            eta_g: 1.0,
            clip_bound: 1.0,
            mechanism: mechanism.into(),
            budget: NoiseSpec::ExplicitStd { std: 0.7 },
            master_seed: seed,
            data_spec: DataSpec::Quadratic { drift_magnitude: 0.5, drift_period: 2 },
            diagnostics: DiagnosticsFlags::default(),
            x0: None,
            parallel: false,
            static_regret: false,
            opt_budget: None,
        };
        let stream = cfg.build_stream().unwrap();
        let a = run_simulation(&cfg, &stream, None).unwrap();
        let b = run_simulation(&cfg, &stream, None).unwrap();
        let mut par_cfg = cfg.clone();
        par_cfg.parallel = true;
        let c = run_simulation(&par_cfg, &stream, None).unwrap();
        for ((x, y), z) in a.final_model.iter().zip(&b.final_model).zip(&c.final_model) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
            prop_assert_eq!(x.to_bits(), z.to_bits());
        }
    }
}
