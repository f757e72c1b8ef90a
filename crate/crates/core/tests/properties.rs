use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;
use rand::Rng;
use stablelike::mc_sim::{path_rng, Probability};
use stablelike::parametrix::{build_kernel, GridOptions, HeatKernelField, SolverOptions, SpaceTimeGrid};
use stablelike::rho_calculus::{beta_time_identity, rho, RhoParams};
use stablelike::stable_density::single_slice;
use stablelike::ModelSpec;

fn small_varorder() -> &'static HeatKernelField {
    static K: OnceLock<HeatKernelField> = OnceLock::new();
    K.get_or_init(|| {
        let opts = GridOptions {
            h: 0.25,
            x_core: 3.0,
            x_max: 20.0,
            stretch: 1.3,
            steps: 10,
            t_max: 1.0,
        };
        let grid = SpaceTimeGrid::new(1, &opts).unwrap();
        build_kernel(&ModelSpec::varorder(), &grid, &SolverOptions::default()).unwrap().1
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_reflection_symmetric(j in 1usize..10, a in -12i32..=12, b in -12i32..=12) {
        let k = small_varorder();
        let g = &k.grid;
        let (x, y) = (a as f64 * 0.25, b as f64 * 0.25);
        let i = g.index_of(&[x, 0.0]).unwrap();
        let im = g.index_of(&[-x, 0.0]).unwrap();
        let l = k.target_column(&[y, 0.0]).unwrap();
        let lm = k.target_column(&[-y, 0.0]).unwrap();
        let (p, q) = (k.value(j, i, l), k.value(j, im, lm));
        prop_assert!((p - q).abs() <= 1e-9 * p.abs().max(1e-12), "{p} vs {q}");
        prop_assert!(p > 0.0);
    }

    #[test]
    fn rho_scales_with_t_gamma_and_is_even(gamma in 0.0f64..1.0, beta in 0.0f64..1.0, t in 0.01f64..1.0, x in -5.0f64..5.0) {
        let spec = ModelSpec::varorder();
        let p = RhoParams::new(gamma, beta, [0.0, 0.0]);
        let p0 = RhoParams::new(0.0, beta, [0.0, 0.0]);
        let v = rho(&p, &spec, t, &[x, 0.0]);
        prop_assert!(v >= 0.0);
        prop_assert!((v - rho(&p, &spec, t, &[-x, 0.0])).abs() <= 1e-12 * v.max(1e-300));
        let r = rho(&p0, &spec, t, &[x, 0.0]) * t.powf(gamma);
        prop_assert!((v - r).abs() <= 1e-12 * v.max(1e-300));
    }

    #[test]
    fn beta_identity_holds(gamma in 0.1f64..1.5, beta in 0.1f64..1.5, t in 0.05f64..1.0) {
        let (q, exact) = beta_time_identity(gamma, beta, t);
        prop_assert!((q - exact).abs() <= 1e-6 * exact, "{q} vs {exact}");
    }

    #[test]
    fn wilson_interval_is_ordered(n in 1usize..100_000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).round() as usize;
        let p = Probability::wilson(k, n);
        prop_assert!(0.0 <= p.wilson_low && p.wilson_low <= p.estimate + 1e-15);
        prop_assert!(p.estimate <= p.wilson_high + 1e-15 && p.wilson_high <= 1.0);
        let more = Probability::wilson(4 * k, 4 * n);
        prop_assert!(more.half_width() < p.half_width());
    }

    #[test]
    fn path_streams_are_reproducible(seed in any::<u64>(), index in 0u64..1_000_000) {
        let draw = |s: u64, i: u64| -> Vec<u64> {
            let mut r = path_rng(s, i);
            (0..4).map(|_| r.random::<u64>()).collect()
        };
        prop_assert_eq!(draw(seed, index), draw(seed, index));
        prop_assert_ne!(draw(seed, index), draw(seed, index + 1));
    }

    #[test]
    fn cauchy_slice_matches_closed_form(t in 0.01f64..2.0, r in 0.0f64..50.0, m in 0.2f64..5.0) {
        let s = single_slice(1, 1.0);
        let exact = m * t / (PI * ((m * t).powi(2) + r * r));
        let v = s.density(m, t, r);
        prop_assert!((v - exact).abs() <= 1e-6 * exact, "{v} vs {exact}");
    }

    #[test]
    fn constant_models_validate(alpha in 0.05f64..1.99, kappa in 0.01f64..10.0) {
        let spec = ModelSpec::constant(1, alpha, kappa).unwrap();
        prop_assert!(spec.is_constant() && spec.z_independent());
        prop_assert_eq!(spec.hash(), ModelSpec::constant(1, alpha, kappa).unwrap().hash());
        prop_assert!(ModelSpec::constant(1, 2.0 + alpha, kappa).is_err());
    }
}
