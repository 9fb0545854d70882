//! Property tests on the closed-form routes: invariances and orderings
//! that must hold for any full-rank three-input Gaussian, not just the
//! canned fixtures. Everything here is exact, so tolerances are tight.

use dsikit::bounds::{dub, dub_independent, dub_prime};
use dsikit::engine::EstimatorConfig;
use dsikit::indices::{dsi, shapley_all, sobol};
use dsikit::input::{build_input_spec, register_builtin_model, GaussianInputSpec};
use proptest::prelude::*;

fn covariance(rho: [f64; 3], s2: [f64; 3]) -> Vec<Vec<f64>> {
    let r = [
        [1.0, rho[0], rho[1]],
        [rho[0], 1.0, rho[2]],
        [rho[1], rho[2], 1.0],
    ];
    (0..3)
        .map(|i| (0..3).map(|j| r[i][j] * (s2[i] * s2[j]).sqrt()).collect())
        .collect()
}

fn rho_strategy() -> impl Strategy<Value = [f64; 3]> {
    [-0.85..0.85f64, -0.85..0.85f64, -0.85..0.85f64].prop_filter(
        "keep the correlation matrix solidly full rank",
        |r| {
            let det =
                1.0 - r[0] * r[0] - r[1] * r[1] - r[2] * r[2] + 2.0 * r[0] * r[1] * r[2];
            det > 0.05
        },
    )
}

fn s2_strategy() -> impl Strategy<Value = [f64; 3]> {
    [0.5..4.0f64, 0.5..4.0f64, 0.5..4.0f64]
}

fn beta_strategy() -> impl Strategy<Value = [f64; 3]> {
    [0.2..2.0f64, 0.2..2.0f64, 0.2..2.0f64].prop_flat_map(|mags| {
        [any::<bool>(), any::<bool>(), any::<bool>()].prop_map(move |signs| {
            let mut b = mags;
            for i in 0..3 {
                if signs[i] {
                    b[i] = -b[i];
                }
            }
            b
        })
    })
}

fn spec_of(rho: [f64; 3], s2: [f64; 3]) -> GaussianInputSpec {
    build_input_spec(&[0.0; 3], &covariance(rho, s2), 1e-10).unwrap()
}

proptest! {
    #[test]
    fn indices_invariant_under_output_scaling(
        rho in rho_strategy(),
        s2 in s2_strategy(),
        beta in beta_strategy(),
        c in prop_oneof![0.25..4.0f64, -4.0..-0.25f64],
    ) {
        let spec = spec_of(rho, s2);
        let cfg = EstimatorConfig::default();
        let base = register_builtin_model("linear", &beta).unwrap();
        let scaled_beta: Vec<f64> = beta.iter().map(|b| c * b).collect();
        let scaled = register_builtin_model("linear", &scaled_beta).unwrap();
        let sh_a = shapley_all(&base, &spec, &cfg).unwrap();
        let sh_b = shapley_all(&scaled, &spec, &cfg).unwrap();
        for j in 0..3 {
            let (ds_a, dst_a) = dsi(&base, &spec, j, &cfg).unwrap();
            let (ds_b, dst_b) = dsi(&scaled, &spec, j, &cfg).unwrap();
            prop_assert!((ds_a.value - ds_b.value).abs() <= 1e-12);
            prop_assert!((dst_a.value - dst_b.value).abs() <= 1e-12);
            prop_assert!((sh_a[j].value - sh_b[j].value).abs() <= 1e-12);
        }
    }

    #[test]
    fn shapley_effects_sum_to_one(
        rho in rho_strategy(),
        s2 in s2_strategy(),
        beta in beta_strategy(),
    ) {
        let spec = spec_of(rho, s2);
        let sh = shapley_all(
            &register_builtin_model("linear", &beta).unwrap(),
            &spec,
            &EstimatorConfig::default(),
        )
        .unwrap();
        let total: f64 = sh.iter().map(|v| v.value).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "sum {total}");
        for v in &sh {
            prop_assert!(v.value >= -1e-12 && v.value <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn independent_inputs_reduce_to_sobol(
        s2 in s2_strategy(),
        beta in beta_strategy(),
    ) {
        let spec = spec_of([0.0; 3], s2);
        let model = register_builtin_model("linear", &beta).unwrap();
        let cfg = EstimatorConfig::default();
        for j in 0..3 {
            prop_assert!(spec.is_independent_input(j));
            let (ds, ds_t) = dsi(&model, &spec, j, &cfg).unwrap();
            let (s, s_t) = sobol(&model, &spec, j, &cfg).unwrap();
            prop_assert!((ds.value - s.value).abs() <= 1e-12);
            prop_assert!((ds_t.value - s_t.value).abs() <= 1e-12);
        }
    }

    #[test]
    fn indices_bracket_and_bounds_dominate(
        rho in rho_strategy(),
        s2 in s2_strategy(),
        beta in beta_strategy(),
    ) {
        let spec = spec_of(rho, s2);
        let model = register_builtin_model("linear", &beta).unwrap();
        let cfg = EstimatorConfig::default();
        let sh = shapley_all(&model, &spec, &cfg).unwrap();
        for j in 0..3 {
            let (ds, ds_t) = dsi(&model, &spec, j, &cfg).unwrap();
            prop_assert!(ds.value >= -1e-10);
            prop_assert!(sh[j].value >= ds.value - 1e-10,
                "input {j}: Sh {} under DS {}", sh[j].value, ds.value);
            prop_assert!(ds_t.value >= sh[j].value - 1e-10,
                "input {j}: DS_T {} under Sh {}", ds_t.value, sh[j].value);
            if spec.is_independent_input(j) {
                let b = dub_independent(&model, &spec, j, &cfg).unwrap();
                prop_assert!(b >= ds_t.value - 1e-10);
            } else {
                let b = dub(&model, &spec, j, &cfg).unwrap();
                let bp = dub_prime(&model, &spec, j, &cfg).unwrap();
                prop_assert!(b >= ds_t.value - 1e-10,
                    "input {j}: bound {b} under DS_T {}", ds_t.value);
                prop_assert!(bp >= ds_t.value - 1e-10,
                    "input {j}: trace bound {bp} under DS_T {}", ds_t.value);
            }
        }
    }
}
