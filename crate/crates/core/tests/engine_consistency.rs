//! The sampled estimators against the closed forms, at sizes larger than
//! the self-check suite uses: the linear model makes every target value
//! exact, so these are real convergence checks with honest error bars.

use dsikit::dependency::ErPlan;
use dsikit::engine::{
    conditional_variance, output_variance, sf_variances, EstimatorConfig, PathSelect,
};
use dsikit::fixtures;
use dsikit::indices::{dsi, shapley_all};
use dsikit::input::{build_input_spec, register_builtin_model, GaussianInputSpec, ModelHandle};

fn setup() -> (ModelHandle, GaussianInputSpec) {
    let model = register_builtin_model("linear", &[1.0; 3]).unwrap();
    let spec = build_input_spec(
        &[0.0; 3],
        &fixtures::covariance(fixtures::correlation_sets()[1]),
        1e-10,
    )
    .unwrap();
    (model, spec)
}

fn mc(seed: u64) -> EstimatorConfig {
    EstimatorConfig {
        m: 4096,
        n_inner: 128,
        n_outer: 512,
        n_var: 8192,
        n_perm: 500,
        seed,
        antithetic: false,
        path: PathSelect::Mc,
        threads: None,
    }
}

#[test]
fn sampled_indices_converge_to_closed_forms() {
    let (model, spec) = setup();
    let exact = EstimatorConfig::default();
    let cfg = mc(42);
    let sh_exact = shapley_all(&model, &spec, &exact).unwrap();
    let sh_mc = shapley_all(&model, &spec, &cfg).unwrap();
    for j in 0..3 {
        let (ds_e, dst_e) = dsi(&model, &spec, j, &exact).unwrap();
        let (ds_m, dst_m) = dsi(&model, &spec, j, &cfg).unwrap();
        assert!(
            (ds_m.value - ds_e.value).abs() <= 3.0 * ds_m.std_error,
            "input {j}: DS {} vs {} (se {})",
            ds_m.value,
            ds_e.value,
            ds_m.std_error
        );
        assert!(
            (dst_m.value - dst_e.value).abs() <= 3.0 * dst_m.std_error,
            "input {j}: DS_T {} vs {} (se {})",
            dst_m.value,
            dst_e.value,
            dst_m.std_error
        );
        assert!(
            (sh_mc[j].value - sh_exact[j].value).abs() <= 3.0 * sh_mc[j].std_error,
            "input {j}: Sh {} vs {} (se {})",
            sh_mc[j].value,
            sh_exact[j].value,
            sh_mc[j].std_error
        );
        // sampled error bars stay informative at these sizes
        assert!(ds_m.std_error < 0.05 && sh_mc[j].std_error < 0.05);
    }
}

#[test]
fn conditional_variance_grows_with_the_conditioning_set() {
    let (model, spec) = setup();
    let exact = EstimatorConfig::default();
    let sigma = output_variance(&model, &spec, &exact).unwrap().value;
    let chains: [&[&[usize]]; 2] =
        [&[&[0], &[0, 1], &[0, 1, 2]], &[&[2], &[1, 2], &[0, 1, 2]]];
    for chain in chains {
        let mut prev = 0.0;
        for u in chain {
            let v = conditional_variance(&model, &spec, u, &exact).unwrap().value;
            assert!(v >= prev - 1e-12, "V({u:?}) = {v} under {prev}");
            prev = v;
        }
        assert!((prev - sigma).abs() <= 1e-10, "full set must recover sigma^2");
    }
}

#[test]
fn sampled_conditional_variance_matches_exact() {
    let (model, spec) = setup();
    let cfg = mc(7);
    for u in [&[0usize][..], &[1, 2][..]] {
        let exact = conditional_variance(&model, &spec, u, &EstimatorConfig::default())
            .unwrap()
            .value;
        let est = conditional_variance(&model, &spec, u, &cfg).unwrap();
        assert!(
            (est.value - exact).abs() <= 3.0 * est.std_error,
            "V({u:?}): {} vs {exact} (se {})",
            est.value,
            est.std_error
        );
    }
}

#[test]
fn first_order_never_exceeds_total_on_shared_noise() {
    let (model, spec) = setup();
    let cfg = mc(11);
    for j in 0..3 {
        for u in [&[][..], &[(j + 1) % 3][..]] {
            let u: Vec<usize> = u.iter().copied().filter(|&i| i != j).collect();
            let plan = ErPlan::new(&spec, j, &u).unwrap();
            let (fo, tot) = sf_variances(&model, &spec, &plan, &cfg).unwrap();
            assert!(fo.value >= 0.0);
            assert!(
                fo.value <= tot.value + 3.0 * (fo.std_error + tot.std_error),
                "pair (u={u:?}, j={j}): fo {} above tot {}",
                fo.value,
                tot.value
            );
        }
    }
}
