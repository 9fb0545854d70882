//! Sensitivity indices: Sobol' main/total pairs for independent inputs,
//! block-averaged dependent indices over equivalent representations,
//! Shapley effects by exact subset enumeration or permutation sampling, and
//! the full per-input report with bounds and evaluation accounting.

use crate::bounds::{bound_report, BoundReport};
use crate::combinatorics::{all_permutations, factorial, shapley_weight, subsets_excluding};
use crate::dependency::ErPlan;
use crate::engine::{
    conditional_variance, cost_formulas, exact_pair_variance, independent_pick_freeze,
    output_variance, pick_freeze_batch, sf_variances, stream_rng, CostTable, EstimatorConfig,
    VarianceEstimate,
};
use crate::error::{Error, Result};
use crate::input::{GaussianInputSpec, ModelHandle};
use rand::seq::SliceRandom;
use std::collections::HashMap;

/// An index estimate with its standard error (zero on closed-form routes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexValue {
    pub value: f64,
    pub std_error: f64,
}

impl IndexValue {
    fn exact(value: f64) -> Self {
        IndexValue { value, std_error: 0.0 }
    }
}

// first-order error propagation for num/sigma: the numerator error scaled
// down, plus the share the variance jitter moves the ratio (conservative
// sum, not quadrature, since the two can correlate)
fn ratio_value(num: f64, num_se: f64, sigma: &VarianceEstimate) -> IndexValue {
    let value = num / sigma.value;
    let se = num_se / sigma.value + value.abs() * sigma.std_error / sigma.value;
    IndexValue { value, std_error: se }
}

/// Main and total dependent sensitivity indices of one input. Independent
/// inputs reduce to their Sobol' pair on the model directly; block inputs
/// average first-order/total innovation variances over all conditioning
/// prefixes inside the block, weighted like a within-block Shapley average.
pub fn dsi(
    model: &ModelHandle,
    spec: &GaussianInputSpec,
    j: usize,
    cfg: &EstimatorConfig,
) -> Result<(IndexValue, IndexValue)> {
    model.ensure_arity(spec.dim())?;
    cfg.validate()?;
    if j >= spec.dim() {
        return Err(Error::OutOfRange(format!("input {j} of {}", spec.dim())));
    }
    let sigma = output_variance(model, spec, cfg)?;
    if spec.is_independent_input(j) {
        let (fo, tot) = independent_pick_freeze(model, spec, j, cfg)?;
        return Ok((
            ratio_value(fo.value, fo.std_error, &sigma),
            ratio_value(tot.value, tot.std_error, &sigma),
        ));
    }
    let bk = spec.partition().block_of(j).expect("dependent input has a block");
    let block = spec.partition().blocks[bk].clone();
    if block.len() > 20 {
        return Err(Error::BlockTooLarge(block.len()));
    }
    let exact = cfg.require_route(model)?;
    let dk = block.len() as u64;
    let mut num_fo = 0.0;
    let mut num_tot = 0.0;
    let mut var_fo = 0.0;
    let mut var_tot = 0.0;
    for u in subsets_excluding(&block, j)? {
        let w = shapley_weight(dk, u.len() as u64)?.value;
        let plan = ErPlan::new(spec, j, &u)?;
        if exact {
            let beta = model.linear_coefficients.as_ref().unwrap();
            let v = exact_pair_variance(&plan, beta, spec.sigma2(j))?;
            num_fo += w * v;
            num_tot += w * v;
        } else {
            let (fo, tot) = sf_variances(model, spec, &plan, cfg)?;
            num_fo += w * fo.value;
            num_tot += w * tot.value;
            var_fo += w * w * fo.std_error * fo.std_error;
            var_tot += w * w * tot.std_error * tot.std_error;
        }
    }
    Ok((
        ratio_value(num_fo, var_fo.sqrt(), &sigma),
        ratio_value(num_tot, var_tot.sqrt(), &sigma),
    ))
}

/// Sobol' main and total indices of an independent input.
pub fn sobol(
    model: &ModelHandle,
    spec: &GaussianInputSpec,
    j: usize,
    cfg: &EstimatorConfig,
) -> Result<(IndexValue, IndexValue)> {
    let sigma = output_variance(model, spec, cfg)?;
    let (fo, tot) = independent_pick_freeze(model, spec, j, cfg)?;
    Ok((
        ratio_value(fo.value, fo.std_error, &sigma),
        ratio_value(tot.value, tot.std_error, &sigma),
    ))
}

// memoized conditional variances keyed by subset bitmask
struct VCache {
    map: HashMap<u64, VarianceEstimate>,
    evals: u64,
}

impl VCache {
    fn new() -> Self {
        VCache { map: HashMap::new(), evals: 0 }
    }

    fn get(
        &mut self,
        model: &ModelHandle,
        spec: &GaussianInputSpec,
        u: &[usize],
        cfg: &EstimatorConfig,
    ) -> Result<VarianceEstimate> {
        let mask: u64 = u.iter().map(|&i| 1u64 << i).sum();
        if let Some(v) = self.map.get(&mask) {
            return Ok(*v);
        }
        let v = conditional_variance(model, spec, u, cfg)?;
        self.evals += v.n_evals;
        self.map.insert(mask, v);
        Ok(v)
    }
}

fn union_sorted(u: &[usize], j: usize) -> Vec<usize> {
    let mut out = u.to_vec();
    out.push(j);
    out.sort_unstable();
    out
}

fn shapley_exact_cached(
    model: &ModelHandle,
    spec: &GaussianInputSpec,
    j: usize,
    sigma: &VarianceEstimate,
    cfg: &EstimatorConfig,
    cache: &mut VCache,
) -> Result<IndexValue> {
    let d = spec.dim();
    if d > 20 {
        return Err(Error::DimensionTooLargeForExact(d));
    }
    let ground: Vec<usize> = (0..d).collect();
    let mut num = 0.0;
    let mut var = 0.0;
    for u in subsets_excluding(&ground, j)? {
        let w = shapley_weight(d as u64, u.len() as u64)?.value;
        let v0 = cache.get(model, spec, &u, cfg)?;
        let v1 = cache.get(model, spec, &union_sorted(&u, j), cfg)?;
        num += w * (v1.value - v0.value);
        var += w * w * (v0.std_error * v0.std_error + v1.std_error * v1.std_error);
    }
    Ok(ratio_value(num, var.sqrt(), sigma))
}

/// Shapley effect of one input by exact enumeration of the 2^(d-1)
/// conditioning subsets, with conditional variances memoized.
pub fn shapley_exact(
    model: &ModelHandle,
    spec: &GaussianInputSpec,
    j: usize,
    cfg: &EstimatorConfig,
) -> Result<IndexValue> {
    model.ensure_arity(spec.dim())?;
    cfg.validate()?;
    let sigma = output_variance(model, spec, cfg)?;
    let mut cache = VCache::new();
    shapley_exact_cached(model, spec, j, &sigma, cfg, &mut cache)
}

fn shapley_sampled_cached(
    model: &ModelHandle,
    spec: &GaussianInputSpec,
    j: usize,
    sigma: &VarianceEstimate,
    cfg: &EstimatorConfig,
    cache: &mut VCache,
) -> Result<IndexValue> {
    let d = spec.dim();
    // when the permutation budget covers the whole group, enumerate: the
    // average is then the exact subset formula, not an estimate of it
    let enumerate = factorial(d as u64).map(|f| f <= cfg.n_perm as u128).unwrap_or(false);
    let perms: Vec<Vec<usize>> = if enumerate {
        all_permutations(d)
    } else {
        (0..cfg.n_perm)
            .map(|t| {
                let mut rng = stream_rng(cfg.seed, "sh:perm", &[t as u64]);
                let mut p: Vec<usize> = (0..d).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect()
    };
    let mut increments = Vec::with_capacity(perms.len());
    for perm in &perms {
        let pos = perm.iter().position(|&i| i == j).expect("j in permutation");
        let mut pred: Vec<usize> = perm[..pos].to_vec();
        pred.sort_unstable();
        let v0 = cache.get(model, spec, &pred, cfg)?;
        let v1 = cache.get(model, spec, &union_sorted(&pred, j), cfg)?;
        increments.push(v1.value - v0.value);
    }
    let n = increments.len() as f64;
    let mean = increments.iter().sum::<f64>() / n;
    let se = if increments.len() > 1 {
        let var = increments.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(ratio_value(mean, se, sigma))
}

/// Shapley effect of one input by permutation sampling, with conditional
/// variances memoized. A budget of at least d! permutations switches to
/// complete enumeration, whose average equals the exact subset formula.
pub fn shapley_sampled(
    model: &ModelHandle,
    spec: &GaussianInputSpec,
    j: usize,
    cfg: &EstimatorConfig,
) -> Result<IndexValue> {
    model.ensure_arity(spec.dim())?;
    cfg.validate()?;
    let sigma = output_variance(model, spec, cfg)?;
    let mut cache = VCache::new();
    shapley_sampled_cached(model, spec, j, &sigma, cfg, &mut cache)
}

/// Shapley effects of every input with one conditional-variance cache
/// shared across them, which is much cheaper than d separate calls: each
/// subset variance is estimated once. Chooses enumeration or sampling the
/// same way as the per-input entry points.
pub fn shapley_all(
    model: &ModelHandle,
    spec: &GaussianInputSpec,
    cfg: &EstimatorConfig,
) -> Result<Vec<IndexValue>> {
    model.ensure_arity(spec.dim())?;
    cfg.validate()?;
    let d = spec.dim();
    let sigma = output_variance(model, spec, cfg)?;
    let mut cache = VCache::new();
    let exhaustive = d <= 20
        && (cfg.exact_route(model)
            || factorial(d as u64).map(|f| f <= cfg.n_perm as u128).unwrap_or(false));
    (0..d)
        .map(|j| {
            if exhaustive {
                shapley_exact_cached(model, spec, j, &sigma, cfg, &mut cache)
            } else {
                shapley_sampled_cached(model, spec, j, &sigma, cfg, &mut cache)
            }
        })
        .collect()
}

/// One report row. `input` is zero-based; Sobol' columns fill only for
/// independent inputs, bound columns only where the needed derivative
/// information exists.
#[derive(Debug, Clone)]
pub struct InputRow {
    pub input: usize,
    pub ds: IndexValue,
    pub ds_t: IndexValue,
    pub sh: IndexValue,
    pub s: Option<IndexValue>,
    pub s_t: Option<IndexValue>,
    pub dub: Option<f64>,
    pub dub_prime: Option<f64>,
    /// model evaluations attributed to this row: its own freeze matrices
    /// plus an even share of everything batched across inputs
    pub n_evals: u64,
}

/// Full per-input report: indices, bounds, and evaluation accounting.
#[derive(Debug, Clone)]
pub struct IndexReport {
    pub rows: Vec<InputRow>,
    pub sigma: VarianceEstimate,
    /// true when every index came from closed forms
    pub exact_route: bool,
    /// true when Shapley effects were permutation-sampled rather than
    /// enumerated
    pub shapley_sampled_route: bool,
    /// true when any bound rests on a sampled derivative maximum
    pub heuristic_bounds: bool,
    pub e_std: f64,
    /// pick-freeze evaluations attributed to each dependent block's index
    /// pairs (baselines charged per block even where shared)
    pub per_block_dsi_evals: Vec<u64>,
    /// distinct pick-freeze evaluations actually performed for block pairs
    pub dsi_evals_total: u64,
    pub independent_dsi_evals: u64,
    pub variance_evals: u64,
    pub shapley_evals: u64,
    pub bound_evals: u64,
    pub cost_table: CostTable,
    /// every per-block count at or under the pick-freeze budget bound
    pub dsi_within_budget: bool,
}

// integer even-share with the remainder spread over the first rows, so the
// per-row counts sum exactly to the total
fn distribute(total: u64, n: usize) -> Vec<u64> {
    let q = total / n as u64;
    let r = (total % n as u64) as usize;
    (0..n).map(|i| q + u64::from(i < r)).collect()
}

/// Computes every index and bound for every input. Shapley effects come
/// from exact enumeration when the dimension allows it (at most 20 inputs)
/// and permutation sampling otherwise; conditional variances are memoized
/// across inputs either way. Monte Carlo Shapley estimates are floored at
/// zero, since the true value is a sum of nonnegative variance increments.
pub fn full_report(
    model: &ModelHandle,
    spec: &GaussianInputSpec,
    cfg: &EstimatorConfig,
) -> Result<IndexReport> {
    model.ensure_arity(spec.dim())?;
    cfg.validate()?;
    let d = spec.dim();
    let part = spec.partition().clone();
    if let Some(size) = part.blocks.iter().map(|b| b.len()).max() {
        if size > 20 {
            return Err(Error::BlockTooLarge(size));
        }
    }
    let sigma = output_variance(model, spec, cfg)?;
    let exact = cfg.require_route(model)?;

    // dependent indices and Sobol' pairs
    let mut ds = vec![IndexValue::exact(0.0); d];
    let mut ds_t = vec![IndexValue::exact(0.0); d];
    let mut s = vec![None; d];
    let mut s_t = vec![None; d];
    let mut direct_evals = vec![0u64; d];
    let mut per_block_dsi_evals = vec![0u64; part.blocks.len()];
    let mut dsi_evals_total = 0u64;
    let mut independent_dsi_evals = 0u64;
    if exact {
        let beta = model.linear_coefficients.as_ref().unwrap().clone();
        for &j in &part.independent {
            let v = IndexValue::exact(beta[j] * beta[j] * spec.sigma2(j) / sigma.value);
            ds[j] = v;
            ds_t[j] = v;
            s[j] = Some(v);
            s_t[j] = Some(v);
        }
        for block in &part.blocks {
            let dk = block.len() as u64;
            for &j in block {
                let mut num = 0.0;
                for u in subsets_excluding(block, j)? {
                    let w = shapley_weight(dk, u.len() as u64)?.value;
                    let plan = ErPlan::new(spec, j, &u)?;
                    num += w * exact_pair_variance(&plan, &beta, spec.sigma2(j))?;
                }
                let v = IndexValue::exact(num / sigma.value);
                ds[j] = v;
                ds_t[j] = v;
            }
        }
    } else {
        let batch = pick_freeze_batch(model, spec, cfg)?;
        per_block_dsi_evals = batch.per_block_evals.clone();
        dsi_evals_total = batch.block_evals_total;
        independent_dsi_evals = batch.independent_evals;
        for (j, fo, tot) in &batch.independent {
            let main = ratio_value(fo.value, fo.std_error, &sigma);
            let total = ratio_value(tot.value, tot.std_error, &sigma);
            ds[*j] = main;
            ds_t[*j] = total;
            s[*j] = Some(main);
            s_t[*j] = Some(total);
            direct_evals[*j] += cfg.m as u64;
        }
        for block in &part.blocks {
            let dk = block.len() as u64;
            for &j in block {
                let mut num_fo = 0.0;
                let mut num_tot = 0.0;
                let mut var_fo = 0.0;
                let mut var_tot = 0.0;
                for pair in batch.pairs.iter().filter(|p| p.j == j) {
                    let w = shapley_weight(dk, pair.u.len() as u64)?.value;
                    num_fo += w * pair.fo.value;
                    num_tot += w * pair.tot.value;
                    var_fo += w * w * pair.fo.std_error * pair.fo.std_error;
                    var_tot += w * w * pair.tot.std_error * pair.tot.std_error;
                    direct_evals[j] += cfg.m as u64;
                }
                ds[j] = ratio_value(num_fo, var_fo.sqrt(), &sigma);
                ds_t[j] = ratio_value(num_tot, var_tot.sqrt(), &sigma);
            }
        }
    }

    // Shapley effects with a shared conditional-variance cache
    let mut cache = VCache::new();
    let shapley_sampled_route = d > 20;
    let mut sh = Vec::with_capacity(d);
    for j in 0..d {
        let v = if shapley_sampled_route {
            shapley_sampled_cached(model, spec, j, &sigma, cfg, &mut cache)?
        } else {
            shapley_exact_cached(model, spec, j, &sigma, cfg, &mut cache)?
        };
        sh.push(IndexValue { value: v.value.max(0.0), std_error: v.std_error });
    }
    let shapley_evals = cache.evals;

    let brep: BoundReport = bound_report(model, spec, cfg)?;
    let heuristic_bounds = brep.rows.iter().any(|r| r.heuristic);

    let d_max = part.blocks.iter().map(|b| b.len()).max().unwrap_or(1);
    let cost_table = cost_formulas(
        d as u64,
        d_max as u64,
        cfg.m as u64,
        cfg.n_inner as u64,
        cfg.n_outer as u64,
        cfg.n_var as u64,
        cfg.n_perm as u64,
    )?;
    let dsi_within_budget = per_block_dsi_evals.iter().all(|&e| (e as u128) <= cost_table.c_l);

    let direct_total: u64 = direct_evals.iter().sum();
    let total_evals = dsi_evals_total + independent_dsi_evals + sigma.n_evals + shapley_evals
        + brep.n_evals;
    debug_assert!(direct_total <= total_evals);
    let shares = distribute(total_evals - direct_total, d);
    let rows: Vec<InputRow> = (0..d)
        .map(|j| InputRow {
            input: j,
            ds: ds[j],
            ds_t: ds_t[j],
            sh: sh[j],
            s: s[j],
            s_t: s_t[j],
            dub: brep.rows[j].dub,
            dub_prime: brep.rows[j].dub_prime,
            n_evals: direct_evals[j] + shares[j],
        })
        .collect();

    Ok(IndexReport {
        rows,
        sigma,
        exact_route: exact,
        shapley_sampled_route,
        heuristic_bounds,
        e_std: brep.e_std,
        per_block_dsi_evals,
        dsi_evals_total,
        independent_dsi_evals,
        variance_evals: sigma.n_evals,
        shapley_evals,
        bound_evals: brep.n_evals,
        cost_table,
        dsi_within_budget,
    })
}
