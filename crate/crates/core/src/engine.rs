//! Variance estimation: output variance, conditional-expectation variances
//! via a Gaussian double loop, pick-freeze first-order and total variances
//! of innovations on equivalent representations, generalized total
//! sensitivity of dependency maps, and exact linear-Gaussian shortcuts for
//! all of them.
//!
//! Determinism contract: every random draw comes from a ChaCha8 stream
//! keyed by (seed, operation tag, item index), work items are collected
//! into index-ordered vectors, and reductions run sequentially. Results are
//! therefore bit-identical for any worker count.

use crate::dependency::{DependencyModel, ErPlan};
use crate::error::{Error, Result};
use crate::input::{GaussianInputSpec, ModelHandle};
use crate::linalg::{pseudo_inverse, semidef_cholesky, submatrix, ConditionalGaussian};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Which computational route an estimator takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathSelect {
    /// exact closed forms when the model is the linear builtin, Monte Carlo
    /// otherwise
    #[default]
    Auto,
    /// closed forms or an error
    Exact,
    /// always Monte Carlo
    Mc,
}

/// Sample sizes, seed, and routing for every estimator.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    /// pick-freeze sample size
    pub m: usize,
    /// inner loop size of the conditional-variance double loop
    pub n_inner: usize,
    /// outer loop size of the conditional-variance double loop
    pub n_outer: usize,
    /// sample size for the output variance
    pub n_var: usize,
    /// sampled permutation count for the permutation-sampled Shapley route
    pub n_perm: usize,
    pub seed: u64,
    /// pair antithetic rows in the base sample matrices
    pub antithetic: bool,
    pub path: PathSelect,
    /// worker cap; None uses the global pool
    pub threads: Option<usize>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            m: 10_000,
            n_inner: 10_000,
            n_outer: 10_000,
            n_var: 10_000,
            n_perm: 500,
            seed: 42,
            antithetic: false,
            path: PathSelect::Auto,
            threads: None,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.n_inner < 2 || self.n_outer < 2 || self.n_var < 2 {
            return Err(Error::OutOfRange("all sample sizes must be at least 2".into()));
        }
        if self.n_perm < 1 {
            return Err(Error::OutOfRange("n_perm must be at least 1".into()));
        }
        Ok(())
    }

    /// True when this config and model pair resolves to closed forms.
    pub fn exact_route(&self, model: &ModelHandle) -> bool {
        match self.path {
            PathSelect::Mc => false,
            PathSelect::Auto | PathSelect::Exact => model.linear_coefficients.is_some(),
        }
    }

    pub(crate) fn require_route(&self, model: &ModelHandle) -> Result<bool> {
        if self.path == PathSelect::Exact && model.linear_coefficients.is_none() {
            return Err(Error::OutOfRange(
                "exact path requires a model with linear coefficients".into(),
            ));
        }
        Ok(self.exact_route(model))
    }
}

/// A scalar estimate with its standard error and the number of model
/// evaluations that produced it (zero on closed-form routes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_evals: u64,
}

impl VarianceEstimate {
    pub fn exact(value: f64) -> Self {
        VarianceEstimate { value, std_error: 0.0, n_evals: 0 }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Stream-addressed RNG: the key mixes the user seed, an operation tag, and
/// item indices, so concurrent schedules can never reorder draws.
pub(crate) fn stream_rng(seed: u64, tag: &str, salt: &[u64]) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut acc = splitmix64(seed ^ h);
    for &s in salt {
        acc = splitmix64(acc ^ s);
    }
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&h.to_le_bytes());
    key[16..24].copy_from_slice(&acc.to_le_bytes());
    key[24..32].copy_from_slice(&splitmix64(acc).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Runs `f` inside a pool capped at `threads` workers (or the global pool).
pub(crate) fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        _ => f(),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

// standard error of the unbiased sample variance via fourth moments
fn variance_se(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
}

/// Row-major matrix of standard normal draws; lane l always feeds input l.
pub(crate) struct SampleMatrix {
    pub rows: usize,
    pub lanes: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn standard(seed: u64, tag: &str, rows: usize, lanes: usize, antithetic: bool) -> Self {
        let mut data = vec![0.0; rows * lanes];
        for r in 0..rows {
            if antithetic && r % 2 == 1 {
                let (prev, cur) = data.split_at_mut(r * lanes);
                let src = &prev[(r - 1) * lanes..];
                for l in 0..lanes {
                    cur[l] = -src[l];
                }
                continue;
            }
            let mut rng = stream_rng(seed, tag, &[r as u64]);
            for l in 0..lanes {
                data[r * lanes + l] = rng.sample(StandardNormal);
            }
        }
        SampleMatrix { rows, lanes, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.lanes..(r + 1) * self.lanes]
    }

    /// Copy of `base` with a single lane replaced from `other`.
    pub fn with_lane_from(&self, lane: usize, other: &SampleMatrix) -> SampleMatrix {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.lanes, other.lanes);
        let mut data = self.data.clone();
        for r in 0..self.rows {
            data[r * self.lanes + lane] = other.data[r * self.lanes + lane];
        }
        SampleMatrix { rows: self.rows, lanes: self.lanes, data }
    }
}

/// Maps one lane row through the independence structure: independent inputs
/// scale their own lane, each block feeds its first input's lane through the
/// block map with the remaining lanes as innovations.
pub(crate) fn assemble_input(
    spec: &GaussianInputSpec,
    dms: &[DependencyModel],
    row: &[f64],
    x: &mut [f64],
) {
    let meanv = spec.mean();
    for &i in &spec.partition().independent {
        x[i] = meanv[i] + spec.sigma2(i).sqrt() * row[i];
    }
    for dm in dms {
        let w = dm.permutation();
        let first = w[0];
        let centered_first = spec.sigma2(first).sqrt() * row[first];
        x[first] = meanv[first] + centered_first;
        // innovations carry the marginal variance of the input they represent
        let z: Vec<f64> = w[1..]
            .iter()
            .map(|&input| spec.sigma2(input).sqrt() * row[input])
            .collect();
        let rest = dm.apply(centered_first, &z).expect("lane count matches block");
        for (l, &input) in w.iter().enumerate().skip(1) {
            x[input] = meanv[input] + rest[l - 1];
        }
    }
}

pub(crate) fn eval_rows(
    model: &ModelHandle,
    spec: &GaussianInputSpec,
    dms: &[DependencyModel],
    mat: &SampleMatrix,
) -> Vec<f64> {
    let d = spec.dim();
    (0..mat.rows)
        .into_par_iter()
        .map(|r| {
            let mut x = vec![0.0; d];
            assemble_input(spec, dms, mat.row(r), &mut x);
            model.eval(&x)
        })
        .collect()
}

/// Ascending-permutation dependency model for every dependent block: the
/// default assembly shared by all estimators.
pub(crate) fn default_dms(spec: &GaussianInputSpec) -> Result<Vec<DependencyModel>> {
    spec.partition()
        .blocks
        .iter()
        .map(|b| DependencyModel::for_block(spec.covariance(), b, b))
        .collect()
}

pub(crate) fn exact_sigma(spec: &GaussianInputSpec, beta: &[f64]) -> f64 {
    let d = spec.dim();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            acc += beta[i] * beta[j] * spec.covariance()[(i, j)];
        }
    }
    acc
}

/// Exact var(E[M|X_u]) for the linear model: the conditional mean is affine
/// with coefficient c = beta_u + pinv(S_uu) S_{u,rest} beta_rest on X_u.
pub(crate) fn exact_conditional_variance(
    spec: &GaussianInputSpec,
    beta: &[f64],
    u: &[usize],
) -> f64 {
    if u.is_empty() {
        return 0.0;
    }
    let d = spec.dim();
    let rest: Vec<usize> = (0..d).filter(|i| !u.contains(i)).collect();
    let cov = spec.covariance();
    let s_uu = submatrix(cov, u, u);
    let beta_u = DMatrix::from_fn(u.len(), 1, |i, _| beta[u[i]]);
    let c = if rest.is_empty() {
        beta_u
    } else {
        let s_ur = submatrix(cov, u, &rest);
        let beta_r = DMatrix::from_fn(rest.len(), 1, |i, _| beta[rest[i]]);
        &beta_u + pseudo_inverse(&s_uu, 1e-12) * s_ur * beta_r
    };
    (c.transpose() * s_uu * c)[(0, 0)]
}

/// Output variance: exact quadratic form on the linear route, otherwise the
/// unbiased sample variance of joint draws.
pub fn output_variance(
    model: &ModelHandle,
    spec: &GaussianInputSpec,
    cfg: &EstimatorConfig,
) -> Result<VarianceEstimate> {
    model.ensure_arity(spec.dim())?;
    cfg.validate()?;
    if cfg.require_route(model)? {
        let beta = model.linear_coefficients.as_ref().unwrap();
        let sigma = exact_sigma(spec, beta);
        if sigma < 1e-14 {
            return Err(Error::DegenerateVariance);
        }
        return Ok(VarianceEstimate::exact(sigma));
    }
    let d = spec.dim();
    let (chol, _) = semidef_cholesky(spec.covariance(), 1e-12);
    let ys: Vec<f64> = with_pool(cfg.threads, || {
        (0..cfg.n_var)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream_rng(cfg.seed, "var", &[r as u64]);
                let eta: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let mut x = vec![0.0; d];
                for i in 0..d {
                    let mut v = spec.mean()[i];
                    for t in 0..=i {
                        v += chol[(i, t)] * eta[t];
                    }
                    x[i] = v;
                }
                model.eval(&x)
            })
            .collect()
    });
    let s2 = sample_variance(&ys);
    if s2 < 1e-14 {
        return Err(Error::DegenerateVariance);
    }
    Ok(VarianceEstimate { value: s2, std_error: variance_se(&ys), n_evals: cfg.n_var as u64 })
}

/// var(E[M(X) | X_u]) with the empty-set convention V(empty) = 0 and
/// V(everything) = output variance.
///
/// The Monte Carlo route is a double loop: outer draws of X_u from its
/// marginal, inner draws of the rest from the Gaussian conditional (Schur
/// complement, pseudo-inverse for singular conditioning). The estimate is
/// the outer sample variance of inner means minus the mean inner variance
/// over the inner size (the standard bias correction), clamped at zero.
pub fn conditional_variance(
    model: &ModelHandle,
    spec: &GaussianInputSpec,
    u: &[usize],
    cfg: &EstimatorConfig,
) -> Result<VarianceEstimate> {
    model.ensure_arity(spec.dim())?;
    cfg.validate()?;
    let d = spec.dim();
    let mut u_sorted: Vec<usize> = u.to_vec();
    u_sorted.sort_unstable();
    u_sorted.dedup();
    if u_sorted.len() != u.len() || u_sorted.iter().any(|&i| i >= d) {
        return Err(Error::OutOfRange(format!("conditioning set {u:?}")));
    }
    if u_sorted.is_empty() {
        return Ok(VarianceEstimate::exact(0.0));
    }
    if u_sorted.len() == d {
        return output_variance(model, spec, cfg);
    }
    if cfg.require_route(model)? {
        let beta = model.linear_coefficients.as_ref().unwrap();
        return Ok(VarianceEstimate::exact(exact_conditional_variance(spec, beta, &u_sorted)));
    }
    let rest: Vec<usize> = (0..d).filter(|i| !u_sorted.contains(i)).collect();
    let cov = spec.covariance();
    let (chol_u, _) = semidef_cholesky(&submatrix(cov, &u_sorted, &u_sorted), 1e-12);
    let cg = ConditionalGaussian::new(cov, &u_sorted, &rest, 1e-12);
    let nu = u_sorted.len();
    let nr = rest.len();
    let u_mask: u64 = u_sorted.iter().map(|&i| 1u64 << i).sum();
    let stats: Vec<(f64, f64)> = with_pool(cfg.threads, || {
        (0..cfg.n_outer)
            .into_par_iter()
            .map(|o| {
                let mut rng = stream_rng(cfg.seed, "v:outer", &[u_mask, o as u64]);
                // centered outer draw of X_u
                let eta_u: Vec<f64> = (0..nu).map(|_| rng.sample(StandardNormal)).collect();
                let mut xu_c = vec![0.0; nu];
                for i in 0..nu {
                    for t in 0..=i {
                        xu_c[i] += chol_u[(i, t)] * eta_u[t];
                    }
                }
                // conditional mean offset is constant over the inner loop
                let mut offset = vec![0.0; nr];
                for i in 0..nr {
                    let mut v = spec.mean()[rest[i]];
                    for c in 0..nu {
                        v += cg.w[(i, c)] * xu_c[c];
                    }
                    offset[i] = v;
                }
                let mut x = vec![0.0; d];
                for (slot, &i) in u_sorted.iter().enumerate() {
                    x[i] = spec.mean()[i] + xu_c[slot];
                }
                // Welford over the inner conditional draws
                let mut inner_mean = 0.0;
                let mut m2 = 0.0;
                let mut eta = vec![0.0; nr];
                for i in 0..cfg.n_inner {
                    for e in eta.iter_mut() {
                        *e = rng.sample(StandardNormal);
                    }
                    for (slot, &ri) in rest.iter().enumerate() {
                        let mut v = offset[slot];
                        for t in 0..=slot {
                            v += cg.chol[(slot, t)] * eta[t];
                        }
                        x[ri] = v;
                    }
                    let y = model.eval(&x);
                    let delta = y - inner_mean;
                    inner_mean += delta / (i as f64 + 1.0);
                    m2 += delta * (y - inner_mean);
                }
                (inner_mean, m2 / (cfg.n_inner as f64 - 1.0))
            })
            .collect()
    });
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let inner_vars: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let raw = sample_variance(&means) - mean(&inner_vars) / cfg.n_inner as f64;
    // the outer-variance term dominates the error; the correction term's
    // contribution is down by another factor of n_inner
    let se = (variance_se(&means).powi(2)
        + sample_variance(&inner_vars) / (cfg.n_outer as f64 * (cfg.n_inner as f64).powi(2)))
    .sqrt();
    Ok(VarianceEstimate {
        value: raw.max(0.0),
        std_error: se,
        n_evals: (cfg.n_outer as u64) * (cfg.n_inner as u64),
    })
}

fn sample_covariance_with_se(a: &[f64], c: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let ma = mean(a);
    let mc = mean(c);
    let prods: Vec<f64> = a.iter().zip(c).map(|(x, y)| (x - ma) * (y - mc)).collect();
    let cov = prods.iter().sum::<f64>() / (n - 1.0);
    let se = (sample_variance(&prods) / n).sqrt();
    (cov, se)
}

fn jansen_with_se(b: &[f64], c: &[f64]) -> (f64, f64) {
    let n = b.len() as f64;
    let halves: Vec<f64> = b.iter().zip(c).map(|(x, y)| 0.5 * (x - y) * (x - y)).collect();
    (mean(&halves), (sample_variance(&halves) / n).sqrt())
}

/// Exact first-order/total variance of one innovation in the linear case:
/// both collapse to (beta . J)^2 var(Z_j).
pub(crate) fn exact_pair_variance(plan: &ErPlan, beta: &[f64], sigma2_j: f64) -> Result<f64> {
    let dm = &plan.dms[plan.target_block];
    let jac = plan.target_jacobian()?;
    let dot: f64 = dm.block().iter().zip(&jac).map(|(&input, j)| beta[input] * j).sum();
    Ok(dot * dot * sigma2_j)
}

/// Pick-freeze first-order and total variances of the target innovation on
/// the plan's equivalent representation.
///
/// Monte Carlo route: base matrices A and B (streams keyed off the seed
/// alone, so every pair of a report shares them), C equal to B with the
/// target input's lane taken from A. First-order is the sample covariance
/// of g(A) and g(C) (they share only that lane); total is the Jansen half
/// mean square of g(B) - g(C) (they differ only in that lane). Each
/// estimate prices at 2m evaluations; sharing across pairs is accounted
/// where the batched report does it.
pub fn sf_variances(
    model: &ModelHandle,
    spec: &GaussianInputSpec,
    plan: &ErPlan,
    cfg: &EstimatorConfig,
) -> Result<(VarianceEstimate, VarianceEstimate)> {
    model.ensure_arity(spec.dim())?;
    cfg.validate()?;
    if cfg.require_route(model)? {
        let beta = model.linear_coefficients.as_ref().unwrap();
        let v = exact_pair_variance(plan, beta, spec.sigma2(plan.j))?;
        return Ok((VarianceEstimate::exact(v), VarianceEstimate::exact(v)));
    }
    let d = spec.dim();
    let a = SampleMatrix::standard(cfg.seed, "sf:a", cfg.m, d, cfg.antithetic);
    let b = SampleMatrix::standard(cfg.seed, "sf:b", cfg.m, d, cfg.antithetic);
    let c = b.with_lane_from(plan.j, &a);
    let (ga, gb, gc) = with_pool(cfg.threads, || {
        (
            eval_rows(model, spec, &plan.dms, &a),
            eval_rows(model, spec, &plan.dms, &b),
            eval_rows(model, spec, &plan.dms, &c),
        )
    });
    let (fo, fo_se) = sample_covariance_with_se(&ga, &gc);
    let (tot, tot_se) = jansen_with_se(&gb, &gc);
    let evals = 2 * cfg.m as u64;
    Ok((
        VarianceEstimate { value: fo.max(0.0), std_error: fo_se, n_evals: evals },
        VarianceEstimate { value: tot, std_error: tot_se, n_evals: evals },
    ))
}

/// Pick-freeze Sobol' main/total pair for an independent input, evaluated
/// on the default assembly (ascending permutations everywhere).
pub fn independent_pick_freeze(
    model: &ModelHandle,
    spec: &GaussianInputSpec,
    j: usize,
    cfg: &EstimatorConfig,
) -> Result<(VarianceEstimate, VarianceEstimate)> {
    model.ensure_arity(spec.dim())?;
    cfg.validate()?;
    if !spec.is_independent_input(j) {
        return Err(Error::NotIndependentInput(j));
    }
    if cfg.require_route(model)? {
        let beta = model.linear_coefficients.as_ref().unwrap();
        let v = beta[j] * beta[j] * spec.sigma2(j);
        return Ok((VarianceEstimate::exact(v), VarianceEstimate::exact(v)));
    }
    let d = spec.dim();
    let dms = default_dms(spec)?;
    let a = SampleMatrix::standard(cfg.seed, "sf:a", cfg.m, d, cfg.antithetic);
    let b = SampleMatrix::standard(cfg.seed, "sf:b", cfg.m, d, cfg.antithetic);
    let c = b.with_lane_from(j, &a);
    let (ga, gb, gc) = with_pool(cfg.threads, || {
        (
            eval_rows(model, spec, &dms, &a),
            eval_rows(model, spec, &dms, &b),
            eval_rows(model, spec, &dms, &c),
        )
    });
    let (fo, fo_se) = sample_covariance_with_se(&ga, &gc);
    let (tot, tot_se) = jansen_with_se(&gb, &gc);
    let evals = 2 * cfg.m as u64;
    Ok((
        VarianceEstimate { value: fo.max(0.0), std_error: fo_se, n_evals: evals },
        VarianceEstimate { value: tot, std_error: tot_se, n_evals: evals },
    ))
}

/// Total generalized sensitivity of one innovation for a dependency map,
/// with the output-variance trace it normalizes by.
#[derive(Debug, Clone, Copy)]
pub struct GsiEstimate {
    pub gsi_t: f64,
    pub trace_var: f64,
    pub std_error: f64,
    pub n_evals: u64,
}

/// For the Gaussian triangular map both parts are exact: the trace is the
/// sum of marginal variances over block coordinates outside u, and the
/// total index is |J|^2 var(Z_j) over that trace. The Monte Carlo route
/// (path = Mc) exists to cross-check the identity by pick-freeze.
pub fn gsi_total_of_dm(
    dm: &DependencyModel,
    u: &[usize],
    j: usize,
    cfg: &EstimatorConfig,
) -> Result<GsiEstimate> {
    cfg.validate()?;
    let jac = dm.jacobian_column(u, j)?; // validates the prefix
    let p = u.len();
    let dk = dm.dim();
    let trace_var: f64 = (p..dk).map(|pos| dm.innovation_variance(pos)).sum();
    if cfg.path != PathSelect::Mc {
        let j_pos = dm.position_of_input(j).expect("target in block");
        let sigma2_j = dm.innovation_variance(j_pos);
        let norm2: f64 = jac.iter().map(|v| v * v).sum();
        return Ok(GsiEstimate {
            gsi_t: if trace_var > 0.0 { norm2 * sigma2_j / trace_var } else { 0.0 },
            trace_var,
            std_error: 0.0,
            n_evals: 0,
        });
    }
    // pick-freeze on the map itself: no model evaluations involved
    let m = cfg.m;
    let outputs = |xi: &[f64]| -> Vec<f64> {
        // block coordinates outside u, i.e. positions p..dk of the map
        (p..dk)
            .map(|l| {
                let mut v = 0.0;
                for t in 0..=l {
                    v += dm.coeff()[(l, t)] * xi[t];
                }
                v
            })
            .collect()
    };
    let rows: Vec<(Vec<f64>, Vec<f64>)> = with_pool(cfg.threads, || {
        (0..m)
            .into_par_iter()
            .map(|r| {
                let mut rng_a = stream_rng(cfg.seed, "gsi:a", &[r as u64]);
                let mut rng_b = stream_rng(cfg.seed, "gsi:b", &[r as u64]);
                let xi_a: Vec<f64> = (0..dk)
                    .map(|pos| dm.innovation_variance(pos).sqrt() * rng_a.sample::<f64, _>(StandardNormal))
                    .collect();
                let mut xi_c = xi_a.clone();
                for pos in 0..dk {
                    let draw: f64 = rng_b.sample(StandardNormal);
                    if pos == p {
                        xi_c[pos] = dm.innovation_variance(pos).sqrt() * draw;
                    }
                }
                (outputs(&xi_a), outputs(&xi_c))
            })
            .collect()
    });
    let dims = dk - p;
    let mut num_terms = Vec::with_capacity(m);
    for (oa, oc) in &rows {
        let mut s = 0.0;
        for t in 0..dims {
            s += 0.5 * (oa[t] - oc[t]) * (oa[t] - oc[t]);
        }
        num_terms.push(s);
    }
    let mut trace_mc = 0.0;
    let mut trace_parts: Vec<Vec<f64>> = vec![Vec::with_capacity(m); dims];
    for (oa, _) in &rows {
        for t in 0..dims {
            trace_parts[t].push(oa[t]);
        }
    }
    for part in &trace_parts {
        trace_mc += sample_variance(part);
    }
    let num = mean(&num_terms);
    let num_se = (sample_variance(&num_terms) / m as f64).sqrt();
    let gsi = if trace_mc > 0.0 { num / trace_mc } else { 0.0 };
    Ok(GsiEstimate {
        gsi_t: gsi,
        trace_var: trace_mc,
        std_error: if trace_mc > 0.0 { num_se / trace_mc } else { 0.0 },
        n_evals: 0,
    })
}

/// One pick-freeze pair estimate inside a batched report.
#[derive(Debug, Clone)]
pub struct PairEstimate {
    pub j: usize,
    pub u: Vec<usize>,
    pub fo: VarianceEstimate,
    pub tot: VarianceEstimate,
}

/// All pick-freeze quantities of a report computed under full sharing:
/// one pair of base matrices for everything, baseline evaluations shared
/// per canonical permutation, one C matrix per pair serving both its
/// first-order and total estimates.
pub struct PickFreezeBatch {
    pub pairs: Vec<PairEstimate>,
    /// per independent input: (input, first-order, total) on the model itself
    pub independent: Vec<(usize, VarianceEstimate, VarianceEstimate)>,
    /// per dependent block: evaluations attributed to its pairs, baselines
    /// charged per block even where the ascending assembly is shared
    pub per_block_evals: Vec<u64>,
    /// distinct evaluations actually performed for dependent-block pairs
    pub block_evals_total: u64,
    /// distinct evaluations for the independent inputs' estimates
    pub independent_evals: u64,
}

/// Computes every (u, j) pick-freeze pair of every dependent block plus the
/// independent inputs' Sobol' pair, sharing evaluations maximally. The
/// canonical permutation of a pair is (u sorted, j, rest ascending); the
/// all-ascending assembly doubles as the baseline for independent inputs.
pub fn pick_freeze_batch(
    model: &ModelHandle,
    spec: &GaussianInputSpec,
    cfg: &EstimatorConfig,
) -> Result<PickFreezeBatch> {
    model.ensure_arity(spec.dim())?;
    cfg.validate()?;
    let d = spec.dim();
    let part = spec.partition().clone();
    let a = SampleMatrix::standard(cfg.seed, "sf:a", cfg.m, d, cfg.antithetic);
    let b = SampleMatrix::standard(cfg.seed, "sf:b", cfg.m, d, cfg.antithetic);
    let m_evals = cfg.m as u64;

    with_pool(cfg.threads, || {
        // canonical assemblies: key = per-block permutations, ascending
        // everywhere except possibly one block
        let mut keys: Vec<Vec<Vec<usize>>> = Vec::new();
        let mut baselines: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        let mut plans: Vec<(usize, usize, Vec<usize>, usize)> = Vec::new(); // block, j, u, key idx

        let default_key: Vec<Vec<usize>> = part.blocks.clone();
        let key_index = |key: Vec<Vec<usize>>,
                         keys: &mut Vec<Vec<Vec<usize>>>|
         -> usize {
            if let Some(i) = keys.iter().position(|k| *k == key) {
                i
            } else {
                keys.push(key);
                keys.len() - 1
            }
        };

        for (bk, block) in part.blocks.iter().enumerate() {
            for &j in block {
                for u in crate::combinatorics::subsets_excluding(block, j)? {
                    let mut perm = u.clone();
                    perm.push(j);
                    perm.extend(block.iter().copied().filter(|i| *i != j && !u.contains(i)));
                    let mut key = default_key.clone();
                    key[bk] = perm;
                    let ki = key_index(key, &mut keys);
                    plans.push((bk, j, u, ki));
                }
            }
        }
        let default_ki = if part.independent.is_empty() && !part.blocks.is_empty() {
            None
        } else {
            Some(key_index(default_key.clone(), &mut keys))
        };

        // evaluate baselines per key
        let mut dms_per_key: Vec<Vec<DependencyModel>> = Vec::with_capacity(keys.len());
        for key in &keys {
            let dms: Vec<DependencyModel> = part
                .blocks
                .iter()
                .zip(key)
                .map(|(block, perm)| DependencyModel::for_block(spec.covariance(), block, perm))
                .collect::<Result<_>>()?;
            baselines.push((
                eval_rows(model, spec, &dms, &a),
                eval_rows(model, spec, &dms, &b),
            ));
            dms_per_key.push(dms);
        }

        let mut pairs = Vec::with_capacity(plans.len());
        let mut per_block_evals = vec![0u64; part.blocks.len()];
        let mut keys_used_by_block: Vec<Vec<usize>> = vec![Vec::new(); part.blocks.len()];
        for (bk, j, u, ki) in plans {
            let c = b.with_lane_from(j, &a);
            let gc = eval_rows(model, spec, &dms_per_key[ki], &c);
            let (ga, gb) = &baselines[ki];
            let (fo, fo_se) = sample_covariance_with_se(ga, &gc);
            let (tot, tot_se) = jansen_with_se(gb, &gc);
            pairs.push(PairEstimate {
                j,
                u,
                fo: VarianceEstimate { value: fo.max(0.0), std_error: fo_se, n_evals: 2 * m_evals },
                tot: VarianceEstimate { value: tot, std_error: tot_se, n_evals: 2 * m_evals },
            });
            per_block_evals[bk] += m_evals;
            if !keys_used_by_block[bk].contains(&ki) {
                keys_used_by_block[bk].push(ki);
            }
        }
        // charge each block its baselines, even where the ascending assembly
        // is shared with other blocks or the independent inputs
        for (bk, used) in keys_used_by_block.iter().enumerate() {
            per_block_evals[bk] += 2 * m_evals * used.len() as u64;
        }
        let block_evals_total =
            if part.blocks.is_empty() { 0 } else { 2 * m_evals * keys.len() as u64 }
                + m_evals * pairs.len() as u64;

        let mut independent = Vec::new();
        let mut independent_evals = 0u64;
        if !part.independent.is_empty() {
            let ki = default_ki.expect("default assembly present when independents exist");
            let (ga, gb) = &baselines[ki];
            // the default baselines are free for independents whenever a
            // block already evaluated them
            if part.blocks.is_empty() {
                independent_evals += 2 * m_evals;
            }
            for &j in &part.independent {
                let c = b.with_lane_from(j, &a);
                let gc = eval_rows(model, spec, &dms_per_key[ki], &c);
                let (fo, fo_se) = sample_covariance_with_se(ga, &gc);
                let (tot, tot_se) = jansen_with_se(gb, &gc);
                independent.push((
                    j,
                    VarianceEstimate { value: fo.max(0.0), std_error: fo_se, n_evals: 2 * m_evals },
                    VarianceEstimate { value: tot, std_error: tot_se, n_evals: 2 * m_evals },
                ));
                independent_evals += m_evals;
            }
        }
        Ok(PickFreezeBatch {
            pairs,
            independent,
            per_block_evals,
            block_evals_total,
            independent_evals,
        })
    })
}

/// Cost formulas for the three estimation strategies, exact in u128.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostTable {
    /// pick-freeze budget bound per dependent block
    pub c_l: u128,
    /// exhaustive-permutation Shapley double-loop cost
    pub c: u128,
    /// sampled-permutation Shapley double-loop cost
    pub c_prime: u128,
}

pub fn cost_formulas(
    d: u64,
    d_max: u64,
    m: u64,
    n_inner: u64,
    n_outer: u64,
    n_var: u64,
    n_perm: u64,
) -> Result<CostTable> {
    if d == 0 || d_max == 0 || d_max > d {
        return Err(Error::OutOfRange(format!("cost_formulas(d={d}, d_max={d_max})")));
    }
    let binom = crate::combinatorics::binom(d_max - 1, (d_max - 1) / 2)?;
    let c_l = 4u128
        .checked_mul(m as u128)
        .and_then(|v| v.checked_mul(d_max as u128))
        .and_then(|v| v.checked_mul(binom))
        .ok_or(Error::Overflow)?;
    let fact = crate::combinatorics::factorial(d)?;
    let c = (n_inner as u128)
        .checked_mul(n_outer as u128)
        .and_then(|v| v.checked_mul(fact))
        .and_then(|v| v.checked_mul((d - 1) as u128))
        .and_then(|v| v.checked_add(n_var as u128))
        .ok_or(Error::Overflow)?;
    let c_prime = (n_inner as u128)
        .checked_mul(n_outer as u128)
        .and_then(|v| v.checked_mul(n_perm as u128))
        .and_then(|v| v.checked_mul((d - 1) as u128))
        .and_then(|v| v.checked_add(n_var as u128))
        .ok_or(Error::Overflow)?;
    Ok(CostTable { c_l, c, c_prime })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::input::{build_input_spec, register_builtin_model};

    fn spec_for(rho: [f64; 3]) -> GaussianInputSpec {
        build_input_spec(&[0.0; 3], &fixtures::covariance(rho), 1e-10).unwrap()
    }

    fn small_cfg() -> EstimatorConfig {
        EstimatorConfig {
            m: 4000,
            n_inner: 300,
            n_outer: 400,
            n_var: 4000,
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn stream_rng_is_stable_and_distinct() {
        let mut r1 = stream_rng(1, "tag", &[0]);
        let mut r2 = stream_rng(1, "tag", &[0]);
        let a: f64 = r1.sample(StandardNormal);
        let b: f64 = r2.sample(StandardNormal);
        assert_eq!(a, b);
        let mut r3 = stream_rng(1, "tag", &[1]);
        let c: f64 = r3.sample(StandardNormal);
        assert_ne!(a, c);
        let mut r4 = stream_rng(1, "gat", &[0]);
        let e: f64 = r4.sample(StandardNormal);
        assert_ne!(a, e);
    }

    #[test]
    fn output_variance_exact_and_mc_agree() {
        let model = register_builtin_model("linear", &[1.0, 1.0, 1.0]).unwrap();
        let spec = spec_for([0.0, 0.0, 0.0]);
        let exact = output_variance(&model, &spec, &EstimatorConfig::default()).unwrap();
        assert_eq!(exact.value, 18.0);
        assert_eq!(exact.n_evals, 0);

        let mut cfg = small_cfg();
        cfg.path = PathSelect::Mc;
        let mc = output_variance(&model, &spec, &cfg).unwrap();
        assert!((mc.value - 18.0).abs() <= 3.0 * mc.std_error, "{mc:?}");
        assert_eq!(mc.n_evals, 4000);
    }

    #[test]
    fn null_model_is_degenerate() {
        let model = register_builtin_model("linear", &[0.0, 0.0, 0.0]).unwrap();
        let spec = spec_for([0.5, 0.5, 0.5]);
        assert!(matches!(
            output_variance(&model, &spec, &EstimatorConfig::default()),
            Err(Error::DegenerateVariance)
        ));
    }

    #[test]
    fn conditional_variance_exact_examples() {
        let model = register_builtin_model("linear", &[1.0, 1.0, 1.0]).unwrap();
        let cfg = EstimatorConfig::default();
        // independence: V({0}) = sigma_1^2
        let v = conditional_variance(&model, &spec_for([0.0, 0.0, 0.0]), &[0], &cfg).unwrap();
        assert!((v.value - 2.0).abs() < 1e-12);
        // empty set convention
        let v0 = conditional_variance(&model, &spec_for([0.5, 0.5, 0.5]), &[], &cfg).unwrap();
        assert_eq!(v0.value, 0.0);
        // perfect correlation: any nonempty set determines the output
        let spec1 = spec_for([1.0, 1.0, 1.0]);
        for u in [vec![0], vec![1], vec![0, 2]] {
            let v = conditional_variance(&model, &spec1, &u, &cfg).unwrap();
            assert!((v.value - 50.0).abs() < 1e-9, "u={u:?}: {}", v.value);
        }
    }

    #[test]
    fn conditional_variance_mc_matches_exact() {
        let model = register_builtin_model("linear", &[1.0, 1.0, 1.0]).unwrap();
        let spec = spec_for([0.25, 0.5, 0.75]);
        let exact = conditional_variance(&model, &spec, &[1], &EstimatorConfig::default())
            .unwrap()
            .value;
        let mut cfg = small_cfg();
        cfg.path = PathSelect::Mc;
        let mc = conditional_variance(&model, &spec, &[1], &cfg).unwrap();
        assert!(
            (mc.value - exact).abs() <= 3.0 * mc.std_error,
            "exact {exact}, mc {} pm {}",
            mc.value,
            mc.std_error
        );
        assert_eq!(mc.n_evals, 300 * 400);
    }

    #[test]
    fn sf_variances_exact_equal_fo_tot() {
        let model = register_builtin_model("linear", &[1.0, 1.0, 1.0]).unwrap();
        let spec = spec_for([0.5, 0.5, 0.5]);
        let plan = crate::dependency::ErPlan::new(&spec, 2, &[0, 1]).unwrap();
        let (fo, tot) = sf_variances(&model, &spec, &plan, &EstimatorConfig::default()).unwrap();
        assert_eq!(fo.value, tot.value);
        // additive representation: the variance is the squared coefficient
        // of Z_3 times its variance
        let jac = plan.target_jacobian().unwrap();
        let expect = jac[2] * jac[2] * 8.0;
        assert!((fo.value - expect).abs() < 1e-12);
    }

    #[test]
    fn sf_variances_mc_bracket_exact() {
        let model = register_builtin_model("linear", &[1.0, 1.0, 1.0]).unwrap();
        let spec = spec_for([0.25, 0.5, 0.75]);
        let plan = crate::dependency::ErPlan::new(&spec, 1, &[0]).unwrap();
        let exact =
            sf_variances(&model, &spec, &plan, &EstimatorConfig::default()).unwrap().0.value;
        let mut cfg = small_cfg();
        cfg.path = PathSelect::Mc;
        let (fo, tot) = sf_variances(&model, &spec, &plan, &cfg).unwrap();
        assert!((fo.value - exact).abs() <= 3.0 * fo.std_error);
        assert!((tot.value - exact).abs() <= 3.0 * tot.std_error);
        assert_eq!(fo.n_evals, 8000);
    }

    #[test]
    fn degenerate_innovation_has_zero_pair_variance() {
        let model = register_builtin_model("linear", &[1.0, 1.0, 1.0]).unwrap();
        let spec = spec_for([1.0, 1.0, 1.0]);
        let plan = crate::dependency::ErPlan::new(&spec, 1, &[0]).unwrap();
        let (fo, tot) = sf_variances(&model, &spec, &plan, &EstimatorConfig::default()).unwrap();
        assert_eq!(fo.value, 0.0);
        assert_eq!(tot.value, 0.0);
    }

    #[test]
    fn gsi_exact_identity_and_mc_crosscheck() {
        let spec = spec_for([0.25, 0.5, 0.75]);
        let dm = crate::dependency::DependencyModel::for_block(
            spec.covariance(),
            &[0, 1, 2],
            &[0, 1, 2],
        )
        .unwrap();
        let cfg = EstimatorConfig::default();
        let g = gsi_total_of_dm(&dm, &[0], 1, &cfg).unwrap();
        let jac = dm.jacobian_column(&[0], 1).unwrap();
        let norm2: f64 = jac.iter().map(|v| v * v).sum();
        assert!((g.trace_var - 16.0).abs() < 1e-12);
        assert!((g.gsi_t - norm2 * 8.0 / 16.0).abs() < 1e-12);
        assert!(g.gsi_t >= 0.0 && g.gsi_t <= 1.0);

        let mut mc_cfg = small_cfg();
        mc_cfg.m = 20000;
        mc_cfg.path = PathSelect::Mc;
        let mc = gsi_total_of_dm(&dm, &[0], 1, &mc_cfg).unwrap();
        assert!(
            (mc.gsi_t - g.gsi_t).abs() <= 3.0 * mc.std_error + 0.02,
            "exact {} mc {} pm {}",
            g.gsi_t,
            mc.gsi_t,
            mc.std_error
        );
    }

    #[test]
    fn batch_eval_counts_hit_the_budget() {
        let model = register_builtin_model("additive-nonlinear", &[1.0, 1.0, 1.0]).unwrap();
        let mut cfg = small_cfg();
        cfg.m = 512;
        cfg.path = PathSelect::Mc;
        // single block of three: 6 assemblies * 2m + 12 pairs * m = 24m
        let batch = pick_freeze_batch(&model, &spec_for([0.5, 0.5, 0.5]), &cfg).unwrap();
        assert_eq!(batch.pairs.len(), 12);
        assert_eq!(batch.per_block_evals, vec![24 * 512]);
        assert_eq!(batch.block_evals_total, 24 * 512);
        assert_eq!(batch.independent_evals, 0);

        // pair block + one independent: block 8m, independent m
        let batch = pick_freeze_batch(&model, &spec_for([0.0, 0.6, 0.0]), &cfg).unwrap();
        assert_eq!(batch.pairs.len(), 4);
        assert_eq!(batch.per_block_evals, vec![8 * 512]);
        assert_eq!(batch.block_evals_total, 8 * 512);
        assert_eq!(batch.independent_evals, 512);

        // fully independent: default baselines 2m + one C per input
        let batch = pick_freeze_batch(&model, &spec_for([0.0, 0.0, 0.0]), &cfg).unwrap();
        assert!(batch.pairs.is_empty());
        assert_eq!(batch.block_evals_total, 0);
        assert_eq!(batch.independent_evals, 2 * 512 + 3 * 512);
    }

    #[test]
    fn cost_formula_examples() {
        let t = cost_formulas(3, 3, 100, 100, 100, 100, 500).unwrap();
        assert_eq!(t.c_l, 2400);
        assert_eq!(t.c, 100 * 100 * 6 * 2 + 100);
        assert_eq!(t.c_prime, 100 * 100 * 500 * 2 + 100);
        // d = 1: no interactions, C collapses to the variance cost
        let t = cost_formulas(1, 1, 100, 100, 100, 77, 500).unwrap();
        assert_eq!(t.c, 77);
        assert_eq!(t.c_l, 400);
        assert!(matches!(
            cost_formulas(40, 40, u64::MAX, u64::MAX, u64::MAX, 1, 1),
            Err(Error::Overflow)
        ));
    }

    #[test]
    fn identical_seed_same_estimates_any_thread_count() {
        let model = register_builtin_model("additive-nonlinear", &[1.0, 2.0, 0.5]).unwrap();
        let spec = spec_for([0.25, 0.5, 0.75]);
        let mut cfg = small_cfg();
        cfg.m = 600;
        cfg.n_inner = 50;
        cfg.n_outer = 60;
        cfg.path = PathSelect::Mc;
        cfg.threads = Some(1);
        let v1 = conditional_variance(&model, &spec, &[0, 2], &cfg).unwrap();
        let plan = crate::dependency::ErPlan::new(&spec, 1, &[]).unwrap();
        let s1 = sf_variances(&model, &spec, &plan, &cfg).unwrap();
        cfg.threads = Some(4);
        let v4 = conditional_variance(&model, &spec, &[0, 2], &cfg).unwrap();
        let s4 = sf_variances(&model, &spec, &plan, &cfg).unwrap();
        assert_eq!(v1.value.to_bits(), v4.value.to_bits());
        assert_eq!(s1.0.value.to_bits(), s4.0.value.to_bits());
        assert_eq!(s1.1.value.to_bits(), s4.1.value.to_bits());
    }
}
