//! Input-side domain types: the validated Gaussian input specification with
//! its independence structure, and the registry of real-valued models.

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_range;
use nalgebra::DMatrix;
use std::sync::Arc;

/// Default relative cutoff below which a correlation counts as zero when
/// detecting the independence structure.
pub const CORRELATION_ZERO_THRESHOLD: f64 = 1e-12;

/// Default relative eigenvalue floor: a covariance passes the semidefinite
/// check when its smallest eigenvalue is not below -tol * largest.
pub const DEFAULT_PSD_TOLERANCE: f64 = 1e-10;

/// Partition of input indices into the set of mutually independent inputs
/// and the maximal dependent blocks (each sorted, blocks ordered by their
/// smallest member).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub independent: Vec<usize>,
    pub blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Index of the dependent block containing `j`, if any.
    pub fn block_of(&self, j: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(&j))
    }
}

/// Validated joint Gaussian input: mean, covariance (symmetrized after the
/// symmetry check), and the detected independence partition.
#[derive(Debug, Clone)]
pub struct GaussianInputSpec {
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    partition: Partition,
    psd_tolerance: f64,
}

impl GaussianInputSpec {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn psd_tolerance(&self) -> f64 {
        self.psd_tolerance
    }

    /// Marginal variance of input j.
    pub fn sigma2(&self, j: usize) -> f64 {
        self.cov[(j, j)]
    }

    pub fn is_independent_input(&self, j: usize) -> bool {
        self.partition.independent.contains(&j)
    }
}

/// Builds and validates a [`GaussianInputSpec`]; the partition is computed,
/// not supplied. Rank-deficient covariances are accepted (perfect
/// correlation is a supported regime).
pub fn build_input_spec(
    mean: &[f64],
    covariance: &[Vec<f64>],
    psd_tolerance: f64,
) -> Result<GaussianInputSpec> {
    let d = mean.len();
    if d == 0 || covariance.len() != d {
        return Err(Error::DimensionMismatch { expected: d.max(1), got: covariance.len() });
    }
    for row in covariance {
        if row.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: row.len() });
        }
    }
    let raw = DMatrix::from_fn(d, d, |i, j| covariance[i][j]);
    for i in 0..d {
        for j in i + 1..d {
            let scale = (raw[(i, i)].abs() * raw[(j, j)].abs()).sqrt() + raw[(i, j)].abs();
            if (raw[(i, j)] - raw[(j, i)]).abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::AsymmetricCovariance(i, j));
            }
        }
    }
    let cov = DMatrix::from_fn(d, d, |i, j| 0.5 * (raw[(i, j)] + raw[(j, i)]));
    let (lo, hi) = sym_eigen_range(&cov);
    if lo < -psd_tolerance * hi.max(0.0) && lo < 0.0 {
        return Err(Error::NotPositiveSemidefinite(lo));
    }
    let partition = detect_blocks(&cov, CORRELATION_ZERO_THRESHOLD);
    Ok(GaussianInputSpec { mean: mean.to_vec(), cov, partition, psd_tolerance })
}

/// Connected components of the nonzero-correlation graph. Singletons (and
/// zero-variance inputs, which have no defined correlation) land in the
/// independent set; components of size two or more become dependent blocks
/// ordered by smallest member.
pub fn detect_blocks(cov: &DMatrix<f64>, zero_threshold: f64) -> Partition {
    let d = cov.nrows();
    let linked = |i: usize, j: usize| -> bool {
        let vi = cov[(i, i)];
        let vj = cov[(j, j)];
        if vi <= 0.0 || vj <= 0.0 {
            return false;
        }
        cov[(i, j)].abs() > zero_threshold * (vi * vj).sqrt()
    };
    let mut seen = vec![false; d];
    let mut independent = Vec::new();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for start in 0..d {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut queue = vec![start];
        while let Some(i) = queue.pop() {
            for j in 0..d {
                if !seen[j] && i != j && linked(i, j) {
                    seen[j] = true;
                    comp.push(j);
                    queue.push(j);
                }
            }
        }
        comp.sort_unstable();
        if comp.len() == 1 {
            independent.push(comp[0]);
        } else {
            blocks.push(comp);
        }
    }
    independent.sort_unstable();
    blocks.sort_by_key(|b| b[0]);
    Partition { independent, blocks }
}

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A registered real-valued model of d inputs. Evaluators must be pure;
/// everything here is immutable and cheap to clone across workers.
#[derive(Clone)]
pub struct ModelHandle {
    pub name: String,
    pub arity: usize,
    evaluator: Arc<EvalFn>,
    gradient: Option<Arc<GradFn>>,
    /// per-input sup of |dM/dx_l| over the whole domain, when known
    pub partial_bounds: Option<Vec<f64>>,
    /// per-input coefficients c_l such that the composed block map's
    /// gradient norm is bounded by the l2 norm of c over the block
    pub block_gradient_coeffs: Option<Vec<f64>>,
    /// set only when the model is exactly linear in its inputs
    pub linear_coefficients: Option<Vec<f64>>,
}

impl std::fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelHandle")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("has_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl ModelHandle {
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.arity);
        (self.evaluator)(x)
    }

    pub fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    /// Extension point for host-defined models.
    pub fn custom(
        name: impl Into<String>,
        arity: usize,
        evaluator: Arc<EvalFn>,
        gradient: Option<Arc<GradFn>>,
        partial_bounds: Option<Vec<f64>>,
        block_gradient_coeffs: Option<Vec<f64>>,
    ) -> Self {
        ModelHandle {
            name: name.into(),
            arity,
            evaluator,
            gradient,
            partial_bounds,
            block_gradient_coeffs,
            linear_coefficients: None,
        }
    }

    /// Copy that hides the linear structure, forcing estimators and bounds
    /// onto their general dispatch.
    pub fn without_linear_coefficients(&self) -> ModelHandle {
        let mut m = self.clone();
        m.linear_coefficients = None;
        m
    }

    /// Errors unless the model's arity matches the input dimension.
    pub fn ensure_arity(&self, d: usize) -> Result<()> {
        if self.arity != d {
            return Err(Error::ParamLengthMismatch { expected: d, got: self.arity });
        }
        Ok(())
    }
}

/// Builtin registry: `linear` (beta . x), `product` (prod of beta_l x_l),
/// and `additive-nonlinear` (sum of beta_l sin(x_l)). Params are the beta
/// vector; its length fixes the arity.
pub fn register_builtin_model(name: &str, params: &[f64]) -> Result<ModelHandle> {
    if params.is_empty() {
        return Err(Error::ParamLengthMismatch { expected: 1, got: 0 });
    }
    let beta = params.to_vec();
    let d = beta.len();
    let abs_beta: Vec<f64> = beta.iter().map(|b| b.abs()).collect();
    match name {
        "linear" => {
            let b = beta.clone();
            let g = beta.clone();
            Ok(ModelHandle {
                name: name.to_string(),
                arity: d,
                evaluator: Arc::new(move |x: &[f64]| {
                    x.iter().zip(&b).map(|(xi, bi)| xi * bi).sum()
                }),
                gradient: Some(Arc::new(move |_x: &[f64]| g.clone())),
                partial_bounds: Some(abs_beta.clone()),
                block_gradient_coeffs: Some(abs_beta),
                linear_coefficients: Some(beta),
            })
        }
        "product" => {
            let b = beta.clone();
            let bg = beta.clone();
            Ok(ModelHandle {
                name: name.to_string(),
                arity: d,
                evaluator: Arc::new(move |x: &[f64]| {
                    x.iter().zip(&b).map(|(xi, bi)| xi * bi).product()
                }),
                gradient: Some(Arc::new(move |x: &[f64]| {
                    (0..bg.len())
                        .map(|j| {
                            bg[j]
                                * x.iter()
                                    .zip(&bg)
                                    .enumerate()
                                    .filter(|(l, _)| *l != j)
                                    .map(|(_, (xi, bi))| xi * bi)
                                    .product::<f64>()
                        })
                        .collect()
                })),
                // unbounded partials: no closed-form derivative bounds
                partial_bounds: None,
                block_gradient_coeffs: None,
                linear_coefficients: None,
            })
        }
        "additive-nonlinear" => {
            let b = beta.clone();
            let bg = beta.clone();
            Ok(ModelHandle {
                name: name.to_string(),
                arity: d,
                evaluator: Arc::new(move |x: &[f64]| {
                    x.iter().zip(&b).map(|(xi, bi)| bi * xi.sin()).sum()
                }),
                gradient: Some(Arc::new(move |x: &[f64]| {
                    x.iter().zip(&bg).map(|(xi, bi)| bi * xi.cos()).collect()
                })),
                partial_bounds: Some(abs_beta.clone()),
                block_gradient_coeffs: Some(abs_beta),
                linear_coefficients: None,
            })
        }
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cov3(rho12: f64, rho13: f64, rho23: f64) -> Vec<Vec<f64>> {
        let s = [2.0f64, 8.0, 8.0];
        let r = [[1.0, rho12, rho13], [rho12, 1.0, rho23], [rho13, rho23, 1.0]];
        (0..3)
            .map(|i| (0..3).map(|j| r[i][j] * (s[i] * s[j]).sqrt()).collect())
            .collect()
    }

    #[test]
    fn builds_independent_spec() {
        let spec = build_input_spec(&[0.0; 3], &cov3(0.0, 0.0, 0.0), 1e-10).unwrap();
        assert_eq!(spec.partition().independent, vec![0, 1, 2]);
        assert!(spec.partition().blocks.is_empty());
    }

    #[test]
    fn detects_single_block_and_mixed() {
        let spec = build_input_spec(&[0.0; 3], &cov3(0.5, 0.5, 0.5), 1e-10).unwrap();
        assert_eq!(spec.partition().blocks, vec![vec![0, 1, 2]]);
        assert!(spec.partition().independent.is_empty());

        let spec = build_input_spec(&[0.0; 3], &cov3(0.0, 0.6, 0.0), 1e-10).unwrap();
        assert_eq!(spec.partition().independent, vec![1]);
        assert_eq!(spec.partition().blocks, vec![vec![0, 2]]);
    }

    #[test]
    fn rejects_asymmetry() {
        let mut cov = cov3(0.5, 0.5, 0.5);
        cov[0][1] = 0.5 * (2.0f64 * 8.0).sqrt();
        cov[1][0] = 0.49999 * (2.0f64 * 8.0).sqrt();
        assert!(matches!(
            build_input_spec(&[0.0; 3], &cov, 1e-10),
            Err(Error::AsymmetricCovariance(0, 1))
        ));
    }

    #[test]
    fn rejects_indefinite_accepts_rank_deficient() {
        // rho pushed beyond valid range: eigenvalue dips negative
        let bad = cov3(0.99, 0.99, -0.8);
        assert!(matches!(
            build_input_spec(&[0.0; 3], &bad, 1e-10),
            Err(Error::NotPositiveSemidefinite(_))
        ));
        // perfect correlation: rank one, accepted
        let spec = build_input_spec(&[0.0; 3], &cov3(1.0, 1.0, 1.0), 1e-10).unwrap();
        assert_eq!(spec.partition().blocks, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn partition_stable_under_relabeling() {
        let cov = cov3(0.0, 0.6, 0.0);
        // swap inputs 0 and 1 in the covariance
        let perm = [1usize, 0, 2];
        let swapped: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| cov[perm[i]][perm[j]]).collect())
            .collect();
        let p = detect_blocks(&DMatrix::from_fn(3, 3, |i, j| swapped[i][j]), 1e-12);
        // block {0,2} became {1,2}, singleton {1} became {0}
        assert_eq!(p.independent, vec![0]);
        assert_eq!(p.blocks, vec![vec![1, 2]]);
    }

    #[test]
    fn builtin_values_and_gradients() {
        let lin = register_builtin_model("linear", &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(lin.eval(&[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(lin.grad(&[9.0, 9.0, 9.0]).unwrap(), vec![1.0, 1.0, 1.0]);

        let null = register_builtin_model("linear", &[0.0, 0.0]).unwrap();
        assert_eq!(null.eval(&[5.0, -7.0]), 0.0);

        let prod = register_builtin_model("product", &[1.0, 1.0]).unwrap();
        assert_eq!(prod.eval(&[2.0, 3.0]), 6.0);

        assert!(matches!(
            register_builtin_model("cubic", &[1.0]),
            Err(Error::UnknownModel(_))
        ));
        assert!(matches!(
            register_builtin_model("linear", &[]),
            Err(Error::ParamLengthMismatch { .. })
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let models = [
            register_builtin_model("linear", &[0.7, -1.3, 2.0]).unwrap(),
            register_builtin_model("product", &[1.1, 0.9, -0.5]).unwrap(),
            register_builtin_model("additive-nonlinear", &[1.0, 2.0, -0.4]).unwrap(),
        ];
        let points = [[0.3, -1.2, 0.8], [1.7, 0.4, -0.9], [-0.2, 2.1, 1.3]];
        for m in &models {
            for p in &points {
                let g = m.grad(p).unwrap();
                for j in 0..3 {
                    let h = 1e-5 * p[j].abs().max(1.0);
                    let mut hi = *p;
                    let mut lo = *p;
                    hi[j] += h;
                    lo[j] -= h;
                    let fd = (m.eval(&hi) - m.eval(&lo)) / (2.0 * h);
                    let scale = g[j].abs().max(1.0);
                    assert!(
                        (g[j] - fd).abs() <= 1e-4 * scale,
                        "{} d{}: {} vs {}",
                        m.name,
                        j,
                        g[j],
                        fd
                    );
                }
            }
        }
    }
}
