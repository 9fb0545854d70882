//! Dependency models for Gaussian blocks: a triangular map expressing a
//! dependent block as a function of its first input and independent
//! innovation variables, one innovation per remaining input.
//!
//! Conventions: the map works in centered coordinates; innovation m carries
//! the marginal variance of the input it represents, so row l reads
//! X_{w_l} = sum_m coeff[l][m] * xi_m with xi_1 = X_{w_1} and
//! xi_m = Z_{w_m} ~ N(0, sigma_{w_m}^2). This makes coeff[0][0] = 1 and ties
//! every derivative-bound factor to the represented input's own scale.

use crate::error::{Error, Result};
use crate::input::{GaussianInputSpec, ModelHandle};
use crate::linalg::semidef_cholesky;
use nalgebra::DMatrix;

/// Conditional variances below this fraction of the marginal variance count
/// as degenerate: the innovation is dropped and its column zeroed.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DependencyModel {
    block: Vec<usize>,
    permutation: Vec<usize>,
    coeff: DMatrix<f64>,
    innovation_variances: Vec<f64>,
    degenerate: Vec<bool>,
}

impl DependencyModel {
    /// Factorizes an explicit index set of `cov` over the given ordering.
    /// This is the working constructor; [`build_dm`] adds the check that the
    /// set is one of a spec's dependent blocks.
    pub fn for_block(
        cov: &DMatrix<f64>,
        block: &[usize],
        permutation: &[usize],
    ) -> Result<Self> {
        let dk = block.len();
        if dk < 2 {
            return Err(Error::BlockTooSmall(dk));
        }
        let mut sorted_block = block.to_vec();
        sorted_block.sort_unstable();
        sorted_block.dedup();
        if sorted_block.len() != dk || sorted_block.iter().any(|&i| i >= cov.nrows()) {
            return Err(Error::PermutationInvalid);
        }
        let mut sorted_perm = permutation.to_vec();
        sorted_perm.sort_unstable();
        if sorted_perm != sorted_block {
            return Err(Error::PermutationInvalid);
        }
        let permuted = DMatrix::from_fn(dk, dk, |l, m| cov[(permutation[l], permutation[m])]);
        let (c, mut degenerate) = semidef_cholesky(&permuted, DEGENERACY_THRESHOLD);
        let mut coeff = DMatrix::<f64>::zeros(dk, dk);
        let mut innovation_variances = Vec::with_capacity(dk);
        for m in 0..dk {
            let var = cov[(permutation[m], permutation[m])];
            innovation_variances.push(var);
            if var <= 0.0 {
                degenerate[m] = true;
                continue; // zero-variance input: column stays zero
            }
            let s = var.sqrt();
            for l in m..dk {
                coeff[(l, m)] = c[(l, m)] / s;
            }
        }
        Ok(DependencyModel {
            block: sorted_block,
            permutation: permutation.to_vec(),
            coeff,
            innovation_variances,
            degenerate,
        })
    }

    /// Block input indices in ascending order.
    pub fn block(&self) -> &[usize] {
        &self.block
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn dim(&self) -> usize {
        self.block.len()
    }

    pub fn coeff(&self) -> &DMatrix<f64> {
        &self.coeff
    }

    /// Marginal variance carried by the innovation at this position.
    pub fn innovation_variance(&self, position: usize) -> f64 {
        self.innovation_variances[position]
    }

    pub fn degenerate_mask(&self) -> &[bool] {
        &self.degenerate
    }

    pub fn position_of_input(&self, j: usize) -> Option<usize> {
        self.permutation.iter().position(|&p| p == j)
    }

    /// Max abs deviation of coeff * diag(innovation variances) * coeff^T
    /// from the permuted block covariance it was built from.
    pub fn pushforward_error(&self, cov: &DMatrix<f64>) -> f64 {
        let dk = self.dim();
        let d = DMatrix::from_fn(dk, dk, |l, m| {
            if l == m { self.innovation_variances[l] } else { 0.0 }
        });
        let prod = &self.coeff * d * self.coeff.transpose();
        let mut err = 0.0f64;
        for l in 0..dk {
            for m in 0..dk {
                err = err.max((prod[(l, m)] - cov[(self.permutation[l], self.permutation[m])]).abs());
            }
        }
        err
    }

    /// Applies the triangular map in centered coordinates: given the first
    /// input's (centered) value and the innovation values for positions
    /// 2..d_k, returns the centered values of X_{w_2}..X_{w_dk}.
    pub fn apply(&self, x_first: f64, z: &[f64]) -> Result<Vec<f64>> {
        let dk = self.dim();
        if z.len() != dk - 1 {
            return Err(Error::LengthMismatch { expected: dk - 1, got: z.len() });
        }
        let mut out = Vec::with_capacity(dk - 1);
        for l in 1..dk {
            let mut v = self.coeff[(l, 0)] * x_first;
            for m in 1..=l {
                v += self.coeff[(l, m)] * z[m - 1];
            }
            out.push(v);
        }
        Ok(out)
    }

    /// The constant Jacobian column d X_block / d Z_j for the conditioning
    /// prefix u: zero at u's coordinates, the rescaled factor column
    /// elsewhere, ordered by ascending input index within the block.
    pub fn jacobian_column(&self, u: &[usize], j: usize) -> Result<Vec<f64>> {
        let p = u.len();
        if p >= self.dim() || self.permutation[p] != j {
            return Err(Error::InconsistentPrefix);
        }
        let mut prefix: Vec<usize> = self.permutation[..p].to_vec();
        prefix.sort_unstable();
        let mut u_sorted = u.to_vec();
        u_sorted.sort_unstable();
        if prefix != u_sorted {
            return Err(Error::InconsistentPrefix);
        }
        let mut out = vec![0.0; self.dim()];
        for l in p..self.dim() {
            let input = self.permutation[l];
            let slot = self.block.binary_search(&input).expect("input in block");
            out[slot] = self.coeff[(l, p)];
        }
        Ok(out)
    }
}

/// Builds the dependency model for one of the spec's dependent blocks.
pub fn build_dm(
    spec: &GaussianInputSpec,
    block: &[usize],
    permutation: &[usize],
) -> Result<DependencyModel> {
    let mut sorted = block.to_vec();
    sorted.sort_unstable();
    if !spec.partition().blocks.iter().any(|b| *b == sorted) {
        return Err(Error::NotADependentBlock);
    }
    DependencyModel::for_block(spec.covariance(), &sorted, permutation)
}

/// One equivalent-representation setup: a dependency model per dependent
/// block, with the target block's permutation arranged as
/// (u sorted, j, rest ascending). Positions select which arguments play the
/// conditioning role when the composed model is evaluated.
#[derive(Debug, Clone)]
pub struct ErPlan {
    pub dms: Vec<DependencyModel>,
    pub target_block: usize,
    pub u: Vec<usize>,
    pub j: usize,
}

impl ErPlan {
    pub fn new(spec: &GaussianInputSpec, j: usize, u: &[usize]) -> Result<Self> {
        let Some(k) = spec.partition().block_of(j) else {
            return Err(Error::NotADependentBlock);
        };
        let block = &spec.partition().blocks[k];
        let mut u_sorted = u.to_vec();
        u_sorted.sort_unstable();
        u_sorted.dedup();
        if u_sorted.len() != u.len() || u_sorted.contains(&j) {
            return Err(Error::InconsistentPrefix);
        }
        if u_sorted.iter().any(|i| !block.contains(i)) {
            return Err(Error::InconsistentPrefix);
        }
        let mut dms = Vec::with_capacity(spec.partition().blocks.len());
        for (bk, b) in spec.partition().blocks.iter().enumerate() {
            let perm: Vec<usize> = if bk == k {
                let mut p = u_sorted.clone();
                p.push(j);
                p.extend(b.iter().copied().filter(|i| *i != j && !u_sorted.contains(i)));
                p
            } else {
                b.clone()
            };
            dms.push(DependencyModel::for_block(spec.covariance(), b, &perm)?);
        }
        Ok(ErPlan { dms, target_block: k, u: u_sorted, j })
    }

    /// The target pair's Jacobian column.
    pub fn target_jacobian(&self) -> Result<Vec<f64>> {
        self.dms[self.target_block].jacobian_column(&self.u, self.j)
    }
}

/// Evaluates the composed model: assembles the full input vector from the
/// independent inputs' values, each block's first-input value, and each
/// block's innovation values, then evaluates the model. First-input values
/// are raw (mean included); innovations are centered by definition.
pub fn evaluate_er(
    model: &ModelHandle,
    spec: &GaussianInputSpec,
    plan: &ErPlan,
    x_pi1: &[f64],
    x_first_per_block: &[f64],
    z_per_block: &[Vec<f64>],
) -> Result<f64> {
    model.ensure_arity(spec.dim())?;
    let part = spec.partition();
    if x_pi1.len() != part.independent.len() {
        return Err(Error::LengthMismatch { expected: part.independent.len(), got: x_pi1.len() });
    }
    if x_first_per_block.len() != plan.dms.len() || z_per_block.len() != plan.dms.len() {
        return Err(Error::LengthMismatch {
            expected: plan.dms.len(),
            got: x_first_per_block.len().min(z_per_block.len()),
        });
    }
    let mut x = vec![0.0; spec.dim()];
    for (slot, &input) in part.independent.iter().enumerate() {
        x[input] = x_pi1[slot];
    }
    for (k, dm) in plan.dms.iter().enumerate() {
        let w = dm.permutation();
        let first = w[0];
        let centered_first = x_first_per_block[k] - spec.mean()[first];
        x[first] = x_first_per_block[k];
        let rest = dm.apply(centered_first, &z_per_block[k])?;
        for (l, &input) in w.iter().enumerate().skip(1) {
            x[input] = spec.mean()[input] + rest[l - 1];
        }
    }
    Ok(model.eval(&x))
}
