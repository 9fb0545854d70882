//! Subset and permutation machinery: binomials, Shapley weights, the
//! symmetric replication counts for position-balanced permutation designs,
//! and a generalized hockey-stick identity kept around as a checkable
//! function because two different index normalizations rely on it.
//!
//! Counts that can leave u64 territory (lcm of binomials does so quickly)
//! use arbitrary precision; everything else is checked u128 that fails
//! loudly instead of wrapping.

use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_integer::Integer;

/// Binomial coefficient as checked u128.
pub fn binom(n: u64, k: u64) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        // exact at every step: C(n, i) is an integer
        acc = acc
            .checked_mul((n - k + i) as u128)
            .ok_or(Error::Overflow)?
            / i as u128;
    }
    Ok(acc)
}

fn binom_big(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 1..=k {
        acc = acc * BigUint::from(n - k + i) / BigUint::from(i);
    }
    acc
}

/// Exact nonnegative rational with just enough arithmetic for the identity
/// checks below.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frac {
    pub num: BigUint,
    pub den: BigUint,
}

impl Frac {
    pub fn new(num: BigUint, den: BigUint) -> Self {
        assert!(den != BigUint::from(0u32), "zero denominator");
        let g = num.gcd(&den);
        Frac { num: num / &g, den: den / g }
    }

    pub fn from_ints(num: u64, den: u64) -> Self {
        Self::new(BigUint::from(num), BigUint::from(den))
    }

    pub fn add(&self, other: &Frac) -> Frac {
        let num = &self.num * &other.den + &other.num * &self.den;
        let den = &self.den * &other.den;
        Frac::new(num, den)
    }

    pub fn mul(&self, other: &Frac) -> Frac {
        Frac::new(&self.num * &other.num, &self.den * &other.den)
    }

    pub fn to_f64(&self) -> f64 {
        // safe for the small reduced fractions used here
        biguint_f64(&self.num) / biguint_f64(&self.den)
    }
}

fn biguint_f64(x: &BigUint) -> f64 {
    x.to_string().parse::<f64>().unwrap_or(f64::INFINITY)
}

/// Shapley coalition weight 1/(d * C(d-1, s)) for a coalition of size s,
/// both as an exact unit fraction and as f64.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapleyWeight {
    /// exact denominator; the numerator is 1
    pub denominator: u128,
    pub value: f64,
}

pub fn shapley_weight(d: u64, s: u64) -> Result<ShapleyWeight> {
    if d == 0 || s > d - 1 {
        return Err(Error::OutOfRange(format!("shapley_weight(d={d}, s={s})")));
    }
    let den = (d as u128).checked_mul(binom(d - 1, s)?).ok_or(Error::Overflow)?;
    Ok(ShapleyWeight { denominator: den, value: 1.0 / den as f64 })
}

/// All subsets of `ground` that exclude `j`, ordered by size then
/// lexicographically (elements compared in ascending order). Includes the
/// empty set and the full complement: 2^(|ground|-1) subsets.
pub fn subsets_excluding(ground: &[usize], j: usize) -> Result<Vec<Vec<usize>>> {
    if !ground.contains(&j) {
        return Err(Error::IndexNotInGround(j));
    }
    if ground.len() > 20 {
        return Err(Error::BlockTooLarge(ground.len()));
    }
    let mut rest: Vec<usize> = ground.iter().copied().filter(|&g| g != j).collect();
    rest.sort_unstable();
    let n = rest.len();
    let mut out = Vec::with_capacity(1usize << n);
    for size in 0..=n {
        combinations_into(&rest, size, &mut out);
    }
    Ok(out)
}

// lexicographic k-combinations of a sorted slice, appended to out
fn combinations_into(items: &[usize], k: usize, out: &mut Vec<Vec<usize>>) {
    let n = items.len();
    if k == 0 {
        out.push(Vec::new());
        return;
    }
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        // advance the rightmost index that can still move
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for t in i + 1..k {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

/// Position-balanced permutation design for a set of dependent blocks.
///
/// `r0[k]` is the per-block minimum d_k * C(d_k-1, floor((d_k-1)/2))
/// (the bottleneck position), `r_min_s` the least common multiple of
/// d_k * C(d_k-1, p-1) over all blocks and positions, and `lambda[k][p-1]`
/// how many of the r_min_s permutations repeat each conditioning set at
/// position p of block k.
#[derive(Debug, Clone)]
pub struct SymmetricPlan {
    pub block_sizes: Vec<usize>,
    pub r0: Vec<BigUint>,
    pub r_min_s: BigUint,
    pub lambda: Vec<Vec<BigUint>>,
}

pub fn symmetric_plan(block_sizes: &[usize]) -> Result<SymmetricPlan> {
    let mut r0 = Vec::with_capacity(block_sizes.len());
    let mut r_min_s = BigUint::from(1u32);
    for &dk in block_sizes {
        if dk < 2 {
            return Err(Error::BlockTooSmall(dk));
        }
        let d = dk as u64;
        r0.push(BigUint::from(d) * binom_big(d - 1, (d - 1) / 2));
        for p in 1..=d {
            let count = BigUint::from(d) * binom_big(d - 1, p - 1);
            r_min_s = r_min_s.lcm(&count);
        }
    }
    let lambda = block_sizes
        .iter()
        .map(|&dk| {
            let d = dk as u64;
            (1..=d)
                .map(|p| &r_min_s / (BigUint::from(d) * binom_big(d - 1, p - 1)))
                .collect()
        })
        .collect();
    Ok(SymmetricPlan { block_sizes: block_sizes.to_vec(), r0, r_min_s, lambda })
}

/// Evaluates the generalized hockey-stick sum
/// sum_m C(d-d*, m) C(d*-1, u) / C(d-1, u+m)
/// by exact rational arithmetic and returns it next to its closed form
/// d/d*. The two agree identically; the pair return keeps the check honest.
pub fn hockey_stick_check(d: u64, d_star: u64, u_size: u64) -> Result<(f64, f64)> {
    if d_star == 0 || d_star > d || u_size + 1 > d_star {
        return Err(Error::OutOfRange(format!(
            "hockey_stick_check(d={d}, d_star={d_star}, u_size={u_size})"
        )));
    }
    let mut sum = Frac::from_ints(0, 1);
    for m in 0..=(d - d_star) {
        let num = binom_big(d - d_star, m) * binom_big(d_star - 1, u_size);
        let den = binom_big(d - 1, u_size + m);
        sum = sum.add(&Frac::new(num, den));
    }
    Ok((sum.to_f64(), Frac::from_ints(d, d_star).to_f64()))
}

/// d! as checked u128.
pub fn factorial(d: u64) -> Result<u128> {
    let mut acc: u128 = 1;
    for i in 2..=d as u128 {
        acc = acc.checked_mul(i).ok_or(Error::Overflow)?;
    }
    Ok(acc)
}

/// Every permutation of 0..d in a deterministic (lexicographic) order.
/// Only sensible for small d; callers gate on d! first.
pub fn all_permutations(d: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..d).collect();
    let mut out = Vec::new();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (0..d.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            return out;
        };
        let j = (i + 1..d).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
}
