//! Canned three-input test case used by the CLI's figure command and the
//! verification suite: variances (2, 8, 8), unit coefficients, and ten
//! correlation settings C_1..C_10 ranging from perfectly correlated to
//! independent.

/// Marginal variances of the three inputs.
pub const SIGMA2: [f64; 3] = [2.0, 8.0, 8.0];

pub const SET_LABELS: [&str; 10] =
    ["C_1", "C_2", "C_3", "C_4", "C_5", "C_6", "C_7", "C_8", "C_9", "C_10"];

/// The ten correlation settings as (rho12, rho13, rho23).
pub fn correlation_sets() -> [[f64; 3]; 10] {
    [
        [1.0, 1.0, 1.0],
        [0.25, 0.5, 0.75],
        [0.01, 0.0, 0.75],
        [0.5, 0.5, 0.5],
        [-0.5, 0.5, -0.5],
        [0.0, 0.6, 0.0],
        [0.0, 0.0, 0.0],
        [0.25, 0.8, 0.5],
        [0.0, 0.75, 0.45],
        [-0.25, 0.25, 0.25],
    ]
}

/// Covariance rows for one correlation setting over the fixture variances.
pub fn covariance(rho: [f64; 3]) -> Vec<Vec<f64>> {
    let r = [
        [1.0, rho[0], rho[1]],
        [rho[0], 1.0, rho[2]],
        [rho[1], rho[2], 1.0],
    ];
    (0..3)
        .map(|i| (0..3).map(|j| r[i][j] * (SIGMA2[i] * SIGMA2[j]).sqrt()).collect())
        .collect()
}
