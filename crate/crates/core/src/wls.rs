//! Weighted Gaussian regression for one (cluster, segment) cell.
//!
//! Minimizes `sum_n w_n * (y_n - m - x_n * alpha)^2` per output dimension via
//! normal equations with a small trace-scaled ridge, then reports the
//! weighted residual variance. Coefficients of declared sum-zero dummy groups
//! are centered, with the group mean folded into the intercept.

use nalgebra::DMatrix;
use thiserror::Error;

/// Ridge added to the normal-equation diagonal, relative to its mean diagonal entry.
pub const RIDGE_RELATIVE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WlsError {
    #[error("all regression weights are zero")]
    ZeroWeights,
    #[error("normal equations are singular even after ridge")]
    IllConditioned,
    #[error("row counts disagree: {0}")]
    Shape(String),
}

/// A weighted regression over `n` rows. `x` is `n x L`, `y` is `n x D`, row-major.
#[derive(Debug, Clone)]
pub struct WeightedRegressionProblem<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub weights: &'a [f64],
    pub n_covariates: usize,
    pub n_dims: usize,
    pub sum_zero_groups: &'a [Vec<usize>],
    pub variance_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    /// Intercept, length `D`.
    pub m: Vec<f64>,
    /// Coefficients, `L x D` row-major.
    pub alpha: Vec<f64>,
    /// Residual variances, length `D`.
    pub sigma: Vec<f64>,
}

impl WeightedRegressionProblem<'_> {
    fn n_rows(&self) -> usize {
        self.weights.len()
    }

    fn validate(&self) -> Result<(), WlsError> {
        let n = self.n_rows();
        if self.x.len() != n * self.n_covariates || self.y.len() != n * self.n_dims {
            return Err(WlsError::Shape(format!(
                "{} weights, {} covariate values (L = {}), {} targets (D = {})",
                n,
                self.x.len(),
                self.n_covariates,
                self.y.len(),
                self.n_dims
            )));
        }
        Ok(())
    }
}

/// Solves the weighted regression. Weights are normalized internally, so a
/// common rescaling leaves the result unchanged.
pub fn solve_weighted_regression(problem: &WeightedRegressionProblem) -> Result<RegressionFit, WlsError> {
    problem.validate()?;
    let (l_n, d_n) = (problem.n_covariates, problem.n_dims);
    let p = l_n + 1;
    let total: f64 = problem.weights.iter().sum();
    if !(total > 0.0) {
        return Err(WlsError::ZeroWeights);
    }

    // accumulate the upper triangle of Z'WZ and Z'WY with z = [1, x]
    let mut ztz = DMatrix::<f64>::zeros(p, p);
    let mut zty = DMatrix::<f64>::zeros(p, d_n);
    let mut z = vec![0.0; p];
    z[0] = 1.0;
    for (n, &w) in problem.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let w = w / total;
        z[1..].copy_from_slice(&problem.x[n * l_n..(n + 1) * l_n]);
        let y = &problem.y[n * d_n..(n + 1) * d_n];
        for a in 0..p {
            let wa = w * z[a];
            if wa == 0.0 {
                continue;
            }
            for b in a..p {
                ztz[(a, b)] += wa * z[b];
            }
            for d in 0..d_n {
                zty[(a, d)] += wa * y[d];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            ztz[(a, b)] = ztz[(b, a)];
        }
    }
    let ridge = RIDGE_RELATIVE * ztz.trace() / p as f64;
    for a in 0..p {
        ztz[(a, a)] += ridge;
    }
    let chol = ztz.cholesky().ok_or(WlsError::IllConditioned)?;
    let beta = chol.solve(&zty);
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(WlsError::IllConditioned);
    }

    let mut m: Vec<f64> = (0..d_n).map(|d| beta[(0, d)]).collect();
    let mut alpha: Vec<f64> = (0..l_n).flat_map(|l| (0..d_n).map(move |d| (l, d))).map(|(l, d)| beta[(l + 1, d)]).collect();
    for group in problem.sum_zero_groups {
        if group.is_empty() {
            continue;
        }
        for d in 0..d_n {
            let mean = group.iter().map(|&l| alpha[l * d_n + d]).sum::<f64>() / group.len() as f64;
            for &l in group {
                alpha[l * d_n + d] -= mean;
            }
            m[d] += mean;
        }
    }

    let mut sigma = vec![0.0; d_n];
    for (n, &w) in problem.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let w = w / total;
        let x = &problem.x[n * l_n..(n + 1) * l_n];
        for d in 0..d_n {
            let mut mu = m[d];
            for l in 0..l_n {
                mu += x[l] * alpha[l * d_n + d];
            }
            let r = problem.y[n * d_n + d] - mu;
            sigma[d] += w * r * r;
        }
    }
    for s in sigma.iter_mut() {
        *s = s.max(problem.variance_floor);
    }
    Ok(RegressionFit { m, alpha, sigma })
}
