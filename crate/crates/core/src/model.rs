//! Model parameters, densities and the observed-data log-likelihood.
//!
//! For individual `i` in cluster `k`, day `t` falls in segment `s` with prior
//! `softmax_s(t * u[k,s] + v[k,s])`, and `y[i,t] ~ N(m[k,s] + x[i,t] * alpha[k,s], diag(sigma[k,s]))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use crate::util::log_sum_exp;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Shape of the per-(cluster, segment) covariance. Only the diagonal form is estimated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    #[default]
    Diagonal,
}

/// Minimum slope gap such that a segment prior goes from 0.01 to 0.99 within
/// `window_days`, on a grid spanning `span_days` mapped to `[0, 1]`.
pub fn compute_lambda(span_days: f64, window_days: f64) -> Result<f64> {
    if !(span_days > 0.0 && window_days > 0.0) {
        return Err(Error::Config(format!(
            "lambda needs positive span and window (span {span_days}, window {window_days})"
        )));
    }
    Ok((0.99f64 / 0.01).ln() / (window_days / span_days))
}

/// Number of free parameters: mixture weights, identifiable segment-prior
/// slopes and intercepts, then per-(cluster, segment) means, coefficients and variances.
pub fn count_params(n_clusters: usize, n_segments: usize, n_dims: usize, n_covariates: usize, kind: CovarianceKind) -> usize {
    let per_cell = match kind {
        CovarianceKind::Diagonal => n_dims * (n_covariates + 2),
    };
    (n_clusters - 1) + 2 * n_clusters * (n_segments - 1) + n_clusters * n_segments * per_cell
}

fn default_window() -> f64 {
    90.0
}
fn default_tolerance() -> f64 {
    1e-4
}
fn default_patience() -> usize {
    10
}
fn default_max_iterations() -> usize {
    500
}
fn default_variance_floor() -> f64 {
    1e-8
}
fn default_restarts() -> usize {
    1
}

/// Estimation settings. Only the cluster and segment counts are required when deserializing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub n_clusters: usize,
    pub n_segments: usize,
    /// Window (in days) over which a segment prior must be able to switch.
    #[serde(default = "default_window")]
    pub transition_window_days: f64,
    /// Stop once the log-likelihood gained less than this over `patience` iterations.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_variance_floor")]
    pub variance_floor: f64,
    /// Independent initializations; the best final log-likelihood wins.
    #[serde(default = "default_restarts")]
    pub n_restarts: usize,
}

impl FitConfig {
    pub fn new(n_clusters: usize, n_segments: usize) -> Self {
        FitConfig {
            n_clusters,
            n_segments,
            transition_window_days: default_window(),
            tolerance: default_tolerance(),
            patience: default_patience(),
            max_iterations: default_max_iterations(),
            seed: 0,
            variance_floor: default_variance_floor(),
            n_restarts: default_restarts(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.n_segments == 0 {
            return Err(Error::Config("cluster and segment counts must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::Config("variance floor must be positive".into()));
        }
        if self.n_restarts == 0 {
            return Err(Error::Config("n_restarts must be at least 1".into()));
        }
        if !(self.transition_window_days > 0.0) {
            return Err(Error::Config("transition window must be positive".into()));
        }
        Ok(())
    }

    pub fn lambda_for(&self, data: &PanelDataset) -> Result<f64> {
        compute_lambda(data.span_days(), self.transition_window_days)
    }
}

/// Model parameters. Tensors are row-major:
/// `pi[k]`, `u[k*S+s]`, `v[k*S+s]`, `m[(k*S+s)*D+d]`,
/// `alpha[((k*S+s)*L+l)*D+d]`, `sigma[(k*S+s)*D+d]` (variances).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_clusters: usize,
    pub n_segments: usize,
    pub n_dims: usize,
    pub n_covariates: usize,
    pub lambda: f64,
    pub covariance: CovarianceKind,
    pub pi: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub m: Vec<f64>,
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl ModelParams {
    /// Uniform weights, flat segment prior, zero means and coefficients, unit variances.
    /// (The slope gaps are zero, so this only satisfies the invariants when `S = 1`.)
    pub fn zeros(n_clusters: usize, n_segments: usize, n_dims: usize, n_covariates: usize, lambda: f64) -> Self {
        let cells = n_clusters * n_segments;
        ModelParams {
            n_clusters,
            n_segments,
            n_dims,
            n_covariates,
            lambda,
            covariance: CovarianceKind::Diagonal,
            pi: vec![1.0 / n_clusters as f64; n_clusters],
            u: vec![0.0; cells],
            v: vec![0.0; cells],
            m: vec![0.0; cells * n_dims],
            alpha: vec![0.0; cells * n_covariates * n_dims],
            sigma: vec![1.0; cells * n_dims],
        }
    }

    #[inline]
    pub fn cell(&self, k: usize, s: usize) -> usize {
        k * self.n_segments + s
    }

    pub fn u_row(&self, k: usize) -> &[f64] {
        &self.u[k * self.n_segments..(k + 1) * self.n_segments]
    }

    pub fn v_row(&self, k: usize) -> &[f64] {
        &self.v[k * self.n_segments..(k + 1) * self.n_segments]
    }

    pub fn m(&self, k: usize, s: usize) -> &[f64] {
        let c = self.cell(k, s);
        &self.m[c * self.n_dims..(c + 1) * self.n_dims]
    }

    /// `L x D` block of coefficients for one cell.
    pub fn alpha(&self, k: usize, s: usize) -> &[f64] {
        let c = self.cell(k, s);
        let w = self.n_covariates * self.n_dims;
        &self.alpha[c * w..(c + 1) * w]
    }

    pub fn sigma(&self, k: usize, s: usize) -> &[f64] {
        let c = self.cell(k, s);
        &self.sigma[c * self.n_dims..(c + 1) * self.n_dims]
    }

    pub fn n_params(&self) -> usize {
        count_params(self.n_clusters, self.n_segments, self.n_dims, self.n_covariates, self.covariance)
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let (k, s, d, l) = (self.n_clusters, self.n_segments, self.n_dims, self.n_covariates);
        let cells = k * s;
        let sizes = [
            ("pi", self.pi.len(), k),
            ("u", self.u.len(), cells),
            ("v", self.v.len(), cells),
            ("m", self.m.len(), cells * d),
            ("alpha", self.alpha.len(), cells * l * d),
            ("sigma", self.sigma.len(), cells * d),
        ];
        for (name, got, want) in sizes {
            if got != want {
                return Err(Error::Dimension(format!("{name} has {got} values, expected {want}")));
            }
        }
        if self.pi.iter().any(|&p| !(p >= 0.0)) || (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("mixture weights must be nonnegative and sum to 1".into()));
        }
        if self.sigma.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidInput("variances must be positive".into()));
        }
        for kk in 0..k {
            let (u, v) = (self.u_row(kk), self.v_row(kk));
            let scale = 1e-9 * s as f64 * u.iter().chain(v).fold(1.0f64, |a, b| a.max(b.abs()));
            if u.windows(2).any(|w| !(w[1] - w[0] > self.lambda)) {
                return Err(Error::InvalidInput(format!(
                    "cluster {kk}: consecutive slopes must differ by more than lambda = {}",
                    self.lambda
                )));
            }
            if u.iter().sum::<f64>().abs() > scale || v.iter().sum::<f64>().abs() > scale {
                return Err(Error::InvalidInput(format!("cluster {kk}: slopes and intercepts must sum to zero")));
            }
        }
        Ok(())
    }

    fn check_data(&self, data: &PanelDataset) -> Result<()> {
        if data.n_dims() != self.n_dims || data.n_covariates() != self.n_covariates {
            return Err(Error::Dimension(format!(
                "model has D = {}, L = {}; data has D = {}, L = {} (covariates: {})",
                self.n_dims,
                self.n_covariates,
                data.n_dims(),
                data.n_covariates(),
                data.covariate_names().join(", ")
            )));
        }
        Ok(())
    }

    /// Copy with `n_covariates` columns, every cell sharing `common_alpha`
    /// (`L x D`), or zero coefficients when `None`. Requires `L = 0` on `self`.
    pub fn expand_covariates(&self, n_covariates: usize, common_alpha: Option<&[f64]>) -> ModelParams {
        assert_eq!(self.n_covariates, 0, "expand_covariates starts from a covariate-free model");
        let w = n_covariates * self.n_dims;
        let block: Vec<f64> = match common_alpha {
            Some(a) => {
                assert_eq!(a.len(), w);
                a.to_vec()
            }
            None => vec![0.0; w],
        };
        let cells = self.n_clusters * self.n_segments;
        ModelParams {
            n_covariates,
            alpha: block.iter().copied().cycle().take(cells * w).collect(),
            ..self.clone()
        }
    }

    /// Relabels clusters: new cluster `j` is old cluster `perm[j]`.
    pub fn permute_clusters(&self, perm: &[usize]) -> ModelParams {
        let s = self.n_segments;
        let gather = |src: &[f64], per_cluster: usize| -> Vec<f64> {
            perm.iter()
                .flat_map(|&k| src[k * per_cluster..(k + 1) * per_cluster].iter().copied())
                .collect()
        };
        ModelParams {
            pi: gather(&self.pi, 1),
            u: gather(&self.u, s),
            v: gather(&self.v, s),
            m: gather(&self.m, s * self.n_dims),
            alpha: gather(&self.alpha, s * self.n_covariates * self.n_dims),
            sigma: gather(&self.sigma, s * self.n_dims),
            ..self.clone()
        }
    }
}

/// Segment prior at normalized time `t`: a `K x S` row-major matrix whose rows sum to one.
pub fn segment_prior_probs(params: &ModelParams, t: f64) -> Vec<f64> {
    log_segment_prior(params, t).into_iter().map(f64::exp).collect()
}

/// Log of [`segment_prior_probs`].
pub fn log_segment_prior(params: &ModelParams, t: f64) -> Vec<f64> {
    let s_n = params.n_segments;
    let mut out = vec![0.0; params.n_clusters * s_n];
    for k in 0..params.n_clusters {
        let row = &mut out[k * s_n..(k + 1) * s_n];
        for s in 0..s_n {
            row[s] = t * params.u[k * s_n + s] + params.v[k * s_n + s];
        }
        let lse = log_sum_exp(row);
        row.iter_mut().for_each(|a| *a -= lse);
    }
    out
}

/// Regression mean of cell `(k, s)` for covariate row `x`.
pub fn mean_field(params: &ModelParams, x: &[f64], k: usize, s: usize) -> Vec<f64> {
    let mut mu = params.m(k, s).to_vec();
    add_covariate_contribution(params, x, k, s, &mut mu);
    mu
}

#[inline]
fn add_covariate_contribution(params: &ModelParams, x: &[f64], k: usize, s: usize, mu: &mut [f64]) {
    let d_n = params.n_dims;
    let alpha = params.alpha(k, s);
    for (l, &xl) in x.iter().enumerate() {
        if xl != 0.0 {
            for d in 0..d_n {
                mu[d] += xl * alpha[l * d_n + d];
            }
        }
    }
}

/// Precomputed per-call quantities for evaluating cell log-densities.
pub(crate) struct DensityCache {
    /// `T x K x S` log segment prior.
    pub log_prior: Vec<f64>,
    /// `K*S x D` inverse variances.
    inv_var: Vec<f64>,
    /// `K*S` Gaussian normalizing constants, `-0.5 * (D log 2pi + sum log var)`.
    log_norm: Vec<f64>,
}

impl DensityCache {
    pub fn new(params: &ModelParams, data: &PanelDataset) -> Self {
        let log_prior = data
            .time()
            .iter()
            .flat_map(|&t| log_segment_prior(params, t))
            .collect();
        let inv_var = params.sigma.iter().map(|v| 1.0 / v).collect();
        let d_n = params.n_dims;
        let log_norm = (0..params.n_clusters * params.n_segments)
            .map(|c| {
                let logdet: f64 = params.sigma[c * d_n..(c + 1) * d_n].iter().map(|v| v.ln()).sum();
                -0.5 * (d_n as f64 * LN_2PI + logdet)
            })
            .collect();
        DensityCache {
            log_prior,
            inv_var,
            log_norm,
        }
    }

    /// Fills `out` (`K x S`) with `log prior + log N(y[i,t]; mu, sigma)` for an observed cell.
    pub fn log_joint(&self, params: &ModelParams, data: &PanelDataset, i: usize, t: usize, out: &mut [f64], mu: &mut [f64]) {
        let (k_n, s_n, d_n) = (params.n_clusters, params.n_segments, params.n_dims);
        let y = data.y(i, t);
        let x = data.x(i, t);
        let prior = &self.log_prior[t * k_n * s_n..(t + 1) * k_n * s_n];
        for k in 0..k_n {
            for s in 0..s_n {
                let c = k * s_n + s;
                mu.copy_from_slice(params.m(k, s));
                add_covariate_contribution(params, x, k, s, mu);
                let mut quad = 0.0;
                for d in 0..d_n {
                    let r = y[d] - mu[d];
                    quad += r * r * self.inv_var[c * d_n + d];
                }
                out[c] = prior[c] + self.log_norm[c] - 0.5 * quad;
            }
        }
    }
}

/// Per-individual, per-cluster log evidence `log pi_k + sum_t log sum_s prior * density`
/// over observed days (`I x K`).
pub(crate) fn cluster_log_evidence(params: &ModelParams, data: &PanelDataset, cache: &DensityCache) -> Vec<Vec<f64>> {
    let (k_n, s_n) = (params.n_clusters, params.n_segments);
    (0..data.n_individuals())
        .into_par_iter()
        .map(|i| {
            let mut buf = vec![0.0; k_n * s_n];
            let mut mu = vec![0.0; params.n_dims];
            let mut acc: Vec<f64> = params.pi.iter().map(|p| p.ln()).collect();
            for t in 0..data.n_times() {
                if !data.observed(i, t) {
                    continue;
                }
                cache.log_joint(params, data, i, t, &mut buf, &mut mu);
                for k in 0..k_n {
                    acc[k] += log_sum_exp(&buf[k * s_n..(k + 1) * s_n]);
                }
            }
            acc
        })
        .collect()
}

/// Observed-data log-likelihood; missing cells are skipped.
pub fn log_likelihood(params: &ModelParams, data: &PanelDataset) -> Result<f64> {
    params.check_data(data)?;
    let cache = DensityCache::new(params, data);
    Ok(cluster_log_evidence(params, data, &cache)
        .iter()
        .map(|row| log_sum_exp(row))
        .sum())
}

/// Per-individual log-likelihood contributions.
pub fn individual_log_likelihoods(params: &ModelParams, data: &PanelDataset) -> Result<Vec<f64>> {
    params.check_data(data)?;
    let cache = DensityCache::new(params, data);
    Ok(cluster_log_evidence(params, data, &cache)
        .iter()
        .map(|row| log_sum_exp(row))
        .collect())
}

pub(crate) fn check_dims(params: &ModelParams, data: &PanelDataset) -> Result<()> {
    params.check_data(data)
}
