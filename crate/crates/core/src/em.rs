//! EM estimation: E-step, M-step, initialization, the fit loop and the MAP partition.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_dims, cluster_log_evidence, log_segment_prior, DensityCache, FitConfig, ModelParams};
use crate::panel::PanelDataset;
use crate::segopt::{gap_lower_bound, solve_segment_params, SegmentObjective};
use crate::util::{argmax, center, log_sum_exp};
use crate::wls::{solve_weighted_regression, WeightedRegressionProblem};

/// Relative slack allowed on EM monotonicity before a step is flagged.
pub const MONOTONICITY_SLACK: f64 = 1e-6;
/// A cluster whose responsibility mass falls below this share of the total is reseeded.
pub const EMPTY_CLUSTER_SHARE: f64 = 1e-6;
/// Initial slope gaps are `lambda * (1 + INIT_GAP_MARGIN)`.
pub const INIT_GAP_MARGIN: f64 = 0.1;

/// Posterior responsibilities.
///
/// `rho` is `I x K`; `r` is `I x T x K x S` and is zero on unobserved cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub n_individuals: usize,
    pub n_times: usize,
    pub n_clusters: usize,
    pub n_segments: usize,
    pub rho: Vec<f64>,
    pub r: Vec<f64>,
    pub mask: Vec<bool>,
    /// Log-likelihood of the parameters the E-step was run with.
    pub log_likelihood: f64,
    /// Per-individual log-likelihood contributions.
    pub individual_log_likelihood: Vec<f64>,
}

impl Responsibilities {
    pub fn rho(&self, i: usize) -> &[f64] {
        &self.rho[i * self.n_clusters..(i + 1) * self.n_clusters]
    }

    /// `K x S` block for cell `(i, t)`.
    pub fn r_cell(&self, i: usize, t: usize) -> &[f64] {
        let w = self.n_clusters * self.n_segments;
        let c = i * self.n_times + t;
        &self.r[c * w..(c + 1) * w]
    }

    pub fn observed(&self, i: usize, t: usize) -> bool {
        self.mask[i * self.n_times + t]
    }

    /// Responsibility mass per cluster, summed over observed cells and segments.
    pub fn cluster_mass(&self) -> Vec<f64> {
        let (k_n, s_n) = (self.n_clusters, self.n_segments);
        let mut mass = vec![0.0; k_n];
        for block in self.r.chunks_exact(k_n * s_n) {
            for k in 0..k_n {
                mass[k] += block[k * s_n..(k + 1) * s_n].iter().sum::<f64>();
            }
        }
        mass
    }
}

/// Hard assignments by the MAP rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub n_times: usize,
    /// Cluster per individual.
    pub cluster: Vec<usize>,
    /// Segment per `(i, t)`, `None` where unobserved.
    pub segment: Vec<Option<usize>>,
}

impl Partition {
    pub fn segment(&self, i: usize, t: usize) -> Option<usize> {
        self.segment[i * self.n_times + t]
    }

    /// `(cluster, segment)` per cell, `None` where unobserved.
    pub fn joint_labels(&self) -> Vec<Option<(usize, usize)>> {
        self.segment
            .iter()
            .enumerate()
            .map(|(c, s)| s.map(|s| (self.cluster[c / self.n_times], s)))
            .collect()
    }
}

/// Diagnostics of a fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Log-likelihood at the start of each iteration, plus the final value.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub n_params: usize,
    pub wall_time_secs: f64,
    /// Trace indices `j` where `trace[j]` fell below `trace[j-1]` by more than the slack.
    pub non_monotone_steps: Vec<usize>,
    /// `(iteration, cluster)` pairs that were reseeded after emptying out.
    pub reseeded_clusters: Vec<(usize, usize)>,
    /// Segment solves that hit the iteration cap.
    pub segment_solver_unconverged: usize,
    /// Regression cells left unchanged for an iteration because the solve failed.
    pub regression_skips: usize,
    /// Which initialization produced this fit.
    pub restart: usize,
}

impl FitReport {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.loglik_trace.last().unwrap_or(&f64::NEG_INFINITY)
    }
}

/// Result of [`fit`].
#[derive(Debug, Clone)]
pub struct Fit {
    pub params: ModelParams,
    pub responsibilities: Responsibilities,
    pub report: FitReport,
}

impl Fit {
    pub fn partition(&self) -> Partition {
        map_partition(&self.responsibilities)
    }
}

/// Computes posteriors and the log-likelihood in log space.
///
/// Individuals without any observed day get the prior as their cluster
/// posterior.
pub fn e_step(params: &ModelParams, data: &PanelDataset) -> Result<Responsibilities> {
    check_dims(params, data)?;
    let (k_n, s_n, n_t) = (params.n_clusters, params.n_segments, data.n_times());
    let ks = k_n * s_n;
    let cache = DensityCache::new(params, data);
    let log_pi: Vec<f64> = params.pi.iter().map(|p| p.ln()).collect();

    let per_individual: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..data.n_individuals())
        .into_par_iter()
        .map(|i| {
            let mut la = vec![f64::NEG_INFINITY; n_t * ks];
            let mut lb = vec![0.0; n_t * k_n];
            let mut mu = vec![0.0; params.n_dims];
            let mut acc = log_pi.clone();
            let mut any = false;
            for t in 0..n_t {
                if !data.observed(i, t) {
                    continue;
                }
                any = true;
                let cell = &mut la[t * ks..(t + 1) * ks];
                cache.log_joint(params, data, i, t, cell, &mut mu);
                for k in 0..k_n {
                    let b = log_sum_exp(&cell[k * s_n..(k + 1) * s_n]);
                    lb[t * k_n + k] = b;
                    acc[k] += b;
                }
            }
            if !any {
                log::warn!("individual {} has no observed day; using the prior", data.individual_ids()[i]);
            }
            let ll = log_sum_exp(&acc);
            let rho: Vec<f64> = acc.iter().map(|a| (a - ll).exp()).collect();
            let mut r = vec![0.0; n_t * ks];
            for t in 0..n_t {
                if !data.observed(i, t) {
                    continue;
                }
                for k in 0..k_n {
                    let b = lb[t * k_n + k];
                    for s in 0..s_n {
                        let c = t * ks + k * s_n + s;
                        r[c] = rho[k] * (la[c] - b).exp();
                    }
                }
            }
            (rho, r, ll)
        })
        .collect();

    let n_ind = data.n_individuals();
    let mut rho = Vec::with_capacity(n_ind * k_n);
    let mut r = Vec::with_capacity(n_ind * n_t * ks);
    let mut individual_log_likelihood = Vec::with_capacity(n_ind);
    for (rho_i, r_i, ll_i) in per_individual {
        rho.extend_from_slice(&rho_i);
        r.extend_from_slice(&r_i);
        individual_log_likelihood.push(ll_i);
    }
    Ok(Responsibilities {
        n_individuals: n_ind,
        n_times: n_t,
        n_clusters: k_n,
        n_segments: s_n,
        rho,
        r,
        mask: data.mask().to_vec(),
        log_likelihood: individual_log_likelihood.iter().sum(),
        individual_log_likelihood,
    })
}

/// Mixture weights as the share of responsibility mass over observed cells.
pub fn m_step_pi(resp: &Responsibilities) -> Vec<f64> {
    let mass = resp.cluster_mass();
    let total: f64 = mass.iter().sum();
    if total > 0.0 {
        mass.iter().map(|m| m / total).collect()
    } else {
        vec![1.0 / resp.n_clusters as f64; resp.n_clusters]
    }
}

/// `T x S` responsibility sums of cluster `k`.
fn segment_weights(resp: &Responsibilities, k: usize) -> Vec<f64> {
    let (n_t, s_n) = (resp.n_times, resp.n_segments);
    let mut w = vec![0.0; n_t * s_n];
    for i in 0..resp.n_individuals {
        for t in 0..n_t {
            if !resp.observed(i, t) {
                continue;
            }
            let block = &resp.r_cell(i, t)[k * s_n..(k + 1) * s_n];
            for s in 0..s_n {
                w[t * s_n + s] += block[s];
            }
        }
    }
    w
}

/// Observed rows gathered once per fit for the regression M-step.
pub(crate) struct ObservedDesign {
    /// Flat `(i * T + t)` index of each row.
    pub cells: Vec<usize>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl ObservedDesign {
    pub fn new(data: &PanelDataset) -> Self {
        let n_t = data.n_times();
        let mut cells = Vec::with_capacity(data.total_observed());
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..data.n_individuals() {
            for t in 0..n_t {
                if data.observed(i, t) {
                    cells.push(i * n_t + t);
                    x.extend_from_slice(data.x(i, t));
                    y.extend_from_slice(data.y(i, t));
                }
            }
        }
        ObservedDesign { cells, x, y }
    }
}

/// Re-estimates mean, coefficients and variances of every cell with the
/// responsibilities as weights. Returns the number of cells left unchanged.
pub(crate) fn m_step_regression(
    params: &mut ModelParams,
    resp: &Responsibilities,
    design: &ObservedDesign,
    data: &PanelDataset,
    variance_floor: f64,
) -> usize {
    let (k_n, s_n, d_n, l_n) = (params.n_clusters, params.n_segments, params.n_dims, params.n_covariates);
    let ks = k_n * s_n;
    let fits: Vec<Option<crate::wls::RegressionFit>> = (0..ks)
        .into_par_iter()
        .map(|c| {
            let weights: Vec<f64> = design.cells.iter().map(|&cell| resp.r[cell * ks + c]).collect();
            let problem = WeightedRegressionProblem {
                x: &design.x,
                y: &design.y,
                weights: &weights,
                n_covariates: l_n,
                n_dims: d_n,
                sum_zero_groups: data.sum_zero_groups(),
                variance_floor,
            };
            match solve_weighted_regression(&problem) {
                Ok(fit) => Some(fit),
                Err(e) => {
                    log::debug!("cell ({}, {}): {e}; keeping previous parameters", c / s_n, c % s_n);
                    None
                }
            }
        })
        .collect();
    let mut skipped = 0;
    for (c, fit) in fits.into_iter().enumerate() {
        match fit {
            Some(fit) => {
                params.m[c * d_n..(c + 1) * d_n].copy_from_slice(&fit.m);
                params.alpha[c * l_n * d_n..(c + 1) * l_n * d_n].copy_from_slice(&fit.alpha);
                params.sigma[c * d_n..(c + 1) * d_n].copy_from_slice(&fit.sigma);
            }
            None => skipped += 1,
        }
    }
    skipped
}

/// Segment of normalized time `t` when `[0, 1]` is cut into `S` equal pieces.
fn equal_duration_segment(t: f64, n_segments: usize) -> usize {
    ((t * n_segments as f64).floor() as usize).min(n_segments - 1)
}

/// Slopes with equal gaps and intercepts whose adjacent arguments cross at `boundaries`, both centered.
pub(crate) fn slopes_crossing_at(gap: f64, boundaries: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let s_n = boundaries.len() + 1;
    let mut u: Vec<f64> = (0..s_n).map(|s| gap * s as f64).collect();
    let mut v = vec![0.0; s_n];
    for j in 0..s_n - 1 {
        // t * u[j] + v[j] = t * u[j+1] + v[j+1] at t = boundaries[j]
        v[j + 1] = v[j] - boundaries[j] * gap;
    }
    center(&mut u);
    center(&mut v);
    (u, v)
}

fn seeded_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Uniform random cluster per individual.
pub fn random_assignment(n_individuals: usize, n_clusters: usize, seed: u64, restart: usize) -> Vec<usize> {
    let mut rng = seeded_rng(seed, restart);
    (0..n_individuals).map(|_| rng.random_range(0..n_clusters)).collect()
}

/// Initial parameters from a given cluster assignment.
///
/// Mixture weights are uniform; the segment prior has slope gaps slightly
/// above `lambda` and splits `[0, 1]` into equal-duration segments; means and
/// variances come from the observations in each (cluster, segment) cell, after
/// removing `alpha0` (one `L x D` block shared by all cells, zero when `None`).
pub fn initialize_with_assignment(
    data: &PanelDataset,
    config: &FitConfig,
    assignment: &[usize],
    alpha0: Option<&[f64]>,
) -> Result<ModelParams> {
    let (k_n, s_n, d_n, l_n) = (config.n_clusters, config.n_segments, data.n_dims(), data.n_covariates());
    if assignment.len() != data.n_individuals() || assignment.iter().any(|&k| k >= k_n) {
        return Err(Error::InvalidInput("initial assignment does not match the data or K".into()));
    }
    let lambda = config.lambda_for(data)?;
    let mut params = ModelParams::zeros(k_n, s_n, d_n, l_n, lambda);
    if let Some(a) = alpha0 {
        if a.len() != l_n * d_n {
            return Err(Error::Dimension(format!("initial coefficients have {} values, expected L*D = {}", a.len(), l_n * d_n)));
        }
        for c in 0..k_n * s_n {
            params.alpha[c * l_n * d_n..(c + 1) * l_n * d_n].copy_from_slice(a);
        }
    }

    if s_n > 1 {
        let gap = gap_lower_bound(lambda).max(lambda * (1.0 + INIT_GAP_MARGIN));
        let boundaries: Vec<f64> = (1..s_n).map(|j| j as f64 / s_n as f64).collect();
        let (u, v) = slopes_crossing_at(gap, &boundaries);
        for k in 0..k_n {
            params.u[k * s_n..(k + 1) * s_n].copy_from_slice(&u);
            params.v[k * s_n..(k + 1) * s_n].copy_from_slice(&v);
        }
    }

    // residual moments per cell and overall
    let cells = k_n * s_n;
    let mut count = vec![0.0; cells];
    let mut sum = vec![0.0; cells * d_n];
    let mut sumsq = vec![0.0; cells * d_n];
    let (mut g_count, mut g_sum, mut g_sumsq) = (0.0, vec![0.0; d_n], vec![0.0; d_n]);
    let mut resid = vec![0.0; d_n];
    for i in 0..data.n_individuals() {
        let k = assignment[i];
        for t in 0..data.n_times() {
            if !data.observed(i, t) {
                continue;
            }
            let s = equal_duration_segment(data.time()[t], s_n);
            let c = k * s_n + s;
            resid.copy_from_slice(data.y(i, t));
            if let Some(a) = alpha0 {
                for (l, xl) in data.x(i, t).iter().enumerate() {
                    for d in 0..d_n {
                        resid[d] -= xl * a[l * d_n + d];
                    }
                }
            }
            count[c] += 1.0;
            g_count += 1.0;
            for d in 0..d_n {
                sum[c * d_n + d] += resid[d];
                sumsq[c * d_n + d] += resid[d] * resid[d];
                g_sum[d] += resid[d];
                g_sumsq[d] += resid[d] * resid[d];
            }
        }
    }
    if g_count == 0.0 {
        return Err(Error::InvalidInput("dataset has no observed cell".into()));
    }
    let g_mean: Vec<f64> = g_sum.iter().map(|s| s / g_count).collect();
    let g_var: Vec<f64> = (0..d_n)
        .map(|d| (g_sumsq[d] / g_count - g_mean[d] * g_mean[d]).max(config.variance_floor))
        .collect();
    for c in 0..cells {
        for d in 0..d_n {
            let j = c * d_n + d;
            if count[c] > 0.0 {
                let mean = sum[j] / count[c];
                params.m[j] = mean;
                params.sigma[j] = if count[c] > 1.0 {
                    (sumsq[j] / count[c] - mean * mean).max(config.variance_floor)
                } else {
                    g_var[d]
                };
            } else {
                params.m[j] = g_mean[d];
                params.sigma[j] = g_var[d];
            }
        }
    }
    Ok(params)
}

/// Initial parameters with a seeded random cluster assignment.
pub fn initialize(data: &PanelDataset, config: &FitConfig) -> Result<ModelParams> {
    check_fit_preconditions(data, config)?;
    let assignment = random_assignment(data.n_individuals(), config.n_clusters, config.seed, 0);
    initialize_with_assignment(data, config, &assignment, None)
}

fn check_fit_preconditions(data: &PanelDataset, config: &FitConfig) -> Result<()> {
    config.validate()?;
    if config.n_clusters > data.n_individuals() {
        return Err(Error::Config(format!(
            "K = {} exceeds the number of individuals ({})",
            config.n_clusters,
            data.n_individuals()
        )));
    }
    Ok(())
}

/// Reseeds empty clusters from the worst-fitting individuals. Returns the reseeded clusters.
fn reseed_empty_clusters(params: &mut ModelParams, resp: &Responsibilities, data: &PanelDataset) -> Vec<usize> {
    let mass = resp.cluster_mass();
    let total: f64 = mass.iter().sum();
    let empty: Vec<usize> = (0..params.n_clusters)
        .filter(|&k| mass[k] < EMPTY_CLUSTER_SHARE * total)
        .collect();
    if empty.is_empty() {
        return empty;
    }
    let (s_n, d_n, l_n) = (params.n_segments, params.n_dims, params.n_covariates);
    // worst average log-likelihood per observed day first
    let mut order: Vec<usize> = (0..data.n_individuals()).filter(|&i| data.n_observed(i) > 0).collect();
    order.sort_by(|&a, &b| {
        let fa = resp.individual_log_likelihood[a] / data.n_observed(a) as f64;
        let fb = resp.individual_log_likelihood[b] / data.n_observed(b) as f64;
        fa.total_cmp(&fb).then(a.cmp(&b))
    });
    let mean_sigma: Vec<f64> = (0..d_n)
        .map(|d| (0..params.n_clusters * s_n).map(|c| params.sigma[c * d_n + d]).sum::<f64>() / (params.n_clusters * s_n) as f64)
        .collect();
    let n_ind = data.n_individuals() as f64;
    for (slot, &k) in empty.iter().enumerate() {
        let Some(&i) = order.get(slot) else { break };
        log::info!("cluster {k} emptied out; reseeding from individual {}", data.individual_ids()[i]);
        let mut sums = vec![0.0; s_n * d_n];
        let mut counts = vec![0.0; s_n];
        let mut all = vec![0.0; d_n];
        let mut n_all = 0.0;
        for t in 0..data.n_times() {
            if !data.observed(i, t) {
                continue;
            }
            let prior = log_segment_prior(params, data.time()[t]);
            let s = argmax(&prior[k * s_n..(k + 1) * s_n]);
            counts[s] += 1.0;
            n_all += 1.0;
            for (d, y) in data.y(i, t).iter().enumerate() {
                sums[s * d_n + d] += y;
                all[d] += y;
            }
        }
        for s in 0..s_n {
            let c = k * s_n + s;
            for d in 0..d_n {
                params.m[c * d_n + d] = if counts[s] > 0.0 { sums[s * d_n + d] / counts[s] } else { all[d] / n_all };
                params.sigma[c * d_n + d] = mean_sigma[d];
            }
            params.alpha[c * l_n * d_n..(c + 1) * l_n * d_n].fill(0.0);
        }
        params.pi[k] = params.pi[k].max(1.0 / n_ind);
    }
    let tot: f64 = params.pi.iter().sum();
    params.pi.iter_mut().for_each(|p| *p /= tot);
    empty
}

/// Runs EM from the given starting parameters until the log-likelihood gains
/// less than `tolerance` over `patience` iterations, or `max_iterations`.
pub fn run_em(data: &PanelDataset, config: &FitConfig, init: ModelParams) -> Result<Fit> {
    config.validate()?;
    check_dims(&init, data)?;
    let start = Instant::now();
    let design = ObservedDesign::new(data);
    let mut params = init;
    let mut report = FitReport {
        n_params: params.n_params(),
        ..FitReport::default()
    };
    let mut resp = e_step(&params, data)?;
    report.loglik_trace.push(resp.log_likelihood);
    loop {
        let n = report.loglik_trace.len();
        if n > config.patience {
            let gain = report.loglik_trace[n - 1] - report.loglik_trace[n - 1 - config.patience];
            if gain < config.tolerance {
                report.converged = true;
                break;
            }
        }
        if report.iterations >= config.max_iterations {
            break;
        }

        // M-step: weights, segment prior, regression
        params.pi = m_step_pi(&resp);
        let s_n = params.n_segments;
        if s_n > 1 {
            let solutions: Vec<_> = (0..params.n_clusters)
                .into_par_iter()
                .map(|k| {
                    let obj = SegmentObjective::new(segment_weights(&resp, k), data.time().to_vec(), params.lambda);
                    solve_segment_params(&obj, params.u_row(k), params.v_row(k))
                })
                .collect();
            for (k, sol) in solutions.into_iter().enumerate() {
                if !sol.converged {
                    report.segment_solver_unconverged += 1;
                }
                params.u[k * s_n..(k + 1) * s_n].copy_from_slice(&sol.u);
                params.v[k * s_n..(k + 1) * s_n].copy_from_slice(&sol.v);
            }
        }
        report.regression_skips += m_step_regression(&mut params, &resp, &design, data, config.variance_floor);
        report.iterations += 1;

        let reseeded = reseed_empty_clusters(&mut params, &resp, data);
        for &k in &reseeded {
            report.reseeded_clusters.push((report.iterations, k));
        }

        let prev = resp.log_likelihood;
        resp = e_step(&params, data)?;
        let ll = resp.log_likelihood;
        // a step that reseeded a cluster is not an EM step
        if reseeded.is_empty() && prev - ll > MONOTONICITY_SLACK * prev.abs() {
            log::warn!("EM step {} decreased the log-likelihood from {prev} to {ll}", report.iterations);
            report.non_monotone_steps.push(report.loglik_trace.len());
        }
        report.loglik_trace.push(ll);
        if !ll.is_finite() {
            return Err(Error::InvalidInput(format!("log-likelihood became {ll} at iteration {}", report.iterations)));
        }
    }
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(Fit {
        params,
        responsibilities: resp,
        report,
    })
}

/// Full estimation: initialization (possibly several) and EM; keeps the best final log-likelihood.
pub fn fit(data: &PanelDataset, config: &FitConfig) -> Result<Fit> {
    check_fit_preconditions(data, config)?;
    let mut best: Option<Fit> = None;
    for restart in 0..config.n_restarts {
        let assignment = random_assignment(data.n_individuals(), config.n_clusters, config.seed, restart);
        let init = initialize_with_assignment(data, config, &assignment, None)?;
        let mut f = run_em(data, config, init)?;
        f.report.restart = restart;
        let better = match &best {
            None => true,
            Some(b) => f.report.final_log_likelihood() > b.report.final_log_likelihood(),
        };
        if better {
            best = Some(f);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// MAP partition; ties go to the lower index.
pub fn map_partition(resp: &Responsibilities) -> Partition {
    let (k_n, s_n, n_t) = (resp.n_clusters, resp.n_segments, resp.n_times);
    let cluster: Vec<usize> = (0..resp.n_individuals).map(|i| argmax(resp.rho(i))).collect();
    let segment = (0..resp.n_individuals * n_t)
        .map(|c| {
            let (i, t) = (c / n_t, c % n_t);
            resp.observed(i, t).then(|| {
                let k = cluster[i];
                argmax(&resp.r_cell(i, t)[k * s_n..(k + 1) * s_n])
            })
        })
        .collect();
    debug_assert!(cluster.iter().all(|&k| k < k_n));
    Partition {
        n_times: n_t,
        cluster,
        segment,
    }
}

/// Per-cluster log evidence for each individual (`I x K`), exposed for scoring.
pub fn cluster_evidence(params: &ModelParams, data: &PanelDataset) -> Result<Vec<Vec<f64>>> {
    check_dims(params, data)?;
    let cache = DensityCache::new(params, data);
    Ok(cluster_log_evidence(params, data, &cache))
}
