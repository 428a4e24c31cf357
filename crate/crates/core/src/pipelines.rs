//! The proposed joint model and the five comparison methods, built from the
//! same EM, segment and regression solvers.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::em::{self, initialize_with_assignment, map_partition, run_em, Fit, FitReport, ObservedDesign, Partition};
use crate::error::{Error, Result};
use crate::model::{count_params, log_likelihood, CovarianceKind, FitConfig, ModelParams};
use crate::panel::PanelDataset;
use crate::wls::{solve_weighted_regression, WeightedRegressionProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    /// Global regression, then clustering of residuals, then segmentation per cluster.
    RegClustSeg,
    /// Mixture of regressions, then segmented regression per cluster.
    ClustRegThenSegReg,
    /// Joint clustering and segmentation without covariates.
    ClustSeg,
    /// Global regression, then joint clustering and segmentation of residuals.
    RegThenClustSeg,
    /// Joint clustering and segmentation, then per-cell weighted regression.
    ClustSegThenReg,
    /// Joint clustering, segmentation and regression.
    Proposed,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 6] = [
        PipelineKind::RegClustSeg,
        PipelineKind::ClustRegThenSegReg,
        PipelineKind::ClustSeg,
        PipelineKind::RegThenClustSeg,
        PipelineKind::ClustSegThenReg,
        PipelineKind::Proposed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::RegClustSeg => "reg_clust_seg",
            PipelineKind::ClustRegThenSegReg => "clust_reg_then_seg_reg",
            PipelineKind::ClustSeg => "clust_seg",
            PipelineKind::RegThenClustSeg => "reg_then_clust_seg",
            PipelineKind::ClustSegThenReg => "clust_seg_then_reg",
            PipelineKind::Proposed => "proposed",
        }
    }

    /// Display label in the arrow notation used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            PipelineKind::RegClustSeg => "Reg -> Clust -> Seg",
            PipelineKind::ClustRegThenSegReg => "(Clust+Reg) -> (Seg+Reg)",
            PipelineKind::ClustSeg => "Clust+Seg",
            PipelineKind::RegThenClustSeg => "Reg -> (Clust+Seg)",
            PipelineKind::ClustSegThenReg => "(Clust+Seg) -> Reg",
            PipelineKind::Proposed => "Clust+Seg+Reg",
        }
    }

    /// Free parameters of the fitted structure. Common coefficients count once.
    pub fn n_params(self, n_clusters: usize, n_segments: usize, n_dims: usize, n_covariates: usize) -> usize {
        let kind = CovarianceKind::Diagonal;
        match self {
            PipelineKind::ClustSeg => count_params(n_clusters, n_segments, n_dims, 0, kind),
            PipelineKind::RegClustSeg | PipelineKind::RegThenClustSeg => {
                count_params(n_clusters, n_segments, n_dims, 0, kind) + n_covariates * n_dims
            }
            PipelineKind::ClustRegThenSegReg | PipelineKind::ClustSegThenReg | PipelineKind::Proposed => {
                count_params(n_clusters, n_segments, n_dims, n_covariates, kind)
            }
        }
    }

    pub fn uses_covariates(self) -> bool {
        self != PipelineKind::ClustSeg
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        PipelineKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::InvalidInput(format!("unknown pipeline '{s}'")))
    }
}

/// A fitted pipeline. `params` always carries every covariate of the input
/// data (zero or shared coefficients where the method has none), so any
/// pipeline can score new individuals with the same likelihood.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub kind: PipelineKind,
    pub params: ModelParams,
    pub partition: Partition,
    pub n_params: usize,
    pub wall_time_secs: f64,
    /// Whether every EM stage met its stopping rule.
    pub converged: bool,
    /// Final log-likelihood on the training data under `params`.
    pub train_log_likelihood: f64,
    /// EM diagnostics of each stage, labelled (e.g. `joint`, `clusters`, `segments_2`).
    pub stages: Vec<(String, FitReport)>,
}

impl PipelineOutput {
    /// Log-likelihood of (typically held-out) individuals.
    pub fn score(&self, data: &PanelDataset) -> Result<f64> {
        log_likelihood(&self.params, data)
    }
}

/// One weighted regression over all observed cells with unit weights: `(m, alpha)`.
fn global_regression(data: &PanelDataset, variance_floor: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let design = ObservedDesign::new(data);
    let weights = vec![1.0; design.cells.len()];
    let fit = solve_weighted_regression(&WeightedRegressionProblem {
        x: &design.x,
        y: &design.y,
        weights: &weights,
        n_covariates: data.n_covariates(),
        n_dims: data.n_dims(),
        sum_zero_groups: data.sum_zero_groups(),
        variance_floor,
    })?;
    Ok((fit.m, fit.alpha))
}

/// `y - x * alpha` with a shared `alpha`, covariates dropped.
fn residual_panel(data: &PanelDataset, alpha: &[f64]) -> Result<PanelDataset> {
    let (d_n, l_n) = (data.n_dims(), data.n_covariates());
    let mut y = data.y_raw().to_vec();
    for i in 0..data.n_individuals() {
        for t in 0..data.n_times() {
            if !data.observed(i, t) {
                continue;
            }
            let c = i * data.n_times() + t;
            for (l, xl) in data.x(i, t).iter().enumerate() {
                for d in 0..d_n {
                    y[c * d_n + d] -= xl * alpha[l * d_n + d];
                }
            }
        }
    }
    debug_assert_eq!(alpha.len(), l_n * d_n);
    Ok(data.with_targets(y)?.without_covariates())
}

fn fit_with(data: &PanelDataset, config: &FitConfig, n_clusters: usize, n_segments: usize) -> Result<Fit> {
    let cfg = FitConfig {
        n_clusters,
        n_segments,
        ..config.clone()
    };
    em::fit(data, &cfg)
}

/// Clusters by a mixture with a single segment, then segments each cluster's
/// members with `K = 1`. With `keep_covariates`, the segment stage starts from
/// the cluster's coefficients.
fn cluster_then_segment(
    data: &PanelDataset,
    config: &FitConfig,
    keep_covariates: bool,
) -> Result<(ModelParams, Partition, Vec<(String, FitReport)>)> {
    let (k_n, s_n, d_n) = (config.n_clusters, config.n_segments, data.n_dims());
    let l_n = data.n_covariates();
    let stage1 = fit_with(data, config, k_n, 1)?;
    let clusters = map_partition(&stage1.responsibilities).cluster;
    let mut stages = vec![("clusters".to_string(), stage1.report.clone())];

    let lambda = config.lambda_for(data)?;
    let mut params = ModelParams::zeros(k_n, s_n, d_n, l_n, lambda);
    params.pi = stage1.params.pi.clone();
    let mut segment = vec![None; data.n_individuals() * data.n_times()];
    let seg_cfg = FitConfig {
        n_clusters: 1,
        ..config.clone()
    };
    for k in 0..k_n {
        let members: Vec<usize> = (0..data.n_individuals()).filter(|&i| clusters[i] == k).collect();
        let alpha0 = keep_covariates.then(|| stage1.params.alpha(k, 0).to_vec());
        let fit_k = if members.is_empty() {
            // nobody assigned: keep the cluster-stage fit on every segment
            log::warn!("cluster {k} has no member after the clustering stage");
            None
        } else {
            let sub = data.subset(&members);
            let init = initialize_with_assignment(&sub, &seg_cfg, &vec![0; members.len()], alpha0.as_deref())?;
            Some(run_em(&sub, &seg_cfg, init)?)
        };
        match fit_k {
            Some(f) => {
                stages.push((format!("segments_{k}"), f.report.clone()));
                let p = &f.params;
                params.u[k * s_n..(k + 1) * s_n].copy_from_slice(&p.u);
                params.v[k * s_n..(k + 1) * s_n].copy_from_slice(&p.v);
                params.m[k * s_n * d_n..(k + 1) * s_n * d_n].copy_from_slice(&p.m);
                params.sigma[k * s_n * d_n..(k + 1) * s_n * d_n].copy_from_slice(&p.sigma);
                params.alpha[k * s_n * l_n * d_n..(k + 1) * s_n * l_n * d_n].copy_from_slice(&p.alpha);
                let part = map_partition(&f.responsibilities);
                for (row, &i) in members.iter().enumerate() {
                    for t in 0..data.n_times() {
                        segment[i * data.n_times() + t] = part.segment(row, t);
                    }
                }
            }
            None => {
                for s in 0..s_n {
                    let c = k * s_n + s;
                    params.m[c * d_n..(c + 1) * d_n].copy_from_slice(stage1.params.m(k, 0));
                    params.sigma[c * d_n..(c + 1) * d_n].copy_from_slice(stage1.params.sigma(k, 0));
                    params.alpha[c * l_n * d_n..(c + 1) * l_n * d_n].copy_from_slice(stage1.params.alpha(k, 0));
                }
                let init = initialize_with_assignment(data, &seg_cfg, &vec![0; data.n_individuals()], None)?;
                params.u[k * s_n..(k + 1) * s_n].copy_from_slice(&init.u);
                params.v[k * s_n..(k + 1) * s_n].copy_from_slice(&init.v);
            }
        }
    }
    let partition = Partition {
        n_times: data.n_times(),
        cluster: clusters,
        segment,
    };
    Ok((params, partition, stages))
}

/// Runs one method end to end.
pub fn run_pipeline(kind: PipelineKind, data: &PanelDataset, config: &FitConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let start = Instant::now();
    let (k_n, s_n, d_n, l_n) = (config.n_clusters, config.n_segments, data.n_dims(), data.n_covariates());
    let joint = |f: &Fit| vec![("joint".to_string(), f.report.clone())];
    let (params, partition, stages) = match kind {
        PipelineKind::Proposed => {
            let f = em::fit(data, config)?;
            (f.params.clone(), f.partition(), joint(&f))
        }
        PipelineKind::ClustSeg => {
            let f = em::fit(&data.without_covariates(), config)?;
            (f.params.expand_covariates(l_n, None), f.partition(), joint(&f))
        }
        PipelineKind::ClustSegThenReg => {
            let f = em::fit(&data.without_covariates(), config)?;
            let mut params = f.params.expand_covariates(l_n, None);
            let design = ObservedDesign::new(data);
            let skipped = em::m_step_regression(&mut params, &f.responsibilities, &design, data, config.variance_floor);
            if skipped > 0 {
                log::warn!("{skipped} cells kept covariate-free estimates after the regression stage");
            }
            (params, f.partition(), joint(&f))
        }
        PipelineKind::RegThenClustSeg => {
            let (_, alpha) = global_regression(data, config.variance_floor)?;
            let resid = residual_panel(data, &alpha)?;
            let f = em::fit(&resid, config)?;
            (f.params.expand_covariates(l_n, Some(&alpha)), f.partition(), joint(&f))
        }
        PipelineKind::RegClustSeg => {
            let (_, alpha) = global_regression(data, config.variance_floor)?;
            let resid = residual_panel(data, &alpha)?;
            let (params, part, stages) = cluster_then_segment(&resid, config, false)?;
            (params.expand_covariates(l_n, Some(&alpha)), part, stages)
        }
        PipelineKind::ClustRegThenSegReg => cluster_then_segment(data, config, true)?,
    };
    let train_log_likelihood = log_likelihood(&params, data)?;
    Ok(PipelineOutput {
        kind,
        params,
        partition,
        n_params: kind.n_params(k_n, s_n, d_n, l_n),
        wall_time_secs: start.elapsed().as_secs_f64(),
        converged: stages.iter().all(|(_, r)| r.converged),
        train_log_likelihood,
        stages,
    })
}
