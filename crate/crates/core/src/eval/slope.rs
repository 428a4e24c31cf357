use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em;
use crate::error::{Error, Result};
use crate::model::FitConfig;
use crate::panel::PanelDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopePoint {
    pub k: usize,
    pub n_params: usize,
    pub log_likelihood: f64,
    pub penalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeSelection {
    pub points: Vec<SlopePoint>,
    /// Least-squares slope of log-likelihood against parameter count.
    pub slope: f64,
    pub penalty_per_param: f64,
    pub selected_k: usize,
    /// Number of largest-`K` points used for the slope.
    pub fit_window: usize,
    /// Log-likelihood decreased somewhere along increasing `K`; more restarts may help.
    pub non_monotone: bool,
}

/// Penalizes each `(k, n_params, log_likelihood)` by twice the slope fitted on
/// the largest `window_fraction` of the points, and keeps the best.
pub fn select_by_slope(curve: &[(usize, usize, f64)], window_fraction: f64) -> Result<SlopeSelection> {
    if curve.len() < 3 {
        return Err(Error::Config("the slope heuristic needs at least 3 values of K".into()));
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Config(format!("window fraction must be in (0, 1], got {window_fraction}")));
    }
    let mut sorted = curve.to_vec();
    sorted.sort_by_key(|p| p.0);
    let n = sorted.len();
    let fit_window = ((n as f64 * window_fraction).ceil() as usize).clamp(2, n);
    let tail = &sorted[n - fit_window..];
    let xm = tail.iter().map(|p| p.1 as f64).sum::<f64>() / fit_window as f64;
    let ym = tail.iter().map(|p| p.2).sum::<f64>() / fit_window as f64;
    let sxy: f64 = tail.iter().map(|p| (p.1 as f64 - xm) * (p.2 - ym)).sum();
    let sxx: f64 = tail.iter().map(|p| (p.1 as f64 - xm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("parameter counts in the fitting window are all equal".into()));
    }
    let slope = sxy / sxx;
    if slope <= 0.0 {
        log::warn!("log-likelihood does not grow with model size (slope {slope})");
    }
    let non_monotone = sorted.windows(2).any(|w| w[1].2 < w[0].2 - 1e-9 * w[0].2.abs());
    if non_monotone {
        log::warn!("training log-likelihood is not monotone in K; consider more restarts");
    }
    let penalty_per_param = 2.0 * slope;
    let points: Vec<SlopePoint> = sorted
        .iter()
        .map(|&(k, n_params, ll)| SlopePoint {
            k,
            n_params,
            log_likelihood: ll,
            penalized: ll - penalty_per_param * n_params as f64,
        })
        .collect();
    let best = points
        .iter()
        .enumerate()
        .fold(0, |b, (j, p)| if p.penalized > points[b].penalized { j } else { b });
    Ok(SlopeSelection {
        selected_k: points[best].k,
        points,
        slope,
        penalty_per_param,
        fit_window,
        non_monotone,
    })
}

/// Fits the joint model for each `K` and applies [`select_by_slope`].
pub fn slope_heuristic(data: &PanelDataset, config: &FitConfig, k_range: &[usize], window_fraction: f64) -> Result<SlopeSelection> {
    if k_range.len() < 3 {
        return Err(Error::Config("the slope heuristic needs at least 3 values of K".into()));
    }
    let curve: Vec<(usize, usize, f64)> = k_range
        .par_iter()
        .map(|&k| {
            let cfg = FitConfig {
                n_clusters: k,
                ..config.clone()
            };
            let f = em::fit(data, &cfg)?;
            Ok((k, f.params.n_params(), f.report.final_log_likelihood()))
        })
        .collect::<Result<_>>()?;
    select_by_slope(&curve, window_fraction)
}
