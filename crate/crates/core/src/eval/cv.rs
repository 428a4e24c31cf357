use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::ExperimentResult;
use crate::error::{Error, Result};
use crate::model::FitConfig;
use crate::panel::PanelDataset;
use crate::pipelines::{run_pipeline, PipelineKind};
use crate::util::hex;

/// Seeded shuffle of individuals dealt into `n_folds` groups; each group is sorted.
pub fn fold_assignment(n_individuals: usize, n_folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n_individuals).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); n_folds];
    for (j, i) in order.into_iter().enumerate() {
        folds[j % n_folds].push(i);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    folds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub kind: PipelineKind,
    pub n_params: usize,
    /// Hash of exactly the data the method was trained on.
    pub training_fingerprint: String,
    pub validation_log_likelihood: Option<f64>,
    pub error: Option<String>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<Vec<usize>>,
    pub records: Vec<FoldRecord>,
    /// One entry per requested kind, in request order.
    pub results: Vec<(PipelineKind, ExperimentResult)>,
}

impl CrossValidation {
    pub fn result(&self, kind: PipelineKind) -> Option<&ExperimentResult> {
        self.results.iter().find(|(k, _)| *k == kind).map(|(_, r)| r)
    }
}

fn config_fingerprint(config: &FitConfig, n_folds: usize) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_string(config).expect("config serializes");
    let mut h = Sha256::new();
    h.update(json.as_bytes());
    h.update((n_folds as u64).to_le_bytes());
    hex(&h.finalize())
}

/// Individual-wise cross-validation: each method is trained on all folds but
/// one and scored by the log-likelihood of the held-out individuals.
pub fn cross_validate(data: &PanelDataset, config: &FitConfig, kinds: &[PipelineKind], n_folds: usize) -> Result<CrossValidation> {
    config.validate()?;
    if n_folds < 2 {
        return Err(Error::Config("cross-validation needs at least 2 folds".into()));
    }
    if data.n_individuals() < n_folds {
        return Err(Error::Config(format!(
            "{} individuals cannot fill {n_folds} folds",
            data.n_individuals()
        )));
    }
    let folds = fold_assignment(data.n_individuals(), n_folds, config.seed);
    let jobs: Vec<(usize, PipelineKind)> = (0..n_folds).flat_map(|f| kinds.iter().map(move |&k| (f, k))).collect();
    let records: Vec<FoldRecord> = jobs
        .par_iter()
        .map(|&(f, kind)| {
            let held_out: HashSet<usize> = folds[f].iter().copied().collect();
            let train_idx: Vec<usize> = (0..data.n_individuals()).filter(|i| !held_out.contains(i)).collect();
            let train = data.subset(&train_idx);
            let valid = data.subset(&folds[f]);
            let training_fingerprint = train.fingerprint();
            let outcome = run_pipeline(kind, &train, config).and_then(|out| Ok((out.score(&valid)?, out.wall_time_secs)));
            let (validation_log_likelihood, error, wall_time_secs) = match outcome {
                Ok((ll, wt)) => (Some(ll), None, wt),
                Err(e) => {
                    log::warn!("fold {f}, {kind}: {e}");
                    (None, Some(e.to_string()), 0.0)
                }
            };
            FoldRecord {
                fold: f,
                kind,
                n_params: kind.n_params(config.n_clusters, config.n_segments, data.n_dims(), data.n_covariates()),
                training_fingerprint,
                validation_log_likelihood,
                error,
                wall_time_secs,
            }
        })
        .collect();

    let fp = config_fingerprint(config, n_folds);
    let results = kinds
        .iter()
        .map(|&kind| {
            let mut r = ExperimentResult::new(kind.label(), fp.clone());
            for rec in records.iter().filter(|r| r.kind == kind) {
                match (&rec.validation_log_likelihood, &rec.error) {
                    (Some(ll), _) => {
                        r.values.push(*ll);
                        r.wall_times.push(rec.wall_time_secs);
                    }
                    (None, e) => r.failures.push((rec.fold, e.clone().unwrap_or_default())),
                }
            }
            (kind, r)
        })
        .collect();
    Ok(CrossValidation { folds, records, results })
}
