use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ari::joint_ari;
use super::stats::ExperimentResult;
use crate::error::Result;
use crate::model::FitConfig;
use crate::pipelines::{run_pipeline, PipelineKind};
use crate::synth::{generate, SynthConfig};
use crate::util::hex;

/// Repeated synthetic experiments: a fresh panel per repetition, every method scored by joint ARI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub synth: SynthConfig,
    pub fit: FitConfig,
    pub kinds: Vec<PipelineKind>,
    pub repetitions: usize,
}

impl BenchmarkSpec {
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        hex(&Sha256::digest(serde_json::to_vec(self).expect("spec serializes")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRun {
    pub repetition: usize,
    pub kind: PipelineKind,
    pub data_seed: u64,
    pub fit_seed: u64,
    pub ari: Option<f64>,
    pub error: Option<String>,
    pub n_params: usize,
    pub converged: bool,
    pub wall_time_secs: f64,
}

/// Runs every (repetition, method) pair; repetition `r` draws data with
/// `synth.seed + r` and fits with `fit.seed + r`.
pub fn run_synthetic_benchmark(spec: &BenchmarkSpec) -> Result<(Vec<BenchmarkRun>, Vec<(PipelineKind, ExperimentResult)>)> {
    spec.synth.validate()?;
    spec.fit.validate()?;
    let truths: Vec<_> = (0..spec.repetitions)
        .into_par_iter()
        .map(|r| {
            generate(&SynthConfig {
                seed: spec.synth.seed.wrapping_add(r as u64),
                ..spec.synth.clone()
            })
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, PipelineKind)> = (0..spec.repetitions)
        .flat_map(|r| spec.kinds.iter().map(move |&k| (r, k)))
        .collect();
    let runs: Vec<BenchmarkRun> = jobs
        .par_iter()
        .map(|&(r, kind)| {
            let truth = &truths[r];
            let fit_seed = spec.fit.seed.wrapping_add(r as u64);
            let cfg = FitConfig {
                seed: fit_seed,
                ..spec.fit.clone()
            };
            let ds = &truth.dataset;
            let mut run = BenchmarkRun {
                repetition: r,
                kind,
                data_seed: spec.synth.seed.wrapping_add(r as u64),
                fit_seed,
                ari: None,
                error: None,
                n_params: kind.n_params(cfg.n_clusters, cfg.n_segments, ds.n_dims(), ds.n_covariates()),
                converged: false,
                wall_time_secs: 0.0,
            };
            match run_pipeline(kind, ds, &cfg).and_then(|out| Ok((joint_ari(&out.partition.joint_labels(), &truth.joint_labels())?, out))) {
                Ok((ari, out)) => {
                    run.ari = Some(ari);
                    run.converged = out.converged;
                    run.wall_time_secs = out.wall_time_secs;
                }
                Err(e) => {
                    log::warn!("repetition {r}, {kind}: {e}");
                    run.error = Some(e.to_string());
                }
            }
            run
        })
        .collect();
    let fp = spec.fingerprint();
    let summary = spec
        .kinds
        .iter()
        .map(|&kind| {
            let mut res = ExperimentResult::new(kind.label(), fp.clone());
            for run in runs.iter().filter(|r| r.kind == kind) {
                match run.ari {
                    Some(a) => {
                        res.values.push(a);
                        res.wall_times.push(run.wall_time_secs);
                    }
                    None => res.failures.push((run.repetition, run.error.clone().unwrap_or_default())),
                }
            }
            (kind, res)
        })
        .collect();
    Ok((runs, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_benchmark_is_reproducible() {
        let spec = BenchmarkSpec {
            synth: SynthConfig {
                n_clusters: 2,
                n_segments: 2,
                n_individuals: 12,
                n_times: 30,
                ..Default::default()
            },
            fit: FitConfig::new(2, 2),
            kinds: vec![PipelineKind::ClustSeg, PipelineKind::Proposed],
            repetitions: 2,
        };
        let (runs, summary) = run_synthetic_benchmark(&spec).unwrap();
        assert_eq!(runs.len(), 4);
        assert_eq!(summary.len(), 2);
        assert!(runs.iter().all(|r| r.ari.is_some()));
        let (again, _) = run_synthetic_benchmark(&spec).unwrap();
        let aris = |rs: &[BenchmarkRun]| rs.iter().map(|r| r.ari).collect::<Vec<_>>();
        assert_eq!(aris(&runs), aris(&again));
        assert_eq!(summary[1].1.values.len(), 2);
    }
}
