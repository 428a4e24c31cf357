use std::path::PathBuf;

use serde_json::json;

use clustseg::eval::{cross_validate, welch_t_test};
use clustseg::pipelines::PipelineKind;

use super::{out_dir, parse_list, DataOpts, FitOpts};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::output::{csv_writer, num, write_json};

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    data: DataOpts,
    #[command(flatten)]
    fit: FitOpts,
    /// Comma-separated methods; all six by default.
    #[arg(long)]
    kinds: Option<String>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(a: Args, argv: &[String]) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("crossval", argv, None, json!(null));
    let cfg = a.fit.resolve(Some(&mut manifest))?;
    let ds = a.data.load(&mut manifest)?;
    let kinds: Vec<PipelineKind> = match &a.kinds {
        Some(k) => parse_list(k)?,
        None => PipelineKind::ALL.to_vec(),
    };
    manifest.seed = Some(cfg.seed);
    manifest.config = json!({ "fit": cfg, "kinds": kinds, "folds": a.folds });
    let cv = cross_validate(&ds, &cfg, &kinds, a.folds)?;

    let dir = out_dir(&a.out)?;
    let mut w = csv_writer(&dir.join("folds.csv"))?;
    w.write_record(["individual", "fold"])?;
    let mut fold_of = vec![0; ds.n_individuals()];
    for (f, members) in cv.folds.iter().enumerate() {
        for &i in members {
            fold_of[i] = f;
        }
    }
    for (i, id) in ds.individual_ids().iter().enumerate() {
        w.write_record([id.clone(), fold_of[i].to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(dir, e))?;

    let mut w = csv_writer(&dir.join("cv_runs.csv"))?;
    w.write_record(["fold", "kind", "n_params", "validation_log_likelihood", "training_fingerprint", "error"])?;
    let mut t = csv_writer(&dir.join("timings.csv"))?;
    t.write_record(["fold", "kind", "wall_time_secs"])?;
    for r in &cv.records {
        w.write_record([
            r.fold.to_string(),
            r.kind.to_string(),
            r.n_params.to_string(),
            r.validation_log_likelihood.map(num).unwrap_or_default(),
            r.training_fingerprint.clone(),
            r.error.clone().unwrap_or_default(),
        ])?;
        t.write_record([r.fold.to_string(), r.kind.to_string(), num(r.wall_time_secs)])?;
    }
    w.flush().map_err(|e| CliError::io(dir, e))?;
    t.flush().map_err(|e| CliError::io(dir, e))?;

    let proposed = cv.result(PipelineKind::Proposed).map(|r| r.values.clone());
    let summary: Vec<_> = cv
        .results
        .iter()
        .map(|(kind, r)| {
            let vs_proposed = match (&proposed, *kind) {
                (Some(p), k) if k != PipelineKind::Proposed => welch_t_test(p, &r.values).ok(),
                _ => None,
            };
            json!({
                "kind": kind,
                "label": kind.label(),
                "n_params": kind.n_params(cfg.n_clusters, cfg.n_segments, ds.n_dims(), ds.n_covariates()),
                "values": r.values,
                "mean": r.mean(),
                "std": r.std(),
                "failures": r.failures,
                "welch_vs_proposed": vs_proposed,
            })
        })
        .collect();
    write_json(&dir.join("summary.json"), &summary)?;
    for f in ["folds.csv", "cv_runs.csv", "timings.csv", "summary.json"] {
        manifest.add_output(f);
    }
    manifest.write(dir)
}
