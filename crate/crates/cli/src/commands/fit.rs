use std::path::{Path, PathBuf};

use serde_json::json;

use clustseg::em::e_step;
use clustseg::model::{mean_field, segment_prior_probs};
use clustseg::pipelines::{run_pipeline, PipelineKind, PipelineOutput};
use clustseg::PanelDataset;

use super::{out_dir, DataOpts, FitOpts};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::output::{csv_writer, num, write_json};

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    data: DataOpts,
    #[command(flatten)]
    fit: FitOpts,
    /// Method: proposed, clust_seg, reg_then_clust_seg, clust_seg_then_reg,
    /// reg_clust_seg or clust_reg_then_seg_reg.
    #[arg(long, default_value = "proposed")]
    pipeline: String,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(a: Args, argv: &[String]) -> Result<(), CliError> {
    let kind: PipelineKind = a.pipeline.replace("clustseg", "clust_seg").parse()?;
    let mut manifest = RunManifest::new("fit", argv, None, json!(null));
    let cfg = a.fit.resolve(Some(&mut manifest))?;
    let ds = a.data.load(&mut manifest)?;
    manifest.seed = Some(cfg.seed);
    manifest.config = json!({ "pipeline": kind, "fit": cfg });
    let out = run_pipeline(kind, &ds, &cfg)?;
    let dir = out_dir(&a.out)?;
    write_fit_outputs(&out, &ds, dir, &mut manifest)?;
    write_json(&dir.join("timings.json"), &json!({ "wall_time_secs": out.wall_time_secs }))?;
    manifest.add_output("timings.json");
    manifest.write(dir)
}

pub fn write_fit_outputs(out: &PipelineOutput, ds: &PanelDataset, dir: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    let p = &out.params;
    let (k_n, s_n, d_n) = (p.n_clusters, p.n_segments, p.n_dims);
    let ids = ds.individual_ids();
    let dates = ds.dates();

    write_json(
        &dir.join("params.json"),
        &json!({
            "pipeline": out.kind,
            "n_params": out.n_params,
            "covariate_names": ds.covariate_names(),
            "params": p,
        }),
    )?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "pipeline": out.kind,
            "label": out.kind.label(),
            "n_params": out.n_params,
            "train_log_likelihood": out.train_log_likelihood,
            "converged": out.converged,
            "lambda": p.lambda,
            "stages": out.stages.iter().map(|(name, r)| json!({
                "stage": name,
                "iterations": r.iterations,
                "converged": r.converged,
                "final_log_likelihood": r.final_log_likelihood(),
                "non_monotone_steps": r.non_monotone_steps,
                "reseeded_clusters": r.reseeded_clusters,
                "segment_solver_unconverged": r.segment_solver_unconverged,
                "regression_skips": r.regression_skips,
                "restart": r.restart,
            })).collect::<Vec<_>>(),
        }),
    )?;

    let mut w = csv_writer(&dir.join("partition_clusters.csv"))?;
    w.write_record(["individual", "cluster"])?;
    for (i, id) in ids.iter().enumerate() {
        w.write_record([id.clone(), out.partition.cluster[i].to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(dir, e))?;

    let mut w = csv_writer(&dir.join("partition_segments.csv"))?;
    w.write_record(["individual", "date", "segment"])?;
    for (i, id) in ids.iter().enumerate() {
        for (t, d) in dates.iter().enumerate() {
            if let Some(s) = out.partition.segment(i, t) {
                w.write_record([id.clone(), d.to_string(), s.to_string()])?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(dir, e))?;

    let resp = e_step(p, ds)?;
    let mut w = csv_writer(&dir.join("responsibilities.csv"))?;
    let mut header = vec!["individual".to_string()];
    header.extend((0..k_n).map(|k| format!("cluster_{k}")));
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(resp.rho(i).iter().map(|&r| num(r)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(dir, e))?;

    let mut w = csv_writer(&dir.join("trace.csv"))?;
    w.write_record(["stage", "iteration", "log_likelihood"])?;
    for (name, r) in &out.stages {
        for (j, ll) in r.loglik_trace.iter().enumerate() {
            w.write_record([name.clone(), j.to_string(), num(*ll)])?;
        }
    }
    w.flush().map_err(|e| CliError::io(dir, e))?;

    // long format: one row per (cluster, segment, dimension, term)
    let mut w = csv_writer(&dir.join("coefficients.csv"))?;
    w.write_record(["cluster", "segment", "dim", "term", "value"])?;
    for k in 0..k_n {
        for s in 0..s_n {
            for d in 0..d_n {
                w.write_record([k.to_string(), s.to_string(), d.to_string(), "intercept".into(), num(p.m(k, s)[d])])?;
                for (l, name) in ds.covariate_names().iter().enumerate() {
                    w.write_record([k.to_string(), s.to_string(), d.to_string(), name.clone(), num(p.alpha(k, s)[l * d_n + d])])?;
                }
                w.write_record([k.to_string(), s.to_string(), d.to_string(), "variance".into(), num(p.sigma(k, s)[d])])?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(dir, e))?;

    let mut w = csv_writer(&dir.join("segment_prior.csv"))?;
    w.write_record(["cluster", "date", "segment", "probability"])?;
    for (t, d) in dates.iter().enumerate() {
        let probs = segment_prior_probs(p, ds.time()[t]);
        for k in 0..k_n {
            for s in 0..s_n {
                w.write_record([k.to_string(), d.to_string(), s.to_string(), num(probs[k * s_n + s])])?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(dir, e))?;

    let mut w = csv_writer(&dir.join("fitted_means.csv"))?;
    w.write_record(["individual", "date", "dim", "cluster", "segment", "observed", "fitted"])?;
    for (i, id) in ids.iter().enumerate() {
        let k = out.partition.cluster[i];
        for (t, date) in dates.iter().enumerate() {
            let Some(s) = out.partition.segment(i, t) else { continue };
            let mu = mean_field(p, ds.x(i, t), k, s);
            for d in 0..d_n {
                w.write_record([
                    id.clone(),
                    date.to_string(),
                    d.to_string(),
                    k.to_string(),
                    s.to_string(),
                    num(ds.y(i, t)[d]),
                    num(mu[d]),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(dir, e))?;

    for f in [
        "params.json",
        "summary.json",
        "partition_clusters.csv",
        "partition_segments.csv",
        "responsibilities.csv",
        "trace.csv",
        "coefficients.csv",
        "segment_prior.csv",
        "fitted_means.csv",
    ] {
        manifest.add_output(f);
    }
    Ok(())
}
