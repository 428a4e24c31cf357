use std::path::PathBuf;

use serde_json::json;

use clustseg::eval::slope_heuristic;

use super::{out_dir, DataOpts, FitOpts};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::output::{csv_writer, num, write_json};

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    data: DataOpts,
    /// Settings for each fit; the cluster count is replaced by each candidate.
    #[command(flatten)]
    fit: FitOpts,
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    /// Share of the largest candidates used to estimate the slope.
    #[arg(long, default_value_t = 0.5)]
    window_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(mut a: Args, argv: &[String]) -> Result<(), CliError> {
    if a.k_max < a.k_min {
        return Err(CliError::Usage("--k-max must not be below --k-min".into()));
    }
    let mut manifest = RunManifest::new("select-k", argv, None, json!(null));
    a.fit.n_clusters.get_or_insert(a.k_min);
    let cfg = a.fit.resolve(Some(&mut manifest))?;
    let ds = a.data.load(&mut manifest)?;
    let k_range: Vec<usize> = (a.k_min..=a.k_max).collect();
    manifest.seed = Some(cfg.seed);
    manifest.config = json!({ "fit": cfg, "k_range": k_range, "window_fraction": a.window_fraction });
    let sel = slope_heuristic(&ds, &cfg, &k_range, a.window_fraction)?;

    let dir = out_dir(&a.out)?;
    let mut w = csv_writer(&dir.join("curve.csv"))?;
    w.write_record(["k", "n_params", "log_likelihood", "penalized"])?;
    for p in &sel.points {
        w.write_record([p.k.to_string(), p.n_params.to_string(), num(p.log_likelihood), num(p.penalized)])?;
    }
    w.flush().map_err(|e| CliError::io(dir, e))?;
    write_json(&dir.join("selection.json"), &sel)?;
    manifest.add_output("curve.csv");
    manifest.add_output("selection.json");
    manifest.write(dir)
}
