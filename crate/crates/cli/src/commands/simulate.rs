use std::path::PathBuf;

use clustseg::synth::{dump, generate, SynthConfig};

use super::out_dir;
use crate::error::CliError;
use crate::manifest::RunManifest;

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long = "K", visible_alias = "clusters", default_value_t = 4)]
    n_clusters: usize,
    #[arg(long = "S", visible_alias = "segments", default_value_t = 4)]
    n_segments: usize,
    #[arg(long = "I", visible_alias = "individuals", default_value_t = 100)]
    n_individuals: usize,
    #[arg(long = "T", visible_alias = "times", default_value_t = 100)]
    n_times: usize,
    #[arg(long = "D", visible_alias = "dims", default_value_t = 1)]
    n_dims: usize,
    /// Standard deviation of the regression coefficients.
    #[arg(long, default_value_t = 1.0)]
    sigma_alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_variance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(a: Args, argv: &[String]) -> Result<(), CliError> {
    let cfg = SynthConfig {
        n_clusters: a.n_clusters,
        n_segments: a.n_segments,
        n_individuals: a.n_individuals,
        n_times: a.n_times,
        n_dims: a.n_dims,
        sigma_alpha: a.sigma_alpha,
        noise_variance: a.noise_variance,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let truth = generate(&cfg)?;
    let dir = out_dir(&a.out)?;
    dump(&truth, dir)?;
    let mut manifest = RunManifest::new("simulate", argv, Some(a.seed), serde_json::to_value(&cfg)?);
    for f in ["observations.csv", "covariates.csv", "labels.csv", "truth.json"] {
        manifest.add_output(f);
    }
    if dir.join("groups.json").exists() {
        manifest.add_output("groups.json");
    }
    manifest.write(dir)
}
