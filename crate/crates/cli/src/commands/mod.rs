pub mod benchmark;
pub mod crossval;
pub mod fit;
pub mod preprocess;
pub mod select_k;
pub mod simulate;

use std::path::{Path, PathBuf};

use clustseg::panel::{build_covariates, read_dataset, AttributeTable, CovariateSpec};
use clustseg::{FitConfig, PanelDataset};

use crate::error::CliError;
use crate::manifest::RunManifest;

/// Model settings: a TOML file and/or individual overrides.
#[derive(clap::Args, Debug, Clone)]
pub struct FitOpts {
    /// TOML file with the estimation settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of clusters.
    #[arg(long = "K", visible_alias = "clusters")]
    pub n_clusters: Option<usize>,
    /// Number of segments.
    #[arg(long = "S", visible_alias = "segments")]
    pub n_segments: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Days over which a segment transition may happen.
    #[arg(long)]
    pub window_days: Option<f64>,
}

impl FitOpts {
    pub fn resolve(&self, manifest: Option<&mut RunManifest>) -> Result<FitConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                if let Some(m) = manifest {
                    m.add_input(path)?;
                }
                crate::output::read_toml::<FitConfig>(path)?
            }
            None => {
                let (Some(k), Some(s)) = (self.n_clusters, self.n_segments) else {
                    return Err(CliError::Usage("give --config or both --K and --S".into()));
                };
                FitConfig::new(k, s)
            }
        };
        if let Some(k) = self.n_clusters {
            cfg.n_clusters = k;
        }
        if let Some(s) = self.n_segments {
            cfg.n_segments = s;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(n) = self.max_iterations {
            cfg.max_iterations = n;
        }
        if let Some(n) = self.restarts {
            cfg.n_restarts = n;
        }
        if let Some(w) = self.window_days {
            cfg.transition_window_days = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Panel input: a dataset directory, optionally with covariates rebuilt from a spec.
#[derive(clap::Args, Debug, Clone)]
pub struct DataOpts {
    /// Directory with observations.csv and covariates.csv.
    #[arg(long)]
    pub data: PathBuf,
    /// Covariate spec (TOML) replacing the dataset's covariates.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Per-individual attributes for `attribute` covariate groups.
    #[arg(long, requires = "covariates")]
    pub attributes: Option<PathBuf>,
}

impl DataOpts {
    pub fn load(&self, manifest: &mut RunManifest) -> Result<PanelDataset, CliError> {
        manifest.add_input(&self.data)?;
        let ds = read_dataset(&self.data)?;
        let Some(spec_path) = &self.covariates else {
            return Ok(ds);
        };
        manifest.add_input(spec_path)?;
        let text = std::fs::read_to_string(spec_path).map_err(|e| CliError::io(spec_path, e))?;
        let spec = CovariateSpec::from_toml_str(&text)?;
        let attrs = match &self.attributes {
            Some(p) => {
                manifest.add_input(p)?;
                Some(AttributeTable::from_csv_path(p)?)
            }
            None => None,
        };
        let covs = build_covariates(&spec, ds.dates(), ds.individual_ids(), attrs.as_ref())?;
        Ok(ds.with_covariates(covs)?)
    }
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| CliError::Usage(format!("bad list item `{p}`: {e}"))))
        .collect()
}

pub fn out_dir(path: &Path) -> Result<&Path, CliError> {
    crate::output::ensure_dir(path)?;
    Ok(path)
}
