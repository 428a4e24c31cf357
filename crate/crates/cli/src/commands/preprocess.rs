use std::path::PathBuf;

use serde_json::json;

use clustseg::panel::{build_covariates, preprocess_ridership, read_ridership_csv, write_dataset, AttributeTable, CovariateSpec, PreprocessConfig};

use super::out_dir;
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::output::{csv_writer, read_toml, write_json};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Raw records (station_id,date,ticket_type,entries); repeat for several files.
    #[arg(long, required = true)]
    records: Vec<PathBuf>,
    /// Preprocessing settings (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Covariate spec (TOML) to expand over the resulting panel.
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long, requires = "covariates")]
    attributes: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(a: Args, argv: &[String]) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("preprocess", argv, None, json!(null));
    manifest.add_input(&a.config)?;
    let cfg: PreprocessConfig = read_toml(&a.config)?;
    let mut records = Vec::new();
    for path in &a.records {
        manifest.add_input(path)?;
        let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        records.extend(read_ridership_csv(f, &path.display().to_string())?);
    }
    let out = preprocess_ridership(&records, &cfg)?;
    let mut ds = out.dataset;
    if let Some(spec_path) = &a.covariates {
        manifest.add_input(spec_path)?;
        let text = std::fs::read_to_string(spec_path).map_err(|e| CliError::io(spec_path, e))?;
        let spec = CovariateSpec::from_toml_str(&text)?;
        let attrs = match &a.attributes {
            Some(p) => {
                manifest.add_input(p)?;
                Some(AttributeTable::from_csv_path(p)?)
            }
            None => None,
        };
        let covs = build_covariates(&spec, ds.dates(), ds.individual_ids(), attrs.as_ref())?;
        ds = ds.with_covariates(covs)?;
    }
    manifest.config = serde_json::to_value(&cfg)?;

    let dir = out_dir(&a.out)?;
    write_dataset(&ds, dir)?;
    let mut w = csv_writer(&dir.join("dropped.csv"))?;
    w.write_record(["station", "reason"])?;
    for d in &out.dropped {
        w.write_record([d.station_id.as_str(), d.reason.as_str()])?;
    }
    w.flush().map_err(|e| CliError::io(dir, e))?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "stations_kept": ds.n_individuals(),
            "stations_dropped": out.dropped.len(),
            "days": ds.n_times(),
            "covariates": ds.covariate_names(),
            "masked_fraction": ds.masked_fraction(),
            "masked_fraction_by_stage": {
                "raw": out.stage_masked_fraction[0],
                "after_outliers": out.stage_masked_fraction[1],
                "final": out.stage_masked_fraction[2],
            },
        }),
    )?;
    for f in ["observations.csv", "covariates.csv", "dropped.csv", "summary.json"] {
        manifest.add_output(f);
    }
    if dir.join("groups.json").exists() {
        manifest.add_output("groups.json");
    }
    manifest.write(dir)
}
