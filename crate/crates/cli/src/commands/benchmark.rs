use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::json;

use clustseg::eval::{run_synthetic_benchmark, BenchmarkRun, BenchmarkSpec, ExperimentResult};
use clustseg::pipelines::PipelineKind;
use clustseg::synth::SynthConfig;
use clustseg::FitConfig;

use super::{out_dir, parse_list};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::output::{csv_writer, num, read_toml, write_json};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// TOML file describing the grid; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Panel sizes (I = T) for the first block, e.g. `50,100,500,1000`.
    #[arg(long)]
    sizes: Option<String>,
    /// Coefficient scales for the second block, e.g. `0,0.5,1,1.5`.
    #[arg(long)]
    sigma_alphas: Option<String>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Comma-separated methods.
    #[arg(long)]
    kinds: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn default_kinds() -> Vec<PipelineKind> {
    // clust_seg_then_reg shares clust_seg's partition
    PipelineKind::ALL.into_iter().filter(|k| *k != PipelineKind::ClustSegThenReg).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default = "default_kinds")]
    pub kinds: Vec<PipelineKind>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// First block: `I = T = size` with `reference_sigma_alpha`.
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_reference_sigma_alpha")]
    pub reference_sigma_alpha: f64,
    /// Second block: `I = T = reference_size` with each scale.
    #[serde(default = "default_sigma_alphas")]
    pub sigma_alphas: Vec<f64>,
    #[serde(default = "default_reference_size")]
    pub reference_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Generator settings other than size, scale and seed.
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default = "default_fit")]
    pub fit: FitConfig,
}

fn default_repetitions() -> usize {
    10
}
fn default_sizes() -> Vec<usize> {
    vec![50, 100, 500, 1000]
}
fn default_sigma_alphas() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 1.5]
}
fn default_reference_sigma_alpha() -> f64 {
    1.0
}
fn default_reference_size() -> usize {
    100
}
fn default_fit() -> FitConfig {
    FitConfig::new(4, 4)
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, Serialize)]
struct Cell {
    block: &'static str,
    n_individuals: usize,
    n_times: usize,
    sigma_alpha: f64,
}

impl Cell {
    fn label(&self) -> String {
        match self.block {
            "size" => format!("I=T={}", self.n_individuals),
            _ => format!("sigma_alpha={}", self.sigma_alpha),
        }
    }
}

pub fn run(a: Args, argv: &[String]) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("benchmark", argv, None, json!(null));
    let mut cfg = match &a.config {
        Some(p) => {
            manifest.add_input(p)?;
            read_toml::<BenchmarkConfig>(p)?
        }
        None => BenchmarkConfig::default(),
    };
    if let Some(s) = &a.sizes {
        cfg.sizes = parse_list(s)?;
    }
    if let Some(s) = &a.sigma_alphas {
        cfg.sigma_alphas = parse_list(s)?;
    }
    if let Some(n) = a.repetitions {
        cfg.repetitions = n;
    }
    if let Some(k) = &a.kinds {
        cfg.kinds = parse_list(k)?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    manifest.seed = Some(cfg.seed);
    manifest.config = serde_json::to_value(&cfg)?;

    let mut cells: Vec<Cell> = cfg
        .sizes
        .iter()
        .map(|&n| Cell {
            block: "size",
            n_individuals: n,
            n_times: n,
            sigma_alpha: cfg.reference_sigma_alpha,
        })
        .collect();
    cells.extend(cfg.sigma_alphas.iter().map(|&s| Cell {
        block: "sigma_alpha",
        n_individuals: cfg.reference_size,
        n_times: cfg.reference_size,
        sigma_alpha: s,
    }));

    let mut results: Vec<(Cell, Vec<BenchmarkRun>, Vec<(PipelineKind, ExperimentResult)>)> = Vec::new();
    for cell in cells {
        log::info!("benchmark cell {}", cell.label());
        let spec = BenchmarkSpec {
            synth: SynthConfig {
                n_individuals: cell.n_individuals,
                n_times: cell.n_times,
                sigma_alpha: cell.sigma_alpha,
                seed: cfg.seed,
                ..cfg.synth.clone()
            },
            fit: FitConfig {
                seed: cfg.seed,
                ..cfg.fit.clone()
            },
            kinds: cfg.kinds.clone(),
            repetitions: cfg.repetitions,
        };
        let (runs, summary) = run_synthetic_benchmark(&spec)?;
        results.push((cell, runs, summary));
    }

    let dir = out_dir(&a.out)?;
    let mut w = csv_writer(&dir.join("runs.csv"))?;
    w.write_record([
        "block", "n_individuals", "n_times", "sigma_alpha", "repetition", "kind", "data_seed", "fit_seed", "ari", "n_params", "converged", "error",
    ])?;
    let mut t = csv_writer(&dir.join("timings.csv"))?;
    t.write_record(["block", "n_individuals", "n_times", "sigma_alpha", "repetition", "kind", "wall_time_secs"])?;
    for (cell, runs, _) in &results {
        for r in runs {
            let base = [
                cell.block.to_string(),
                cell.n_individuals.to_string(),
                cell.n_times.to_string(),
                num(cell.sigma_alpha),
                r.repetition.to_string(),
                r.kind.to_string(),
            ];
            let mut row = base.to_vec();
            row.extend([
                r.data_seed.to_string(),
                r.fit_seed.to_string(),
                r.ari.map(num).unwrap_or_default(),
                r.n_params.to_string(),
                r.converged.to_string(),
                r.error.clone().unwrap_or_default(),
            ]);
            w.write_record(&row)?;
            let mut trow = base.to_vec();
            trow.push(num(r.wall_time_secs));
            t.write_record(&trow)?;
        }
    }
    w.flush().map_err(|e| CliError::io(dir, e))?;
    t.flush().map_err(|e| CliError::io(dir, e))?;

    let mut w = csv_writer(&dir.join("summary.csv"))?;
    w.write_record(["block", "n_individuals", "n_times", "sigma_alpha", "kind", "label", "mean_ari", "std_ari", "n_runs", "n_failed"])?;
    let mut json_cells = Vec::new();
    for (cell, _, summary) in &results {
        for (kind, r) in summary {
            w.write_record([
                cell.block.to_string(),
                cell.n_individuals.to_string(),
                cell.n_times.to_string(),
                num(cell.sigma_alpha),
                kind.to_string(),
                kind.label().to_string(),
                num(r.mean()),
                num(r.std()),
                r.values.len().to_string(),
                r.failures.len().to_string(),
            ])?;
        }
        json_cells.push(json!({
            "cell": cell,
            "results": summary.iter().map(|(k, r)| json!({
                "kind": k, "values": r.values, "mean": r.mean(), "std": r.std(), "failures": r.failures,
                "config_fingerprint": r.config_fingerprint,
            })).collect::<Vec<_>>(),
        }));
    }
    w.flush().map_err(|e| CliError::io(dir, e))?;
    write_json(&dir.join("summary.json"), &json_cells)?;
    std::fs::write(dir.join("table.md"), render_table(&results, &cfg.kinds)).map_err(|e| CliError::io(dir, e))?;

    for f in ["runs.csv", "timings.csv", "summary.csv", "summary.json", "table.md"] {
        manifest.add_output(f);
    }
    manifest.write(dir)
}

/// Methods as rows, grid cells as columns, `mean +- std` in each entry; one table per block.
fn render_table(results: &[(Cell, Vec<BenchmarkRun>, Vec<(PipelineKind, ExperimentResult)>)], kinds: &[PipelineKind]) -> String {
    let mut out = String::from("Mean and standard deviation of the joint adjusted Rand index.\n");
    for block in ["size", "sigma_alpha"] {
        let cells: Vec<_> = results.iter().filter(|r| r.0.block == block).collect();
        if cells.is_empty() {
            continue;
        }
        out.push('\n');
        let _ = write!(out, "| method |");
        for c in &cells {
            let _ = write!(out, " {} |", c.0.label());
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(cells.len()));
        out.push('\n');
        for kind in kinds {
            let _ = write!(out, "| {} |", kind.label());
            for c in &cells {
                match c.2.iter().find(|(k, _)| k == kind) {
                    Some((_, r)) if !r.values.is_empty() => {
                        let _ = write!(out, " {:.3} +- {:.3} |", r.mean(), r.std());
                    }
                    _ => out.push_str(" n/a |"),
                }
            }
            out.push('\n');
        }
    }
    out
}
