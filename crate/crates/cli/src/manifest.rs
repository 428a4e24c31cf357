use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command: arguments, resolved settings and
/// the content hash of every input. Contains nothing time-dependent.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &'static str, argv: &[String], seed: Option<u64>, config: serde_json::Value) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            args: argv.iter().skip(1).cloned().collect(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Hashes a file, or every file directly inside a directory.
    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        let mut files: Vec<PathBuf> = if path.is_dir() {
            std::fs::read_dir(path)
                .map_err(|e| CliError::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect()
        } else {
            vec![path.to_path_buf()]
        };
        files.sort();
        for f in files {
            let bytes = std::fs::read(&f).map_err(|e| CliError::io(&f, e))?;
            self.inputs.push(InputFile {
                path: f.display().to_string(),
                sha256: clustseg::util::hex(&Sha256::digest(&bytes)),
            });
        }
        Ok(())
    }

    pub fn add_output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn write(mut self, dir: &Path) -> Result<(), CliError> {
        self.outputs.push("manifest.json".into());
        self.outputs.sort();
        self.outputs.dedup();
        crate::output::write_json(&dir.join("manifest.json"), &self)
    }
}
