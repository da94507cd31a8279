//! Run manifest written next to every artifact.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timings: Vec<PhaseTiming>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `<artifact>.manifest.json`.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

pub struct Recorder {
    manifest: RunManifest,
    phase_start: Option<(String, Instant)>,
}

impl Recorder {
    pub fn new(command: &str, threads: Option<usize>) -> Self {
        Recorder {
            manifest: RunManifest {
                tool: "stabletree",
                version: env!("CARGO_PKG_VERSION"),
                command: command.to_string(),
                argv: std::env::args().collect(),
                seed: None,
                threads,
                config: serde_json::Value::Null,
                inputs: Vec::new(),
                outputs: Vec::new(),
                timings: Vec::new(),
            },
            phase_start: None,
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn config(&mut self, config: &impl Serialize) -> CliResult<()> {
        self.manifest.config = serde_json::to_value(config)?;
        Ok(())
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.manifest.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        self.manifest.outputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Ends the running phase, if any, and starts `name`.
    pub fn phase(&mut self, name: &str) {
        self.end_phase();
        self.phase_start = Some((name.to_string(), Instant::now()));
    }

    fn end_phase(&mut self) {
        if let Some((name, start)) = self.phase_start.take() {
            self.manifest.timings.push(PhaseTiming {
                phase: name,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }

    /// Writes the manifest next to `artifact`.
    pub fn finish(mut self, artifact: &Path) -> CliResult<PathBuf> {
        self.end_phase();
        let path = manifest_path(artifact);
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}
