use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Reproducibility record written next to a command's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub created_unix: u64,
    pub config: &'a RunConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| polyprotect::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn digests(paths: &[&Path]) -> CliResult<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// `out.csv` -> `out.manifest.json`.
pub fn manifest_path(primary: &Path) -> PathBuf {
    primary.with_extension("manifest.json")
}

pub fn write_manifest(command: &str, cfg: &RunConfig, inputs: &[&Path], outputs: &[&Path]) -> CliResult<PathBuf> {
    let primary = outputs
        .first()
        .ok_or_else(|| CliError::usage("manifest needs at least one output"))?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        config: cfg,
        inputs: digests(inputs)?,
        outputs: digests(outputs)?,
    };
    let path = manifest_path(primary);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|e| polyprotect::Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}
