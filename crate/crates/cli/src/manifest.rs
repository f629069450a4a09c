//! Run manifests: what went in, what came out, and under which settings.
//!
//! A manifest lives next to its primary output as
//! `<output>.manifest.json`. It holds no timestamps or host details, so
//! rerunning with the same inputs and config reproduces it byte for byte.

use std::fs::{self, File};
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut reader =
        BufReader::new(File::open(path).with_context(|| format!("hashing {}", path.display()))?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn digests(files: &[(&str, &Path)]) -> Result<Vec<FileDigest>> {
    files
        .iter()
        .map(|(role, path)| {
            Ok(FileDigest {
                role: (*role).to_owned(),
                path: path.to_path_buf(),
                sha256: sha256_file(path)?,
            })
        })
        .collect()
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Hashes every input and output and writes the manifest beside the first
/// output.
pub fn write(
    command: &str,
    config: &RunConfig,
    inputs: &[(&str, &Path)],
    outputs: &[(&str, &Path)],
) -> Result<PathBuf> {
    let manifest = Manifest {
        command: command.to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        seed: config.seed,
        config: config.clone(),
        inputs: digests(inputs)?,
        outputs: digests(outputs)?,
    };
    let primary = outputs
        .first()
        .map(|(_, p)| *p)
        .context("a command must declare at least one output")?;
    let path = manifest_path(primary);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
