use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use seqtrans::{Error, Result};

#[derive(Serialize)]
struct InputFile {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a C,
    inputs: Vec<InputFile>,
    outputs: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes `manifest.json` into `out`: resolved config, tool version, and
/// checksums of every input file.
pub fn write_manifest<C: Serialize>(
    out: &Path,
    command: &str,
    config: &C,
    inputs: &[PathBuf],
    outputs: &[&str],
) -> Result<()> {
    let inputs = inputs
        .iter()
        .map(|p| {
            Ok(InputFile {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        inputs,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    seqtrans::io::write_json(out.join("manifest.json"), &manifest)
}
