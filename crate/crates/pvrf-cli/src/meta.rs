//! Metadata sidecars.
//!
//! Every file the tool writes gets a companion `<file>.meta.json` recording
//! the tool version, the master seed, the fully resolved parameters of the
//! run, and SHA-256 hashes of the input files — enough to reproduce the
//! artifact exactly.  Execution details that do not affect results (thread
//! count, absolute paths, wall-clock time) are deliberately excluded so the
//! sidecar itself is byte-reproducible.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use pvrf::error::Result;

/// SHA-256 of a file's bytes, hex encoded.
fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Sidecar path: the artifact path with `.meta.json` appended.
pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_os_string();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Write `<artifact>.meta.json` next to the artifact.
///
/// `params` should be the resolved parameter set of the subcommand (after
/// config-file merging), so a reader needs nothing but the sidecar to rerun
/// the command.  Keys in the emitted JSON are sorted, making the bytes
/// independent of construction order.
pub fn write_sidecar(
    artifact: &Path,
    subcommand: &str,
    seed: u64,
    params: &impl Serialize,
    inputs: &[&Path],
) -> Result<()> {
    let mut hashed = serde_json::Map::new();
    for input in inputs {
        hashed.insert(
            input.display().to_string(),
            serde_json::Value::String(format!("sha256:{}", file_hash(input)?)),
        );
    }
    let body = serde_json::json!({
        "tool": "pvrf",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "seed": seed,
        "params": serde_json::to_value(params)?,
        "inputs": serde_json::Value::Object(hashed),
    });
    let mut text = serde_json::to_string_pretty(&body)?;
    text.push('\n');
    std::fs::write(sidecar_path(artifact), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_records_inputs_and_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        std::fs::write(&input, "a,b\n1,2\n").unwrap();
        let artifact = dir.path().join("out.csv");
        std::fs::write(&artifact, "x\n").unwrap();
        let params = serde_json::json!({"tau": 2.0, "model": "gee"});
        write_sidecar(&artifact, "fit", 7, &params, &[&input]).unwrap();
        let first = std::fs::read(sidecar_path(&artifact)).unwrap();
        write_sidecar(&artifact, "fit", 7, &params, &[&input]).unwrap();
        let second = std::fs::read(sidecar_path(&artifact)).unwrap();
        assert_eq!(first, second);
        let value: serde_json::Value = serde_json::from_slice(&first).unwrap();
        assert_eq!(value["seed"], 7);
        assert_eq!(value["params"]["model"], "gee");
        let hash = value["inputs"][input.display().to_string()]
            .as_str()
            .unwrap();
        assert!(hash.starts_with("sha256:"));
        assert_eq!(hash.len(), "sha256:".len() + 64);
    }
}
