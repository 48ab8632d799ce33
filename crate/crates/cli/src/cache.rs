//! Content-hash cache that turns re-runs of unchanged stages into no-ops.
//!
//! A stage key hashes the stage name, the crate version, the relevant
//! settings and the bytes of every input file. The key and the hashes of
//! the stage's outputs are kept under `<output>/.cache/<stage>.json`; a
//! stage is fresh when the key matches and every output is still intact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const CACHE_DIR: &str = ".cache";

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn stage_key(stage: &str, settings: &BTreeMap<String, String>, inputs: &[PathBuf]) -> Result<String, CliError> {
    let mut h = Sha256::new();
    h.update(stage.as_bytes());
    h.update([0]);
    h.update(rfa_core::VERSION.as_bytes());
    h.update([0]);
    for (k, v) in settings {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update([0]);
    }
    for p in inputs {
        h.update(hash_file(p)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    key: String,
    /// Output path relative to the output directory, and its hash.
    outputs: BTreeMap<String, String>,
}

fn entry_path(out: &Path, stage: &str) -> PathBuf {
    out.join(CACHE_DIR).join(format!("{stage}.json"))
}

pub fn is_fresh(out: &Path, stage: &str, key: &str) -> bool {
    let Ok(text) = fs::read_to_string(entry_path(out, stage)) else {
        return false;
    };
    let Ok(entry) = serde_json::from_str::<Entry>(&text) else {
        return false;
    };
    entry.key == key
        && !entry.outputs.is_empty()
        && entry.outputs.iter().all(|(rel, h)| hash_file(&out.join(rel)).is_ok_and(|x| &x == h))
}

pub fn record(out: &Path, stage: &str, key: &str, outputs: &[PathBuf]) -> Result<(), CliError> {
    let mut map = BTreeMap::new();
    for p in outputs {
        let rel = p.strip_prefix(out).unwrap_or(p).to_string_lossy().replace('\\', "/");
        map.insert(rel, hash_file(p)?);
    }
    let entry = Entry { key: key.to_string(), outputs: map };
    let path = entry_path(out, stage);
    fs::create_dir_all(path.parent().expect("cache dir")).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    fs::write(&path, serde_json::to_string_pretty(&entry).expect("serializable"))
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}
