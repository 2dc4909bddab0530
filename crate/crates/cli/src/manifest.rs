use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use agrishare::hash::Fnv64;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

/// What produced an output: the command, every resolved setting and the
/// hashes of the inputs it read. Written before the output itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, serde_json::Value>,
    pub seeds: Vec<u64>,
    /// Input path → FNV-1a 64 of its bytes (files) or of its sorted entries (directories).
    pub input_hashes: BTreeMap<String, String>,
    pub tool_version: String,
}

fn hash_into(h: &mut Fnv64, path: &Path) -> std::io::Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for e in entries {
            if e.to_string_lossy().ends_with(MANIFEST_SUFFIX) {
                continue;
            }
            h.write(e.file_name().unwrap_or_default().as_encoded_bytes());
            hash_into(h, &e)?;
        }
    } else {
        h.write(&std::fs::read(path)?);
    }
    Ok(())
}

pub fn hash_path(path: &Path) -> Result<String, CliError> {
    let mut h = Fnv64::new();
    hash_into(&mut h, path).map_err(|e| CliError::Validation(format!("cannot read input {}: {e}", path.display())))?;
    Ok(format!("{:016x}", h.finish()))
}

/// Manifest location for an output file or directory.
pub fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join(format!("run{MANIFEST_SUFFIX}"))
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(MANIFEST_SUFFIX);
        PathBuf::from(s)
    }
}

impl RunManifest {
    pub fn new(command: &str, config: BTreeMap<String, serde_json::Value>, seeds: Vec<u64>, inputs: &[PathBuf]) -> Result<Self, CliError> {
        let mut input_hashes = BTreeMap::new();
        for p in inputs {
            input_hashes.insert(p.display().to_string(), hash_path(p)?);
        }
        Ok(RunManifest {
            command: command.to_owned(),
            config,
            seeds,
            input_hashes,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        })
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        let path = manifest_path(out);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    /// Inputs whose current hash differs from the recorded one.
    pub fn stale_inputs(&self) -> Vec<String> {
        self.input_hashes
            .iter()
            .filter(|(p, h)| hash_path(Path::new(p)).map_or(true, |now| &now != *h))
            .map(|(p, _)| p.clone())
            .collect()
    }
}
