use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Record of one command run: what went in, what came out and how long it took.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, u128>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub counts: BTreeMap<String, usize>,
}

pub struct Recorder {
    manifest: RunManifest,
    out_dir: PathBuf,
    clock: Instant,
}

impl Recorder {
    pub fn new(command: &str, seed: Option<u64>, config: &impl Serialize, out_dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
        let config = serde_json::to_value(config).expect("config serializes");
        let config_sha256 = sha256_hex(config.to_string().as_bytes());
        Ok(Self {
            manifest: RunManifest {
                command: command.to_string(),
                toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                config,
                config_sha256,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                timings_ms: BTreeMap::new(),
                counts: BTreeMap::new(),
            },
            out_dir: out_dir.to_path_buf(),
            clock: Instant::now(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let d = file_digest(path)?;
        self.manifest.inputs.insert(path.display().to_string(), d);
        Ok(())
    }

    /// Closes the current stage and starts timing the next.
    pub fn stage(&mut self, name: &str) {
        self.manifest.timings_ms.insert(name.to_string(), self.clock.elapsed().as_millis());
        self.clock = Instant::now();
    }

    pub fn count(&mut self, name: &str, n: usize) {
        self.manifest.counts.insert(name.to_string(), n);
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Writes `bytes` to `name` under the output directory and records its digest.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        self.manifest.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn finish(self) -> Result<(), CliError> {
        let p = self.out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&p, text + "\n").map_err(|e| CliError::io(&p, e))
    }
}
