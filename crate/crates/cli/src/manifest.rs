//! Run manifests: what went into an artifact and how long each stage took.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub stage: String,
    pub millis: f64,
}

/// The reproducible part (inputs, options, seed, version) is hashed; the
/// hash is stamped into JSON outputs and timings are recorded beside it.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub inputs: Vec<FileDigest>,
    pub options: Vec<(String, String)>,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hash: Option<String>,
    pub outputs: Vec<FileDigest>,
    pub timings: Vec<Timing>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) })
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            tool: "specmine",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            inputs: Vec::new(),
            options: Vec::new(),
            seed: None,
            hash: None,
            outputs: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(digest(path)?);
        Ok(())
    }

    pub fn option(&mut self, key: &str, value: impl ToString) {
        self.options.push((key.to_string(), value.to_string()));
    }

    /// Hash of everything that determines the outputs.
    pub fn seal(&mut self) -> String {
        let key = serde_json::json!({
            "tool": self.tool,
            "version": self.version,
            "command": self.command,
            "inputs": self.inputs.iter().map(|d| &d.sha256).collect::<Vec<_>>(),
            "options": self.options,
            "seed": self.seed,
        });
        let h = sha256_hex(key.to_string().as_bytes());
        self.hash = Some(h.clone());
        h
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing { stage: stage.to_string(), millis: start.elapsed().as_secs_f64() * 1e3 });
        out
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(digest(path)?);
        Ok(())
    }

    /// Writes `<out>.manifest.json` next to the primary output.
    pub fn write_next_to(&self, out: &Path) -> Result<PathBuf> {
        let mut name = out.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
