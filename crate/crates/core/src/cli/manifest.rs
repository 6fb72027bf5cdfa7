use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Build identity baked in at compile time.
pub const GIT_DESCRIBE: &str = env!("SKETCHGUARD_GIT_DESCRIBE");

/// Everything needed to rerun a command and get the same outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// Effective configuration after flags were applied.
    pub config: serde_json::Value,
    pub seed: u64,
    pub git_describe: String,
    pub version: String,
    pub outputs: Vec<PathBuf>,
    pub elapsed_ms: u128,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String], config: serde_json::Value, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            args: args.to_vec(),
            config,
            seed,
            git_describe: GIT_DESCRIBE.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
            elapsed_ms: 0,
        }
    }

    pub fn finish(mut self, started: Instant, outputs: Vec<PathBuf>) -> Self {
        self.elapsed_ms = started.elapsed().as_millis();
        self.outputs = outputs;
        self
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, json + "\n")
    }
}

/// `<file>.manifest.json` next to a single output file.
pub fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
