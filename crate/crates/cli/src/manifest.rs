use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Completion record of one run. Written last; its presence marks success.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    pub version: String,
    pub started_unix_ms: u128,
    pub wall_clock_seconds: f64,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
}

/// Tracks a run in progress.
pub struct Run {
    manifest: RunManifest,
    clock: Instant,
}

impl Run {
    pub fn start(command: &str, output_dir: &Path, seed: Option<u64>) -> anyhow::Result<Self> {
        std::fs::create_dir_all(output_dir)?;
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        Ok(Self {
            manifest: RunManifest {
                command: command.to_string(),
                config_path: None,
                output_dir: output_dir.to_path_buf(),
                seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                started_unix_ms: started,
                wall_clock_seconds: 0.0,
                warnings: Vec::new(),
                outputs: Vec::new(),
            },
            clock: Instant::now(),
        })
    }

    pub fn config(&mut self, path: &Path) {
        self.manifest.config_path = Some(path.to_path_buf());
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        if !self.manifest.warnings.contains(&msg) {
            eprintln!("warning: {msg}");
            self.manifest.warnings.push(msg);
        }
    }

    /// Path of a named output inside the output directory, recorded in the
    /// manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.manifest.output_dir.join(name)
    }

    pub fn finish(mut self) -> anyhow::Result<RunManifest> {
        self.manifest.wall_clock_seconds = self.clock.elapsed().as_secs_f64();
        let dir = &self.manifest.output_dir;
        let tmp = dir.join(format!("{MANIFEST_NAME}.tmp"));
        std::fs::write(&tmp, serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        std::fs::rename(&tmp, dir.join(MANIFEST_NAME))?;
        Ok(self.manifest)
    }
}
