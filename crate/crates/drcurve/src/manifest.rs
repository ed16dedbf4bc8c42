//! Run manifests: every command writes a JSON manifest holding the
//! effective configuration, input hashes, seed and toolkit version.
//! Output files reference the manifest through its `run_id` column.
//!
//! The run id hashes (command, config, inputs, seed, version) but not the
//! timestamps, so identical runs share an id and their data outputs are
//! byte-identical.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::util::fnv1a64_hex;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    /// Input name -> content hash.
    pub input_hashes: BTreeMap<String, String>,
    pub seed: u64,
    pub version: String,
    pub created_unix: u64,
    pub run_id: String,
    /// Output file name -> content hash, filled after outputs are written.
    #[serde(default)]
    pub output_hashes: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        let mut m = RunManifest {
            command: command.to_string(),
            config,
            input_hashes: BTreeMap::new(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            run_id: String::new(),
            output_hashes: BTreeMap::new(),
        };
        m.refresh_run_id();
        m
    }

    pub fn add_input_file(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.input_hashes
            .insert(path.display().to_string(), fnv1a64_hex(&bytes));
        self.refresh_run_id();
        Ok(())
    }

    pub fn add_output_file(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.output_hashes
            .insert(path.display().to_string(), fnv1a64_hex(&bytes));
        Ok(())
    }

    fn refresh_run_id(&mut self) {
        let key = format!(
            "{}|{}|{:?}|{}|{}",
            self.command,
            self.config,
            self.input_hashes,
            self.seed,
            self.version
        );
        self.run_id = fnv1a64_hex(key.as_bytes());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}

/// Append a constant `run_id` column to CSV content.
pub fn stamp_csv(csv_text: &str, run_id: &str) -> String {
    let mut out = String::with_capacity(csv_text.len() + 20 * 64);
    for (i, line) in csv_text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        out.push_str(line);
        out.push(',');
        out.push_str(if i == 0 { "run_id" } else { run_id });
        out.push('\n');
    }
    out
}
