//! Run directories and output tagging.
//!
//! A run is keyed by a short hash of the exact config bytes plus any
//! `--seed` override, so reruns of the same configuration land in the same
//! directory and different configurations never collide. Every file written
//! embeds that hash and the run seed: CSVs start with a
//! `# config_hash=… seed=…` comment line, JSON files carry the same values
//! as fields (checkpoints in their `provenance` field).

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use ksm::error::Result;
use sha2::{Digest, Sha256};

/// Short hex digest of the config file bytes, folding in the seed override
/// when one was given (an override changes the outputs, so it must change
/// the run directory).
pub fn config_hash(config_bytes: &[u8], seed_override: Option<u64>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config_bytes);
    if let Some(seed) = seed_override {
        hasher.update(b"seed-override:");
        hasher.update(seed.to_le_bytes());
    }
    let digest = hasher.finalize();
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

/// Output root: `--out` beats the `KSM_OUT` environment variable beats `./out`.
pub fn resolve_out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| env::var_os("KSM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Where one run writes, and the identity stamped into everything it writes.
pub struct RunContext {
    pub config_hash: String,
    pub seed: u64,
    pub dir: PathBuf,
}

impl RunContext {
    pub fn create(root: &Path, config_hash: String, seed: u64) -> Result<RunContext> {
        let dir = root.join(&config_hash);
        fs::create_dir_all(&dir)?;
        Ok(RunContext {
            config_hash,
            seed,
            dir,
        })
    }

    /// The identity stamp embedded in checkpoint files.
    pub fn provenance(&self) -> String {
        format!("config_hash={} seed={}", self.config_hash, self.seed)
    }

    /// Creates (if needed) and returns the `reports/` subdirectory.
    pub fn reports_dir(&self) -> Result<PathBuf> {
        let dir = self.dir.join("reports");
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    /// Writes a CSV body under the identity comment line.
    pub fn write_tagged_csv(&self, path: &Path, body: &[u8]) -> Result<()> {
        let mut out = format!("# {}\n", self.provenance()).into_bytes();
        out.extend_from_slice(body);
        fs::write(path, out)?;
        Ok(())
    }

    /// Writes pretty-printed JSON with `config_hash` and `seed` injected at
    /// the top level.
    pub fn write_json(&self, path: &Path, value: serde_json::Value) -> Result<()> {
        let mut value = value;
        let obj = value
            .as_object_mut()
            .expect("run outputs are JSON objects");
        obj.insert("config_hash".to_string(), self.config_hash.clone().into());
        obj.insert("seed".to_string(), self.seed.into());
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
