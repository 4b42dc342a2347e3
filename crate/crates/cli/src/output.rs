//! Output directory handling, atomic writes and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance for one command invocation.
///
/// The digest covers the command, tool version, effective configuration and
/// input contents, but not the timestamp, so identical runs share a digest
/// and produce byte-identical outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub tool_version: String,
    pub timestamp: String,
}

/// Collects outputs for one command, then writes the manifest last.
pub struct Run {
    out_dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    pub fn new(out_dir: &Path, command: &str, config: serde_json::Value, inputs: &[(&Path, &[u8])]) -> Run {
        let inputs: Vec<FileDigest> = inputs
            .iter()
            .map(|(p, bytes)| FileDigest { path: p.display().to_string(), sha256: sha256_hex(bytes) })
            .collect();
        let input_digests: Vec<&str> = inputs.iter().map(|f| f.sha256.as_str()).collect();
        let keyed = json!({
            "command": command,
            "tool_version": TOOL_VERSION,
            "config": config,
            "inputs": input_digests,
        });
        let config_digest = sha256_hex(keyed.to_string().as_bytes());
        Run {
            out_dir: out_dir.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                config_digest,
                config,
                inputs,
                outputs: Vec::new(),
                tool_version: TOOL_VERSION.to_string(),
                timestamp: chrono::Utc::now().to_rfc3339(),
            },
        }
    }

    pub fn digest(&self) -> &str {
        &self.manifest.config_digest
    }

    /// Write `contents` under the output directory and record it.
    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        write_atomic(&path, contents)?;
        self.manifest.outputs.push(FileDigest { path: path.display().to_string(), sha256: sha256_hex(contents) });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// CSV with a leading `# manifest_digest:` comment line.
    pub fn write_csv(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let text = format!("# manifest_digest: {}\n{body}", self.digest());
        self.write(name, text.as_bytes())
    }

    pub fn finish(self) -> Result<PathBuf> {
        let name = format!("manifest_{}.json", self.manifest.command.replace('-', "_"));
        let path = self.out_dir.join(name);
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_timestamp_and_tracks_config() {
        let dir = tempfile::tempdir().unwrap();
        let a = Run::new(dir.path(), "fit", json!({"k": 1}), &[]);
        let b = Run::new(dir.path(), "fit", json!({"k": 1}), &[]);
        let c = Run::new(dir.path(), "fit", json!({"k": 2}), &[]);
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
