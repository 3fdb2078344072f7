use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClientMeta, FlConfig};
use crate::nn::ModelArch;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Per-round record, stored as `round_NNNN/round.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub participants: Vec<ClientMeta>,
    pub global_checkpoint: String,
    pub client_checkpoints: BTreeMap<usize, String>,
    /// Global test accuracy in percent.
    pub accuracy: f64,
    /// Per-label test accuracy in percent; `None` when the label has no test rows.
    pub per_label_accuracy: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub round: usize,
    pub global: String,
    #[serde(default)]
    pub clients: Vec<String>,
}

/// `manifest.toml`: everything needed to reproduce and inspect a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub arch: ModelArch,
    pub config: FlConfig,
    pub checkpoints: Vec<CheckpointEntry>,
}

/// Layout of a run directory:
///
/// ```text
/// manifest.toml
/// round_0000/global.ckpt                  initial weights
/// round_NNNN/{global.ckpt, client_<id>.ckpt, round.json}
/// ```
#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    /// Prepares an empty run directory. A non-empty `root` is an error unless
    /// `overwrite` is set, in which case it is removed first.
    pub fn create(root: impl Into<PathBuf>, overwrite: bool) -> Result<Self> {
        let root = root.into();
        if root.exists() {
            let non_empty = fs::read_dir(&root).map_err(|e| Error::io(&root, e))?.next().is_some();
            if non_empty {
                if !overwrite {
                    return Err(Error::io(
                        &root,
                        std::io::Error::new(std::io::ErrorKind::AlreadyExists, "directory is not empty (use --force to replace it)"),
                    ));
                }
                fs::remove_dir_all(&root).map_err(|e| Error::io(&root, e))?;
            }
        }
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(RunStore { root })
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let m = root.join(MANIFEST_FILE);
        if !m.is_file() {
            return Err(Error::io(&m, std::io::Error::new(std::io::ErrorKind::NotFound, "no run manifest")));
        }
        Ok(RunStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn round_dir_name(round: usize) -> String {
        format!("round_{round:04}")
    }

    pub fn global_rel(round: usize) -> String {
        format!("{}/global.ckpt", Self::round_dir_name(round))
    }

    pub fn client_rel(round: usize, client: usize) -> String {
        format!("{}/client_{client}.ckpt", Self::round_dir_name(round))
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<()> {
        let text = toml::to_string(manifest).expect("manifest is representable as TOML");
        write_atomic(&self.root.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn read_manifest(&self) -> Result<RunManifest> {
        let p = self.root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        toml::from_str(&text).map_err(|e| Error::format(&p, e.message().to_string()))
    }

    pub fn write_round_log(&self, log: &RoundLog) -> Result<()> {
        let mut json = serde_json::to_string_pretty(log).expect("round log serializes");
        json.push('\n');
        write_atomic(&self.round_log_path(log.round), json.as_bytes())
    }

    fn round_log_path(&self, round: usize) -> PathBuf {
        self.root.join(Self::round_dir_name(round)).join("round.json")
    }

    pub fn read_round_log(&self, round: usize) -> Result<RoundLog> {
        let p = self.round_log_path(round);
        if !p.is_file() {
            return Err(Error::config_field("round", format!("round {round} has no checkpoints in {}", self.root.display())));
        }
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&p, e.to_string()))
    }
}
