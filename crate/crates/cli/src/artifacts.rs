//! Artifact files: layout, digests and checked reads.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use ctxmon_core::eval::digest;
use ctxmon_core::trajectory::{
    parse_labels, parse_trajectory, write_labels, write_trajectory, SubtaskId, Trajectory, TrajectoryFormat,
};

use crate::error::{CliError, CliResult};

pub const ARTIFACT_VERSION: u32 = 1;

/// Fixed locations inside an output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn corpus_manifest(&self) -> PathBuf {
        self.corpus_dir().join("manifest.json")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.root.join("model")
    }

    pub fn segmentation(&self) -> PathBuf {
        self.model_dir().join("segmentation.json")
    }

    pub fn constraints(&self, context: &str) -> PathBuf {
        self.model_dir().join(format!("constraints_{context}.json"))
    }

    pub fn learn_manifest(&self) -> PathBuf {
        self.model_dir().join("learn_manifest.json")
    }

    pub fn campaign_dir(&self, campaign: &str) -> PathBuf {
        self.root.join("campaigns").join(campaign)
    }

    pub fn fault_manifest(&self, campaign: &str) -> PathBuf {
        self.campaign_dir(campaign).join("fault_manifest.json")
    }

    pub fn monitor_dir(&self, campaign: &str, context: &str) -> PathBuf {
        self.root.join("monitor").join(campaign).join(context)
    }

    pub fn monitor_run_dir(&self, campaign: &str, context: &str, margin: f64) -> PathBuf {
        self.monitor_dir(campaign, context).join(format!("m{margin}"))
    }

    pub fn oracle_dir(&self, campaign: &str) -> PathBuf {
        self.root.join("oracle").join(campaign)
    }

    pub fn report(&self, ext: &str) -> PathBuf {
        self.root.join(format!("report.{ext}"))
    }

    pub fn pipeline_manifest(&self) -> PathBuf {
        self.root.join("pipeline_manifest.json")
    }
}

pub fn trial_stem(trial: usize) -> String {
    format!("trial_{trial:03}")
}

/// Writes `bytes`, creating parent directories, and returns their digest.
pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<String> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok(digest(bytes))
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<String> {
    write_file(path, &to_json_bytes(value)?)
}

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::input(path, e))
}

/// Reads a file and checks it against a recorded digest.
pub fn read_checked(path: &Path, expected: &str) -> CliResult<Vec<u8>> {
    let bytes = read_file(path)?;
    let got = digest(&bytes);
    if got != expected {
        return Err(CliError::input(path, format!("digest {got} does not match recorded {expected}")));
    }
    Ok(bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<(T, String)> {
    let bytes = read_file(path)?;
    let value = serde_json::from_slice(&bytes).map_err(|e| CliError::input(path, e))?;
    Ok((value, digest(&bytes)))
}

pub fn trajectory_bytes(traj: &Trajectory) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write_trajectory(traj, &mut buf, &TrajectoryFormat::Csv)?;
    Ok(buf)
}

pub fn labels_bytes(labels: &[SubtaskId]) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write_labels(labels, &mut buf)?;
    Ok(buf)
}

pub fn read_trajectory(path: &Path, expected: &str) -> CliResult<Trajectory> {
    let bytes = read_checked(path, expected)?;
    parse_trajectory(bytes.as_slice(), &TrajectoryFormat::Csv).map_err(|e| CliError::input(path, e))
}

pub fn read_labels(path: &Path, expected: &str) -> CliResult<Vec<SubtaskId>> {
    let bytes = read_checked(path, expected)?;
    parse_labels(bytes.as_slice()).map_err(|e| CliError::input(path, e))
}

/// Fails with a validation error when two recorded digests disagree.
pub fn require_match(what: &str, recorded: &str, actual: &str) -> CliResult<()> {
    if recorded != actual {
        return Err(CliError::validation(format!("{what}: recorded digest {recorded} does not match {actual}")));
    }
    Ok(())
}
