use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunnerError;
use crate::engine::{Arrangement, EngineConfig, StepRecord};

pub const MANIFEST_FORMAT: &str = "tessera-run/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMING_FILE: &str = "timing.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A file written by a run, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    /// Where a copied input came from, as given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
}

impl FileEntry {
    pub fn of_file(dir: &Path, name: &str) -> Result<Self, RunnerError> {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| RunnerError::io(&path, e.to_string()))?;
        Ok(Self {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
            origin: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub prompt: String,
    pub image: FileEntry,
    /// The output pulled back through its own transform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<FileEntry>,
}

/// Everything needed to reproduce and check a run. Holds no timing or
/// worker count, so identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format: String,
    pub config: EngineConfig,
    pub backend: String,
    pub shape: [usize; 3],
    pub sources: Vec<FileEntry>,
    pub outputs: Vec<OutputEntry>,
    pub arrangements: Vec<Arrangement>,
    pub change_trace: Vec<usize>,
    pub steps: Vec<StepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_sheet: Option<FileEntry>,
}

impl RunManifest {
    pub fn files(&self) -> impl Iterator<Item = &FileEntry> {
        self.sources
            .iter()
            .chain(self.outputs.iter().flat_map(|o| std::iter::once(&o.image).chain(&o.inverse)))
            .chain(&self.contact_sheet)
    }

    pub fn write(&self, dir: &Path) -> Result<(), RunnerError> {
        write_json(dir, MANIFEST_FILE, self)
    }

    pub fn read(dir: &Path) -> Result<Self, RunnerError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| RunnerError::io(&path, e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| RunnerError::VerifyFailed(format!("{}: {e}", path.display())))
    }
}

/// Wall-clock data, kept apart from the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_seconds: f64,
    pub workers: usize,
}

impl Timing {
    pub fn write(&self, dir: &Path) -> Result<(), RunnerError> {
        write_json(dir, TIMING_FILE, self)
    }
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), RunnerError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| RunnerError::Config(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| RunnerError::io(&path, e.to_string()))
}
