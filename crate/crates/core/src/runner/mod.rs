//! File-level driver behind the command line: loads sources and
//! configuration, runs the engine, and writes images plus a manifest that
//! `verify` can later check.

mod backend;
mod contact;
mod manifest;
mod png;
mod verify;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{mock_backend, BackendSpec, BuiltBackend};
pub use contact::contact_sheet;
pub use manifest::{sha256_hex, FileEntry, OutputEntry, RunManifest, Timing, MANIFEST_FILE, MANIFEST_FORMAT, TIMING_FILE};
pub use png::{load_png, quantize, save_png, save_rgb8, to_rgb8};
pub use verify::{verify, Check, VerifyReport};

use crate::denoiser::{PromptId, ProtocolServer};
use crate::engine::{Arrangement, Engine, EngineConfig, EngineError, RunOptions, RunResult};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("backend error: {0}")]
    Backend(String),
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl RunnerError {
    pub fn io(path: &Path, message: impl Into<String>) -> Self {
        RunnerError::Io {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) => 2,
            RunnerError::Io { .. } => 3,
            RunnerError::Backend(_) => 4,
            RunnerError::VerifyFailed(_) => 5,
        }
    }
}

impl From<EngineError> for RunnerError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Denoise(_) => RunnerError::Backend(e.to_string()),
            other => RunnerError::Config(other.to_string()),
        }
    }
}

/// A complete run description as stored in a JSON or TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFile {
    pub engine: EngineConfig,
    pub sources: Vec<PathBuf>,
    pub backend: Option<String>,
    pub out: Option<PathBuf>,
    pub emit_contact_sheet: bool,
    /// `"HxW"`, for free modes without a target or codec to infer it from.
    pub size: Option<String>,
}

impl RunFile {
    /// Parses JSON for `.json` files and TOML otherwise.
    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = fs::read_to_string(path).map_err(|e| RunnerError::io(path, e.to_string()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))
    }
}

/// Everything `run` needs, with paths already resolved.
#[derive(Debug, Clone)]
pub struct RunRequest {
    pub engine: EngineConfig,
    pub sources: Vec<PathBuf>,
    pub backend: String,
    /// Directory that relative mock target paths resolve against.
    pub backend_base: PathBuf,
    pub out: PathBuf,
    pub emit_contact_sheet: bool,
    pub size: Option<(usize, usize)>,
    pub workers: usize,
}

impl RunRequest {
    /// Builds a request from a run file, resolving its paths against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self, RunnerError> {
        let file = RunFile::load(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            engine: file.engine,
            sources: file.sources.iter().map(|s| base.join(s)).collect(),
            backend: file.backend.unwrap_or_default(),
            backend_base: base.clone(),
            out: file.out.map(|o| base.join(o)).unwrap_or_else(|| PathBuf::from("out")),
            emit_contact_sheet: file.emit_contact_sheet,
            size: file.size.as_deref().map(parse_size).transpose()?,
            workers: 0,
        })
    }
}

/// Parses `"HxW"`, or a single number for a square image.
pub fn parse_size(s: &str) -> Result<(usize, usize), RunnerError> {
    let bad = || RunnerError::Config(format!("size {s:?} is not HxW"));
    let (h, w) = match s.split_once(['x', 'X']) {
        Some((h, w)) => (h.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?),
        None => {
            let n = s.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub out: PathBuf,
    pub manifest: RunManifest,
    pub result: RunResult,
}

/// Runs the engine and writes outputs, `manifest.json` and `timing.json`
/// into `req.out`.
pub fn run(req: &RunRequest) -> Result<RunReport, RunnerError> {
    if req.backend.is_empty() {
        return Err(RunnerError::Config("no backend given".into()));
    }
    let spec: BackendSpec = req.backend.parse()?;
    let sources = req
        .sources
        .iter()
        .map(|p| load_png(p))
        .collect::<Result<Vec<_>, _>>()?;
    req.engine.validate(sources.len())?;

    let built = spec.build(&req.engine.prompts, &req.backend_base)?;
    let shape = match (req.size, built.shape) {
        (Some((h, w)), Some(implied)) if (h, w) != (implied.0, implied.1) => {
            return Err(RunnerError::Config(format!(
                "--size {h}x{w} disagrees with the mock targets ({}x{})",
                implied.0, implied.1
            )))
        }
        (Some((h, w)), _) => Some((h, w, 3)),
        (None, implied) => implied,
    };

    let options = RunOptions {
        workers: req.workers,
        record_snapshots: req.emit_contact_sheet,
    };
    let started = Instant::now();
    let engine = Engine::new(req.engine.clone(), built.backend, sources, shape, options)?;
    let result = engine.run()?;
    let elapsed = started.elapsed().as_secs_f64();

    fs::create_dir_all(&req.out).map_err(|e| RunnerError::io(&req.out, e.to_string()))?;
    let write = |name: &str, img: &crate::image::ImageGrid| -> Result<FileEntry, RunnerError> {
        let path = req.out.join(name);
        save_png(img, &path)?;
        FileEntry::of_file(&req.out, name)
    };

    let mut source_entries = Vec::new();
    for (k, (s, origin)) in engine.sources().iter().zip(&req.sources).enumerate() {
        let mut entry = write(&format!("source_{k}.png"), s)?;
        entry.origin = Some(origin.display().to_string());
        source_entries.push(entry);
    }

    let mut outputs = Vec::new();
    for (i, (img, arrangement)) in result.images.iter().zip(&result.arrangements).enumerate() {
        let image = write(&format!("prompt_{i}.png"), img)?;
        let inverse = match arrangement {
            Arrangement::Transform { transform } => {
                let back = transform
                    .invert()
                    .apply(img)
                    .map_err(|e| RunnerError::Config(e.to_string()))?;
                Some(write(&format!("prompt_{i}_inverse.png"), &back)?)
            }
            Arrangement::Selection { .. } => None,
        };
        outputs.push(OutputEntry {
            prompt: engine.config().prompts[i].clone(),
            image,
            inverse,
        });
    }

    let contact = if req.emit_contact_sheet {
        let sheet = contact_sheet(&result.snapshots, &result.images);
        let name = "contact_sheet.png";
        save_rgb8(&sheet, &req.out.join(name))?;
        Some(FileEntry::of_file(&req.out, name)?)
    } else {
        None
    };

    let g = engine.geometry();
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.to_string(),
        config: engine.config().clone(),
        backend: req.backend.clone(),
        shape: [g.shape.0, g.shape.1, g.shape.2],
        sources: source_entries,
        outputs,
        arrangements: result.arrangements.clone(),
        change_trace: result.change_trace(),
        steps: result.steps.clone(),
        contact_sheet: contact,
    };
    manifest.write(&req.out)?;
    Timing {
        wall_clock_seconds: elapsed,
        workers: req.workers,
    }
    .write(&req.out)?;

    Ok(RunReport {
        out: req.out.clone(),
        manifest,
        result,
    })
}

/// Starts a protocol server over the mock denoiser and block-average codec.
/// `targets` pairs each prompt with its target PNG.
pub fn serve_mock(
    addr: &str,
    targets: &[(String, PathBuf)],
    pull: f64,
    scale: usize,
    threads: usize,
) -> Result<ProtocolServer, RunnerError> {
    let loaded = targets
        .iter()
        .map(|(p, path)| Ok((PromptId::new(p.clone()), load_png(path)?)))
        .collect::<Result<Vec<_>, RunnerError>>()?;
    let built = mock_backend(loaded, pull, scale, None)?;
    ProtocolServer::start(addr, Arc::clone(&built.backend.denoiser), built.backend.codec, threads)
        .map_err(|e| RunnerError::Backend(format!("cannot listen on {addr}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::DenoiseError;

    #[test]
    fn sizes() {
        assert_eq!(parse_size("64x32").unwrap(), (64, 32));
        assert_eq!(parse_size("48").unwrap(), (48, 48));
        assert!(parse_size("0x4").is_err());
        assert!(parse_size("ax4").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(RunnerError::Config(String::new()).exit_code(), 2);
        assert_eq!(RunnerError::io(Path::new("x"), "gone").exit_code(), 3);
        assert_eq!(
            RunnerError::from(EngineError::Denoise(DenoiseError::BackendUnavailable("down".into()))).exit_code(),
            4
        );
        assert_eq!(RunnerError::from(EngineError::Config("bad".into())).exit_code(), 2);
    }

    #[test]
    fn run_files_parse_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("run.toml");
        fs::write(
            &toml_path,
            "backend = \"mock:target=t.png\"\nsources = [\"s.png\"]\n[engine]\nmode = \"fixed_pixel\"\nprompts = [\"a\"]\ntiles = 2\n",
        )
        .unwrap();
        let req = RunRequest::from_file(&toml_path).unwrap();
        assert_eq!(req.engine.tiles, 2);
        assert_eq!(req.sources, vec![dir.path().join("s.png")]);

        let json_path = dir.path().join("run.json");
        fs::write(&json_path, r#"{"engine": {"prompts": ["a", "b"]}, "size": "16x16"}"#).unwrap();
        let req = RunRequest::from_file(&json_path).unwrap();
        assert_eq!(req.size, Some((16, 16)));

        fs::write(&json_path, r#"{"engine": {}, "colour": 1}"#).unwrap();
        assert!(matches!(RunRequest::from_file(&json_path), Err(RunnerError::Config(_))));
    }
}
