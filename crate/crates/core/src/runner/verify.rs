use std::fs;
use std::path::Path;

use serde::Serialize;

use super::manifest::{sha256_hex, FileEntry, RunManifest, MANIFEST_FORMAT};
use super::png::load_png;
use super::RunnerError;
use crate::engine::Arrangement;
use crate::image::ImageGrid;
use crate::transform::TransformSpec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: String, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name,
            passed,
            detail: detail.into(),
        });
    }
}

/// Re-checks a finished run directory: file hashes, pixel conservation for
/// rearrangements of a fixed source, and exact agreement between outputs and
/// their recorded arrangements. Ring transforms resample, so their
/// consistency is not bit-exact and is reported as skipped.
pub fn verify(dir: &Path) -> Result<VerifyReport, RunnerError> {
    let manifest = RunManifest::read(dir)?;
    let mut report = VerifyReport::default();
    if manifest.format != MANIFEST_FORMAT {
        report.push("format".into(), false, format!("unknown manifest format {:?}", manifest.format));
        return Ok(report);
    }

    for entry in manifest.files() {
        let (ok, detail) = check_hash(dir, entry);
        report.push(format!("hash {}", entry.path), ok, detail);
    }
    if !report.passed() {
        return Ok(report);
    }

    let load = |e: &FileEntry| load_png(&dir.join(&e.path));
    let sources = manifest.sources.iter().map(load).collect::<Result<Vec<_>, _>>()?;
    let outputs = manifest.outputs.iter().map(|o| load(&o.image)).collect::<Result<Vec<_>, _>>()?;
    if outputs.len() != manifest.arrangements.len() {
        report.push(
            "arrangements".into(),
            false,
            format!("{} outputs, {} arrangements", outputs.len(), manifest.arrangements.len()),
        );
        return Ok(report);
    }

    let fixed = manifest.config.mode.is_fixed();
    for (i, (img, arrangement)) in outputs.iter().zip(&manifest.arrangements).enumerate() {
        match arrangement {
            Arrangement::Selection { selection } => {
                let ok = selection.render(&sources).map(|r| r.values() == img.values());
                report.push(
                    format!("tile-provenance prompt_{i}"),
                    ok.as_ref().is_ok_and(|&b| b),
                    match ok {
                        Ok(true) => "every tile is a copy of its selected source tile".into(),
                        Ok(false) => "output differs from its recorded tile selection".into(),
                        Err(e) => e.to_string(),
                    },
                );
            }
            Arrangement::Transform { transform } => {
                let exact = !matches!(transform, TransformSpec::Rings(_));
                if fixed && exact {
                    let (ok, detail) = match sources.first() {
                        Some(s) => same_pixels(s, img),
                        None => (false, "fixed-mode run without a source".into()),
                    };
                    report.push(format!("pixel-conservation prompt_{i}"), ok, detail);
                }
                if !exact {
                    report.push(
                        format!("transform-consistency prompt_{i}"),
                        true,
                        "skipped: ring rotations resample",
                    );
                    continue;
                }
                let expected = if fixed {
                    sources.first().map(|s| transform.apply(s))
                } else {
                    let base = manifest.arrangements[0].transform();
                    base.map(|b| TransformSpec::relative(transform, b).and_then(|r| r.apply(&outputs[0])))
                };
                let (ok, detail) = match expected {
                    Some(Ok(e)) if e.values() == img.values() => (true, "bit-exact".to_string()),
                    Some(Ok(_)) => (false, "output differs from its recorded transform".to_string()),
                    Some(Err(e)) => (false, e.to_string()),
                    None => (false, "no reference image".to_string()),
                };
                report.push(format!("transform-consistency prompt_{i}"), ok, detail);
            }
        }
    }
    Ok(report)
}

fn check_hash(dir: &Path, entry: &FileEntry) -> (bool, String) {
    match fs::read(dir.join(&entry.path)) {
        Ok(bytes) => {
            let actual = sha256_hex(&bytes);
            if actual == entry.sha256 {
                (true, actual)
            } else {
                (false, format!("expected {}, found {actual}", entry.sha256))
            }
        }
        Err(e) => (false, format!("missing: {e}")),
    }
}

/// Compares the multisets of pixel colours.
fn same_pixels(a: &ImageGrid, b: &ImageGrid) -> (bool, String) {
    if a.shape() != b.shape() {
        return (false, format!("shape {:?} vs {:?}", a.shape(), b.shape()));
    }
    let c = a.channels();
    let sorted = |g: &ImageGrid| {
        let mut px: Vec<Vec<u32>> = g.values().chunks(c).map(|p| p.iter().map(|v| v.to_bits()).collect()).collect();
        px.sort_unstable();
        px
    };
    if sorted(a) == sorted(b) {
        (true, "same pixel multiset as the source".into())
    } else {
        (false, "pixel multiset differs from the source".into())
    }
}
