//! Mainline loops that interleave denoising with dynamic matching.
//!
//! Free modes evolve a shared-frame state `x_t` that every prompt sees through
//! its own transform; fixed modes never hold an `x_t` at all, since every
//! rollout input is derived from the source image under the current
//! arrangement. Parallel work (rollouts, fits, cost matrices) runs on a
//! dedicated pool and is always gathered in prompt order, and every noise
//! draw is keyed by `(seed, step, stream)`, so the worker count cannot change
//! any output.

mod arrangement;
mod config;
mod fixed;
mod free;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use arrangement::{change_trace, Arrangement, Geometry, Matched};
pub use config::{
    Copies, EngineConfig, InitKind, Mode, OutputCombination, TransformKind, DEFAULT_LATENT_ROLLOUT_STEPS,
    DEFAULT_MAINLINE_STEPS, DEFAULT_MIXING_RATIO, DEFAULT_PIXEL_LOOKAHEAD,
};
pub use free::anagram_step;

use crate::assignment::{AssignmentError, CopySpec};
use crate::denoiser::{Codec, CodecDescriptor, DenoiseError, DenoiseSession, Denoiser, PromptId};
use crate::image::{ImageError, ImageGrid};
use crate::schedule::{NoiseSchedule, ScheduleError};
use crate::transform::TransformError;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Denoise(#[from] DenoiseError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// The denoiser, plus the codec that latent modes require.
#[derive(Clone)]
pub struct Backend {
    pub denoiser: Arc<dyn Denoiser>,
    pub codec: Option<Arc<dyn Codec>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for rollouts and matching; 0 picks the machine default.
    pub workers: usize,
    /// Keep per-step mainline and rollout images for contact sheets.
    pub record_snapshots: bool,
}

/// Bookkeeping for one mainline step, per prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Mainline position the step started from.
    pub t: usize,
    pub changes: Vec<usize>,
    pub energies: Vec<f64>,
    /// Matching energy the previous arrangement would have had.
    pub retained_energies: Vec<f64>,
}

/// Images seen during one mainline step, per prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: usize,
    pub inputs: Vec<ImageGrid>,
    pub rollouts: Vec<ImageGrid>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// One output per prompt, in pixel space.
    pub images: Vec<ImageGrid>,
    pub arrangements: Vec<Arrangement>,
    /// Final shared-frame state of free modes.
    pub base: Option<ImageGrid>,
    pub steps: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
}

impl RunResult {
    /// Changed slots per step, summed over prompts.
    pub fn change_trace(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.changes.iter().sum()).collect()
    }
}

pub struct Engine {
    config: EngineConfig,
    sources: Vec<ImageGrid>,
    geometry: Geometry,
    copies: Option<CopySpec>,
    sessions: Vec<DenoiseSession>,
    codec: Option<(Arc<dyn Codec>, CodecDescriptor)>,
    mainline: NoiseSchedule,
    rollout: NoiseSchedule,
    pool: rayon::ThreadPool,
    record_snapshots: bool,
}

impl Engine {
    /// `shape` is required by free modes unless a codec reports one; fixed
    /// modes take it from the sources.
    pub fn new(
        config: EngineConfig,
        backend: Backend,
        sources: Vec<ImageGrid>,
        shape: Option<(usize, usize, usize)>,
        options: RunOptions,
    ) -> Result<Self, EngineError> {
        config.validate(sources.len())?;
        let config = config.resolved();

        let codec = if config.mode.is_latent() {
            let codec = backend
                .codec
                .clone()
                .ok_or_else(|| EngineError::Config("latent modes need a backend with a codec".into()))?;
            let desc = codec.descriptor()?;
            desc.validate()?;
            Some((codec, desc))
        } else {
            None
        };

        let shape = if let Some(first) = sources.first() {
            for s in &sources[1..] {
                first.ensure_same_shape(s)?;
            }
            first.shape()
        } else if let Some(shape) = shape {
            shape
        } else if let Some((_, desc)) = &codec {
            desc.pixel_shape
        } else {
            return Err(EngineError::Config("free pixel mode needs an image size".into()));
        };
        if let Some((_, desc)) = &codec {
            if desc.pixel_shape != shape {
                return Err(EngineError::Config(format!(
                    "codec mismatch: codec works on {:?} pixels, images are {shape:?}",
                    desc.pixel_shape
                )));
            }
        }

        let geometry = Geometry::new(
            config.transform,
            shape,
            config.tiles,
            config.rings,
            config.ring_step,
            &config.flip_divisions,
        )?;
        let copies = copy_spec(&config, &geometry, sources.len())?;

        let mainline = NoiseSchedule::new(&config.schedule, config.mainline_steps)?;
        let rollout = if config.mode.is_latent() {
            NoiseSchedule::new(&config.schedule, config.rollout_steps_or_default())?
        } else {
            mainline.clone()
        };
        let sessions = config
            .prompts
            .iter()
            .map(|p| DenoiseSession::new(Arc::clone(&backend.denoiser), PromptId::new(p.clone()), config.guidance_scale))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .map_err(|e| EngineError::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self {
            config,
            sources,
            geometry,
            copies,
            sessions,
            codec,
            mainline,
            rollout,
            pool,
            record_snapshots: options.record_snapshots,
        })
    }

    /// The resolved configuration.
    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn sources(&self) -> &[ImageGrid] {
        &self.sources
    }

    pub fn mainline_schedule(&self) -> &NoiseSchedule {
        &self.mainline
    }

    pub fn rollout_schedule(&self) -> &NoiseSchedule {
        &self.rollout
    }

    pub fn run(&self) -> Result<RunResult, EngineError> {
        self.pool.install(|| match self.config.mode {
            Mode::FreePixel => self.mainline_free(),
            Mode::FixedPixel => self.mainline_fixed(),
            Mode::FreeLatent | Mode::FixedLatent => self.mainline_latent(),
        })
    }

    fn codec(&self) -> Result<&(Arc<dyn Codec>, CodecDescriptor), EngineError> {
        self.codec
            .as_ref()
            .ok_or_else(|| EngineError::Config("this mode needs a codec".into()))
    }

    /// Encodes a pixel image, rejecting latents whose shape disagrees with the
    /// codec's own description.
    fn encode(&self, img: &ImageGrid) -> Result<ImageGrid, EngineError> {
        let (codec, desc) = self.codec()?;
        let z = codec.encode(img)?;
        if z.shape() != desc.latent_shape {
            return Err(DenoiseError::ShapeMismatch(format!(
                "codec returned latent {:?}, described {:?}",
                z.shape(),
                desc.latent_shape
            ))
            .into());
        }
        Ok(z)
    }

    fn decode(&self, z: &ImageGrid) -> Result<ImageGrid, EngineError> {
        let (codec, desc) = self.codec()?;
        let img = codec.decode(z)?;
        if img.shape() != desc.pixel_shape {
            return Err(DenoiseError::ShapeMismatch(format!(
                "codec returned pixels {:?}, described {:?}",
                img.shape(),
                desc.pixel_shape
            ))
            .into());
        }
        Ok(img)
    }
}

fn copy_spec(config: &EngineConfig, geometry: &Geometry, sources: usize) -> Result<Option<CopySpec>, EngineError> {
    let Some(tiling) = geometry.tiling else {
        return Ok(None);
    };
    let tiles = tiling.tile_count();
    let rows = tiles * sources;
    let counts = match &config.copies {
        None if sources <= 1 => return Ok(None),
        None => vec![1; rows],
        Some(Copies::Uniform(c)) => vec![*c; rows],
        Some(Copies::PerTile(v)) if v.len() == rows => v.clone(),
        // One count per tile position, shared by every source.
        Some(Copies::PerTile(v)) if v.len() == tiles => v.iter().copied().cycle().take(rows).collect(),
        Some(Copies::PerTile(v)) => {
            return Err(EngineError::Config(format!(
                "copy map has {} entries; expected {tiles} (per tile) or {rows} (per source tile)",
                v.len()
            )))
        }
    };
    let spec = CopySpec::new(counts)?;
    if sources == 1 && spec.is_single() {
        return Ok(None);
    }
    if spec.supply() < tiles {
        return Err(EngineError::Config(format!(
            "copies allow {} tile uses for {tiles} destinations",
            spec.supply()
        )));
    }
    Ok(Some(spec))
}
