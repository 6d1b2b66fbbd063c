//! The boundary between the engine and whatever produces guidance: an analytic
//! mock for desk-scale runs and an HTTP client for real diffusion backends.
//!
//! A guidance field is the per-element displacement from the current state to
//! the backend's clean-image estimate (after classifier-free guidance), so
//! `x̂₀ = x + guidance`. Fields from different prompts can be pulled back into
//! a shared frame and averaged before one update is applied.

mod mock;
mod remote;
mod server;
pub mod wire;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{MockCodec, MockDenoiser};
pub use remote::RemoteBackend;
pub use server::ProtocolServer;

use crate::image::{ImageError, ImageGrid};
use crate::rng::derive_seed;
use crate::schedule::{NoiseSchedule, ScheduleError};

#[derive(Debug, Error)]
pub enum DenoiseError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("no target registered for prompt {0:?}")]
    UnknownPrompt(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Opaque prompt token handed to the backend.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptId(pub String);

impl PromptId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseRequest {
    pub image: ImageGrid,
    pub prompt: PromptId,
    /// Schedule index of `image`'s noise level.
    pub step: usize,
    pub total_steps: usize,
    pub guidance_scale: f64,
    pub seed: u64,
}

impl DenoiseRequest {
    pub fn validate(&self) -> Result<(), DenoiseError> {
        if self.step >= self.total_steps {
            return Err(DenoiseError::Validation(format!(
                "step {} must be below total_steps {}",
                self.step, self.total_steps
            )));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.guidance_scale >= 1.0) {
            return Err(DenoiseError::Validation(format!(
                "guidance scale {} must be >= 1",
                self.guidance_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseResponse {
    pub guidance: ImageGrid,
    /// The backend's own single-prompt update of the request image.
    pub next_image: ImageGrid,
}

impl DenoiseResponse {
    pub fn check_against(&self, req: &DenoiseRequest) -> Result<(), DenoiseError> {
        for (name, grid) in [("guidance", &self.guidance), ("next_image", &self.next_image)] {
            if grid.shape() != req.image.shape() {
                return Err(DenoiseError::ShapeMismatch(format!(
                    "{name} is {:?}, request was {:?}",
                    grid.shape(),
                    req.image.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Geometry of a latent codec: pixel shape `(H, W, C)`, latent `(h, w, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecDescriptor {
    pub latent_shape: (usize, usize, usize),
    pub pixel_shape: (usize, usize, usize),
    pub scale_factor: usize,
}

impl CodecDescriptor {
    pub fn validate(&self) -> Result<(), DenoiseError> {
        let (h, w, _) = self.latent_shape;
        let (ph, pw, _) = self.pixel_shape;
        let f = self.scale_factor;
        if f == 0 || h * f != ph || w * f != pw {
            return Err(DenoiseError::Validation(format!(
                "latent {:?} times {f} does not give pixels {:?}",
                self.latent_shape, self.pixel_shape
            )));
        }
        Ok(())
    }
}

pub trait Denoiser: Send + Sync {
    fn guidance_step(&self, req: &DenoiseRequest) -> Result<DenoiseResponse, DenoiseError>;
}

/// Pixel ↔ latent encoder/decoder of a latent diffusion system.
pub trait Codec: Send + Sync {
    fn descriptor(&self) -> Result<CodecDescriptor, DenoiseError>;
    fn encode(&self, img: &ImageGrid) -> Result<ImageGrid, DenoiseError>;
    fn decode(&self, z: &ImageGrid) -> Result<ImageGrid, DenoiseError>;
}

/// A denoiser bound to one prompt and guidance scale.
#[derive(Clone)]
pub struct DenoiseSession {
    denoiser: Arc<dyn Denoiser>,
    prompt: PromptId,
    guidance_scale: f64,
}

impl DenoiseSession {
    pub fn new(denoiser: Arc<dyn Denoiser>, prompt: PromptId, guidance_scale: f64) -> Self {
        Self {
            denoiser,
            prompt,
            guidance_scale,
        }
    }

    pub fn prompt(&self) -> &PromptId {
        &self.prompt
    }

    /// Guidance for `image` at mainline position `t ≥ 1` of `schedule`.
    pub fn guidance_step(
        &self,
        image: &ImageGrid,
        t: usize,
        schedule: &NoiseSchedule,
        seed: u64,
    ) -> Result<DenoiseResponse, DenoiseError> {
        if t == 0 || t > schedule.steps() {
            return Err(DenoiseError::Validation(format!(
                "position {t} outside 1..={}",
                schedule.steps()
            )));
        }
        let req = DenoiseRequest {
            image: image.clone(),
            prompt: self.prompt.clone(),
            step: t - 1,
            total_steps: schedule.steps(),
            guidance_scale: self.guidance_scale,
            seed,
        };
        req.validate()?;
        let resp = self.denoiser.guidance_step(&req)?;
        resp.check_against(&req)?;
        Ok(resp)
    }

    /// Runs the denoise update from position `from` down to `to`, returning the
    /// state at `to`. `from == to` returns `start` unchanged.
    pub fn rollout(
        &self,
        start: &ImageGrid,
        from: usize,
        to: usize,
        schedule: &NoiseSchedule,
        seed: u64,
    ) -> Result<ImageGrid, DenoiseError> {
        if from > schedule.steps() || to > from {
            return Err(DenoiseError::Validation(format!(
                "rollout {from} -> {to} outside a {}-step schedule",
                schedule.steps()
            )));
        }
        let mut x = start.clone();
        for t in (to + 1..=from).rev() {
            let g = self.guidance_step(&x, t, schedule, derive_seed(seed, t as u32, 0))?;
            x = schedule.step(&x, &g.guidance, t)?;
        }
        Ok(x)
    }

    /// The backend's clean-image estimate `x + guidance` for a state at
    /// position `t`; a state at `t = 0` is already clean.
    pub fn clean_estimate(
        &self,
        x: &ImageGrid,
        t: usize,
        schedule: &NoiseSchedule,
        seed: u64,
    ) -> Result<ImageGrid, DenoiseError> {
        if t == 0 {
            return Ok(x.clone());
        }
        let g = self.guidance_step(x, t, schedule, derive_seed(seed, t as u32, 1))?;
        let values = x
            .values()
            .iter()
            .zip(g.guidance.values())
            .map(|(a, b)| a + b)
            .collect();
        Ok(ImageGrid::latent(x.height(), x.width(), x.channels(), values)?)
    }
}
