//! DDPM noise schedules, rollout-mixing weights and the deterministic
//! denoise update.
//!
//! A schedule with `steps` inference steps subsamples a `train_steps`-long
//! DDPM beta schedule. Index `k ∈ [0, steps)` addresses the noise level
//! `alpha_bar[k]`; the mainline position `t ∈ [0, steps]` counts down from pure
//! noise at `t = steps` to the clean image at `t = 0`, so the state at position
//! `t ≥ 1` sits at index `t - 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{ImageError, ImageGrid};

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("step index {index} out of range for a {steps}-step schedule")]
    OutOfRange { index: usize, steps: usize },
    #[error("mixing ratio {0} must lie strictly between 0 and 1")]
    Ratio(f64),
    #[error("invalid schedule: {0}")]
    Invalid(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    Linear,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Linear,
            train_steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    timesteps: Vec<usize>,
    alpha_bar: Vec<f64>,
    betas: Vec<f64>,
}

/// Amplitudes for `w_image · image + w_noise · noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixWeights {
    pub w_image: f64,
    pub w_noise: f64,
}

fn train_alpha_bar(config: &ScheduleConfig) -> Vec<f64> {
    let n = config.train_steps;
    match config.kind {
        ScheduleKind::Linear => {
            let mut acc = 1.0f64;
            (0..n)
                .map(|i| {
                    let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                    let beta = config.beta_start + frac * (config.beta_end - config.beta_start);
                    acc *= 1.0 - beta;
                    acc
                })
                .collect()
        }
        ScheduleKind::Cosine => {
            let s = 0.008;
            let f = |t: f64| ((t / n as f64 + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2).cos().powi(2);
            let mut acc = 1.0f64;
            (0..n)
                .map(|i| {
                    let beta = (1.0 - f(i as f64 + 1.0) / f(i as f64)).min(0.999);
                    acc *= 1.0 - beta;
                    acc
                })
                .collect()
        }
    }
}

impl NoiseSchedule {
    pub fn new(config: &ScheduleConfig, steps: usize) -> Result<Self, ScheduleError> {
        if steps == 0 {
            return Err(ScheduleError::Invalid("step count must be positive".into()));
        }
        if steps > config.train_steps {
            return Err(ScheduleError::Invalid(format!(
                "{steps} inference steps exceed {} training steps",
                config.train_steps
            )));
        }
        if !(0.0 < config.beta_start && config.beta_start <= config.beta_end && config.beta_end < 1.0) {
            return Err(ScheduleError::Invalid(format!(
                "betas must satisfy 0 < start <= end < 1, got [{}, {}]",
                config.beta_start, config.beta_end
            )));
        }
        let train = train_alpha_bar(config);
        let last = config.train_steps - 1;
        let timesteps: Vec<usize> = if steps == 1 {
            vec![last]
        } else {
            (0..steps)
                .map(|k| ((k * last) as f64 / (steps - 1) as f64).round() as usize)
                .collect()
        };
        let alpha_bar: Vec<f64> = timesteps.iter().map(|&t| train[t]).collect();
        let betas = alpha_bar
            .iter()
            .enumerate()
            .map(|(k, &a)| 1.0 - a / if k == 0 { 1.0 } else { alpha_bar[k - 1] })
            .collect();
        Ok(Self {
            kind: config.kind,
            timesteps,
            alpha_bar,
            betas,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Effective per-step betas between consecutive inference levels.
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Training timestep behind each inference index.
    pub fn timesteps(&self) -> &[usize] {
        &self.timesteps
    }

    /// Signal level of the state at mainline position `t` (1 at `t = 0`).
    pub fn level(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn weights_at(&self, index: usize) -> Result<MixWeights, ScheduleError> {
        let a = *self.alpha_bar.get(index).ok_or(ScheduleError::OutOfRange {
            index,
            steps: self.steps(),
        })?;
        Ok(MixWeights {
            w_image: a.sqrt(),
            w_noise: (1.0 - a).sqrt(),
        })
    }

    /// One deterministic (DDIM, η = 0) update from position `t ≥ 1` to `t - 1`.
    ///
    /// `guidance` is the displacement from `x` to the clean-image estimate,
    /// so `x̂₀ = x + guidance` and `ε̂ = (x - √ᾱ_t·x̂₀) / √(1 - ᾱ_t)`.
    pub fn step(&self, x: &ImageGrid, guidance: &ImageGrid, t: usize) -> Result<ImageGrid, ScheduleError> {
        if t == 0 || t > self.steps() {
            return Err(ScheduleError::OutOfRange {
                index: t,
                steps: self.steps(),
            });
        }
        x.ensure_same_shape(guidance)?;
        let a_t = self.level(t);
        let a_prev = self.level(t - 1);
        let (sa, sn) = (a_t.sqrt(), (1.0 - a_t).sqrt());
        let (pa, pn) = (a_prev.sqrt(), (1.0 - a_prev).sqrt());
        let values = x
            .values()
            .iter()
            .zip(guidance.values())
            .map(|(&xv, &g)| {
                let xv = xv as f64;
                let x0 = xv + g as f64;
                let eps = (xv - sa * x0) / sn;
                (pa * x0 + pn * eps) as f32
            })
            .collect();
        Ok(ImageGrid::latent(x.height(), x.width(), x.channels(), values)?)
    }
}

/// Element-wise `w_image · img + w_noise · noise`.
pub fn mix(img: &ImageGrid, noise: &ImageGrid, w: MixWeights) -> Result<ImageGrid, ScheduleError> {
    img.ensure_same_shape(noise)?;
    let values = img
        .values()
        .iter()
        .zip(noise.values())
        .map(|(&a, &n)| (w.w_image * a as f64 + w.w_noise * n as f64) as f32)
        .collect();
    Ok(ImageGrid::latent(img.height(), img.width(), img.channels(), values)?)
}

/// Weights whose image fraction `w_image / (w_image + w_noise)` equals
/// `ratio`, with the noise amplitude of the schedule's noisiest level.
pub fn fixed_ratio_weights(ratio: f64, s: &NoiseSchedule) -> Result<MixWeights, ScheduleError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(ScheduleError::Ratio(ratio));
    }
    let w_noise = (1.0 - s.alpha_bar[s.steps() - 1]).sqrt();
    Ok(MixWeights {
        w_image: w_noise * ratio / (1.0 - ratio),
        w_noise,
    })
}
