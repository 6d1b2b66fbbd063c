use std::collections::BTreeMap;

use super::{Codec, CodecDescriptor, DenoiseError, DenoiseRequest, DenoiseResponse, Denoiser, PromptId};
use crate::image::{ImageGrid, Space};
use crate::schedule::{NoiseSchedule, ScheduleConfig};

/// Analytic stand-in for a diffusion model: each prompt owns a target image
/// `T*`, and the clean estimate for state `x` is `x + pull·(T* - x)`.
///
/// With `pull = 1` the implied noise prediction is exactly the noise that
/// separates `x` from `T*` at the request's level, so a full rollout lands on
/// `T*`. Smaller pulls leave a fraction of the input in every estimate, which
/// keeps matching against rollout outputs from being trivially exact.
#[derive(Debug, Clone)]
pub struct MockDenoiser {
    targets: BTreeMap<PromptId, Vec<ImageGrid>>,
    pull: f64,
    schedule: ScheduleConfig,
}

impl MockDenoiser {
    pub fn new(targets: impl IntoIterator<Item = (PromptId, ImageGrid)>) -> Self {
        let mut map: BTreeMap<PromptId, Vec<ImageGrid>> = BTreeMap::new();
        for (p, t) in targets {
            map.entry(p).or_default().push(t);
        }
        Self {
            targets: map,
            pull: 1.0,
            schedule: ScheduleConfig::default(),
        }
    }

    pub fn with_pull(mut self, pull: f64) -> Result<Self, DenoiseError> {
        if !(pull > 0.0 && pull <= 1.0) {
            return Err(DenoiseError::Validation(format!("pull {pull} must lie in (0, 1]")));
        }
        self.pull = pull;
        Ok(self)
    }

    /// Schedule used to form `next_image`.
    pub fn with_schedule(mut self, schedule: ScheduleConfig) -> Self {
        self.schedule = schedule;
        self
    }

    /// Registers the encoded form of every pixel target so latent requests
    /// resolve too.
    pub fn with_codec(mut self, codec: &dyn Codec) -> Result<Self, DenoiseError> {
        for list in self.targets.values_mut() {
            let encoded = list
                .iter()
                .filter(|t| t.space() == Space::Pixel)
                .map(|t| codec.encode(t))
                .collect::<Result<Vec<_>, _>>()?;
            for z in encoded {
                if !list.iter().any(|t| t.shape() == z.shape()) {
                    list.push(z);
                }
            }
        }
        Ok(self)
    }

    pub fn pull(&self) -> f64 {
        self.pull
    }

    pub fn target(&self, prompt: &PromptId, shape: (usize, usize, usize)) -> Result<&ImageGrid, DenoiseError> {
        let list = self
            .targets
            .get(prompt)
            .ok_or_else(|| DenoiseError::UnknownPrompt(prompt.0.clone()))?;
        list.iter().find(|t| t.shape() == shape).ok_or_else(|| {
            DenoiseError::ShapeMismatch(format!(
                "no target of shape {shape:?} for prompt {:?}",
                prompt.0
            ))
        })
    }
}

impl Denoiser for MockDenoiser {
    fn guidance_step(&self, req: &DenoiseRequest) -> Result<DenoiseResponse, DenoiseError> {
        req.validate()?;
        let target = self.target(&req.prompt, req.image.shape())?;
        let values = req
            .image
            .values()
            .iter()
            .zip(target.values())
            .map(|(&x, &t)| (self.pull * (t as f64 - x as f64)) as f32)
            .collect();
        let (h, w, c) = req.image.shape();
        let guidance = ImageGrid::latent(h, w, c, values)?;
        let schedule = NoiseSchedule::new(&self.schedule, req.total_steps)?;
        let next_image = schedule.step(&req.image, &guidance, req.step + 1)?;
        Ok(DenoiseResponse { guidance, next_image })
    }
}

/// Block-average codec: encoding averages each `f×f` block, decoding repeats
/// each latent cell. Latent channels beyond the pixel channels carry the
/// block's mean over all channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockCodec {
    pixel_shape: (usize, usize, usize),
    scale_factor: usize,
    latent_channels: usize,
}

impl MockCodec {
    /// Uses as many latent channels as pixel channels at scale 1 (the exact
    /// identity) and four otherwise.
    pub fn new(pixel_shape: (usize, usize, usize), scale_factor: usize) -> Result<Self, DenoiseError> {
        let latent_channels = if scale_factor == 1 { pixel_shape.2 } else { 4 };
        Self::with_latent_channels(pixel_shape, scale_factor, latent_channels)
    }

    pub fn with_latent_channels(
        pixel_shape: (usize, usize, usize),
        scale_factor: usize,
        latent_channels: usize,
    ) -> Result<Self, DenoiseError> {
        let (h, w, c) = pixel_shape;
        if scale_factor == 0 || h % scale_factor != 0 || w % scale_factor != 0 {
            return Err(DenoiseError::Validation(format!(
                "scale factor {scale_factor} does not divide {h}x{w}"
            )));
        }
        if latent_channels < c {
            return Err(DenoiseError::Validation(format!(
                "{latent_channels} latent channels cannot hold {c} pixel channels"
            )));
        }
        Ok(Self {
            pixel_shape,
            scale_factor,
            latent_channels,
        })
    }

    fn latent_shape(&self) -> (usize, usize, usize) {
        let (h, w, _) = self.pixel_shape;
        (h / self.scale_factor, w / self.scale_factor, self.latent_channels)
    }
}

impl Codec for MockCodec {
    fn descriptor(&self) -> Result<CodecDescriptor, DenoiseError> {
        Ok(CodecDescriptor {
            latent_shape: self.latent_shape(),
            pixel_shape: self.pixel_shape,
            scale_factor: self.scale_factor,
        })
    }

    fn encode(&self, img: &ImageGrid) -> Result<ImageGrid, DenoiseError> {
        if img.shape() != self.pixel_shape {
            return Err(DenoiseError::ShapeMismatch(format!(
                "codec expects pixels {:?}, got {:?}",
                self.pixel_shape,
                img.shape()
            )));
        }
        let f = self.scale_factor;
        let pc = self.pixel_shape.2;
        let (lh, lw, lc) = self.latent_shape();
        let norm = (f * f) as f64;
        let mut out = Vec::with_capacity(lh * lw * lc);
        let mut sums = vec![0.0f64; pc];
        for by in 0..lh {
            for bx in 0..lw {
                sums.fill(0.0);
                for y in by * f..(by + 1) * f {
                    for x in bx * f..(bx + 1) * f {
                        let base = img.index(y, x, 0);
                        for (ch, s) in sums.iter_mut().enumerate() {
                            *s += img.values()[base + ch] as f64;
                        }
                    }
                }
                let overall = sums.iter().sum::<f64>() / (norm * pc as f64);
                for k in 0..lc {
                    out.push(if k < pc { (sums[k] / norm) as f32 } else { overall as f32 });
                }
            }
        }
        Ok(ImageGrid::latent(lh, lw, lc, out)?)
    }

    fn decode(&self, z: &ImageGrid) -> Result<ImageGrid, DenoiseError> {
        if z.shape() != self.latent_shape() {
            return Err(DenoiseError::ShapeMismatch(format!(
                "codec expects latents {:?}, got {:?}",
                self.latent_shape(),
                z.shape()
            )));
        }
        let f = self.scale_factor;
        let (h, w, c) = self.pixel_shape;
        let mut out = Vec::with_capacity(h * w * c);
        for y in 0..h {
            for x in 0..w {
                let base = z.index(y / f, x / f, 0);
                out.extend_from_slice(&z.values()[base..base + c]);
            }
        }
        Ok(ImageGrid::latent(h, w, c, out)?.to_pixels_clamped())
    }
}
