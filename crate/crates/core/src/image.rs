//! Dense H×W×C value grids shared by every transform, solver and denoiser.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which value domain an [`ImageGrid`] lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    /// Displayable pixels, every value in `[0, 1]`.
    Pixel,
    /// Unbounded reals: latents, noisy diffusion states, guidance fields.
    Latent,
}

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("image dimensions must be positive, got {height}x{width}x{channels}")]
    EmptyDimensions {
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("channel count {0} outside the supported range 1..=4")]
    Channels(usize),
    #[error("value buffer holds {actual} entries, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("pixel value {value} at index {index} is outside [0, 1]")]
    PixelRange { index: usize, value: f32 },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },
}

/// Row-major `height × width × channels` array of `f32` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    space: Space,
    values: Vec<f32>,
}

impl ImageGrid {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        values: Vec<f32>,
        space: Space,
    ) -> Result<Self, ImageError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(ImageError::EmptyDimensions {
                height,
                width,
                channels,
            });
        }
        if channels > 4 {
            return Err(ImageError::Channels(channels));
        }
        let expected = height * width * channels;
        if values.len() != expected {
            return Err(ImageError::BufferLength {
                expected,
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite(index));
        }
        if space == Space::Pixel {
            if let Some(index) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(ImageError::PixelRange {
                    index,
                    value: values[index],
                });
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            space,
            values,
        })
    }

    pub fn pixels(
        height: usize,
        width: usize,
        channels: usize,
        values: Vec<f32>,
    ) -> Result<Self, ImageError> {
        Self::new(height, width, channels, values, Space::Pixel)
    }

    pub fn latent(
        height: usize,
        width: usize,
        channels: usize,
        values: Vec<f32>,
    ) -> Result<Self, ImageError> {
        Self::new(height, width, channels, values, Space::Latent)
    }

    /// A grid filled with one value.
    pub fn filled(
        height: usize,
        width: usize,
        channels: usize,
        value: f32,
        space: Space,
    ) -> Result<Self, ImageError> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
            space,
        )
    }

    /// Builds a grid with the same geometry and space as `self` but new values.
    ///
    /// Internal helper for transforms: values come from `self`, so the range
    /// invariant carries over without re-validation.
    pub(crate) fn with_values(&self, values: Vec<f32>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            space: self.space,
            values,
        }
    }

    /// Same geometry and values, relabelled as an unbounded field.
    pub fn into_latent(mut self) -> Self {
        self.space = Space::Latent;
        self
    }

    /// Clamps every value into `[0, 1]` and relabels as pixels.
    pub fn to_pixels_clamped(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            space: Space::Pixel,
            values: self.values.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    /// Relabels as pixels, failing if any value is outside `[0, 1]`.
    pub fn try_into_pixels(self) -> Result<Self, ImageError> {
        Self::new(
            self.height,
            self.width,
            self.channels,
            self.values,
            Space::Pixel,
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.values[self.index(y, x, c)]
    }

    pub fn ensure_same_shape(&self, other: &ImageGrid) -> Result<(), ImageError> {
        if self.shape() != other.shape() {
            return Err(ImageError::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// Element-wise mean of equally shaped grids; pixels if every input is.
    pub fn mean_of(grids: &[ImageGrid]) -> Result<ImageGrid, ImageError> {
        let first = grids.first().ok_or(ImageError::EmptyDimensions {
            height: 0,
            width: 0,
            channels: 0,
        })?;
        for g in &grids[1..] {
            first.ensure_same_shape(g)?;
        }
        if grids.len() == 1 {
            return Ok(first.clone());
        }
        let n = grids.len() as f64;
        let values = (0..first.len())
            .map(|k| {
                let sum: f64 = grids.iter().map(|g| g.values[k] as f64).sum();
                (sum / n) as f32
            })
            .collect();
        let space = if grids.iter().all(|g| g.space == Space::Pixel) {
            Space::Pixel
        } else {
            Space::Latent
        };
        Ok(ImageGrid {
            height: first.height,
            width: first.width,
            channels: first.channels,
            space,
            values,
        })
    }

    /// Sum of squared element differences, accumulated in `f64`.
    pub fn squared_distance(&self, other: &ImageGrid) -> Result<f64, ImageError> {
        self.ensure_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                let d = *a as f64 - *b as f64;
                d * d
            })
            .sum())
    }

    /// Values sorted by total order, used for pixel-multiset comparisons.
    pub fn sorted_values(&self) -> Vec<f32> {
        let mut v = self.values.clone();
        v.sort_by(f32::total_cmp);
        v
    }
}
