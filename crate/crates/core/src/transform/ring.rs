//! Concentric ring rotations.
//!
//! Rings have equal radial width around the exact image centre
//! `((H-1)/2, (W-1)/2)`; the radius is normalised by the inscribed circle, and
//! pixels beyond it (the corners) belong to the outermost ring. Rotation is
//! nearest-neighbour: a destination pixel takes the value of the source pixel
//! nearest to its position rotated by `-θ`, with exact half-way ties rounded
//! away from zero. When that source lies outside the image or in another ring,
//! the pixel keeps its own value, so pixels only ever move within their ring.

use serde::{Deserialize, Serialize};

use super::TransformError;
use crate::image::ImageGrid;

pub const DEFAULT_ANGULAR_STEP: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RingRepr")]
pub struct RingRotation {
    angular_step: u32,
    rotations: Vec<u32>,
}

impl RingRotation {
    /// `rotations[k]` is the angle in degrees applied to ring `k` (innermost
    /// first); each must be a multiple of `angular_step` below 360.
    pub fn new(angular_step: u32, rotations: Vec<u32>) -> Result<Self, TransformError> {
        if angular_step == 0 || 360 % angular_step != 0 {
            return Err(TransformError::InvalidRing(format!(
                "angular step {angular_step} must divide 360"
            )));
        }
        if rotations.is_empty() {
            return Err(TransformError::InvalidRing("ring count must be positive".into()));
        }
        if let Some(bad) = rotations
            .iter()
            .find(|&&r| r >= 360 || r % angular_step != 0)
        {
            return Err(TransformError::InvalidRing(format!(
                "rotation {bad} is not a multiple of {angular_step} in [0, 360)"
            )));
        }
        Ok(Self {
            angular_step,
            rotations,
        })
    }

    pub fn zero(ring_count: usize, angular_step: u32) -> Result<Self, TransformError> {
        Self::new(angular_step, vec![0; ring_count])
    }

    pub fn ring_count(&self) -> usize {
        self.rotations.len()
    }

    pub fn angular_step(&self) -> u32 {
        self.angular_step
    }

    pub fn rotations(&self) -> &[u32] {
        &self.rotations
    }

    pub fn is_identity(&self) -> bool {
        self.rotations.iter().all(|&r| r == 0)
    }

    /// Number of candidate angles per ring.
    pub fn candidates(&self) -> u32 {
        360 / self.angular_step
    }

    pub fn apply(&self, img: &ImageGrid) -> Result<ImageGrid, TransformError> {
        let rings = ring_index_map(img.height(), img.width(), self.ring_count());
        let c = img.channels();
        let mut out = img.values().to_vec();
        let mut maps: Vec<(u32, Vec<usize>)> = Vec::new();
        for &angle in &self.rotations {
            if angle != 0 && !maps.iter().any(|(a, _)| *a == angle) {
                maps.push((angle, source_map(img.height(), img.width(), &rings, angle)));
            }
        }
        for (p, &ring) in rings.iter().enumerate() {
            let angle = self.rotations[ring];
            if angle == 0 {
                continue;
            }
            let map = &maps.iter().find(|(a, _)| *a == angle).unwrap().1;
            let s = map[p];
            out[p * c..(p + 1) * c].copy_from_slice(&img.values()[s * c..(s + 1) * c]);
        }
        Ok(img.with_values(out))
    }

    pub fn invert(&self) -> Self {
        Self {
            angular_step: self.angular_step,
            rotations: self.rotations.iter().map(|&r| (360 - r) % 360).collect(),
        }
    }

    /// Angle-additive composition `self ∘ inner`.
    pub fn compose(&self, inner: &RingRotation) -> Result<Self, TransformError> {
        if self.angular_step != inner.angular_step || self.ring_count() != inner.ring_count() {
            return Err(TransformError::VariantMismatch(
                "ring rotations differ in ring count or angular step".into(),
            ));
        }
        Ok(Self {
            angular_step: self.angular_step,
            rotations: self
                .rotations
                .iter()
                .zip(&inner.rotations)
                .map(|(a, b)| (a + b) % 360)
                .collect(),
        })
    }
}

#[derive(Deserialize)]
struct RingRepr {
    angular_step: u32,
    rotations: Vec<u32>,
}

impl TryFrom<RingRepr> for RingRotation {
    type Error = TransformError;

    fn try_from(r: RingRepr) -> Result<Self, Self::Error> {
        RingRotation::new(r.angular_step, r.rotations)
    }
}

/// Ring index of every pixel, row-major.
pub fn ring_index_map(height: usize, width: usize, ring_count: usize) -> Vec<usize> {
    let cy = (height as f64 - 1.0) / 2.0;
    let cx = (width as f64 - 1.0) / 2.0;
    let max_radius = height.min(width) as f64 / 2.0;
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let r = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
            let k = (ring_count as f64 * r / max_radius).floor() as usize;
            out.push(k.min(ring_count - 1));
        }
    }
    out
}

/// Drops float noise so positions that are exactly half-way between pixels
/// (common at multiples of 45°) round the same way regardless of how the
/// rotation was evaluated; `round` then breaks the tie away from zero.
fn snap(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

/// For each destination pixel, the pixel index its value is read from when its
/// ring is rotated by `angle_deg`.
pub fn source_map(height: usize, width: usize, rings: &[usize], angle_deg: u32) -> Vec<usize> {
    let cy = (height as f64 - 1.0) / 2.0;
    let cx = (width as f64 - 1.0) / 2.0;
    let (sin, cos) = match angle_deg % 360 {
        0 => (0.0, 1.0),
        90 => (1.0, 0.0),
        180 => (0.0, -1.0),
        270 => (-1.0, 0.0),
        a => (a as f64).to_radians().sin_cos(),
    };
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            // rotate the destination offset by -θ
            let sy = cy + (dy * cos - dx * sin);
            let sx = cx + (dx * cos + dy * sin);
            let (ry, rx) = (snap(sy).round(), snap(sx).round());
            let p = y * width + x;
            let src = if ry >= 0.0 && rx >= 0.0 && (ry as usize) < height && (rx as usize) < width
            {
                let s = ry as usize * width + rx as usize;
                if rings[s] == rings[p] {
                    s
                } else {
                    p
                }
            } else {
                p
            };
            out.push(src);
        }
    }
    out
}
