//! Invertible spatial transforms and their algebra.

mod flip;
mod permutation;
mod ring;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use flip::{BlockOp, FlipConfig, FlipLevel};
pub(crate) use flip::{apply_block, check_divisions};
pub use permutation::{TilePermutation, TileSelection, Tiling};
pub use ring::{ring_index_map, source_map, RingRotation, DEFAULT_ANGULAR_STEP};

use crate::image::ImageGrid;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("image {height}x{width} is not divisible by {divisor}")]
    Divisibility {
        height: usize,
        width: usize,
        divisor: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("transform variants cannot be combined: {0}")]
    VariantMismatch(String),
    #[error("invalid tiling: {0}")]
    InvalidTiling(String),
    #[error("invalid tile mapping: {0}")]
    InvalidMapping(String),
    #[error("invalid ring rotation: {0}")]
    InvalidRing(String),
    #[error("invalid flip config: {0}")]
    InvalidFlip(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    Identity,
    Permutation(TilePermutation),
    Rings(RingRotation),
    Flips(FlipConfig),
}

impl TransformSpec {
    pub fn apply(&self, img: &ImageGrid) -> Result<ImageGrid, TransformError> {
        match self {
            TransformSpec::Identity => Ok(img.clone()),
            TransformSpec::Permutation(p) => p.apply(img),
            TransformSpec::Rings(r) => r.apply(img),
            TransformSpec::Flips(f) => f.apply(img),
        }
    }

    pub fn invert(&self) -> TransformSpec {
        match self {
            TransformSpec::Identity => TransformSpec::Identity,
            TransformSpec::Permutation(p) => TransformSpec::Permutation(p.invert()),
            TransformSpec::Rings(r) => TransformSpec::Rings(r.invert()),
            TransformSpec::Flips(f) => TransformSpec::Flips(f.invert()),
        }
    }

    /// `self ∘ inner`, canonicalised.
    pub fn compose(&self, inner: &TransformSpec) -> Result<TransformSpec, TransformError> {
        use TransformSpec::*;
        let out = match (self, inner) {
            (Identity, t) | (t, Identity) => t.clone(),
            (Permutation(a), Permutation(b)) => Permutation(a.compose(b)?),
            (Rings(a), Rings(b)) => Rings(a.compose(b)?),
            (Flips(a), Flips(b)) => Flips(a.compose(b)),
            (a, b) => {
                return Err(TransformError::VariantMismatch(format!(
                    "{} vs {}",
                    a.kind_name(),
                    b.kind_name()
                )))
            }
        };
        Ok(out.canonical())
    }

    /// The transform taking the frame of `base` to the frame of `target`:
    /// `target ∘ base⁻¹`.
    pub fn relative(target: &TransformSpec, base: &TransformSpec) -> Result<TransformSpec, TransformError> {
        target.compose(&base.invert())
    }

    /// Collapses any no-op encoding to [`TransformSpec::Identity`].
    pub fn canonical(self) -> TransformSpec {
        match self {
            TransformSpec::Permutation(p) if p.is_identity() => TransformSpec::Identity,
            TransformSpec::Rings(r) if r.is_identity() => TransformSpec::Identity,
            TransformSpec::Flips(f) => {
                let f = f.simplified();
                if f.levels().is_empty() {
                    TransformSpec::Identity
                } else {
                    TransformSpec::Flips(f)
                }
            }
            other => other,
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            TransformSpec::Identity => true,
            TransformSpec::Permutation(p) => p.is_identity(),
            TransformSpec::Rings(r) => r.is_identity(),
            TransformSpec::Flips(f) => f.is_identity(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            TransformSpec::Identity => "identity",
            TransformSpec::Permutation(_) => "permutation",
            TransformSpec::Rings(_) => "rings",
            TransformSpec::Flips(_) => "flips",
        }
    }

    /// Per-slot parameters, used to count how many slots changed between two
    /// transforms (tiles for permutations, rings, blocks for flips).
    pub(crate) fn slots(&self) -> Option<Vec<u64>> {
        match self {
            TransformSpec::Identity => None,
            TransformSpec::Permutation(p) => Some(p.mapping().iter().map(|&m| m as u64).collect()),
            TransformSpec::Rings(r) => Some(r.rotations().iter().map(|&a| a as u64).collect()),
            TransformSpec::Flips(f) => Some(
                f.levels()
                    .iter()
                    .flat_map(|l| l.ops.iter())
                    .map(|op| op.flip as u64 * 4 + op.quarter_turns as u64)
                    .collect(),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageGrid;

    /// Image whose 3×3 tiles (2×2 pixels each) are constant colours 0..8.
    fn labelled_tiles(m: usize, side: usize) -> ImageGrid {
        let h = m * side;
        let mut v = Vec::with_capacity(h * h);
        for y in 0..h {
            for x in 0..h {
                v.push(((y / side) * m + x / side) as f32 / (m * m) as f32);
            }
        }
        ImageGrid::pixels(h, h, 1, v).unwrap()
    }

    fn noise(h: usize, w: usize, c: usize, seed: u64) -> ImageGrid {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let v = (0..h * w * c)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 40) as f32 / (1u64 << 24) as f32
            })
            .collect();
        ImageGrid::pixels(h, w, c, v).unwrap()
    }

    fn perm(m: usize, side: usize, mapping: Vec<usize>) -> TransformSpec {
        TransformSpec::Permutation(
            TilePermutation::new(Tiling::new(m, side, side).unwrap(), mapping).unwrap(),
        )
    }

    #[test]
    fn identity_is_noop() {
        let img = noise(4, 6, 3, 1);
        assert_eq!(TransformSpec::Identity.apply(&img).unwrap(), img);
        assert_eq!(TransformSpec::Identity.invert(), TransformSpec::Identity);
    }

    #[test]
    fn pairwise_swap_is_an_involution() {
        let img = noise(4, 4, 1, 2);
        let t = perm(2, 2, vec![1, 0, 3, 2]);
        let once = t.apply(&img).unwrap();
        assert_ne!(once, img);
        assert_eq!(once.get(0, 0, 0), img.get(0, 2, 0));
        assert_eq!(t.apply(&once).unwrap(), img);
    }

    #[test]
    fn cyclic_shift_matches_pixel_copy_oracle() {
        let img = labelled_tiles(3, 2);
        let mapping: Vec<usize> = (0..9).map(|k| (k + 1) % 9).collect();
        let out = perm(3, 2, mapping.clone()).apply(&img).unwrap();
        // oracle: copy every pixel from its source tile directly
        for y in 0..6 {
            for x in 0..6 {
                let dest = (y / 2) * 3 + x / 2;
                let src = mapping[dest];
                let (sy, sx) = ((src / 3) * 2 + y % 2, (src % 3) * 2 + x % 2);
                assert_eq!(out.get(y, x, 0), img.get(sy, sx, 0));
                assert_eq!(out.get(y, x, 0), mapping[dest] as f32 / 9.0);
            }
        }
    }

    #[test]
    fn inverse_permutation_by_definition() {
        let t = perm(1, 1, vec![0]);
        assert_eq!(t.invert(), t);
        // the 3-cycle [2,0,1] on the first three tiles of a 2x2 grid
        let p = TilePermutation::new(Tiling::new(2, 1, 1).unwrap(), vec![2, 0, 1, 3]).unwrap();
        assert_eq!(p.invert().mapping(), &[1, 2, 0, 3]);
    }

    #[test]
    fn flip_inverse_turns_the_other_way() {
        let t = FlipConfig::new(vec![FlipLevel {
            division: 1,
            ops: vec![BlockOp::new(false, 90).unwrap()],
        }])
        .unwrap();
        let inv = t.invert();
        assert_eq!(inv.levels()[0].ops[0], BlockOp::new(false, 270).unwrap());
        let img = noise(8, 8, 3, 3);
        let spec = TransformSpec::Flips(t);
        let back = spec.invert().apply(&spec.apply(&img).unwrap()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn relative_of_cyclic_shifts() {
        // cycle the first three tiles of a 3x3 grid, the other six stay put
        let tiling = Tiling::new(3, 1, 1).unwrap();
        let shift = |k: usize| {
            let mut m: Vec<usize> = (0..9).collect();
            for (d, slot) in m.iter_mut().enumerate().take(3) {
                *slot = (d + k) % 3;
            }
            TransformSpec::Permutation(TilePermutation::new(tiling, m).unwrap())
        };
        let rel = TransformSpec::relative(&shift(1), &shift(2)).unwrap();
        match &rel {
            TransformSpec::Permutation(p) => assert_eq!(&p.mapping()[..3], &[2, 0, 1]),
            other => panic!("unexpected {other:?}"),
        }
        // application oracle: rel(t1(img)) == ti(img)
        let img = labelled_tiles(3, 1);
        let lhs = rel.apply(&shift(2).apply(&img).unwrap()).unwrap();
        assert_eq!(lhs, shift(1).apply(&img).unwrap());
    }

    #[test]
    fn relative_identities() {
        let t = perm(2, 2, vec![3, 1, 0, 2]);
        assert_eq!(TransformSpec::relative(&t, &TransformSpec::Identity).unwrap(), t);
        assert_eq!(TransformSpec::relative(&t, &t).unwrap(), TransformSpec::Identity);
        let r = TransformSpec::Rings(RingRotation::new(5, vec![90, 15]).unwrap());
        assert_eq!(TransformSpec::relative(&r, &r).unwrap(), TransformSpec::Identity);
        assert!(matches!(
            TransformSpec::relative(&t, &r),
            Err(TransformError::VariantMismatch(_))
        ));
    }

    #[test]
    fn ring_partition_is_total() {
        for (h, w, c) in [(16, 16, 3), (15, 9, 4), (7, 7, 1)] {
            let rings = ring_index_map(h, w, c);
            let mut counts = vec![0usize; c];
            for k in rings {
                counts[k] += 1;
            }
            assert_eq!(counts.iter().sum::<usize>(), h * w);
            assert!(counts.iter().all(|&n| n > 0));
        }
    }

    #[test]
    fn ring_quarter_turns_round_trip_exactly() {
        let img = noise(16, 16, 3, 4);
        for angle in [0, 90, 180, 270] {
            let r = TransformSpec::Rings(RingRotation::new(5, vec![angle, (angle + 90) % 360, 180]).unwrap());
            let out = r.apply(&img).unwrap();
            assert_eq!(out.sorted_values(), img.sorted_values());
            assert_eq!(r.invert().apply(&out).unwrap(), img);
        }
    }

    #[test]
    fn ring_rotation_preserves_ring_membership() {
        let img = noise(20, 20, 1, 5);
        let r = RingRotation::new(5, vec![35, 70, 125]).unwrap();
        let out = r.apply(&img).unwrap();
        let rings = ring_index_map(20, 20, 3);
        for k in 0..3 {
            let mut before: Vec<f32> = (0..400).filter(|&p| rings[p] == k).map(|p| img.values()[p]).collect();
            let after: Vec<f32> = (0..400).filter(|&p| rings[p] == k).map(|p| out.values()[p]).collect();
            before.sort_by(f32::total_cmp);
            // every value found in ring k after rotation came from ring k
            for v in after {
                assert!(before.binary_search_by(|b| b.total_cmp(&v)).is_ok());
            }
        }
    }

    #[test]
    fn non_divisible_image_rejected() {
        let img = noise(10, 10, 1, 6);
        let t = perm(3, 3, (0..9).collect());
        assert!(matches!(t.apply(&img), Err(TransformError::DimensionMismatch(_))));
        assert!(matches!(
            Tiling::for_image(16, 100, 100),
            Err(TransformError::Divisibility { .. })
        ));
        let f = TransformSpec::Flips(FlipConfig::identity(&[1, 3]).unwrap());
        assert!(matches!(f.apply(&img), Err(TransformError::Divisibility { .. })));
    }

    #[test]
    fn canonical_identity_encodings() {
        let tiling = Tiling::new(2, 1, 1).unwrap();
        assert_eq!(
            TransformSpec::Permutation(TilePermutation::identity(tiling)).canonical(),
            TransformSpec::Identity
        );
        assert_eq!(
            TransformSpec::Flips(FlipConfig::identity(&[1, 4]).unwrap()).canonical(),
            TransformSpec::Identity
        );
    }

    #[test]
    fn deserialization_validates() {
        let ok = r#"{"kind":"permutation","tiling":{"grid_m":2,"tile_h":1,"tile_w":1},"mapping":[1,0,3,2]}"#;
        let t: TransformSpec = serde_json::from_str(ok).unwrap();
        assert_eq!(serde_json::to_string(&t).unwrap(), ok);
        for bad in [
            r#"{"kind":"permutation","tiling":{"grid_m":2,"tile_h":1,"tile_w":1},"mapping":[0,0,1,2]}"#,
            r#"{"kind":"permutation","tiling":{"grid_m":0,"tile_h":1,"tile_w":1},"mapping":[]}"#,
            r#"{"kind":"rings","angular_step":5,"rotations":[7]}"#,
            r#"{"kind":"rings","angular_step":5,"rotations":[]}"#,
            r#"{"kind":"flips","levels":[{"division":2,"ops":[]}]}"#,
        ] {
            assert!(serde_json::from_str::<TransformSpec>(bad).is_err(), "{bad}");
        }
    }
}
