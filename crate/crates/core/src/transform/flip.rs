//! Block flips and quarter-turn rotations at several divisions of a square
//! image.
//!
//! A level with division `d` cuts the image into `d × d` square blocks and
//! applies one dihedral op per block. Levels apply in stored order; configs
//! built by the matcher are stored coarse-to-fine (ascending `d`).

use serde::{Deserialize, Serialize};

use super::TransformError;
use crate::image::ImageGrid;

/// One element of the dihedral group of the square: an optional horizontal
/// mirror followed by `quarter_turns` clockwise 90° rotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct BlockOp {
    pub flip: bool,
    pub quarter_turns: u8,
}

impl BlockOp {
    pub const IDENTITY: BlockOp = BlockOp {
        flip: false,
        quarter_turns: 0,
    };

    pub fn new(flip: bool, rotation_deg: u32) -> Result<Self, TransformError> {
        if !rotation_deg.is_multiple_of(90) || rotation_deg >= 360 {
            return Err(TransformError::InvalidFlip(format!(
                "block rotation {rotation_deg} must be one of 0, 90, 180, 270"
            )));
        }
        Ok(Self {
            flip,
            quarter_turns: (rotation_deg / 90) as u8,
        })
    }

    /// All eight ops, identity first, then rotations, then mirrored variants.
    pub fn all() -> [BlockOp; 8] {
        let mut out = [BlockOp::IDENTITY; 8];
        for (i, op) in out.iter_mut().enumerate() {
            op.flip = i >= 4;
            op.quarter_turns = (i % 4) as u8;
        }
        out
    }

    pub fn rotation_deg(&self) -> u32 {
        self.quarter_turns as u32 * 90
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn invert(&self) -> Self {
        if self.flip {
            *self
        } else {
            Self {
                flip: false,
                quarter_turns: (4 - self.quarter_turns) % 4,
            }
        }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &BlockOp) -> Self {
        let r = if self.flip {
            (4 + self.quarter_turns - inner.quarter_turns) % 4
        } else {
            (self.quarter_turns + inner.quarter_turns) % 4
        };
        Self {
            flip: self.flip ^ inner.flip,
            quarter_turns: r,
        }
    }

    /// Source coordinate inside a `side × side` block for destination `(y, x)`.
    #[inline]
    pub fn source_coord(&self, side: usize, y: usize, x: usize) -> (usize, usize) {
        let (mut y, mut x) = (y, x);
        for _ in 0..self.quarter_turns {
            (y, x) = (side - 1 - x, y);
        }
        if self.flip {
            x = side - 1 - x;
        }
        (y, x)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipLevel {
    pub division: usize,
    /// Row-major `division × division` block ops.
    pub ops: Vec<BlockOp>,
}

impl FlipLevel {
    pub fn identity(division: usize) -> Self {
        Self {
            division,
            ops: vec![BlockOp::IDENTITY; division * division],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.ops.iter().all(BlockOp::is_identity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FlipRepr")]
pub struct FlipConfig {
    levels: Vec<FlipLevel>,
}

#[derive(Deserialize)]
struct FlipRepr {
    levels: Vec<FlipLevel>,
}

impl TryFrom<FlipRepr> for FlipConfig {
    type Error = TransformError;

    fn try_from(r: FlipRepr) -> Result<Self, Self::Error> {
        FlipConfig::new(r.levels)
    }
}

impl FlipConfig {
    pub fn new(levels: Vec<FlipLevel>) -> Result<Self, TransformError> {
        for level in &levels {
            if level.division == 0 {
                return Err(TransformError::InvalidFlip("division must be positive".into()));
            }
            if level.ops.len() != level.division * level.division {
                return Err(TransformError::InvalidFlip(format!(
                    "division {} needs {} ops, got {}",
                    level.division,
                    level.division * level.division,
                    level.ops.len()
                )));
            }
            if level.ops.iter().any(|op| op.quarter_turns > 3) {
                return Err(TransformError::InvalidFlip("quarter turns must be < 4".into()));
            }
        }
        Ok(Self { levels })
    }

    /// All-identity ops at each division, sorted ascending.
    pub fn identity(divisions: &[usize]) -> Result<Self, TransformError> {
        let mut d = divisions.to_vec();
        d.sort_unstable();
        d.dedup();
        Self::new(d.into_iter().map(FlipLevel::identity).collect())
    }

    pub fn levels(&self) -> &[FlipLevel] {
        &self.levels
    }

    pub fn divisions(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.division).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.levels.iter().all(FlipLevel::is_identity)
    }

    pub fn check(&self, img: &ImageGrid) -> Result<(), TransformError> {
        check_divisions(img, self.levels.iter().map(|l| l.division))
    }

    pub fn apply(&self, img: &ImageGrid) -> Result<ImageGrid, TransformError> {
        self.check(img)?;
        let mut current = img.clone();
        for level in &self.levels {
            if level.is_identity() {
                continue;
            }
            current = apply_level(&current, level);
        }
        Ok(current)
    }

    pub fn invert(&self) -> Self {
        Self {
            levels: self
                .levels
                .iter()
                .rev()
                .map(|l| FlipLevel {
                    division: l.division,
                    ops: l.ops.iter().map(BlockOp::invert).collect(),
                })
                .collect(),
        }
    }

    /// `self ∘ inner`, simplified by merging adjacent levels that share a
    /// division and dropping identity levels.
    pub fn compose(&self, inner: &FlipConfig) -> Self {
        let mut levels: Vec<FlipLevel> = Vec::new();
        for level in inner.levels.iter().chain(&self.levels) {
            push_merged(&mut levels, level.clone());
        }
        Self { levels }
    }

    /// Merges adjacent same-division levels and drops identity levels.
    pub fn simplified(&self) -> Self {
        let mut levels = Vec::new();
        for level in &self.levels {
            push_merged(&mut levels, level.clone());
        }
        Self { levels }
    }
}

fn push_merged(levels: &mut Vec<FlipLevel>, level: FlipLevel) {
    if level.is_identity() {
        return;
    }
    match levels.last_mut() {
        Some(last) if last.division == level.division => {
            for (a, b) in last.ops.iter_mut().zip(&level.ops) {
                *a = b.compose(a);
            }
            if last.is_identity() {
                levels.pop();
            }
        }
        _ => levels.push(level),
    }
}

pub(crate) fn check_divisions(
    img: &ImageGrid,
    divisions: impl IntoIterator<Item = usize>,
) -> Result<(), TransformError> {
    if img.height() != img.width() {
        return Err(TransformError::DimensionMismatch(format!(
            "flips need a square image, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    for d in divisions {
        if d == 0 || !img.height().is_multiple_of(d) {
            return Err(TransformError::Divisibility {
                height: img.height(),
                width: img.width(),
                divisor: d,
            });
        }
    }
    Ok(())
}

/// Applies one block op to block `(by, bx)` of side `side`, reading from `src`
/// and writing into `dst`.
pub(crate) fn apply_block(
    src: &ImageGrid,
    dst: &mut [f32],
    side: usize,
    by: usize,
    bx: usize,
    op: BlockOp,
) {
    let c = src.channels();
    let (oy, ox) = (by * side, bx * side);
    for y in 0..side {
        for x in 0..side {
            let (sy, sx) = op.source_coord(side, y, x);
            let s = src.index(oy + sy, ox + sx, 0);
            let d = src.index(oy + y, ox + x, 0);
            dst[d..d + c].copy_from_slice(&src.values()[s..s + c]);
        }
    }
}

fn apply_level(img: &ImageGrid, level: &FlipLevel) -> ImageGrid {
    let side = img.height() / level.division;
    let mut out = img.values().to_vec();
    for (b, op) in level.ops.iter().enumerate() {
        if op.is_identity() {
            continue;
        }
        apply_block(
            img,
            &mut out,
            side,
            b / level.division,
            b % level.division,
            *op,
        );
    }
    img.with_values(out)
}
