//! Exhaustive per-ring and greedy per-block searches for the ring and flip
//! transforms.

use rayon::prelude::*;

use super::AssignmentError;
use crate::image::ImageGrid;
use crate::transform::{
    apply_block, check_divisions, ring_index_map, source_map, BlockOp, FlipConfig, FlipLevel,
    RingRotation, TransformError,
};

/// A fitted transform and the L2 energy it attains.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit<T> {
    pub transform: T,
    pub energy: f64,
}

fn same_shape(a: &ImageGrid, b: &ImageGrid) -> Result<(), AssignmentError> {
    a.ensure_same_shape(b)
        .map_err(|e| TransformError::DimensionMismatch(e.to_string()).into())
}

/// Squared distance per ring between `a` rotated by `angle` and `b`.
fn ring_sq_distances(
    a: &ImageGrid,
    b: &ImageGrid,
    rings: &[usize],
    ring_count: usize,
    angle: u32,
) -> Vec<f64> {
    let c = a.channels();
    let map = (angle != 0).then(|| source_map(a.height(), a.width(), rings, angle));
    let mut sums = vec![0.0f64; ring_count];
    for (p, &k) in rings.iter().enumerate() {
        let s = map.as_ref().map_or(p, |m| m[p]);
        let mut acc = 0.0;
        for ch in 0..c {
            let d = a.values()[s * c + ch] as f64 - b.values()[p * c + ch] as f64;
            acc += d * d;
        }
        sums[k] += acc;
    }
    sums
}

/// Sum over rings of the L2 distance between `rotation(a)` and `b`.
pub fn ring_energy(a: &ImageGrid, b: &ImageGrid, rotation: &RingRotation) -> Result<f64, AssignmentError> {
    same_shape(a, b)?;
    let rotated = rotation.apply(a)?;
    let rings = ring_index_map(a.height(), a.width(), rotation.ring_count());
    let sums = ring_sq_distances(&rotated, b, &rings, rotation.ring_count(), 0);
    Ok(sums.iter().map(|s| s.sqrt()).sum())
}

/// Per ring, the candidate angle (multiples of the template's step) that makes
/// the rotated ring of `a` closest to the same ring of `b`. Ties keep the
/// smaller angle, so 0° wins whenever it is optimal.
pub fn best_ring_rotation(
    a: &ImageGrid,
    b: &ImageGrid,
    template: &RingRotation,
) -> Result<Fit<RingRotation>, AssignmentError> {
    same_shape(a, b)?;
    let ring_count = template.ring_count();
    let step = template.angular_step();
    let rings = ring_index_map(a.height(), a.width(), ring_count);
    let per_angle: Vec<Vec<f64>> = (0..template.candidates())
        .into_par_iter()
        .map(|k| ring_sq_distances(a, b, &rings, ring_count, k * step))
        .collect();
    let mut rotations = vec![0u32; ring_count];
    let mut energy = 0.0;
    for ring in 0..ring_count {
        let mut best = (0u32, per_angle[0][ring]);
        for (k, sums) in per_angle.iter().enumerate().skip(1) {
            if sums[ring] < best.1 {
                best = (k as u32 * step, sums[ring]);
            }
        }
        rotations[ring] = best.0;
        energy += best.1.sqrt();
    }
    Ok(Fit {
        transform: RingRotation::new(step, rotations)?,
        energy,
    })
}

/// L2 distance between `config(a)` and `b`.
pub fn flip_energy(a: &ImageGrid, b: &ImageGrid, config: &FlipConfig) -> Result<f64, AssignmentError> {
    same_shape(a, b)?;
    Ok(config.apply(a)?.squared_distance(b).unwrap_or(0.0).sqrt())
}

fn block_sq_distance(
    current: &ImageGrid,
    target: &ImageGrid,
    side: usize,
    by: usize,
    bx: usize,
    op: BlockOp,
) -> f64 {
    let c = current.channels();
    let (oy, ox) = (by * side, bx * side);
    let mut acc = 0.0f64;
    for y in 0..side {
        for x in 0..side {
            let (sy, sx) = op.source_coord(side, y, x);
            let s = current.index(oy + sy, ox + sx, 0);
            let t = target.index(oy + y, ox + x, 0);
            for ch in 0..c {
                let d = current.values()[s + ch] as f64 - target.values()[t + ch] as f64;
                acc += d * d;
            }
        }
    }
    acc
}

/// Greedy coarse-to-fine fit: for each division in ascending order, every
/// block takes the op among the eight dihedral candidates that brings it
/// closest to `b`, with coarser choices already applied.
pub fn best_flip_config(
    a: &ImageGrid,
    b: &ImageGrid,
    divisions: &[usize],
) -> Result<Fit<FlipConfig>, AssignmentError> {
    same_shape(a, b)?;
    let mut divisions = divisions.to_vec();
    divisions.sort_unstable();
    divisions.dedup();
    check_divisions(a, divisions.iter().copied())?;

    let candidates = BlockOp::all();
    let mut current = a.clone();
    let mut levels = Vec::with_capacity(divisions.len());
    for &d in &divisions {
        let side = a.height() / d;
        let ops: Vec<BlockOp> = (0..d * d)
            .into_par_iter()
            .map(|blk| {
                let (by, bx) = (blk / d, blk % d);
                let mut best = (BlockOp::IDENTITY, f64::INFINITY);
                for op in candidates {
                    let dist = block_sq_distance(&current, b, side, by, bx, op);
                    if dist < best.1 {
                        best = (op, dist);
                    }
                }
                best.0
            })
            .collect();
        let mut next = current.values().to_vec();
        for (blk, op) in ops.iter().enumerate() {
            if !op.is_identity() {
                apply_block(&current, &mut next, side, blk / d, blk % d, *op);
            }
        }
        current = ImageGrid::new(
            current.height(),
            current.width(),
            current.channels(),
            next,
            current.space(),
        )
        .expect("block ops preserve geometry and values");
        levels.push(FlipLevel { division: d, ops });
    }
    let energy = current.squared_distance(b).unwrap_or(0.0).sqrt();
    Ok(Fit {
        transform: FlipConfig::new(levels)?,
        energy,
    })
}
