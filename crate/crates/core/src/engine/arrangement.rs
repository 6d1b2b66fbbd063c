use serde::{Deserialize, Serialize};

use super::{EngineError, TransformKind};
use crate::assignment::{
    best_flip_config, best_ring_rotation, flip_energy, ring_energy, solve_rectangular, solve_square,
    tile_cost_matrix_with, CopySpec, L2Distance,
};
use crate::image::ImageGrid;
use crate::rng;
use crate::transform::{
    BlockOp, FlipConfig, FlipLevel, RingRotation, TilePermutation, TileSelection, Tiling, TransformSpec,
};

/// A prompt's spatial arrangement: an invertible transform, or (for copies and
/// multiple sources) a tile selection drawn from the source images.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "arrangement", rename_all = "snake_case")]
pub enum Arrangement {
    Transform { transform: TransformSpec },
    Selection { selection: TileSelection },
}

impl Arrangement {
    /// Applies to `sources[0]` for transforms, draws from all sources for
    /// selections.
    pub fn render(&self, sources: &[ImageGrid]) -> Result<ImageGrid, EngineError> {
        match self {
            Arrangement::Transform { transform } => {
                let first = sources
                    .first()
                    .ok_or_else(|| EngineError::Config("no image to transform".into()))?;
                Ok(transform.apply(first)?)
            }
            Arrangement::Selection { selection } => Ok(selection.render(sources)?),
        }
    }

    pub fn transform(&self) -> Option<&TransformSpec> {
        match self {
            Arrangement::Transform { transform } => Some(transform),
            Arrangement::Selection { .. } => None,
        }
    }

    fn slots(&self) -> Vec<u64> {
        match self {
            Arrangement::Transform { transform } => transform.slots().unwrap_or_default(),
            Arrangement::Selection { selection } => selection.mapping().iter().map(|&m| m as u64).collect(),
        }
    }

    /// Number of slots (tiles, rings or blocks) whose assignment differs.
    pub fn changes_from(&self, previous: &Arrangement) -> usize {
        let (a, b) = (self.slots(), previous.slots());
        let common = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        common + a.len().abs_diff(b.len())
    }
}

/// Number of slots whose assignment differs between consecutive entries.
pub fn change_trace(history: &[Arrangement]) -> Vec<usize> {
    history.windows(2).map(|w| w[1].changes_from(&w[0])).collect()
}

/// Result of one dynamic-matching solve: the new arrangement, its energy, and
/// the energy of keeping the previous one.
#[derive(Debug, Clone)]
pub struct Matched {
    pub arrangement: Arrangement,
    pub energy: f64,
    pub retained_energy: f64,
}

/// Transform family and geometry shared by every prompt of a run.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub kind: TransformKind,
    pub shape: (usize, usize, usize),
    pub tiling: Option<Tiling>,
    pub ring_count: usize,
    pub ring_step: u32,
    pub divisions: Vec<usize>,
}

impl Geometry {
    pub fn new(
        kind: TransformKind,
        shape: (usize, usize, usize),
        tiles: usize,
        ring_count: usize,
        ring_step: u32,
        divisions: &[usize],
    ) -> Result<Self, EngineError> {
        let (h, w, _) = shape;
        let mut divisions = divisions.to_vec();
        divisions.sort_unstable();
        divisions.dedup();
        let tiling = match kind {
            TransformKind::Permutation => Some(Tiling::for_image(tiles, h, w).map_err(|e| {
                EngineError::Config(format!(
                    "tiling rule: height and width must both be multiples of the {tiles} tiles per side ({e})"
                ))
            })?),
            _ => None,
        };
        if kind == TransformKind::Rings {
            RingRotation::zero(ring_count, ring_step)?;
        }
        if kind == TransformKind::Flips {
            if h != w {
                return Err(EngineError::Config(format!("flips need a square image, got {h}x{w}")));
            }
            if let Some(&d) = divisions.iter().find(|&&d| h % d != 0) {
                return Err(EngineError::Config(format!(
                    "flip division rule: image side {h} must be a multiple of division {d}"
                )));
            }
        }
        Ok(Self {
            kind,
            shape,
            tiling,
            ring_count,
            ring_step,
            divisions,
        })
    }

    /// Identity in full form, so slot counts compare like with like.
    pub fn identity(&self) -> TransformSpec {
        match self.kind {
            TransformKind::Permutation => {
                TransformSpec::Permutation(TilePermutation::identity(self.tiling.expect("tiling set")))
            }
            TransformKind::Rings => TransformSpec::Rings(
                RingRotation::zero(self.ring_count, self.ring_step).expect("validated ring geometry"),
            ),
            TransformKind::Flips => {
                TransformSpec::Flips(FlipConfig::identity(&self.divisions).expect("validated divisions"))
            }
        }
    }

    /// A uniformly random transform keyed by `(seed, stream)`.
    pub fn random(&self, seed: u64, stream: u32) -> TransformSpec {
        let step = rng::INIT_STREAM;
        match self.kind {
            TransformKind::Permutation => {
                let tiling = self.tiling.expect("tiling set");
                let mapping = rng::permutation(seed, step, stream, tiling.tile_count());
                TransformSpec::Permutation(TilePermutation::new(tiling, mapping).expect("bijection"))
            }
            TransformKind::Rings => {
                let k = (360 / self.ring_step) as usize;
                let rotations = rng::choices(seed, step, stream, self.ring_count, k)
                    .into_iter()
                    .map(|c| c as u32 * self.ring_step)
                    .collect();
                TransformSpec::Rings(RingRotation::new(self.ring_step, rotations).expect("valid angles"))
            }
            TransformKind::Flips => {
                let blocks: usize = self.divisions.iter().map(|d| d * d).sum();
                let picks = rng::choices(seed, step, stream, blocks, 8);
                let all = BlockOp::all();
                let mut at = 0;
                let levels = self
                    .divisions
                    .iter()
                    .map(|&d| {
                        let ops = picks[at..at + d * d].iter().map(|&p| all[p]).collect();
                        at += d * d;
                        FlipLevel { division: d, ops }
                    })
                    .collect();
                TransformSpec::Flips(FlipConfig::new(levels).expect("valid levels"))
            }
        }
    }

    /// Fits the transform `ψ` with `ψ(anchor) ≈ target`.
    pub fn fit(&self, anchor: &ImageGrid, target: &ImageGrid, previous: &TransformSpec) -> Result<Matched, EngineError> {
        let (transform, energy, retained_energy) = match (self.kind, previous) {
            (TransformKind::Permutation, prev) => {
                let tiling = self.tiling.expect("tiling set");
                let d = tile_cost_matrix_with(std::slice::from_ref(anchor), target, tiling, &L2Distance)?;
                let a = solve_square(&d)?;
                let retained = match prev {
                    TransformSpec::Permutation(p) => d.cost_of(p.mapping()),
                    _ => d.cost_of(&(0..tiling.tile_count()).collect::<Vec<_>>()),
                };
                let p = TilePermutation::new(tiling, a.mapping)?;
                (TransformSpec::Permutation(p), a.total_cost, retained)
            }
            (TransformKind::Rings, prev) => {
                let template = RingRotation::zero(self.ring_count, self.ring_step)?;
                let fit = best_ring_rotation(anchor, target, &template)?;
                let prev = match prev {
                    TransformSpec::Rings(r) => r.clone(),
                    _ => template,
                };
                let retained = ring_energy(anchor, target, &prev)?;
                (TransformSpec::Rings(fit.transform), fit.energy, retained)
            }
            (TransformKind::Flips, prev) => {
                let fit = best_flip_config(anchor, target, &self.divisions)?;
                let prev = match prev {
                    TransformSpec::Flips(f) => f.clone(),
                    _ => FlipConfig::identity(&self.divisions)?,
                };
                let retained = flip_energy(anchor, target, &prev)?;
                (TransformSpec::Flips(fit.transform), fit.energy, retained)
            }
        };
        Ok(Matched {
            arrangement: Arrangement::Transform { transform },
            energy,
            retained_energy,
        })
    }

    /// Matches the tiles of `target` against every source tile under a copy
    /// allowance, producing a selection.
    pub fn fit_selection(
        &self,
        sources: &[ImageGrid],
        target: &ImageGrid,
        copies: &CopySpec,
        previous: &TileSelection,
    ) -> Result<Matched, EngineError> {
        let tiling = self.tiling.expect("tiling set");
        let d = tile_cost_matrix_with(sources, target, tiling, &L2Distance)?;
        let a = solve_rectangular(&d, copies)?;
        let retained = d.cost_of(previous.mapping());
        Ok(Matched {
            arrangement: Arrangement::Selection {
                selection: TileSelection::new(tiling, sources.len(), a.mapping)?,
            },
            energy: a.total_cost,
            retained_energy: retained,
        })
    }
}
