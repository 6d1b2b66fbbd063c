//! Tile cost matrices and the energy-minimising matchers built on them.

mod hungarian;
mod search;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use search::{best_flip_config, best_ring_rotation, flip_energy, ring_energy, Fit};

use crate::image::ImageGrid;
use crate::transform::{TransformError, Tiling};

#[derive(Debug, Error, PartialEq)]
pub enum AssignmentError {
    #[error("cost matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("cost matrix entry ({row}, {col}) = {value} is not a finite non-negative number")]
    BadEntry { row: usize, col: usize, value: f64 },
    #[error("cost buffer holds {actual} entries, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("copies supply {supply} source slots for {demand} destinations")]
    Infeasible { supply: usize, demand: usize },
    #[error("copy spec covers {copies} source tiles but the matrix has {rows} rows")]
    CopyLength { copies: usize, rows: usize },
    #[error("copy counts must be positive (tile {0})")]
    ZeroCopies(usize),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Dense `rows × cols` matrix; entry `(i, j)` is the distance from source tile
/// `i` to destination tile `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self, AssignmentError> {
        if entries.len() != rows * cols {
            return Err(AssignmentError::BufferLength {
                expected: rows * cols,
                actual: entries.len(),
            });
        }
        if let Some(k) = entries.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(AssignmentError::BadEntry {
                row: k / cols.max(1),
                col: k % cols.max(1),
                value: entries[k],
            });
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AssignmentError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(AssignmentError::BufferLength {
                    expected: cols,
                    actual: r.len(),
                });
            }
            entries.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols + col]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, AssignmentError> {
        Self::new(
            self.rows,
            self.cols,
            self.entries.iter().map(|v| v * factor).collect(),
        )
    }

    /// Sum of `get(mapping[j], j)` in destination order.
    pub fn cost_of(&self, mapping: &[usize]) -> f64 {
        mapping.iter().enumerate().map(|(j, &r)| self.get(r, j)).sum()
    }
}

/// `mapping[j]` is the source row assigned to destination `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub mapping: Vec<usize>,
    pub total_cost: f64,
}

/// How many times each source tile may be reused.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CopyRepr")]
pub struct CopySpec {
    copies_per_tile: Vec<usize>,
}

#[derive(Deserialize)]
struct CopyRepr {
    copies_per_tile: Vec<usize>,
}

impl TryFrom<CopyRepr> for CopySpec {
    type Error = AssignmentError;

    fn try_from(r: CopyRepr) -> Result<Self, Self::Error> {
        CopySpec::new(r.copies_per_tile)
    }
}

impl CopySpec {
    pub fn new(copies_per_tile: Vec<usize>) -> Result<Self, AssignmentError> {
        if let Some(k) = copies_per_tile.iter().position(|&c| c == 0) {
            return Err(AssignmentError::ZeroCopies(k));
        }
        Ok(Self { copies_per_tile })
    }

    pub fn uniform(tiles: usize, copies: usize) -> Result<Self, AssignmentError> {
        Self::new(vec![copies; tiles])
    }

    pub fn copies(&self) -> &[usize] {
        &self.copies_per_tile
    }

    pub fn supply(&self) -> usize {
        self.copies_per_tile.iter().sum()
    }

    pub fn is_single(&self) -> bool {
        self.copies_per_tile.iter().all(|&c| c == 1)
    }
}

/// Distance between two flattened, equally sized tiles.
pub trait TileDistance: Sync {
    fn distance(&self, a: &[f32], b: &[f32]) -> f64;
}

/// Euclidean pixel distance accumulated in `f64`.
#[derive(Debug, Clone, Copy, Default)]
pub struct L2Distance;

impl TileDistance for L2Distance {
    fn distance(&self, a: &[f32], b: &[f32]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d = *x as f64 - *y as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// L2 tile cost matrix between the tiles of `a` (rows) and `b` (columns).
pub fn tile_cost_matrix(
    a: &ImageGrid,
    b: &ImageGrid,
    tiling: Tiling,
) -> Result<CostMatrix, AssignmentError> {
    tile_cost_matrix_with(std::slice::from_ref(a), b, tiling, &L2Distance)
}

/// Cost matrix whose rows are the tiles of every source image in order
/// (source `s`, tile `k` is row `s·M² + k`) and whose columns are the tiles of
/// `target`.
pub fn tile_cost_matrix_with(
    sources: &[ImageGrid],
    target: &ImageGrid,
    tiling: Tiling,
    metric: &dyn TileDistance,
) -> Result<CostMatrix, AssignmentError> {
    tiling.check(target)?;
    for s in sources {
        tiling.check(s)?;
        if s.shape() != target.shape() {
            return Err(TransformError::DimensionMismatch(format!(
                "source {:?} vs target {:?}",
                s.shape(),
                target.shape()
            ))
            .into());
        }
    }
    let n = tiling.tile_count();
    let dest: Vec<Vec<f32>> = (0..n).map(|k| tiling.extract(target, k)).collect();
    let src: Vec<Vec<f32>> = sources
        .iter()
        .flat_map(|s| (0..n).map(move |k| tiling.extract(s, k)))
        .collect();
    let entries: Vec<f64> = src
        .par_iter()
        .flat_map_iter(|row| dest.iter().map(move |col| metric.distance(row, col)))
        .collect();
    CostMatrix::new(src.len(), n, entries)
}

/// Optimal perfect matching on a square matrix.
pub fn solve_square(d: &CostMatrix) -> Result<Assignment, AssignmentError> {
    if d.rows != d.cols {
        return Err(AssignmentError::NotSquare {
            rows: d.rows,
            cols: d.cols,
        });
    }
    let row_of: Vec<usize> = (0..d.rows).collect();
    Ok(finish(d, hungarian::solve(d, &row_of)))
}

/// Optimal matching of every destination to a distinct (source, copy) slot.
/// The returned mapping reports source rows with copies collapsed.
pub fn solve_rectangular(d: &CostMatrix, copies: &CopySpec) -> Result<Assignment, AssignmentError> {
    if copies.copies().len() != d.rows {
        return Err(AssignmentError::CopyLength {
            copies: copies.copies().len(),
            rows: d.rows,
        });
    }
    let supply = copies.supply();
    if supply < d.cols {
        return Err(AssignmentError::Infeasible {
            supply,
            demand: d.cols,
        });
    }
    // more than `cols` copies of one source can never be used
    let row_of: Vec<usize> = copies
        .copies()
        .iter()
        .enumerate()
        .flat_map(|(r, &c)| std::iter::repeat_n(r, c.min(d.cols)))
        .collect();
    Ok(finish(d, hungarian::solve(d, &row_of)))
}

fn finish(d: &CostMatrix, mapping: Vec<usize>) -> Assignment {
    let total_cost = d.cost_of(&mapping);
    Assignment {
        mapping,
        total_cost,
    }
}
