//! Tile-rearrangement image synthesis: diffusion denoising interleaved with
//! re-fitting the spatial transforms (tile permutations, ring rotations or
//! block flips) that relate the generated images.

pub mod assignment;
pub mod denoiser;
pub mod engine;
pub mod image;
pub mod rng;
pub mod runner;
pub mod schedule;
pub mod transform;

pub use assignment::{solve_rectangular, solve_square, tile_cost_matrix, Assignment, CopySpec, CostMatrix};
pub use image::{ImageError, ImageGrid, Space};
pub use schedule::{MixWeights, NoiseSchedule, ScheduleConfig, ScheduleKind};
pub use transform::{FlipConfig, RingRotation, TilePermutation, Tiling, TransformError, TransformSpec};
