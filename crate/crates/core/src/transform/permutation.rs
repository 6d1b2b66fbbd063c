use serde::{Deserialize, Serialize};

use super::TransformError;
use crate::image::ImageGrid;

/// An `M × M` grid of equally sized tiles covering an image exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TilingRepr")]
pub struct Tiling {
    pub grid_m: usize,
    pub tile_h: usize,
    pub tile_w: usize,
}

impl Tiling {
    pub fn new(grid_m: usize, tile_h: usize, tile_w: usize) -> Result<Self, TransformError> {
        if grid_m == 0 || tile_h == 0 || tile_w == 0 {
            return Err(TransformError::InvalidTiling(format!(
                "grid {grid_m} with tiles {tile_h}x{tile_w} is empty"
            )));
        }
        Ok(Self {
            grid_m,
            tile_h,
            tile_w,
        })
    }

    /// Splits a `height × width` image into `grid_m × grid_m` tiles. Both sides
    /// must be exact multiples of `grid_m`.
    pub fn for_image(grid_m: usize, height: usize, width: usize) -> Result<Self, TransformError> {
        if grid_m == 0 || !height.is_multiple_of(grid_m) || !width.is_multiple_of(grid_m) {
            return Err(TransformError::Divisibility {
                height,
                width,
                divisor: grid_m,
            });
        }
        Self::new(grid_m, height / grid_m, width / grid_m)
    }

    pub fn tile_count(&self) -> usize {
        self.grid_m * self.grid_m
    }

    pub fn height(&self) -> usize {
        self.grid_m * self.tile_h
    }

    pub fn width(&self) -> usize {
        self.grid_m * self.tile_w
    }

    pub fn check(&self, img: &ImageGrid) -> Result<(), TransformError> {
        if img.height() != self.height() || img.width() != self.width() {
            return Err(TransformError::DimensionMismatch(format!(
                "tiling covers {}x{} but image is {}x{}",
                self.height(),
                self.width(),
                img.height(),
                img.width()
            )));
        }
        Ok(())
    }

    /// Flattened values of tile `index` (row-major tile order), row by row.
    pub fn extract(&self, img: &ImageGrid, index: usize) -> Vec<f32> {
        let c = img.channels();
        let (ty, tx) = (index / self.grid_m, index % self.grid_m);
        let row_len = self.tile_w * c;
        let mut out = Vec::with_capacity(self.tile_h * row_len);
        for y in 0..self.tile_h {
            let start = img.index(ty * self.tile_h + y, tx * self.tile_w, 0);
            out.extend_from_slice(&img.values()[start..start + row_len]);
        }
        out
    }

    /// Copies tile `src_tile` of `src` into tile slot `dst_tile` of `dst`.
    pub(crate) fn copy_tile(
        &self,
        src: &ImageGrid,
        src_tile: usize,
        dst: &mut [f32],
        dst_tile: usize,
    ) {
        let c = src.channels();
        let row_len = self.tile_w * c;
        let (sy, sx) = (src_tile / self.grid_m, src_tile % self.grid_m);
        let (dy, dx) = (dst_tile / self.grid_m, dst_tile % self.grid_m);
        for y in 0..self.tile_h {
            let s = src.index(sy * self.tile_h + y, sx * self.tile_w, 0);
            let d = src.index(dy * self.tile_h + y, dx * self.tile_w, 0);
            dst[d..d + row_len].copy_from_slice(&src.values()[s..s + row_len]);
        }
    }
}

/// A bijective rearrangement of tiles: destination tile `j` receives source
/// tile `mapping[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PermutationRepr")]
pub struct TilePermutation {
    tiling: Tiling,
    mapping: Vec<usize>,
}

impl TilePermutation {
    pub fn new(tiling: Tiling, mapping: Vec<usize>) -> Result<Self, TransformError> {
        let n = tiling.tile_count();
        if mapping.len() != n {
            return Err(TransformError::InvalidMapping(format!(
                "mapping has {} entries for {} tiles",
                mapping.len(),
                n
            )));
        }
        let mut seen = vec![false; n];
        for &s in &mapping {
            if s >= n || seen[s] {
                return Err(TransformError::InvalidMapping(format!(
                    "mapping is not a bijection on 0..{n} (entry {s})"
                )));
            }
            seen[s] = true;
        }
        Ok(Self { tiling, mapping })
    }

    pub fn identity(tiling: Tiling) -> Self {
        Self {
            tiling,
            mapping: (0..tiling.tile_count()).collect(),
        }
    }

    pub fn tiling(&self) -> Tiling {
        self.tiling
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &s)| i == s)
    }

    pub fn apply(&self, img: &ImageGrid) -> Result<ImageGrid, TransformError> {
        self.tiling.check(img)?;
        let mut out = vec![0.0f32; img.len()];
        for (dst, &src) in self.mapping.iter().enumerate() {
            self.tiling.copy_tile(img, src, &mut out, dst);
        }
        Ok(img.with_values(out))
    }

    pub fn invert(&self) -> Self {
        let mut inv = vec![0; self.mapping.len()];
        for (dst, &src) in self.mapping.iter().enumerate() {
            inv[src] = dst;
        }
        Self {
            tiling: self.tiling,
            mapping: inv,
        }
    }

    /// `self ∘ inner`: applying the result equals applying `inner`, then `self`.
    pub fn compose(&self, inner: &TilePermutation) -> Result<Self, TransformError> {
        if self.tiling != inner.tiling {
            return Err(TransformError::VariantMismatch(
                "permutations use different tilings".into(),
            ));
        }
        Ok(Self {
            tiling: self.tiling,
            mapping: self.mapping.iter().map(|&d| inner.mapping[d]).collect(),
        })
    }
}

/// A possibly non-injective tile choice drawn from one or more source images.
///
/// Source tile `k` refers to tile `k % M²` of source image `k / M²`. Produced
/// by multi-copy and multi-source matching, where a bijection no longer exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SelectionRepr")]
pub struct TileSelection {
    tiling: Tiling,
    source_images: usize,
    mapping: Vec<usize>,
}

impl TileSelection {
    pub fn new(
        tiling: Tiling,
        source_images: usize,
        mapping: Vec<usize>,
    ) -> Result<Self, TransformError> {
        let n = tiling.tile_count();
        if mapping.len() != n {
            return Err(TransformError::InvalidMapping(format!(
                "selection has {} entries for {} tiles",
                mapping.len(),
                n
            )));
        }
        if let Some(&bad) = mapping.iter().find(|&&s| s >= n * source_images) {
            return Err(TransformError::InvalidMapping(format!(
                "source tile {bad} out of range for {source_images} source image(s)"
            )));
        }
        Ok(Self {
            tiling,
            source_images,
            mapping,
        })
    }

    pub fn tiling(&self) -> Tiling {
        self.tiling
    }

    pub fn source_images(&self) -> usize {
        self.source_images
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    /// The equivalent permutation, when this selection is a bijection on one
    /// source image.
    pub fn as_permutation(&self) -> Option<TilePermutation> {
        if self.source_images != 1 {
            return None;
        }
        TilePermutation::new(self.tiling, self.mapping.clone()).ok()
    }

    pub fn render(&self, sources: &[ImageGrid]) -> Result<ImageGrid, TransformError> {
        if sources.len() != self.source_images {
            return Err(TransformError::DimensionMismatch(format!(
                "selection expects {} source image(s), got {}",
                self.source_images,
                sources.len()
            )));
        }
        let first = &sources[0];
        for s in sources {
            self.tiling.check(s)?;
            first
                .ensure_same_shape(s)
                .map_err(|e| TransformError::DimensionMismatch(e.to_string()))?;
        }
        let n = self.tiling.tile_count();
        let mut out = vec![0.0f32; first.len()];
        for (dst, &src) in self.mapping.iter().enumerate() {
            self.tiling
                .copy_tile(&sources[src / n], src % n, &mut out, dst);
        }
        Ok(first.with_values(out))
    }
}

// Deserialization goes through the constructors so stored transforms are
// validated like freshly built ones.

#[derive(Deserialize)]
struct TilingRepr {
    grid_m: usize,
    tile_h: usize,
    tile_w: usize,
}

impl TryFrom<TilingRepr> for Tiling {
    type Error = TransformError;

    fn try_from(r: TilingRepr) -> Result<Self, Self::Error> {
        Tiling::new(r.grid_m, r.tile_h, r.tile_w)
    }
}

#[derive(Deserialize)]
struct PermutationRepr {
    tiling: Tiling,
    mapping: Vec<usize>,
}

impl TryFrom<PermutationRepr> for TilePermutation {
    type Error = TransformError;

    fn try_from(r: PermutationRepr) -> Result<Self, Self::Error> {
        TilePermutation::new(r.tiling, r.mapping)
    }
}

#[derive(Deserialize)]
struct SelectionRepr {
    tiling: Tiling,
    source_images: usize,
    mapping: Vec<usize>,
}

impl TryFrom<SelectionRepr> for TileSelection {
    type Error = TransformError;

    fn try_from(r: SelectionRepr) -> Result<Self, Self::Error> {
        TileSelection::new(r.tiling, r.source_images, r.mapping)
    }
}
