//! Regenerates the small PNGs used by the configs in `configs/`.
//!
//! `cargo run -p tessera --example make_assets [DIR]`

use std::path::PathBuf;

use tessera::runner::save_png;
use tessera::transform::{BlockOp, FlipConfig, FlipLevel};
use tessera::{ImageGrid, TilePermutation, Tiling};

const SIDE: usize = 64;

fn grid(f: impl Fn(usize, usize) -> [f32; 3]) -> ImageGrid {
    let mut v = Vec::with_capacity(SIDE * SIDE * 3);
    for y in 0..SIDE {
        for x in 0..SIDE {
            v.extend(f(y, x).map(|c| (c.clamp(0.0, 1.0) * 255.0).round() / 255.0));
        }
    }
    ImageGrid::pixels(SIDE, SIDE, 3, v).unwrap()
}

/// 4x4 tiles, each a distinct colour with its own gradient and a corner mark.
fn mosaic() -> ImageGrid {
    let tile = SIDE / 4;
    grid(|y, x| {
        let k = (y / tile) * 4 + x / tile;
        let (ty, tx) = ((y % tile) as f32 / tile as f32, (x % tile) as f32 / tile as f32);
        let hue = k as f32 / 16.0;
        let mut px = [
            0.5 + 0.45 * (std::f32::consts::TAU * hue).cos(),
            0.5 + 0.45 * (std::f32::consts::TAU * (hue + 1.0 / 3.0)).cos(),
            0.5 + 0.45 * (std::f32::consts::TAU * (hue + 2.0 / 3.0)).cos(),
        ];
        px[k % 3] *= 0.6 + 0.4 * ty;
        px[(k + 1) % 3] *= 0.6 + 0.4 * tx;
        if ty < 0.25 && tx < 0.25 {
            px = [1.0 - px[0], 1.0 - px[1], 1.0 - px[2]];
        }
        px
    })
}

/// Diagonal stripes whose spacing widens across the image, so no two tiles
/// are alike.
fn stripes() -> ImageGrid {
    grid(|y, x| {
        let u = (x + y) as f32;
        let s = (0.5 + 0.5 * (u * u / 300.0).sin()).round();
        [0.2 + 0.6 * s, 0.3 + y as f32 / 160.0, 0.8 - 0.6 * s]
    })
}

fn rings() -> ImageGrid {
    let c = (SIDE as f32 - 1.0) / 2.0;
    grid(|y, x| {
        let r = ((y as f32 - c).powi(2) + (x as f32 - c).powi(2)).sqrt();
        let s = 0.5 + 0.5 * (r / 3.0).sin();
        [s, 0.5 * s + 0.25, 1.0 - s]
    })
}

fn warm() -> ImageGrid {
    grid(|y, x| [0.9 - y as f32 / 200.0, 0.4 + x as f32 / 200.0, 0.2])
}

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/assets"));
    std::fs::create_dir_all(&dir).unwrap();

    let source = mosaic();
    let tiling = Tiling::for_image(4, SIDE, SIDE).unwrap();
    let shuffle = TilePermutation::new(tiling, vec![5, 12, 0, 9, 3, 14, 7, 1, 10, 15, 2, 8, 13, 4, 11, 6]).unwrap();
    let r = |deg| BlockOp::new(false, deg).unwrap();
    let flips = FlipConfig::new(vec![FlipLevel {
        division: 2,
        ops: vec![r(90), BlockOp::new(true, 0).unwrap(), r(0), r(180)],
    }])
    .unwrap();

    let files = [
        ("source.png", source.clone()),
        ("target_shuffled.png", shuffle.apply(&source).unwrap()),
        ("target_flipped.png", flips.apply(&source).unwrap()),
        ("stripes.png", stripes()),
        ("rings.png", rings()),
        ("warm.png", warm()),
    ];
    for (name, img) in files {
        save_png(&img, &dir.join(name)).unwrap();
        println!("{}", dir.join(name).display());
    }
}
