#![allow(dead_code)]

use std::sync::Arc;

use tessera::denoiser::{MockCodec, MockDenoiser, PromptId};
use tessera::engine::{Backend, Engine, EngineConfig, RunOptions, RunResult};
use tessera::{ImageGrid, Tiling, TilePermutation};

/// Small xorshift stream for test fixtures.
pub struct Xs(pub u64);

impl Xs {
    pub fn next_u64(&mut self) -> u64 {
        let mut s = self.0;
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        self.0 = s;
        s
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn shuffle(&mut self, v: &mut [usize]) {
        for i in (1..v.len()).rev() {
            let j = self.below(i + 1);
            v.swap(i, j);
        }
    }
}

pub fn rng(seed: u64) -> Xs {
    Xs(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
}

/// An `m × m`-tiled RGB image whose tiles each carry a distinct base colour
/// plus a per-tile gradient, so no two tiles are alike.
pub fn distinct_tiles(m: usize, tile: usize, seed: u64) -> ImageGrid {
    let mut r = rng(seed);
    let side = m * tile;
    let n = m * m;
    let bases: Vec<[f64; 3]> = (0..n)
        .map(|k| {
            let hue = k as f64 / n as f64;
            [0.15 + 0.7 * hue, 0.15 + 0.7 * r.unit(), 0.15 + 0.7 * (1.0 - hue)]
        })
        .collect();
    let mut values = vec![0.0f32; side * side * 3];
    for y in 0..side {
        for x in 0..side {
            let k = (y / tile) * m + x / tile;
            let ramp = ((y % tile) as f64 + (x % tile) as f64) / (2.0 * tile as f64);
            for c in 0..3 {
                let v = bases[k][c] + 0.1 * (ramp - 0.5) * if c == 1 { -1.0 } else { 1.0 };
                values[(y * side + x) * 3 + c] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    ImageGrid::pixels(side, side, 3, values).unwrap()
}

pub fn random_image(h: usize, w: usize, c: usize, seed: u64) -> ImageGrid {
    let mut r = rng(seed);
    ImageGrid::pixels(h, w, c, (0..h * w * c).map(|_| r.unit() as f32).collect()).unwrap()
}

pub fn random_permutation(m: usize, tile: usize, seed: u64) -> TilePermutation {
    let mut r = rng(seed ^ 0xABCD);
    let mut p: Vec<usize> = (0..m * m).collect();
    r.shuffle(&mut p);
    TilePermutation::new(Tiling::new(m, tile, tile).unwrap(), p).unwrap()
}

pub fn mock_backend(targets: &[(&str, ImageGrid)], pull: f64) -> Backend {
    let mock = MockDenoiser::new(targets.iter().map(|(p, t)| (PromptId::new(*p), t.clone())))
        .with_pull(pull)
        .unwrap();
    Backend {
        denoiser: Arc::new(mock),
        codec: None,
    }
}

pub fn latent_backend(targets: &[(&str, ImageGrid)], pull: f64, scale: usize) -> Backend {
    let shape = targets[0].1.shape();
    let codec = MockCodec::new(shape, scale).unwrap();
    let mock = MockDenoiser::new(targets.iter().map(|(p, t)| (PromptId::new(*p), t.clone())))
        .with_pull(pull)
        .unwrap()
        .with_codec(&codec)
        .unwrap();
    Backend {
        denoiser: Arc::new(mock),
        codec: Some(Arc::new(codec)),
    }
}

pub fn run(cfg: EngineConfig, backend: Backend, sources: Vec<ImageGrid>, shape: Option<(usize, usize, usize)>, workers: usize) -> RunResult {
    Engine::new(
        cfg,
        backend,
        sources,
        shape,
        RunOptions {
            workers,
            record_snapshots: false,
        },
    )
    .unwrap()
    .run()
    .unwrap()
}
