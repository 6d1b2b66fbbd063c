//! Counter-keyed noise fields.
//!
//! Every draw is addressed by `(seed, step, stream)` rather than taken from a
//! shared generator, so the order in which parallel workers ask for noise can
//! never change what they receive.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::image::{ImageGrid, Space};

/// Stream tag for the initial mainline state.
pub const INIT_STREAM: u32 = u32::MAX;

fn generator(seed: u64, step: u32, stream: u32) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(((step as u64) << 32) | stream as u64);
    rng
}

/// Standard-normal field of the given shape.
pub fn normal_field(
    seed: u64,
    step: u32,
    stream: u32,
    (h, w, c): (usize, usize, usize),
) -> ImageGrid {
    let mut rng = generator(seed, step, stream);
    let values = (0..h * w * c)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    ImageGrid::new(h, w, c, values, Space::Latent).expect("normal samples are finite")
}

/// Uniform `[0, 1)` pixel field of the given shape.
pub fn uniform_field(
    seed: u64,
    step: u32,
    stream: u32,
    (h, w, c): (usize, usize, usize),
) -> ImageGrid {
    let mut rng = generator(seed, step, stream);
    let dist = Uniform::new(0.0f32, 1.0).expect("valid range");
    let values = (0..h * w * c).map(|_| dist.sample(&mut rng)).collect();
    ImageGrid::new(h, w, c, values, Space::Pixel).expect("uniform samples are in range")
}

/// Uniformly random permutation of `0..n` (Fisher–Yates).
pub fn permutation(seed: u64, step: u32, stream: u32, n: usize) -> Vec<usize> {
    use rand::Rng;
    let mut rng = generator(seed, step, stream);
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// `count` independent uniform draws from `0..bound`.
pub fn choices(seed: u64, step: u32, stream: u32, count: usize, bound: usize) -> Vec<usize> {
    use rand::Rng;
    let mut rng = generator(seed, step, stream);
    (0..count).map(|_| rng.random_range(0..bound)).collect()
}

/// 64-bit key mixing for per-request seeds.
pub fn derive_seed(seed: u64, step: u32, stream: u32) -> u64 {
    let mut z = seed ^ (((step as u64) << 32) | stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable stream id for a prompt string (FNV-1a folded to 31 bits).
pub fn prompt_stream(prompt: &str) -> u32 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in prompt.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ((h ^ (h >> 32)) as u32) & 0x7fff_ffff
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_depend_only_on_their_key() {
        let a = normal_field(7, 3, 1, (4, 4, 3));
        let b = normal_field(7, 3, 1, (4, 4, 3));
        assert_eq!(a, b);
        assert_ne!(a, normal_field(7, 3, 2, (4, 4, 3)));
        assert_ne!(a, normal_field(7, 4, 1, (4, 4, 3)));
        assert_ne!(a, normal_field(8, 3, 1, (4, 4, 3)));
    }

    #[test]
    fn normal_moments_are_plausible() {
        let f = normal_field(1, 0, 0, (64, 64, 3));
        let n = f.len() as f64;
        let mean: f64 = f.values().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var: f64 = f.values().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05);
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn permutation_is_a_bijection() {
        let mut p = permutation(3, 0, 0, 64);
        p.sort_unstable();
        assert_eq!(p, (0..64).collect::<Vec<_>>());
    }
}
