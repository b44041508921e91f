//! Counter-based random streams.
//!
//! Every stream is addressed by `(seed, tag, block, index)`: the first three
//! words key a ChaCha8 generator and `index` selects its 64-bit stream id. The
//! draws of sample `index` in batch `block` therefore never depend on how many
//! other samples were drawn, or in what order.
//!
//! Standard normals come from the ziggurat sampler; uniforms are built from
//! the top 53 bits of each 64-bit word.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

pub const TAG_SAMPLE: u64 = 0x5341_4d50;
pub const TAG_CRITIC: u64 = 0x4352_4954;
pub const TAG_ACTOR: u64 = 0x4143_544f;
pub const TAG_EVAL: u64 = 0x4556_414c;
pub const TAG_INIT: u64 = 0x494e_4954;
pub const TAG_PATH: u64 = 0x5041_5448;

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Standard normal deviates from one addressed stream.
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: u64, tag: u64, block: u64, index: u64) -> Self {
        let mut state = seed ^ tag.rotate_left(17) ^ block.rotate_left(41);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
        }
        // mix the raw words in as well so distinct triples cannot collide through the xor
        key[..8]
            .iter_mut()
            .zip(seed.to_le_bytes())
            .for_each(|(k, s)| *k ^= s);
        key[8..16]
            .iter_mut()
            .zip(tag.to_le_bytes())
            .for_each(|(k, s)| *k ^= s);
        key[16..24]
            .iter_mut()
            .zip(block.to_le_bytes())
            .for_each(|(k, s)| *k ^= s);
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        Self { rng }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|z| *z = self.normal());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<f64> = {
            let mut s = NormalStream::new(7, TAG_SAMPLE, 0, 3);
            (0..5).map(|_| s.normal()).collect()
        };
        let b: Vec<f64> = {
            let mut s = NormalStream::new(7, TAG_SAMPLE, 0, 3);
            (0..5).map(|_| s.normal()).collect()
        };
        let c: Vec<f64> = {
            let mut s = NormalStream::new(7, TAG_SAMPLE, 0, 4);
            (0..5).map(|_| s.normal()).collect()
        };
        let d: Vec<f64> = {
            let mut s = NormalStream::new(7, TAG_SAMPLE, 1, 3);
            (0..5).map(|_| s.normal()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn normal_moments() {
        let mut s = NormalStream::new(1, 2, 3, 4);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| s.normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n as f64;
        let kurt = draws.iter().map(|z| z.powi(4)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.01);
        assert!((kurt - 3.0).abs() < 0.05);
    }
}
