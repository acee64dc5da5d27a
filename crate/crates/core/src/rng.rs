//! Seeded Wiener increments.
//!
//! Every stochastic path in the crate draws from a [`NoiseStream`] obtained
//! from a master seed and a *path* of indices (trajectory, role, branch...).
//! The path is folded into a 64-bit stream id with SplitMix64 and selects an
//! independent ChaCha8 keystream (`set_stream`), so the numbers a trajectory
//! sees depend only on `(seed, path)` and never on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream-role tags used in substream paths.
pub mod role {
    pub const MAIN: u64 = 0;
    pub const INIT: u64 = 1;
    pub const BRANCH: u64 = 2;
    pub const DIRECTION: u64 = 3;
}

#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    let x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Fold a substream path into a stream id.
pub fn stream_id(path: &[u64]) -> u64 {
    path.iter()
        .fold(0x243f_6a88_85a3_08d3, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, path: &[u64]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id(path));
        Self { rng }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Wiener increment with variance `dt`.
    #[inline]
    pub fn wiener(&mut self, dt: f64) -> f64 {
        dt.sqrt() * self.normal()
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform sample in a disc of the given radius.
    pub fn in_disc(&mut self, radius: f64) -> (f64, f64) {
        if radius == 0.0 {
            return (0.0, 0.0);
        }
        let r = radius * self.uniform().sqrt();
        let phi = 2.0 * std::f64::consts::PI * self.uniform();
        (r * phi.cos(), r * phi.sin())
    }
}
