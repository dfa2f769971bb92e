//! Deterministic random number generation.
//!
//! Every stochastic component of the crate draws from a ChaCha12 stream
//! seeded through [`derive_seed`], so a run is fully determined by the
//! user-visible seed plus a fixed set of stream tags. The derivation is
//! a SplitMix64 fold:
//!
//! ```text
//! s = splitmix64(root)
//! for tag in tags: s = splitmix64(s ^ tag)
//! ```
//!
//! Gaussian variates come from the Box-Muller transform over the ChaCha12
//! uniform stream, which keeps the whole sequence specified by this file
//! rather than by a distribution crate's internals.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Stream tags: one per independent random purpose.
pub mod stream {
    pub const BACKGROUND: u64 = 0x01;
    pub const OBJECTS: u64 = 0x02;
    pub const FRAME_NOISE: u64 = 0x03;
    pub const MODEL_INIT: u64 = 0x04;
    pub const SHUFFLE: u64 = 0x05;
    pub const GRADCHECK: u64 = 0x06;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a root seed with a sequence of stream/counter tags.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(root);
    for &t in tags {
        s = splitmix64(s ^ t);
    }
    s
}

/// ChaCha12 stream for `(root, tags)`.
pub fn stream_rng(root: u64, tags: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(root, tags))
}

/// Standard-normal sampler (Box-Muller over the uniform stream).
pub struct NormalSampler<R: RngCore> {
    rng: R,
    spare: Option<f64>,
}

impl<R: RngCore> NormalSampler<R> {
    pub fn new(rng: R) -> Self {
        NormalSampler { rng, spare: None }
    }

    /// One N(0,1) draw.
    pub fn next(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        // u1 in (0,1] so the log is finite.
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// In-place Fisher-Yates shuffle driven by the given stream.
pub fn shuffle<T, R: RngCore>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_stable_and_tag_sensitive() {
        assert_eq!(derive_seed(0, &[1, 2]), derive_seed(0, &[1, 2]));
        assert_ne!(derive_seed(0, &[1, 2]), derive_seed(0, &[2, 1]));
        assert_ne!(derive_seed(0, &[1]), derive_seed(1, &[1]));
    }

    #[test]
    fn normal_sampler_moments() {
        let mut s = NormalSampler::new(stream_rng(7, &[stream::FRAME_NOISE]));
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| s.next()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn shuffle_is_deterministic_per_seed() {
        let mut a: Vec<u32> = (0..50).collect();
        let mut b: Vec<u32> = (0..50).collect();
        shuffle(&mut a, &mut stream_rng(3, &[stream::SHUFFLE, 0]));
        shuffle(&mut b, &mut stream_rng(3, &[stream::SHUFFLE, 0]));
        assert_eq!(a, b);
        let mut c: Vec<u32> = (0..50).collect();
        shuffle(&mut c, &mut stream_rng(3, &[stream::SHUFFLE, 1]));
        assert_ne!(a, c);
    }
}
