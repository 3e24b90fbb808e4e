//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a base seed and a path of stream indices, e.g.
//! `(seed, generation, member)`, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a base seed and a stream path into a new seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0xA5A5))))
}

pub fn seeded(base: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(base, path))
}

pub fn standard_normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Samples an index from a discrete distribution given by `probs`.
pub fn sample_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    use rand::Rng as _;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last index with non-zero mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
