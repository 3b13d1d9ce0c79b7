//! Random streams and small sampling helpers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere a stream is created from a seed.
pub type Stream = ChaCha8Rng;

pub fn from_seed(seed: u64) -> Stream {
    Stream::seed_from_u64(seed)
}

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for item `index` of a run seeded by `master`.
/// Depends only on the pair, never on scheduling.
pub fn substream(master: u64, index: u64) -> Stream {
    from_seed(mix64(mix64(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03)))
}

/// Uniform on (0, 1].
pub fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// Number of trials up to and including the first success, by inversion:
/// `1 + floor(ln U / ln(1 - p))`.
pub fn geometric<R: Rng + ?Sized>(rng: &mut R, p: f64) -> u64 {
    debug_assert!(p > 0.0 && p <= 1.0);
    if p >= 1.0 {
        return 1;
    }
    let u = open_uniform(rng);
    let g = (u.ln() / (-p).ln_1p()).floor();
    1u64.saturating_add(g as u64)
}

/// Number of failures before the first success.
pub fn geometric_failures<R: Rng + ?Sized>(rng: &mut R, p: f64) -> u64 {
    geometric(rng, p) - 1
}

/// Index drawn from unnormalized weights by cumulative-sum inversion.
/// Returns `None` when all weights are zero.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = Some(i);
            if u < acc {
                return Some(i);
            }
        }
    }
    last
}
