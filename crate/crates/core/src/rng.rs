//! Seeded sampling helpers shared by simulation and the bootstrap.
//!
//! Replicate-level streams are derived from a root seed with a splitmix64
//! mix, so results do not depend on scheduling order when replicates run in
//! parallel.

use rand_core::RngCore;

/// Domain tags keep derived streams from colliding across uses of the same
/// root seed.
pub(crate) const DOMAIN_SIMULATE: u64 = 0x5349_4d00;
pub(crate) const DOMAIN_BOOTSTRAP: u64 = 0x424f_4f54;

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stream seed for (root, domain, index); distinct indices give independent
/// streams regardless of evaluation order.
pub(crate) fn derive_seed(root: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ domain).wrapping_add(splitmix64(index)))
}

/// Uniform draw in [0, 1) with 53-bit resolution.
pub(crate) fn uniform_f64<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF draw from a nonnegative weight vector with positive sum; the
/// weights need not be normalized.
pub(crate) fn sample_categorical<R: RngCore>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0, "categorical weights must have positive sum");
    let target = uniform_f64(rng) * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if target < acc {
                return i;
            }
        }
    }
    // Rounding can leave target marginally above the accumulated sum.
    last_positive
}

/// Binomial draw as a sum of Bernoulli trials; `l` is small throughout.
pub(crate) fn sample_binomial<R: RngCore>(rng: &mut R, l: u32, p: f64) -> u32 {
    (0..l).filter(|_| uniform_f64(rng) < p).count() as u32
}
