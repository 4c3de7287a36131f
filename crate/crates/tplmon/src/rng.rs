//! Seed derivation and reproducible sampling.
//!
//! Every random quantity in the crate is drawn from a ChaCha stream whose
//! seed is derived from the run seed plus a tag path ("what am I for"),
//! never from a shared mutable generator. Parallel consumers therefore
//! see identical draws regardless of scheduling order.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; used only to stretch a seed and tags into key material.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for the stream identified by `(seed, tags)`.
///
/// Tag order matters: `stream(s, &[1, 2])` and `stream(s, &[2, 1])`
/// are unrelated streams.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = mix(seed ^ 0x6a09_e667_f3bc_c908);
    for &t in tags {
        state = mix(state ^ mix(t));
    }
    let mut key = [0u8; 32];
    let mut word = state;
    for chunk in key.chunks_exact_mut(8) {
        word = mix(word);
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Standard normal draw via Box-Muller on open-interval uniforms.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Pair of standard normals with correlation `rho`.
pub fn correlated_pair(rng: &mut ChaCha8Rng, rho: f64) -> (f64, f64) {
    let z1 = standard_normal(rng);
    let z2 = standard_normal(rng);
    (z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2)
}

/// Uniform index into `0..n`.
pub fn index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    rng.gen_range(0..n)
}
