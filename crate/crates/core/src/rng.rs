//! Random number generation with a fixed, documented algorithm so packings are
//! reproducible across platforms and dependency upgrades.
//!
//! * Engine streams use ChaCha8 (`rand_chacha`), seeded through
//!   `SeedableRng::seed_from_u64`.
//! * Floats and bounded integers are derived from raw `next_u64` output by the
//!   helpers below rather than by `rand`'s distribution code, whose value
//!   stability is not guaranteed across major versions.
//! * Per-job seeds come from [`derive_seed`], a SplitMix64 avalanche over
//!   `(base_seed, run, replicate)`, so adding runs never changes the seeds of
//!   existing ones.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type EngineRng = ChaCha8Rng;

pub fn engine_rng(seed: u64) -> EngineRng {
    ChaCha8Rng::seed_from_u64(seed)
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer applied to `x + γ`.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `rep` in run `run`.
pub fn derive_seed(base_seed: u64, run: u64, rep: u64) -> u64 {
    let h = splitmix64(base_seed);
    let h = splitmix64(h ^ run.wrapping_mul(0xD1B5_4A32_D192_ED03));
    splitmix64(h ^ rep.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7))
}

/// Seed of an auxiliary stream (lattice shuffle, uniform draws) keyed by a tag.
pub fn stream_seed(base_seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(base_seed ^ 0xA076_1D64_78BD_642F) ^ splitmix64(tag))
}

/// Uniform in [0, 1) with 53 bits of precision.
#[inline]
pub fn unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `0..n` (Lemire's nearly-divisionless method). `n` must be > 0.
#[inline]
pub fn below<R: RngCore + ?Sized>(rng: &mut R, n: u64) -> u64 {
    debug_assert!(n > 0);
    let mut m = (rng.next_u64() as u128) * (n as u128);
    let mut low = m as u64;
    if low < n {
        let threshold = n.wrapping_neg() % n;
        while low < threshold {
            m = (rng.next_u64() as u128) * (n as u128);
            low = m as u64;
        }
    }
    (m >> 64) as u64
}

/// Uniform point in the unit disk (z = 0) by rejection from the square.
pub fn in_unit_disk<R: RngCore + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let x = 2.0 * unit_f64(rng) - 1.0;
        let y = 2.0 * unit_f64(rng) - 1.0;
        if x * x + y * y <= 1.0 {
            return [x, y, 0.0];
        }
    }
}

/// Uniform point in the unit ball by rejection from the cube.
pub fn in_unit_ball<R: RngCore + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let x = 2.0 * unit_f64(rng) - 1.0;
        let y = 2.0 * unit_f64(rng) - 1.0;
        let z = 2.0 * unit_f64(rng) - 1.0;
        if x * x + y * y + z * z <= 1.0 {
            return [x, y, z];
        }
    }
}
