//! Portable deterministic randomness for mask generation.
//!
//! Every random draw comes from ChaCha8 keyed by the perturbation spec seed
//! (`ChaCha8Rng::seed_from_u64`) with the 64-bit stream id selecting an
//! independent keystream. Stream ids pack `(purpose, style, frame)`:
//!
//! ```text
//! bits 56..64  purpose   (params, permutation, per-frame noise)
//! bits 48..56  style code (0..12)
//! bits  0..48  frame index, or 0 for whole-video draws
//! ```
//!
//! Continuous noise fields use [`lattice_value`], a SplitMix64 finalizer over
//! `(seed, ix, iy)`, so any lattice point can be evaluated without state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    RegionParams = 1,
    Permutation = 2,
    FrameNoise = 3,
    StyleChoice = 4,
}

pub fn stream_id(purpose: Purpose, style_code: u8, frame: u64) -> u64 {
    debug_assert!(frame < (1 << 48));
    (u64::from(purpose as u8) << 56) | (u64::from(style_code) << 48) | (frame & ((1 << 48) - 1))
}

pub fn stream_rng(seed: u64, purpose: Purpose, style_code: u8, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(purpose, style_code, frame));
    rng
}

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform value in `[0, 1)` attached to integer lattice point `(ix, iy)`.
#[inline]
pub fn lattice_value(seed: u64, ix: i64, iy: i64) -> f32 {
    let h = splitmix64(seed ^ splitmix64((ix as u64).wrapping_mul(0x85EB_CA6B) ^ splitmix64(iy as u64)));
    (h >> 40) as f32 / (1u64 << 24) as f32
}

/// Stable 64-bit seed from arbitrary byte strings (first 8 bytes of SHA-256).
pub fn derive_seed(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
