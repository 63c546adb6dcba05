//! Semantic segmentation of 2D radar point clouds with X-Convolutions.
//!
//! The crate is organised bottom-up:
//!
//! * [`pointcloud`]: detections, frame accumulation, size normalization,
//!   farthest point sampling and neighbor grouping.
//! * [`diff`]: dense arrays, a reverse-mode tape, parameters, Adam, and a
//!   finite-difference gradient checker.
//! * [`net`]: the X-Conv layer, pre-processing network, encoder/decoder and
//!   decision rule.
//! * [`synth`]: a synthetic radar scene generator and the on-disk dataset format.
//! * [`train`]: focal loss, the training loop, metrics and feature ablation.

pub mod diff;
pub mod error;
pub mod net;
pub mod pointcloud;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

/// Deterministic RNG used everywhere randomness is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate RNG from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Derives an independent child seed (splitmix64 finalizer over the pair).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Serde adapter storing a `u64` seed as a decimal string.
pub mod seed_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&seed.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}
