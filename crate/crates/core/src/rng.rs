//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, purpose)` and
//! positioned on a 64-bit stream id (chain index, posterior draw index).
//! ChaCha is counter based, so streams are independent and reproducible
//! across platforms and thread schedules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const RNG_ID: &str = "chacha8/rand_chacha-0.9;key=splitmix64(seed,purpose);stream=index";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Sampler = 1,
    Gcomp = 2,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ ((purpose as u64) << 56);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
