//! Counter-based random substreams.
//!
//! Every stochastic decision draws from a ChaCha8 stream keyed by the run seed
//! and selected by `(purpose, step, entity)`. A country's draws in a given
//! decade never depend on how many draws any other country made, so results
//! are identical whether evaluations run on one thread or many.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a substream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    IcaInit = 1,
    IcaAssign = 2,
    IcaAssimilate = 3,
    IcaRevolveChoice = 4,
    IcaRevolvePosition = 5,
    IcaCompete = 6,
    GaInit = 11,
    GaOffspring = 12,
    Split = 21,
    Synthetic = 22,
    Baseline = 23,
    SeedDerivation = 31,
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `(seed, purpose, step, entity)`.
pub fn substream(seed: u64, purpose: Purpose, step: u64, entity: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = splitmix64(splitmix64(splitmix64(purpose as u64) ^ step) ^ entity);
    rng.set_stream(id);
    rng
}

/// A new seed derived from `seed` and a label; used to give paired runs
/// independent seeds from one user-supplied seed.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    splitmix64(seed ^ splitmix64(Purpose::SeedDerivation as u64 ^ splitmix64(label)))
}
