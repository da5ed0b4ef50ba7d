//! Seeded random streams.
//!
//! Every stochastic component receives its own stream derived from a master
//! seed and a path of integer labels (simulation index, replicate index,
//! purpose tag). Streams are independent of the order in which work is
//! scheduled, so parallel and sequential runs produce identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Purpose tags used as the last element of a derivation path.
pub mod tag {
    pub const GRAPH: u64 = 0x6772_6170_6800;
    pub const ASSIGNMENT: u64 = 0x6173_7369_676e;
    pub const OUTCOME: u64 = 0x6f75_7463_6f6d;
    pub const BOOTSTRAP: u64 = 0x626f_6f74_7374;
    pub const PARAMETRIC: u64 = 0x7061_7261_6d00;
    pub const BLOCK: u64 = 0x626c_6f63_6b00;
    pub const GPS: u64 = 0x6770_7300_0000;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically derives a child seed from `master` and `path`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = master;
    let mut acc = splitmix64(&mut state);
    for &label in path {
        state ^= label.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        acc ^= splitmix64(&mut state);
        state = acc;
    }
    acc
}

/// Generator seeded directly from `seed`.
pub fn from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for the stream identified by `path` under `master`.
pub fn substream(master: u64, path: &[u64]) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, path));
    rng.set_stream(path.len() as u64);
    rng
}
