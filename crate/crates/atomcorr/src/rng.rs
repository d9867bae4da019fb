//! Deterministic per-shot random streams.
//!
//! Every shot derives its own counter-based substream from
//! (master_seed, shot_id), so a run produces the same multiset of shots no
//! matter how many workers process it or in which order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for one shot. ChaCha is counter-based: the master seed selects the
/// key and the shot id selects the stream, so substreams never overlap.
pub fn shot_rng(master_seed: u64, shot_id: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    // Fixed tag in the upper bytes keeps this derivation distinct from any
    // plain seed_from_u64 use.
    seed[24..].copy_from_slice(b"atcorr\0\0");
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(shot_id);
    rng
}
