//! Index-keyed random streams.
//!
//! Every stochastic loop draws sample `i` from its own ChaCha stream, so
//! results do not depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for item `index` of the loop identified by `domain`.
pub fn item_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

/// Sequential generator for a whole loop.
pub fn seq_rng(seed: u64, domain: u64) -> ChaCha8Rng {
    item_rng(seed, domain, u64::MAX)
}
