//! Deterministic random streams.
//!
//! Every independent unit of work (a replication, a catalog) draws from its own
//! ChaCha stream derived from the master seed and the unit's index, so results
//! do not depend on thread count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
