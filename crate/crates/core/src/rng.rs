//! Seeded, splittable random streams.
//!
//! Every replica draws from its own ChaCha8 stream: the base seed fixes the key
//! and the replica index selects the stream, so replicas never overlap and a
//! plan reproduces bit-for-bit regardless of how replicas are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ReplicaRng = ChaCha8Rng;

pub fn replica_rng(base_seed: u64, replica: u64) -> ReplicaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(replica);
    rng
}
