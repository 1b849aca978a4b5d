//! Seeded random streams. Every run owns one seed; the environment, the
//! rollout policy, mixture selection and evaluation each draw from their own
//! ChaCha stream so that changing how often one consumer draws does not shift
//! the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Environment = 0,
    Policy = 1,
    Mixture = 2,
    Evaluation = 3,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
