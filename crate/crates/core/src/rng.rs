//! Reproducible random streams.
//!
//! Every trajectory or draw gets its own ChaCha stream keyed by
//! `(seed, index)`, so results do not depend on how work is split across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Independent generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn first_words(seed: u64, stream: u64) -> Vec<u64> {
        let mut r = stream_rng(seed, stream);
        (0..8).map(|_| r.gen()).collect()
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = first_words(7, 3);
        assert_eq!(a, first_words(7, 3));
        assert_ne!(a, first_words(7, 4));
        assert_ne!(a, first_words(8, 3));
    }
}
