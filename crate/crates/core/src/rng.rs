//! Counter-based random streams.
//!
//! Every Monte Carlo draw in the crate comes from a ChaCha8 stream whose key
//! is derived from `(master_seed, label)` and whose 64-bit stream id is the
//! replicate (or chunk) index. The draw index is the position within that
//! stream, so a draw is a pure function of `(master_seed, label, replicate,
//! draw)` and results do not depend on how work is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey([u8; 32]);

impl StreamKey {
    pub fn new(master_seed: u64, label: &str) -> Self {
        let mut h = Sha256::new();
        h.update(master_seed.to_le_bytes());
        h.update(label.as_bytes());
        Self(h.finalize().into())
    }

    pub fn stream(&self, index: u64) -> Draws {
        let mut rng = ChaCha8Rng::from_seed(self.0);
        rng.set_stream(index);
        Draws(rng)
    }
}

/// One replicate's random stream.
#[derive(Debug, Clone)]
pub struct Draws(ChaCha8Rng);

impl Draws {
    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.0.sample(Open01)
    }
}
