//! Counter/stream based randomness.
//!
//! A [`RngStream`] names a ChaCha8 stream by `(master_seed, stream_id)`.
//! Work items derive child streams from a stable tag (sample index, trial
//! index, ...) instead of sharing one generator, so results do not depend on
//! scheduling order or on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        RngStream {
            master_seed,
            stream_id: 0,
        }
    }

    /// Child stream identified by `tag`. Distinct tags give distinct streams.
    pub fn derive(&self, tag: u64) -> Self {
        RngStream {
            master_seed: self.master_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(tag)),
        }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draw(s: RngStream, n: usize) -> Vec<u64> {
        let mut r = s.rng();
        (0..n).map(|_| r.random()).collect()
    }

    #[test]
    fn identical_streams_repeat() {
        let s = RngStream::new(42).derive(7);
        assert_eq!(draw(s, 16), draw(s, 16));
    }

    #[test]
    fn distinct_tags_and_seeds_differ() {
        let base = RngStream::new(42);
        assert_ne!(draw(base.derive(1), 4), draw(base.derive(2), 4));
        assert_ne!(draw(RngStream::new(1), 4), draw(RngStream::new(2), 4));
        assert_ne!(base.derive(1).derive(2), base.derive(2).derive(1));
    }

    #[test]
    fn frozen_first_draw() {
        // Guards the cross-platform contract: this value must never change.
        let first = draw(RngStream::new(42).derive(3), 1)[0];
        assert_eq!(first, 13_594_305_081_741_423_437);
    }

    #[test]
    fn streams_are_uncorrelated() {
        let a = RngStream::new(9).derive(0);
        let b = RngStream::new(9).derive(1);
        let (mut ra, mut rb) = (a.rng(), b.rng());
        let n = 20_000;
        let xs: Vec<(f64, f64)> = (0..n)
            .map(|_| (ra.random::<f64>() - 0.5, rb.random::<f64>() - 0.5))
            .collect();
        let cov: f64 = xs.iter().map(|(x, y)| x * y).sum::<f64>() / n as f64;
        // var of U(-0.5, 0.5) is 1/12; correlation below 0.03
        assert!((cov * 12.0).abs() < 0.03, "correlation {}", cov * 12.0);
    }
}
