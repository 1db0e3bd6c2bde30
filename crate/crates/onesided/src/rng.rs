//! Seedable counter-based random number streams.
//!
//! A stream is identified by a `(seed, stream_id)` pair. The generator is a
//! keyed Weyl counter pushed through a 64-bit avalanche finalizer, so output
//! `i` of a stream is a pure function of `(key, i)`: streams can be created,
//! cloned, and consumed in any order (or in parallel) without affecting each
//! other, and replaying a `(seed, stream_id)` reproduces the exact sequence.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; full-avalanche mixing of a 64-bit word.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic random stream, cheap to create and to fork.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

impl RngStream {
    /// Stream derived from a user seed and a stream identifier.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let key = mix64(mix64(seed ^ GOLDEN) ^ stream_id.wrapping_mul(GOLDEN).wrapping_add(1));
        RngStream { key, counter: 0 }
    }

    /// Independent child stream; `substream(i) != substream(j)` for `i != j`,
    /// and the child does not share state with the parent.
    pub fn substream(&self, id: u64) -> Self {
        RngStream::new(self.key, id)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key ^ self.counter.wrapping_mul(GOLDEN))
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        // 53 mantissa bits, offset by half a step so 0.0 and 1.0 are excluded.
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform integer in `[0, bound)` via Lemire's multiply-shift.
    #[inline]
    pub fn uniform_index(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (((self.next_u64() as u128) * (bound as u128)) >> 64) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seed_and_stream_reproduce_sequence() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        let same = (0..100).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn substream_is_deterministic_and_independent_of_parent_state() {
        let mut parent = RngStream::new(9, 9);
        let mut c1 = parent.substream(3);
        for _ in 0..10 {
            parent.next_u64();
        }
        let mut c2 = parent.substream(3);
        for _ in 0..100 {
            assert_eq!(c1.next_u64(), c2.next_u64());
        }
    }

    #[test]
    fn uniform_is_in_open_unit_interval_with_correct_moments() {
        let mut r = RngStream::new(1, 0);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let u = r.uniform();
            assert!(u > 0.0 && u < 1.0);
            sum += u;
            sumsq += u * u;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        // 4-sigma bands: sd(mean) = sqrt(1/12)/sqrt(n)
        assert!((mean - 0.5).abs() < 4.0 * (1.0 / 12.0f64).sqrt() / (n as f64).sqrt());
        assert!((var - 1.0 / 12.0).abs() < 4.0 * 0.1 / (n as f64).sqrt());
    }

    #[test]
    fn streams_are_uncorrelated() {
        let mut a = RngStream::new(5, 1);
        let mut b = RngStream::new(5, 2);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += (a.uniform() - 0.5) * (b.uniform() - 0.5);
        }
        let corr = acc / n as f64 / (1.0 / 12.0);
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr = {corr}");
    }

    #[test]
    fn uniform_index_covers_range_uniformly() {
        let mut r = RngStream::new(3, 3);
        let mut counts = [0usize; 10];
        for _ in 0..100_000 {
            counts[r.uniform_index(10)] += 1;
        }
        for &c in &counts {
            assert!((c as f64 - 10_000.0).abs() < 4.0 * (100_000.0f64 * 0.1 * 0.9).sqrt());
        }
    }
}
