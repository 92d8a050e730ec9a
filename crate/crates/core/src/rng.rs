//! Counter-based deterministic random numbers.
//!
//! Every random decision in the renderer draws from a stream keyed by
//! (seed, purpose tag, indices...). The n-th value of a stream is a pure
//! function of the key and n, so parallel schedules and thread counts can
//! never change results.

/// Stream tags; one per independent consumer of randomness.
pub mod stream {
    pub const PHOTON_PATH: u64 = 0x1;
    pub const PIXEL_SAMPLE: u64 = 0x2;
    pub const NET_INIT: u64 = 0x3;
    pub const BATCH_SHUFFLE: u64 = 0x4;
    pub const DATASET_POINT: u64 = 0x5;
    pub const DATASET_MAP: u64 = 0x6;
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; full-period bijective mixer.
#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based RNG: output i is `mix64(key + i * GOLDEN)`.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    /// Derive a stream key from a seed and a list of stream indices
    /// (tag, path index, sample index, ...).
    pub fn from_stream(seed: u64, indices: &[u64]) -> Self {
        let mut key = mix64(seed ^ GOLDEN);
        for &ix in indices {
            key = mix64(key ^ ix.wrapping_mul(GOLDEN));
        }
        Self { key, counter: 0 }
    }

    #[inline(always)]
    pub fn next_u64(&mut self) -> u64 {
        let v = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter += 1;
        v
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline(always)]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n).
    #[inline(always)]
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // Modulo bias is < 2^-32 for the range sizes used here.
        self.next_u64() % n
    }
}

/// In-place Fisher-Yates shuffle driven by `rng`.
pub fn shuffle<T>(items: &mut [T], rng: &mut CounterRng) {
    for i in (1..items.len()).rev() {
        let j = rng.next_below(i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_sequence() {
        let mut a = CounterRng::from_stream(42, &[stream::PHOTON_PATH, 7]);
        let mut b = CounterRng::from_stream(42, &[stream::PHOTON_PATH, 7]);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_streams_diverge() {
        let mut a = CounterRng::from_stream(42, &[stream::PHOTON_PATH, 7]);
        let mut b = CounterRng::from_stream(42, &[stream::PHOTON_PATH, 8]);
        let mut c = CounterRng::from_stream(43, &[stream::PHOTON_PATH, 7]);
        assert_ne!(a.next_u64(), b.next_u64());
        let mut a = CounterRng::from_stream(42, &[stream::PHOTON_PATH, 7]);
        assert_ne!(a.next_u64(), c.next_u64());
    }

    #[test]
    fn uniforms_live_in_unit_interval() {
        let mut rng = CounterRng::from_stream(1, &[stream::PIXEL_SAMPLE, 0, 0]);
        let mut sum = 0.0;
        const N: usize = 100_000;
        for _ in 0..N {
            let u = rng.next_f64();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / N as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean} far from 0.5");
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut v: Vec<u32> = (0..100).collect();
        let mut rng = CounterRng::from_stream(5, &[stream::BATCH_SHUFFLE, 0]);
        shuffle(&mut v, &mut rng);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(v, (0..100).collect::<Vec<_>>());
    }
}
