//! Deterministic random streams and mergeable Monte Carlo reductions.
//!
//! Every sample draws from its own ChaCha stream keyed by `(seed, lane, index)`, so
//! results do not depend on how work is split across threads. Partial statistics are
//! computed per fixed-size chunk and merged in chunk order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub type Rng = ChaCha8Rng;

/// Samples per reduction chunk. Fixed so chunk boundaries never depend on thread count.
pub const CHUNK: usize = 512;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A family of independent random streams derived from a user seed.
#[derive(Debug, Clone)]
pub struct StreamKey {
    base: Rng,
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        Self::with_lane(seed, 0)
    }

    /// Streams for a distinct consumer of the same seed (e.g. one rung of an epsilon ladder).
    pub fn with_lane(seed: u64, lane: u64) -> Self {
        let key = splitmix64(seed ^ splitmix64(lane.wrapping_add(0x5eed)));
        Self {
            base: Rng::seed_from_u64(key),
        }
    }

    pub fn lane(&self, lane: u64) -> Self {
        let mut probe = self.base.clone();
        probe.set_stream(u64::MAX);
        let seed = rand::RngCore::next_u64(&mut probe);
        Self::with_lane(seed, lane)
    }

    /// The generator for sample `index`.
    pub fn rng(&self, index: u64) -> Rng {
        let mut r = self.base.clone();
        r.set_stream(index);
        r
    }
}

/// Streaming mean and variance (Welford), mergeable with Chan's formula.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let nf = n as f64;
        self.mean += delta * other.n as f64 / nf;
        self.m2 += other.m2 + delta * delta * (self.n as f64) * (other.n as f64) / nf;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// Size the global rayon pool. Results do not depend on the thread count; only the first call
/// has an effect, and without the `parallel` feature this does nothing.
pub fn configure_threads(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}

/// Apply `f` to every index in `0..n`, preserving order. Runs on the rayon pool when the
/// `parallel` feature is enabled.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indices_seq(n, f)
    }
}

pub fn map_indices_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_indices_par<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

fn chunk_stats<F>(key: &StreamKey, n: usize, chunk: usize, f: &F) -> RunningStats
where
    F: Fn(&mut Rng, u64) -> f64,
{
    let lo = chunk * CHUNK;
    let hi = (lo + CHUNK).min(n);
    let mut s = RunningStats::new();
    for i in lo..hi {
        let mut rng = key.rng(i as u64);
        s.push(f(&mut rng, i as u64));
    }
    s
}

fn merge_in_order(parts: Vec<RunningStats>) -> RunningStats {
    let mut total = RunningStats::new();
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Monte Carlo mean of `f` over `n` samples, each with its own stream.
pub fn sample_stats<F>(key: &StreamKey, n: usize, f: F) -> RunningStats
where
    F: Fn(&mut Rng, u64) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    merge_in_order(map_indices(chunks, |c| chunk_stats(key, n, c, &f)))
}

/// Sequential reference for [`sample_stats`]; produces identical bits.
pub fn sample_stats_seq<F>(key: &StreamKey, n: usize, f: F) -> RunningStats
where
    F: Fn(&mut Rng, u64) -> f64,
{
    let chunks = n.div_ceil(CHUNK);
    merge_in_order(map_indices_seq(chunks, |c| chunk_stats(key, n, c, &f)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let whole: RunningStats = xs.iter().copied().collect();
        let mut a: RunningStats = xs[..313].iter().copied().collect();
        let b: RunningStats = xs[313..].iter().copied().collect();
        a.merge(&b);
        assert_eq!(a.count(), whole.count());
        assert!((a.mean() - whole.mean()).abs() < 1e-12);
        assert!((a.variance() - whole.variance()).abs() < 1e-10);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let key = StreamKey::new(7);
        let a: f64 = key.rng(3).random();
        let b: f64 = key.rng(3).random();
        let c: f64 = key.rng(4).random();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, c);
        let other: f64 = key.lane(1).rng(3).random();
        assert_ne!(a, other);
    }

    #[test]
    fn parallel_and_sequential_reductions_agree_bitwise() {
        let key = StreamKey::new(11);
        let f = |rng: &mut Rng, _i: u64| rng.random::<f64>();
        let a = sample_stats(&key, 5000, f);
        let b = sample_stats_seq(&key, 5000, f);
        assert_eq!(a, b);
    }
}
