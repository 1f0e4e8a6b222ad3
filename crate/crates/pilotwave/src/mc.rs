//! Deterministic, partition-parallel Monte Carlo plumbing.
//!
//! Work is split into fixed-size partitions; partition `p` draws from a
//! `ChaCha8` stream derived from `(seed, p)` alone. Partition results are
//! reduced in partition order, so the outcome is bit-identical for a fixed
//! seed no matter how many worker threads are used.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Samples per partition. Fixed so the partition count depends only on `n`.
pub const PARTITION: usize = 1 << 16;

/// RNG for one partition of a seeded run.
pub fn partition_rng(seed: u64, partition: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(partition.wrapping_add(1));
    rng
}

/// Runs `work(rng, count)` over every partition of `n` samples and reduces
/// the per-partition outputs in partition order.
pub fn run_partitioned<T, F>(seed: u64, n: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> T + Sync,
{
    let parts = n.div_ceil(PARTITION);
    let job = |p: usize| {
        let count = if p + 1 == parts && n % PARTITION != 0 {
            n % PARTITION
        } else {
            PARTITION
        };
        let mut rng = partition_rng(seed, p as u64);
        work(&mut rng, count)
    };

    #[cfg(feature = "parallel")]
    {
        (0..parts).into_par_iter().map(job).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..parts).map(job).collect()
    }
}

/// Maps `f` over items in parallel, preserving input order.
pub fn ordered_map<I, T, F>(items: Vec<I>, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Streaming mean/variance accumulator that merges deterministically.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    /// Merges in partition order; plain summation keeps results reproducible.
    pub fn merge(&mut self, other: &Accumulator) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        let n = self.n as f64;
        let var = (self.sum_sq - self.sum * self.sum / n) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    }
}
