//! Worker fan-out, generator streams and sample statistics.
//!
//! Monte Carlo work is split into `workers` contiguous chunks. Chunk `k` draws
//! from its own ChaCha stream derived from `(seed, stream tag, k)`, and chunk
//! results are merged in chunk order, so the output depends only on the seed
//! and the worker count, never on thread scheduling. With the `parallel`
//! feature disabled the same chunks run sequentially and produce identical
//! numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type SampleRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exec {
    pub workers: usize,
    /// Run chunks on the rayon pool. Ignored without the `parallel` feature.
    pub parallel: bool,
}

impl Default for Exec {
    fn default() -> Self {
        Exec::parallel(default_workers())
    }
}

impl Exec {
    pub fn sequential(workers: usize) -> Self {
        Exec { workers: workers.max(1), parallel: false }
    }

    pub fn parallel(workers: usize) -> Self {
        Exec { workers: workers.max(1), parallel: true }
    }

    /// Evaluate `f(k)` for every chunk index, returning results in index order.
    pub fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            if self.parallel && count > 1 {
                use rayon::prelude::*;
                return (0..count).into_par_iter().map(f).collect();
            }
        }
        (0..count).map(f).collect()
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Stream tags keep the generators of different estimators disjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamId {
    pub tag: u16,
    pub level: u16,
}

impl StreamId {
    pub const fn new(tag: u16, level: u16) -> Self {
        StreamId { tag, level }
    }
}

pub fn stream_rng(seed: u64, stream: StreamId, worker: usize) -> SampleRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream.tag as u64) << 48) | ((stream.level as u64) << 32) | (worker as u64 & 0xffff_ffff));
    rng
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        s
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Mean, standard error and magnitude bound of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
    pub max_abs: f64,
}

impl SampleStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::ZeroSamples);
        }
        let n = values.len();
        // shift by the first value so constant samples give exact means
        let shift = values[0];
        let centered: Vec<f64> = values.iter().map(|x| x - shift).collect();
        let mean = shift + pairwise_sum(&centered) / n as f64;
        let sq: Vec<f64> = values.iter().map(|x| (x - mean).powi(2)).collect();
        let stderr = if n > 1 {
            (pairwise_sum(&sq) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        let max_abs = values.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        Ok(SampleStats { mean, stderr, count: n, max_abs })
    }
}

/// Raw output of a Monte Carlo run.
#[derive(Clone, Debug, PartialEq)]
pub struct McOutcome {
    pub values: Vec<f64>,
    pub rejected: usize,
}

impl McOutcome {
    pub fn stats(&self) -> Result<SampleStats> {
        SampleStats::from_values(&self.values)
    }

    pub fn rejection_fraction(&self) -> f64 {
        let total = self.values.len() + self.rejected;
        if total == 0 {
            0.0
        } else {
            self.rejected as f64 / total as f64
        }
    }
}

/// Split `samples` draws across the workers of `exec`.
///
/// `draw` returns `Ok(Some(v))` for an accepted sample, `Ok(None)` for a
/// rejected one (counted, not retried) and `Err` to abort the run.
pub fn monte_carlo<F>(samples: usize, seed: u64, stream: StreamId, exec: &Exec, draw: F) -> Result<McOutcome>
where
    F: Fn(&mut SampleRng) -> Result<Option<f64>> + Sync + Send,
{
    if samples == 0 {
        return Err(Error::ZeroSamples);
    }
    let workers = exec.workers.clamp(1, samples);
    let base = samples / workers;
    let extra = samples % workers;
    let chunks = exec.map(workers, |k| -> Result<(Vec<f64>, usize)> {
        let count = base + usize::from(k < extra);
        let mut rng = stream_rng(seed, stream, k);
        let mut values = Vec::with_capacity(count);
        let mut rejected = 0;
        for _ in 0..count {
            match draw(&mut rng)? {
                Some(v) => values.push(v),
                None => rejected += 1,
            }
        }
        Ok((values, rejected))
    });
    let mut out = McOutcome { values: Vec::with_capacity(samples), rejected: 0 };
    for chunk in chunks {
        let (values, rejected) = chunk?;
        out.values.extend(values);
        out.rejected += rejected;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn constant_sample_has_exact_mean_and_zero_stderr() {
        let s = SampleStats::from_values(&vec![0.1; 1001]).unwrap();
        assert_eq!(s.mean, 0.1);
        assert_eq!(s.stderr, 0.0);
    }

    #[test]
    fn empty_sample_is_error() {
        assert!(matches!(SampleStats::from_values(&[]), Err(Error::ZeroSamples)));
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let draw = |rng: &mut SampleRng| Ok(Some(rng.random::<f64>()));
        let a = monte_carlo(10_007, 5, StreamId::new(1, 0), &Exec::sequential(7), draw).unwrap();
        let b = monte_carlo(10_007, 5, StreamId::new(1, 0), &Exec::parallel(7), draw).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo(10_007, 6, StreamId::new(1, 0), &Exec::parallel(7), draw).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn streams_are_distinct() {
        let mut a = stream_rng(1, StreamId::new(1, 0), 0);
        let mut b = stream_rng(1, StreamId::new(1, 1), 0);
        let mut c = stream_rng(1, StreamId::new(1, 0), 1);
        let (x, y, z): (u64, u64, u64) = (a.random(), b.random(), c.random());
        assert!(x != y && x != z && y != z);
    }

    #[test]
    fn rejections_are_counted() {
        let draw = |rng: &mut SampleRng| Ok((rng.random::<f64>() < 0.5).then_some(1.0));
        let out = monte_carlo(1000, 1, StreamId::new(2, 0), &Exec::sequential(3), draw).unwrap();
        assert_eq!(out.values.len() + out.rejected, 1000);
        assert!(out.rejected > 400 && out.rejected < 600);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }
}
