//! Monte-Carlo bookkeeping: per-run seed derivation, parallel run execution
//! and the mean / standard-error report.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Mixes a master seed with a stream index (SplitMix64 finalizer applied
/// twice). Distinct indices give statistically unrelated seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(master ^ mix(index))
}

/// Result of a Monte-Carlo rate estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    /// Sample mean of the per-run values, in bits per symbol.
    pub mean: f64,
    /// Sample standard deviation divided by `sqrt(runs)`.
    pub stderr: f64,
    pub runs: usize,
    /// Per-run sequence length.
    pub length: usize,
    /// Seed used by each run, in run order.
    pub seeds: Vec<u64>,
}

impl EstimateReport {
    /// Aggregates per-run values. Needs at least two runs so the standard
    /// error is defined.
    pub fn from_runs(values: &[f64], length: usize, seeds: Vec<u64>) -> Result<Self> {
        let runs = values.len();
        if runs < 2 {
            return Err(Error::Parameter(format!(
                "at least 2 runs are needed for a standard error, got {runs}"
            )));
        }
        debug_assert_eq!(seeds.len(), runs);
        let mean = values.iter().sum::<f64>() / runs as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (runs - 1) as f64;
        Ok(Self {
            mean,
            stderr: (var / runs as f64).sqrt(),
            runs,
            length,
            seeds,
        })
    }

    /// Multiplies mean and standard error by a deterministic factor.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.mean *= factor;
        self.stderr *= factor.abs();
        self
    }

    /// A degenerate report that is exactly `value` on every run.
    pub fn constant(value: f64, runs: usize, length: usize, seeds: Vec<u64>) -> Self {
        Self {
            mean: value,
            stderr: 0.0,
            runs,
            length,
            seeds,
        }
    }
}

/// Root-sum-square of independent standard errors.
pub fn combined_stderr(stderrs: &[f64]) -> f64 {
    stderrs.iter().map(|s| s * s).sum::<f64>().sqrt()
}

/// Runs `f(run_seed)` for `runs` seeds derived from `master`, in parallel on
/// the current rayon pool. Results come back in run-index order, so the
/// reduction never depends on scheduling.
pub(crate) fn run_parallel<F>(runs: usize, master: u64, f: F) -> Result<(Vec<f64>, Vec<u64>)>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    let seeds: Vec<u64> = (0..runs as u64).map(|r| derive_seed(master, r)).collect();
    let values = seeds
        .par_iter()
        .map(|&s| f(s))
        .collect::<Result<Vec<f64>>>()?;
    Ok((values, seeds))
}
