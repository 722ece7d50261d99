//! Random train/validation/test partitions.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, streams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.1,
            val: 0.1,
            test: 0.8,
        }
    }
}

/// Disjoint node index sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMask {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Uniform random partition of `0..n`.
///
/// Train and validation sizes are `floor(ratio · n)`. When the ratios sum to
/// one the test set takes every remaining node; otherwise it is also floored.
pub fn make_split(n: usize, ratios: SplitRatios, seed: u64) -> Result<SplitMask> {
    let SplitRatios { train, val, test } = ratios;
    if [train, val, test].iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::invalid(format!(
            "split ratios must lie in [0, 1]: {ratios:?}"
        )));
    }
    let sum = train + val + test;
    if sum > 1.0 + 1e-12 {
        return Err(Error::invalid(format!("split ratios sum to {sum} > 1")));
    }
    let n_train = (train * n as f64).floor() as usize;
    let n_val = (val * n as f64).floor() as usize;
    let n_test = if (sum - 1.0).abs() <= 1e-12 {
        n - n_train - n_val
    } else {
        ((test * n as f64).floor() as usize).min(n - n_train - n_val)
    };

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeded(seed, streams::SPLIT));
    let take = |range: std::ops::Range<usize>| {
        let mut v = perm[range].to_vec();
        v.sort_unstable();
        v
    };
    Ok(SplitMask {
        train: take(0..n_train),
        val: take(n_train..n_train + n_val),
        test: take(n_train + n_val..n_train + n_val + n_test),
    })
}
