//! Prompt chunking: pick a chunk size whose upload time covers the cloud's
//! per-stage waiting plus compute time for the previous chunk, then split
//! the prompt.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::monitor::{CloudStateEstimate, DelayPredictor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPlan {
    pub chunk_size: usize,
    pub boundaries: Vec<Range<usize>>,
}

impl ChunkPlan {
    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }
}

/// Inputs of the chunk-size inequality that do not depend on the delay model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkProblem {
    pub beta_up: f64,
    pub bytes_per_token: f64,
    pub pipeline_len: u32,
    pub prompt_len: u64,
    /// Current smoothed batched-token size of the cloud.
    pub mu: u64,
}

impl ChunkProblem {
    fn validate(&self) -> Result<()> {
        if !(self.beta_up > 0.0 && self.beta_up.is_finite()) {
            return Err(Error::arg("beta_up", "must be finite and > 0"));
        }
        if !(self.bytes_per_token > 0.0 && self.bytes_per_token.is_finite()) {
            return Err(Error::arg("bytes_per_token", "must be finite and > 0"));
        }
        if self.pipeline_len < 1 {
            return Err(Error::arg("pipeline_len", "must be >= 1"));
        }
        if self.prompt_len < 1 {
            return Err(Error::arg("prompt_len", "must be >= 1"));
        }
        Ok(())
    }

    /// Upload time of `x` tokens minus the pipelined waiting-plus-compute
    /// time under delay model `g`.
    pub fn slack(&self, x: u64, g: &impl Fn(u64) -> f64) -> f64 {
        let upload = x as f64 * self.bytes_per_token / self.beta_up;
        let cloud = (g(self.mu) + g(self.mu + x)) / self.pipeline_len as f64;
        upload - cloud
    }
}

/// Smallest `x` in `[1, prompt_len]` with nonnegative slack, located by
/// bisection; `prompt_len` when none qualifies.
pub fn solve_chunk_size_with(problem: &ChunkProblem, g: impl Fn(u64) -> f64) -> Result<u64> {
    problem.validate()?;
    let n = problem.prompt_len;
    if problem.slack(n, &g) < 0.0 {
        return Ok(n);
    }
    let (mut lo, mut hi) = (1u64, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if problem.slack(mid, &g) >= 0.0 {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

pub fn solve_chunk_size(
    pred: &DelayPredictor,
    estimate: &CloudStateEstimate,
    beta_up: f64,
    bytes_per_token: f64,
    pipeline_len: u32,
    prompt_len: u64,
) -> Result<u64> {
    let problem = ChunkProblem {
        beta_up,
        bytes_per_token,
        pipeline_len,
        prompt_len,
        mu: estimate.mu.round().max(0.0) as u64,
    };
    solve_chunk_size_with(&problem, |n| pred.query(n))
}

pub fn split_prompt(prompt_len: usize, chunk_size: usize) -> Result<ChunkPlan> {
    if prompt_len == 0 {
        return Err(Error::arg("prompt_len", "must be >= 1"));
    }
    if chunk_size == 0 {
        return Err(Error::arg("chunk_size", "must be >= 1"));
    }
    let boundaries = (0..prompt_len)
        .step_by(chunk_size)
        .map(|s| s..(s + chunk_size).min(prompt_len))
        .collect();
    Ok(ChunkPlan { chunk_size, boundaries })
}
