//! Cloud side of the split model: the ground-truth batch delay, continuous
//! batch formation, and the `P`-stage pipeline.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{secs_to_ns, Nanos};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CloudProfile {
    /// Pipeline length (number of sequential stages / GPUs).
    pub pipeline_len: u32,
    /// Delay of any batch up to `n_sat` tokens, seconds.
    pub base_delay: f64,
    pub n_sat: u64,
    /// Seconds per token beyond `n_sat`.
    pub slope: f64,
    /// Hidden-state size per token on the wire, bytes.
    pub bytes_per_token: f64,
    /// Optional cap on the batched token size.
    pub max_batch_tokens: Option<u64>,
}

impl Default for CloudProfile {
    fn default() -> Self {
        Self {
            pipeline_len: 4,
            base_delay: 0.025,
            n_sat: 64,
            slope: 0.1285e-3,
            bytes_per_token: 8192.0,
            max_batch_tokens: None,
        }
    }
}

impl CloudProfile {
    pub fn validate(&self) -> Result<()> {
        if self.pipeline_len < 1 {
            return Err(Error::scenario("cloud.pipeline_len", "must be >= 1"));
        }
        if !(self.base_delay > 0.0 && self.base_delay.is_finite()) {
            return Err(Error::scenario("cloud.base_delay", "must be finite and > 0"));
        }
        if self.n_sat < 1 {
            return Err(Error::scenario("cloud.n_sat", "must be >= 1"));
        }
        if !(self.slope >= 0.0 && self.slope.is_finite()) {
            return Err(Error::scenario("cloud.slope", "must be finite and >= 0"));
        }
        if !(self.bytes_per_token > 0.0 && self.bytes_per_token.is_finite()) {
            return Err(Error::scenario("cloud.bytes_per_token", "must be finite and > 0"));
        }
        if self.max_batch_tokens == Some(0) {
            return Err(Error::scenario("cloud.max_batch_tokens", "must be >= 1"));
        }
        Ok(())
    }

    /// Flat up to `n_sat` tokens, linear beyond.
    pub fn true_delay(&self, n_tokens: u64) -> f64 {
        self.base_delay + self.slope * n_tokens.saturating_sub(self.n_sat) as f64
    }

    /// Per-stage service time in integer nanoseconds.
    pub fn stage_ns(&self, n_tokens: u64) -> Nanos {
        secs_to_ns(self.true_delay(n_tokens) / self.pipeline_len as f64)
    }

    /// Residence time of a batch in an idle pipeline; a multiple of `P` ns.
    pub fn true_delay_ns(&self, n_tokens: u64) -> Nanos {
        self.stage_ns(n_tokens) * self.pipeline_len as Nanos
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WorkKind {
    PrefillChunk { index: u32, last: bool },
    Verify,
    Decode,
}

impl WorkKind {
    pub fn label(&self) -> &'static str {
        match self {
            WorkKind::PrefillChunk { .. } => "prefill",
            WorkKind::Verify => "verify",
            WorkKind::Decode => "decode",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkItem {
    pub request: u64,
    pub kind: WorkKind,
    pub tokens: u64,
    /// Time the payload finished arriving in the cloud.
    pub ready_at: Nanos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub items: Vec<WorkItem>,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPolicy {
    pub max_batch_tokens: Option<u64>,
}

/// Arrived work waiting for a batch slot.
#[derive(Debug, Clone, Default)]
pub struct WorkQueue {
    // keyed by (ready_at, insertion seq) for FCFS
    pending: BTreeMap<(Nanos, u64), WorkItem>,
    next_seq: u64,
    // next chunk index each prefilling request may submit
    next_chunk: HashMap<u64, u32>,
}

impl WorkQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, item: WorkItem) {
        self.pending.insert((item.ready_at, self.next_seq), item);
        self.next_seq += 1;
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Forgets per-request chunk ordering state.
    pub fn finish_request(&mut self, request: u64) {
        self.next_chunk.remove(&request);
    }

    /// Collects every ready verify/decode item plus the next in-order prefill
    /// chunk of each prefilling request, oldest first. Items arriving after
    /// `now` are left alone.
    pub fn form_batch(&mut self, now: Nanos, policy: &BatchPolicy) -> Option<Batch> {
        let mut taken = Vec::new();
        let mut chunk_taken: HashMap<u64, u32> = HashMap::new();
        let mut total = 0u64;
        for (&key, item) in self.pending.range(..(now + 1, 0)) {
            if let WorkKind::PrefillChunk { index, .. } = item.kind {
                let expected = self.next_chunk.get(&item.request).copied().unwrap_or(0);
                if index != expected || chunk_taken.contains_key(&item.request) {
                    continue;
                }
            }
            if let Some(cap) = policy.max_batch_tokens {
                if !taken.is_empty() && total + item.tokens > cap {
                    continue;
                }
            }
            if let WorkKind::PrefillChunk { index, .. } = item.kind {
                chunk_taken.insert(item.request, index);
            }
            total += item.tokens;
            taken.push(key);
        }
        if taken.is_empty() {
            return None;
        }
        for (req, index) in chunk_taken {
            self.next_chunk.insert(req, index + 1);
        }
        let items = taken
            .into_iter()
            .map(|k| self.pending.remove(&k).expect("key taken from map"))
            .collect();
        Some(Batch {
            items,
            total_tokens: total,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineState {
    pub stage_free_at: Vec<Nanos>,
}

/// Stage-by-stage timing of one batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelinePass {
    pub entry: Nanos,
    pub stage_exit: Vec<Nanos>,
}

impl PipelinePass {
    pub fn completion(&self) -> Nanos {
        *self.stage_exit.last().expect("at least one stage")
    }
}

impl PipelineState {
    pub fn new(stages: u32) -> Self {
        Self {
            stage_free_at: vec![0; stages.max(1) as usize],
        }
    }

    /// Time stage 1 can accept the next batch.
    pub fn entry_free_at(&self) -> Nanos {
        self.stage_free_at[0]
    }

    /// Pushes a batch of `total_tokens` through every stage in order.
    pub fn advance(&mut self, total_tokens: u64, profile: &CloudProfile, now: Nanos) -> PipelinePass {
        let service = profile.stage_ns(total_tokens);
        let entry = now.max(self.stage_free_at[0]);
        let mut t = entry;
        let mut stage_exit = Vec::with_capacity(self.stage_free_at.len());
        for free_at in self.stage_free_at.iter_mut() {
            let start = t.max(*free_at);
            t = start + service;
            *free_at = t;
            stage_exit.push(t);
        }
        PipelinePass { entry, stage_exit }
    }
}

/// Outcome of [`simulate_cloud_steps`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepRunSummary {
    /// Sum of batch compute delays over all steps.
    pub total_compute_ns: Nanos,
    /// Completion time of the batch holding the final prompt chunk.
    pub prefill_done_ns: Nanos,
    pub steps: usize,
}

/// Cloud-only run of `steps` consecutive batches: one prompt of `prompt_len`
/// tokens (chunked at `chunk_size`, or whole when `None`) shares the cloud
/// with `decode_requests` single-token decoders. Each step starts when the
/// previous one completes; the prompt's request joins decoding once
/// prefilled.
pub fn simulate_cloud_steps(
    profile: &CloudProfile,
    prompt_len: u64,
    chunk_size: Option<u64>,
    decode_requests: u64,
    steps: usize,
) -> Result<StepRunSummary> {
    profile.validate()?;
    if prompt_len == 0 {
        return Err(Error::arg("prompt_len", "must be >= 1"));
    }
    let chunk = chunk_size.unwrap_or(prompt_len).clamp(1, prompt_len);
    let n_chunks = prompt_len.div_ceil(chunk);
    let policy = BatchPolicy {
        max_batch_tokens: profile.max_batch_tokens,
    };
    let mut queue = WorkQueue::new();
    let mut pipe = PipelineState::new(profile.pipeline_len);
    for i in 0..n_chunks {
        let start = i * chunk;
        queue.push(WorkItem {
            request: 0,
            kind: WorkKind::PrefillChunk {
                index: i as u32,
                last: i + 1 == n_chunks,
            },
            tokens: chunk.min(prompt_len - start),
            ready_at: 0,
        });
    }

    let mut now = 0;
    let mut total = 0;
    let mut prefill_done = None;
    for _ in 0..steps {
        for r in 1..=decode_requests {
            queue.push(WorkItem {
                request: r,
                kind: WorkKind::Decode,
                tokens: 1,
                ready_at: now,
            });
        }
        if prefill_done.is_some() {
            queue.push(WorkItem {
                request: 0,
                kind: WorkKind::Decode,
                tokens: 1,
                ready_at: now,
            });
        }
        let batch = queue
            .form_batch(now, &policy)
            .ok_or_else(|| Error::Simulation("no work for step".into()))?;
        let pass = pipe.advance(batch.total_tokens, profile, now);
        total += profile.true_delay_ns(batch.total_tokens);
        now = pass.completion();
        if batch
            .items
            .iter()
            .any(|it| matches!(it.kind, WorkKind::PrefillChunk { last: true, .. }))
        {
            prefill_done = Some(now);
        }
    }
    Ok(StepRunSummary {
        total_compute_ns: total,
        prefill_done_ns: prefill_done
            .ok_or_else(|| Error::Simulation("prompt did not finish within the step budget".into()))?,
        steps,
    })
}
