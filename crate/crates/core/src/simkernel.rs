//! Discrete-event simulation of devices, links and the cloud pipeline.
//!
//! Devices run their requests concurrently but share three serial
//! resources each: local compute (shallow layers, head, drafting), the
//! uplink and the downlink. Work on a resource starts when both the work is
//! ready and the resource is free, in the order it was requested.
//! Parallel drafting runs in the background and only uses compute time that
//! foreground work leaves idle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::chunking::{solve_chunk_size, split_prompt, ChunkPlan};
use crate::cloudsim::{Batch, BatchPolicy, PipelineState, WorkItem, WorkKind, WorkQueue};
use crate::error::{Error, Result};
use crate::eventlog::{EventLog, LogKind, LogRecord};
use crate::metrics::{apply_sla, RequestRecord, Summary};
use crate::model::TokenId;
use crate::monitor::{BinSnapshot, CloudStateEstimate, DelayPredictor, DeviceState};
use crate::scenario::{Framework, Scenario};
use crate::specdec::{
    extend_draft, generate_candidates, plan_parallel_draft, resolve_candidates, round_output, verify, DraftSequence,
    RoundStats,
};
use crate::time::{ns_to_secs, secs_to_ns, tx_delay, Nanos};
use crate::workload::{expand_devices, generate_requests, mode_for_request, DeviceParams, Models};

/// Generated tokens of one request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestOutput {
    pub id: u64,
    pub device: usize,
    pub prompt: Vec<TokenId>,
    pub tokens: Vec<TokenId>,
}

/// One speculative round as executed by the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundRecord {
    pub request: u64,
    pub stats: RoundStats,
    /// Planned parallel-draft steps.
    pub lambda: usize,
    /// Steps that fit in the idle time before the verification result returned.
    pub parallel_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchRecord {
    pub index: usize,
    pub items: Vec<WorkItem>,
    pub total_tokens: u64,
    pub entry_ns: Nanos,
    pub completion_ns: Nanos,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub framework: Framework,
    pub log: EventLog,
    /// Metrics from the kernel's own bookkeeping, SLA flags applied.
    pub records: Vec<RequestRecord>,
    pub outputs: Vec<RequestOutput>,
    pub rounds: Vec<RoundRecord>,
    pub batches: Vec<BatchRecord>,
    pub predictor: Vec<BinSnapshot>,
    pub summary: Summary,
}

pub fn run(scenario: &Scenario) -> Result<RunOutput> {
    scenario.validate()?;
    let models = Models::build(&scenario.model, scenario.seed)?;
    run_with_models(scenario, &models)
}

/// Runs against prebuilt models (they depend only on the model config and
/// seed, so sweeps over timing parameters can share them).
pub fn run_with_models(scenario: &Scenario, models: &Models) -> Result<RunOutput> {
    scenario.validate()?;
    scenario.specdec.validate(models.vocab.len())?;
    Kernel::new(scenario, models)?.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Local {
    Chunk(u32),
    Prompt,
    Token,
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Payload {
    Chunk(u32),
    Prompt,
    Verify,
    Decode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    Arrival(usize),
    LocalDone(usize, Local),
    UploadDone(usize, Payload),
    TryBatch,
    StageDone { batch: usize, stage: usize },
    DownloadDone(usize),
    DraftDone(usize),
    Token(usize, usize),
    Complete(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Scheduled {
    time: Nanos,
    seq: u64,
    ev: Ev,
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Prefill,
    Decode,
    Done,
}

struct Request {
    device: usize,
    arrival: Nanos,
    prompt: Vec<TokenId>,
    params: DeviceParams,
    chunk_size: u64,
    chunks: ChunkPlan,
    phase: Phase,
    output: Vec<TokenId>,
    emissions: Vec<Nanos>,
    last_emit: Nanos,
    draft: DraftSequence,
    predrafted: usize,
    carried: Option<DraftSequence>,
    lambda: usize,
    draft_done: Nanos,
    download_done: Nanos,
}

impl Request {
    fn context(&self) -> Vec<TokenId> {
        let mut c = Vec::with_capacity(self.prompt.len() + self.output.len());
        c.extend_from_slice(&self.prompt);
        c.extend_from_slice(&self.output);
        c
    }
}

struct Device {
    state: DeviceState,
    compute_free: Nanos,
    uplink_free: Nanos,
    downlink_free: Nanos,
    // foreground compute intervals; starts and ends are both non-decreasing
    busy: Vec<(Nanos, Nanos)>,
}

impl Device {
    fn reserve_compute(&mut self, now: Nanos, dur: Nanos) -> Nanos {
        let start = now.max(self.compute_free);
        let end = start + dur;
        self.compute_free = end;
        if dur > 0 {
            self.busy.push((start, end));
        }
        end
    }

    fn reserve_uplink(&mut self, now: Nanos, dur: Nanos) -> Nanos {
        let end = now.max(self.uplink_free) + dur;
        self.uplink_free = end;
        end
    }

    fn reserve_downlink(&mut self, now: Nanos, dur: Nanos) -> Nanos {
        let end = now.max(self.downlink_free) + dur;
        self.downlink_free = end;
        end
    }

    /// Compute time in `[a, b)` not taken by foreground work.
    fn idle_between(&self, a: Nanos, b: Nanos) -> Nanos {
        if b <= a {
            return 0;
        }
        let first = self.busy.partition_point(|&(_, end)| end <= a);
        let mut taken = 0;
        for &(s, e) in &self.busy[first..] {
            if s >= b {
                break;
            }
            taken += e.min(b) - s.max(a);
        }
        (b - a) - taken
    }
}

struct Kernel<'a> {
    s: &'a Scenario,
    m: &'a Models,
    heap: BinaryHeap<Scheduled>,
    next_seq: u64,
    log: EventLog,
    requests: Vec<Request>,
    devices: Vec<Device>,
    queue: WorkQueue,
    policy: BatchPolicy,
    pipe: PipelineState,
    try_pending: bool,
    batches: Vec<BatchRecord>,
    predictor: DelayPredictor,
    estimate: CloudStateEstimate,
    rounds: Vec<RoundRecord>,
    records: Vec<RequestRecord>,
}

impl<'a> Kernel<'a> {
    fn new(s: &'a Scenario, m: &'a Models) -> Result<Self> {
        let instances = expand_devices(s);
        let devices = instances
            .iter()
            .map(|d| {
                Ok(Device {
                    state: DeviceState::new(d.params.draft_step, d.params.uplink, d.params.downlink)?,
                    compute_free: 0,
                    uplink_free: 0,
                    downlink_free: 0,
                    busy: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let specs = generate_requests(s, m)?;
        let mut requests = Vec::with_capacity(specs.len());
        for spec in specs {
            let inst = &instances[spec.device];
            let mode = mode_for_request(&s.devices[inst.group], s.seed, spec.device, spec.device_seq);
            let prompt_len = spec.prompt.len();
            requests.push(Request {
                device: spec.device,
                arrival: secs_to_ns(spec.arrival),
                params: inst.params.with_mode(&mode),
                chunk_size: prompt_len as u64,
                chunks: split_prompt(prompt_len, prompt_len)?,
                phase: Phase::Prefill,
                output: Vec::new(),
                emissions: Vec::new(),
                last_emit: 0,
                draft: DraftSequence::empty(prompt_len),
                predrafted: 0,
                carried: None,
                lambda: 0,
                draft_done: 0,
                download_done: 0,
                prompt: spec.prompt,
            });
        }

        Ok(Self {
            s,
            m,
            heap: BinaryHeap::new(),
            next_seq: 0,
            log: EventLog::default(),
            requests,
            devices,
            queue: WorkQueue::new(),
            policy: BatchPolicy {
                max_batch_tokens: s.cloud.max_batch_tokens,
            },
            pipe: PipelineState::new(s.cloud.pipeline_len),
            try_pending: false,
            batches: Vec::new(),
            predictor: DelayPredictor::new(s.monitor.bin_width, s.monitor.alpha, s.monitor.default_delay)?,
            estimate: CloudStateEstimate::new(0.0, s.monitor.alpha)?,
            rounds: Vec::new(),
            records: Vec::new(),
        })
    }

    fn schedule(&mut self, time: Nanos, ev: Ev) {
        self.heap.push(Scheduled {
            time,
            seq: self.next_seq,
            ev,
        });
        self.next_seq += 1;
    }

    fn record(&mut self, at: &Scheduled, kind: LogKind, request: Option<usize>, detail: String) {
        self.log.push(LogRecord {
            time_ns: at.time,
            seq: at.seq,
            kind,
            request: request.map(|r| r as u64),
            detail,
        });
    }

    fn a(&self) -> f64 {
        self.s.cloud.bytes_per_token
    }

    fn tx_ns(&self, tokens: u64, bandwidth: f64) -> Result<Nanos> {
        Ok(secs_to_ns(tx_delay(tokens, self.a(), bandwidth)?))
    }

    fn run(mut self) -> Result<RunOutput> {
        for r in 0..self.requests.len() {
            let t = self.requests[r].arrival;
            self.schedule(t, Ev::Arrival(r));
        }
        while let Some(at) = self.heap.pop() {
            self.step(at)?;
        }
        if let Some(r) = self.requests.iter().position(|r| r.phase != Phase::Done) {
            return Err(Error::Simulation(format!("request {r} did not complete")));
        }

        apply_sla(&mut self.records, &self.s.slas);
        self.records.sort_by_key(|r| r.id);
        let accept: Vec<usize> = self.rounds.iter().map(|r| r.stats.accept_length()).collect();
        let summary = Summary::from_records(&self.records, &self.s.slas, &accept);
        let outputs = self
            .requests
            .iter()
            .enumerate()
            .map(|(i, r)| RequestOutput {
                id: i as u64,
                device: r.device,
                prompt: r.prompt.clone(),
                tokens: r.output.clone(),
            })
            .collect();
        Ok(RunOutput {
            framework: self.s.framework,
            log: self.log,
            records: self.records,
            outputs,
            rounds: self.rounds,
            batches: self.batches,
            predictor: self.predictor.snapshot(),
            summary,
        })
    }

    fn step(&mut self, at: Scheduled) -> Result<()> {
        let now = at.time;
        match at.ev {
            Ev::Arrival(r) => {
                let detail = format!(
                    "device={} prompt_len={}",
                    self.requests[r].device,
                    self.requests[r].prompt.len()
                );
                self.record(&at, LogKind::Arrival, Some(r), detail);
                self.start_prefill(r, now)?;
            }
            Ev::LocalDone(r, what) => {
                let detail = match what {
                    Local::Chunk(i) => format!("op=chunk index={i}"),
                    Local::Prompt => "op=prompt".to_string(),
                    Local::Token => "op=shallow".to_string(),
                    Local::Head => "op=head".to_string(),
                };
                self.record(&at, LogKind::LocalComputeDone, Some(r), detail);
                match what {
                    Local::Chunk(i) => {
                        let tokens = self.requests[r].chunks.boundaries[i as usize].len() as u64;
                        self.upload(r, now, tokens, Payload::Chunk(i))?;
                    }
                    Local::Prompt => {
                        let tokens = self.requests[r].prompt.len() as u64;
                        self.upload(r, now, tokens, Payload::Prompt)?;
                    }
                    Local::Token => self.upload(r, now, 1, Payload::Decode)?,
                    Local::Head => self.on_head(r, now)?,
                }
            }
            Ev::UploadDone(r, what) => {
                let detail = match what {
                    Payload::Chunk(i) => format!(
                        "payload=chunk index={i} tokens={}",
                        self.requests[r].chunks.boundaries[i as usize].len()
                    ),
                    Payload::Prompt => format!("payload=prompt tokens={}", self.requests[r].prompt.len()),
                    Payload::Verify => format!("payload=verify tokens={}", self.requests[r].draft.len()),
                    Payload::Decode => "payload=decode tokens=1".to_string(),
                };
                self.record(&at, LogKind::UploadDone, Some(r), detail);
                self.on_upload(r, now, what);
            }
            Ev::TryBatch => {
                self.try_pending = false;
                self.try_batch(&at);
            }
            Ev::StageDone { batch, stage } => {
                self.record(&at, LogKind::StageDone, None, format!("batch={batch} stage={stage}"));
                if stage == 0 && !self.queue.is_empty() && !self.try_pending {
                    self.try_pending = true;
                    self.schedule(now, Ev::TryBatch);
                }
                if stage + 1 == self.s.cloud.pipeline_len as usize {
                    self.on_batch_complete(batch, now)?;
                }
            }
            Ev::DownloadDone(r) => {
                let tokens = match self.requests[r].phase {
                    Phase::Decode if self.s.framework.speculative() => self.requests[r].draft.len(),
                    _ => 1,
                };
                self.record(&at, LogKind::DownloadDone, Some(r), format!("tokens={tokens}"));
                self.requests[r].download_done = now;
                let head = secs_to_ns(self.requests[r].params.head_delay);
                let done = self.devices[self.requests[r].device].reserve_compute(now, head);
                self.schedule(done, Ev::LocalDone(r, Local::Head));
            }
            Ev::DraftDone(r) => {
                let req = &self.requests[r];
                let steps = req.draft.len() - req.predrafted;
                let lambda = if self.s.framework.parallel_drafting() {
                    plan_parallel_draft(
                        &self.devices[req.device].state,
                        &self.predictor,
                        &self.estimate,
                        req.draft.len(),
                        self.a(),
                    )
                } else {
                    0
                };
                let detail = format!(
                    "steps={steps} draft_len={} predrafted={} lambda={lambda}",
                    req.draft.len(),
                    req.predrafted
                );
                self.record(&at, LogKind::DraftStepDone, Some(r), detail);
                let req = &mut self.requests[r];
                req.lambda = lambda;
                req.draft_done = now;
                let n = req.draft.len() as u64;
                self.upload(r, now, n, Payload::Verify)?;
            }
            Ev::Token(r, index) => {
                let req = &mut self.requests[r];
                req.emissions.push(now);
                let detail = format!("index={index} token={}", req.output[index]);
                self.record(&at, LogKind::Token, Some(r), detail);
            }
            Ev::Complete(r) => {
                let req = &self.requests[r];
                let detail = format!("output_len={} chunk_size={}", req.output.len(), req.chunk_size);
                let rec = RequestRecord {
                    id: r as u64,
                    device: req.device as u64,
                    prompt_len: req.prompt.len() as u64,
                    chunk_size: req.chunk_size,
                    arrival_ns: req.arrival,
                    ttft_ns: req.emissions[0] - req.arrival,
                    tbt_ns: req.emissions.windows(2).map(|w| w[1] - w[0]).collect(),
                    output_len: req.output.len() as u64,
                    prefill_compliant: false,
                    decode_compliant: false,
                };
                self.record(&at, LogKind::RequestComplete, Some(r), detail);
                self.records.push(rec);
            }
        }
        Ok(())
    }

    fn start_prefill(&mut self, r: usize, now: Nanos) -> Result<()> {
        let prompt_len = self.requests[r].prompt.len() as u64;
        let dev = self.requests[r].device;
        let chunk_size = match self.s.framework {
            Framework::Hat | Framework::HatNoPd => solve_chunk_size(
                &self.predictor,
                &self.estimate,
                self.devices[dev].state.beta_up,
                self.a(),
                self.s.cloud.pipeline_len,
                prompt_len,
            )?,
            Framework::Ushape => prompt_len,
            Framework::FixedChunk => self.s.fixed_chunk_size.min(prompt_len),
        };
        let req = &mut self.requests[r];
        req.chunk_size = chunk_size;
        req.chunks = split_prompt(prompt_len as usize, chunk_size as usize)?;
        let per_token = req.params.shallow_per_token;

        if self.s.framework == Framework::FixedChunk {
            let done = self.devices[dev].reserve_compute(now, secs_to_ns(per_token * prompt_len as f64));
            self.schedule(done, Ev::LocalDone(r, Local::Prompt));
        } else {
            // chunks are computed back to back; each upload starts when its
            // chunk is ready
            let sizes: Vec<usize> = req.chunks.boundaries.iter().map(|b| b.len()).collect();
            for (i, len) in sizes.into_iter().enumerate() {
                let done = self.devices[dev].reserve_compute(now, secs_to_ns(per_token * len as f64));
                self.schedule(done, Ev::LocalDone(r, Local::Chunk(i as u32)));
            }
        }
        Ok(())
    }

    fn upload(&mut self, r: usize, now: Nanos, tokens: u64, what: Payload) -> Result<()> {
        let dur = self.tx_ns(tokens, self.requests[r].params.uplink)?;
        let done = self.devices[self.requests[r].device].reserve_uplink(now, dur);
        self.schedule(done, Ev::UploadDone(r, what));
        Ok(())
    }

    fn on_upload(&mut self, r: usize, now: Nanos, what: Payload) {
        let request = r as u64;
        match what {
            Payload::Chunk(i) => {
                let n = self.requests[r].chunks.len();
                let tokens = self.requests[r].chunks.boundaries[i as usize].len() as u64;
                self.queue.push(WorkItem {
                    request,
                    kind: WorkKind::PrefillChunk {
                        index: i,
                        last: i as usize + 1 == n,
                    },
                    tokens,
                    ready_at: now,
                });
            }
            Payload::Prompt => {
                let sizes: Vec<u64> = self.requests[r]
                    .chunks
                    .boundaries
                    .iter()
                    .map(|b| b.len() as u64)
                    .collect();
                let n = sizes.len();
                for (i, tokens) in sizes.into_iter().enumerate() {
                    self.queue.push(WorkItem {
                        request,
                        kind: WorkKind::PrefillChunk {
                            index: i as u32,
                            last: i + 1 == n,
                        },
                        tokens,
                        ready_at: now,
                    });
                }
            }
            Payload::Verify => self.queue.push(WorkItem {
                request,
                kind: WorkKind::Verify,
                tokens: self.requests[r].draft.len() as u64,
                ready_at: now,
            }),
            Payload::Decode => self.queue.push(WorkItem {
                request,
                kind: WorkKind::Decode,
                tokens: 1,
                ready_at: now,
            }),
        }
        if !self.try_pending {
            self.try_pending = true;
            let t = now.max(self.pipe.entry_free_at());
            self.schedule(t, Ev::TryBatch);
        }
    }

    fn try_batch(&mut self, at: &Scheduled) {
        let now = at.time;
        if now < self.pipe.entry_free_at() {
            self.try_pending = true;
            let t = self.pipe.entry_free_at();
            self.schedule(t, Ev::TryBatch);
            return;
        }
        let Some(Batch { items, total_tokens }) = self.queue.form_batch(now, &self.policy) else {
            return;
        };
        let index = self.batches.len();
        let pass = self.pipe.advance(total_tokens, &self.s.cloud, now);
        let detail = format!("batch={index} tokens={total_tokens} items={}", items.len());
        self.record(at, LogKind::BatchFormed, None, detail);
        for (stage, &t) in pass.stage_exit.iter().enumerate() {
            self.schedule(t, Ev::StageDone { batch: index, stage });
        }
        self.batches.push(BatchRecord {
            index,
            items,
            total_tokens,
            entry_ns: pass.entry,
            completion_ns: pass.completion(),
        });
    }

    fn on_batch_complete(&mut self, batch: usize, now: Nanos) -> Result<()> {
        let total = self.batches[batch].total_tokens;
        let compute = ns_to_secs(self.s.cloud.true_delay_ns(total));
        self.predictor.observe(total, compute)?;
        self.estimate.observe(total, compute)?;

        let items = self.batches[batch].items.clone();
        for item in items {
            let r = item.request as usize;
            let tokens = match item.kind {
                WorkKind::PrefillChunk { last: false, .. } => continue,
                WorkKind::PrefillChunk { last: true, .. } => {
                    self.queue.finish_request(item.request);
                    1
                }
                WorkKind::Verify => item.tokens,
                WorkKind::Decode => 1,
            };
            let dur = self.tx_ns(tokens, self.requests[r].params.downlink)?;
            let done = self.devices[self.requests[r].device].reserve_downlink(now, dur);
            self.schedule(done, Ev::DownloadDone(r));
        }
        Ok(())
    }

    fn on_head(&mut self, r: usize, now: Nanos) -> Result<()> {
        let dev = self.requests[r].device;
        let p = self.requests[r].params;
        self.devices[dev].state =
            self.devices[dev]
                .state
                .observe(p.draft_step, p.uplink, p.downlink, self.s.monitor.alpha)?;

        let ctx = self.requests[r].context();
        let remaining = self.s.workload.max_new - self.requests[r].output.len();
        let eos = self.m.target.eos_id();
        let emitted = match self.requests[r].phase {
            Phase::Prefill => {
                self.requests[r].phase = Phase::Decode;
                vec![self.m.target.greedy_next(&ctx).0]
            }
            Phase::Decode if self.s.framework.speculative() => self.finish_round(r, &ctx, remaining)?,
            Phase::Decode => vec![self.m.target.greedy_next(&ctx).0],
            Phase::Done => return Err(Error::Simulation(format!("request {r} is already done"))),
        };

        let req = &mut self.requests[r];
        let mut t = now;
        let first = req.output.len();
        for (j, &tok) in emitted.iter().enumerate() {
            t = t.max(req.last_emit + 1);
            req.last_emit = t;
            req.output.push(tok);
            self.heap.push(Scheduled {
                time: t,
                seq: self.next_seq,
                ev: Ev::Token(r, first + j),
            });
            self.next_seq += 1;
        }
        let req = &self.requests[r];
        let finished = req.output.len() >= self.s.workload.max_new || req.output.last() == Some(&eos);
        if finished {
            self.requests[r].phase = Phase::Done;
            self.schedule(t, Ev::Complete(r));
        } else if self.s.framework.speculative() {
            self.start_round(r, now);
        } else {
            let dur = secs_to_ns(p.shallow_per_token);
            let done = self.devices[dev].reserve_compute(now, dur);
            self.schedule(done, Ev::LocalDone(r, Local::Token));
        }
        Ok(())
    }

    fn finish_round(&mut self, r: usize, ctx: &[TokenId], remaining: usize) -> Result<Vec<TokenId>> {
        let eos = self.m.target.eos_id();
        let req = &self.requests[r];
        let d = &req.draft;
        let result = verify(&self.m.target, ctx, &d.tokens);
        let emitted = round_output(&d.tokens, &result, eos, remaining);

        let mut parallel_steps = 0;
        let mut carried = None;
        if req.lambda > 0 {
            let gamma = secs_to_ns(req.params.draft_step).max(1);
            let idle = self.devices[req.device].idle_between(req.draft_done, req.download_done);
            parallel_steps = req.lambda.min((idle / gamma) as usize);
            let plan = generate_candidates(&self.m.draft, ctx, d, &self.s.specdec, parallel_steps);
            if plan.applies_to(&result, d.len()) {
                carried = resolve_candidates(&plan, result.correction).cloned();
            }
        }
        self.rounds.push(RoundRecord {
            request: r as u64,
            stats: RoundStats {
                draft_len: d.len(),
                accepted_count: result.accepted_count,
                emitted: emitted.len(),
                predrafted: req.predrafted,
            },
            lambda: req.lambda,
            parallel_steps,
        });
        self.requests[r].carried = carried;
        Ok(emitted)
    }

    fn start_round(&mut self, r: usize, now: Nanos) {
        let ctx = self.requests[r].context();
        let req = &mut self.requests[r];
        let mut d = req.carried.take().unwrap_or_else(|| DraftSequence::empty(ctx.len()));
        d.context_len = ctx.len();
        let predrafted = d.len();
        extend_draft(&self.m.draft, &ctx, &mut d, &self.s.specdec, self.s.specdec.max_draft);
        let steps = d.len() - predrafted;
        req.draft = d;
        req.predrafted = predrafted;
        let dur = secs_to_ns(req.params.draft_step * steps as f64);
        let done = self.devices[req.device].reserve_compute(now, dur);
        self.schedule(done, Ev::DraftDone(r));
    }
}
