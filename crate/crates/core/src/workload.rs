//! Seeded workload generation: toy models, arrival processes, prompts and
//! per-device parameters.
//!
//! Every random stream is seeded by [`derive_seed`] from the scenario's root
//! seed, a subsystem label and an index (usually the device index), so adding
//! a device or changing a timing parameter never perturbs another stream.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{NGramModel, TokenId, Vocabulary};
use crate::scenario::{DeviceGroup, DeviceMode, ModeOrder, ModelConfig, Param, PromptLengths, Scenario};

/// First eight bytes (little endian) of
/// `SHA-256(root_le || label || index_le)`.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn rng_for(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label, index))
}

/// Poisson arrival times (seconds) with the given rate, up to `horizon`.
pub fn gen_arrivals(rate: f64, horizon: f64, seed: u64) -> Vec<f64> {
    if rate <= 0.0 || horizon <= 0.0 {
        return Vec::new();
    }
    let exp = Exp::new(rate).expect("rate is positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0;
    let mut out = Vec::new();
    loop {
        t += exp.sample(&mut rng);
        if t > horizon {
            break;
        }
        out.push(t);
    }
    out
}

/// Target and draft models plus the corpus prompts are cut from.
#[derive(Debug, Clone)]
pub struct Models {
    pub vocab: Vocabulary,
    pub corpus: Vec<TokenId>,
    pub target: NGramModel,
    pub draft: NGramModel,
}

impl Models {
    pub fn build(cfg: &ModelConfig, root_seed: u64) -> Result<Self> {
        let (vocab, corpus) = match &cfg.text {
            Some(text) => {
                let vocab = Vocabulary::from_text(text, "<eos>")?;
                let corpus = vocab.encode(text)?;
                (vocab, corpus)
            }
            None => {
                let vocab = Vocabulary::synthetic(cfg.vocab_size)?;
                let corpus = synthetic_corpus(cfg, &mut rng_for(root_seed, "corpus", 0));
                (vocab, corpus)
            }
        };
        let target = NGramModel::build(&vocab, &corpus, cfg.target_order, cfg.smoothing)?;
        let draft = NGramModel::build(&vocab, &corpus, cfg.draft_order, cfg.smoothing)?;
        Ok(Self {
            vocab,
            corpus,
            target,
            draft,
        })
    }

    /// `len` consecutive corpus tokens starting at `offset`, wrapping around.
    pub fn prompt(&self, offset: usize, len: usize) -> Vec<TokenId> {
        let n = self.corpus.len();
        (0..len).map(|i| self.corpus[(offset + i) % n]).collect()
    }
}

fn synthetic_corpus(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Vec<TokenId> {
    let v = cfg.vocab_size;
    let eos = (v - 1) as TokenId;
    let plain = v - 1;
    // preferred successors form one cycle through every plain token, so
    // greedy trajectories visit the whole vocabulary instead of a short loop
    let mut order: Vec<TokenId> = (0..plain as TokenId).collect();
    order.shuffle(rng);
    let mut successor = vec![0 as TokenId; v];
    for (i, &t) in order.iter().enumerate() {
        successor[t as usize] = order[(i + 1) % plain];
    }
    successor[eos as usize] = order[0];
    let strength: Vec<f64> = (0..v)
        .map(|_| rng.random_range(cfg.strength_min..=cfg.strength_max))
        .collect();
    // None: the pair follows its last token's preferred successor
    let pair_successor: Vec<Option<TokenId>> = (0..v * v)
        .map(|_| {
            let over = rng.random_bool(cfg.override_rate);
            let tok = rng.random_range(0..plain) as TokenId;
            over.then_some(tok)
        })
        .collect();

    let mut corpus = Vec::with_capacity(cfg.corpus_len);
    let mut prev2 = rng.random_range(0..plain) as TokenId;
    let mut prev1 = rng.random_range(0..plain) as TokenId;
    for _ in 0..cfg.corpus_len {
        let u: f64 = rng.random();
        let s = strength[prev1 as usize];
        let next = if u < cfg.eos_weight {
            eos
        } else if u < cfg.eos_weight + s {
            pair_successor[prev2 as usize * v + prev1 as usize].unwrap_or(successor[prev1 as usize])
        } else {
            rng.random_range(0..plain) as TokenId
        };
        corpus.push(next);
        prev2 = prev1;
        prev1 = next;
    }
    corpus
}

pub fn sample_prompt_len(dist: &PromptLengths, min: u64, max: u64, rng: &mut ChaCha8Rng) -> u64 {
    let raw = match dist {
        PromptLengths::Fixed { value } => *value,
        PromptLengths::Uniform { min, max } => rng.random_range(*min..=*max),
        PromptLengths::Gamma { mean, shape } => {
            let g = Gamma::new(*shape, mean / shape).expect("validated gamma parameters");
            g.sample(rng).round() as u64
        }
        PromptLengths::Choice { values } => values[rng.random_range(0..values.len())],
    };
    raw.clamp(min, max)
}

/// Nominal capabilities of one device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams {
    pub shallow_per_token: f64,
    pub head_delay: f64,
    pub draft_step: f64,
    pub uplink: f64,
    pub downlink: f64,
}

impl DeviceParams {
    pub fn with_mode(&self, mode: &DeviceMode) -> Self {
        Self {
            shallow_per_token: self.shallow_per_token * mode.compute_scale,
            head_delay: self.head_delay * mode.compute_scale,
            draft_step: self.draft_step * mode.compute_scale,
            uplink: self.uplink * mode.bandwidth_scale,
            downlink: self.downlink * mode.bandwidth_scale,
        }
    }
}

fn draw(p: &Param, rng: &mut ChaCha8Rng) -> f64 {
    match *p {
        Param::Fixed(v) => v,
        Param::Uniform { min, max } if min < max => rng.random_range(min..max),
        Param::Uniform { min, .. } => min,
    }
}

/// One expanded device of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceInstance {
    pub index: usize,
    pub group: usize,
    pub params: DeviceParams,
}

pub fn expand_devices(s: &Scenario) -> Vec<DeviceInstance> {
    let mut out = Vec::with_capacity(s.device_count());
    for (gi, g) in s.devices.iter().enumerate() {
        for _ in 0..g.count {
            let index = out.len();
            let mut rng = rng_for(s.seed, "device", index as u64);
            let params = DeviceParams {
                shallow_per_token: draw(&g.shallow_per_token, &mut rng),
                head_delay: draw(&g.head_delay, &mut rng),
                draft_step: draw(&g.draft_step, &mut rng),
                uplink: draw(&g.uplink, &mut rng),
                downlink: draw(&g.downlink, &mut rng),
            };
            out.push(DeviceInstance {
                index,
                group: gi,
                params,
            });
        }
    }
    out
}

/// Mode in effect for the `k`-th request generated on a device.
pub fn mode_for_request(group: &DeviceGroup, root_seed: u64, device: usize, k: u64) -> DeviceMode {
    match &group.modes {
        None => DeviceMode::default(),
        Some(sched) => {
            let block = k / sched.every as u64;
            let n = sched.modes.len() as u64;
            let idx = match sched.order {
                ModeOrder::Cycle => block % n,
                ModeOrder::Random => derive_seed(root_seed, "mode", (device as u64) << 32 | block) % n,
            };
            sched.modes[idx as usize]
        }
    }
}

/// A generated request before simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestSpec {
    pub device: usize,
    /// Index among requests generated on the same device.
    pub device_seq: u64,
    pub arrival: f64,
    pub prompt: Vec<TokenId>,
}

/// All requests of a scenario, ordered by arrival time then device.
pub fn generate_requests(s: &Scenario, models: &Models) -> Result<Vec<RequestSpec>> {
    let n_dev = s.device_count();
    if n_dev == 0 {
        return Err(Error::scenario("devices", "at least one device required"));
    }
    let w = &s.workload;
    // (time, prompt_len or None) per device
    let mut per_device: Vec<Vec<(f64, Option<u64>)>> = vec![Vec::new(); n_dev];
    match &w.scripted {
        Some(reqs) => {
            for r in reqs {
                per_device[r.device].push((r.time, Some(r.prompt_len)));
            }
            for list in per_device.iter_mut() {
                list.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
        }
        None => {
            let rate = w.rate / n_dev as f64;
            for (d, list) in per_device.iter_mut().enumerate() {
                let seed = derive_seed(s.seed, "arrivals", d as u64);
                *list = gen_arrivals(rate, w.horizon, seed)
                    .into_iter()
                    .map(|t| (t, None))
                    .collect();
            }
        }
    }

    let mut out = Vec::new();
    for (d, list) in per_device.into_iter().enumerate() {
        let mut rng = rng_for(s.seed, "prompts", d as u64);
        for (k, (t, fixed_len)) in list.into_iter().enumerate() {
            let len = match fixed_len {
                Some(l) => l,
                None => sample_prompt_len(&w.prompt_len, w.min_prompt_len, w.max_prompt_len, &mut rng),
            };
            let offset = rng.random_range(0..models.corpus.len());
            out.push(RequestSpec {
                device: d,
                device_seq: k as u64,
                arrival: t,
                prompt: models.prompt(offset, len as usize),
            });
        }
    }
    out.sort_by(|a, b| {
        a.arrival
            .total_cmp(&b.arrival)
            .then(a.device.cmp(&b.device))
            .then(a.device_seq.cmp(&b.device_seq))
    });
    Ok(out)
}
