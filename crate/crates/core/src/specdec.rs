//! Speculative decoding: threshold-stopped drafting, exact-match verification,
//! and parallel drafting of next-round candidates while verification is in
//! flight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NGramModel, TokenId};
use crate::monitor::{CloudStateEstimate, DelayPredictor, DeviceState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecDecodeConfig {
    /// Drafting stops after the first token whose probability is below this.
    pub eta: f64,
    pub max_draft: usize,
    /// Number of candidate tokens pre-drafted during verification.
    pub k: usize,
}

impl Default for SpecDecodeConfig {
    fn default() -> Self {
        Self {
            eta: 0.6,
            max_draft: 8,
            k: 3,
        }
    }
}

impl SpecDecodeConfig {
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::arg("eta", format!("{} is outside [0, 1]", self.eta)));
        }
        if self.max_draft < 1 {
            return Err(Error::arg("max_draft", "must be >= 1"));
        }
        if self.k < 1 || self.k > vocab_size {
            return Err(Error::arg("k", format!("{} is outside [1, {vocab_size}]", self.k)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DraftSequence {
    pub tokens: Vec<TokenId>,
    pub probs: Vec<f64>,
    /// Number of tokens preceding the draft.
    pub context_len: usize,
}

impl DraftSequence {
    pub fn empty(context_len: usize) -> Self {
        Self {
            tokens: Vec::new(),
            probs: Vec::new(),
            context_len,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// True once no further token may be drafted.
    pub fn is_closed(&self, cfg: &SpecDecodeConfig, eos: TokenId) -> bool {
        match (self.tokens.last(), self.probs.last()) {
            (Some(&t), Some(&p)) => t == eos || p < cfg.eta || self.len() >= cfg.max_draft,
            _ => false,
        }
    }
}

/// Extends `partial` with greedy draft tokens until the draft closes or
/// `step_limit` new tokens have been added.
pub fn extend_draft(
    draft_model: &NGramModel,
    context: &[TokenId],
    partial: &mut DraftSequence,
    cfg: &SpecDecodeConfig,
    step_limit: usize,
) {
    debug_assert_eq!(partial.context_len, context.len());
    let mut ctx = Vec::with_capacity(context.len() + cfg.max_draft);
    ctx.extend_from_slice(context);
    ctx.extend_from_slice(&partial.tokens);
    let eos = draft_model.eos_id();
    let mut steps = 0;
    while steps < step_limit && !partial.is_closed(cfg, eos) && partial.len() < cfg.max_draft {
        let (tok, p) = draft_model.greedy_next(&ctx);
        partial.tokens.push(tok);
        partial.probs.push(p);
        ctx.push(tok);
        steps += 1;
    }
}

pub fn draft(draft_model: &NGramModel, context: &[TokenId], cfg: &SpecDecodeConfig) -> DraftSequence {
    let mut d = DraftSequence::empty(context.len());
    extend_draft(draft_model, context, &mut d, cfg, cfg.max_draft);
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerificationResult {
    pub accepted_count: usize,
    /// Target token after the accepted prefix (the bonus token when every
    /// draft token matched).
    pub correction: TokenId,
}

impl VerificationResult {
    pub fn emitted(&self) -> usize {
        self.accepted_count + 1
    }
}

pub fn verify(target: &NGramModel, context: &[TokenId], draft: &[TokenId]) -> VerificationResult {
    let mut ctx = Vec::with_capacity(context.len() + draft.len() + 1);
    ctx.extend_from_slice(context);
    for (j, &proposed) in draft.iter().enumerate() {
        let (expected, _) = target.greedy_next(&ctx);
        if expected != proposed {
            return VerificationResult {
                accepted_count: j,
                correction: expected,
            };
        }
        ctx.push(proposed);
    }
    VerificationResult {
        accepted_count: draft.len(),
        correction: target.greedy_next(&ctx).0,
    }
}

/// Tokens a verified round contributes to the output: the accepted prefix
/// plus the correction, cut after EOS and after `remaining` tokens.
pub fn round_output(draft: &[TokenId], result: &VerificationResult, eos: TokenId, remaining: usize) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(result.emitted());
    for &t in draft[..result.accepted_count]
        .iter()
        .chain(std::iter::once(&result.correction))
    {
        if out.len() == remaining {
            break;
        }
        out.push(t);
        if t == eos {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundStats {
    pub draft_len: usize,
    pub accepted_count: usize,
    /// Tokens actually appended to the output after truncation.
    pub emitted: usize,
    /// Draft tokens taken from a resolved parallel-draft candidate.
    pub predrafted: usize,
}

impl RoundStats {
    /// Accepted draft tokens plus the correction.
    pub fn accept_length(&self) -> usize {
        self.accepted_count + 1
    }
}

pub fn speculative_decode(
    target: &NGramModel,
    draft_model: &NGramModel,
    prompt: &[TokenId],
    cfg: &SpecDecodeConfig,
    max_new: usize,
) -> (Vec<TokenId>, Vec<RoundStats>) {
    decode_loop(target, draft_model, prompt, cfg, max_new, None)
}

/// Speculative decoding with parallel drafting of `lambda_steps` steps per
/// round. Produces the same tokens as [`speculative_decode`].
pub fn speculative_decode_parallel(
    target: &NGramModel,
    draft_model: &NGramModel,
    prompt: &[TokenId],
    cfg: &SpecDecodeConfig,
    max_new: usize,
    lambda_steps: usize,
) -> (Vec<TokenId>, Vec<RoundStats>) {
    decode_loop(target, draft_model, prompt, cfg, max_new, Some(lambda_steps))
}

fn decode_loop(
    target: &NGramModel,
    draft_model: &NGramModel,
    prompt: &[TokenId],
    cfg: &SpecDecodeConfig,
    max_new: usize,
    parallel: Option<usize>,
) -> (Vec<TokenId>, Vec<RoundStats>) {
    let eos = target.eos_id();
    let mut context = prompt.to_vec();
    let mut out = Vec::new();
    let mut rounds = Vec::new();
    let mut carried: Option<DraftSequence> = None;

    while out.len() < max_new {
        let mut d = carried.take().unwrap_or_else(|| DraftSequence::empty(context.len()));
        let predrafted = d.len();
        extend_draft(draft_model, &context, &mut d, cfg, cfg.max_draft);

        let plan = parallel.map(|steps| generate_candidates(draft_model, &context, &d, cfg, steps));
        let result = verify(target, &context, &d.tokens);
        let emitted = round_output(&d.tokens, &result, eos, max_new - out.len());
        rounds.push(RoundStats {
            draft_len: d.len(),
            accepted_count: result.accepted_count,
            emitted: emitted.len(),
            predrafted,
        });

        let done = emitted.last() == Some(&eos);
        context.extend_from_slice(&emitted);
        out.extend_from_slice(&emitted);
        if done {
            break;
        }
        if let Some(plan) = plan {
            if plan.applies_to(&result, d.len()) {
                carried = resolve_candidates(&plan, result.correction).cloned();
            }
        }
    }
    (out, rounds)
}

/// Candidate continuations pre-drafted during verification.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelDraftPlan {
    pub lambda_steps: usize,
    /// `(candidate, continuation)` pairs in rank order. Each continuation is
    /// the draft that follows the candidate token.
    pub candidates: Vec<(TokenId, DraftSequence)>,
}

impl ParallelDraftPlan {
    /// Candidates replace the last draft token, so they only apply when the
    /// verifier rejected exactly that position.
    pub fn applies_to(&self, result: &VerificationResult, draft_len: usize) -> bool {
        draft_len >= 1 && result.accepted_count + 1 == draft_len
    }
}

/// Number of draft steps that fit inside one verification round trip.
pub fn plan_parallel_draft(
    device: &DeviceState,
    predictor: &DelayPredictor,
    estimate: &CloudStateEstimate,
    draft_len: usize,
    bytes_per_token: f64,
) -> usize {
    let payload = draft_len as f64 * bytes_per_token;
    let cloud = predictor.query(estimate.mu.round().max(0.0) as u64);
    let total = payload / device.beta_up + cloud + payload / device.beta_down;
    let steps = (total / device.gamma).floor();
    if steps.is_finite() && steps > 0.0 {
        steps as usize
    } else {
        0
    }
}

pub fn generate_candidates(
    draft_model: &NGramModel,
    context: &[TokenId],
    last_draft: &DraftSequence,
    cfg: &SpecDecodeConfig,
    lambda_steps: usize,
) -> ParallelDraftPlan {
    let n = last_draft.len();
    if n == 0 {
        return ParallelDraftPlan {
            lambda_steps,
            candidates: Vec::new(),
        };
    }
    let mut base = Vec::with_capacity(context.len() + n);
    base.extend_from_slice(context);
    base.extend_from_slice(&last_draft.tokens[..n - 1]);
    let eos = draft_model.eos_id();

    let candidates = draft_model
        .top_k(&base, cfg.k)
        .into_iter()
        .map(|(cand, _)| {
            let mut ctx = base.clone();
            ctx.push(cand);
            let mut cont = DraftSequence::empty(ctx.len());
            if cand != eos {
                extend_draft(draft_model, &ctx, &mut cont, cfg, lambda_steps);
            }
            (cand, cont)
        })
        .collect();
    ParallelDraftPlan {
        lambda_steps,
        candidates,
    }
}

pub fn resolve_candidates(plan: &ParallelDraftPlan, correction: TokenId) -> Option<&DraftSequence> {
    plan.candidates
        .iter()
        .find(|(c, _)| *c == correction)
        .map(|(_, cont)| cont)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vocabulary;
    use crate::monitor::{CloudStateEstimate, DelayPredictor, DeviceState};

    fn vocab() -> Vocabulary {
        Vocabulary::synthetic(8).unwrap()
    }

    fn chain() -> NGramModel {
        // 0 -> 1 -> 2 -> 3 -> 4 -> 5 -> 6 -> eos(7)
        NGramModel::build(&vocab(), &[0, 1, 2, 3, 4, 5, 6, 7], 1, 0.0).unwrap()
    }

    /// After 0: 1 with prob .9; after 1: 2 with .8; after 2: 3 with .4.
    fn graded() -> NGramModel {
        let mut corpus = Vec::new();
        let mut push = |seq: &[TokenId], times: usize| {
            for _ in 0..times {
                corpus.extend_from_slice(seq);
            }
        };
        push(&[0, 1, 2, 3, 7], 4);
        push(&[0, 1, 2, 4, 7], 2);
        push(&[0, 1, 2, 5, 7], 2);
        push(&[0, 1, 5, 7], 1);
        push(&[1, 5, 7], 1);
        push(&[2, 6, 7], 2);
        push(&[0, 6, 7], 1);
        NGramModel::build(&vocab(), &corpus, 1, 0.0).unwrap()
    }

    fn cfg(eta: f64, max_draft: usize) -> SpecDecodeConfig {
        SpecDecodeConfig { eta, max_draft, k: 2 }
    }

    #[test]
    fn graded_fixture_probabilities() {
        let m = graded();
        assert_eq!(m.greedy_next(&[0]), (1, 0.9));
        assert_eq!(m.greedy_next(&[1]), (2, 0.8));
        assert_eq!(m.greedy_next(&[2]), (3, 0.4));
    }

    #[test]
    fn draft_stops_after_first_low_probability_token() {
        let d = draft(&graded(), &[0], &cfg(0.6, 8));
        assert_eq!(d.tokens, vec![1, 2, 3]);
        assert_eq!(d.probs, vec![0.9, 0.8, 0.4]);
        assert_eq!(d.context_len, 1);
    }

    #[test]
    fn draft_threshold_extremes() {
        let d = draft(&chain(), &[0], &cfg(0.0, 5));
        assert_eq!(d.len(), 5);
        // eos closes the draft before max_draft
        let d = draft(&graded(), &[0], &cfg(0.0, 8));
        assert_eq!(d.tokens, vec![1, 2, 3, 7]);
        let d = draft(&graded(), &[0], &cfg(1.0, 5));
        assert_eq!(d.len(), 1);
        // probability exactly 1.0 is not below 1.0
        let d = draft(&chain(), &[0], &cfg(1.0, 3));
        assert_eq!(d.tokens, vec![1, 2, 3]);
    }

    #[test]
    fn draft_stops_at_eos() {
        let d = draft(&chain(), &[5], &cfg(0.0, 8));
        assert_eq!(d.tokens, vec![6, 7]);
    }

    #[test]
    fn verify_walks_positions() {
        let t = chain();
        assert_eq!(
            verify(&t, &[0], &[1, 5]),
            VerificationResult {
                accepted_count: 1,
                correction: 2
            }
        );
        assert_eq!(
            verify(&t, &[0], &[1, 2, 3]),
            VerificationResult {
                accepted_count: 3,
                correction: 4
            }
        );
        assert_eq!(
            verify(&t, &[0], &[5]),
            VerificationResult {
                accepted_count: 0,
                correction: 1
            }
        );
    }

    #[test]
    fn round_output_truncates() {
        let r = VerificationResult {
            accepted_count: 3,
            correction: 4,
        };
        assert_eq!(round_output(&[1, 2, 3], &r, 7, 10), vec![1, 2, 3, 4]);
        assert_eq!(round_output(&[1, 2, 3], &r, 7, 2), vec![1, 2]);
        assert_eq!(round_output(&[1, 7, 3], &r, 7, 10), vec![1, 7]);
    }

    #[test]
    fn identical_models_emit_max_draft_plus_one() {
        let t = chain();
        let (out, rounds) = speculative_decode(&t, &t, &[0], &cfg(0.0, 2), 10);
        assert_eq!(out, t.greedy_decode(&[0], 10));
        assert_eq!(out, vec![1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(rounds[0].emitted, 3);
        assert_eq!(rounds[1].emitted, 3);
    }

    #[test]
    fn zero_max_new_has_no_rounds() {
        let t = chain();
        let (out, rounds) = speculative_decode(&t, &t, &[0], &cfg(0.6, 4), 0);
        assert!(out.is_empty());
        assert!(rounds.is_empty());
    }

    #[test]
    fn lambda_planner_matches_hand_evaluation() {
        let dev = DeviceState::new(0.005, 8e6, 12e6).unwrap();
        let mut pred = DelayPredictor::new(16, 0.8, 0.010).unwrap();
        pred.observe(10, 0.010).unwrap();
        let est = CloudStateEstimate::new(10.0, 0.8).unwrap();
        assert_eq!(plan_parallel_draft(&dev, &pred, &est, 4, 8192.0), 3);

        let slow = DeviceState::new(1.0, 8e6, 12e6).unwrap();
        assert_eq!(plan_parallel_draft(&slow, &pred, &est, 4, 8192.0), 0);
    }

    #[test]
    fn candidates_are_top_k_of_last_step() {
        // after 2: 3 (.4), then 4/5/6 at .2 each
        let m = graded();
        let last = draft(&m, &[0], &cfg(0.6, 8));
        let plan = generate_candidates(&m, &[0], &last, &cfg(0.6, 8), 0);
        let keys: Vec<TokenId> = plan.candidates.iter().map(|c| c.0).collect();
        assert_eq!(keys, vec![3, 4]);
        assert!(plan.candidates.iter().all(|c| c.1.is_empty()));

        let one = SpecDecodeConfig { k: 1, ..cfg(0.6, 8) };
        let plan = generate_candidates(&m, &[0], &last, &one, 0);
        assert_eq!(plan.candidates[0].0, m.greedy_next(&[0, 1, 2]).0);
    }

    #[test]
    fn resolve_hits_and_misses() {
        let m = chain();
        let c = cfg(0.0, 4);
        let last = DraftSequence {
            tokens: vec![1, 2],
            probs: vec![1.0, 1.0],
            context_len: 1,
        };
        let plan = generate_candidates(&m, &[0], &last, &c, 2);
        let hit = resolve_candidates(&plan, plan.candidates[0].0).unwrap();
        assert_eq!(hit.tokens, vec![3, 4]);
        assert_eq!(plan.candidates.iter().map(|x| x.0).collect::<Vec<_>>(), vec![2, 0]);
        assert!(resolve_candidates(&plan, 6).is_none());
        let empty = ParallelDraftPlan {
            lambda_steps: 0,
            candidates: vec![],
        };
        assert!(resolve_candidates(&empty, 2).is_none());
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1.5, 4).validate(8).is_err());
        assert!(cfg(0.5, 0).validate(8).is_err());
        assert!(SpecDecodeConfig { k: 9, ..cfg(0.5, 4) }.validate(8).is_err());
        assert!(SpecDecodeConfig::default().validate(8).is_ok());
    }
}
