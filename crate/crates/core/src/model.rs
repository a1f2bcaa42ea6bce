//! Deterministic toy language models.
//!
//! An [`NGramModel`] plays the role of either the full LLM (target) or the
//! on-device draft model. Decoding is greedy everywhere so that speculative
//! decoding can be checked token-for-token against plain autoregressive
//! decoding.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Token alphabet. Ids are the dense indices `0..len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    eos_id: TokenId,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, eos_id: TokenId) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::Vocabulary("at least two tokens required".into()));
        }
        if eos_id as usize >= tokens.len() {
            return Err(Error::Vocabulary(format!("eos id {eos_id} out of range")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index, eos_id })
    }

    /// Builds a vocabulary from whitespace-separated text, in order of first
    /// appearance. `eos` is appended if the text does not contain it.
    pub fn from_text(text: &str, eos: &str) -> Result<Self> {
        let mut tokens: Vec<String> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for w in text.split_whitespace() {
            if seen.insert(w) {
                tokens.push(w.to_string());
            }
        }
        if !seen.contains(eos) {
            tokens.push(eos.to_string());
        }
        let eos_id = tokens.iter().position(|t| t == eos).unwrap() as TokenId;
        Self::new(tokens, eos_id)
    }

    /// Vocabulary `t0 .. t{n-2}` plus `<eos>` as the last id.
    pub fn synthetic(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::Vocabulary("at least two tokens required".into()));
        }
        let mut tokens: Vec<String> = (0..size - 1).map(|i| format!("t{i}")).collect();
        tokens.push("<eos>".into());
        Self::new(tokens, (size - 1) as TokenId)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        text.split_whitespace()
            .map(|w| {
                self.id(w)
                    .ok_or_else(|| Error::Vocabulary(format!("unknown token {w:?}")))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone)]
struct Counts {
    per_token: Vec<u32>,
    total: u64,
}

/// Count-based n-gram model with strict longest-suffix backoff.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    vocab_size: usize,
    eos_id: TokenId,
    smoothing: f64,
    /// `tables[j]` maps a length-`j` context to next-token counts.
    tables: Vec<HashMap<Vec<TokenId>, Counts>>,
}

impl NGramModel {
    pub fn build(vocab: &Vocabulary, corpus: &[TokenId], order: usize, smoothing: f64) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if order >= corpus.len() {
            return Err(Error::OrderTooLarge {
                order,
                len: corpus.len(),
            });
        }
        if !(smoothing >= 0.0 && smoothing.is_finite()) {
            return Err(Error::arg("smoothing", "must be finite and >= 0"));
        }
        let v = vocab.len();
        if let Some(&bad) = corpus.iter().find(|&&t| t as usize >= v) {
            return Err(Error::UnknownToken(bad));
        }

        let mut tables: Vec<HashMap<Vec<TokenId>, Counts>> = vec![HashMap::new(); order + 1];
        for (j, table) in tables.iter_mut().enumerate() {
            for p in j..corpus.len() {
                let entry = table.entry(corpus[p - j..p].to_vec()).or_insert_with(|| Counts {
                    per_token: vec![0; v],
                    total: 0,
                });
                entry.per_token[corpus[p] as usize] += 1;
                entry.total += 1;
            }
        }

        Ok(Self {
            order,
            vocab_size: v,
            eos_id: vocab.eos_id(),
            smoothing,
            tables,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    fn lookup(&self, context: &[TokenId]) -> &Counts {
        let max_j = self.order.min(context.len());
        for j in (1..=max_j).rev() {
            if let Some(c) = self.tables[j].get(&context[context.len() - j..]) {
                return c;
            }
        }
        // the unigram table has exactly one (empty) key and is never empty
        &self.tables[0][&Vec::new()]
    }

    pub fn next_distribution(&self, context: &[TokenId]) -> Vec<f64> {
        let c = self.lookup(context);
        let denom = c.total as f64 + self.smoothing * self.vocab_size as f64;
        c.per_token
            .iter()
            .map(|&n| (n as f64 + self.smoothing) / denom)
            .collect()
    }

    /// Argmax of the next-token distribution, lowest id on ties.
    pub fn greedy_next(&self, context: &[TokenId]) -> (TokenId, f64) {
        let dist = self.next_distribution(context);
        argmax(&dist)
    }

    /// The `k` most probable next tokens, by descending probability then id.
    pub fn top_k(&self, context: &[TokenId], k: usize) -> Vec<(TokenId, f64)> {
        let dist = self.next_distribution(context);
        let mut ranked: Vec<(TokenId, f64)> = dist.into_iter().enumerate().map(|(i, p)| (i as TokenId, p)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }

    /// Plain autoregressive greedy decoding; stops after emitting EOS.
    pub fn greedy_decode(&self, prompt: &[TokenId], max_new: usize) -> Vec<TokenId> {
        let mut context = prompt.to_vec();
        let mut out = Vec::with_capacity(max_new);
        while out.len() < max_new {
            let (tok, _) = self.greedy_next(&context);
            out.push(tok);
            context.push(tok);
            if tok == self.eos_id {
                break;
            }
        }
        out
    }
}

pub(crate) fn argmax(values: &[f64]) -> (TokenId, f64) {
    let mut best = 0usize;
    for (i, &p) in values.iter().enumerate().skip(1) {
        if p > values[best] {
            best = i;
        }
    }
    (best as TokenId, values[best])
}

/// Inputs of the feature-plus-logit distillation objective.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillationInput {
    /// Target-model feature vector before the output head.
    pub f_target: Vec<f64>,
    /// Draft-model feature vector before the output head.
    pub f_draft: Vec<f64>,
    /// Shared output head, `v` rows of dimension `d`.
    pub head: Vec<Vec<f64>>,
    /// Weight of the cross-entropy term.
    pub w_ce: f64,
}

impl DistillationInput {
    fn validate(&self) -> Result<()> {
        let d = self.f_target.len();
        if d == 0 || self.f_draft.len() != d {
            return Err(Error::Dimension(format!(
                "feature dims {} and {}",
                d,
                self.f_draft.len()
            )));
        }
        if self.head.is_empty() {
            return Err(Error::Dimension("head has no rows".into()));
        }
        if let Some(r) = self.head.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension(format!("head row has dim {}, expected {d}", r.len())));
        }
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        if !finite(&self.f_target) {
            return Err(Error::NonFinite("f_target"));
        }
        if !finite(&self.f_draft) {
            return Err(Error::NonFinite("f_draft"));
        }
        if !self.head.iter().all(|r| finite(r)) {
            return Err(Error::NonFinite("head"));
        }
        if !self.w_ce.is_finite() {
            return Err(Error::NonFinite("w_ce"));
        }
        if self.w_ce < 0.0 {
            return Err(Error::arg("w_ce", "must be >= 0"));
        }
        Ok(())
    }
}

fn project(head: &[Vec<f64>], f: &[f64]) -> Vec<f64> {
    head.iter()
        .map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum())
        .collect()
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    z.iter().map(|x| x - lse).collect()
}

fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * a * a
    } else {
        a - 0.5
    }
}

/// Smooth-L1 (mean over features) plus `w_ce` times soft-label cross-entropy
/// between the head's softmax outputs on the two feature vectors.
pub fn distillation_loss(input: &DistillationInput) -> Result<f64> {
    input.validate()?;
    let d = input.f_target.len() as f64;
    let sl = input
        .f_target
        .iter()
        .zip(&input.f_draft)
        .map(|(t, s)| smooth_l1(s - t))
        .sum::<f64>()
        / d;
    let logp = log_softmax(&project(&input.head, &input.f_target));
    let logq = log_softmax(&project(&input.head, &input.f_draft));
    let ce: f64 = -logp.iter().zip(&logq).map(|(lp, lq)| lp.exp() * lq).sum::<f64>();
    Ok(sl + input.w_ce * ce)
}

/// Gradient of [`distillation_loss`] with respect to `f_draft`.
pub fn distillation_grad(input: &DistillationInput) -> Result<Vec<f64>> {
    input.validate()?;
    let d = input.f_target.len();
    let p: Vec<f64> = log_softmax(&project(&input.head, &input.f_target))
        .into_iter()
        .map(f64::exp)
        .collect();
    let q: Vec<f64> = log_softmax(&project(&input.head, &input.f_draft))
        .into_iter()
        .map(f64::exp)
        .collect();
    let mut grad: Vec<f64> = input
        .f_target
        .iter()
        .zip(&input.f_draft)
        .map(|(t, s)| {
            let x = s - t;
            let g = if x.abs() < 1.0 { x } else { x.signum() };
            g / d as f64
        })
        .collect();
    for (row, (qi, pi)) in input.head.iter().zip(q.iter().zip(&p)) {
        let coeff = input.w_ce * (qi - pi);
        for (g, h) in grad.iter_mut().zip(row) {
            *g += coeff * h;
        }
    }
    Ok(grad)
}
