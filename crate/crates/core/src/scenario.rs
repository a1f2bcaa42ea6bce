//! Experiment description. Scenarios are JSON documents; every omitted field
//! takes the default shown by [`Scenario::default`] and unknown keys are
//! rejected.

use serde::{Deserialize, Serialize};

use crate::cloudsim::CloudProfile;
use crate::error::{Error, Result};
use crate::specdec::SpecDecodeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Framework {
    /// Chunked prefill, speculative decoding and parallel drafting.
    #[default]
    Hat,
    /// Whole-prompt upload, one token per round trip.
    Ushape,
    /// Static chunk size, cloud processing starts after the full upload.
    FixedChunk,
    /// `Hat` without parallel drafting.
    HatNoPd,
}

impl Framework {
    pub const ALL: [Framework; 4] = [
        Framework::Hat,
        Framework::Ushape,
        Framework::FixedChunk,
        Framework::HatNoPd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Framework::Hat => "hat",
            Framework::Ushape => "ushape",
            Framework::FixedChunk => "fixed-chunk",
            Framework::HatNoPd => "hat-no-pd",
        }
    }

    pub fn speculative(&self) -> bool {
        matches!(self, Framework::Hat | Framework::HatNoPd)
    }

    pub fn parallel_drafting(&self) -> bool {
        matches!(self, Framework::Hat)
    }
}

impl std::str::FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Framework::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::scenario("framework", format!("unknown framework {s:?}")))
    }
}

impl std::fmt::Display for Framework {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A per-device parameter: fixed, or drawn once per device from a uniform range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Fixed(f64),
    Uniform { min: f64, max: f64 },
}

impl Param {
    fn validate(&self, path: &str) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        match *self {
            Param::Fixed(v) if ok(v) => Ok(()),
            Param::Uniform { min, max } if ok(min) && ok(max) && min <= max => Ok(()),
            _ => Err(Error::scenario(
                path,
                "must be positive and finite (uniform ranges need min <= max)",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceMode {
    /// Multiplies every device compute delay.
    pub compute_scale: f64,
    /// Multiplies both link bandwidths.
    pub bandwidth_scale: f64,
}

impl Default for DeviceMode {
    fn default() -> Self {
        Self {
            compute_scale: 1.0,
            bandwidth_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeOrder {
    #[default]
    Cycle,
    Random,
}

/// Piecewise-constant device profile: the mode changes after every `every`
/// generated requests and holds for the lifetime of each request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeSchedule {
    pub every: u32,
    pub order: ModeOrder,
    pub modes: Vec<DeviceMode>,
}

impl Default for ModeSchedule {
    fn default() -> Self {
        Self {
            every: 5,
            order: ModeOrder::Cycle,
            modes: vec![DeviceMode::default()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceGroup {
    pub count: usize,
    /// Shallow-layer compute, seconds per token.
    pub shallow_per_token: Param,
    /// Output head compute, seconds per invocation.
    pub head_delay: Param,
    /// Draft model, seconds per step.
    pub draft_step: Param,
    /// Bytes per second.
    pub uplink: Param,
    /// Bytes per second.
    pub downlink: Param,
    pub modes: Option<ModeSchedule>,
}

impl Default for DeviceGroup {
    fn default() -> Self {
        Self {
            count: 1,
            shallow_per_token: Param::Fixed(0.0439e-3),
            head_delay: Param::Fixed(0.5e-3),
            draft_step: Param::Fixed(1e-3),
            uplink: Param::Fixed(8e6),
            downlink: Param::Fixed(12e6),
            modes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PromptLengths {
    Fixed {
        value: u64,
    },
    Uniform {
        min: u64,
        max: u64,
    },
    /// Gamma distribution parameterised by its mean and shape.
    Gamma {
        mean: f64,
        shape: f64,
    },
    Choice {
        values: Vec<u64>,
    },
}

impl Default for PromptLengths {
    fn default() -> Self {
        PromptLengths::Gamma {
            mean: 350.0,
            shape: 0.65,
        }
    }
}

/// A request injected at a fixed time instead of by the arrival process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedRequest {
    pub device: usize,
    pub time: f64,
    pub prompt_len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Workload {
    /// Aggregate Poisson arrival rate over all devices, requests per second.
    pub rate: f64,
    /// Arrivals stop at this time, seconds.
    pub horizon: f64,
    pub prompt_len: PromptLengths,
    pub min_prompt_len: u64,
    pub max_prompt_len: u64,
    pub max_new: usize,
    /// Replaces the arrival process when present.
    pub scripted: Option<Vec<ScriptedRequest>>,
}

impl Default for Workload {
    fn default() -> Self {
        Self {
            rate: 6.0,
            horizon: 60.0,
            prompt_len: PromptLengths::default(),
            min_prompt_len: 8,
            max_prompt_len: 2048,
            max_new: 128,
            scripted: None,
        }
    }
}

/// Source text for the toy models: a whitespace-tokenized corpus, or a
/// synthetic corpus when `text` is absent.
///
/// The synthetic source gives every token a preferred successor followed
/// with probability `strength` (drawn per token from
/// `[strength_min, strength_max]`). A fraction `override_rate` of token pairs
/// instead prefer their own successor, which only the higher-order target
/// model can see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub text: Option<String>,
    pub vocab_size: usize,
    pub corpus_len: usize,
    pub strength_min: f64,
    pub strength_max: f64,
    pub override_rate: f64,
    /// Probability that a synthetic position is EOS.
    pub eos_weight: f64,
    pub target_order: usize,
    pub draft_order: usize,
    pub smoothing: f64,
    /// Cross-entropy weight of the distillation objective.
    pub w_ce: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            text: None,
            vocab_size: 48,
            corpus_len: 40_000,
            strength_min: 0.3,
            strength_max: 0.95,
            override_rate: 0.3,
            eos_weight: 0.002,
            target_order: 2,
            draft_order: 1,
            smoothing: 0.0,
            w_ce: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    pub alpha: f64,
    pub bin_width: u64,
    /// Prediction for a cloud that has not been observed yet, seconds.
    pub default_delay: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            bin_width: 16,
            default_delay: 0.025,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlaConfig {
    /// Seconds allowed per 128 prompt tokens until the first token.
    pub prefill: f64,
    /// Seconds allowed per 10 decoded tokens.
    pub decode: f64,
}

impl Default for SlaConfig {
    fn default() -> Self {
        Self {
            prefill: 0.35,
            decode: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub devices: Vec<DeviceGroup>,
    pub cloud: CloudProfile,
    pub workload: Workload,
    pub framework: Framework,
    pub specdec: SpecDecodeConfig,
    pub model: ModelConfig,
    pub monitor: MonitorConfig,
    pub slas: SlaConfig,
    /// Chunk size used by the fixed-chunk framework.
    pub fixed_chunk_size: u64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            devices: vec![DeviceGroup::default()],
            cloud: CloudProfile::default(),
            workload: Workload::default(),
            framework: Framework::Hat,
            specdec: SpecDecodeConfig::default(),
            model: ModelConfig::default(),
            monitor: MonitorConfig::default(),
            slas: SlaConfig::default(),
            fixed_chunk_size: 128,
            seed: 0,
        }
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::scenario(path, format!("{v} must be finite and > 0")))
    }
}

fn unit(path: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::scenario(path, format!("{v} is outside [0, 1]")))
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::scenario("<input>", e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn device_count(&self) -> usize {
        self.devices.iter().map(|g| g.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices.is_empty() || self.device_count() == 0 {
            return Err(Error::scenario("devices", "at least one device required"));
        }
        for (i, g) in self.devices.iter().enumerate() {
            let p = |f: &str| format!("devices[{i}].{f}");
            g.shallow_per_token.validate(&p("shallow_per_token"))?;
            g.head_delay.validate(&p("head_delay"))?;
            g.draft_step.validate(&p("draft_step"))?;
            g.uplink.validate(&p("uplink"))?;
            g.downlink.validate(&p("downlink"))?;
            if let Some(m) = &g.modes {
                if m.every == 0 {
                    return Err(Error::scenario(p("modes.every"), "must be >= 1"));
                }
                if m.modes.is_empty() {
                    return Err(Error::scenario(p("modes.modes"), "at least one mode required"));
                }
                for (j, mode) in m.modes.iter().enumerate() {
                    positive(&p(&format!("modes.modes[{j}].compute_scale")), mode.compute_scale)?;
                    positive(&p(&format!("modes.modes[{j}].bandwidth_scale")), mode.bandwidth_scale)?;
                }
            }
        }
        self.cloud.validate()?;

        let w = &self.workload;
        if !(w.rate >= 0.0 && w.rate.is_finite()) {
            return Err(Error::scenario(
                "workload.rate",
                format!("{} must be finite and >= 0", w.rate),
            ));
        }
        positive("workload.horizon", w.horizon)?;
        if w.max_new < 1 {
            return Err(Error::scenario("workload.max_new", "must be >= 1"));
        }
        if w.min_prompt_len < 1 || w.min_prompt_len > w.max_prompt_len {
            return Err(Error::scenario(
                "workload.min_prompt_len",
                "must satisfy 1 <= min_prompt_len <= max_prompt_len",
            ));
        }
        match &w.prompt_len {
            PromptLengths::Fixed { value } if *value >= 1 => {}
            PromptLengths::Uniform { min, max } if *min >= 1 && min <= max => {}
            PromptLengths::Gamma { mean, shape } if *mean > 0.0 && *shape > 0.0 => {}
            PromptLengths::Choice { values } if !values.is_empty() && values.iter().all(|&v| v >= 1) => {}
            _ => {
                return Err(Error::scenario(
                    "workload.prompt_len",
                    "invalid distribution parameters",
                ))
            }
        }
        if let Some(reqs) = &w.scripted {
            let n = self.device_count();
            for (i, r) in reqs.iter().enumerate() {
                if r.device >= n {
                    return Err(Error::scenario(
                        format!("workload.scripted[{i}].device"),
                        format!("{} is not a device index (have {n})", r.device),
                    ));
                }
                if !(r.time >= 0.0 && r.time.is_finite()) {
                    return Err(Error::scenario(format!("workload.scripted[{i}].time"), "must be >= 0"));
                }
                if r.prompt_len < 1 {
                    return Err(Error::scenario(
                        format!("workload.scripted[{i}].prompt_len"),
                        "must be >= 1",
                    ));
                }
            }
        }

        unit("specdec.eta", self.specdec.eta)?;
        if self.specdec.max_draft < 1 {
            return Err(Error::scenario("specdec.max_draft", "must be >= 1"));
        }
        if self.specdec.k < 1 {
            return Err(Error::scenario("specdec.k", "must be >= 1"));
        }

        let m = &self.model;
        if m.text.is_none() {
            if m.vocab_size < 3 {
                return Err(Error::scenario("model.vocab_size", "must be >= 3"));
            }
            if self.specdec.k > m.vocab_size {
                return Err(Error::scenario(
                    "specdec.k",
                    format!("{} exceeds the vocabulary size {}", self.specdec.k, m.vocab_size),
                ));
            }
            if m.corpus_len <= m.target_order.max(m.draft_order) {
                return Err(Error::scenario("model.corpus_len", "must exceed both model orders"));
            }
            unit("model.strength_min", m.strength_min)?;
            unit("model.strength_max", m.strength_max)?;
            unit("model.override_rate", m.override_rate)?;
            unit("model.eos_weight", m.eos_weight)?;
            if m.strength_min > m.strength_max {
                return Err(Error::scenario("model.strength_min", "must not exceed strength_max"));
            }
            if m.strength_max + m.eos_weight > 1.0 {
                return Err(Error::scenario(
                    "model.strength_max",
                    "strength_max plus eos_weight must be at most 1",
                ));
            }
        }
        if !(m.smoothing >= 0.0 && m.smoothing.is_finite()) {
            return Err(Error::scenario("model.smoothing", "must be finite and >= 0"));
        }
        if !(m.w_ce >= 0.0 && m.w_ce.is_finite()) {
            return Err(Error::scenario("model.w_ce", "must be finite and >= 0"));
        }

        unit("monitor.alpha", self.monitor.alpha)?;
        if self.monitor.bin_width < 1 {
            return Err(Error::scenario("monitor.bin_width", "must be >= 1"));
        }
        positive("monitor.default_delay", self.monitor.default_delay)?;
        positive("slas.prefill", self.slas.prefill)?;
        positive("slas.decode", self.slas.decode)?;
        if self.fixed_chunk_size < 1 {
            return Err(Error::scenario("fixed_chunk_size", "must be >= 1"));
        }
        Ok(())
    }

    /// Sets one field addressed by a dotted path (`workload.rate`,
    /// `devices.0.uplink`) from a JSON literal or bare string, then
    /// revalidates.
    pub fn with_override(&self, path: &str, value: &str) -> Result<Self> {
        let mut doc = serde_json::to_value(self).expect("scenario serializes");
        let parsed: serde_json::Value =
            serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        let mut slot = &mut doc;
        for part in path.split('.') {
            slot = match slot {
                serde_json::Value::Object(map) => map
                    .get_mut(part)
                    .ok_or_else(|| Error::scenario(path, format!("unknown key {part:?}")))?,
                serde_json::Value::Array(items) => {
                    let idx: usize = part
                        .parse()
                        .map_err(|_| Error::scenario(path, format!("{part:?} is not an index")))?;
                    items
                        .get_mut(idx)
                        .ok_or_else(|| Error::scenario(path, format!("index {idx} out of range")))?
                }
                _ => return Err(Error::scenario(path, format!("cannot descend into {part:?}"))),
            };
        }
        *slot = parsed;
        let s: Scenario = serde_json::from_value(doc).map_err(|e| Error::scenario(path, e.to_string()))?;
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let s = Scenario::parse(r#"{"devices":[{}],"workload":{"rate":2.0,"horizon":10}}"#).unwrap();
        assert_eq!(s.monitor.alpha, 0.8);
        assert_eq!(s.specdec.eta, 0.6);
        assert_eq!(s.specdec.max_draft, 8);
        assert_eq!(s.specdec.k, 3);
        assert_eq!(s.model.w_ce, 0.1);
        assert_eq!(s.cloud.bytes_per_token, 8192.0);
        assert_eq!(s.cloud.pipeline_len, 4);
        assert_eq!(s.monitor.bin_width, 16);
        assert_eq!(s.workload.rate, 2.0);
    }

    #[test]
    fn alpha_out_of_range_names_field() {
        let err = Scenario::parse(r#"{"monitor":{"alpha":1.5}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("monitor.alpha"), "{msg}");
        assert!(msg.contains("[0, 1]"), "{msg}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Scenario::parse(r#"{"bogus":1}"#).is_err());
        assert!(Scenario::parse(r#"{"cloud":{"gpus":8}}"#).is_err());
        assert!(Scenario::parse("{not json").is_err());
    }

    #[test]
    fn round_trip() {
        let mut s = Scenario::default();
        s.devices[0].uplink = Param::Uniform { min: 5e6, max: 1e7 };
        s.devices[0].modes = Some(ModeSchedule::default());
        s.workload.scripted = Some(vec![ScriptedRequest {
            device: 0,
            time: 0.5,
            prompt_len: 100,
        }]);
        let again = Scenario::parse(&s.to_json()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn overrides() {
        let s = Scenario::default();
        let t = s.with_override("workload.rate", "4").unwrap();
        assert_eq!(t.workload.rate, 4.0);
        let t = s.with_override("framework", "ushape").unwrap();
        assert_eq!(t.framework, Framework::Ushape);
        let t = s.with_override("devices.0.uplink", "5e6").unwrap();
        assert_eq!(t.devices[0].uplink, Param::Fixed(5e6));
        assert!(s.with_override("workload.nope", "1").is_err());
        assert!(s.with_override("monitor.alpha", "2").is_err());
    }

    #[test]
    fn framework_names() {
        for f in Framework::ALL {
            assert_eq!(f.name().parse::<Framework>().unwrap(), f);
        }
        assert!("medusa".parse::<Framework>().is_err());
    }
}
