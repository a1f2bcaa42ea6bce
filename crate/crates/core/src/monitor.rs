//! Online state monitoring: EMA tracking of cloud workload, a binned
//! delay-vs-batch-size predictor, and per-device compute/bandwidth state.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// `alpha * prev + (1 - alpha) * obs`.
pub fn ema_update(prev: f64, obs: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(alpha * prev + (1.0 - alpha) * obs)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::arg("alpha", format!("{alpha} is outside [0, 1]")))
    }
}

/// Smoothed batched-token size of the cloud plus the latest raw sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudStateEstimate {
    pub mu: f64,
    pub last_obs_tokens: u64,
    pub last_delay: f64,
    pub alpha: f64,
}

impl CloudStateEstimate {
    pub fn new(initial_mu: f64, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(initial_mu >= 0.0 && initial_mu.is_finite()) {
            return Err(Error::arg("mu", "must be finite and >= 0"));
        }
        Ok(Self {
            mu: initial_mu,
            last_obs_tokens: 0,
            last_delay: 0.0,
            alpha,
        })
    }

    pub fn observe(&mut self, batched_tokens: u64, delay: f64) -> Result<()> {
        self.mu = ema_update(self.mu, batched_tokens as f64, self.alpha)?;
        self.last_obs_tokens = batched_tokens;
        self.last_delay = delay;
        Ok(())
    }
}

/// Predicted in-cloud computation delay as a function of batched token size,
/// stored as one EMA per bin of `bin_width` tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayPredictor {
    bin_width: u64,
    bins: BTreeMap<u64, f64>,
    alpha: f64,
    default_delay: f64,
}

/// One row of a predictor dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSnapshot {
    pub index: u64,
    pub first_token: u64,
    pub last_token: u64,
    pub delay: f64,
}

impl DelayPredictor {
    pub fn new(bin_width: u64, alpha: f64, default_delay: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if bin_width == 0 {
            return Err(Error::arg("bin_width", "must be >= 1"));
        }
        if !(default_delay > 0.0 && default_delay.is_finite()) {
            return Err(Error::arg("default_delay", "must be finite and > 0"));
        }
        Ok(Self {
            bin_width,
            bins: BTreeMap::new(),
            alpha,
            default_delay,
        })
    }

    pub fn bin_width(&self) -> u64 {
        self.bin_width
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn default_delay(&self) -> f64 {
        self.default_delay
    }

    pub fn bin_of(&self, tokens: u64) -> u64 {
        tokens / self.bin_width
    }

    /// Folds one `(batched_tokens, delay)` sample into its bin. The first
    /// sample of a bin initializes it.
    pub fn observe(&mut self, batched_tokens: u64, delay: f64) -> Result<()> {
        if batched_tokens == 0 {
            return Err(Error::arg("batched_tokens", "must be >= 1"));
        }
        if !(delay > 0.0 && delay.is_finite()) {
            return Err(Error::arg("delay", format!("{delay} must be finite and > 0")));
        }
        let bin = self.bin_of(batched_tokens);
        let alpha = self.alpha;
        match self.bins.get_mut(&bin) {
            Some(v) => *v = ema_update(*v, delay, alpha)?,
            None => {
                self.bins.insert(bin, delay);
            }
        }
        Ok(())
    }

    /// Value of the containing bin, else the nearest observed bin (lower one
    /// on ties), else the default delay.
    pub fn query(&self, tokens: u64) -> f64 {
        let bin = self.bin_of(tokens);
        if let Some(&v) = self.bins.get(&bin) {
            return v;
        }
        let below = self.bins.range(..bin).next_back();
        let above = self.bins.range(bin..).next();
        match (below, above) {
            (Some((&b, &vb)), Some((&a, &va))) => {
                if bin - b <= a - bin {
                    vb
                } else {
                    va
                }
            }
            (Some((_, &v)), None) | (None, Some((_, &v))) => v,
            (None, None) => self.default_delay,
        }
    }

    pub fn is_observed(&self, tokens: u64) -> bool {
        self.bins.contains_key(&self.bin_of(tokens))
    }

    pub fn snapshot(&self) -> Vec<BinSnapshot> {
        self.bins
            .iter()
            .map(|(&index, &delay)| BinSnapshot {
                index,
                first_token: index * self.bin_width,
                last_token: (index + 1) * self.bin_width - 1,
                delay,
            })
            .collect()
    }
}

/// Smoothed draft-step delay (s/step) and link bandwidths (bytes/s) of a device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceState {
    pub gamma: f64,
    pub beta_up: f64,
    pub beta_down: f64,
}

impl DeviceState {
    pub fn new(gamma: f64, beta_up: f64, beta_down: f64) -> Result<Self> {
        for (name, v) in [("gamma", gamma), ("beta_up", beta_up), ("beta_down", beta_down)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::arg(name, format!("{v} must be finite and > 0")));
            }
        }
        Ok(Self {
            gamma,
            beta_up,
            beta_down,
        })
    }

    pub fn observe(&self, gamma_obs: f64, up_obs: f64, down_obs: f64, alpha: f64) -> Result<Self> {
        let obs = Self::new(gamma_obs, up_obs, down_obs)?;
        Ok(Self {
            gamma: ema_update(self.gamma, obs.gamma, alpha)?,
            beta_up: ema_update(self.beta_up, obs.beta_up, alpha)?,
            beta_down: ema_update(self.beta_down, obs.beta_down, alpha)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ema_arithmetic() {
        assert!((ema_update(100.0, 200.0, 0.8).unwrap() - 120.0).abs() < 1e-12);
        assert_eq!(ema_update(100.0, 200.0, 1.0).unwrap(), 100.0);
        assert_eq!(ema_update(100.0, 200.0, 0.0).unwrap(), 200.0);
        assert!(ema_update(1.0, 2.0, 1.5).is_err());
        assert!(ema_update(1.0, 2.0, -0.1).is_err());
    }

    #[test]
    fn first_observation_initializes_bin() {
        let mut p = DelayPredictor::new(16, 0.8, 0.05).unwrap();
        p.observe(20, 0.012).unwrap();
        assert_eq!(p.snapshot()[0].index, 1);
        assert_eq!(p.query(20), 0.012);
    }

    #[test]
    fn bin_ema_update() {
        let mut p = DelayPredictor::new(16, 0.8, 0.05).unwrap();
        p.observe(17, 0.010).unwrap();
        p.observe(20, 0.012).unwrap();
        assert!((p.query(31) - 0.0104).abs() < 1e-15);
    }

    #[test]
    fn query_fallbacks() {
        let mut p = DelayPredictor::new(16, 0.8, 0.05).unwrap();
        assert_eq!(p.query(7), 0.05);
        p.observe(20, 0.012).unwrap();
        assert_eq!(p.query(200), 0.012);
        assert_eq!(p.query(0), 0.012);
        p.observe(100, 0.030).unwrap(); // bin 6
                                        // bin 3 is two bins from bin 1 and three from bin 6
        assert_eq!(p.query(50), 0.012);
        assert_eq!(p.query(70), 0.030);
    }

    #[test]
    fn observe_rejects_nonpositive_delay() {
        let mut p = DelayPredictor::new(16, 0.8, 0.05).unwrap();
        assert!(p.observe(10, 0.0).is_err());
        assert!(p.observe(0, 0.01).is_err());
        assert!(DelayPredictor::new(0, 0.8, 0.05).is_err());
    }

    #[test]
    fn snapshot_token_ranges() {
        let mut p = DelayPredictor::new(16, 0.8, 0.05).unwrap();
        p.observe(40, 0.02).unwrap();
        let s = p.snapshot();
        assert_eq!((s[0].first_token, s[0].last_token), (32, 47));
    }

    #[test]
    fn device_observe() {
        let s = DeviceState::new(0.005, 8e6, 12e6).unwrap();
        let n = s.observe(0.007, 8e6, 12e6, 0.8).unwrap();
        assert!((n.gamma - 0.0054).abs() < 1e-15);
        assert_eq!(s.observe(0.007, 1e6, 1e6, 1.0).unwrap(), s);
        let o = s.observe(0.007, 1e6, 2e6, 0.0).unwrap();
        assert_eq!((o.gamma, o.beta_up, o.beta_down), (0.007, 1e6, 2e6));
        assert!(s.observe(0.0, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn cloud_estimate_tracks_mu() {
        let mut e = CloudStateEstimate::new(0.0, 0.8).unwrap();
        e.observe(100, 0.03).unwrap();
        assert!((e.mu - 20.0).abs() < 1e-12);
        assert_eq!(e.last_obs_tokens, 100);
        assert_eq!(e.last_delay, 0.03);
    }
}
