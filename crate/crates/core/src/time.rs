//! Simulation time is kept in integer nanoseconds.

pub type Nanos = u64;

pub const NANOS_PER_SEC: f64 = 1e9;

/// Rounds a nonnegative duration in seconds half-up to nanoseconds.
pub fn secs_to_ns(secs: f64) -> Nanos {
    debug_assert!(secs >= 0.0, "negative duration {secs}");
    (secs * NANOS_PER_SEC + 0.5).floor().max(0.0) as Nanos
}

pub fn ns_to_secs(ns: Nanos) -> f64 {
    ns as f64 / NANOS_PER_SEC
}

/// Transfer time of `n_tokens` hidden states of `bytes_per_token` bytes.
pub fn tx_delay(n_tokens: u64, bytes_per_token: f64, bandwidth: f64) -> crate::Result<f64> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(crate::Error::arg(
            "bandwidth",
            format!("{bandwidth} must be finite and > 0"),
        ));
    }
    Ok(n_tokens as f64 * bytes_per_token / bandwidth)
}
