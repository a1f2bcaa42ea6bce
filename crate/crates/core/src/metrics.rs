//! Per-request latency metrics, SLA compliance and CDFs. Works from the raw
//! event log alone so it can cross-check the kernel's own bookkeeping.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::eventlog::{EventLog, LogKind};
use crate::scenario::SlaConfig;
use crate::time::{secs_to_ns, Nanos};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestRecord {
    pub id: u64,
    pub device: u64,
    pub prompt_len: u64,
    pub chunk_size: u64,
    pub arrival_ns: Nanos,
    pub ttft_ns: Nanos,
    pub tbt_ns: Vec<Nanos>,
    pub output_len: u64,
    pub prefill_compliant: bool,
    pub decode_compliant: bool,
}

impl RequestRecord {
    pub fn last_emission_ns(&self) -> Nanos {
        self.arrival_ns + self.ttft_ns + self.tbt_ns.iter().sum::<Nanos>()
    }

    pub fn mean_tbt_ns(&self) -> f64 {
        if self.tbt_ns.is_empty() {
            0.0
        } else {
            self.tbt_ns.iter().sum::<Nanos>() as f64 / self.tbt_ns.len() as f64
        }
    }

    /// Nearest-rank 99th percentile of the inter-token gaps.
    pub fn p99_tbt_ns(&self) -> Nanos {
        let mut v = self.tbt_ns.clone();
        v.sort_unstable();
        nearest_rank(&v, 0.99).unwrap_or(0)
    }
}

fn nearest_rank<T: Copy>(sorted: &[T], q: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

#[derive(Default)]
struct Scan {
    device: Option<u64>,
    prompt_len: Option<u64>,
    arrival: Option<Nanos>,
    emissions: Vec<Nanos>,
    completed: Option<(u64, u64)>,
}

/// Rebuilds per-request TTFT and TBT from arrival, token and completion
/// records. Compliance flags are left false; see [`apply_sla`].
pub fn compute_request_metrics(log: &EventLog) -> Result<Vec<RequestRecord>> {
    let mut scans: BTreeMap<u64, Scan> = BTreeMap::new();
    for rec in &log.records {
        let Some(req) = rec.request else { continue };
        let missing = |key: &str| Error::EventLog(format!("request {req}: {} without {key}", rec.kind.name()));
        match rec.kind {
            LogKind::Arrival => {
                let s = scans.entry(req).or_default();
                if s.arrival.is_some() {
                    return Err(Error::EventLog(format!("request {req}: duplicate arrival")));
                }
                s.arrival = Some(rec.time_ns);
                s.device = Some(rec.field("device").ok_or_else(|| missing("device"))?);
                s.prompt_len = Some(rec.field("prompt_len").ok_or_else(|| missing("prompt_len"))?);
            }
            LogKind::Token => {
                let s = scans
                    .get_mut(&req)
                    .ok_or_else(|| Error::EventLog(format!("request {req}: token before arrival")))?;
                let index = rec.field("index").ok_or_else(|| missing("index"))?;
                if index != s.emissions.len() as u64 {
                    return Err(Error::EventLog(format!(
                        "request {req}: token index {index} out of order"
                    )));
                }
                if let Some(&prev) = s.emissions.last() {
                    if rec.time_ns <= prev {
                        return Err(Error::EventLog(format!("request {req}: emission times not increasing")));
                    }
                } else if rec.time_ns <= s.arrival.unwrap_or(0) {
                    return Err(Error::EventLog(format!("request {req}: first token at arrival")));
                }
                s.emissions.push(rec.time_ns);
            }
            LogKind::RequestComplete => {
                let s = scans
                    .get_mut(&req)
                    .ok_or_else(|| Error::EventLog(format!("request {req}: completion before arrival")))?;
                let out = rec.field("output_len").ok_or_else(|| missing("output_len"))?;
                let chunk = rec.field("chunk_size").ok_or_else(|| missing("chunk_size"))?;
                s.completed = Some((out, chunk));
            }
            _ => {}
        }
    }

    scans
        .into_iter()
        .map(|(id, s)| {
            let (output_len, chunk_size) = s
                .completed
                .ok_or_else(|| Error::EventLog(format!("request {id} never completed")))?;
            let arrival = s
                .arrival
                .ok_or_else(|| Error::EventLog(format!("request {id} has no arrival")))?;
            if s.emissions.len() as u64 != output_len || s.emissions.is_empty() {
                return Err(Error::EventLog(format!(
                    "request {id}: {} tokens logged, completion says {output_len}",
                    s.emissions.len()
                )));
            }
            Ok(RequestRecord {
                id,
                device: s.device.unwrap_or_default(),
                prompt_len: s.prompt_len.unwrap_or_default(),
                chunk_size,
                arrival_ns: arrival,
                ttft_ns: s.emissions[0] - arrival,
                tbt_ns: s.emissions.windows(2).map(|w| w[1] - w[0]).collect(),
                output_len,
                prefill_compliant: false,
                decode_compliant: false,
            })
        })
        .collect()
}

/// TTFT within `prefill` seconds per 128 prompt tokens.
pub fn prefill_ok(rec: &RequestRecord, prefill_sla: f64) -> bool {
    let budget = secs_to_ns(prefill_sla) as u128;
    rec.ttft_ns as u128 * 128 <= budget * rec.prompt_len as u128
}

/// Every window of 10 consecutive gaps within `decode` seconds; shorter
/// outputs get the budget scaled to their gap count.
pub fn decode_ok(rec: &RequestRecord, decode_sla: f64) -> bool {
    let budget = secs_to_ns(decode_sla) as u128;
    let gaps = &rec.tbt_ns;
    if gaps.len() < 10 {
        let total: u128 = gaps.iter().map(|&g| g as u128).sum();
        return total * 10 <= budget * gaps.len() as u128;
    }
    let mut window: u128 = gaps[..10].iter().map(|&g| g as u128).sum();
    if window > budget {
        return false;
    }
    for i in 10..gaps.len() {
        window = window + gaps[i] as u128 - gaps[i - 10] as u128;
        if window > budget {
            return false;
        }
    }
    true
}

pub fn apply_sla(records: &mut [RequestRecord], slas: &SlaConfig) {
    for r in records {
        r.prefill_compliant = prefill_ok(r, slas.prefill);
        r.decode_compliant = decode_ok(r, slas.decode);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlaRates {
    pub prefill: f64,
    pub decode: f64,
    /// No records: both rates are 1.0 by convention.
    pub vacuous: bool,
}

pub fn sla_compliance(records: &[RequestRecord], slas: &SlaConfig) -> SlaRates {
    if records.is_empty() {
        return SlaRates {
            prefill: 1.0,
            decode: 1.0,
            vacuous: true,
        };
    }
    let n = records.len() as f64;
    let p = records.iter().filter(|r| prefill_ok(r, slas.prefill)).count() as f64;
    let d = records.iter().filter(|r| decode_ok(r, slas.decode)).count() as f64;
    SlaRates {
        prefill: p / n,
        decode: d / n,
        vacuous: false,
    }
}

/// Empirical CDF as `(value, fraction <= value)` steps.
pub fn cdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::arg("values", "cdf of an empty sample"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (i, x) in v.into_iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = frac,
            _ => out.push((x, frac)),
        }
    }
    Ok(out)
}

/// Aggregate row of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub requests: usize,
    pub mean_ttft_ns: f64,
    pub median_ttft_ns: Nanos,
    pub p90_ttft_ns: Nanos,
    /// Mean over every inter-token gap of every request.
    pub mean_tbt_ns: f64,
    pub sla: SlaRates,
    pub mean_accept_len: f64,
    /// Requests with fewer than 11 output tokens (scaled decode budget).
    pub short_outputs: usize,
}

impl Summary {
    pub fn from_records(records: &[RequestRecord], slas: &SlaConfig, accept_lengths: &[usize]) -> Self {
        let mut ttft: Vec<Nanos> = records.iter().map(|r| r.ttft_ns).collect();
        ttft.sort_unstable();
        let n = records.len();
        let gaps: Vec<Nanos> = records.iter().flat_map(|r| r.tbt_ns.iter().copied()).collect();
        Self {
            requests: n,
            mean_ttft_ns: mean(ttft.iter().map(|&x| x as f64), n),
            median_ttft_ns: nearest_rank(&ttft, 0.5).unwrap_or(0),
            p90_ttft_ns: nearest_rank(&ttft, 0.9).unwrap_or(0),
            mean_tbt_ns: mean(gaps.iter().map(|&x| x as f64), gaps.len()),
            sla: sla_compliance(records, slas),
            mean_accept_len: mean(accept_lengths.iter().map(|&x| x as f64), accept_lengths.len()),
            short_outputs: records.iter().filter(|r| r.tbt_ns.len() < 10).count(),
        }
    }
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        xs.sum::<f64>() / n as f64
    }
}

pub const REQUESTS_CSV_HEADER: &str = "request_id,device_id,framework,prompt_len,chunk_size,ttft_ns,mean_tbt_ns,p99_tbt_ns,output_len,prefill_ok,decode_ok";

pub fn requests_csv(records: &[RequestRecord], framework: &str) -> String {
    let mut s = String::from(REQUESTS_CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{:.0},{},{},{},{}\n",
            r.id,
            r.device,
            framework,
            r.prompt_len,
            r.chunk_size,
            r.ttft_ns,
            r.mean_tbt_ns(),
            r.p99_tbt_ns(),
            r.output_len,
            r.prefill_compliant,
            r.decode_compliant
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::LogRecord;

    fn rec(kind: LogKind, t: Nanos, seq: u64, detail: &str) -> LogRecord {
        LogRecord {
            time_ns: t,
            seq,
            kind,
            request: Some(0),
            detail: detail.into(),
        }
    }

    fn record(prompt_len: u64, ttft_ns: Nanos, tbt_ns: Vec<Nanos>) -> RequestRecord {
        RequestRecord {
            id: 0,
            device: 0,
            prompt_len,
            chunk_size: prompt_len,
            arrival_ns: 0,
            ttft_ns,
            output_len: tbt_ns.len() as u64 + 1,
            tbt_ns,
            prefill_compliant: false,
            decode_compliant: false,
        }
    }

    #[test]
    fn ttft_and_tbt_from_log() {
        let log = EventLog {
            records: vec![
                rec(LogKind::Arrival, 0, 0, "device=2 prompt_len=16"),
                rec(LogKind::Token, 1_000_000_000, 1, "index=0 token=4"),
                rec(LogKind::Token, 1_500_000_000, 2, "index=1 token=4"),
                rec(LogKind::Token, 2_100_000_000, 3, "index=2 token=4"),
                rec(LogKind::RequestComplete, 2_100_000_000, 4, "output_len=3 chunk_size=8"),
            ],
        };
        let r = &compute_request_metrics(&log).unwrap()[0];
        assert_eq!(r.ttft_ns, 1_000_000_000);
        assert_eq!(r.tbt_ns, vec![500_000_000, 600_000_000]);
        assert_eq!((r.device, r.prompt_len, r.chunk_size), (2, 16, 8));
        assert_eq!(r.last_emission_ns(), 2_100_000_000);
    }

    #[test]
    fn single_token_has_no_gaps() {
        let log = EventLog {
            records: vec![
                rec(LogKind::Arrival, 0, 0, "device=0 prompt_len=1"),
                rec(LogKind::Token, 10, 1, "index=0 token=1"),
                rec(LogKind::RequestComplete, 10, 2, "output_len=1 chunk_size=1"),
            ],
        };
        assert!(compute_request_metrics(&log).unwrap()[0].tbt_ns.is_empty());
    }

    #[test]
    fn malformed_logs_rejected() {
        let out_of_order = EventLog {
            records: vec![
                rec(LogKind::Arrival, 0, 0, "device=0 prompt_len=1"),
                rec(LogKind::Token, 10, 1, "index=0 token=1"),
                rec(LogKind::Token, 5, 2, "index=1 token=1"),
                rec(LogKind::RequestComplete, 10, 3, "output_len=2 chunk_size=1"),
            ],
        };
        assert!(compute_request_metrics(&out_of_order).is_err());
        let incomplete = EventLog {
            records: vec![rec(LogKind::Arrival, 0, 0, "device=0 prompt_len=1")],
        };
        assert!(compute_request_metrics(&incomplete).is_err());
    }

    #[test]
    fn prefill_budget_scales_with_prompt() {
        assert!(prefill_ok(&record(256, 550_000_000, vec![]), 0.3));
        assert!(!prefill_ok(&record(256, 650_000_000, vec![]), 0.3));
        assert!(prefill_ok(&record(256, 600_000_000, vec![]), 0.3));
    }

    #[test]
    fn decode_boundary_inclusive() {
        assert!(decode_ok(&record(8, 1, vec![30_000_000; 25]), 0.3));
        let mut gaps = vec![30_000_000; 25];
        gaps[12] += 1;
        assert!(!decode_ok(&record(8, 1, gaps), 0.3));
        // short outputs use the scaled total
        assert!(decode_ok(&record(8, 1, vec![30_000_000; 4]), 0.3));
        assert!(!decode_ok(&record(8, 1, vec![30_000_001; 4]), 0.3));
    }

    #[test]
    fn empty_records_are_vacuously_compliant() {
        let r = sla_compliance(&[], &SlaConfig::default());
        assert_eq!((r.prefill, r.decode, r.vacuous), (1.0, 1.0, true));
    }

    #[test]
    fn cdf_steps() {
        let c = cdf(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(c, vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]);
        assert_eq!(cdf(&[7.0]).unwrap(), vec![(7.0, 1.0)]);
        assert_eq!(cdf(&[1.0, 2.0, 2.0, 3.0]).unwrap()[1], (2.0, 0.75));
        assert!(cdf(&[]).is_err());
    }

    #[test]
    fn summary_percentiles() {
        let recs: Vec<RequestRecord> = (1..=10).map(|i| record(128, i * 100, vec![10, 20])).collect();
        let s = Summary::from_records(&recs, &SlaConfig::default(), &[2, 3]);
        assert_eq!(s.median_ttft_ns, 500);
        assert_eq!(s.p90_ttft_ns, 900);
        assert_eq!(s.mean_ttft_ns, 550.0);
        assert_eq!(s.mean_tbt_ns, 15.0);
        assert_eq!(s.mean_accept_len, 2.5);
        assert_eq!(s.short_outputs, 10);
    }

    #[test]
    fn csv_layout() {
        let csv = requests_csv(&[record(10, 5, vec![2, 4])], "hat");
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), REQUESTS_CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "0,0,hat,10,10,5,3,4,3,false,false");
    }
}
