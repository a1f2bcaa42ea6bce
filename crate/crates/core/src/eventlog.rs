//! Simulation trace. One record per processed event, serialized as
//! tab-separated lines `time_ns seq kind request detail`.

use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::time::Nanos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogKind {
    Arrival,
    LocalComputeDone,
    UploadDone,
    BatchFormed,
    StageDone,
    DownloadDone,
    DraftStepDone,
    Token,
    RequestComplete,
}

impl LogKind {
    const ALL: [LogKind; 9] = [
        LogKind::Arrival,
        LogKind::LocalComputeDone,
        LogKind::UploadDone,
        LogKind::BatchFormed,
        LogKind::StageDone,
        LogKind::DownloadDone,
        LogKind::DraftStepDone,
        LogKind::Token,
        LogKind::RequestComplete,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LogKind::Arrival => "arrival",
            LogKind::LocalComputeDone => "local-compute-done",
            LogKind::UploadDone => "upload-done",
            LogKind::BatchFormed => "batch-formed",
            LogKind::StageDone => "stage-done",
            LogKind::DownloadDone => "download-done",
            LogKind::DraftStepDone => "draft-step-done",
            LogKind::Token => "token",
            LogKind::RequestComplete => "request-complete",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub time_ns: Nanos,
    pub seq: u64,
    pub kind: LogKind,
    pub request: Option<u64>,
    /// Space-separated `key=value` pairs.
    pub detail: String,
}

impl LogRecord {
    /// Integer value of `key` in the detail field.
    pub fn field(&self, key: &str) -> Option<u64> {
        self.detail.split(' ').find_map(|kv| {
            let (k, v) = kv.split_once('=')?;
            if k == key {
                v.parse().ok()
            } else {
                None
            }
        })
    }
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t", self.time_ns, self.seq, self.kind.name())?;
        match self.request {
            Some(r) => write!(f, "{r}")?,
            None => f.write_str("-")?,
        }
        write!(f, "\t{}", self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    pub records: Vec<LogRecord>,
}

impl EventLog {
    pub fn push(&mut self, rec: LogRecord) {
        self.records.push(rec);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.records.len() * 48);
        for r in &self.records {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }

    /// Hex SHA-256 of [`EventLog::to_text`].
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.records {
            h.update(r.to_string().as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::EventLog(format!("line {}: {what}", i + 1));
            let mut parts = line.splitn(5, '\t');
            let mut next = |what: &str| parts.next().ok_or_else(|| bad(what));
            let time_ns = next("time")?.parse().map_err(|_| bad("time"))?;
            let seq = next("seq")?.parse().map_err(|_| bad("seq"))?;
            let kind = LogKind::parse(next("kind")?).ok_or_else(|| bad("kind"))?;
            let request = match next("request")? {
                "-" => None,
                r => Some(r.parse().map_err(|_| bad("request"))?),
            };
            let detail = next("detail")?.to_string();
            records.push(LogRecord {
                time_ns,
                seq,
                kind,
                request,
                detail,
            });
        }
        Ok(Self { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut log = EventLog::default();
        log.push(LogRecord {
            time_ns: 5,
            seq: 0,
            kind: LogKind::Arrival,
            request: Some(3),
            detail: "device=1 prompt_len=20".into(),
        });
        log.push(LogRecord {
            time_ns: 9,
            seq: 1,
            kind: LogKind::StageDone,
            request: None,
            detail: "batch=0 stage=0".into(),
        });
        let text = log.to_text();
        assert_eq!(text.lines().next().unwrap(), "5\t0\tarrival\t3\tdevice=1 prompt_len=20");
        let back = EventLog::parse(&text).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.digest(), log.digest());
        assert_eq!(back.records[0].field("prompt_len"), Some(20));
        assert_eq!(back.records[0].field("missing"), None);
        assert!(EventLog::parse("1\tx\tarrival\t-\t").is_err());
    }
}
