//! Event traces and their JSONL encoding.

use std::fmt::Debug;
use std::io::{self, Write};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::protocols::Decision;

/// A protocol message as seen by engines, schedulers and traces.
///
/// Messages serialize as tagged records, `{"kind": "...", ...fields}`.
pub trait Payload: Clone + Debug + Serialize {
    fn kind(&self) -> &'static str;

    /// First 8 bytes of the SHA-256 of the JSON encoding, hex.
    fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("payloads serialize");
        Sha256::digest(&bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Wake,
    Send,
    Deliver,
    Decide,
}

/// One trace record; `port` is the local port of `node`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub kind: EventKind,
    pub node: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub port: Option<usize>,
    /// Message sequence number, shared by a send and its delivery.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub msg: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload: Option<&'static str>,
    #[serde(rename = "payload-digest", skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
}

impl TraceEvent {
    pub fn wake(node: usize) -> Self {
        Self { kind: EventKind::Wake, node, port: None, msg: None, payload: None, digest: None, decision: None }
    }

    pub fn decide(node: usize, decision: Decision) -> Self {
        Self { decision: Some(decision), kind: EventKind::Decide, ..Self::wake(node) }
    }

    pub fn message<P: Payload>(kind: EventKind, node: usize, port: usize, msg: u64, payload: &P) -> Self {
        Self {
            kind,
            node,
            port: Some(port),
            msg: Some(msg),
            payload: Some(payload.kind()),
            digest: Some(payload.digest()),
            decision: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncRecord {
    pub round: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsyncRecord {
    pub time: f64,
    /// Exact fixed-point timestamp; see [`crate::event::Time`].
    pub ticks: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, records: &[T]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
