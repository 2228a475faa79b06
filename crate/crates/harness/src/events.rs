//! Newline-delimited JSON event log.
//!
//! Field order is fixed by declaration order so logs diff cleanly. Messages
//! carry designs, densities, weights, θ vectors or booleans; responses only
//! ever appear in `trial` events, which stay with the owning agent.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    CandidateDesign,
    SharedDesign,
    Density,
    Weights,
    Theta,
    ComparatorBool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Header {
        schema_version: u32,
        framework: String,
        agents: usize,
        rounds: usize,
        seed: u64,
        config_hash: String,
    },
    Trial {
        round: usize,
        agent: usize,
        design: Vec<f64>,
        response: f64,
        true_value: f64,
        simple_regret: f64,
        source: String,
    },
    Message {
        round: usize,
        sender: String,
        recipient: String,
        kind: PayloadKind,
        payload: Value,
        bytes: usize,
    },
    Note {
        round: usize,
        agent: Option<usize>,
        text: String,
    },
}

pub fn agent_name(k: usize) -> String {
    format!("agent:{k}")
}

pub const CLOUD: &str = "cloud";
pub const BROADCAST: &str = "broadcast";
pub const EXPERT: &str = "expert";

/// Wire size of a payload: 8 bytes per real number, 1 per boolean.
pub fn payload_bytes(v: &Value) -> usize {
    match v {
        Value::Null => 0,
        Value::Bool(_) => 1,
        Value::Number(_) => 8,
        Value::String(s) => s.len(),
        Value::Array(a) => a.iter().map(payload_bytes).sum(),
        Value::Object(m) => m.values().map(payload_bytes).sum(),
    }
}

pub fn message(round: usize, sender: String, recipient: String, kind: PayloadKind, payload: Value) -> Event {
    let bytes = payload_bytes(&payload);
    Event::Message { round, sender, recipient, kind, payload, bytes }
}

pub fn write_jsonl<W: Write>(events: &[Event], mut w: W) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn to_jsonl(events: &[Event]) -> String {
    let mut buf = Vec::new();
    write_jsonl(events, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn read_jsonl<R: BufRead>(r: R) -> io::Result<Vec<Event>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}
