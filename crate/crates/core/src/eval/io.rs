//! JSON-lines event logs: one `{"t": float, "u": int, "w": [int, ...]}`
//! object per line, time-ordered. Token ids are pre-tokenized integers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Event;

#[derive(Debug, Serialize, Deserialize)]
struct Line {
    t: f64,
    u: usize,
    #[serde(default)]
    w: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Added to tied timestamps to keep the stream strictly increasing.
    pub tie_jitter: f64,
    /// Accept empty documents.
    pub times_only: bool,
    pub num_users: Option<usize>,
    pub vocab_size: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            tie_jitter: 1e-9,
            times_only: false,
            num_users: None,
            vocab_size: None,
        }
    }
}

pub fn load_events(path: &Path, opts: &LoadOptions) -> Result<Vec<Event>> {
    read_events(File::open(path)?, opts)
}

pub fn read_events<R: Read>(reader: R, opts: &LoadOptions) -> Result<Vec<Event>> {
    let mut events: Vec<Event> = Vec::new();
    let mut last_raw = f64::NEG_INFINITY;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let fail = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        if !(parsed.t.is_finite() && parsed.t >= 0.0) {
            return Err(fail(format!(
                "time {} must be finite and non-negative",
                parsed.t
            )));
        }
        if let Some(users) = opts.num_users {
            if parsed.u >= users {
                return Err(fail(format!(
                    "user {} outside population of size {users}",
                    parsed.u
                )));
            }
        }
        if let Some(vocab) = opts.vocab_size {
            if let Some(w) = parsed.w.iter().find(|w| **w as usize >= vocab) {
                return Err(fail(format!(
                    "token {w} outside vocabulary of size {vocab}"
                )));
            }
        }
        if parsed.w.is_empty() && !opts.times_only {
            return Err(fail("empty document outside times-only mode".into()));
        }
        let mut t = parsed.t;
        if let Some(prev) = events.last() {
            if t < last_raw - opts.tie_jitter {
                return Err(fail(format!("time {t} decreases from {last_raw}")));
            }
            if t <= prev.time {
                t = prev.time + opts.tie_jitter;
            }
        }
        last_raw = parsed.t;
        events.push(Event::new(t, parsed.u, parsed.w));
    }
    Ok(events)
}

pub fn event_line(e: &Event) -> Result<String> {
    Ok(serde_json::to_string(&Line {
        t: e.time,
        u: e.user,
        w: e.doc.tokens().collect(),
    })?)
}

pub fn write_events<W: Write>(writer: W, events: &[Event]) -> Result<()> {
    let mut out = BufWriter::new(writer);
    for e in events {
        out.write_all(event_line(e)?.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_events(path: &Path, events: &[Event]) -> Result<()> {
    write_events(File::create(path)?, events)
}

/// Optional sidecar vocabulary: one JSON object mapping token id to string.
pub fn load_vocab(path: &Path) -> Result<BTreeMap<u32, String>> {
    let raw: BTreeMap<String, String> = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<u32>()
                .map(|id| (id, v))
                .map_err(|e| Error::InvalidConfig(format!("vocabulary key {k:?}: {e}")))
        })
        .collect()
}
