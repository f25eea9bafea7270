//! Trace file I/O.
//!
//! Line-delimited JSON: the first line is a header record
//! `{"format":"tinykv-trace","version":1,"d":<int>,"rng":"splitmix64"}`,
//! every following line one decode event
//! `{"q":[...],"k":[...],"v":[...]}` with an optional `"probs"` array.
//! JSON floats round-trip `f64` exactly, so read(write(t)) == t bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::rng::RNG_ALGORITHM;
use super::{Trace, TraceEvent};

pub const TRACE_FORMAT: &str = "tinykv-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TraceHeader {
    format: String,
    version: u32,
    d: usize,
    /// Identifier of the generator the artifact derives traces with.
    /// Informational on read.
    #[serde(skip_serializing_if = "Option::is_none")]
    rng: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventLine {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probs: Option<Vec<f64>>,
}

pub fn write_trace(trace: &Trace, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_trace_to(trace, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_trace_to<W: Write>(trace: &Trace, w: &mut W) -> Result<()> {
    let header = TraceHeader {
        format: TRACE_FORMAT.to_string(),
        version: TRACE_VERSION,
        d: trace.d,
        rng: Some(RNG_ALGORITHM.to_string()),
    };
    serde_json::to_writer(&mut *w, &header)?;
    w.write_all(b"\n")?;
    for event in &trace.events {
        let line = EventLine {
            q: event.q.clone(),
            k: event.k.clone(),
            v: event.v.clone(),
            probs: event.probs.clone(),
        };
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    let file = File::open(path)?;
    read_trace_from(BufReader::new(file))
}

pub fn read_trace_from<R: BufRead>(r: R) -> Result<Trace> {
    let mut lines = r.lines().enumerate();

    let header: TraceHeader = match lines.next() {
        None => {
            return Err(Error::TraceFormat {
                line: 1,
                msg: "missing header".into(),
            })
        }
        Some((_, line)) => {
            let line = line?;
            serde_json::from_str(&line).map_err(|e| Error::TraceFormat {
                line: 1,
                msg: format!("invalid header: {e}"),
            })?
        }
    };
    if header.format != TRACE_FORMAT {
        return Err(Error::TraceFormat {
            line: 1,
            msg: format!("unknown format {:?}", header.format),
        });
    }
    if header.version != TRACE_VERSION {
        return Err(Error::TraceFormat {
            line: 1,
            msg: format!("unsupported version {}", header.version),
        });
    }
    if header.d == 0 {
        return Err(Error::TraceFormat {
            line: 1,
            msg: "d must be >= 1".into(),
        });
    }

    let mut events = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EventLine = serde_json::from_str(&line).map_err(|e| Error::TraceFormat {
            line: line_no,
            msg: format!("invalid event: {e}"),
        })?;
        for (name, vec) in [("q", &parsed.q), ("k", &parsed.k), ("v", &parsed.v)] {
            if vec.len() != header.d {
                return Err(Error::TraceFormat {
                    line: line_no,
                    msg: format!(
                        "{name} has {} elements, header says d={}",
                        vec.len(),
                        header.d
                    ),
                });
            }
        }
        if let Some(probs) = &parsed.probs {
            let sum: f64 = probs.iter().sum();
            if probs.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::TraceFormat {
                    line: line_no,
                    msg: format!("probs not normalized (sum = {sum})"),
                });
            }
        }
        events.push(TraceEvent {
            q: parsed.q,
            k: parsed.k,
            v: parsed.v,
            probs: parsed.probs,
        });
    }

    Ok(Trace {
        d: header.d,
        events,
    })
}
