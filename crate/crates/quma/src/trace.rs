//! JSON Lines execution trace with a deterministic field order, so identical
//! runs produce byte-identical traces.

use std::io::{self, Write};

use serde::Serialize;

use crate::adi::CodewordTrigger;
use crate::timing::{Fired, QueueKind};

/// One trace line.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    /// An event left its queue on a timing broadcast.
    Fire {
        cycle: u64,
        ns: f64,
        queue: QueueKind,
        label: u32,
        payload: String,
    },
    /// The micro-op unit raised a codeword trigger.
    Codeword { cycle: u64, ns: f64, unit: u8, codeword: u8 },
    /// A measurement pulse window opened.
    MpgWindow { cycle: u64, ns: f64, duration_cycles: u64 },
    /// A discrimination result was produced.
    Measurement { cycle: u64, ns: f64, qubits: String, level: f64, bit: u8 },
}

impl TraceRecord {
    pub fn fire(f: &Fired, cycle_ns: f64) -> Self {
        let payload = match &f.event.payload {
            crate::timing::EventPayload::Pulse { qubits, uop } => format!("Pulse {qubits}, {uop}"),
            crate::timing::EventPayload::Mpg { qubits, duration } => {
                format!("MPG {qubits}, {duration}")
            }
            crate::timing::EventPayload::Md { qubits, dest: Some(rd) } => {
                format!("MD {qubits}, {rd}")
            }
            crate::timing::EventPayload::Md { qubits, dest: None } => format!("MD {qubits}"),
        };
        TraceRecord::Fire {
            cycle: f.cycle,
            ns: f.cycle as f64 * cycle_ns,
            queue: f.kind,
            label: f.event.label,
            payload,
        }
    }

    pub fn codeword(t: &CodewordTrigger, cycle_ns: f64) -> Self {
        TraceRecord::Codeword {
            cycle: t.cycle,
            ns: t.cycle as f64 * cycle_ns,
            unit: t.unit,
            codeword: t.codeword,
        }
    }
}

/// Writes trace records as one JSON object per line.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        TraceWriter { out }
    }

    pub fn record(&mut self, record: &TraceRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
