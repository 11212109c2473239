//! Slot-by-slot traces for drawing contention diagrams.
//!
//! One CSV record per station per slot, stations numbered from 0:
//!
//! ```text
//! slot,station,b,s,tx,outcome
//! 0,0,3,0,0,empty
//! ```
//!
//! `b` and `s` are the backoff counter and stage at the start of the slot,
//! `tx` the number of packets the station sends in it (0 when silent) and
//! `outcome` the slot's result: `empty`, `success` or `collision`.

use std::io::Write;
use std::path::Path;

use ecasim_core::{SlotObserver, SlotOutcome, StationState, World};
use serde::Serialize;

use crate::sweep::SweepError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct TraceRecord {
    pub slot: u64,
    pub station: usize,
    pub b: u32,
    pub s: u32,
    pub tx: u32,
    pub outcome: String,
}

/// Observer writing trace records. Write failures are kept and reported
/// by [`TraceWriter::finish`].
pub struct TraceWriter<W: Write> {
    writer: csv::Writer<W>,
    error: Option<csv::Error>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            writer: csv::Writer::from_writer(out),
            error: None,
        }
    }

    pub fn finish(mut self) -> Result<W, SweepError> {
        if let Some(source) = self.error.take() {
            return Err(SweepError::Csv {
                context: "writing trace".into(),
                source,
            });
        }
        self.writer.flush().map_err(|source| SweepError::Io {
            context: "flushing trace".into(),
            source,
        })?;
        self.writer.into_inner().map_err(|e| SweepError::Io {
            context: "flushing trace".into(),
            source: e.into_error(),
        })
    }
}

impl<W: Write> SlotObserver for TraceWriter<W> {
    fn observe(&mut self, slot: u64, stations: &[StationState], outcome: &SlotOutcome) {
        if self.error.is_some() {
            return;
        }
        let tx = outcome.transmitters();
        for st in stations {
            let record = TraceRecord {
                slot,
                station: st.id.0,
                b: st.backoff,
                s: st.stage,
                tx: tx.iter().find(|t| t.station == st.id).map_or(0, |t| t.n_packets),
                outcome: outcome.label().to_string(),
            };
            if let Err(e) = self.writer.serialize(record) {
                self.error = Some(e);
                return;
            }
        }
    }
}

/// Run `slots` slots of `world`, writing the trace to `out`.
pub fn emit_trace_to<W: Write>(world: &mut World, slots: u64, out: W) -> Result<W, SweepError> {
    let mut writer = TraceWriter::new(out);
    world.run_observed(slots, &mut writer).map_err(|source| SweepError::Engine {
        point: "trace".into(),
        replication: 0,
        source,
    })?;
    writer.finish()
}

/// Run `slots` slots of `world`, writing the trace to the file at `path`.
pub fn emit_trace(world: &mut World, slots: u64, path: &Path) -> Result<(), SweepError> {
    let file = std::fs::File::create(path).map_err(|source| SweepError::Io {
        context: format!("creating {}", path.display()),
        source,
    })?;
    emit_trace_to(world, slots, std::io::BufWriter::new(file))?;
    Ok(())
}

/// Parse a trace back into records.
pub fn read_trace<R: std::io::Read>(input: R) -> Result<Vec<TraceRecord>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}
