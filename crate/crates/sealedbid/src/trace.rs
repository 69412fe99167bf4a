//! Trace records and their CSV wire format.
//!
//! The format is one header line `block,timestamp,from,to,value_wei,kind`
//! followed by one row per transaction: addresses as 0x-hex, value as a
//! decimal integer string (safe for 256-bit magnitudes), kind as one of
//! `transfer`, `deploy`, `contract-call`. Gzip-compressed input is supported.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Address, Transaction, TxKind, Wei};

pub const TRACE_CSV_HEADER: &str = "block,timestamp,from,to,value_wei,kind";

/// One ledger transfer as consumed by the anonymity analyzer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub block: u64,
    pub timestamp: u64,
    pub from: Address,
    pub to: Address,
    pub value_wei: Wei,
    pub kind: TxKind,
}

impl From<&Transaction> for TraceRecord {
    fn from(tx: &Transaction) -> Self {
        TraceRecord {
            block: tx.block,
            timestamp: tx.timestamp,
            from: tx.from,
            to: tx.to,
            value_wei: tx.value,
            kind: tx.kind,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("trace io: {0}")]
    Io(#[from] io::Error),
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn write_trace_csv<W: Write>(out: &mut W, records: &[TraceRecord]) -> Result<(), TraceIoError> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.block, r.timestamp, r.from, r.to, r.value_wei, r.kind
        )?;
    }
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>, TraceIoError> {
    let reader = BufReader::new(input);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 && trimmed == TRACE_CSV_HEADER {
            continue;
        }
        records.push(parse_line(trimmed).map_err(|message| TraceIoError::Parse {
            line: idx + 1,
            message,
        })?);
    }
    Ok(records)
}

/// Reads a trace from a path, transparently decompressing `.gz` files.
pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRecord>, TraceIoError> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|ext| ext == "gz") {
        read_trace_csv(GzDecoder::new(file))
    } else {
        read_trace_csv(file)
    }
}

fn parse_line(line: &str) -> Result<TraceRecord, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 6 {
        return Err(format!("expected 6 fields, got {}", fields.len()));
    }
    Ok(TraceRecord {
        block: fields[0].parse().map_err(|e| format!("block: {e}"))?,
        timestamp: fields[1].parse().map_err(|e| format!("timestamp: {e}"))?,
        from: fields[2].parse().map_err(|e| format!("from: {e}"))?,
        to: fields[3].parse().map_err(|e| format!("to: {e}"))?,
        value_wei: fields[4].parse().map_err(|e| format!("value_wei: {e}"))?,
        kind: fields[5].parse().map_err(|e: String| format!("kind: {e}"))?,
    })
}
