//! File formats: binary frame files, trace CSV, JSON documents and the flat
//! key-value configuration.

mod config;
mod json;
mod scos;
mod trace_csv;

use thiserror::Error;

use crate::trace::TraceError;

pub use config::{AnalysisConfig, InvalidSetting, KeyValues, SimulationConfig};
pub use json::{read_json, write_json};
pub use scos::{
    open_scos, read_stream, write_stream, ScosHeader, ScosReader, ScosWriter, FORMAT_VERSION,
    HEADER_LEN, MAGIC,
};
pub use trace_csv::{read_trace_csv, write_trace_csv, TRACE_COLUMNS};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a frame file: magic bytes {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported frame file version {version}")]
    UnsupportedVersion { version: u16 },
    #[error("frame file header: {0}")]
    InvalidHeader(TraceError),
    #[error("file ends at byte {offset}, header declares {expected} bytes")]
    Truncated { offset: u64, expected: u64 },
    #[error("file is {found} bytes, header declares {expected}")]
    SizeMismatch { expected: u64, found: u64 },
    #[error("sample {value} at byte {offset} exceeds {bit_depth}-bit range")]
    SampleOutOfRange {
        offset: u64,
        value: u16,
        bit_depth: u16,
    },
    #[error("header declares {declared} frames, {written} written")]
    FrameCountMismatch { declared: u64, written: u64 },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("{path}: {message}")]
    Json { path: String, message: String },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        IoError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        }
    }
}
