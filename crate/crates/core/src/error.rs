use thiserror::Error;

use crate::arch::FieldKind;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: {what} ({x}, {y}) lies outside the {width}x{height} grid")]
    Bounds {
        line: usize,
        what: &'static str,
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },

    #[error("infeasible: {field} demand {demand} exceeds capacity {capacity}")]
    Infeasible {
        field: FieldKind,
        demand: f64,
        capacity: f64,
    },

    #[error("clock planning infeasible (best relaxed bound {bound})")]
    ClockInfeasible { bound: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("timing graph has a cycle through edge {from} -> {to}")]
    Cycle { from: String, to: String },

    #[error("carry chain `{chain}` of length {len} cannot fit in a layout of height {height}")]
    ChainTooTall {
        chain: String,
        len: usize,
        height: usize,
    },

    #[error("no free compatible site for instance `{inst}`")]
    NoSite { inst: String },

    #[error("optimizer diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}
