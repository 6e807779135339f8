//! Error type shared across the crate.

use chrono::NaiveDate;
use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // -- ingest --
    #[error("dataset file not found: {0}")]
    MissingFile(PathBuf),
    #[error("missing `date` column in {0}")]
    MissingDateColumn(PathBuf),
    #[error("unparseable date {text:?} on row {row}")]
    BadDate { row: usize, text: String },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("dates not strictly increasing at {0}")]
    NonMonotoneDates(NaiveDate),
    #[error("calendar gap before {0} (dates must be contiguous daily)")]
    DateGap(NaiveDate),
    #[error("column {name} has {got} rows, expected {expected}")]
    ColumnLength {
        name: String,
        got: usize,
        expected: usize,
    },
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("column {0} appears in both fill policy sets")]
    FillPolicyOverlap(String),
    #[error("column {0} has missing values but no fill rule")]
    UnfilledColumn(String),
    #[error("column {0} is entirely missing and cannot be backfilled")]
    AllMissing(String),
    #[error("split boundary {0} outside the frame's date range")]
    BoundaryOutOfRange(NaiveDate),
    #[error("split boundaries not strictly ordered: {train_end} / {val_end} / {test_end}")]
    BoundariesUnordered {
        train_end: NaiveDate,
        val_end: NaiveDate,
        test_end: NaiveDate,
    },
    #[error("split segment ({0}, {1}] contains no rows")]
    EmptySplit(NaiveDate, NaiveDate),

    // -- features --
    #[error("non-positive price {value} at index {index}")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("series too short: need {need} values, got {got}")]
    SeriesTooShort { need: usize, got: usize },
    #[error("volatility window must be at least 2 (got {0})")]
    WindowTooSmall(usize),
    #[error("{method} transform undefined for value {value} at index {index}")]
    TransformDomain {
        method: &'static str,
        index: usize,
        value: f64,
    },
    #[error("candle violates high >= low > 0 (o {open}, h {high}, l {low}, c {close})")]
    InvalidCandle {
        open: f64,
        high: f64,
        low: f64,
        close: f64,
    },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    // -- model / train --
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation in layer {layer} ({context})")]
    NonFiniteActivation { layer: usize, context: String },
    #[error("weights are missing tensor {0}")]
    MissingTensor(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("frame has {rows} rows, need at least {need} for seq_len {seq_len}")]
    FrameTooShort {
        rows: usize,
        need: usize,
        seq_len: usize,
    },
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("hyperparameter grid has an empty axis")]
    EmptyGrid,
    #[error("grid point {coords}: {source}")]
    GridPoint {
        coords: String,
        #[source]
        source: Box<Error>,
    },

    // -- eval --
    #[error("zero variance input to correlation")]
    ZeroVariance,

    // -- io --
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
