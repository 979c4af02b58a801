use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("frequency {freq} Hz violates the Nyquist limit {nyquist} Hz")]
    Nyquist { freq: f64, nyquist: f64 },

    #[error("insufficient samples: need at least {required}, got {available}")]
    InsufficientSamples { required: usize, available: usize },

    #[error("channel `{0}` has no matching x/y partner")]
    UnpairedChannel(String),

    #[error(
        "unstable Butterworth design (center {center} Hz, bandwidth {bandwidth} Hz, order {order}); \
         use a wider band or a lower order"
    )]
    UnstableFilter { center: f64, bandwidth: f64, order: usize },

    #[error("non-finite arithmetic at filter step {step}")]
    NonFinite { step: usize },

    #[error("duplicate harmonic frequency {0} Hz makes the oscillator bank unobservable")]
    DuplicateHarmonic(f64),

    #[error("no harmonic excitation detected")]
    NoHarmonicExcitation,

    #[error("harmonics unresolved")]
    HarmonicsUnresolved,

    #[error("metadata mismatch on `{field}`: expected {expected}, got {found}")]
    MetadataMismatch {
        field: &'static str,
        expected: String,
        found: String,
    },

    #[error("order {order} exceeds numerical rank {rank}")]
    OrderExceedsRank { order: usize, rank: usize },

    #[error("rank-deficient least-squares problem (condition estimate {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("no persistent modes")]
    NoPersistentModes,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end, one per error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::MetadataMismatch { .. } => 2,
            Error::Io { .. } | Error::Format { .. } | Error::Csv(_) | Error::Json(_) => 3,
            Error::Nyquist { .. }
            | Error::InsufficientSamples { .. }
            | Error::UnpairedChannel(_) => 4,
            Error::NoHarmonicExcitation | Error::HarmonicsUnresolved => 5,
            Error::UnstableFilter { .. }
            | Error::NonFinite { .. }
            | Error::DuplicateHarmonic(_)
            | Error::OrderExceedsRank { .. }
            | Error::RankDeficient { .. } => 6,
            Error::NoPersistentModes => 7,
        }
    }
}
