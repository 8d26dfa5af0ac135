use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::fusion::FusionError;
use crate::grtd::GrtdError;
use crate::ingest::IngestError;
use crate::lbtc::LbtcError;
use crate::rank::RankError;
use crate::sampling::SamplingError;
use crate::synth::SynthError;

/// Process exit codes, one per error class.
pub mod exit {
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const INPUT: i32 = 4;
    pub const SCORING: i32 = 5;
    pub const FUSION: i32 = 6;
    pub const EVALUATION: i32 = 7;
    pub const SYNTH: i32 = 8;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cli: {0}")]
    Usage(String),
    #[error("io: {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("io_ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("sampling: model {model:?}: {source}")]
    Sampling {
        model: String,
        #[source]
        source: SamplingError,
    },
    #[error("grtd: model {model:?} case {case}: {source}")]
    Grtd {
        model: String,
        case: usize,
        #[source]
        source: GrtdError,
    },
    #[error("lbtc: model {model:?}: {source}")]
    Lbtc {
        model: String,
        #[source]
        source: LbtcError,
    },
    #[error("fusion: {0}")]
    Fusion(#[from] FusionError),
    #[error("rank_eval: {0}")]
    Rank(#[from] RankError),
    #[error("synth_zoo: {0}")]
    Synth(#[from] SynthError),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => exit::USAGE,
            Error::Io { .. } => exit::IO,
            Error::Ingest(IngestError::Io { .. } | IngestError::MissingFile(_)) => exit::IO,
            Error::Ingest(_) => exit::INPUT,
            Error::Sampling { .. } | Error::Grtd { .. } | Error::Lbtc { .. } => exit::SCORING,
            Error::Fusion(_) => exit::FUSION,
            Error::Rank(_) => exit::EVALUATION,
            Error::Synth(SynthError::Io(IngestError::Io { .. })) => exit::IO,
            Error::Synth(_) => exit::SYNTH,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
