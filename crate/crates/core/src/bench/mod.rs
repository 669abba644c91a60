//! Benchmark harness: synthetic corpus, strategy x compressor sweeps, CF
//! statistics and CSV reports.

mod experiment;
mod report;
mod stats;
pub mod synth;

use std::path::Path;

use thiserror::Error;

use crate::archive::ArchiveError;
use crate::features::FeatureError;
use crate::pnm::PnmError;
use crate::similarity::SimilarityError;

pub use experiment::{run_experiment, run_experiment_with, Corpus, ExperimentConfig, Extractor};
pub use report::{csv_report, natural_cmp, CfReport, SmallClusterFlag, StatsRow, CSV_HEADER};
pub use stats::{stats, GroupStats};
pub use synth::{synth_corpus, Perturbation, SynthCorpus, SynthImage, SynthParams};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("statistics need at least one value")]
    EmptyInput,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("experiment config: {0}")]
    Config(String),
    #[error("no data for image `{0}`")]
    MissingImage(String),
    #[error("image `{id}`: {source}")]
    Pnm {
        id: String,
        #[source]
        source: PnmError,
    },
    #[error("image `{id}`: {source}")]
    Feature {
        id: String,
        #[source]
        source: FeatureError,
    },
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl BenchError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
