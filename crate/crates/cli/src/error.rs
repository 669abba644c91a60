use std::fmt;

use simpack_core::archive::ArchiveError;
use simpack_core::bench::BenchError;
use simpack_core::longrange::LrError;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_EXTERNAL: u8 = 3;

/// An error paired with the process exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_DATA,
            error: error.into(),
        }
    }

    pub fn context(mut self, ctx: impl fmt::Display + Send + Sync + 'static) -> Self {
        self.error = self.error.context(ctx);
        self
    }
}

fn lr_code(e: &LrError) -> u8 {
    match e {
        LrError::ExternalBackendFailed { .. } | LrError::ExternalBackendRequired => EXIT_EXTERNAL,
        LrError::InvalidParams(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

impl From<LrError> for Failure {
    fn from(e: LrError) -> Self {
        Self {
            code: lr_code(&e),
            error: e.into(),
        }
    }
}

impl From<ArchiveError> for Failure {
    fn from(e: ArchiveError) -> Self {
        let code = match &e {
            ArchiveError::Backend(inner) => lr_code(inner),
            _ => EXIT_DATA,
        };
        Self { code, error: e.into() }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        let code = match &e {
            BenchError::Archive(ArchiveError::Backend(inner)) => lr_code(inner),
            BenchError::Config(_) | BenchError::InvalidParams(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Self { code, error: e.into() }
    }
}

impl From<simpack_core::similarity::SimilarityError> for Failure {
    fn from(e: simpack_core::similarity::SimilarityError) -> Self {
        Self::data(e)
    }
}
