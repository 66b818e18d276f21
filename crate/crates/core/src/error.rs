use std::path::PathBuf;

use thiserror::Error;

use crate::model::{BlockId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown microservice {0}")]
    UnknownBlock(BlockId),

    #[error("unservable microservice {0}: no instances deployed")]
    Unservable(BlockId),

    #[error("application {0} has no request arrivals")]
    NoArrivals(usize),

    #[error("enumeration infeasible: {paths} processing paths exceed the cap of {cap}")]
    EnumerationInfeasible { paths: u128, cap: u128 },

    #[error("undersized cluster: {0}")]
    UndersizedCluster(String),

    #[error("search space of {states} states exceeds the cap of {cap}")]
    SearchSpaceTooLarge { states: u128, cap: u128 },

    #[error("invalid scenario: {}", join_violations(.0))]
    InvalidScenario(Vec<Violation>),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("scheme does not match scenario: {0}")]
    SchemeShape(String),

    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
