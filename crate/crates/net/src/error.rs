use std::net::SocketAddr;
use std::time::Duration;

use fedround_core::RejectReason;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] fedround_core::Error),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("{url} unreachable after {attempts} attempts: {msg}")]
    Unreachable {
        url: String,
        attempts: u32,
        msg: String,
    },
    #[error("unexpected response from {url}: {msg}")]
    Protocol { url: String, msg: String },
    #[error("server rejected {client} in round {round}: {reason}")]
    Rejected {
        client: String,
        round: u64,
        reason: RejectReason,
    },
    #[error("round {round} made no progress for {waited:?}; still waiting on {silent:?}")]
    Stalled {
        round: u64,
        waited: Duration,
        silent: Vec<String>,
    },
    #[error("client {client} failed: {source}")]
    ClientFailed { client: String, source: Box<Error> },
    #[error("client {0} panicked")]
    ClientPanicked(String),
}

impl Error {
    /// Round at which the failure surfaced, when known.
    pub fn round(&self) -> Option<u64> {
        match self {
            Error::Core(e) => e.round(),
            Error::Rejected { round, .. } | Error::Stalled { round, .. } => Some(*round),
            Error::ClientFailed { source, .. } => source.round(),
            _ => None,
        }
    }
}
