use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid map configuration: {0}")]
    Config(String),

    /// A world coordinate that does not discretize into the 16-bit key cube.
    #[error("coordinate out of range: {0}")]
    Range(String),

    /// A PE ran out of rows in its banks.
    #[error("PE {pe}: bank capacity of {capacity} blocks exceeded")]
    CapacityExceeded { pe: u8, capacity: u32 },

    /// Memory state that can only arise from a bug (bad free, read of an
    /// unallocated block).
    #[error("PE memory corruption: {0}")]
    Corruption(String),

    /// An update routed to a PE that does not own its first-level branch.
    #[error("update for branch {branch} dispatched to PE {pe}")]
    Dispatch { pe: u8, branch: u8 },

    /// Two reports produced from different workloads.
    #[error("reports describe different workloads ({0:016x} vs {1:016x})")]
    WorkloadMismatch(u64, u64),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("bad map dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for errors caused by the environment rather than by the input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
