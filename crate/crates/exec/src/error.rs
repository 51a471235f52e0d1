use adomp_runtime::RuntimeError;
use thiserror::Error;

/// A failure raised while evaluating one statement.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Fault {
    #[error("index {index} out of bounds for `{var}` of extent {extent}")]
    OutOfBounds {
        var: String,
        index: i64,
        extent: usize,
    },

    #[error("integer division by zero")]
    IntDivZero,

    #[error(transparent)]
    Runtime(#[from] RuntimeError),

    #[error("nested parallel region")]
    NestedParallelism,

    #[error("another thread of the team failed")]
    TeamAborted,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("cannot run program: {0}")]
    Compile(String),

    #[error("missing input `{0}`")]
    MissingInput(String),

    #[error("bad input `{name}`: {reason}")]
    BadInput { name: String, reason: String },

    #[error("thread count must be at least 1")]
    NoThreads,

    #[error("runtime fault on thread {tid} in `{site}`: {fault}")]
    Fault {
        tid: usize,
        site: String,
        fault: Fault,
    },

    #[error("thread {tid} finished with {depth} bytes left on its tape")]
    TapeResidue { tid: usize, depth: usize },

    #[error("thread {tid} pushed {pushes} values but popped {pops}")]
    Unpaired { tid: usize, pushes: u64, pops: u64 },
}
