use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("tape underflow on thread {tid}: wanted {wanted} bytes, depth is {depth}")]
    Underflow {
        tid: usize,
        depth: usize,
        wanted: usize,
    },

    #[error("restore_top on thread {tid} after a push that followed save_top")]
    RestoreAfterPush { tid: usize },

    #[error("snapshot taken on thread {taken_on} restored on thread {tid}")]
    ForeignSnapshot { tid: usize, taken_on: usize },

    #[error("tape of thread {tid} used from another OS thread")]
    CrossThread { tid: usize },

    #[error("record_dynamic_schedule on thread {tid} without init_dynamic_schedule")]
    RecordBeforeInit { tid: usize },

    #[error("finalize_dynamic_schedule on thread {tid} without init_dynamic_schedule")]
    FinalizeBeforeInit { tid: usize },

    #[error("thread count must be positive, got {0}")]
    BadThreadCount(i64),

    #[error("thread id {tid} out of range for {nthreads} threads")]
    BadThreadId { tid: i64, nthreads: i64 },

    #[error("loop stride must be nonzero")]
    ZeroStride,
}
