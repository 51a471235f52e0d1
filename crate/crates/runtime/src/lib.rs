//! Support library for generated derivative code: a thread-private tape,
//! schedules that can be reversed, a recorder for dynamic schedules and an
//! atomic real increment.

pub mod atomic;
pub mod dynamic;
pub mod error;
pub mod schedule;
pub mod tape;

pub use atomic::{atomic_add, load_f64, store_f64};
pub use dynamic::{dynamic_replay, ChunkLog};
pub use error::RuntimeError;
pub use schedule::{static_block, static_chunks, static_schedule, trip_count};
pub use tape::{Snapshot, Tape, BLOCK_SIZE};
