//! Recording and replay of dynamically scheduled chunks.
//!
//! During the forward sweep each thread observes the counters it executes.
//! A jump in the counter sequence marks a chunk boundary. The bounds of a
//! chunk are pushed once the chunk is over, on top of whatever its
//! iterations pushed, so the tape holds
//! `body1 s1 e1 body2 s2 e2 ... bodyk sk ek k`. The backward sweep pops `k`,
//! then for each chunk, newest first, pops `(end, start)` and runs the chunk
//! backwards, which pops that chunk's own values.

use crate::error::RuntimeError;
use crate::tape::{Result, Tape};

/// Per-thread recorder state for one loop instance.
#[derive(Clone, Debug, Default)]
pub struct ChunkLog {
    armed: bool,
    start: i64,
    prev: i64,
    chunks: i64,
}

impl ChunkLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_recording(&self) -> bool {
        self.armed
    }

    pub fn init(&mut self) {
        self.armed = true;
        self.chunks = 0;
    }

    pub fn record(&mut self, tape: &mut Tape, counter: i64, stride: i64) -> Result<()> {
        if !self.armed {
            return Err(RuntimeError::RecordBeforeInit { tid: tape.tid() });
        }
        if self.chunks == 0 {
            self.start = counter;
            self.chunks = 1;
        } else if counter.wrapping_sub(self.prev) != stride {
            tape.push_int(self.start)?;
            tape.push_int(self.prev)?;
            self.start = counter;
            self.chunks += 1;
        }
        self.prev = counter;
        Ok(())
    }

    pub fn finalize(&mut self, tape: &mut Tape) -> Result<()> {
        if !self.armed {
            return Err(RuntimeError::FinalizeBeforeInit { tid: tape.tid() });
        }
        if self.chunks > 0 {
            tape.push_int(self.start)?;
            tape.push_int(self.prev)?;
        }
        tape.push_int(self.chunks)?;
        self.armed = false;
        Ok(())
    }
}

/// Pops one recorded loop instance and returns its chunks as
/// `(chunk_start, chunk_end)`, newest first.
pub fn dynamic_replay(tape: &mut Tape) -> Result<Vec<(i64, i64)>> {
    let n = tape.pop_int()?;
    let mut out = Vec::with_capacity(n.max(0) as usize);
    for _ in 0..n {
        let end = tape.pop_int()?;
        let start = tape.pop_int()?;
        out.push((start, end));
    }
    Ok(out)
}
