//! Thread-private LIFO tape of byte-packed values.
//!
//! Values of every type share one byte stream stored in fixed 64 KiB
//! blocks. A value may straddle two neighbouring blocks. Blocks are kept
//! when the tape shrinks so that later sweeps reuse them.
//!
//! ```
//! use adomp_runtime::Tape;
//! let mut t = Tape::new(0);
//! t.push_f64(3.5).unwrap();
//! t.push_i32(7).unwrap();
//! assert_eq!(t.pop_i32().unwrap(), 7);
//! assert_eq!(t.pop_f64().unwrap(), 3.5);
//! assert!(t.is_empty());
//! ```

use crate::error::RuntimeError;
use std::thread::{self, ThreadId};

/// Payload bytes per block.
pub const BLOCK_SIZE: usize = 64 * 1024;

/// Marker stored in the 32-bit slot when an integer needed the 64-bit form.
const WIDE_INT: i32 = i32::MIN;

pub type Result<T> = std::result::Result<T, RuntimeError>;

/// Position of the tape top captured by [`Tape::save_top`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Snapshot {
    tid: usize,
    pos: usize,
    pushes: u64,
}

#[derive(Debug)]
pub struct Tape {
    tid: usize,
    /// Blocks in stack order; block `k` holds bytes `k*BLOCK_SIZE..`.
    blocks: Vec<Box<[u8]>>,
    pos: usize,
    high_water: usize,
    /// Number of pushes ever made, used to detect pushes between a save and
    /// its restore.
    pushes: u64,
    pops: u64,
    owner: Option<ThreadId>,
    check_owner: bool,
}

impl Tape {
    pub fn new(tid: usize) -> Self {
        Tape {
            tid,
            blocks: Vec::new(),
            pos: 0,
            high_water: 0,
            pushes: 0,
            pops: 0,
            owner: None,
            check_owner: cfg!(debug_assertions),
        }
    }

    pub fn tid(&self) -> usize {
        self.tid
    }

    /// Un-popped bytes.
    pub fn depth(&self) -> usize {
        self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.pos == 0
    }

    /// Largest depth reached since creation.
    pub fn high_water(&self) -> usize {
        self.high_water
    }

    /// Number of `push_*` calls made so far. An integer stored in the wide
    /// form counts twice.
    pub fn push_count(&self) -> u64 {
        self.pushes
    }

    pub fn pop_count(&self) -> u64 {
        self.pops
    }

    pub fn blocks_allocated(&self) -> usize {
        self.blocks.len()
    }

    /// Ties the tape to the calling OS thread. With owner checks on, any
    /// later access from another thread fails with
    /// [`RuntimeError::CrossThread`].
    pub fn bind_to_current_thread(&mut self) {
        self.owner = Some(thread::current().id());
    }

    pub fn unbind(&mut self) {
        self.owner = None;
    }

    /// Turns the owner check on or off. It defaults to on in debug builds.
    pub fn set_owner_check(&mut self, on: bool) {
        self.check_owner = on;
    }

    fn check(&self) -> Result<()> {
        if self.check_owner {
            if let Some(owner) = self.owner {
                if owner != thread::current().id() {
                    return Err(RuntimeError::CrossThread { tid: self.tid });
                }
            }
        }
        Ok(())
    }

    pub fn push_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        self.check()?;
        let end = self.pos + bytes.len();
        while self.blocks.len() * BLOCK_SIZE < end {
            self.blocks.push(vec![0u8; BLOCK_SIZE].into_boxed_slice());
        }
        let mut at = self.pos;
        let mut rest = bytes;
        while !rest.is_empty() {
            let (b, off) = (at / BLOCK_SIZE, at % BLOCK_SIZE);
            let n = rest.len().min(BLOCK_SIZE - off);
            self.blocks[b][off..off + n].copy_from_slice(&rest[..n]);
            rest = &rest[n..];
            at += n;
        }
        self.pos = end;
        self.high_water = self.high_water.max(end);
        self.pushes += 1;
        Ok(())
    }

    pub fn pop_bytes(&mut self, out: &mut [u8]) -> Result<()> {
        self.check()?;
        if out.len() > self.pos {
            return Err(RuntimeError::Underflow {
                tid: self.tid,
                depth: self.pos,
                wanted: out.len(),
            });
        }
        let start = self.pos - out.len();
        let mut at = start;
        let mut filled = 0;
        while filled < out.len() {
            let (b, off) = (at / BLOCK_SIZE, at % BLOCK_SIZE);
            let n = (out.len() - filled).min(BLOCK_SIZE - off);
            out[filled..filled + n].copy_from_slice(&self.blocks[b][off..off + n]);
            filled += n;
            at += n;
        }
        self.pos = start;
        self.pops += 1;
        Ok(())
    }

    pub fn push_f64(&mut self, v: f64) -> Result<()> {
        self.push_bytes(&v.to_le_bytes())
    }

    pub fn pop_f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.pop_bytes(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    pub fn push_i32(&mut self, v: i32) -> Result<()> {
        self.push_bytes(&v.to_le_bytes())
    }

    pub fn pop_i32(&mut self) -> Result<i32> {
        let mut b = [0u8; 4];
        self.pop_bytes(&mut b)?;
        Ok(i32::from_le_bytes(b))
    }

    pub fn push_i64(&mut self, v: i64) -> Result<()> {
        self.push_bytes(&v.to_le_bytes())
    }

    pub fn pop_i64(&mut self) -> Result<i64> {
        let mut b = [0u8; 8];
        self.pop_bytes(&mut b)?;
        Ok(i64::from_le_bytes(b))
    }

    /// Stores an integer in 4 bytes when it fits and in 12 otherwise.
    pub fn push_int(&mut self, v: i64) -> Result<()> {
        match i32::try_from(v) {
            Ok(small) if small != WIDE_INT => self.push_i32(small),
            _ => {
                self.push_i64(v)?;
                self.push_i32(WIDE_INT)
            }
        }
    }

    pub fn pop_int(&mut self) -> Result<i64> {
        match self.pop_i32()? {
            WIDE_INT => self.pop_i64(),
            small => Ok(small as i64),
        }
    }

    pub fn save_top(&self) -> Snapshot {
        Snapshot {
            tid: self.tid,
            pos: self.pos,
            pushes: self.pushes,
        }
    }

    /// Moves the top back to `snap`, so that values popped since the save
    /// can be popped again.
    pub fn restore_top(&mut self, snap: Snapshot) -> Result<()> {
        self.check()?;
        if snap.tid != self.tid {
            return Err(RuntimeError::ForeignSnapshot {
                tid: self.tid,
                taken_on: snap.tid,
            });
        }
        if snap.pushes != self.pushes {
            return Err(RuntimeError::RestoreAfterPush { tid: self.tid });
        }
        self.pos = snap.pos;
        Ok(())
    }

    /// Drops every value but keeps the blocks.
    pub fn clear(&mut self) {
        self.pos = 0;
    }
}
