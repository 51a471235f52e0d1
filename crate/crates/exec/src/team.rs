//! Shared state of a thread team inside one parallel region.

use crate::dispenser::{Dispenser, DynamicMode};
use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};

/// A reusable barrier that releases every waiter with an error once any
/// member gives up.
#[derive(Debug)]
pub struct TeamBarrier {
    size: usize,
    state: Mutex<BarrierState>,
    cv: Condvar,
}

#[derive(Debug, Default)]
struct BarrierState {
    waiting: usize,
    generation: u64,
    poisoned: bool,
}

impl TeamBarrier {
    pub fn new(size: usize) -> Self {
        TeamBarrier {
            size,
            state: Mutex::new(BarrierState::default()),
            cv: Condvar::new(),
        }
    }

    /// Returns `false` when the team was aborted.
    pub fn wait(&self) -> bool {
        let mut st = self.state.lock().unwrap();
        if st.poisoned {
            return false;
        }
        st.waiting += 1;
        if st.waiting == self.size {
            st.waiting = 0;
            st.generation += 1;
            self.cv.notify_all();
            return true;
        }
        let gen = st.generation;
        while st.generation == gen && !st.poisoned {
            st = self.cv.wait(st).unwrap();
        }
        st.generation != gen
    }

    pub fn poison(&self) {
        self.state.lock().unwrap().poisoned = true;
        self.cv.notify_all();
    }
}

pub struct Team {
    pub nthreads: usize,
    pub barrier: TeamBarrier,
    dispensers: Mutex<Vec<Arc<Dispenser>>>,
    /// Thread that ran the logically last iteration of the worksharing loop.
    pub last_owner: AtomicUsize,
    region_instance: u64,
    mode: DynamicMode,
}

impl Team {
    pub fn new(nthreads: usize, region_instance: u64, mode: DynamicMode) -> Self {
        Team {
            nthreads,
            barrier: TeamBarrier::new(nthreads),
            dispensers: Mutex::new(Vec::new()),
            last_owner: AtomicUsize::new(usize::MAX),
            region_instance,
            mode,
        }
    }

    /// The dispenser of the `k`-th worksharing loop met in this region,
    /// created by whichever thread gets there first.
    pub fn dispenser(&self, k: usize, n: u64, chunk: u64) -> Arc<Dispenser> {
        let mut ds = self.dispensers.lock().unwrap();
        while ds.len() <= k {
            let instance = (self.region_instance << 16) ^ ds.len() as u64;
            ds.push(Arc::new(Dispenser::new(
                n,
                chunk,
                self.nthreads,
                self.mode,
                instance,
            )));
        }
        ds[k].clone()
    }

    pub fn note_last(&self, tid: usize) {
        self.last_owner.store(tid, Ordering::Relaxed);
    }
}

pub type Chunk = Range<u64>;
