//! Real-valued cells that tolerate concurrent access.
//!
//! A cell is an `AtomicU64` holding the bit pattern of an `f64`. Plain loads
//! and stores are relaxed; [`atomic_add`] is a compare-and-swap loop and is
//! linearizable with respect to other `atomic_add` calls on the same cell.

use std::sync::atomic::{AtomicU64, Ordering};

pub fn load_f64(cell: &AtomicU64) -> f64 {
    f64::from_bits(cell.load(Ordering::Relaxed))
}

pub fn store_f64(cell: &AtomicU64, v: f64) {
    cell.store(v.to_bits(), Ordering::Relaxed);
}

pub fn atomic_add(cell: &AtomicU64, delta: f64) {
    let mut cur = cell.load(Ordering::Relaxed);
    loop {
        let next = (f64::from_bits(cur) + delta).to_bits();
        match cell.compare_exchange_weak(cur, next, Ordering::AcqRel, Ordering::Relaxed) {
            Ok(_) => return,
            Err(seen) => cur = seen,
        }
    }
}
