//! Hands out chunks of a dynamically scheduled loop.
//!
//! In first-come mode chunks of a fixed size leave in counter order to
//! whichever thread asks next, as an OpenMP runtime would. The adversarial
//! mode replaces timing with a seeded random draw: chunk sizes vary and each
//! chunk goes to a random thread, so threads see jumps in their counter
//! sequences and some see no work at all.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::ops::Range;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DynamicMode {
    #[default]
    FirstCome,
    Adversarial {
        seed: u64,
    },
}

#[derive(Debug)]
pub enum Dispenser {
    FirstCome {
        n: u64,
        chunk: u64,
        next: AtomicU64,
    },
    Planned {
        queues: Vec<Vec<Range<u64>>>,
        cursors: Vec<AtomicUsize>,
    },
}

impl Dispenser {
    pub fn new(n: u64, chunk: u64, nthreads: usize, mode: DynamicMode, instance: u64) -> Self {
        let chunk = chunk.max(1);
        match mode {
            DynamicMode::FirstCome => Dispenser::FirstCome {
                n,
                chunk,
                next: AtomicU64::new(0),
            },
            DynamicMode::Adversarial { seed } => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ instance.wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let max_len = *[1, 2, 3, 7, chunk].get(rng.gen_range(0..5)).unwrap_or(&1);
                let mut queues = vec![Vec::new(); nthreads];
                let mut k = 0;
                while k < n {
                    let len = rng.gen_range(1..=max_len).min(n - k);
                    queues[rng.gen_range(0..nthreads)].push(k..k + len);
                    k += len;
                }
                Dispenser::Planned {
                    queues,
                    cursors: (0..nthreads).map(|_| AtomicUsize::new(0)).collect(),
                }
            }
        }
    }

    /// Next chunk of logical iterations for thread `tid`.
    pub fn next(&self, tid: usize) -> Option<Range<u64>> {
        match self {
            Dispenser::FirstCome { n, chunk, next } => {
                let lo = next.fetch_add(*chunk, Ordering::Relaxed);
                (lo < *n).then(|| lo..(lo + chunk).min(*n))
            }
            Dispenser::Planned { queues, cursors } => {
                let k = cursors[tid].fetch_add(1, Ordering::Relaxed);
                queues[tid].get(k).cloned()
            }
        }
    }
}
