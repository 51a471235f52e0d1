use adomp_runtime::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Counter values of `do i = start, end, stride`, written out directly.
fn do_loop(start: i64, end: i64, stride: i64) -> Vec<i64> {
    let mut out = Vec::new();
    let mut i = start;
    while (stride > 0 && i <= end) || (stride < 0 && i >= end) {
        out.push(i);
        i += stride;
    }
    out
}

/// Block partition computed by walking the iteration list.
fn partition_oracle(start: i64, end: i64, stride: i64, nthreads: usize) -> Vec<Vec<i64>> {
    let all = do_loop(start, end, stride);
    let (q, r) = (all.len() / nthreads, all.len() % nthreads);
    let mut out = Vec::new();
    let mut it = all.into_iter();
    for t in 0..nthreads {
        let len = q + usize::from(t < r);
        out.push(it.by_ref().take(len).collect());
    }
    out
}

#[test]
fn block_partition_examples() {
    assert_eq!(static_schedule(1, 100, 1, 4, 0).unwrap(), (1, 25));
    assert_eq!(static_schedule(1, 100, 1, 1, 0).unwrap(), (1, 100));
    assert_eq!(static_schedule(1, 10, 1, 4, 3).unwrap(), (9, 10));
    assert_eq!(static_schedule(1, 10, 1, 4, 0).unwrap(), (1, 3));
}

#[test]
fn block_partition_examples_match_oracle() {
    for (s, e, st, nt) in [
        (1, 100, 1, 4),
        (1, 10, 1, 4),
        (10, 1, -1, 3),
        (1, 20, 3, 5),
        (0, -7, -2, 2),
    ] {
        let oracle = partition_oracle(s, e, st, nt);
        for (t, want) in oracle.iter().enumerate() {
            let (cs, ce) = static_schedule(s, e, st, nt as i64, t as i64).unwrap();
            assert_eq!(&do_loop(cs, ce, st), want, "({s},{e},{st}) tid {t}");
        }
    }
}

#[test]
fn empty_blocks_run_zero_times_both_ways() {
    let (cs, ce) = static_schedule(1, 2, 1, 4, 3).unwrap();
    assert!(ce < cs);
    assert!(do_loop(cs, ce, 1).is_empty());
    assert!(do_loop(ce, cs, -1).is_empty());
    let (cs, ce) = static_schedule(5, 1, -1, 8, 7).unwrap();
    assert!(ce > cs, "beyond the end in the stride direction");
    assert!(do_loop(cs, ce, -1).is_empty());
}

#[test]
fn bad_arguments() {
    assert_eq!(
        static_schedule(1, 10, 1, 0, 0),
        Err(RuntimeError::BadThreadCount(0))
    );
    assert_eq!(
        static_schedule(1, 10, 0, 2, 0),
        Err(RuntimeError::ZeroStride)
    );
    assert!(matches!(
        static_schedule(1, 10, 1, 2, 2),
        Err(RuntimeError::BadThreadId { .. })
    ));
}

#[test]
fn chunked_static_is_round_robin() {
    let got: Vec<Vec<_>> = (0..3)
        .map(|t| static_chunks(10, 2, 3, t).collect())
        .collect();
    assert_eq!(got[0], [0..2, 6..8]);
    assert_eq!(got[1], [2..4, 8..10]);
    assert_eq!(got[2], [4..6]);
}

/// Simulates the jump detection of the recorder over a counter sequence.
fn chunks_oracle(counters: &[i64], stride: i64) -> Vec<(i64, i64)> {
    let mut out: Vec<(i64, i64)> = Vec::new();
    for &c in counters {
        match out.last_mut() {
            Some(last) if c - last.1 == stride => last.1 = c,
            _ => out.push((c, c)),
        }
    }
    out
}

fn record(tape: &mut Tape, counters: &[i64], stride: i64) {
    let mut log = ChunkLog::new();
    log.init();
    for &c in counters {
        log.record(tape, c, stride).unwrap();
    }
    log.finalize(tape).unwrap();
}

#[test]
fn recorded_jumps_split_chunks() {
    let counters = [5, 6, 7, 20, 21];
    assert_eq!(chunks_oracle(&counters, 1), [(5, 7), (20, 21)]);
    let mut t = Tape::new(0);
    record(&mut t, &counters, 1);
    assert_eq!(dynamic_replay(&mut t).unwrap(), [(20, 21), (5, 7)]);
    assert!(t.is_empty());
}

#[test]
fn no_iterations_records_zero_chunks() {
    let mut t = Tape::new(0);
    record(&mut t, &[], 1);
    assert_eq!(t.depth(), 4);
    assert!(dynamic_replay(&mut t).unwrap().is_empty());
}

#[test]
fn contiguous_counters_merge() {
    let mut t = Tape::new(0);
    let counters: Vec<i64> = (1..=10).collect();
    record(&mut t, &counters, 1);
    let chunks = dynamic_replay(&mut t).unwrap();
    assert_eq!(chunks, [(1, 10)]);
    assert_eq!(do_loop(10, 1, -1), (1..=10).rev().collect::<Vec<_>>());
}

#[test]
fn tape_layout_is_start_end_pairs_then_count() {
    let mut t = Tape::new(0);
    record(&mut t, &[5, 6, 7, 20, 21], 1);
    let raw: Vec<i64> = (0..5).map(|_| t.pop_int().unwrap()).collect();
    assert_eq!(raw, [2, 21, 20, 7, 5]);
}

#[test]
fn chunk_bounds_sit_above_the_chunk_body() {
    // Each iteration pushes its counter times 10, as a loop body would.
    let counters = [5, 6, 7, 20, 21, 40];
    let mut t = Tape::new(0);
    let mut log = ChunkLog::new();
    log.init();
    for &c in &counters {
        log.record(&mut t, c, 1).unwrap();
        t.push_int(c * 10).unwrap();
    }
    log.finalize(&mut t).unwrap();

    let mut backward = Vec::new();
    let n = t.pop_int().unwrap();
    for _ in 0..n {
        let end = t.pop_int().unwrap();
        let start = t.pop_int().unwrap();
        for c in do_loop(end, start, -1) {
            assert_eq!(t.pop_int().unwrap(), c * 10);
            backward.push(c);
        }
    }
    assert!(t.is_empty());
    assert_eq!(backward, [40, 21, 20, 7, 6, 5]);
}

#[test]
fn record_needs_init() {
    let mut t = Tape::new(4);
    let mut log = ChunkLog::new();
    assert_eq!(
        log.record(&mut t, 1, 1),
        Err(RuntimeError::RecordBeforeInit { tid: 4 })
    );
    assert_eq!(
        log.finalize(&mut t),
        Err(RuntimeError::FinalizeBeforeInit { tid: 4 })
    );
    log.init();
    log.finalize(&mut t).unwrap();
    assert_eq!(
        log.record(&mut t, 1, 1),
        Err(RuntimeError::RecordBeforeInit { tid: 4 })
    );
}

#[test]
fn replay_underflow_faults() {
    let mut t = Tape::new(0);
    t.push_int(3).unwrap();
    assert!(matches!(
        dynamic_replay(&mut t),
        Err(RuntimeError::Underflow { .. })
    ));
}

/// Splits the logical iterations into random chunks and hands each chunk to
/// a random thread, as an adversarial dynamic dispenser could.
fn random_assignment(n: u64, nthreads: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<u64>> {
    let mut per_thread = vec![Vec::new(); nthreads];
    let max_chunk = rng.gen_range(1..=8);
    let mut k = 0;
    while k < n {
        let len = rng.gen_range(1..=max_chunk).min(n - k);
        let t = rng.gen_range(0..nthreads);
        per_thread[t].extend(k..k + len);
        k += len;
    }
    per_thread
}

fn check_reversal(
    start: i64,
    stride: i64,
    n: u64,
    nthreads: usize,
    seed: u64,
) -> Result<(), TestCaseError> {
    let end = start + (n as i64 - 1) * stride;
    prop_assert_eq!(trip_count(start, end, stride).unwrap(), n);
    let all = do_loop(start, end, stride);

    // Static: the backward loop is the forward block run the other way.
    let mut covered = Vec::new();
    for t in 0..nthreads {
        let (cs, ce) = static_schedule(start, end, stride, nthreads as i64, t as i64).unwrap();
        let mut fw = do_loop(cs, ce, stride);
        covered.extend(fw.iter().copied());
        let bw = do_loop(ce, cs, -stride);
        fw.reverse();
        prop_assert_eq!(bw, fw);
    }
    prop_assert_eq!(&covered, &all);

    // Dynamic: record on each thread's tape, replay, compare.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assignment = random_assignment(n, nthreads, &mut rng);
    let mut seen = Vec::new();
    for (t, logical) in assignment.iter().enumerate() {
        let fw: Vec<i64> = logical.iter().map(|&k| start + k as i64 * stride).collect();
        let mut tape = Tape::new(t);
        tape.push_f64(-1.0).unwrap();
        // The loop body pushes its counter, interleaved with the recorder.
        let mut log = ChunkLog::new();
        log.init();
        for &c in &fw {
            log.record(&mut tape, c, stride).unwrap();
            tape.push_int(c).unwrap();
        }
        log.finalize(&mut tape).unwrap();
        let mut bw = Vec::new();
        let chunks = tape.pop_int().unwrap();
        for _ in 0..chunks {
            let ce = tape.pop_int().unwrap();
            let cs = tape.pop_int().unwrap();
            for c in do_loop(ce, cs, -stride) {
                prop_assert_eq!(tape.pop_int().unwrap(), c);
                bw.push(c);
            }
        }
        prop_assert_eq!(tape.pop_f64().unwrap(), -1.0);
        prop_assert!(tape.is_empty());
        let mut rev = fw.clone();
        rev.reverse();
        prop_assert_eq!(&bw, &rev);
        seen.extend(fw);
    }
    seen.sort_unstable();
    let mut sorted = all;
    sorted.sort_unstable();
    prop_assert_eq!(seen, sorted, "chunks cover the space exactly once");
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn backward_sequence_is_reversed_forward(
        start in -10_000i64..10_000,
        stride in prop_oneof![1i64..=5, -5i64..=-1],
        n in 0u64..=10_000,
        nthreads in 1usize..=16,
        seed in any::<u64>(),
    ) {
        check_reversal(start, stride, n, nthreads, seed)?;
    }

    #[test]
    fn blocks_partition_the_space(
        start in -1000i64..1000,
        end in -1000i64..1000,
        stride in prop_oneof![1i64..=7, -7i64..=-1],
        nthreads in 1i64..=64,
    ) {
        let oracle = partition_oracle(start, end, stride, nthreads as usize);
        for t in 0..nthreads {
            let (cs, ce) = static_schedule(start, end, stride, nthreads, t).unwrap();
            prop_assert_eq!(&do_loop(cs, ce, stride), &oracle[t as usize]);
        }
    }

    #[test]
    fn chunked_static_partitions(n in 0u64..500, chunk in 1u64..9, nthreads in 1u64..=16) {
        let mut all: Vec<u64> = (0..nthreads).flat_map(|t| static_chunks(n, chunk, nthreads, t).flatten()).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn recorder_matches_jump_oracle(
        counters in proptest::collection::vec(-50i64..50, 0..60),
        stride in prop_oneof![Just(1i64), Just(-1), Just(3)],
    ) {
        let mut t = Tape::new(0);
        record(&mut t, &counters, stride);
        let mut want = chunks_oracle(&counters, stride);
        want.reverse();
        prop_assert_eq!(dynamic_replay(&mut t).unwrap(), want);
    }
}
