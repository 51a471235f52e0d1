use adomp_runtime::{RuntimeError, Tape, BLOCK_SIZE};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn lifo_across_types() {
    let mut t = Tape::new(0);
    t.push_f64(3.5).unwrap();
    t.push_i32(7).unwrap();
    assert_eq!(t.pop_i32().unwrap(), 7);
    assert_eq!(t.pop_f64().unwrap(), 3.5);
    assert_eq!(t.depth(), 0);
}

#[test]
fn block_spill_matches_flat_buffer() {
    let mut t = Tape::new(0);
    let reference: Vec<u8> = (0..BLOCK_SIZE + 1).map(|k| (k * 31 % 251) as u8).collect();
    for b in &reference {
        t.push_bytes(std::slice::from_ref(b)).unwrap();
    }
    assert_eq!(t.blocks_allocated(), 2);
    let mut popped = Vec::with_capacity(reference.len());
    while !t.is_empty() {
        let mut b = [0u8];
        t.pop_bytes(&mut b).unwrap();
        popped.push(b[0]);
    }
    popped.reverse();
    assert_eq!(popped, reference);
}

#[test]
fn value_straddles_two_blocks() {
    let mut t = Tape::new(0);
    t.push_bytes(&vec![0xAB; BLOCK_SIZE - 3]).unwrap();
    let v = f64::from_bits(0x0123_4567_89AB_CDEF);
    t.push_f64(v).unwrap();
    assert_eq!(t.blocks_allocated(), 2);
    assert_eq!(t.depth(), BLOCK_SIZE + 5);
    assert_eq!(t.pop_f64().unwrap().to_bits(), v.to_bits());
    let mut rest = vec![0u8; BLOCK_SIZE - 3];
    t.pop_bytes(&mut rest).unwrap();
    assert!(rest.iter().all(|&b| b == 0xAB));
}

#[test]
fn one_large_push_spanning_many_blocks() {
    let mut t = Tape::new(0);
    let data: Vec<u8> = (0..3 * BLOCK_SIZE + 17).map(|k| (k % 256) as u8).collect();
    t.push_i32(-5).unwrap();
    t.push_bytes(&data).unwrap();
    let mut back = vec![0u8; data.len()];
    t.pop_bytes(&mut back).unwrap();
    assert_eq!(back, data);
    assert_eq!(t.pop_i32().unwrap(), -5);
}

#[test]
fn blocks_are_kept_for_reuse() {
    let mut t = Tape::new(0);
    t.push_bytes(&vec![1; 2 * BLOCK_SIZE]).unwrap();
    t.clear();
    assert!(t.is_empty());
    assert_eq!(t.blocks_allocated(), 2);
    t.push_bytes(&vec![2; 2 * BLOCK_SIZE]).unwrap();
    assert_eq!(t.blocks_allocated(), 2);
    assert_eq!(t.high_water(), 2 * BLOCK_SIZE);
}

#[test]
fn integers_use_four_bytes_when_they_fit() {
    let mut t = Tape::new(0);
    t.push_int(123_456).unwrap();
    assert_eq!(t.depth(), 4);
    t.push_int(1 << 40).unwrap();
    assert_eq!(t.depth(), 16);
    for v in [i32::MIN as i64, i32::MAX as i64, i64::MIN, -1] {
        t.push_int(v).unwrap();
        assert_eq!(t.pop_int().unwrap(), v);
    }
    assert_eq!(t.pop_int().unwrap(), 1 << 40);
    assert_eq!(t.pop_int().unwrap(), 123_456);
}

#[test]
fn save_pop_restore_pop_replays() {
    let mut t = Tape::new(0);
    for k in 0..10 {
        t.push_f64(k as f64 * 0.5).unwrap();
    }
    let snap = t.save_top();
    let first: Vec<f64> = (0..4).map(|_| t.pop_f64().unwrap()).collect();
    t.restore_top(snap).unwrap();
    let second: Vec<f64> = (0..4).map(|_| t.pop_f64().unwrap()).collect();
    assert_eq!(first, second);
    assert_eq!(first, [4.5, 4.0, 3.5, 3.0]);
}

#[test]
fn save_on_empty_then_restore_is_noop() {
    let mut t = Tape::new(0);
    let snap = t.save_top();
    t.restore_top(snap).unwrap();
    assert!(t.is_empty());
}

#[test]
fn nested_saves_replay() {
    let mut t = Tape::new(0);
    let values: Vec<i64> = (0..20).collect();
    for &v in &values {
        t.push_int(v).unwrap();
    }
    // Oracle: a cursor into the flat value list.
    let mut top = values.len();
    let outer = t.save_top();
    let outer_top = top;
    for _ in 0..3 {
        top -= 1;
        assert_eq!(t.pop_int().unwrap(), values[top]);
    }
    let inner = t.save_top();
    let inner_top = top;
    for _ in 0..5 {
        top -= 1;
        assert_eq!(t.pop_int().unwrap(), values[top]);
    }
    t.restore_top(inner).unwrap();
    top = inner_top;
    for _ in 0..5 {
        top -= 1;
        assert_eq!(t.pop_int().unwrap(), values[top]);
    }
    t.restore_top(outer).unwrap();
    top = outer_top;
    while top > 0 {
        top -= 1;
        assert_eq!(t.pop_int().unwrap(), values[top]);
    }
    assert!(t.is_empty());
}

#[test]
fn restore_after_push_faults() {
    let mut t = Tape::new(3);
    t.push_f64(1.0).unwrap();
    let snap = t.save_top();
    t.pop_f64().unwrap();
    t.push_f64(2.0).unwrap();
    assert_eq!(
        t.restore_top(snap),
        Err(RuntimeError::RestoreAfterPush { tid: 3 })
    );
}

#[test]
fn snapshot_of_another_tape_is_rejected() {
    let a = Tape::new(0);
    let mut b = Tape::new(1);
    assert_eq!(
        b.restore_top(a.save_top()),
        Err(RuntimeError::ForeignSnapshot {
            tid: 1,
            taken_on: 0
        })
    );
}

#[test]
fn pop_on_empty_reports_thread_and_depth() {
    let mut t = Tape::new(5);
    t.push_i32(1).unwrap();
    let err = t.pop_f64().unwrap_err();
    assert_eq!(
        err,
        RuntimeError::Underflow {
            tid: 5,
            depth: 4,
            wanted: 8
        }
    );
    assert!(err.to_string().contains("thread 5"));
    assert_eq!(t.depth(), 4, "a failed pop leaves the tape unchanged");
}

#[test]
fn use_from_a_foreign_thread_is_rejected() {
    let mut t = Tape::new(2);
    t.set_owner_check(true);
    t.bind_to_current_thread();
    t.push_f64(1.0).unwrap();
    let t = std::thread::spawn(move || {
        let mut t = t;
        assert_eq!(t.pop_f64(), Err(RuntimeError::CrossThread { tid: 2 }));
        t
    })
    .join()
    .unwrap();
    assert_eq!(t.depth(), 8);
}

#[derive(Clone, Debug, PartialEq)]
enum Val {
    F(u64),
    I32(i32),
    I64(i64),
    Int(i64),
    Bytes(Vec<u8>),
}

fn push(t: &mut Tape, v: &Val) {
    match v {
        Val::F(bits) => t.push_f64(f64::from_bits(*bits)),
        Val::I32(x) => t.push_i32(*x),
        Val::I64(x) => t.push_i64(*x),
        Val::Int(x) => t.push_int(*x),
        Val::Bytes(b) => t.push_bytes(b),
    }
    .unwrap()
}

fn pop_like(t: &mut Tape, v: &Val) -> Val {
    match v {
        Val::F(_) => Val::F(t.pop_f64().unwrap().to_bits()),
        Val::I32(_) => Val::I32(t.pop_i32().unwrap()),
        Val::I64(_) => Val::I64(t.pop_i64().unwrap()),
        Val::Int(_) => Val::Int(t.pop_int().unwrap()),
        Val::Bytes(b) => {
            let mut out = vec![0; b.len()];
            t.pop_bytes(&mut out).unwrap();
            Val::Bytes(out)
        }
    }
}

fn random_val(rng: &mut ChaCha8Rng) -> Val {
    match rng.gen_range(0..5) {
        0 => Val::F(rng.gen()),
        1 => Val::I32(rng.gen()),
        2 => Val::I64(rng.gen()),
        3 => Val::Int(if rng.gen_bool(0.9) {
            rng.gen_range(-1000..1000)
        } else {
            rng.gen()
        }),
        _ => Val::Bytes((0..rng.gen_range(0..13)).map(|_| rng.gen()).collect()),
    }
}

#[test]
fn million_mixed_values_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut t = Tape::new(0);
    let values: Vec<Val> = (0..1_000_000).map(|_| random_val(&mut rng)).collect();
    for v in &values {
        push(&mut t, v);
    }
    assert!(t.blocks_allocated() > 1);
    for v in values.iter().rev() {
        assert_eq!(&pop_like(&mut t, v), v);
    }
    assert!(t.is_empty());
}

fn val_strategy() -> impl Strategy<Value = Val> {
    prop_oneof![
        any::<u64>().prop_map(Val::F),
        any::<i32>().prop_map(Val::I32),
        any::<i64>().prop_map(Val::I64),
        any::<i64>().prop_map(Val::Int),
        proptest::collection::vec(any::<u8>(), 0..40).prop_map(Val::Bytes),
    ]
}

#[derive(Clone, Debug)]
enum Op {
    Push(Val),
    Pop,
}

proptest! {
    /// Any interleaving of pushes and pops behaves like a `Vec` of values.
    #[test]
    fn behaves_like_a_vec(ops in proptest::collection::vec(
        prop_oneof![3 => val_strategy().prop_map(Op::Push), 2 => Just(Op::Pop)], 0..300),
        pad in 0usize..BLOCK_SIZE)
    {
        let mut t = Tape::new(0);
        // Start near a block boundary so that values straddle it.
        let filler = vec![7u8; pad];
        t.push_bytes(&filler).unwrap();
        let mut model: Vec<Val> = Vec::new();
        for op in ops {
            match op {
                Op::Push(v) => {
                    push(&mut t, &v);
                    model.push(v);
                }
                Op::Pop => {
                    if let Some(v) = model.pop() {
                        prop_assert_eq!(pop_like(&mut t, &v), v);
                    }
                }
            }
        }
        while let Some(v) = model.pop() {
            prop_assert_eq!(pop_like(&mut t, &v), v);
        }
        prop_assert_eq!(t.depth(), pad);
    }
}
