//! Loop schedules that can be replayed backwards.
//!
//! A loop `do i = start, end, stride` has `trip_count` logical iterations
//! `0..n`, iteration `k` running with counter `start + k*stride`.

use crate::error::RuntimeError;
use std::ops::Range;

/// Number of iterations of `do i = start, end, stride`, zero when the range
/// is empty in the stride direction.
pub fn trip_count(start: i64, end: i64, stride: i64) -> Result<u64, RuntimeError> {
    if stride == 0 {
        return Err(RuntimeError::ZeroStride);
    }
    let span = (end as i128 - start as i128 + stride as i128) / stride as i128;
    Ok(span.max(0) as u64)
}

/// Logical iterations of thread `tid` under the even block partition: the
/// first `n mod nthreads` threads get one extra iteration.
pub fn static_block(n: u64, nthreads: u64, tid: u64) -> Range<u64> {
    let q = n / nthreads;
    let r = n % nthreads;
    let first = tid * q + tid.min(r);
    let len = q + u64::from(tid < r);
    first..first + len
}

/// Counter bounds of the block of thread `tid`.
///
/// An empty block comes back as `(s, s - stride)`, which runs zero times in
/// either direction.
///
/// ```
/// use adomp_runtime::static_schedule;
/// assert_eq!(static_schedule(1, 100, 1, 4, 0).unwrap(), (1, 25));
/// assert_eq!(static_schedule(1, 10, 1, 4, 3).unwrap(), (9, 10));
/// ```
pub fn static_schedule(
    start: i64,
    end: i64,
    stride: i64,
    nthreads: i64,
    tid: i64,
) -> Result<(i64, i64), RuntimeError> {
    if nthreads <= 0 {
        return Err(RuntimeError::BadThreadCount(nthreads));
    }
    if tid < 0 || tid >= nthreads {
        return Err(RuntimeError::BadThreadId { tid, nthreads });
    }
    let n = trip_count(start, end, stride)?;
    let block = static_block(n, nthreads as u64, tid as u64);
    let chunk_start = start + block.start as i64 * stride;
    let chunk_end = chunk_start + (block.end - block.start) as i64 * stride - stride;
    Ok((chunk_start, chunk_end))
}

/// Logical chunks of thread `tid` under `schedule(static, chunk)`: chunk `j`
/// of size `chunk` goes to thread `j mod nthreads`.
pub fn static_chunks(
    n: u64,
    chunk: u64,
    nthreads: u64,
    tid: u64,
) -> impl Iterator<Item = Range<u64>> {
    let chunk = chunk.max(1);
    (tid * chunk..n)
        .step_by((chunk * nthreads) as usize)
        .map(move |lo| lo..(lo + chunk).min(n))
}
