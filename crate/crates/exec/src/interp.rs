//! Tree-walking evaluation over a pool of persistent worker threads.
//!
//! Thread 0 is the calling thread. It runs sequential code and takes part in
//! every parallel region as team member 0; workers `1..nthreads` live for the
//! whole run, so each thread keeps one tape across the forward and backward
//! sweeps.

use crate::dispenser::DynamicMode;
use crate::error::{ExecError, Fault};
use crate::ir::*;
use crate::team::Team;
use crate::value::{Value, Values};
use adomp_core::{Intent, Schedule, Scope};
use adomp_runtime::{
    atomic_add, load_f64, static_block, static_chunks, static_schedule, store_f64, trip_count,
    ChunkLog, Tape,
};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};

pub type Cells = Arc<[AtomicU64]>;
pub type Frame = Vec<Cells>;

/// How a run is configured.
#[derive(Clone, Debug)]
pub struct ExecConfig {
    pub nthreads: usize,
    /// Replaces the schedule of every worksharing loop.
    pub schedule: Option<Schedule>,
    pub dynamic: DynamicMode,
    /// Fail any tape access from a thread other than the owner, also in
    /// release builds.
    pub check_pairing: bool,
}

impl ExecConfig {
    pub fn new(nthreads: usize) -> Self {
        ExecConfig {
            nthreads,
            schedule: None,
            dynamic: DynamicMode::FirstCome,
            check_pairing: false,
        }
    }

    /// Thread count from `ADOMP_NUM_THREADS`, or 1.
    pub fn from_env() -> Self {
        Self::new(threads_from_env().unwrap_or(1))
    }

    pub fn with_schedule(mut self, s: Schedule) -> Self {
        self.schedule = Some(s);
        self
    }

    pub fn adversarial(mut self, seed: u64) -> Self {
        self.dynamic = DynamicMode::Adversarial { seed };
        self
    }

    pub fn pairing_checked(mut self) -> Self {
        self.check_pairing = true;
        self
    }
}

pub fn threads_from_env() -> Option<usize> {
    std::env::var("ADOMP_NUM_THREADS")
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

/// Tape statistics of one thread at the end of a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThreadReport {
    pub tid: usize,
    pub pushes: u64,
    pub pops: u64,
    pub depth: usize,
    pub high_water: usize,
    pub blocks: usize,
}

#[derive(Clone, Debug)]
pub struct Outputs {
    /// Final value of every parameter.
    pub values: Values,
    /// One entry per thread, ordered by thread id.
    pub threads: Vec<ThreadReport>,
}

impl Outputs {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }
}

pub struct ThreadState {
    tid: usize,
    tape: Tape,
    log: ChunkLog,
}

impl ThreadState {
    fn new(tid: usize, cfg: &ExecConfig) -> Self {
        let mut tape = Tape::new(tid);
        tape.bind_to_current_thread();
        if cfg.check_pairing {
            tape.set_owner_check(true);
        }
        ThreadState {
            tid,
            tape,
            log: ChunkLog::new(),
        }
    }

    fn report(&self) -> ThreadReport {
        ThreadReport {
            tid: self.tid,
            pushes: self.tape.push_count(),
            pops: self.tape.pop_count(),
            depth: self.tape.depth(),
            high_water: self.tape.high_water(),
            blocks: self.tape.blocks_allocated(),
        }
    }
}

#[derive(Debug)]
struct Trap {
    tid: usize,
    site: usize,
    fault: Fault,
}

type Job<'env> = Box<dyn FnOnce(&mut ThreadState) -> Result<(), Trap> + Send + 'env>;

struct Pool<'env> {
    workers: Vec<Sender<Job<'env>>>,
    done: Receiver<(usize, Result<(), Trap>)>,
    regions: u64,
}

fn zeros(len: usize) -> Cells {
    (0..len).map(|_| AtomicU64::new(0)).collect()
}

/// Runs a compiled program. Parameters named in `zero_default` start at
/// zero when `inputs` has no value for them.
pub fn run(
    prog: &Compiled,
    inputs: &Values,
    zero_default: &[String],
    cfg: &ExecConfig,
) -> Result<Outputs, ExecError> {
    if cfg.nthreads == 0 {
        return Err(ExecError::NoThreads);
    }
    let global = build_frame(prog, inputs, zero_default)?;
    let (result, threads) = std::thread::scope(|s| {
        let (done_tx, done_rx) = channel();
        let mut workers = Vec::new();
        let mut handles = Vec::new();
        for tid in 1..cfg.nthreads {
            let (tx, rx) = channel::<Job>();
            let done = done_tx.clone();
            handles.push(s.spawn(move || {
                let mut ts = ThreadState::new(tid, cfg);
                for job in rx {
                    let r = job(&mut ts);
                    if done.send((tid, r)).is_err() {
                        break;
                    }
                }
                ts.report()
            }));
            workers.push(tx);
        }
        drop(done_tx);
        let mut pool = Pool {
            workers,
            done: done_rx,
            regions: 0,
        };
        let mut ts = ThreadState::new(0, cfg);
        let result = Ctx {
            prog,
            cfg,
            frame: &global,
            team: None,
            ws_seen: 0,
        }
        .serial_block(&prog.body, &mut ts, &mut pool, &global);
        drop(pool);
        let mut threads = vec![ts.report()];
        threads.extend(
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked")),
        );
        (result, threads)
    });
    result.map_err(|t| ExecError::Fault {
        tid: t.tid,
        site: prog.sites[t.site].clone(),
        fault: t.fault,
    })?;
    Ok(Outputs {
        values: read_params(prog, &global),
        threads,
    })
}

fn bad(name: &str, reason: impl Into<String>) -> ExecError {
    ExecError::BadInput {
        name: name.to_string(),
        reason: reason.into(),
    }
}

fn build_frame(
    prog: &Compiled,
    inputs: &Values,
    zero_default: &[String],
) -> Result<Frame, ExecError> {
    for name in inputs.keys() {
        if !prog.vars[..prog.nparams].iter().any(|v| &v.name == name) {
            return Err(bad(name, "not a parameter"));
        }
    }
    let needs_input = |v: &VarInfo| {
        v.intent.is_some_and(Intent::reads_input)
            && !(zero_default.contains(&v.name) && !inputs.contains_key(&v.name))
    };
    let mut frame: Frame = prog.vars.iter().map(|_| zeros(1)).collect();
    for (slot, v) in prog.vars.iter().enumerate() {
        if matches!(v.kind, SlotKind::Array(_)) || !needs_input(v) {
            continue;
        }
        let given = inputs
            .get(&v.name)
            .ok_or_else(|| ExecError::MissingInput(v.name.clone()))?;
        let bits = match (&v.kind, given) {
            (SlotKind::Int, Value::Int(x)) => *x as u64,
            (SlotKind::Real, Value::Real(x)) => x.to_bits(),
            (SlotKind::Real, Value::Int(x)) => (*x as f64).to_bits(),
            _ => return Err(bad(&v.name, "wrong kind of value")),
        };
        frame[slot][0].store(bits, Ordering::Relaxed);
    }
    for (slot, v) in prog.vars.iter().enumerate() {
        let SlotKind::Array(ext) = &v.kind else {
            continue;
        };
        let mem = Mem {
            frame: &frame,
            vars: &prog.vars,
        };
        let n = mem
            .int(ext)
            .map_err(|f| bad(&v.name, format!("extent: {f}")))?;
        let n = usize::try_from(n).map_err(|_| bad(&v.name, format!("negative extent {n}")))?;
        let cells = zeros(n);
        if needs_input(v) {
            let given = inputs
                .get(&v.name)
                .ok_or_else(|| ExecError::MissingInput(v.name.clone()))?;
            let data = given
                .as_array()
                .ok_or_else(|| bad(&v.name, "expected an array"))?;
            if data.len() != n {
                return Err(bad(
                    &v.name,
                    format!("length {} but extent {n}", data.len()),
                ));
            }
            for (c, x) in cells.iter().zip(data) {
                store_f64(c, *x);
            }
        }
        frame[slot] = cells;
    }
    Ok(frame)
}

fn read_params(prog: &Compiled, frame: &Frame) -> Values {
    prog.vars[..prog.nparams]
        .iter()
        .enumerate()
        .map(|(slot, v)| {
            let cells = &frame[slot];
            let value = match v.kind {
                SlotKind::Int => Value::Int(cells[0].load(Ordering::Relaxed) as i64),
                SlotKind::Real => Value::Real(load_f64(&cells[0])),
                SlotKind::Array(_) => Value::Array(cells.iter().map(load_f64).collect()),
            };
            (v.name.clone(), value)
        })
        .collect()
}

/// Read access to a frame for expression evaluation.
struct Mem<'a> {
    frame: &'a Frame,
    vars: &'a [VarInfo],
}

impl Mem<'_> {
    #[inline]
    fn cell(&self, slot: Slot, index: i64) -> Result<&AtomicU64, Fault> {
        let cells = &self.frame[slot];
        if index < 1 || index as usize > cells.len() {
            return Err(Fault::OutOfBounds {
                var: self.vars[slot].name.clone(),
                index,
                extent: cells.len(),
            });
        }
        Ok(&cells[index as usize - 1])
    }

    #[inline]
    fn target(&self, t: &Target) -> Result<&AtomicU64, Fault> {
        match &t.index {
            None => Ok(&self.frame[t.slot][0]),
            Some(i) => self.cell(t.slot, self.int(i)?),
        }
    }

    fn real(&self, e: &RExpr) -> Result<f64, Fault> {
        Ok(match e {
            RExpr::Const(v) => *v,
            RExpr::Var(s) => load_f64(&self.frame[*s][0]),
            RExpr::Elem(s, i) => load_f64(self.cell(*s, self.int(i)?)?),
            RExpr::FromInt(i) => self.int(i)? as f64,
            RExpr::Neg(a) => -self.real(a)?,
            RExpr::Intr(f, a) => f.apply(self.real(a)?),
            RExpr::Bin(op, a, b) => {
                let (x, y) = (self.real(a)?, self.real(b)?);
                match op {
                    ArOp::Add => x + y,
                    ArOp::Sub => x - y,
                    ArOp::Mul => x * y,
                    ArOp::Div => x / y,
                }
            }
        })
    }

    fn int(&self, e: &IExpr) -> Result<i64, Fault> {
        Ok(match e {
            IExpr::Const(v) => *v,
            IExpr::Var(s) => self.frame[*s][0].load(Ordering::Relaxed) as i64,
            IExpr::Neg(a) => self.int(a)?.wrapping_neg(),
            IExpr::Bin(op, a, b) => {
                let (x, y) = (self.int(a)?, self.int(b)?);
                match op {
                    ArOp::Add => x.wrapping_add(y),
                    ArOp::Sub => x.wrapping_sub(y),
                    ArOp::Mul => x.wrapping_mul(y),
                    ArOp::Div => x.checked_div(y).ok_or(Fault::IntDivZero)?,
                }
            }
            IExpr::CmpR(op, a, b) => op.test(self.real(a)?, self.real(b)?) as i64,
            IExpr::CmpI(op, a, b) => op.test(self.int(a)?, self.int(b)?) as i64,
            IExpr::And(a, b) => (self.int(a)? != 0 && self.int(b)? != 0) as i64,
            IExpr::Or(a, b) => (self.int(a)? != 0 || self.int(b)? != 0) as i64,
            IExpr::Not(a) => (self.int(a)? == 0) as i64,
        })
    }
}

struct Ctx<'env, 'a> {
    prog: &'env Compiled,
    cfg: &'env ExecConfig,
    frame: &'a Frame,
    team: Option<&'a Team>,
    /// Worksharing loops met so far in the current region.
    ws_seen: usize,
}

fn store_int(cell: &AtomicU64, v: i64) {
    cell.store(v as u64, Ordering::Relaxed);
}

impl<'env: 'a, 'a> Ctx<'env, 'a> {
    fn mem(&self) -> Mem<'a> {
        Mem {
            frame: self.frame,
            vars: &self.prog.vars,
        }
    }

    /// Sequential code on thread 0; parallel regions go to the pool.
    fn serial_block(
        &mut self,
        ops: &'env [Op],
        ts: &mut ThreadState,
        pool: &mut Pool<'env>,
        global: &Frame,
    ) -> Result<(), Trap> {
        for op in ops {
            match &op.kind {
                OpKind::Region(r) => self.region(r, ts, pool, global)?,
                OpKind::Loop(lp) => {
                    let trip = self.trip(lp, ts.tid, op.site)?;
                    let (start, stride) = trip.1;
                    for k in 0..trip.0 {
                        store_int(&self.frame[lp.counter][0], start + k as i64 * stride);
                        self.serial_block(&lp.body, ts, pool, global)?;
                    }
                    store_int(&self.frame[lp.counter][0], start + trip.0 as i64 * stride);
                }
                OpKind::If(c, a, b) => {
                    let branch = self.mem().int(c).map_err(|f| trap(ts.tid, op.site, f))?;
                    self.serial_block(if branch != 0 { a } else { b }, ts, pool, global)?;
                }
                _ => self.op(op, ts)?,
            }
        }
        Ok(())
    }

    fn region(
        &mut self,
        r: &'env RegionIr,
        ts: &mut ThreadState,
        pool: &mut Pool<'env>,
        global: &Frame,
    ) -> Result<(), Trap> {
        let nt = self.cfg.nthreads;
        pool.regions += 1;
        let team = Arc::new(Team::new(nt, pool.regions, self.cfg.dynamic));
        let frames: Arc<Mutex<Vec<Option<Frame>>>> = Arc::new(Mutex::new(vec![None; nt]));
        for w in &pool.workers {
            let (team, frames, global) = (team.clone(), frames.clone(), global.clone());
            let (prog, cfg) = (self.prog, self.cfg);
            let job: Job<'env> = Box::new(move |ts: &mut ThreadState| {
                member(prog, cfg, r, &global, &team, &frames, ts)
            });
            w.send(job).expect("worker alive");
        }
        let mine = member(self.prog, self.cfg, r, global, &team, &frames, ts);
        let mut first: Option<Trap> = mine.err();
        for _ in 0..pool.workers.len() {
            let (_, res) = pool.done.recv().expect("worker alive");
            if let Err(t) = res {
                let replace = match &first {
                    None => true,
                    Some(f) => f.fault == Fault::TeamAborted && t.fault != Fault::TeamAborted,
                };
                if replace {
                    first = Some(t);
                }
            }
        }
        if let Some(t) = first {
            return Err(t);
        }
        let frames = frames.lock().unwrap();
        let owner = team.last_owner.load(Ordering::Relaxed);
        for &(slot, scope) in &r.private {
            match scope {
                Scope::ReductionSum => {
                    let is_int = matches!(self.prog.vars[slot].kind, SlotKind::Int);
                    for (k, cell) in global[slot].iter().enumerate() {
                        if is_int {
                            let mut v = cell.load(Ordering::Relaxed) as i64;
                            for f in frames.iter().flatten() {
                                v = v.wrapping_add(f[slot][k].load(Ordering::Relaxed) as i64);
                            }
                            store_int(cell, v);
                        } else {
                            let mut v = load_f64(cell);
                            for f in frames.iter().flatten() {
                                v += load_f64(&f[slot][k]);
                            }
                            store_f64(cell, v);
                        }
                    }
                }
                Scope::LastPrivate if owner != usize::MAX => {
                    let src = &frames[owner].as_ref().expect("member frame")[slot];
                    for (dst, s) in global[slot].iter().zip(src.iter()) {
                        dst.store(s.load(Ordering::Relaxed), Ordering::Relaxed);
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Loop trip count together with `(start, stride)`.
    fn trip(&self, lp: &LoopIr, tid: usize, site: usize) -> Result<(u64, (i64, i64)), Trap> {
        let m = self.mem();
        let f = |e| m.int(e).map_err(|f| trap(tid, site, f));
        let (start, end, stride) = (f(&lp.start)?, f(&lp.end)?, f(&lp.stride)?);
        let n = trip_count(start, end, stride).map_err(|e| trap(tid, site, e.into()))?;
        Ok((n, (start, stride)))
    }

    /// Code inside a parallel region, or a simple statement anywhere.
    fn block(&mut self, ops: &[Op], ts: &mut ThreadState) -> Result<(), Trap> {
        for op in ops {
            self.op(op, ts)?;
        }
        Ok(())
    }

    fn op(&mut self, op: &Op, ts: &mut ThreadState) -> Result<(), Trap> {
        let tid = ts.tid;
        let t = |f: Fault| trap(tid, op.site, f);
        let m = self.mem();
        match &op.kind {
            OpKind::AssignR(target, rhs) => {
                let v = m.real(rhs).map_err(t)?;
                store_f64(m.target(target).map_err(t)?, v);
            }
            OpKind::AssignI(slot, rhs) => store_int(&self.frame[*slot][0], m.int(rhs).map_err(t)?),
            OpKind::IncR {
                target,
                rhs,
                atomic,
            } => {
                let d = m.real(rhs).map_err(t)?;
                let cell = m.target(target).map_err(t)?;
                if *atomic {
                    atomic_add(cell, d);
                } else {
                    store_f64(cell, load_f64(cell) + d);
                }
            }
            OpKind::IncI(slot, rhs) => {
                let cell = &self.frame[*slot][0];
                let d = m.int(rhs).map_err(t)?;
                cell.fetch_add(d as u64, Ordering::Relaxed);
            }
            OpKind::Loop(lp) => {
                let (n, (start, stride)) = self.trip(lp, tid, op.site)?;
                let counter = &self.frame[lp.counter][0];
                for k in 0..n {
                    store_int(counter, start + k as i64 * stride);
                    self.block(&lp.body, ts)?;
                }
                store_int(counter, start + n as i64 * stride);
            }
            OpKind::If(c, a, b) => {
                let branch = m.int(c).map_err(t)?;
                self.block(if branch != 0 { a } else { b }, ts)?;
            }
            OpKind::Region(_) => return Err(t(Fault::NestedParallelism)),
            OpKind::Workshare(ws) => self.workshare(ws, ts, op.site)?,
            OpKind::PushR(e) => {
                let v = m.real(e).map_err(t)?;
                ts.tape.push_f64(v).map_err(|e| t(e.into()))?;
            }
            OpKind::PopR(target) => {
                let v = ts.tape.pop_f64().map_err(|e| t(e.into()))?;
                store_f64(m.target(target).map_err(t)?, v);
            }
            OpKind::PushI(e) => {
                let v = m.int(e).map_err(t)?;
                ts.tape.push_int(v).map_err(|e| t(e.into()))?;
            }
            OpKind::PopI(slot) => {
                let v = ts.tape.pop_int().map_err(|e| t(e.into()))?;
                store_int(&self.frame[*slot][0], v);
            }
            OpKind::StaticSchedule {
                bounds,
                start_out,
                end_out,
            } => {
                let b: Vec<i64> = bounds
                    .iter()
                    .map(|e| m.int(e))
                    .collect::<Result<_, _>>()
                    .map_err(t)?;
                let nt = self.team.map_or(1, |team| team.nthreads);
                let (cs, ce) = static_schedule(b[0], b[1], b[2], nt as i64, tid as i64)
                    .map_err(|e| t(e.into()))?;
                store_int(&self.frame[*start_out][0], cs);
                store_int(&self.frame[*end_out][0], ce);
            }
            OpKind::InitDynamic => ts.log.init(),
            OpKind::RecordDynamic(c, s) => {
                let (c, s) = (m.int(c).map_err(t)?, m.int(s).map_err(t)?);
                ts.log.record(&mut ts.tape, c, s).map_err(|e| t(e.into()))?;
            }
            OpKind::FinalizeDynamic => ts.log.finalize(&mut ts.tape).map_err(|e| t(e.into()))?,
        }
        Ok(())
    }

    fn workshare(
        &mut self,
        ws: &WorkshareIr,
        ts: &mut ThreadState,
        site: usize,
    ) -> Result<(), Trap> {
        let tid = ts.tid;
        let (n, (start, stride)) = self.trip(&ws.lp, tid, site)?;
        let Some(team) = self.team else {
            // Orphaned worksharing loop: a team of one.
            return self.logical(ws, 0..n, n, start, stride, ts);
        };
        let k = self.ws_seen;
        self.ws_seen += 1;
        let nt = team.nthreads as u64;
        match self.cfg.schedule.unwrap_or(ws.schedule) {
            Schedule::Static(None) => {
                self.logical(ws, static_block(n, nt, tid as u64), n, start, stride, ts)?;
            }
            Schedule::Static(Some(c)) => {
                for chunk in static_chunks(n, c.max(1) as u64, nt, tid as u64) {
                    self.logical(ws, chunk, n, start, stride, ts)?;
                }
            }
            Schedule::Dynamic(c) => {
                let d = team.dispenser(k, n, c.unwrap_or(1).max(1) as u64);
                while let Some(chunk) = d.next(tid) {
                    self.logical(ws, chunk, n, start, stride, ts)?;
                }
            }
        }
        if !team.barrier.wait() {
            return Err(trap(tid, site, Fault::TeamAborted));
        }
        Ok(())
    }

    fn logical(
        &mut self,
        ws: &WorkshareIr,
        range: std::ops::Range<u64>,
        n: u64,
        start: i64,
        stride: i64,
        ts: &mut ThreadState,
    ) -> Result<(), Trap> {
        let counter = &self.frame[ws.lp.counter][0];
        for k in range {
            store_int(counter, start + k as i64 * stride);
            self.block(&ws.lp.body, ts)?;
            if k + 1 == n {
                if let Some(team) = self.team {
                    team.note_last(ts.tid);
                }
            }
        }
        Ok(())
    }
}

fn trap(tid: usize, site: usize, fault: Fault) -> Trap {
    Trap { tid, site, fault }
}

/// One team member's share of a parallel region.
fn member(
    prog: &Compiled,
    cfg: &ExecConfig,
    r: &RegionIr,
    global: &Frame,
    team: &Team,
    frames: &Mutex<Vec<Option<Frame>>>,
    ts: &mut ThreadState,
) -> Result<(), Trap> {
    let mut frame = global.clone();
    for &(slot, scope) in &r.private {
        let src = &global[slot];
        frame[slot] = if scope == Scope::FirstPrivate {
            src.iter()
                .map(|c| AtomicU64::new(c.load(Ordering::Relaxed)))
                .collect()
        } else {
            zeros(src.len())
        };
    }
    let result = Ctx {
        prog,
        cfg,
        frame: &frame,
        team: Some(team),
        ws_seen: 0,
    }
    .block(&r.body, ts);
    if result.is_err() {
        team.barrier.poison();
    }
    frames.lock().unwrap()[ts.tid] = Some(frame);
    result
}
