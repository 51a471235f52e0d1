//! Adjoint-mode differentiation.
//!
//! The generated routine runs a forward sweep (the primal code plus tape
//! pushes and schedule recording) followed by a backward sweep (tape pops and
//! adjoint statements in reverse order). A value is pushed right before it is
//! overwritten, and only when some adjoint statement reads it later.
//!
//! Each parallel loop becomes two parallel regions. Threads run explicit
//! chunk loops: a static loop asks `get_static_schedule` for its block in
//! both sweeps, any other schedule records its chunks on the tape and
//! replays them backwards. Adjoint scoping follows [`decide_adjoint_scoping`].

use crate::analysis::{self, AccessPattern, AccessSummary, Cfg, RegionId};
use crate::ast::*;
use crate::deriv;
use crate::error::TransformError;
use crate::names::*;
use crate::validate::{const_int, validate};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct AdjointOptions {
    /// Largest per-thread footprint, in bytes, for which a read-only shared
    /// array gets a `reduction(+)` adjoint instead of atomic increments.
    pub privatization_budget: u64,
    /// Values for integer parameters, used to size symbolic array extents.
    pub size_hints: BTreeMap<String, i64>,
    /// Push every overwritten value, not only those the backward sweep reads.
    pub save_all_kills: bool,
}

pub const DEFAULT_PRIVATIZATION_BUDGET: u64 = 8 << 20;

impl Default for AdjointOptions {
    fn default() -> Self {
        AdjointOptions {
            privatization_budget: DEFAULT_PRIVATIZATION_BUDGET,
            size_hints: BTreeMap::new(),
            save_all_kills: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AdjointScope {
    Private,
    FirstPrivate,
    ReductionSum,
    Shared,
    /// Shared, with every increment of the adjoint marked atomic.
    SharedAtomic,
}

impl fmt::Display for AdjointScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdjointScope::Private => "private",
            AdjointScope::FirstPrivate => "firstprivate",
            AdjointScope::ReductionSum => "reduction(+)",
            AdjointScope::Shared => "shared",
            AdjointScope::SharedAtomic => "shared_atomic_increments",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScopingSource {
    Rule,
    DecisionTree,
    UserOverride,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdjointScoping {
    pub var: Ident,
    pub primal_scope: Scope,
    pub adjoint_scope: AdjointScope,
    pub source: ScopingSource,
    /// Set when a user override contradicts what the analysis could prove.
    pub warning: Option<String>,
}

/// Chooses the scoping of `v̄` in the backward region.
///
/// Privatized primal scopes map by fixed rule. For shared variables a user
/// override wins; otherwise a variable touched by a single thread or only by
/// atomic increments keeps a shared adjoint, a read-only variable gets a
/// reduction when `fits_budget` holds and atomic increments otherwise, and
/// anything unproven falls back to atomic increments.
pub fn decide_adjoint_scoping(
    summary: &AccessSummary,
    primal_scope: Scope,
    override_scope: Option<OverrideScope>,
    fits_budget: bool,
) -> AdjointScoping {
    let make = |adjoint_scope, source, warning| AdjointScoping {
        var: summary.var.clone(),
        primal_scope,
        adjoint_scope,
        source,
        warning,
    };
    let rule = match primal_scope {
        Scope::Private => Some(AdjointScope::Private),
        Scope::FirstPrivate => Some(AdjointScope::ReductionSum),
        Scope::ReductionSum | Scope::LastPrivate => Some(AdjointScope::FirstPrivate),
        Scope::Shared => None,
    };
    if let Some(s) = rule {
        return make(s, ScopingSource::Rule, None);
    }
    let pattern = summary.pattern;
    if let Some(ov) = override_scope {
        let (scope, risky) = match ov {
            OverrideScope::Shared => (
                AdjointScope::Shared,
                matches!(
                    pattern,
                    AccessPattern::ReadOnly | AccessPattern::MixedUnprovable
                ),
            ),
            OverrideScope::ReductionSum => (
                AdjointScope::ReductionSum,
                matches!(
                    pattern,
                    AccessPattern::ExclusiveSingleThread | AccessPattern::MixedUnprovable
                ),
            ),
            OverrideScope::Atomic => (AdjointScope::SharedAtomic, false),
        };
        let warning = risky.then(|| {
            format!(
                "override {} on `{}` is not proven safe (access pattern {pattern})",
                ov.clause_name(),
                summary.var
            )
        });
        return make(scope, ScopingSource::UserOverride, warning);
    }
    let scope = match pattern {
        AccessPattern::NotAccessed
        | AccessPattern::ExclusiveSingleThread
        | AccessPattern::AtomicIncrementOnly => AdjointScope::Shared,
        AccessPattern::ReadOnly if fits_budget => AdjointScope::ReductionSum,
        AccessPattern::ReadOnly | AccessPattern::MixedUnprovable => AdjointScope::SharedAtomic,
    };
    make(scope, ScopingSource::DecisionTree, None)
}

/// Adjoint routine plus the scoping decisions taken for each region.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointOutput {
    pub program: Program,
    pub scopings: Vec<(RegionId, AdjointScoping)>,
    pub warnings: Vec<String>,
}

pub fn differentiate_adjoint(program: &Program) -> Result<Program, TransformError> {
    differentiate_adjoint_with(program, &AdjointOptions::default()).map(|o| o.program)
}

pub fn differentiate_adjoint_with(
    program: &Program,
    opts: &AdjointOptions,
) -> Result<AdjointOutput, TransformError> {
    check_derivative_names(program, adjoint_name)?;
    check_supported(&program.body)?;
    let cfg = analysis::propagate_scoping(analysis::build_cfg(program));
    let needed = needed_set(program);
    let mut adj = Adjoint {
        prog: program,
        opts,
        cfg,
        needed,
        next_region: 0,
        region: None,
        aux: BTreeMap::new(),
        scopings: Vec::new(),
        warnings: Vec::new(),
    };
    let (fw, bw) = adj.block(&program.body)?;

    let mut params = Vec::new();
    for p in &program.params {
        params.push(p.clone());
        if p.active {
            params.push(VarDecl::param(
                &adjoint_name(&p.name),
                p.kind.clone(),
                Intent::InOut,
                false,
            ));
        }
    }
    let mut locals = Vec::new();
    for l in &program.locals {
        locals.push(l.clone());
        if l.active {
            locals.push(VarDecl::local(&adjoint_name(&l.name), l.kind.clone()));
        }
    }
    for (name, kind) in &adj.aux {
        locals.push(VarDecl::local(name, kind.clone()));
    }
    let mut body = fw;
    body.extend(bw);
    let mut out = Program {
        name: adjoint_routine(&program.name),
        params,
        locals,
        body,
    };
    validate(&mut out)?;
    Ok(AdjointOutput {
        program: out,
        scopings: adj.scopings,
        warnings: adj.warnings,
    })
}

fn check_supported(body: &[Stmt]) -> Result<(), TransformError> {
    let mut err = None;
    walk_block(body, &mut |s| match s {
        Stmt::Call { func, .. } if err.is_none() => {
            err = Some(format!("differentiating a call to `{}`", func.name()))
        }
        Stmt::ParallelRegion { .. } | Stmt::WorkshareLoop { .. } if err.is_none() => {
            err = Some("differentiating an already split parallel region".into())
        }
        _ => {}
    });
    match err {
        Some(e) => Err(TransformError::Unsupported(e)),
        None => Ok(()),
    }
}

/// Variables whose primal value some backward statement reads: operands of
/// partial derivatives, indices of adjoint references, loop bounds, and the
/// indices of array cells that are themselves saved. Reads of a loop counter
/// inside its own loop are excluded because the reversed loop rebuilds it.
pub fn needed_set(prog: &Program) -> BTreeSet<Ident> {
    let mut needed = BTreeSet::new();
    loop {
        let mut next = needed.clone();
        let mut counters = Vec::new();
        needed_block(prog, &prog.body, &needed, &mut counters, &mut next);
        if next == needed {
            return needed;
        }
        needed = next;
    }
}

fn needed_block(
    prog: &Program,
    body: &[Stmt],
    needed: &BTreeSet<Ident>,
    counters: &mut Vec<Ident>,
    out: &mut BTreeSet<Ident>,
) {
    let add = |e: &Expr, counters: &Vec<Ident>, out: &mut BTreeSet<Ident>| {
        for v in e.var_set() {
            if !counters.contains(&v) {
                out.insert(v);
            }
        }
    };
    let act = |n: &str| prog.is_active(n);
    for s in body {
        match s {
            Stmt::Assign { lhs, rhs } | Stmt::Increment { lhs, rhs, .. } => {
                if act(&lhs.name) {
                    let seed = Expr::var(TMP_ADJ);
                    for (r, term) in deriv::adjoint_terms(rhs, seed, &act) {
                        add(&term, counters, out);
                        if let Some(i) = &r.index {
                            add(i, counters, out);
                        }
                    }
                    if let Some(i) = &lhs.index {
                        add(i, counters, out);
                    }
                }
                if needed.contains(&lhs.name) {
                    if let Some(i) = &lhs.index {
                        add(i, counters, out);
                    }
                }
            }
            Stmt::SeqLoop(lp) | Stmt::ParallelLoop { lp, .. } | Stmt::WorkshareLoop { lp, .. } => {
                for e in [&lp.start, &lp.end, &lp.stride] {
                    add(e, counters, out);
                }
                counters.push(lp.counter.clone());
                needed_block(prog, &lp.body, needed, counters, out);
                counters.pop();
            }
            Stmt::If {
                then_body,
                else_body,
                ..
            } => {
                needed_block(prog, then_body, needed, counters, out);
                needed_block(prog, else_body, needed, counters, out);
            }
            Stmt::ParallelRegion { body, .. } => needed_block(prog, body, needed, counters, out),
            Stmt::Call { .. } => {}
        }
    }
    out.remove(TMP_ADJ);
}

/// Per-region state while generating the body of a parallel loop.
#[derive(Default)]
struct RegionCtx {
    /// Primal names whose adjoint increments must be atomic.
    atomic_adj: BTreeSet<Ident>,
    /// Primal names saved once around the region instead of per statement.
    hoisted: BTreeSet<Ident>,
    /// Auxiliaries referenced in the region; they become private.
    aux_used: BTreeSet<Ident>,
}

struct Adjoint<'a> {
    prog: &'a Program,
    opts: &'a AdjointOptions,
    cfg: Cfg,
    needed: BTreeSet<Ident>,
    next_region: usize,
    region: Option<RegionCtx>,
    aux: BTreeMap<Ident, VarKind>,
    scopings: Vec<(RegionId, AdjointScoping)>,
    warnings: Vec<String>,
}

type Sweeps = (Vec<Stmt>, Vec<Stmt>);

fn adj_ref(r: &Ref) -> Ref {
    r.with_name(&adjoint_name(&r.name))
}

fn int_if(cond: Expr, then_body: Vec<Stmt>) -> Stmt {
    Stmt::If {
        cond,
        then_body,
        else_body: Vec::new(),
    }
}

impl Adjoint<'_> {
    fn active(&self, name: &str) -> bool {
        self.prog.is_active(name)
    }

    fn is_int(&self, name: &str) -> bool {
        self.prog.decl(name).is_some_and(|d| d.kind == VarKind::Int)
    }

    /// Registers an auxiliary local and returns its name.
    fn aux(&mut self, name: &str, kind: VarKind) -> String {
        self.aux.entry(name.to_string()).or_insert(kind);
        if let Some(r) = self.region.as_mut() {
            r.aux_used.insert(name.to_string());
        }
        name.to_string()
    }

    fn aux_int(&mut self, name: &str) -> Expr {
        Expr::var(&self.aux(name, VarKind::Int))
    }

    fn push(&self, r: &Ref) -> Stmt {
        let f = if self.is_int(&r.name) {
            RuntimeCall::PushInteger4
        } else {
            RuntimeCall::PushReal8
        };
        Stmt::call(f, vec![r.to_expr()])
    }

    fn pop(&self, r: &Ref) -> Stmt {
        let f = if self.is_int(&r.name) {
            RuntimeCall::PopInteger4
        } else {
            RuntimeCall::PopReal8
        };
        Stmt::call(f, vec![r.to_expr()])
    }

    /// Saves every element of `name` in serial code.
    fn push_whole(&mut self, name: &str) -> Stmt {
        match self.prog.decl(name).map(|d| d.kind.clone()) {
            Some(VarKind::RealArray(ext)) => {
                let k = self.aux_int(ELEM_INDEX);
                let cell = Ref::elem(name, k);
                let body = vec![self.push(&cell)];
                Stmt::SeqLoop(Loop::new(ELEM_INDEX, Expr::Int(1), ext, Expr::Int(1), body))
            }
            _ => self.push(&Ref::scalar(name)),
        }
    }

    fn pop_whole(&mut self, name: &str) -> Stmt {
        match self.prog.decl(name).map(|d| d.kind.clone()) {
            Some(VarKind::RealArray(ext)) => {
                let k = self.aux_int(ELEM_INDEX);
                let cell = Ref::elem(name, k);
                let body = vec![self.pop(&cell)];
                Stmt::SeqLoop(Loop::new(
                    ELEM_INDEX,
                    ext,
                    Expr::Int(1),
                    Expr::Int(-1),
                    body,
                ))
            }
            _ => self.pop(&Ref::scalar(name)),
        }
    }

    fn needs(&self, name: &str) -> bool {
        self.opts.save_all_kills || self.needed.contains(name)
    }

    fn saves(&self, name: &str) -> bool {
        self.needs(name)
            && !self
                .region
                .as_ref()
                .is_some_and(|r| r.hoisted.contains(name))
    }

    fn atomic_for(&self, name: &str) -> bool {
        self.region
            .as_ref()
            .is_some_and(|r| r.atomic_adj.contains(name))
    }

    fn block(&mut self, body: &[Stmt]) -> Result<Sweeps, TransformError> {
        let mut fw = Vec::new();
        let mut bws = Vec::new();
        for s in body {
            let (f, b) = self.stmt(s)?;
            fw.extend(f);
            bws.push(b);
        }
        let bw = bws.into_iter().rev().flatten().collect();
        Ok((fw, bw))
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Sweeps, TransformError> {
        match s {
            Stmt::Assign { lhs, rhs } => self.assignment(lhs, rhs, None),
            Stmt::Increment { lhs, rhs, atomic } => self.assignment(lhs, rhs, Some(*atomic)),
            Stmt::SeqLoop(lp) => self.seq_loop(lp),
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => self.if_stmt(cond, then_body, else_body),
            Stmt::ParallelLoop { lp, clauses } => self.parallel_loop(lp, clauses),
            Stmt::ParallelRegion { .. } | Stmt::WorkshareLoop { .. } | Stmt::Call { .. } => Err(
                TransformError::Unsupported("generated construct in input".into()),
            ),
        }
    }

    /// `increment` is `None` for a plain assignment and `Some(atomic)` for
    /// `+=`.
    fn assignment(
        &mut self,
        lhs: &Ref,
        rhs: &Expr,
        increment: Option<bool>,
    ) -> Result<Sweeps, TransformError> {
        let mut fw = Vec::new();
        let mut bw = Vec::new();
        let save = self.saves(&lhs.name);
        if save {
            fw.push(self.push(lhs));
            bw.push(self.pop(lhs));
        }
        fw.push(match increment {
            None => Stmt::assign(lhs.clone(), rhs.clone()),
            Some(atomic) => Stmt::increment(lhs.clone(), rhs.clone(), atomic),
        });
        if !self.active(&lhs.name) {
            return Ok((fw, bw));
        }

        let lhs_b = adj_ref(lhs);
        let self_ref = rhs.refs().iter().any(|r| r.name == lhs.name);
        let seed = if self_ref {
            let tmp = Expr::var(&self.aux(TMP_ADJ, VarKind::Real));
            bw.push(Stmt::assign(Ref::scalar(TMP_ADJ), lhs_b.to_expr()));
            if increment.is_none() {
                bw.push(Stmt::assign(lhs_b.clone(), Expr::Int(0)));
            }
            tmp
        } else {
            lhs_b.to_expr()
        };
        let act = |n: &str| self.prog.is_active(n);
        for (r, term) in deriv::adjoint_terms(rhs, seed, &act) {
            let atomic = self.atomic_for(&r.name);
            bw.push(Stmt::increment(adj_ref(&r), term, atomic));
        }
        if increment.is_none() && !self_ref {
            bw.push(Stmt::assign(lhs_b, Expr::Int(0)));
        }
        Ok((fw, bw))
    }

    fn seq_loop(&mut self, lp: &Loop) -> Result<Sweeps, TransformError> {
        let (fb, bb) = self.block(&lp.body)?;
        let counter = Ref::scalar(&lp.counter);
        let save = self.saves(&lp.counter);
        let mut fw = Vec::new();
        let mut bw = Vec::new();
        if save {
            fw.push(self.push(&counter));
        }
        fw.push(Stmt::SeqLoop(Loop {
            body: fb,
            ..lp.clone()
        }));
        if !bb.is_empty() {
            bw.push(reversed_loop(lp, bb));
        }
        if save {
            bw.push(self.pop(&counter));
        }
        Ok((fw, bw))
    }

    fn if_stmt(
        &mut self,
        cond: &Expr,
        then_body: &[Stmt],
        else_body: &[Stmt],
    ) -> Result<Sweeps, TransformError> {
        let (mut ft, bt) = self.block(then_body)?;
        let (mut fe, be) = self.block(else_body)?;
        if bt.is_empty() && be.is_empty() {
            let fw = Stmt::If {
                cond: cond.clone(),
                then_body: ft,
                else_body: fe,
            };
            return Ok((vec![fw], Vec::new()));
        }
        ft.push(Stmt::call(RuntimeCall::PushInteger4, vec![Expr::Int(1)]));
        fe.push(Stmt::call(RuntimeCall::PushInteger4, vec![Expr::Int(0)]));
        let flag = self.aux_int(BRANCH);
        let fw = vec![Stmt::If {
            cond: cond.clone(),
            then_body: ft,
            else_body: fe,
        }];
        let bw = vec![
            Stmt::call(RuntimeCall::PopInteger4, vec![flag.clone()]),
            Stmt::If {
                cond: Expr::cmp(BinOp::Eq, flag, Expr::Int(1)),
                then_body: bt,
                else_body: be,
            },
        ];
        Ok((fw, bw))
    }

    fn footprint_fits(&self, name: &str) -> bool {
        let budget = self.opts.privatization_budget;
        let Some(decl) = self.prog.decl(name) else {
            return true;
        };
        let cells = match &decl.kind {
            VarKind::RealArray(ext) => eval_hint(ext, &self.opts.size_hints),
            _ => Some(1),
        };
        match cells {
            Some(n) => (n.max(0) as u64).saturating_mul(8) <= budget,
            None => budget > 0,
        }
    }

    fn parallel_loop(&mut self, lp: &Loop, clauses: &ClauseSet) -> Result<Sweeps, TransformError> {
        let rid = self.next_region;
        self.next_region += 1;
        let region = self.cfg.regions[rid].clone();

        // Scoping decisions for every variable with an effective scope.
        let mut decisions: Vec<(Ident, Scope, Option<AdjointScoping>)> = Vec::new();
        let mut ctx = RegionCtx::default();
        for (v, scope) in clauses.all_scopes() {
            if region.counters.contains(v) {
                continue;
            }
            let decl = self.prog.decl(v).expect("validated program");
            if scope.is_privatized() && decl.kind.is_array() {
                return Err(TransformError::Unsupported(format!(
                    "adjoint of privatized array `{v}`"
                )));
            }
            let summary = analysis::classify_access(&self.cfg, rid, v);
            if scope == Scope::Shared && summary.pattern == AccessPattern::AtomicIncrementOnly {
                ctx.hoisted.insert(v.clone());
            }
            let decision = if self.active(v) {
                let d = decide_adjoint_scoping(
                    &summary,
                    scope,
                    clauses.ad_override.get(v).copied(),
                    self.footprint_fits(v),
                );
                if d.adjoint_scope == AdjointScope::SharedAtomic {
                    ctx.atomic_adj.insert(v.clone());
                }
                if let Some(w) = &d.warning {
                    self.warnings.push(w.clone());
                }
                self.scopings.push((rid, d.clone()));
                Some(d)
            } else {
                None
            };
            decisions.push((v.clone(), scope, decision));
        }

        let outer = self.region.replace(ctx);
        let body = self.block(&lp.body);
        let ctx = std::mem::replace(&mut self.region, outer).expect("region context");
        let (fw_body, bw_body) = body?;
        let mut aux_fw: BTreeSet<Ident> = ctx.aux_used.clone();
        let mut aux_bw: BTreeSet<Ident> = ctx.aux_used.clone();

        let lastprivates: Vec<Ident> = clauses
            .scoping
            .iter()
            .filter(|(_, s)| **s == Scope::LastPrivate)
            .map(|(v, _)| v.clone())
            .collect();
        let privatized: Vec<Ident> = decisions
            .iter()
            .filter(|(_, s, _)| s.is_privatized())
            .map(|(v, _, _)| v.clone())
            .collect();
        let saved_privates: Vec<Ident> = privatized
            .iter()
            .filter(|v| self.needs(v))
            .cloned()
            .collect();

        // Shared-side kills at region level, saved in serial code.
        let mut outer_saves: Vec<Ident> = Vec::new();
        for (v, s, _) in &decisions {
            let region_kill = match s {
                Scope::ReductionSum | Scope::LastPrivate => true,
                Scope::Shared => ctx.hoisted.contains(v),
                _ => false,
            };
            if region_kill && self.needs(v) {
                outer_saves.push(v.clone());
            }
        }

        if bw_body.is_empty() && saved_privates.is_empty() {
            let mut fw = Vec::new();
            for v in &outer_saves {
                let s = self.push_whole(v);
                fw.push(s);
            }
            let mut primal = clauses.clone();
            primal.ad_override.clear();
            fw.push(Stmt::ParallelLoop {
                lp: Loop {
                    body: fw_body,
                    ..lp.clone()
                },
                clauses: primal,
            });
            let mut bw = Vec::new();
            for v in lastprivates.iter().filter(|v| self.active(v)) {
                bw.push(Stmt::assign(Ref::scalar(&adjoint_name(v)), Expr::Int(0)));
            }
            for v in outer_saves.iter().rev() {
                let s = self.pop_whole(v);
                bw.push(s);
            }
            return Ok((fw, bw));
        }

        let is_static = matches!(clauses.schedule, Some(Schedule::Static(None)));
        let counter = Expr::var(&lp.counter);
        let last_value = last_iteration(lp);

        // Forward region body.
        let mut fw_loop_body = fw_body;
        for v in &lastprivates {
            fw_loop_body = fw_loop_body
                .iter()
                .map(|s| rename_stmt(s, v, &lastprivate_copy(v)))
                .collect();
        }
        let mut fwr = Vec::new();
        let lastiter = if lastprivates.is_empty() {
            None
        } else {
            let li = self.aux_int(LAST_ITER);
            for v in &lastprivates {
                let kind = self.prog.decl(v).expect("declared").kind.clone();
                self.aux(&lastprivate_copy(v), kind);
                aux_fw.insert(lastprivate_copy(v));
            }
            aux_fw.insert(LAST_ITER.into());
            aux_bw.insert(LAST_ITER.into());
            fwr.push(Stmt::assign(Ref::scalar(LAST_ITER), Expr::Int(0)));
            fw_loop_body.push(int_if(
                Expr::cmp(BinOp::Eq, counter.clone(), last_value.clone()),
                vec![Stmt::assign(Ref::scalar(LAST_ITER), Expr::Int(1))],
            ));
            Some(li)
        };

        let (cs, ce) = (self.aux_int(CHUNK_START), self.aux_int(CHUNK_END));
        let neg_stride = Expr::neg(lp.stride.clone());
        if is_static {
            aux_fw.extend([CHUNK_START.to_string(), CHUNK_END.to_string()]);
            fwr.push(Stmt::call(
                RuntimeCall::GetStaticSchedule,
                vec![
                    lp.start.clone(),
                    lp.end.clone(),
                    lp.stride.clone(),
                    cs.clone(),
                    ce.clone(),
                ],
            ));
            fwr.push(Stmt::SeqLoop(Loop::new(
                &lp.counter,
                cs.clone(),
                ce.clone(),
                lp.stride.clone(),
                fw_loop_body,
            )));
        } else {
            let schedule = clauses.schedule.unwrap_or(Schedule::Dynamic(None));
            let mut body = vec![Stmt::call(
                RuntimeCall::RecordDynamicSchedule,
                vec![counter.clone(), lp.stride.clone()],
            )];
            body.extend(fw_loop_body);
            fwr.push(Stmt::call(RuntimeCall::InitDynamicSchedule, vec![]));
            fwr.push(Stmt::WorkshareLoop {
                lp: Loop::new(
                    &lp.counter,
                    lp.start.clone(),
                    lp.end.clone(),
                    lp.stride.clone(),
                    body,
                ),
                schedule,
            });
            fwr.push(Stmt::call(RuntimeCall::FinalizeDynamicSchedule, vec![]));
        }
        for v in &lastprivates {
            fwr.push(int_if(
                Expr::cmp(BinOp::Eq, Expr::var(LAST_ITER), Expr::Int(1)),
                vec![Stmt::assign(
                    Ref::scalar(v),
                    Expr::var(&lastprivate_copy(v)),
                )],
            ));
        }
        for v in &saved_privates {
            let name = if lastprivates.contains(v) {
                lastprivate_copy(v)
            } else {
                v.clone()
            };
            let f = if self.is_int(v) {
                RuntimeCall::PushInteger4
            } else {
                RuntimeCall::PushReal8
            };
            fwr.push(Stmt::call(f, vec![Expr::var(&name)]));
        }
        if let Some(li) = &lastiter {
            fwr.push(Stmt::call(RuntimeCall::PushInteger4, vec![li.clone()]));
        }

        // Forward clauses: primal scoping with lastprivate rewritten.
        let mut fwc = ClauseSet::default();
        for (v, s) in &clauses.scoping {
            match s {
                Scope::LastPrivate => {
                    fwc.push(v, Scope::Shared);
                    fwc.push(&lastprivate_copy(v), Scope::Private);
                }
                other => fwc.push(v, *other),
            }
        }
        for a in &aux_fw {
            if !fwc.scoping.contains_key(a) {
                fwc.push(a, Scope::Private);
            }
        }

        // Backward region body.
        let mut bwr = Vec::new();
        if let Some(li) = &lastiter {
            bwr.push(Stmt::call(RuntimeCall::PopInteger4, vec![li.clone()]));
        }
        for v in saved_privates.iter().rev() {
            bwr.push(self.pop(&Ref::scalar(v)));
        }
        for (v, s, d) in &decisions {
            if d.is_none() {
                continue;
            }
            let vb = Ref::scalar(&adjoint_name(v));
            match s {
                Scope::Private => bwr.push(Stmt::assign(vb, Expr::Int(0))),
                Scope::LastPrivate => bwr.push(int_if(
                    Expr::cmp(BinOp::Eq, Expr::var(LAST_ITER), Expr::Int(0)),
                    vec![Stmt::assign(vb, Expr::Int(0))],
                )),
                _ => {}
            }
        }
        if is_static {
            aux_bw.extend([CHUNK_START.to_string(), CHUNK_END.to_string()]);
            bwr.push(Stmt::call(
                RuntimeCall::GetStaticSchedule,
                vec![
                    lp.start.clone(),
                    lp.end.clone(),
                    lp.stride.clone(),
                    cs.clone(),
                    ce.clone(),
                ],
            ));
            bwr.push(Stmt::SeqLoop(Loop::new(
                &lp.counter,
                ce,
                cs,
                neg_stride,
                bw_body,
            )));
        } else {
            let n = self.aux_int(NUM_CHUNKS);
            let k = self.aux_int(CHUNK_INDEX);
            let Expr::Var(k) = k else { unreachable!() };
            aux_bw.extend([
                CHUNK_START.to_string(),
                CHUNK_END.to_string(),
                NUM_CHUNKS.to_string(),
                CHUNK_INDEX.to_string(),
            ]);
            bwr.push(Stmt::call(RuntimeCall::PopInteger4, vec![n.clone()]));
            let chunk_body = vec![
                Stmt::call(RuntimeCall::PopInteger4, vec![ce.clone()]),
                Stmt::call(RuntimeCall::PopInteger4, vec![cs.clone()]),
                Stmt::SeqLoop(Loop::new(&lp.counter, ce, cs, neg_stride, bw_body)),
            ];
            bwr.push(Stmt::SeqLoop(Loop::new(
                &k,
                Expr::Int(1),
                n,
                Expr::Int(1),
                chunk_body,
            )));
        }
        // Auxiliaries registered while building the forward or backward bodies.
        let mut bwc = ClauseSet::default();
        bwc.push(&lp.counter, Scope::Private);
        for (v, s, d) in &decisions {
            let vb = adjoint_name(v);
            match (d.as_ref().map(|d| d.adjoint_scope), s) {
                (None, s) if s.is_privatized() => bwc.push(v, Scope::Private),
                (None, _) => {
                    if clauses.is_explicit(v) {
                        bwc.push(v, Scope::Shared);
                    }
                }
                (Some(AdjointScope::Private), _) => {
                    bwc.push(&vb, Scope::Private);
                    bwc.push(v, Scope::Private);
                }
                (Some(AdjointScope::FirstPrivate), _) => {
                    bwc.push(&vb, Scope::FirstPrivate);
                    bwc.push(v, Scope::Private);
                }
                (Some(AdjointScope::ReductionSum), s) => {
                    bwc.push(&vb, Scope::ReductionSum);
                    let primal = if s.is_privatized() {
                        Scope::Private
                    } else {
                        Scope::Shared
                    };
                    bwc.push(v, primal);
                }
                (Some(AdjointScope::Shared | AdjointScope::SharedAtomic), _) => {
                    bwc.push(&vb, Scope::Shared);
                    bwc.push(v, Scope::Shared);
                }
            }
        }
        for a in &aux_bw {
            if !bwc.scoping.contains_key(a) {
                bwc.push(a, Scope::Private);
            }
        }

        let mut fw = Vec::new();
        for v in &outer_saves {
            let s = self.push_whole(v);
            fw.push(s);
        }
        fw.push(Stmt::ParallelRegion {
            clauses: fwc,
            body: fwr,
        });
        let mut bw = vec![Stmt::ParallelRegion {
            clauses: bwc,
            body: bwr,
        }];
        for v in &lastprivates {
            if self.active(v) {
                bw.push(Stmt::assign(Ref::scalar(&adjoint_name(v)), Expr::Int(0)));
            }
        }
        for v in outer_saves.iter().rev() {
            let s = self.pop_whole(v);
            bw.push(s);
        }
        Ok((fw, bw))
    }
}

/// Counter value of the last logical iteration of a loop with at least one
/// iteration.
fn last_iteration(lp: &Loop) -> Expr {
    if lp.stride == Expr::Int(1) {
        return lp.end.clone();
    }
    let span = Expr::sub(lp.end.clone(), lp.start.clone());
    let steps = Expr::div(span, lp.stride.clone());
    Expr::add(lp.start.clone(), Expr::mul(steps, lp.stride.clone()))
}

/// The same iterations as `lp`, visited in reverse order.
fn reversed_loop(lp: &Loop, body: Vec<Stmt>) -> Stmt {
    let neg = Expr::neg(lp.stride.clone());
    if matches!(const_int(&lp.stride), Some(1) | Some(-1)) {
        return Stmt::SeqLoop(Loop::new(
            &lp.counter,
            lp.end.clone(),
            lp.start.clone(),
            neg,
            body,
        ));
    }
    let span = Expr::sub(lp.end.clone(), lp.start.clone());
    let nonempty = Expr::cmp(BinOp::Ge, Expr::mul(span, lp.stride.clone()), Expr::Int(0));
    Stmt::If {
        cond: nonempty,
        then_body: vec![Stmt::SeqLoop(Loop::new(
            &lp.counter,
            last_iteration(lp),
            lp.start.clone(),
            neg,
            body,
        ))],
        else_body: Vec::new(),
    }
}

fn eval_hint(e: &Expr, hints: &BTreeMap<String, i64>) -> Option<i64> {
    match e {
        Expr::Int(v) => Some(*v),
        Expr::Var(n) => hints.get(n).copied(),
        Expr::Unary(UnOp::Neg, a) => eval_hint(a, hints).map(|v| -v),
        Expr::Binary(op, a, b) => {
            let (a, b) = (eval_hint(a, hints)?, eval_hint(b, hints)?);
            match op {
                BinOp::Add => a.checked_add(b),
                BinOp::Sub => a.checked_sub(b),
                BinOp::Mul => a.checked_mul(b),
                BinOp::Div if b != 0 => Some(a / b),
                _ => None,
            }
        }
        _ => None,
    }
}

fn rename_stmt(s: &Stmt, from: &str, to: &str) -> Stmt {
    let rb = |b: &[Stmt]| {
        b.iter()
            .map(|s| rename_stmt(s, from, to))
            .collect::<Vec<_>>()
    };
    let rl = |lp: &Loop| Loop {
        counter: if lp.counter == from {
            to.to_string()
        } else {
            lp.counter.clone()
        },
        start: lp.start.rename(from, to),
        end: lp.end.rename(from, to),
        stride: lp.stride.rename(from, to),
        body: rb(&lp.body),
    };
    match s {
        Stmt::Assign { lhs, rhs } => Stmt::assign(lhs.rename(from, to), rhs.rename(from, to)),
        Stmt::Increment { lhs, rhs, atomic } => {
            Stmt::increment(lhs.rename(from, to), rhs.rename(from, to), *atomic)
        }
        Stmt::SeqLoop(lp) => Stmt::SeqLoop(rl(lp)),
        Stmt::ParallelLoop { lp, clauses } => Stmt::ParallelLoop {
            lp: rl(lp),
            clauses: clauses.clone(),
        },
        Stmt::WorkshareLoop { lp, schedule } => Stmt::WorkshareLoop {
            lp: rl(lp),
            schedule: *schedule,
        },
        Stmt::If {
            cond,
            then_body,
            else_body,
        } => Stmt::If {
            cond: cond.rename(from, to),
            then_body: rb(then_body),
            else_body: rb(else_body),
        },
        Stmt::ParallelRegion { clauses, body } => Stmt::ParallelRegion {
            clauses: clauses.clone(),
            body: rb(body),
        },
        Stmt::Call { func, args } => Stmt::Call {
            func: *func,
            args: args.iter().map(|a| a.rename(from, to)).collect(),
        },
    }
}
