//! Semantic checks and implicit clause scoping.
//!
//! [`validate`] is idempotent: it recomputes [`ClauseSet::defaults`] for every
//! parallel construct from scratch, so a transformed program can be passed
//! through it again before emission.

use crate::ast::*;
use crate::error::SemanticError;
use indexmap::IndexSet;
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ty {
    Int,
    Real,
    Bool,
}

const RESERVED: &[&str] = &[
    "subroutine",
    "end",
    "do",
    "enddo",
    "if",
    "endif",
    "then",
    "else",
    "call",
    "real",
    "integer",
    "intent",
    "active",
    "sin",
    "cos",
    "exp",
    "sqrt",
];

pub fn is_reserved(name: &str) -> bool {
    RESERVED.contains(&name)
}

/// Variable table of one routine.
pub struct Symbols<'a> {
    map: HashMap<&'a str, &'a VarDecl>,
}

impl<'a> Symbols<'a> {
    pub fn new(prog: &'a Program) -> Self {
        Symbols {
            map: prog.decls().map(|d| (d.name.as_str(), d)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&'a VarDecl, SemanticError> {
        self.map
            .get(name)
            .copied()
            .ok_or_else(|| SemanticError::Undeclared(name.to_string()))
    }

    pub fn type_of(&self, e: &Expr) -> Result<Ty, SemanticError> {
        match e {
            Expr::Real(_) => Ok(Ty::Real),
            Expr::Int(_) => Ok(Ty::Int),
            Expr::Var(n) => {
                let d = self.get(n)?;
                match d.kind {
                    VarKind::Real => Ok(Ty::Real),
                    VarKind::Int => Ok(Ty::Int),
                    VarKind::RealArray(_) => Err(SemanticError::Type(format!(
                        "array `{n}` used without an index"
                    ))),
                }
            }
            Expr::Elem(n, idx) => {
                let d = self.get(n)?;
                if !d.kind.is_array() {
                    return Err(SemanticError::Type(format!("`{n}` is not an array")));
                }
                if self.type_of(idx)? != Ty::Int {
                    return Err(SemanticError::Type(format!(
                        "index of `{n}` must be an integer expression"
                    )));
                }
                Ok(Ty::Real)
            }
            Expr::Unary(UnOp::Neg, a) => self.numeric(a),
            Expr::Unary(UnOp::Not, a) => {
                self.expect_bool(a)?;
                Ok(Ty::Bool)
            }
            Expr::Intrinsic(f, a) => {
                self.numeric(a).map_err(|_| {
                    SemanticError::Type(format!("`{}` needs a numeric argument", f.name()))
                })?;
                Ok(Ty::Real)
            }
            Expr::Binary(op, a, b) if op.is_arithmetic() => {
                let (ta, tb) = (self.numeric(a)?, self.numeric(b)?);
                Ok(if ta == Ty::Int && tb == Ty::Int {
                    Ty::Int
                } else {
                    Ty::Real
                })
            }
            Expr::Binary(op, a, b) if op.is_comparison() => {
                self.numeric(a)?;
                self.numeric(b)?;
                Ok(Ty::Bool)
            }
            Expr::Binary(_, a, b) => {
                self.expect_bool(a)?;
                self.expect_bool(b)?;
                Ok(Ty::Bool)
            }
        }
    }

    fn numeric(&self, e: &Expr) -> Result<Ty, SemanticError> {
        match self.type_of(e)? {
            Ty::Bool => Err(SemanticError::Type(
                "logical value used in arithmetic".into(),
            )),
            t => Ok(t),
        }
    }

    fn expect_bool(&self, e: &Expr) -> Result<(), SemanticError> {
        match self.type_of(e)? {
            Ty::Bool => Ok(()),
            _ => Err(SemanticError::Type("condition must be logical".into())),
        }
    }

    fn expect_int(&self, e: &Expr, what: &str) -> Result<(), SemanticError> {
        match self.type_of(e)? {
            Ty::Int => Ok(()),
            _ => Err(SemanticError::Type(format!(
                "{what} must be an integer expression"
            ))),
        }
    }

    fn ref_type(&self, r: &Ref) -> Result<Ty, SemanticError> {
        self.type_of(&r.to_expr())
    }
}

/// Checks a program and fills in the implicit scopes of every parallel
/// construct.
pub fn validate(prog: &mut Program) -> Result<(), SemanticError> {
    check_decls(prog)?;
    let mut body = std::mem::take(&mut prog.body);
    let res = {
        let syms = Symbols::new(prog);
        let mut ctx = Ctx {
            syms: &syms,
            counters: Vec::new(),
            in_parallel: false,
            in_region: false,
            in_workshare: false,
        };
        ctx.block(&mut body)
    };
    prog.body = body;
    res
}

fn check_decls(prog: &Program) -> Result<(), SemanticError> {
    let mut seen = IndexSet::new();
    for d in prog.decls() {
        if is_reserved(&d.name) {
            return Err(SemanticError::ReservedName(d.name.clone()));
        }
        if !seen.insert(d.name.as_str()) {
            return Err(SemanticError::DuplicateDecl(d.name.clone()));
        }
        if d.active && !d.kind.is_real() {
            return Err(SemanticError::Type(format!(
                "integer `{}` cannot be active",
                d.name
            )));
        }
    }
    for d in &prog.params {
        if d.intent.is_none() {
            return Err(SemanticError::MissingIntent(d.name.clone()));
        }
    }
    for d in &prog.locals {
        if d.intent.is_some() {
            return Err(SemanticError::IntentOnLocal(d.name.clone()));
        }
    }
    let syms = Symbols::new(prog);
    for d in prog.decls() {
        if let VarKind::RealArray(ext) = &d.kind {
            let bad = |reason: &str| SemanticError::BadExtent {
                name: d.name.clone(),
                reason: reason.to_string(),
            };
            for v in ext.var_set() {
                let vd = syms.get(&v)?;
                if vd.kind != VarKind::Int || vd.intent != Some(Intent::In) {
                    return Err(bad("extents may only use integer intent(in) parameters"));
                }
            }
            if syms.type_of(ext)? != Ty::Int {
                return Err(bad("extent must be an integer expression"));
            }
            if let Some(v) = const_int(ext) {
                if v <= 0 {
                    return Err(bad("extent must be positive"));
                }
            }
        }
    }
    Ok(())
}

/// Folds an integer expression built only from literals.
pub fn const_int(e: &Expr) -> Option<i64> {
    match e {
        Expr::Int(v) => Some(*v),
        Expr::Unary(UnOp::Neg, a) => const_int(a).map(|v| -v),
        Expr::Binary(op, a, b) => {
            let (a, b) = (const_int(a)?, const_int(b)?);
            match op {
                BinOp::Add => a.checked_add(b),
                BinOp::Sub => a.checked_sub(b),
                BinOp::Mul => a.checked_mul(b),
                BinOp::Div if b != 0 => a.checked_div(b),
                _ => None,
            }
        }
        _ => None,
    }
}

struct Ctx<'s, 'a> {
    syms: &'s Symbols<'a>,
    counters: Vec<Ident>,
    in_parallel: bool,
    in_region: bool,
    in_workshare: bool,
}

impl Ctx<'_, '_> {
    fn block(&mut self, body: &mut [Stmt]) -> Result<(), SemanticError> {
        for s in body {
            self.stmt(s)?;
        }
        Ok(())
    }

    fn check_target(&self, lhs: &Ref) -> Result<Ty, SemanticError> {
        if self.counters.contains(&lhs.name) {
            return Err(SemanticError::NonCanonicalLoop {
                counter: lhs.name.clone(),
                reason: "counter assigned inside its loop".into(),
            });
        }
        self.syms.ref_type(lhs)
    }

    fn stmt(&mut self, s: &mut Stmt) -> Result<(), SemanticError> {
        match s {
            Stmt::Assign { lhs, rhs } | Stmt::Increment { lhs, rhs, .. } => {
                let tl = self.check_target(lhs)?;
                let tr = self.syms.type_of(rhs)?;
                match (tl, tr) {
                    (Ty::Real, Ty::Real | Ty::Int) | (Ty::Int, Ty::Int) => Ok(()),
                    _ => Err(SemanticError::Type(format!(
                        "cannot store a {tr:?} value into `{}`",
                        lhs.name
                    ))),
                }
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => {
                self.syms.expect_bool(cond)?;
                self.block(then_body)?;
                self.block(else_body)
            }
            Stmt::SeqLoop(lp) => self.do_loop(lp),
            Stmt::ParallelLoop { lp, clauses } => {
                if self.in_parallel {
                    return Err(SemanticError::Misplaced(
                        "nested parallel constructs are not supported".into(),
                    ));
                }
                self.check_clauses(clauses, std::slice::from_ref(&lp.counter))?;
                if let Some(sch) = clauses.schedule {
                    check_chunk(sch)?;
                }
                self.in_parallel = true;
                let r = self.do_loop(lp);
                self.in_parallel = false;
                r?;
                clauses.defaults =
                    defaults_for(clauses, std::iter::once(lp.counter.clone()), &lp.body);
                self.check_override(clauses)
            }
            Stmt::ParallelRegion { clauses, body } => {
                if self.in_parallel {
                    return Err(SemanticError::Misplaced(
                        "nested parallel constructs are not supported".into(),
                    ));
                }
                if !clauses.ad_override.is_empty() || clauses.schedule.is_some() {
                    return Err(SemanticError::Misplaced(
                        "a parallel region takes scoping clauses only".into(),
                    ));
                }
                self.check_clauses(clauses, &[])?;
                self.in_parallel = true;
                self.in_region = true;
                let r = self.block(body);
                self.in_parallel = false;
                self.in_region = false;
                r?;
                clauses.defaults = defaults_for(clauses, std::iter::empty(), body);
                Ok(())
            }
            Stmt::WorkshareLoop { lp, schedule } => {
                if !self.in_region || self.in_workshare {
                    return Err(SemanticError::Misplaced(
                        "`!$omp do` must appear directly inside a parallel region".into(),
                    ));
                }
                check_chunk(*schedule)?;
                self.in_workshare = true;
                let r = self.do_loop(lp);
                self.in_workshare = false;
                r
            }
            Stmt::Call { func, args } => {
                let sig = func.signature();
                if sig.len() != args.len() {
                    return Err(SemanticError::Type(format!(
                        "`{}` takes {} arguments, got {}",
                        func.name(),
                        sig.len(),
                        args.len()
                    )));
                }
                for (role, arg) in sig.iter().zip(args.iter()) {
                    let t = self.syms.type_of(arg)?;
                    let ok = match role {
                        ArgRole::RealIn => t != Ty::Bool,
                        ArgRole::IntIn => t == Ty::Int,
                        ArgRole::RealOut | ArgRole::IntOut => {
                            let want = if *role == ArgRole::RealOut {
                                Ty::Real
                            } else {
                                Ty::Int
                            };
                            let target = match arg {
                                Expr::Var(n) => Ref::scalar(n),
                                Expr::Elem(n, i) => Ref::elem(n, (**i).clone()),
                                _ => {
                                    return Err(SemanticError::Type(format!(
                                        "`{}` needs a variable argument",
                                        func.name()
                                    )))
                                }
                            };
                            self.check_target(&target)? == want
                        }
                    };
                    if !ok {
                        return Err(SemanticError::Type(format!(
                            "bad argument type in call to `{}`",
                            func.name()
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    fn do_loop(&mut self, lp: &mut Loop) -> Result<(), SemanticError> {
        let bad = |reason: &str| SemanticError::NonCanonicalLoop {
            counter: lp.counter.clone(),
            reason: reason.to_string(),
        };
        let d = self.syms.get(&lp.counter)?;
        if d.kind != VarKind::Int {
            return Err(bad("counter must be an integer scalar"));
        }
        if self.counters.contains(&lp.counter) {
            return Err(bad("counter reused by a nested loop"));
        }
        for (e, what) in [
            (&lp.start, "start"),
            (&lp.end, "end"),
            (&lp.stride, "stride"),
        ] {
            self.syms.expect_int(e, &format!("loop {what}"))?;
            if e.mentions(&lp.counter) {
                return Err(bad("bounds may not mention the counter"));
            }
        }
        if const_int(&lp.stride) == Some(0) {
            return Err(bad("stride must be nonzero"));
        }
        let written = assigned_vars(&lp.body);
        for e in [&lp.start, &lp.end, &lp.stride] {
            if let Some(v) = e.var_set().into_iter().find(|v| written.contains(v)) {
                return Err(bad(&format!(
                    "bound variable `{v}` is modified in the loop"
                )));
            }
        }
        self.counters.push(lp.counter.clone());
        let r = self.block(&mut lp.body);
        self.counters.pop();
        r
    }

    fn check_clauses(&self, cs: &ClauseSet, counters: &[Ident]) -> Result<(), SemanticError> {
        for (v, scope) in &cs.scoping {
            let d = self.syms.get(v)?;
            let bad = |reason: &str| SemanticError::BadClause {
                var: v.clone(),
                reason: reason.to_string(),
            };
            if counters.contains(v) && *scope != Scope::Private {
                return Err(bad("the loop counter can only be private"));
            }
            if *scope == Scope::ReductionSum && !d.kind.is_real() {
                return Err(bad("reductions apply to real variables"));
            }
        }
        Ok(())
    }

    fn check_override(&self, cs: &ClauseSet) -> Result<(), SemanticError> {
        for v in cs.ad_override.keys() {
            self.syms.get(v)?;
            if cs.scope_of(v) != Some(Scope::Shared) {
                return Err(SemanticError::OverrideNotShared(v.clone()));
            }
        }
        Ok(())
    }
}

fn check_chunk(s: Schedule) -> Result<(), SemanticError> {
    match s.chunk() {
        Some(k) if k <= 0 => Err(SemanticError::Misplaced(
            "schedule chunk must be positive".into(),
        )),
        _ => Ok(()),
    }
}

/// Implicit scopes: loop counters (the construct's own and nested ones) are
/// private, every other referenced variable is shared.
fn defaults_for(
    cs: &ClauseSet,
    own_counters: impl Iterator<Item = Ident>,
    body: &[Stmt],
) -> indexmap::IndexMap<Ident, Scope> {
    let mut counters: IndexSet<Ident> = own_counters.collect();
    let mut referenced: IndexSet<Ident> = counters.clone();
    walk_block(body, &mut |s| {
        let mut add = |e: &Expr| {
            for v in e.var_set() {
                referenced.insert(v);
            }
        };
        match s {
            Stmt::Assign { lhs, rhs } | Stmt::Increment { lhs, rhs, .. } => {
                add(&lhs.to_expr());
                add(rhs);
            }
            Stmt::If { cond, .. } => add(cond),
            Stmt::SeqLoop(lp) | Stmt::ParallelLoop { lp, .. } | Stmt::WorkshareLoop { lp, .. } => {
                counters.insert(lp.counter.clone());
                add(&Expr::var(&lp.counter));
                add(&lp.start);
                add(&lp.end);
                add(&lp.stride);
            }
            Stmt::Call { args, .. } => args.iter().for_each(add),
            Stmt::ParallelRegion { .. } => {}
        }
    });
    referenced
        .into_iter()
        .filter(|v| !cs.scoping.contains_key(v))
        .map(|v| {
            let s = if counters.contains(&v) {
                Scope::Private
            } else {
                Scope::Shared
            };
            (v, s)
        })
        .collect()
}
