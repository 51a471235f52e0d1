//! Tangent-mode differentiation.
//!
//! Each active assignment is preceded by its derivative statement, control
//! flow is copied unchanged, and every clause entry of an active variable is
//! duplicated for its tangent, so `shared(u)` becomes `shared(u, ud)` and
//! `reduction(+:s)` becomes `reduction(+:s, sd)`.

use crate::ast::*;
use crate::deriv;
use crate::error::TransformError;
use crate::names::{check_derivative_names, tangent_name, tangent_routine};
use crate::validate::validate;

pub fn differentiate_tangent(program: &Program) -> Result<Program, TransformError> {
    check_derivative_names(program, tangent_name)?;
    let t = Tangent { prog: program };

    let mut params = Vec::new();
    for p in &program.params {
        params.push(p.clone());
        if p.active {
            let mut d = p.clone();
            d.name = tangent_name(&p.name);
            d.active = false;
            params.push(d);
        }
    }
    let mut locals = Vec::new();
    for l in &program.locals {
        locals.push(l.clone());
        if l.active {
            locals.push(VarDecl::local(&tangent_name(&l.name), l.kind.clone()));
        }
    }
    let mut out = Program {
        name: tangent_routine(&program.name),
        params,
        locals,
        body: t.block(&program.body)?,
    };
    validate(&mut out)?;
    Ok(out)
}

struct Tangent<'a> {
    prog: &'a Program,
}

impl Tangent<'_> {
    fn active(&self, name: &str) -> bool {
        self.prog.is_active(name)
    }

    fn d(&self, e: &Expr) -> Option<Expr> {
        let act = |n: &str| self.active(n);
        deriv::tangent(e, &act, &tangent_name)
    }

    fn block(&self, body: &[Stmt]) -> Result<Vec<Stmt>, TransformError> {
        let mut out = Vec::new();
        for s in body {
            self.stmt(s, &mut out)?;
        }
        Ok(out)
    }

    fn clauses(&self, cs: &ClauseSet) -> ClauseSet {
        let mut out = ClauseSet::with_schedule(cs.schedule);
        for (v, s) in &cs.scoping {
            out.push(v, *s);
            if self.active(v) {
                out.push(&tangent_name(v), *s);
            }
        }
        out.ad_override = cs.ad_override.clone();
        out
    }

    fn stmt(&self, s: &Stmt, out: &mut Vec<Stmt>) -> Result<(), TransformError> {
        match s {
            Stmt::Assign { lhs, rhs } => {
                if self.active(&lhs.name) {
                    let d = self.d(rhs).unwrap_or(Expr::Int(0));
                    out.push(Stmt::assign(lhs.with_name(&tangent_name(&lhs.name)), d));
                }
                out.push(s.clone());
            }
            Stmt::Increment { lhs, rhs, atomic } => {
                if self.active(&lhs.name) {
                    let d = self.d(rhs);
                    // An atomic primal update keeps an atomic tangent twin even
                    // when its derivative is zero.
                    if d.is_some() || *atomic {
                        let target = lhs.with_name(&tangent_name(&lhs.name));
                        out.push(Stmt::increment(target, d.unwrap_or(Expr::Int(0)), *atomic));
                    }
                }
                out.push(s.clone());
            }
            Stmt::SeqLoop(lp) => out.push(Stmt::SeqLoop(self.lp(lp)?)),
            Stmt::ParallelLoop { lp, clauses } => out.push(Stmt::ParallelLoop {
                lp: self.lp(lp)?,
                clauses: self.clauses(clauses),
            }),
            Stmt::WorkshareLoop { lp, schedule } => out.push(Stmt::WorkshareLoop {
                lp: self.lp(lp)?,
                schedule: *schedule,
            }),
            Stmt::ParallelRegion { clauses, body } => out.push(Stmt::ParallelRegion {
                clauses: self.clauses(clauses),
                body: self.block(body)?,
            }),
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => out.push(Stmt::If {
                cond: cond.clone(),
                then_body: self.block(then_body)?,
                else_body: self.block(else_body)?,
            }),
            Stmt::Call { func, .. } => {
                return Err(TransformError::Unsupported(format!(
                    "differentiating a call to `{}`",
                    func.name()
                )))
            }
        }
        Ok(())
    }

    fn lp(&self, lp: &Loop) -> Result<Loop, TransformError> {
        Ok(Loop {
            body: self.block(&lp.body)?,
            ..lp.clone()
        })
    }
}
