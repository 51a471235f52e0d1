//! Canonical pretty-printer.
//!
//! Output is deterministic: one declaration per line, two-space indentation,
//! spaces around `+`, `-`, comparisons and logical operators, none around
//! `*` and `/`. Parentheses appear only where the parser needs them to
//! rebuild the same tree.

use crate::ast::*;
use std::fmt::Write;

pub fn emit(p: &Program) -> String {
    let mut out = String::new();
    let header: Vec<&str> = p.params.iter().map(|d| d.name.as_str()).collect();
    let _ = writeln!(out, "subroutine {}({})", p.name, header.join(", "));
    for d in p.params.iter().chain(p.locals.iter()) {
        out.push_str("  ");
        out.push_str(&emit_decl(d));
        out.push('\n');
    }
    if !p.body.is_empty() && p.decls().next().is_some() {
        out.push('\n');
    }
    emit_block(&mut out, &p.body, 1);
    let _ = writeln!(out, "end subroutine {}", p.name);
    out
}

pub fn emit_decl(d: &VarDecl) -> String {
    let mut s = String::from(if d.kind.is_real() { "real" } else { "integer" });
    if let Some(intent) = d.intent {
        let _ = write!(s, ", intent({})", intent.as_str());
        if d.active {
            s.push_str(", active");
        }
    }
    let _ = write!(s, " :: {}", d.name);
    if let VarKind::RealArray(ext) = &d.kind {
        let _ = write!(s, "({})", emit_expr(ext));
    }
    s
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn line(out: &mut String, depth: usize, text: &str) {
    indent(out, depth);
    out.push_str(text);
    out.push('\n');
}

pub fn emit_block(out: &mut String, body: &[Stmt], depth: usize) {
    for s in body {
        emit_stmt(out, s, depth);
    }
}

pub fn emit_stmt(out: &mut String, s: &Stmt, depth: usize) {
    match s {
        Stmt::Assign { lhs, rhs } => {
            line(
                out,
                depth,
                &format!("{} = {}", emit_ref(lhs), emit_expr(rhs)),
            );
        }
        Stmt::Increment { lhs, rhs, atomic } => {
            if *atomic {
                line(out, depth, "!$omp atomic");
            }
            line(
                out,
                depth,
                &format!("{} += {}", emit_ref(lhs), emit_expr(rhs)),
            );
        }
        Stmt::SeqLoop(lp) => emit_loop(out, lp, depth),
        Stmt::ParallelLoop { lp, clauses } => {
            if !clauses.ad_override.is_empty() {
                let groups = group(clauses.ad_override.iter().map(|(v, s)| {
                    let head = match s {
                        OverrideScope::ReductionSum => "reduction(+:".to_string(),
                        other => format!("{}(", other.clause_name()),
                    };
                    (head, v.as_str())
                }));
                line(out, depth, &format!("!$ad omp_adjoint {groups}"));
            }
            let mut text = String::from("!$omp parallel do");
            let scoping = emit_scoping(clauses);
            if !scoping.is_empty() {
                text.push(' ');
                text.push_str(&scoping);
            }
            if let Some(sch) = clauses.schedule {
                text.push(' ');
                text.push_str(&emit_schedule(sch));
            }
            line(out, depth, &text);
            emit_loop(out, lp, depth);
        }
        Stmt::If {
            cond,
            then_body,
            else_body,
        } => {
            line(out, depth, &format!("if ({}) then", emit_expr(cond)));
            emit_block(out, then_body, depth + 1);
            if !else_body.is_empty() {
                line(out, depth, "else");
                emit_block(out, else_body, depth + 1);
            }
            line(out, depth, "end if");
        }
        Stmt::ParallelRegion { clauses, body } => {
            let scoping = emit_scoping(clauses);
            if scoping.is_empty() {
                line(out, depth, "!$omp parallel");
            } else {
                line(out, depth, &format!("!$omp parallel {scoping}"));
            }
            emit_block(out, body, depth + 1);
            line(out, depth, "!$omp end parallel");
        }
        Stmt::WorkshareLoop { lp, schedule } => {
            line(
                out,
                depth,
                &format!("!$omp do {}", emit_schedule(*schedule)),
            );
            emit_loop(out, lp, depth);
        }
        Stmt::Call { func, args } => {
            let args: Vec<String> = args.iter().map(emit_expr).collect();
            line(
                out,
                depth,
                &format!("call {}({})", func.name(), args.join(", ")),
            );
        }
    }
}

fn emit_loop(out: &mut String, lp: &Loop, depth: usize) {
    let mut head = format!(
        "do {} = {}, {}",
        lp.counter,
        emit_expr(&lp.start),
        emit_expr(&lp.end)
    );
    if lp.stride != Expr::Int(1) {
        let _ = write!(head, ", {}", emit_expr(&lp.stride));
    }
    line(out, depth, &head);
    emit_block(out, &lp.body, depth + 1);
    line(out, depth, "end do");
}

/// Explicit scoping clauses, merging runs of equal scope:
/// `shared(a, b) private(i)`.
pub fn emit_scoping(cs: &ClauseSet) -> String {
    group(cs.scoping.iter().map(|(v, s)| {
        let head = match s {
            Scope::ReductionSum => "reduction(+:".to_string(),
            other => format!("{}(", other.clause_name()),
        };
        (head, v.as_str())
    }))
}

fn group<'a>(entries: impl Iterator<Item = (String, &'a str)>) -> String {
    let mut parts: Vec<(String, Vec<&str>)> = Vec::new();
    for (head, v) in entries {
        match parts.last_mut() {
            Some((h, vs)) if *h == head => vs.push(v),
            _ => parts.push((head, vec![v])),
        }
    }
    parts
        .into_iter()
        .map(|(h, vs)| format!("{h}{})", vs.join(", ")))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn emit_schedule(s: Schedule) -> String {
    let (kind, chunk) = match s {
        Schedule::Static(c) => ("static", c),
        Schedule::Dynamic(c) => ("dynamic", c),
    };
    match chunk {
        Some(k) => format!("schedule({kind}, {k})"),
        None => format!("schedule({kind})"),
    }
}

pub fn emit_ref(r: &Ref) -> String {
    match &r.index {
        None => r.name.clone(),
        Some(i) => format!("{}({})", r.name, emit_expr(i)),
    }
}

const P_OR: u8 = 1;
const P_AND: u8 = 2;
const P_NOT: u8 = 3;
const P_CMP: u8 = 4;
const P_ADD: u8 = 5;
const P_MUL: u8 = 6;
const P_ATOM: u8 = 7;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Real(v) if v.is_sign_negative() => P_ADD,
        Expr::Int(v) if *v < 0 => P_ADD,
        Expr::Unary(UnOp::Neg, _) => P_ADD,
        Expr::Unary(UnOp::Not, _) => P_NOT,
        Expr::Binary(op, ..) => match op {
            BinOp::Or => P_OR,
            BinOp::And => P_AND,
            BinOp::Add | BinOp::Sub => P_ADD,
            BinOp::Mul | BinOp::Div => P_MUL,
            _ => P_CMP,
        },
        _ => P_ATOM,
    }
}

pub fn emit_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn write_expr(out: &mut String, e: &Expr, min: u8) {
    let wrap = prec(e) < min;
    if wrap {
        out.push('(');
    }
    match e {
        Expr::Real(v) => {
            let _ = write!(out, "{v:?}");
        }
        Expr::Int(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Var(n) => out.push_str(n),
        Expr::Elem(n, idx) => {
            out.push_str(n);
            out.push('(');
            write_expr(out, idx, 0);
            out.push(')');
        }
        Expr::Intrinsic(f, a) => {
            out.push_str(f.name());
            out.push('(');
            write_expr(out, a, 0);
            out.push(')');
        }
        Expr::Unary(UnOp::Neg, a) => {
            out.push('-');
            write_expr(out, a, P_MUL);
        }
        Expr::Unary(UnOp::Not, a) => {
            out.push_str(".not. ");
            write_expr(out, a, P_NOT);
        }
        Expr::Binary(op, a, b) => {
            let p = prec(e);
            let (lmin, rmin) = if p == P_CMP {
                (P_ADD, P_ADD)
            } else {
                (p, p + 1)
            };
            write_expr(out, a, lmin);
            match op {
                BinOp::Mul | BinOp::Div => out.push_str(op.symbol()),
                _ => {
                    out.push(' ');
                    out.push_str(op.symbol());
                    out.push(' ');
                }
            }
            write_expr(out, b, rmin);
        }
    }
    if wrap {
        out.push(')');
    }
}
