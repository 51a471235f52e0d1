//! Structural queries on generated programs.

use adomp_core::{walk_block, ClauseSet, Program, RuntimeCall, Scope, Stmt};

/// Drops every `!$ad omp_adjoint` directive.
pub fn strip_overrides(p: &mut Program) {
    fn block(body: &mut [Stmt]) {
        for s in body {
            match s {
                Stmt::ParallelLoop { lp, clauses } => {
                    clauses.ad_override.clear();
                    block(&mut lp.body);
                }
                Stmt::SeqLoop(lp) | Stmt::WorkshareLoop { lp, .. } => block(&mut lp.body),
                Stmt::If {
                    then_body,
                    else_body,
                    ..
                } => {
                    block(then_body);
                    block(else_body);
                }
                Stmt::ParallelRegion { body, .. } => block(body),
                Stmt::Assign { .. } | Stmt::Increment { .. } | Stmt::Call { .. } => {}
            }
        }
    }
    block(&mut p.body);
}

pub fn atomic_increments(p: &Program) -> usize {
    let mut n = 0;
    walk_block(&p.body, &mut |s| {
        if matches!(s, Stmt::Increment { atomic: true, .. }) {
            n += 1;
        }
    });
    n
}

pub fn push_calls(p: &Program) -> usize {
    let mut n = 0;
    walk_block(&p.body, &mut |s| {
        if matches!(
            s,
            Stmt::Call {
                func: RuntimeCall::PushReal8 | RuntimeCall::PushInteger4,
                ..
            }
        ) {
            n += 1;
        }
    });
    n
}

fn parallel_constructs(p: &Program) -> Vec<(&ClauseSet, &[Stmt])> {
    let mut out = Vec::new();
    walk_block(&p.body, &mut |s| match s {
        Stmt::ParallelRegion { clauses, body } => out.push((clauses, body.as_slice())),
        Stmt::ParallelLoop { clauses, lp } => out.push((clauses, lp.body.as_slice())),
        _ => {}
    });
    out
}

/// Variables named in a `reduction(+)` clause of some parallel construct.
pub fn reduction_vars(p: &Program) -> Vec<String> {
    let mut out = Vec::new();
    for (clauses, _) in parallel_constructs(p) {
        for (v, s) in clauses.all_scopes() {
            if s == Scope::ReductionSum && !out.contains(v) {
                out.push(v.clone());
            }
        }
    }
    out
}

/// Increments of `var` in each parallel construct that has any.
pub fn increments_per_region(p: &Program, var: &str) -> Vec<usize> {
    parallel_constructs(p)
        .into_iter()
        .map(|(_, body)| {
            let mut n = 0;
            walk_block(body, &mut |s| {
                if let Stmt::Increment { lhs, .. } = s {
                    if lhs.name == var {
                        n += 1;
                    }
                }
            });
            n
        })
        .filter(|&n| n > 0)
        .collect()
}

/// Variable lists of the `reduction(+:...)` clauses in emitted source.
pub fn reduction_clauses_in_text(text: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(at) = rest.find("reduction(+:") {
        rest = &rest[at + "reduction(+:".len()..];
        let end = rest.find(')').unwrap_or(rest.len());
        out.push(
            rest[..end]
                .split(',')
                .map(|v| v.trim().to_string())
                .collect(),
        );
        rest = &rest[end..];
    }
    out
}
