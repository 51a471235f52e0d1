use adomp_core::analysis::{self, Access, BlockKind, DepKind};
use adomp_core::*;
use std::collections::BTreeMap;

fn program(name: &str) -> Program {
    let path = format!("{}/tests/programs/{name}.adsl", env!("CARGO_MANIFEST_DIR"));
    parse(&std::fs::read_to_string(path).unwrap(), true).unwrap()
}

fn kernel(decls: &str, body: &str) -> Program {
    let src = format!(
        "subroutine k(n, x, y, s)\n  integer, intent(in) :: n\n  real, intent(inout), active :: x(n), y(n), s\n{decls}  integer :: i, j\n{body}end subroutine k\n"
    );
    parse(&src, true).unwrap_or_else(|e| panic!("{e}\n{src}"))
}

fn pattern(p: &Program, var: &str) -> AccessPattern {
    let cfg = propagate_scoping(build_cfg(p));
    classify_access(&cfg, 0, var).pattern
}

#[test]
fn single_assignment_is_one_block() {
    let cfg = build_cfg(&program("mul"));
    assert_eq!(cfg.blocks.len(), 1);
    assert_eq!(cfg.blocks[0].stmts.len(), 1);
    assert!(cfg.regions.is_empty());
}

#[test]
fn parallel_loop_with_branch_forms_a_diamond() {
    let p = kernel(
        "",
        "  !$omp parallel do\n  do i = 1, n\n    if (x(i) > 0.0) then\n      y(i) = x(i)\n    else\n      y(i) = -x(i)\n    end if\n  end do\n",
    );
    let cfg = build_cfg(&p);
    assert_eq!(cfg.regions.len(), 1);
    let region = &cfg.regions[0];
    let header = &cfg.blocks[region.header];
    assert!(matches!(
        header.kind,
        BlockKind::LoopHeader {
            region: Some(0),
            ..
        }
    ));
    assert_eq!(region.counter.as_deref(), Some("i"));

    let branch: Vec<_> = region
        .blocks
        .iter()
        .map(|&b| &cfg.blocks[b])
        .filter(|b| b.branch.is_some())
        .collect();
    assert_eq!(branch.len(), 1);
    let arms = &branch[0].succs;
    assert_eq!(arms.len(), 2);
    let join_a = &cfg.blocks[arms[0]].succs;
    let join_b = &cfg.blocks[arms[1]].succs;
    assert_eq!(join_a, join_b, "both arms meet in one join block");
    assert!(
        cfg.blocks[join_a[0]].succs.contains(&region.header),
        "back edge to header"
    );
    assert_eq!(cfg.reachable().len(), cfg.blocks.len());
}

#[test]
fn fig2_header_carries_clauses() {
    let cfg = build_cfg(&program("fig2"));
    assert_eq!(cfg.regions.len(), 1);
    let clauses = &cfg.regions[0].clauses;
    let explicit: Vec<String> = clauses
        .scoping
        .iter()
        .map(|(v, s)| format!("{}({v})", s.clause_name()))
        .collect();
    assert_eq!(explicit, ["firstprivate(a)", "shared(arr)"]);
    assert_eq!(
        adomp_core::emit::emit_scoping(clauses),
        "firstprivate(a) shared(arr)"
    );
    assert_eq!(cfg.blocks[cfg.regions[0].header].region, Some(0));
}

#[test]
fn every_statement_is_reachable() {
    for name in ["fig2", "mul", "stencil", "control"] {
        let p = program(name);
        let cfg = build_cfg(&p);
        let reach = cfg.reachable();
        assert_eq!(reach.len(), cfg.blocks.len(), "{name}");
        let placed: usize = cfg.blocks.iter().map(|b| b.stmts.len()).sum();
        let mut simple = 0;
        walk_block(&p.body, &mut |s| {
            simple += matches!(
                s,
                Stmt::Assign { .. } | Stmt::Increment { .. } | Stmt::Call { .. }
            ) as usize
        });
        assert_eq!(placed, simple, "{name}");
    }
}

#[test]
fn references_are_tagged_with_scope() {
    let cfg = propagate_scoping(build_cfg(&program("fig2")));
    let scope_of = |var: &str, access: Access| {
        cfg.refs
            .iter()
            .find(|r| r.var == var && r.access == access && r.region.is_some())
            .and_then(|r| r.scope)
    };
    assert_eq!(scope_of("arr", Access::Write), Some(Scope::Shared));
    assert_eq!(scope_of("a", Access::Read), Some(Scope::FirstPrivate));
    assert_eq!(scope_of("i", Access::Write), Some(Scope::Private));
    // Outside the region nothing is tagged.
    assert!(cfg
        .refs
        .iter()
        .filter(|r| r.region.is_none())
        .all(|r| r.scope.is_none()));

    let cfg = propagate_scoping(build_cfg(&program("stencil")));
    let b = cfg.refs.iter().find(|r| r.var == "b").unwrap();
    assert_eq!(b.scope, Some(Scope::Shared), "defaulted variable");
}

#[test]
fn every_region_reference_is_tagged() {
    for name in ["fig2", "stencil", "control"] {
        let cfg = propagate_scoping(build_cfg(&program(name)));
        for r in cfg.refs.iter().filter(|r| r.region.is_some()) {
            assert!(r.scope.is_some(), "{name}: {r:?}");
        }
    }
}

#[test]
fn stencil_patterns() {
    let p = program("stencil");
    assert_eq!(pattern(&p, "arr_in"), AccessPattern::ReadOnly);
    assert_eq!(pattern(&p, "arr_out"), AccessPattern::ExclusiveSingleThread);
    assert_eq!(pattern(&p, "b"), AccessPattern::ReadOnly);
}

#[test]
fn atomic_scalar_sum() {
    let p = kernel(
        "",
        "  !$omp parallel do shared(s)\n  do i = 1, n\n    !$omp atomic\n    s += x(i)\n  end do\n",
    );
    assert_eq!(pattern(&p, "s"), AccessPattern::AtomicIncrementOnly);
    // A read at the counter's own index is also touched by one thread only,
    // which is the stronger fact.
    assert_eq!(pattern(&p, "x"), AccessPattern::ExclusiveSingleThread);
    assert_eq!(pattern(&p, "y"), AccessPattern::NotAccessed);
}

#[test]
fn scrambled_index_is_unprovable() {
    let p = kernel(
        "",
        "  !$omp parallel do\n  do i = 1, n\n    x(i) = x(n + 1 - i)*2.0\n  end do\n",
    );
    assert_eq!(pattern(&p, "x"), AccessPattern::MixedUnprovable);
    let p = kernel("", "  !$omp parallel do\n  do i = 1, n\n    do j = 1, 2\n      y(j) = x(i)\n    end do\n  end do\n");
    assert_eq!(pattern(&p, "y"), AccessPattern::MixedUnprovable);
    let p = kernel(
        "",
        "  !$omp parallel do\n  do i = 1, n\n    s = s + x(i)\n  end do\n",
    );
    assert_eq!(pattern(&p, "s"), AccessPattern::MixedUnprovable);
    let p = kernel(
        "",
        "  !$omp parallel do\n  do i = 1, n\n    s += x(i)\n  end do\n",
    );
    assert_eq!(
        pattern(&p, "s"),
        AccessPattern::MixedUnprovable,
        "non-atomic increment"
    );
}

#[test]
fn affine_but_strided_index_is_exclusive() {
    let p = kernel(
        "",
        "  !$omp parallel do\n  do i = 1, n/2\n    x(2*i - 1) = x(2*i - 1)*x(2*i - 1)\n  end do\n",
    );
    assert_eq!(pattern(&p, "x"), AccessPattern::ExclusiveSingleThread);
    let p = kernel(
        "",
        "  !$omp parallel do\n  do i = 1, n - 3\n    x(i + 3) = x(i + 3) + 1.0\n  end do\n",
    );
    assert_eq!(pattern(&p, "x"), AccessPattern::ExclusiveSingleThread);
}

#[test]
fn analysis_table() {
    let tsv = analysis::analysis_tsv(&program("stencil"));
    let rows: Vec<Vec<&str>> = tsv.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows[0], ["region", "variable", "pattern", "justification"]);
    let find = |v: &str| rows.iter().find(|r| r[1] == v).unwrap().clone();
    assert_eq!(find("arr_in")[..3], ["loop:i#0", "arr_in", "read_only"]);
    assert_eq!(
        find("arr_out")[..3],
        ["loop:i#0", "arr_out", "exclusive_single_thread"]
    );
    assert!(rows
        .iter()
        .skip(1)
        .all(|r| r.len() == 4 && !r[3].is_empty()));
}

// Dependency oracle: two straight-line statements touching one location `v`
// are dependent iff running them in the opposite order can change the final
// state. Statements are evaluated over integer-valued doubles so that
// increments commute exactly.

#[derive(Clone, Copy, Debug)]
enum Op {
    Read(usize),
    Write(f64),
    Increment(f64),
}

impl Op {
    fn kind(self) -> DepKind {
        match self {
            Op::Read(_) => DepKind::Read,
            Op::Write(_) => DepKind::Write,
            Op::Increment(_) => DepKind::Increment,
        }
    }
}

fn run(ops: &[Op], v0: f64) -> (f64, BTreeMap<usize, f64>) {
    let mut v = v0;
    let mut sinks = BTreeMap::new();
    for op in ops {
        match *op {
            Op::Read(slot) => {
                sinks.insert(slot, v);
            }
            Op::Write(c) => v = c,
            Op::Increment(c) => v += c,
        }
    }
    (v, sinks)
}

fn order_matters(a: Op, b: Op) -> bool {
    [-3.0, 0.0, 1.0, 7.0]
        .iter()
        .any(|&v0| run(&[a, b], v0) != run(&[b, a], v0))
}

#[test]
fn dependency_table_matches_reordering_oracle() {
    let samples = [
        Op::Read(0),
        Op::Read(1),
        Op::Write(2.0),
        Op::Write(5.0),
        Op::Increment(1.0),
        Op::Increment(4.0),
    ];
    for a in samples {
        for b in samples {
            let (ka, kb) = (a.kind(), b.kind());
            if let (Op::Write(x), Op::Write(y)) = (a, b) {
                // Rewriting the same constant is the one write pair that
                // happens to commute; the table orders all writes.
                if x == y {
                    continue;
                }
            }
            let oracle = order_matters(a, b);
            assert_eq!(analysis::has_dependency(ka, kb), oracle, "{a:?} then {b:?}");
        }
    }
}

#[test]
fn increments_are_unordered_but_bracketed() {
    assert!(!analysis::has_dependency(
        DepKind::Increment,
        DepKind::Increment
    ));
    assert!(analysis::has_dependency(DepKind::Increment, DepKind::Write));
    assert!(analysis::has_dependency(DepKind::Write, DepKind::Increment));
    assert!(analysis::has_dependency(DepKind::Increment, DepKind::Read));
    assert!(analysis::has_dependency(DepKind::Read, DepKind::Increment));
}
