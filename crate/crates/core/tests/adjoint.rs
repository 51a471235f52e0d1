use adomp_core::adjoint::{AdjointOutput, DEFAULT_PRIVATIZATION_BUDGET};
use adomp_core::analysis::AccessSummary;
use adomp_core::*;
use std::collections::BTreeMap;

fn read(dir: &str, name: &str) -> Program {
    let path = format!("{}/tests/{dir}/{name}.adsl", env!("CARGO_MANIFEST_DIR"));
    parse(&std::fs::read_to_string(path).unwrap(), true).unwrap()
}

fn program(name: &str) -> Program {
    read("programs", name)
}

fn lines(body: &[Stmt]) -> Vec<String> {
    let mut out = String::new();
    adomp_core::emit::emit_block(&mut out, body, 0);
    out.lines().map(str::to_string).collect()
}

fn regions(p: &Program) -> Vec<(&ClauseSet, &Vec<Stmt>)> {
    let mut out = Vec::new();
    walk_block(&p.body, &mut |s| {
        if let Stmt::ParallelRegion { clauses, body } = s {
            out.push((clauses, body));
        }
    });
    out
}

#[test]
fn product_adjoint() {
    let a = differentiate_adjoint(&program("mul")).unwrap();
    assert_eq!(a.name, "mul_b");
    assert_eq!(
        lines(&a.body),
        ["z = x*y", "xb += zb*y", "yb += zb*x", "zb = 0"]
    );
    let names: Vec<&str> = a.params.iter().map(|d| d.name.as_str()).collect();
    assert_eq!(names, ["x", "xb", "y", "yb", "z", "zb"]);
    assert!(a
        .params
        .iter()
        .filter(|d| d.name.ends_with('b'))
        .all(|d| d.intent == Some(Intent::InOut)));
}

#[test]
fn product_adjoint_with_save_on_kill() {
    let opts = AdjointOptions {
        save_all_kills: true,
        ..Default::default()
    };
    let a = differentiate_adjoint_with(&program("mul"), &opts)
        .unwrap()
        .program;
    assert_eq!(
        lines(&a.body),
        [
            "call push_real8(z)",
            "z = x*y",
            "call pop_real8(z)",
            "xb += zb*y",
            "yb += zb*x",
            "zb = 0"
        ]
    );
}

#[derive(Debug)]
struct Row {
    fixture: &'static str,
    var: &'static str,
    adjoint: Scope,
    primal: Scope,
    atomic: bool,
}

const fn row(
    fixture: &'static str,
    var: &'static str,
    adjoint: Scope,
    primal: Scope,
    atomic: bool,
) -> Row {
    Row {
        fixture,
        var,
        adjoint,
        primal,
        atomic,
    }
}

const TABLE: &[Row] = &[
    row("private", "v", Scope::Private, Scope::Private, false),
    row(
        "firstprivate",
        "v",
        Scope::ReductionSum,
        Scope::Private,
        false,
    ),
    row("reduction", "v", Scope::FirstPrivate, Scope::Private, false),
    row(
        "lastprivate",
        "v",
        Scope::FirstPrivate,
        Scope::Private,
        false,
    ),
    row("shared_exclusive", "v", Scope::Shared, Scope::Shared, false),
    row(
        "shared_read_only_reduction",
        "v",
        Scope::ReductionSum,
        Scope::Shared,
        false,
    ),
    row(
        "shared_read_only_atomic",
        "v",
        Scope::Shared,
        Scope::Shared,
        true,
    ),
    row(
        "shared_atomic_increment",
        "v",
        Scope::Shared,
        Scope::Shared,
        false,
    ),
    row("shared_mixed", "v", Scope::Shared, Scope::Shared, true),
];

fn atomic_targets(body: &[Stmt]) -> Vec<String> {
    let mut out = Vec::new();
    walk_block(body, &mut |s| {
        if let Stmt::Increment {
            lhs, atomic: true, ..
        } = s
        {
            out.push(lhs.name.clone());
        }
    });
    out
}

#[test]
fn scoping_table_goldens() {
    for r in TABLE {
        let a = differentiate_adjoint(&read("scoping", r.fixture)).unwrap();
        let regs = regions(&a);
        assert_eq!(regs.len(), 2, "{}", r.fixture);
        let (bw, body) = regs[1];
        let vb = format!("{}b", r.var);
        assert_eq!(bw.scope_of(&vb), Some(r.adjoint), "{}: {vb}", r.fixture);
        assert_eq!(
            bw.scope_of(r.var),
            Some(r.primal),
            "{}: {}",
            r.fixture,
            r.var
        );
        let atomics = atomic_targets(body);
        assert_eq!(
            atomics.contains(&vb),
            r.atomic,
            "{}: {atomics:?}",
            r.fixture
        );
        // Only increments of the adjoint are ever atomic.
        assert!(atomics.iter().all(|t| t == &vb), "{}", r.fixture);
    }
}

#[test]
fn scoping_table_clause_text() {
    let expect = [
        ("private", "private(i, vb, v)"),
        ("firstprivate", "reduction(+:vb) private(v)"),
        ("reduction", "firstprivate(vb) private(v)"),
        ("lastprivate", "firstprivate(vb) private(v)"),
        ("shared_exclusive", "shared(vb, v)"),
        ("shared_read_only_reduction", "reduction(+:vb) shared(v"),
        ("shared_read_only_atomic", "shared(vb, v"),
        ("shared_atomic_increment", "shared(vb, v"),
    ];
    for (fixture, text) in expect {
        let a = differentiate_adjoint(&read("scoping", fixture)).unwrap();
        let bw = regions(&a)[1].0;
        let clauses = adomp_core::emit::emit_scoping(bw);
        assert!(clauses.contains(text), "{fixture}: {clauses}");
    }
}

#[test]
fn lastprivate_guards() {
    let a = differentiate_adjoint(&read("scoping", "lastprivate")).unwrap();
    let text = lines(&a.body);
    let bw_start = text
        .iter()
        .rposition(|l| l.starts_with("!$omp parallel "))
        .unwrap();
    let tail = &text[bw_start..];
    let pos = |needle: &str| {
        tail.iter()
            .position(|l| l.trim() == needle)
            .unwrap_or_else(|| panic!("{needle}\n{}", text.join("\n")))
    };
    let pop = pos("call pop_real8(v)");
    let guard = pos("if (ad_lastiter == 0) then");
    assert!(pop < guard);
    assert_eq!(tail[guard + 1].trim(), "vb = 0");
    let end = pos("!$omp end parallel");
    assert_eq!(tail[end + 1].trim(), "vb = 0", "reset after the region");

    // The forward sweep works on a private copy and publishes it from the
    // thread that ran the last iteration.
    let fw: Vec<&String> = text[..bw_start].iter().collect();
    assert!(fw.iter().any(|l| l.contains("shared(v) private(ad_lp_v)")));
    assert!(fw.iter().any(|l| l.trim() == "v = ad_lp_v"));
    assert!(fw.iter().any(|l| l.trim() == "if (i == n) then"));
}

#[test]
fn hoisted_save_for_atomic_increments() {
    let opts = AdjointOptions {
        save_all_kills: true,
        ..Default::default()
    };
    let p = read("scoping", "shared_atomic_increment");
    let a = differentiate_adjoint_with(&p, &opts).unwrap().program;
    let text = lines(&a.body);
    let first_region = text
        .iter()
        .position(|l| l.starts_with("!$omp parallel"))
        .unwrap();
    let last_end = text
        .iter()
        .rposition(|l| l == "!$omp end parallel")
        .unwrap();
    assert_eq!(text[first_region - 1], "call push_real8(v)");
    assert_eq!(text[last_end + 1], "call pop_real8(v)");
    assert!(!text[first_region..last_end]
        .iter()
        .any(|l| l.contains("(v)") && l.contains("call p")));
}

fn summary(pattern: AccessPattern) -> AccessSummary {
    AccessSummary {
        region: 0,
        var: "v".into(),
        pattern,
        justification: String::new(),
    }
}

#[test]
fn decision_examples() {
    let d = decide_adjoint_scoping(&summary(AccessPattern::ReadOnly), Scope::Shared, None, true);
    assert_eq!(
        (d.adjoint_scope, d.source),
        (AdjointScope::ReductionSum, ScopingSource::DecisionTree)
    );
    let d = decide_adjoint_scoping(
        &summary(AccessPattern::ReadOnly),
        Scope::Shared,
        None,
        false,
    );
    assert_eq!(d.adjoint_scope, AdjointScope::SharedAtomic);
    let d = decide_adjoint_scoping(
        &summary(AccessPattern::AtomicIncrementOnly),
        Scope::Shared,
        None,
        true,
    );
    assert_eq!(
        (d.adjoint_scope, d.source),
        (AdjointScope::Shared, ScopingSource::DecisionTree)
    );
    let d = decide_adjoint_scoping(
        &summary(AccessPattern::MixedUnprovable),
        Scope::Shared,
        Some(OverrideScope::Shared),
        true,
    );
    assert_eq!(
        (d.adjoint_scope, d.source),
        (AdjointScope::Shared, ScopingSource::UserOverride)
    );
    assert!(d.warning.is_some(), "unproven override is flagged");
    let d = decide_adjoint_scoping(
        &summary(AccessPattern::MixedUnprovable),
        Scope::Shared,
        None,
        true,
    );
    assert_eq!(d.adjoint_scope, AdjointScope::SharedAtomic);
    let d = decide_adjoint_scoping(
        &summary(AccessPattern::ExclusiveSingleThread),
        Scope::Shared,
        None,
        true,
    );
    assert_eq!(d.adjoint_scope, AdjointScope::Shared);
}

#[test]
fn privatized_scopes_follow_fixed_rules() {
    let cases = [
        (Scope::Private, AdjointScope::Private),
        (Scope::FirstPrivate, AdjointScope::ReductionSum),
        (Scope::ReductionSum, AdjointScope::FirstPrivate),
        (Scope::LastPrivate, AdjointScope::FirstPrivate),
    ];
    for (primal, adj) in cases {
        for pattern in [AccessPattern::ReadOnly, AccessPattern::MixedUnprovable] {
            let d = decide_adjoint_scoping(&summary(pattern), primal, None, false);
            assert_eq!((d.adjoint_scope, d.source), (adj, ScopingSource::Rule));
        }
    }
}

#[test]
fn override_wins_and_warns_only_when_unsafe() {
    let safe = decide_adjoint_scoping(
        &summary(AccessPattern::ExclusiveSingleThread),
        Scope::Shared,
        Some(OverrideScope::Shared),
        true,
    );
    assert!(safe.warning.is_none());
    let risky = decide_adjoint_scoping(
        &summary(AccessPattern::ReadOnly),
        Scope::Shared,
        Some(OverrideScope::Shared),
        true,
    );
    assert_eq!(risky.adjoint_scope, AdjointScope::Shared);
    assert!(risky.warning.is_some());
    let atomic = decide_adjoint_scoping(
        &summary(AccessPattern::ReadOnly),
        Scope::Shared,
        Some(OverrideScope::Atomic),
        true,
    );
    assert_eq!(atomic.adjoint_scope, AdjointScope::SharedAtomic);
    assert!(atomic.warning.is_none());
}

fn stencil_with(opts: &AdjointOptions) -> AdjointOutput {
    differentiate_adjoint_with(&program("stencil"), opts).unwrap()
}

#[test]
fn privatization_budget_switches_to_atomics() {
    assert_eq!(DEFAULT_PRIVATIZATION_BUDGET, 8 * 1024 * 1024);
    let scope_of_input = |o: &AdjointOutput| {
        o.scopings
            .iter()
            .find(|(_, d)| d.var == "arr_in")
            .map(|(_, d)| d.adjoint_scope)
            .unwrap()
    };
    let mut hints = BTreeMap::new();
    hints.insert("n".to_string(), 10);
    let fits = AdjointOptions {
        privatization_budget: 80,
        size_hints: hints.clone(),
        ..Default::default()
    };
    assert_eq!(
        scope_of_input(&stencil_with(&fits)),
        AdjointScope::ReductionSum
    );
    let too_big = AdjointOptions {
        privatization_budget: 79,
        size_hints: hints,
        ..Default::default()
    };
    assert_eq!(
        scope_of_input(&stencil_with(&too_big)),
        AdjointScope::SharedAtomic
    );
    let zero = AdjointOptions {
        privatization_budget: 0,
        ..Default::default()
    };
    let out = stencil_with(&zero);
    assert_eq!(scope_of_input(&out), AdjointScope::SharedAtomic);
    assert_eq!(
        atomic_targets(&out.program.body),
        ["arr_inb", "arr_inb", "arr_inb"]
    );
}

#[test]
fn stencil_reduction_variant_clause() {
    let a = differentiate_adjoint(&program("stencil")).unwrap();
    let bw = regions(&a)[1].0;
    assert!(adomp_core::emit::emit_scoping(bw).contains("reduction(+:arr_inb)"));
}

/// Net pushes minus pops per tape slot along any single control path.
/// Branch flags are keyed together; both arms of an `if` must agree.
fn tape_ops(body: &[Stmt]) -> BTreeMap<String, i32> {
    let mut balance = BTreeMap::new();
    for s in body {
        match s {
            Stmt::Call { func, args } if func.is_push() || func.is_pop() => {
                let key = match &args[0] {
                    Expr::Int(_) => "branch".to_string(),
                    Expr::Var(v) if v == "ad_branch" => "branch".to_string(),
                    a => {
                        let ty = if func.name().ends_with("real8") {
                            "r"
                        } else {
                            "i"
                        };
                        format!("{ty}:{}", adomp_core::emit::emit_expr(a))
                    }
                };
                *balance.entry(key).or_insert(0) += if func.is_push() { 1 } else { -1 };
            }
            Stmt::If {
                then_body,
                else_body,
                ..
            } => {
                let (a, b) = (tape_ops(then_body), tape_ops(else_body));
                if else_body.is_empty() || then_body.is_empty() {
                    merge(&mut balance, if else_body.is_empty() { &a } else { &b });
                } else {
                    assert_eq!(a, b, "arms of an if disagree");
                    merge(&mut balance, &a);
                }
            }
            other => {
                for c in other.children() {
                    merge(&mut balance, &tape_ops(std::slice::from_ref(c)));
                }
            }
        }
    }
    balance.retain(|_, v| *v != 0);
    balance
}

fn merge(into: &mut BTreeMap<String, i32>, from: &BTreeMap<String, i32>) {
    for (k, v) in from {
        *into.entry(k.clone()).or_insert(0) += v;
    }
}

#[test]
fn every_push_has_a_pop() {
    let mut fixtures: Vec<Program> = ["mul", "stencil", "control", "fig2"]
        .iter()
        .map(|n| program(n))
        .collect();
    for r in TABLE {
        fixtures.push(read("scoping", r.fixture));
    }
    for save_all in [false, true] {
        let opts = AdjointOptions {
            save_all_kills: save_all,
            ..Default::default()
        };
        for p in &fixtures {
            let a = differentiate_adjoint_with(p, &opts).unwrap().program;
            let mut balance = tape_ops(&a.body);
            // Recorded chunk bounds are pushed by the runtime and popped by
            // the replay loop, so only the pop side is visible here.
            balance.retain(|k, _| !k.starts_with("i:ad_chunk") && k != "i:ad_numchunks");
            // Private copies of lastprivate variables are pushed under their
            // forward-sweep name and popped under the primal one.
            let copies: Vec<(String, i32)> = balance
                .iter()
                .filter(|(k, _)| k.contains(":ad_lp_"))
                .map(|(k, v)| (k.replacen("ad_lp_", "", 1), *v))
                .collect();
            for (k, v) in copies {
                *balance.entry(k).or_insert(0) += v;
            }
            balance.retain(|k, v| *v != 0 && !k.contains(":ad_lp_"));
            assert!(balance.is_empty(), "{}: {balance:?}\n{}", p.name, emit(&a));
        }
    }
}

#[test]
fn linear_kernel_needs_no_tape() {
    let a = differentiate_adjoint(&program("stencil")).unwrap();
    let balance = tape_ops(&a.body);
    assert!(balance.keys().all(|k| !k.starts_with("r:")), "{balance:?}");
}

#[test]
fn branches_record_their_direction() {
    let a = differentiate_adjoint(&program("control")).unwrap();
    let text = emit(&a);
    assert!(text.contains("call push_integer4(1)"), "{text}");
    assert!(text.contains("call push_integer4(0)"));
    assert!(text.contains("call pop_integer4(ad_branch)"));
    assert!(text.contains("if (ad_branch == 1) then"));
    // The strided sequential loop is reversed from its last visited value.
    assert!(text.contains("if ((1 - n)*(-3) >= 0) then"), "{text}");
    assert!(
        text.contains("do k = n + (1 - n)/(-3)*(-3), n, 3"),
        "{text}"
    );
}

#[test]
fn privatized_arrays_are_rejected() {
    let p = parse(
        "subroutine f(n, x)\n  integer, intent(in) :: n\n  real, intent(inout), active :: x(n)\n  real :: w(4)\n  integer :: i\n  !$omp parallel do private(w)\n  do i = 1, n\n    w(1) = x(i)\n    x(i) = w(1)*w(1)\n  end do\nend subroutine f\n",
        true,
    )
    .unwrap();
    assert!(matches!(
        differentiate_adjoint(&p),
        Err(TransformError::Unsupported(_))
    ));
}

#[test]
fn runtime_calls_in_input_are_rejected() {
    let p = parse(
        "subroutine f(x)\n  real, intent(inout), active :: x\n  call push_real8(x)\nend subroutine f\n",
        true,
    )
    .unwrap();
    assert!(matches!(
        differentiate_adjoint(&p),
        Err(TransformError::Unsupported(_))
    ));
}

#[test]
fn static_schedule_uses_block_partition() {
    let mut p = program("stencil");
    if let Stmt::ParallelLoop { clauses, .. } = &mut p.body[0] {
        clauses.schedule = Some(Schedule::Static(None));
    }
    let a = differentiate_adjoint(&p).unwrap();
    let text = emit(&a);
    assert_eq!(
        text.matches("call get_static_schedule(2, n - 1, 1, ad_chunkstart, ad_chunkend)")
            .count(),
        2
    );
    assert!(text.contains("do i = ad_chunkend, ad_chunkstart, -1"));
    assert!(!text.contains("record_dynamic_schedule"));
}

#[test]
fn other_schedules_are_recorded() {
    let a = differentiate_adjoint(&read("scoping", "private")).unwrap();
    let text = emit(&a);
    for call in [
        "init_dynamic_schedule",
        "record_dynamic_schedule(i, 1)",
        "finalize_dynamic_schedule",
        "pop_integer4(ad_numchunks)",
    ] {
        assert!(text.contains(call), "{call}\n{text}");
    }
}

#[test]
fn generated_adjoints_round_trip() {
    for r in TABLE {
        let a = differentiate_adjoint(&read("scoping", r.fixture)).unwrap();
        let text = emit(&a);
        assert_eq!(parse(&text, true).unwrap(), a, "{}\n{text}", r.fixture);
    }
}
