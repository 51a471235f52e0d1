use adomp_core::{differentiate_adjoint_with, emit, parse};
use adomp_exec::{execute, ExecConfig, Value, Values};
use adomp_verify::check::{adjoint_options, primal_for};
use adomp_verify::fixture::{self, array_len, Size, Variant};
use adomp_verify::inspect;
use adomp_verify::values::{parse_assignment, parse_tsv, to_tsv};
use adomp_verify::{check_adjoint, check_tangent};
use proptest::prelude::*;

const SMALL: Size = Size {
    cells: 200,
    steps: 2,
};

fn small(name: &str) -> fixture::Fixture {
    let fx = fixture::by_name(name).unwrap();
    let size = Size {
        cells: if name == "lbm" { 64 } else { SMALL.cells },
        steps: SMALL.steps,
    };
    fx.with_size(size)
}

#[test]
fn fixture_names_are_unique_and_resolvable() {
    let names = fixture::names();
    let mut sorted = names.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), names.len());
    for n in names {
        assert_eq!(fixture::by_name(n).unwrap().name, n);
    }
    assert!(fixture::by_name("no_such_fixture").is_err());
}

#[test]
fn every_fixture_runs_serial_and_parallel_alike() {
    for name in fixture::names() {
        let fx = small(name);
        let (par, ser) = (fx.parallel().unwrap(), fx.serial().unwrap());
        let x = fx.inputs(&par, 3);
        let a = execute(&ser, &x, &ExecConfig::new(1)).unwrap();
        let b = execute(&par, &x, &ExecConfig::new(4)).unwrap();
        for (k, va) in &a.values {
            let vb = &b.values[k];
            let (xa, xb) = match (va, vb) {
                (Value::Array(p), Value::Array(q)) => (p.clone(), q.clone()),
                (Value::Real(p), Value::Real(q)) => (vec![*p], vec![*q]),
                _ => continue,
            };
            for (p, q) in xa.iter().zip(&xb) {
                assert!(
                    (p - q).abs() <= 1e-12 * p.abs().max(1.0),
                    "{name}: {k} differs, {p} vs {q}"
                );
            }
        }
    }
}

#[test]
fn inputs_are_reproducible_per_seed() {
    let fx = small("stencil_small");
    let p = fx.parallel().unwrap();
    assert_eq!(fx.inputs(&p, 9), fx.inputs(&p, 9));
    assert_ne!(fx.inputs(&p, 9), fx.inputs(&p, 10));
}

#[test]
fn array_len_evaluates_declared_extents() {
    let fx = small("lbm");
    let p = fx.parallel().unwrap();
    let x = fx.inputs(&p, 1);
    let (nx, ny) = match (&x["nx"], &x["ny"]) {
        (Value::Int(a), Value::Int(b)) => (*a, *b),
        _ => panic!("lbm grid sizes are integers"),
    };
    assert_eq!(array_len(&p, &x, "f0"), (nx * ny) as usize);
}

#[test]
fn linear_directions_are_dyadic() {
    let fx = fixture::by_name("linear").unwrap();
    let p = fx.parallel().unwrap();
    let x = fx.inputs(&p, 4);
    let d = fx.directions(&p, &x, 4, |_| true);
    for v in d.values() {
        if let Value::Array(a) = v {
            assert!(a.iter().all(|e| (e * 8.0).fract() == 0.0));
        }
    }
}

#[test]
fn stencil_adjoints_have_expected_shape() {
    for name in ["stencil_small", "stencil_large"] {
        let fx = fixture::by_name(name).unwrap();
        let (var, per_region) = fx.expect.increments.unwrap();
        let x = fx.inputs(&fx.parallel().unwrap(), 1);

        let atomic = Variant::Atomic;
        let a = differentiate_adjoint_with(
            &primal_for(&fx, atomic).unwrap(),
            &adjoint_options(atomic, &x),
        )
        .unwrap()
        .program;
        assert!(inspect::increments_per_region(&a, var).contains(&per_region));
        assert!(inspect::atomic_increments(&a) >= per_region);
        assert_eq!(inspect::push_calls(&a), 0);

        let red = Variant::Reduction;
        let r =
            differentiate_adjoint_with(&primal_for(&fx, red).unwrap(), &adjoint_options(red, &x))
                .unwrap()
                .program;
        assert!(inspect::reduction_vars(&r).iter().any(|v| v == var));
        let text = emit(&r);
        assert!(inspect::reduction_clauses_in_text(&text)
            .iter()
            .any(|vars| vars.iter().any(|v| v == var)));
    }
}

#[test]
fn strip_overrides_removes_adjoint_directives() {
    let mut p = fixture::by_name("stencil_compact")
        .unwrap()
        .parallel()
        .unwrap();
    assert!(emit(&p).contains("!$ad omp_adjoint"));
    inspect::strip_overrides(&mut p);
    assert!(!emit(&p).contains("!$ad omp_adjoint"));
}

#[test]
fn reduction_clause_scan_reads_every_list() {
    let text = "!$omp parallel do reduction(+:ab, bb)\nx\n!$omp parallel reduction(+:cb)\n";
    assert_eq!(
        inspect::reduction_clauses_in_text(text),
        vec![
            vec!["ab".to_string(), "bb".to_string()],
            vec!["cb".to_string()]
        ]
    );
}

#[test]
fn small_checks_pass() {
    for name in fixture::names() {
        let fx = small(name);
        let t = check_tangent(&fx, 2, 5).unwrap();
        assert!(t.passed(), "{t}");
        for &v in fx.variants {
            let r = check_adjoint(&fx, 3, v, 5).unwrap();
            assert!(r.passed(), "{r}");
        }
    }
}

#[test]
fn report_tsv_has_one_row_per_check() {
    let r = check_adjoint(&small("linear"), 2, Variant::Atomic, 1).unwrap();
    let rows = r.tsv_rows();
    assert_eq!(rows.len(), r.checks.len());
    let cols = adomp_verify::Report::TSV_HEADER.split('\t').count();
    assert!(rows.iter().all(|row| row.split('\t').count() == cols));
}

#[test]
fn variant_names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
    }
    assert!("nonsense".parse::<Variant>().is_err());
}

const KERNEL: &str = "subroutine k(n, a, x)
  integer, intent(in) :: n
  real, intent(in) :: a
  real, intent(inout) :: x(n)
  integer :: i
  do i = 1, n
    x(i) = a*x(i)
  end do
end subroutine k
";

#[test]
fn assignments_follow_declared_kinds() {
    let p = parse(KERNEL, true).unwrap();
    assert_eq!(
        parse_assignment(&p, "n=3").unwrap(),
        ("n".into(), Value::Int(3))
    );
    assert_eq!(parse_assignment(&p, "a=0.5").unwrap().1, Value::Real(0.5));
    assert_eq!(
        parse_assignment(&p, "x=1,2.5").unwrap().1,
        Value::Array(vec![1.0, 2.5])
    );
    assert!(parse_assignment(&p, "n=1.5").is_err());
    assert!(parse_assignment(&p, "a=1,2").is_err());
    assert!(parse_assignment(&p, "i=1").is_err());
    assert!(parse_assignment(&p, "x").is_err());
}

#[test]
fn tsv_rejects_ragged_rows() {
    let p = parse(KERNEL, true).unwrap();
    assert!(parse_tsv(&p, "n\ta\n3\t1.0\t7\n").is_err());
    assert!(parse_tsv(&p, "").is_err());
}

proptest! {
    #[test]
    fn tsv_round_trips(n in 0i64..50, a in -1e6f64..1e6, x in proptest::collection::vec(-1e6f64..1e6, 0..20)) {
        let p = parse(KERNEL, true).unwrap();
        let vals = Values::from([
            ("n".to_string(), Value::Int(n)),
            ("a".to_string(), Value::Real(a)),
            ("x".to_string(), Value::Array(x)),
        ]);
        let names: Vec<String> = vals.keys().cloned().collect();
        let text = to_tsv(&vals, &names).unwrap();
        prop_assert_eq!(parse_tsv(&p, &text).unwrap(), vals);
    }
}
