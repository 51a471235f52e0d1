//! Wall-clock timings of primal, tangent and adjoint programs.
//!
//! Every parallel program is timed against the program compiled from the
//! same source with its directives ignored, run on one thread. The numbers
//! are for inspection; nothing here passes or fails.

use crate::check::{adjoint_options, primal_for};
use crate::fixture::{array_len, Fixture};
use adomp_core::names::{adjoint_name, tangent_name};
use adomp_core::{differentiate_adjoint_with, differentiate_tangent, parse, Program, VarKind};
use adomp_exec::{execute, ExecConfig, Value, Values};
use anyhow::Result;
use std::time::Instant;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub fixture: String,
    pub program: String,
    pub threads: usize,
    pub seconds: f64,
    pub serial_seconds: f64,
}

impl BenchRow {
    pub const TSV_HEADER: &'static str =
        "fixture\tprogram\tthreads\tseconds\tserial_seconds\tspeedup";

    /// Serial time over parallel time.
    pub fn speedup(&self) -> f64 {
        self.serial_seconds / self.seconds
    }

    pub fn tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.3}",
            self.fixture,
            self.program,
            self.threads,
            self.seconds,
            self.serial_seconds,
            self.speedup()
        )
    }
}

/// Fastest of `reps` runs.
fn time(reps: usize, mut run: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        run()?;
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// Adds a zero value for every derivative parameter the program declares.
fn with_zero_derivatives(p: &Program, inputs: &Values, derive: fn(&str) -> String) -> Values {
    let mut all = inputs.clone();
    for d in p.params.iter().filter(|d| d.active) {
        let zero = match d.kind {
            VarKind::RealArray(_) => Value::Array(vec![0.0; array_len(p, inputs, &d.name)]),
            _ => Value::Real(0.0),
        };
        all.entry(derive(&d.name)).or_insert(zero);
    }
    all
}

fn rows_for(
    fixture: &str,
    program: &str,
    serial: &Program,
    parallel: &Program,
    inputs: &Values,
    threads: &[usize],
    reps: usize,
) -> Result<Vec<BenchRow>> {
    let serial_seconds = time(reps, || {
        execute(serial, inputs, &ExecConfig::new(1))
            .map(drop)
            .map_err(Into::into)
    })?;
    let mut rows = Vec::new();
    for &nt in threads {
        let seconds = time(reps, || {
            execute(parallel, inputs, &ExecConfig::new(nt))
                .map(drop)
                .map_err(Into::into)
        })?;
        rows.push(BenchRow {
            fixture: fixture.to_string(),
            program: program.to_string(),
            threads: nt,
            seconds,
            serial_seconds,
        });
    }
    Ok(rows)
}

/// Times the primal, the tangent and every applicable adjoint variant of
/// `fx` on each thread count.
pub fn bench(fx: &Fixture, threads: &[usize], reps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    let (par, ser) = (fx.parallel()?, fx.serial()?);
    let x = fx.inputs(&par, seed);
    let mut rows = rows_for(fx.name, "primal", &ser, &par, &x, threads, reps)?;

    let tin = with_zero_derivatives(&par, &x, tangent_name);
    let (tp, ts) = (differentiate_tangent(&par)?, differentiate_tangent(&ser)?);
    rows.extend(rows_for(fx.name, "tangent", &ts, &tp, &tin, threads, reps)?);

    let ain = with_zero_derivatives(&par, &x, adjoint_name);
    for &v in fx.variants {
        let opts = adjoint_options(v, &x);
        let ap = differentiate_adjoint_with(&primal_for(fx, v)?, &opts)?.program;
        let aser = differentiate_adjoint_with(&ser, &opts)?.program;
        rows.extend(rows_for(
            fx.name,
            &format!("adjoint_{}", v.name()),
            &aser,
            &ap,
            &ain,
            threads,
            reps,
        )?);
    }
    Ok(rows)
}

const EMPTY_LOOP: &str = "subroutine empty_loop(n)
  integer, intent(in) :: n
  integer :: i
  !$omp parallel do
  do i = 1, n
  end do
end subroutine empty_loop
";

/// Timing of a parallel loop with an empty body, as a floor for the
/// overhead of starting a team.
pub fn empty_loop(threads: &[usize], reps: usize) -> Result<Vec<BenchRow>> {
    let (par, ser) = (parse(EMPTY_LOOP, true)?, parse(EMPTY_LOOP, false)?);
    let x = Values::from([("n".to_string(), Value::Int(1000))]);
    rows_for("empty_loop", "primal", &ser, &par, &x, threads, reps)
}
