//! Multithreaded interpreter for primal, tangent and adjoint programs.
//!
//! Parallel regions run on real OS threads with OpenMP clause semantics:
//! private copies live for the whole region, `firstprivate` copies start
//! from the shared value, `reduction(+)` copies start at zero and are added
//! to the shared value in thread order at region exit, and `lastprivate`
//! takes the copy of the thread that ran the last iteration.

pub mod dispenser;
pub mod error;
pub mod interp;
pub mod ir;
pub mod team;
pub mod value;

use adomp_core::names::adjoint_name;
use adomp_core::Program;

pub use dispenser::{Dispenser, DynamicMode};
pub use error::{ExecError, Fault};
pub use interp::{threads_from_env, ExecConfig, Outputs, ThreadReport};
pub use ir::{compile, Compiled};
pub use value::{Value, Values};

/// Runs `program` and returns the final value of every parameter.
///
/// ```
/// use adomp_exec::{execute, ExecConfig, Value, Values};
/// let p = adomp_core::parse(
///     "subroutine sq(x, y)\n  real, intent(in) :: x\n  real, intent(out) :: y\n  y = x*x\nend subroutine sq\n",
///     true,
/// )
/// .unwrap();
/// let inputs = Values::from([("x".to_string(), Value::Real(3.0))]);
/// let out = execute(&p, &inputs, &ExecConfig::new(2)).unwrap();
/// assert_eq!(out.get("y"), Some(&Value::Real(9.0)));
/// ```
pub fn execute(program: &Program, inputs: &Values, cfg: &ExecConfig) -> Result<Outputs, ExecError> {
    interp::run(&compile(program)?, inputs, &[], cfg)
}

#[derive(Clone, Debug)]
pub struct AdjointRun {
    /// Adjoint of every active input parameter, keyed by the primal name.
    pub gradients: Values,
    pub outputs: Outputs,
}

/// Runs an adjoint program produced by the adjoint transform.
///
/// `seeds` holds output adjoints keyed by primal name. Adjoints that are
/// not seeded start at zero. The run fails if any thread ends with values
/// left on its tape or with unmatched pushes and pops.
pub fn run_adjoint(
    adjoint: &Program,
    inputs: &Values,
    seeds: &Values,
    cfg: &ExecConfig,
) -> Result<AdjointRun, ExecError> {
    let pairs: Vec<(String, String, bool)> = adjoint
        .params
        .iter()
        .filter(|d| d.active)
        .filter_map(|d| {
            let b = adjoint_name(&d.name);
            adjoint.params.iter().any(|p| p.name == b).then(|| {
                let input = d.intent.is_some_and(|i| i.reads_input());
                (d.name.clone(), b, input)
            })
        })
        .collect();
    let mut all = inputs.clone();
    for (name, value) in seeds {
        let Some((_, b, _)) = pairs.iter().find(|(p, _, _)| p == name) else {
            return Err(ExecError::BadInput {
                name: name.clone(),
                reason: "not an active parameter".into(),
            });
        };
        all.insert(b.clone(), value.clone());
    }
    let zero: Vec<String> = pairs.iter().map(|(_, b, _)| b.clone()).collect();
    let outputs = interp::run(&compile(adjoint)?, &all, &zero, cfg)?;
    for t in &outputs.threads {
        if t.depth != 0 {
            return Err(ExecError::TapeResidue {
                tid: t.tid,
                depth: t.depth,
            });
        }
        if t.pushes != t.pops {
            return Err(ExecError::Unpaired {
                tid: t.tid,
                pushes: t.pushes,
                pops: t.pops,
            });
        }
    }
    let gradients = pairs
        .iter()
        .filter(|(_, _, input)| *input)
        .map(|(p, b, _)| (p.clone(), outputs.values[b].clone()))
        .collect();
    Ok(AdjointRun { gradients, outputs })
}
