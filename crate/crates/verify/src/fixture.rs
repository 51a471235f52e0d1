//! The kernels the harness checks, with seeded input generators and the
//! tolerances each one is held to.

use adomp_core::{parse, Program, VarKind};
use adomp_exec::{Value, Values};
use anyhow::{anyhow, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;

/// How the adjoint of a shared read-only variable is protected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Atomic increments on every shared adjoint the analysis cannot prove
    /// exclusive.
    Atomic,
    /// `reduction(+)` on read-only shared adjoints, atomics elsewhere.
    Reduction,
    /// The `!$ad omp_adjoint` directives written in the fixture are kept.
    OverrideShared,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Atomic, Variant::Reduction, Variant::OverrideShared];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Atomic => "atomic",
            Variant::Reduction => "reduction",
            Variant::OverrideShared => "override_shared",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                anyhow!("unknown variant `{s}` (expected atomic, reduction or override_shared)")
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    /// Central difference step.
    pub fd_step: f64,
    /// Largest relative error of a tangent against central differences.
    pub fd: f64,
    /// Perturb along a dyadic direction from dyadic inputs with a
    /// power-of-two step, so that the perturbed inputs are exact.
    pub exact_step: bool,
    pub dot: f64,
    pub serial_parallel: f64,
}

pub const DEFAULT_TOLERANCE: Tolerance = Tolerance {
    fd_step: 1e-7,
    fd: 1e-6,
    exact_step: false,
    dot: 1e-9,
    serial_parallel: 1e-9,
};

/// Size knobs. `cells` is the mesh size and `steps` the number of time
/// steps, for the fixtures that have them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Size {
    pub cells: i64,
    pub steps: i64,
}

/// Code shape the generated adjoint must have.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Expect {
    /// Adjoint increments of this variable in each backward region.
    pub increments: Option<(&'static str, usize)>,
    /// Whether the forward sweep saves values on the tape.
    pub pushes: Option<bool>,
    /// Under the reduction variant, this adjoint appears in a
    /// `reduction(+:...)` clause.
    pub reduction_clause: Option<&'static str>,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub about: &'static str,
    pub source: &'static str,
    pub size: Size,
    pub tolerance: Tolerance,
    pub variants: &'static [Variant],
    pub expect: Expect,
    generate: fn(&Program, Size, &mut ChaCha8Rng) -> Values,
}

const BOTH: &[Variant] = &[Variant::Atomic, Variant::Reduction];

pub fn all() -> Vec<Fixture> {
    vec![
        Fixture {
            name: "stencil_small",
            about: "three-point gather stencil, conventional form",
            source: include_str!("../fixtures/stencil_small.adsl"),
            size: Size {
                cells: 10_000,
                steps: 8,
            },
            tolerance: DEFAULT_TOLERANCE,
            variants: BOTH,
            expect: Expect {
                increments: Some(("arr_inb", 3)),
                pushes: Some(false),
                reduction_clause: Some("arr_inb"),
            },
            generate: stencil_inputs,
        },
        Fixture {
            name: "stencil_large",
            about: "seventeen-point gather stencil, conventional form",
            source: include_str!("../fixtures/stencil_large.adsl"),
            size: Size {
                cells: 10_000,
                steps: 8,
            },
            tolerance: DEFAULT_TOLERANCE,
            variants: BOTH,
            expect: Expect {
                increments: Some(("arr_inb", 17)),
                pushes: Some(false),
                reduction_clause: Some("arr_inb"),
            },
            generate: stencil_inputs,
        },
        Fixture {
            name: "stencil_compact",
            about: "three-point stencil whose iterations read and write the same cells",
            source: include_str!("../fixtures/stencil_compact.adsl"),
            size: Size {
                cells: 10_000,
                steps: 8,
            },
            tolerance: DEFAULT_TOLERANCE,
            variants: &[Variant::Atomic, Variant::Reduction, Variant::OverrideShared],
            expect: Expect {
                increments: None,
                pushes: Some(false),
                reduction_clause: None,
            },
            generate: stencil_inputs,
        },
        Fixture {
            name: "lbm",
            about: "D2Q5 lattice-Boltzmann, gather streaming and BGK collision",
            source: include_str!("../fixtures/lbm.adsl"),
            size: Size {
                cells: 32 * 32,
                steps: 4,
            },
            tolerance: DEFAULT_TOLERANCE,
            variants: BOTH,
            expect: Expect {
                increments: None,
                pushes: Some(true),
                reduction_clause: None,
            },
            generate: lbm_inputs,
        },
        Fixture {
            name: "gfmc",
            about: "irregular work per iteration under a dynamic schedule",
            source: include_str!("../fixtures/gfmc.adsl"),
            size: Size {
                cells: 2_000,
                steps: 1,
            },
            tolerance: DEFAULT_TOLERANCE,
            variants: BOTH,
            expect: Expect {
                increments: None,
                pushes: Some(true),
                reduction_clause: Some("xb"),
            },
            generate: generic_inputs,
        },
        Fixture {
            name: "control",
            about: "branches, strided loops and a chunked static schedule",
            source: include_str!("../fixtures/control.adsl"),
            size: Size {
                cells: 2_000,
                steps: 1,
            },
            tolerance: DEFAULT_TOLERANCE,
            variants: BOTH,
            expect: Expect {
                increments: None,
                pushes: Some(true),
                reduction_clause: None,
            },
            generate: generic_inputs,
        },
        Fixture {
            name: "linear",
            about: "y = 2x",
            source: include_str!("../fixtures/linear.adsl"),
            size: Size {
                cells: 1_000,
                steps: 1,
            },
            tolerance: Tolerance {
                fd_step: 1.0 / (1u64 << 23) as f64,
                fd: 1e-12,
                exact_step: true,
                ..DEFAULT_TOLERANCE
            },
            variants: BOTH,
            expect: Expect {
                increments: None,
                pushes: Some(false),
                reduction_clause: None,
            },
            generate: dyadic_inputs,
        },
    ]
}

pub fn names() -> Vec<&'static str> {
    all().iter().map(|f| f.name).collect()
}

pub fn by_name(name: &str) -> Result<Fixture> {
    all()
        .into_iter()
        .find(|f| f.name == name)
        .ok_or_else(|| anyhow!("unknown fixture `{name}` (known: {})", names().join(", ")))
}

impl Fixture {
    pub fn with_size(mut self, size: Size) -> Self {
        self.size = size;
        self
    }

    /// The kernel with its OpenMP directives.
    pub fn parallel(&self) -> Result<Program> {
        parse(self.source, true).with_context(|| format!("fixture {}", self.name))
    }

    /// The kernel with every directive treated as a comment.
    pub fn serial(&self) -> Result<Program> {
        parse(self.source, false).with_context(|| format!("fixture {}", self.name))
    }

    pub fn supports(&self, v: Variant) -> bool {
        self.variants.contains(&v)
    }

    /// Primal inputs drawn from `seed`.
    pub fn inputs(&self, program: &Program, seed: u64) -> Values {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (self.generate)(program, self.size, &mut rng)
    }

    /// A random value for every active parameter selected by `pick`, shaped
    /// like its input value.
    pub fn directions(
        &self,
        program: &Program,
        inputs: &Values,
        seed: u64,
        pick: impl Fn(adomp_core::Intent) -> bool,
    ) -> Values {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let draw = |rng: &mut ChaCha8Rng| {
            if self.tolerance.exact_step {
                rng.gen_range(-8i32..=8) as f64 / 8.0
            } else {
                rng.gen_range(-1.0..1.0)
            }
        };
        program
            .params
            .iter()
            .filter(|d| d.active && d.intent.is_some_and(&pick))
            .map(|d| {
                let v = match &d.kind {
                    VarKind::RealArray(_) => {
                        let len = array_len(program, inputs, &d.name);
                        Value::Array((0..len).map(|_| draw(&mut rng)).collect())
                    }
                    _ => Value::Real(draw(&mut rng)),
                };
                (d.name.clone(), v)
            })
            .collect()
    }
}

/// Extent of array `name` under the integer values in `inputs`.
pub fn array_len(program: &Program, inputs: &Values, name: &str) -> usize {
    if let Some(Value::Array(a)) = inputs.get(name) {
        return a.len();
    }
    let Some(VarKind::RealArray(ext)) = program.decl(name).map(|d| &d.kind) else {
        return 0;
    };
    eval_int(ext, inputs).unwrap_or(0).max(0) as usize
}

fn eval_int(e: &adomp_core::Expr, env: &Values) -> Option<i64> {
    use adomp_core::{BinOp, Expr, UnOp};
    Some(match e {
        Expr::Int(k) => *k,
        Expr::Var(v) => env.get(v)?.as_int()?,
        Expr::Unary(UnOp::Neg, a) => -eval_int(a, env)?,
        Expr::Binary(op, a, b) => {
            let (a, b) = (eval_int(a, env)?, eval_int(b, env)?);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div if b != 0 => a / b,
                _ => return None,
            }
        }
        _ => return None,
    })
}

/// Integer parameters get the mesh size, the step count or, for `nx` and
/// `ny`, the side of a square mesh.
fn int_param(name: &str, size: Size) -> i64 {
    match name {
        "nsteps" => size.steps,
        "nx" | "ny" => (size.cells as f64).sqrt().round() as i64,
        _ => size.cells,
    }
}

fn fill(
    program: &Program,
    size: Size,
    rng: &mut ChaCha8Rng,
    real: &mut dyn FnMut(&str, &mut ChaCha8Rng) -> f64,
) -> Values {
    let mut out = Values::new();
    for d in program.params.iter().filter(|d| d.kind == VarKind::Int) {
        out.insert(d.name.clone(), Value::Int(int_param(&d.name, size)));
    }
    for d in &program.params {
        if !d.intent.is_some_and(|i| i.reads_input()) {
            continue;
        }
        let v = match &d.kind {
            VarKind::Int => continue,
            VarKind::Real => Value::Real(real(&d.name, rng)),
            VarKind::RealArray(_) => {
                let len = array_len(program, &out, &d.name);
                Value::Array((0..len).map(|_| real(&d.name, rng)).collect())
            }
        };
        out.insert(d.name.clone(), v);
    }
    out
}

fn generic_inputs(program: &Program, size: Size, rng: &mut ChaCha8Rng) -> Values {
    fill(program, size, rng, &mut |_, rng| rng.gen_range(-1.0..1.0))
}

fn dyadic_inputs(program: &Program, size: Size, rng: &mut ChaCha8Rng) -> Values {
    fill(program, size, rng, &mut |_, rng| {
        rng.gen_range(-64i32..=64) as f64 / 8.0
    })
}

/// Stencil weights are positive and sum to one so that repeated steps stay
/// bounded; the compact diffusion coefficient is kept below 1/3.
fn stencil_inputs(program: &Program, size: Size, rng: &mut ChaCha8Rng) -> Values {
    let mut out = fill(program, size, rng, &mut |name, rng| match name {
        "c" if program.decl("u").is_some() => rng.gen_range(0.1..0.3),
        _ => rng.gen_range(-1.0..1.0),
    });
    let weights: Vec<&str> = ["a", "b", "c"]
        .into_iter()
        .filter(|w| out.contains_key(*w) && program.decl("u").is_none())
        .collect();
    if !weights.is_empty() {
        let raw: Vec<f64> = weights.iter().map(|_| rng.gen_range(0.5..1.5)).collect();
        let sum: f64 = raw.iter().sum();
        for (w, r) in weights.iter().zip(raw) {
            out.insert(w.to_string(), Value::Real(r / sum));
        }
    }
    if let Some(Value::Array(w)) = out.get_mut("w") {
        for x in w.iter_mut() {
            *x = rng.gen_range(0.5..1.5);
        }
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= sum);
    }
    out
}

/// Populations near rest equilibrium with a small random flow.
fn lbm_inputs(program: &Program, size: Size, rng: &mut ChaCha8Rng) -> Values {
    fill(program, size, rng, &mut |name, rng| {
        let weight = if name == "f0" { 1.0 / 3.0 } else { 1.0 / 6.0 };
        match name {
            "omega" => rng.gen_range(0.6..1.4),
            _ => weight * rng.gen_range(0.9..1.1),
        }
    })
}
