//! Tangent and adjoint checks against finite differences, the dot-product
//! identity and the serial adjoint.

use crate::fixture::{Fixture, Variant};
use crate::inspect;
use adomp_core::names::tangent_name;
use adomp_core::{
    differentiate_adjoint_with, differentiate_tangent, emit, AdjointOptions, Program, VarKind,
};
use adomp_exec::{execute, run_adjoint, ExecConfig, Value, Values};
use anyhow::{ensure, Result};
use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `value <= limit`.
    pub fn within(
        name: impl Into<String>,
        value: f64,
        limit: f64,
        detail: impl Into<String>,
    ) -> Check {
        Check {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
            detail: detail.into(),
        }
    }

    /// A yes/no structural property, recorded as 0 for yes.
    pub fn holds(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Check {
        Check::within(name, if ok { 0.0 } else { 1.0 }, 0.0, detail)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub fixture: String,
    pub mode: &'static str,
    pub variant: Option<Variant>,
    pub nthreads: usize,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn label(&self) -> String {
        match self.variant {
            Some(v) => format!("{}/{v}", self.mode),
            None => self.mode.to_string(),
        }
    }

    pub const TSV_HEADER: &'static str =
        "fixture\tmode\tvariant\tthreads\tseed\tcheck\tvalue\tlimit\tstatus\tdetail";

    pub fn tsv_rows(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{:e}\t{:e}\t{}\t{}",
                    self.fixture,
                    self.mode,
                    self.variant.map_or("-", Variant::name),
                    self.nthreads,
                    self.seed,
                    c.name,
                    c.value,
                    c.limit,
                    if c.passed { "pass" } else { "FAIL" },
                    c.detail
                )
            })
            .collect()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} {} threads={} seed={}: {}",
            self.fixture,
            self.label(),
            self.nthreads,
            self.seed,
            if self.passed() { "pass" } else { "FAIL" }
        )?;
        for c in &self.checks {
            write!(
                f,
                "  {} {:<28} {:>10.3e} (limit {:.0e})",
                if c.passed { "ok  " } else { "FAIL" },
                c.name,
                c.value,
                c.limit
            )?;
            if !c.detail.is_empty() {
                write!(f, "  {}", c.detail)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Adjoint options selecting `variant`. Integer inputs size the arrays for
/// the privatization footprint.
pub fn adjoint_options(variant: Variant, inputs: &Values) -> AdjointOptions {
    let mut opts = AdjointOptions::default();
    opts.size_hints = inputs
        .iter()
        .filter_map(|(k, v)| v.as_int().map(|n| (k.clone(), n)))
        .collect();
    match variant {
        Variant::Atomic => opts.privatization_budget = 0,
        Variant::Reduction => opts.privatization_budget = u64::MAX,
        Variant::OverrideShared => {}
    }
    opts
}

/// The primal with directives kept, minus any adjoint overrides the variant
/// does not use.
pub fn primal_for(fx: &Fixture, variant: Variant) -> Result<Program> {
    let mut p = fx.parallel()?;
    if variant != Variant::OverrideShared {
        inspect::strip_overrides(&mut p);
    }
    Ok(p)
}

fn exec_config(nthreads: usize, seed: u64) -> ExecConfig {
    ExecConfig::new(nthreads)
        .adversarial(seed)
        .pairing_checked()
}

fn output_params(p: &Program) -> Vec<String> {
    p.params
        .iter()
        .filter(|d| d.active && d.intent.is_some_and(|i| i.writes_output()))
        .map(|d| d.name.clone())
        .collect()
}

fn dot(a: &Values, b: &Values) -> f64 {
    a.iter()
        .map(|(k, v)| {
            v.reals()
                .iter()
                .zip(b[k].reals())
                .map(|(x, y)| x * y)
                .sum::<f64>()
        })
        .sum()
}

fn perturbed(x: &Values, dx: &Values, h: f64) -> Values {
    let mut out = x.clone();
    for (k, d) in dx {
        match (out.get_mut(k), d) {
            (Some(Value::Real(v)), Value::Real(d)) => *v += h * d,
            (Some(Value::Array(v)), Value::Array(d)) => {
                v.iter_mut().zip(d).for_each(|(v, d)| *v += h * d)
            }
            _ => {}
        }
    }
    out
}

/// Runs the tangent along a random direction and compares every active
/// output with central differences of the primal.
pub fn check_tangent(fx: &Fixture, nthreads: usize, seed: u64) -> Result<Report> {
    let p = fx.parallel()?;
    let t = differentiate_tangent(&p)?;
    let x = fx.inputs(&p, seed);
    let dx = fx.directions(&p, &x, seed, |i| i.reads_input());
    let mut tin = x.clone();
    for (k, v) in &dx {
        tin.insert(tangent_name(k), v.clone());
    }
    let cfg = exec_config(nthreads, seed);
    let tout = execute(&t, &tin, &cfg)?.values;
    let h = fx.tolerance.fd_step;
    let fp = execute(&p, &perturbed(&x, &dx, h), &cfg)?.values;
    let fm = execute(&p, &perturbed(&x, &dx, -h), &cfg)?.values;

    let mut checks = Vec::new();
    for y in output_params(&p) {
        let tan = tout[&tangent_name(&y)].reals();
        let (plus, minus) = (fp[&y].reals(), fm[&y].reals());
        let mut worst = (0.0f64, 0usize);
        for k in 0..tan.len() {
            let fd = (plus[k] - minus[k]) / (2.0 * h);
            let err = (fd - tan[k]).abs() / tan[k].abs().max(1.0);
            if err > worst.0 {
                worst = (err, k);
            }
        }
        let where_ = match fp[&y] {
            Value::Array(_) if worst.0 > 0.0 => format!("worst at {y}({})", worst.1 + 1),
            _ => String::new(),
        };
        checks.push(Check::within(
            format!("fd {y}"),
            worst.0,
            fx.tolerance.fd,
            where_,
        ));
    }
    Ok(Report {
        fixture: fx.name.to_string(),
        mode: "tangent",
        variant: None,
        nthreads,
        seed,
        checks,
    })
}

/// Structural, dot-product, serial-agreement and tape checks of one adjoint
/// variant on `nthreads` threads.
pub fn check_adjoint(fx: &Fixture, nthreads: usize, variant: Variant, seed: u64) -> Result<Report> {
    ensure!(
        fx.supports(variant),
        "variant {variant} does not apply to fixture {}",
        fx.name
    );
    let p = primal_for(fx, variant)?;
    let x = fx.inputs(&p, seed);
    let opts = adjoint_options(variant, &x);
    let adj = differentiate_adjoint_with(&p, &opts)?.program;
    let serial_adj = differentiate_adjoint_with(&fx.serial()?, &opts)?.program;
    let mut checks = structure_checks(fx, &p, &adj, variant);

    // Dot product: <tangent(dx), ybar> against <dx, adjoint(ybar)>.
    let t = differentiate_tangent(&p)?;
    let dx = fx.directions(&p, &x, seed, |i| i.reads_input());
    let ybar = fx.directions(&p, &x, seed.wrapping_add(1), |i| i.writes_output());
    let mut tin = x.clone();
    for (k, v) in &dx {
        tin.insert(tangent_name(k), v.clone());
    }
    let cfg = exec_config(nthreads, seed);
    let tout = execute(&t, &tin, &cfg)?.values;
    let ydot: Values = ybar
        .keys()
        .map(|k| (k.clone(), tout[&tangent_name(k)].clone()))
        .collect();
    let par = run_adjoint(&adj, &x, &ybar, &cfg)?;
    let lhs = dot(&ydot, &ybar);
    let rhs = dot(&dx, &par.gradients);
    checks.push(Check::within(
        "dot product",
        (lhs - rhs).abs() / lhs.abs().max(1.0),
        fx.tolerance.dot,
        format!("<ydot,ybar> = {lhs:.12e}, <xbar,xdot> = {rhs:.12e}"),
    ));

    // Serial adjoint on one thread.
    let serial = run_adjoint(&serial_adj, &x, &ybar, &ExecConfig::new(1))?;
    let exact = variant == Variant::OverrideShared;
    for (name, s) in &serial.gradients {
        let (s, q) = (s.reals(), par.gradients[name].reals());
        let mut worst = (0.0f64, 0usize);
        let mut differing = Vec::new();
        for k in 0..s.len() {
            if s[k].to_bits() != q[k].to_bits() {
                differing.push(k);
            }
            let err = (s[k] - q[k]).abs() / s[k].abs().max(1.0);
            if err > worst.0 {
                worst = (err, k);
            }
        }
        if exact {
            let detail = match differing.first() {
                Some(k) => format!("first difference at {name}({})", k + 1),
                None => String::new(),
            };
            checks.push(Check::within(
                format!("bit-exact {name}b"),
                differing.len() as f64,
                0.0,
                detail,
            ));
        } else {
            let at = if s.len() > 1 && worst.0 > 0.0 {
                format!("worst at {name}({})", worst.1 + 1)
            } else {
                String::new()
            };
            checks.push(Check::within(
                format!("serial vs parallel {name}b"),
                worst.0,
                fx.tolerance.serial_parallel,
                at,
            ));
        }
    }

    let depth = par
        .outputs
        .threads
        .iter()
        .map(|t| t.depth)
        .max()
        .unwrap_or(0);
    checks.push(Check::within("tape depth after run", depth as f64, 0.0, ""));
    Ok(Report {
        fixture: fx.name.to_string(),
        mode: "adjoint",
        variant: Some(variant),
        nthreads,
        seed,
        checks,
    })
}

fn structure_checks(fx: &Fixture, primal: &Program, adj: &Program, variant: Variant) -> Vec<Check> {
    let mut checks = Vec::new();
    let is_array = |v: &str| {
        primal
            .decl(v.strip_suffix('b').unwrap_or(v))
            .is_some_and(|d| matches!(d.kind, VarKind::RealArray(_)))
    };
    if variant == Variant::OverrideShared {
        let atomics = inspect::atomic_increments(adj);
        let grid_reductions: Vec<String> = inspect::reduction_vars(adj)
            .into_iter()
            .filter(|v| is_array(v))
            .collect();
        checks.push(Check::within("atomic increments", atomics as f64, 0.0, ""));
        checks.push(Check::holds(
            "no reductions on grid arrays",
            grid_reductions.is_empty(),
            grid_reductions.join(", "),
        ));
    }
    if let Some((var, want)) = fx.expect.increments {
        let counts = inspect::increments_per_region(adj, var);
        checks.push(Check::holds(
            format!("{want} increments of {var}"),
            !counts.is_empty() && counts.iter().all(|&c| c == want),
            format!("per backward region: {counts:?}"),
        ));
    }
    if let Some(want) = fx.expect.pushes {
        let n = inspect::push_calls(adj);
        checks.push(Check::holds(
            if want {
                "forward sweep pushes"
            } else {
                "no pushes"
            },
            (n > 0) == want,
            format!("{n} push calls"),
        ));
    }
    if let (Variant::Reduction, Some(var)) = (variant, fx.expect.reduction_clause) {
        let text = emit(adj);
        let found = inspect::reduction_clauses_in_text(&text)
            .iter()
            .any(|vs| vs.iter().any(|v| v == var));
        checks.push(Check::holds(
            format!("reduction(+:{var}) clause"),
            found,
            "",
        ));
    }
    checks
}
