//! Abstract syntax of the mini array language.
//!
//! A source file holds exactly one routine. Arrays are one-dimensional,
//! 1-based and hold 64-bit reals; scalars are reals or integers. Parallel
//! worksharing loops carry an OpenMP-style [`ClauseSet`].
//!
//! Expression constructors on [`Expr`] fold negated literals so that
//! `parse(emit(e)) == e` holds for every tree built through them.

use indexmap::IndexMap;
use std::collections::BTreeSet;
use std::fmt;

pub type Ident = String;

#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub name: Ident,
    /// Parameters in header order.
    pub params: Vec<VarDecl>,
    pub locals: Vec<VarDecl>,
    pub body: Vec<Stmt>,
}

impl Program {
    pub fn decl(&self, name: &str) -> Option<&VarDecl> {
        self.params
            .iter()
            .chain(self.locals.iter())
            .find(|d| d.name == name)
    }

    pub fn decls(&self) -> impl Iterator<Item = &VarDecl> {
        self.params.iter().chain(self.locals.iter())
    }

    /// True when `name` carries a derivative counterpart.
    pub fn is_active(&self, name: &str) -> bool {
        self.decl(name).is_some_and(|d| d.active)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Intent {
    In,
    Out,
    InOut,
}

impl Intent {
    pub fn as_str(self) -> &'static str {
        match self {
            Intent::In => "in",
            Intent::Out => "out",
            Intent::InOut => "inout",
        }
    }

    pub fn reads_input(self) -> bool {
        matches!(self, Intent::In | Intent::InOut)
    }

    pub fn writes_output(self) -> bool {
        matches!(self, Intent::Out | Intent::InOut)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VarKind {
    Real,
    Int,
    /// Real array with a 1-based extent expression over integer parameters.
    RealArray(Expr),
}

impl VarKind {
    pub fn is_real(&self) -> bool {
        matches!(self, VarKind::Real | VarKind::RealArray(_))
    }

    pub fn is_array(&self) -> bool {
        matches!(self, VarKind::RealArray(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarDecl {
    pub name: Ident,
    pub kind: VarKind,
    /// `Some` for parameters, `None` for locals.
    pub intent: Option<Intent>,
    pub active: bool,
}

impl VarDecl {
    pub fn param(name: &str, kind: VarKind, intent: Intent, active: bool) -> Self {
        VarDecl {
            name: name.to_string(),
            kind,
            intent: Some(intent),
            active,
        }
    }

    /// Real locals are always active; integer locals never are.
    pub fn local(name: &str, kind: VarKind) -> Self {
        let active = kind.is_real();
        VarDecl {
            name: name.to_string(),
            kind,
            intent: None,
            active,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "/=",
            BinOp::And => ".and.",
            BinOp::Or => ".or.",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne
        )
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Intrinsic {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Intrinsic {
    pub fn name(self) -> &'static str {
        match self {
            Intrinsic::Sin => "sin",
            Intrinsic::Cos => "cos",
            Intrinsic::Exp => "exp",
            Intrinsic::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Intrinsic::Sin,
            "cos" => Intrinsic::Cos,
            "exp" => Intrinsic::Exp,
            "sqrt" => Intrinsic::Sqrt,
            _ => return None,
        })
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Intrinsic::Sin => x.sin(),
            Intrinsic::Cos => x.cos(),
            Intrinsic::Exp => x.exp(),
            Intrinsic::Sqrt => x.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Real(f64),
    Int(i64),
    Var(Ident),
    Elem(Ident, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Intrinsic(Intrinsic, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn elem(name: &str, index: Expr) -> Expr {
        Expr::Elem(name.to_string(), Box::new(index))
    }

    pub fn real(v: f64) -> Expr {
        Expr::Real(v)
    }

    pub fn int(v: i64) -> Expr {
        Expr::Int(v)
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinOp::Add, a, b)
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinOp::Sub, a, b)
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinOp::Mul, a, b)
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinOp::Div, a, b)
    }

    pub fn cmp(op: BinOp, a: Expr, b: Expr) -> Expr {
        debug_assert!(op.is_comparison());
        Expr::binary(op, a, b)
    }

    /// Negation; negated literals fold into negative literals.
    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Real(v) => Expr::Real(-v),
            Expr::Int(v) => Expr::Int(-v),
            Expr::Unary(UnOp::Neg, inner) => *inner,
            other => Expr::Unary(UnOp::Neg, Box::new(other)),
        }
    }

    pub fn not(a: Expr) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(a))
    }

    pub fn call(f: Intrinsic, a: Expr) -> Expr {
        Expr::Intrinsic(f, Box::new(a))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Real(v) if *v == 0.0) || matches!(self, Expr::Int(0))
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Real(v) if *v == 1.0) || matches!(self, Expr::Int(1))
    }

    /// Names of every variable read by this expression, including index
    /// expressions.
    pub fn vars(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Expr::Real(_) | Expr::Int(_) => {}
            Expr::Var(n) => {
                out.insert(n.clone());
            }
            Expr::Elem(n, idx) => {
                out.insert(n.clone());
                idx.vars(out);
            }
            Expr::Unary(_, a) | Expr::Intrinsic(_, a) => a.vars(out),
            Expr::Binary(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }

    pub fn var_set(&self) -> BTreeSet<Ident> {
        let mut s = BTreeSet::new();
        self.vars(&mut s);
        s
    }

    pub fn mentions(&self, name: &str) -> bool {
        match self {
            Expr::Real(_) | Expr::Int(_) => false,
            Expr::Var(n) => n == name,
            Expr::Elem(n, idx) => n == name || idx.mentions(name),
            Expr::Unary(_, a) | Expr::Intrinsic(_, a) => a.mentions(name),
            Expr::Binary(_, a, b) => a.mentions(name) || b.mentions(name),
        }
    }

    /// Visits every scalar or element reference (not the index sub-expressions
    /// themselves, which are visited separately by callers that need them).
    pub fn refs(&self) -> Vec<Ref> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs(&self, out: &mut Vec<Ref>) {
        match self {
            Expr::Real(_) | Expr::Int(_) => {}
            Expr::Var(n) => out.push(Ref::scalar(n)),
            Expr::Elem(n, idx) => {
                out.push(Ref::elem(n, (**idx).clone()));
                idx.collect_refs(out);
            }
            Expr::Unary(_, a) | Expr::Intrinsic(_, a) => a.collect_refs(out),
            Expr::Binary(_, a, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
        }
    }

    /// Rewrites every occurrence of variable `from` (scalar or array name).
    pub fn rename(&self, from: &str, to: &str) -> Expr {
        match self {
            Expr::Real(_) | Expr::Int(_) => self.clone(),
            Expr::Var(n) if n == from => Expr::var(to),
            Expr::Var(_) => self.clone(),
            Expr::Elem(n, idx) => {
                let name = if n == from { to } else { n.as_str() };
                Expr::elem(name, idx.rename(from, to))
            }
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(a.rename(from, to))),
            Expr::Intrinsic(f, a) => Expr::call(*f, a.rename(from, to)),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.rename(from, to), b.rename(from, to)),
        }
    }
}

/// An assignable location: a scalar or a single array cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Ref {
    pub name: Ident,
    pub index: Option<Expr>,
}

impl Ref {
    pub fn scalar(name: &str) -> Ref {
        Ref {
            name: name.to_string(),
            index: None,
        }
    }

    pub fn elem(name: &str, index: Expr) -> Ref {
        Ref {
            name: name.to_string(),
            index: Some(index),
        }
    }

    pub fn to_expr(&self) -> Expr {
        match &self.index {
            None => Expr::var(&self.name),
            Some(i) => Expr::elem(&self.name, i.clone()),
        }
    }

    /// Same location under another variable name (e.g. the derivative).
    pub fn with_name(&self, name: &str) -> Ref {
        Ref {
            name: name.to_string(),
            index: self.index.clone(),
        }
    }

    pub fn rename(&self, from: &str, to: &str) -> Ref {
        Ref {
            name: if self.name == from {
                to.to_string()
            } else {
                self.name.clone()
            },
            index: self.index.as_ref().map(|i| i.rename(from, to)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scope {
    Shared,
    Private,
    FirstPrivate,
    LastPrivate,
    ReductionSum,
}

impl Scope {
    pub fn clause_name(self) -> &'static str {
        match self {
            Scope::Shared => "shared",
            Scope::Private => "private",
            Scope::FirstPrivate => "firstprivate",
            Scope::LastPrivate => "lastprivate",
            Scope::ReductionSum => "reduction",
        }
    }

    pub fn is_privatized(self) -> bool {
        !matches!(self, Scope::Shared)
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::ReductionSum => f.write_str("reduction(+)"),
            other => f.write_str(other.clause_name()),
        }
    }
}

/// Scoping forced on the adjoint of a shared variable by `!$ad omp_adjoint`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OverrideScope {
    Shared,
    ReductionSum,
    /// Shared, with every increment of the adjoint made atomic.
    Atomic,
}

impl OverrideScope {
    pub fn clause_name(self) -> &'static str {
        match self {
            OverrideScope::Shared => "shared",
            OverrideScope::ReductionSum => "reduction",
            OverrideScope::Atomic => "atomic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Schedule {
    Static(Option<i64>),
    Dynamic(Option<i64>),
}

impl Schedule {
    pub fn chunk(self) -> Option<i64> {
        match self {
            Schedule::Static(c) | Schedule::Dynamic(c) => c,
        }
    }

    pub fn is_static(self) -> bool {
        matches!(self, Schedule::Static(_))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClauseSet {
    /// Explicit scoping clauses, in source order.
    pub scoping: IndexMap<Ident, Scope>,
    /// Implicit scopes of variables referenced in the construct but absent
    /// from every clause. Filled by validation; never emitted.
    pub defaults: IndexMap<Ident, Scope>,
    pub schedule: Option<Schedule>,
    pub ad_override: IndexMap<Ident, OverrideScope>,
}

impl ClauseSet {
    pub fn with_schedule(schedule: Option<Schedule>) -> Self {
        ClauseSet {
            schedule,
            ..Default::default()
        }
    }

    /// Effective scope: explicit clause first, then the computed default.
    pub fn scope_of(&self, name: &str) -> Option<Scope> {
        self.scoping
            .get(name)
            .or_else(|| self.defaults.get(name))
            .copied()
    }

    pub fn is_explicit(&self, name: &str) -> bool {
        self.scoping.contains_key(name)
    }

    /// Every variable with an effective scope: explicit entries first.
    pub fn all_scopes(&self) -> impl Iterator<Item = (&Ident, Scope)> {
        self.scoping
            .iter()
            .chain(self.defaults.iter())
            .map(|(k, v)| (k, *v))
    }

    pub fn push(&mut self, name: &str, scope: Scope) {
        self.scoping.insert(name.to_string(), scope);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Loop {
    pub counter: Ident,
    pub start: Expr,
    pub end: Expr,
    pub stride: Expr,
    pub body: Vec<Stmt>,
}

impl Loop {
    pub fn new(counter: &str, start: Expr, end: Expr, stride: Expr, body: Vec<Stmt>) -> Self {
        Loop {
            counter: counter.to_string(),
            start,
            end,
            stride,
            body,
        }
    }
}

/// Entry points of the runtime library that generated code may call.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RuntimeCall {
    PushReal8,
    PopReal8,
    PushInteger4,
    PopInteger4,
    GetStaticSchedule,
    InitDynamicSchedule,
    RecordDynamicSchedule,
    FinalizeDynamicSchedule,
}

/// Argument role in a runtime call signature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArgRole {
    RealIn,
    IntIn,
    RealOut,
    IntOut,
}

impl RuntimeCall {
    pub const ALL: [RuntimeCall; 8] = [
        RuntimeCall::PushReal8,
        RuntimeCall::PopReal8,
        RuntimeCall::PushInteger4,
        RuntimeCall::PopInteger4,
        RuntimeCall::GetStaticSchedule,
        RuntimeCall::InitDynamicSchedule,
        RuntimeCall::RecordDynamicSchedule,
        RuntimeCall::FinalizeDynamicSchedule,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuntimeCall::PushReal8 => "push_real8",
            RuntimeCall::PopReal8 => "pop_real8",
            RuntimeCall::PushInteger4 => "push_integer4",
            RuntimeCall::PopInteger4 => "pop_integer4",
            RuntimeCall::GetStaticSchedule => "get_static_schedule",
            RuntimeCall::InitDynamicSchedule => "init_dynamic_schedule",
            RuntimeCall::RecordDynamicSchedule => "record_dynamic_schedule",
            RuntimeCall::FinalizeDynamicSchedule => "finalize_dynamic_schedule",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn signature(self) -> &'static [ArgRole] {
        use ArgRole::*;
        match self {
            RuntimeCall::PushReal8 => &[RealIn],
            RuntimeCall::PopReal8 => &[RealOut],
            RuntimeCall::PushInteger4 => &[IntIn],
            RuntimeCall::PopInteger4 => &[IntOut],
            RuntimeCall::GetStaticSchedule => &[IntIn, IntIn, IntIn, IntOut, IntOut],
            RuntimeCall::InitDynamicSchedule | RuntimeCall::FinalizeDynamicSchedule => &[],
            RuntimeCall::RecordDynamicSchedule => &[IntIn, IntIn],
        }
    }

    pub fn is_push(self) -> bool {
        matches!(self, RuntimeCall::PushReal8 | RuntimeCall::PushInteger4)
    }

    pub fn is_pop(self) -> bool {
        matches!(self, RuntimeCall::PopReal8 | RuntimeCall::PopInteger4)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    Assign {
        lhs: Ref,
        rhs: Expr,
    },
    Increment {
        lhs: Ref,
        rhs: Expr,
        atomic: bool,
    },
    SeqLoop(Loop),
    /// `!$omp parallel do`: a worksharing loop in its own parallel region.
    ParallelLoop {
        lp: Loop,
        clauses: ClauseSet,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    /// `!$omp parallel` ... `!$omp end parallel`; produced by the adjoint
    /// transform, where every team member runs the body.
    ParallelRegion {
        clauses: ClauseSet,
        body: Vec<Stmt>,
    },
    /// `!$omp do`: a worksharing loop inside an enclosing region.
    WorkshareLoop {
        lp: Loop,
        schedule: Schedule,
    },
    Call {
        func: RuntimeCall,
        args: Vec<Expr>,
    },
}

impl Stmt {
    pub fn assign(lhs: Ref, rhs: Expr) -> Stmt {
        Stmt::Assign { lhs, rhs }
    }

    pub fn increment(lhs: Ref, rhs: Expr, atomic: bool) -> Stmt {
        Stmt::Increment { lhs, rhs, atomic }
    }

    pub fn call(func: RuntimeCall, args: Vec<Expr>) -> Stmt {
        Stmt::Call { func, args }
    }

    /// Visits this statement and every nested statement in pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        for child in self.children() {
            child.walk(f);
        }
    }

    pub fn children(&self) -> Box<dyn Iterator<Item = &Stmt> + '_> {
        match self {
            Stmt::SeqLoop(lp) | Stmt::ParallelLoop { lp, .. } | Stmt::WorkshareLoop { lp, .. } => {
                Box::new(lp.body.iter())
            }
            Stmt::If {
                then_body,
                else_body,
                ..
            } => Box::new(then_body.iter().chain(else_body.iter())),
            Stmt::ParallelRegion { body, .. } => Box::new(body.iter()),
            _ => Box::new(std::iter::empty()),
        }
    }
}

/// Visits every statement of a block, recursively, in pre-order.
pub fn walk_block<'a>(block: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for s in block {
        s.walk(f);
    }
}

/// Variables assigned anywhere in a block: assignment and increment targets,
/// loop counters and call outputs.
pub fn assigned_vars(block: &[Stmt]) -> BTreeSet<Ident> {
    let mut out = BTreeSet::new();
    walk_block(block, &mut |s| match s {
        Stmt::Assign { lhs, .. } | Stmt::Increment { lhs, .. } => {
            out.insert(lhs.name.clone());
        }
        Stmt::SeqLoop(lp) | Stmt::ParallelLoop { lp, .. } | Stmt::WorkshareLoop { lp, .. } => {
            out.insert(lp.counter.clone());
        }
        Stmt::Call { func, args } => {
            for (role, arg) in func.signature().iter().zip(args) {
                if matches!(role, ArgRole::RealOut | ArgRole::IntOut) {
                    if let Expr::Var(n) | Expr::Elem(n, _) = arg {
                        out.insert(n.clone());
                    }
                }
            }
        }
        _ => {}
    });
    out
}
