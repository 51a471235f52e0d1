//! Resolved, typed form of a program.
//!
//! Variables become slot numbers and every expression is split by result
//! type, so evaluation never looks up names or checks types.

use crate::error::ExecError;
use adomp_core::validate::{Symbols, Ty};
use adomp_core::{
    BinOp, Expr, Intent, Intrinsic, Program, Ref, RuntimeCall, Schedule, Scope, Stmt, UnOp, VarKind,
};
use std::collections::{BTreeSet, HashMap};

pub type Slot = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn test<T: PartialOrd>(self, a: T, b: T) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Clone, Debug)]
pub enum RExpr {
    Const(f64),
    Var(Slot),
    Elem(Slot, Box<IExpr>),
    FromInt(Box<IExpr>),
    Neg(Box<RExpr>),
    Bin(ArOp, Box<RExpr>, Box<RExpr>),
    Intr(Intrinsic, Box<RExpr>),
}

/// Integer and logical expressions; logical values are 0 or 1.
#[derive(Clone, Debug)]
pub enum IExpr {
    Const(i64),
    Var(Slot),
    Neg(Box<IExpr>),
    Bin(ArOp, Box<IExpr>, Box<IExpr>),
    CmpR(CmpOp, Box<RExpr>, Box<RExpr>),
    CmpI(CmpOp, Box<IExpr>, Box<IExpr>),
    And(Box<IExpr>, Box<IExpr>),
    Or(Box<IExpr>, Box<IExpr>),
    Not(Box<IExpr>),
}

#[derive(Clone, Debug)]
pub struct Target {
    pub slot: Slot,
    pub index: Option<IExpr>,
}

#[derive(Clone, Debug)]
pub struct LoopIr {
    pub counter: Slot,
    pub start: IExpr,
    pub end: IExpr,
    pub stride: IExpr,
    pub body: Vec<Op>,
}

#[derive(Clone, Debug)]
pub struct WorkshareIr {
    pub lp: LoopIr,
    pub schedule: Schedule,
}

#[derive(Clone, Debug)]
pub struct RegionIr {
    /// Every privatized variable with its scope; anything else is shared.
    pub private: Vec<(Slot, Scope)>,
    pub body: Vec<Op>,
}

#[derive(Clone, Debug)]
pub enum OpKind {
    AssignR(Target, RExpr),
    AssignI(Slot, IExpr),
    IncR {
        target: Target,
        rhs: RExpr,
        atomic: bool,
    },
    IncI(Slot, IExpr),
    Loop(Box<LoopIr>),
    If(IExpr, Vec<Op>, Vec<Op>),
    Region(Box<RegionIr>),
    Workshare(Box<WorkshareIr>),
    PushR(RExpr),
    PopR(Target),
    PushI(IExpr),
    PopI(Slot),
    StaticSchedule {
        bounds: [IExpr; 3],
        start_out: Slot,
        end_out: Slot,
    },
    InitDynamic,
    RecordDynamic(IExpr, IExpr),
    FinalizeDynamic,
}

#[derive(Clone, Debug)]
pub struct Op {
    pub kind: OpKind,
    /// Index into [`Compiled::sites`].
    pub site: usize,
}

#[derive(Clone, Debug)]
pub enum SlotKind {
    Real,
    Int,
    Array(IExpr),
}

#[derive(Clone, Debug)]
pub struct VarInfo {
    pub name: String,
    pub kind: SlotKind,
    pub intent: Option<Intent>,
    pub active: bool,
}

#[derive(Clone, Debug)]
pub struct Compiled {
    pub name: String,
    pub vars: Vec<VarInfo>,
    /// Number of leading slots that are parameters.
    pub nparams: usize,
    pub body: Vec<Op>,
    /// First line of the source text of each statement, for fault reports.
    pub sites: Vec<String>,
}

impl Compiled {
    pub fn slot(&self, name: &str) -> Option<Slot> {
        self.vars.iter().position(|v| v.name == name)
    }
}

pub fn compile(p: &Program) -> Result<Compiled, ExecError> {
    let slots: HashMap<String, Slot> = p
        .decls()
        .enumerate()
        .map(|(k, d)| (d.name.clone(), k))
        .collect();
    let mut c = Compiler {
        syms: Symbols::new(p),
        slots,
        sites: Vec::new(),
    };
    let mut vars = Vec::new();
    for d in p.decls() {
        let kind = match &d.kind {
            VarKind::Real => SlotKind::Real,
            VarKind::Int => SlotKind::Int,
            VarKind::RealArray(ext) => SlotKind::Array(c.int(ext)?),
        };
        vars.push(VarInfo {
            name: d.name.clone(),
            kind,
            intent: d.intent,
            active: d.active,
        });
    }
    let body = c.block(&p.body)?;
    Ok(Compiled {
        name: p.name.clone(),
        vars,
        nparams: p.params.len(),
        body,
        sites: c.sites,
    })
}

struct Compiler<'a> {
    syms: Symbols<'a>,
    slots: HashMap<String, Slot>,
    sites: Vec<String>,
}

fn err(msg: impl Into<String>) -> ExecError {
    ExecError::Compile(msg.into())
}

fn arith(op: BinOp) -> Option<ArOp> {
    Some(match op {
        BinOp::Add => ArOp::Add,
        BinOp::Sub => ArOp::Sub,
        BinOp::Mul => ArOp::Mul,
        BinOp::Div => ArOp::Div,
        _ => return None,
    })
}

fn comparison(op: BinOp) -> Option<CmpOp> {
    Some(match op {
        BinOp::Lt => CmpOp::Lt,
        BinOp::Le => CmpOp::Le,
        BinOp::Gt => CmpOp::Gt,
        BinOp::Ge => CmpOp::Ge,
        BinOp::Eq => CmpOp::Eq,
        BinOp::Ne => CmpOp::Ne,
        _ => return None,
    })
}

fn first_line(s: &Stmt) -> String {
    let mut out = String::new();
    adomp_core::emit::emit_stmt(&mut out, s, 0);
    out.lines().next().unwrap_or_default().trim().to_string()
}

impl Compiler<'_> {
    fn slot(&self, name: &str) -> Result<Slot, ExecError> {
        self.slots
            .get(name)
            .copied()
            .ok_or_else(|| err(format!("undeclared variable `{name}`")))
    }

    fn ty(&self, e: &Expr) -> Result<Ty, ExecError> {
        self.syms.type_of(e).map_err(|e| err(e.to_string()))
    }

    fn real(&self, e: &Expr) -> Result<RExpr, ExecError> {
        if self.ty(e)? != Ty::Real {
            return Ok(RExpr::FromInt(Box::new(self.int(e)?)));
        }
        Ok(match e {
            Expr::Real(v) => RExpr::Const(*v),
            Expr::Var(n) => RExpr::Var(self.slot(n)?),
            Expr::Elem(n, idx) => RExpr::Elem(self.slot(n)?, Box::new(self.int(idx)?)),
            Expr::Unary(UnOp::Neg, a) => RExpr::Neg(Box::new(self.real(a)?)),
            Expr::Intrinsic(f, a) => RExpr::Intr(*f, Box::new(self.real(a)?)),
            Expr::Binary(op, a, b) => {
                let op = arith(*op).ok_or_else(|| err("logical value in arithmetic"))?;
                RExpr::Bin(op, Box::new(self.real(a)?), Box::new(self.real(b)?))
            }
            other => return Err(err(format!("not a real expression: {other:?}"))),
        })
    }

    fn int(&self, e: &Expr) -> Result<IExpr, ExecError> {
        if self.ty(e)? == Ty::Real {
            return Err(err(format!(
                "real expression `{}` where an integer is needed",
                adomp_core::emit_expr(e)
            )));
        }
        let b = |x: &Expr| self.int(x).map(Box::new);
        Ok(match e {
            Expr::Int(v) => IExpr::Const(*v),
            Expr::Var(n) => IExpr::Var(self.slot(n)?),
            Expr::Unary(UnOp::Neg, a) => IExpr::Neg(b(a)?),
            Expr::Unary(UnOp::Not, a) => IExpr::Not(b(a)?),
            Expr::Binary(BinOp::And, x, y) => IExpr::And(b(x)?, b(y)?),
            Expr::Binary(BinOp::Or, x, y) => IExpr::Or(b(x)?, b(y)?),
            Expr::Binary(op, x, y) => {
                if let Some(a) = arith(*op) {
                    IExpr::Bin(a, b(x)?, b(y)?)
                } else {
                    let c = comparison(*op).expect("comparison");
                    if self.ty(x)? == Ty::Int && self.ty(y)? == Ty::Int {
                        IExpr::CmpI(c, b(x)?, b(y)?)
                    } else {
                        IExpr::CmpR(c, Box::new(self.real(x)?), Box::new(self.real(y)?))
                    }
                }
            }
            other => return Err(err(format!("not an integer expression: {other:?}"))),
        })
    }

    fn target(&self, r: &Ref) -> Result<Target, ExecError> {
        Ok(Target {
            slot: self.slot(&r.name)?,
            index: r.index.as_ref().map(|i| self.int(i)).transpose()?,
        })
    }

    fn is_int_ref(&self, r: &Ref) -> Result<bool, ExecError> {
        Ok(self.ty(&r.to_expr())? == Ty::Int)
    }

    fn block(&mut self, body: &[Stmt]) -> Result<Vec<Op>, ExecError> {
        body.iter().map(|s| self.stmt(s)).collect()
    }

    fn lp(&mut self, lp: &adomp_core::Loop) -> Result<LoopIr, ExecError> {
        Ok(LoopIr {
            counter: self.slot(&lp.counter)?,
            start: self.int(&lp.start)?,
            end: self.int(&lp.end)?,
            stride: self.int(&lp.stride)?,
            body: self.block(&lp.body)?,
        })
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Op, ExecError> {
        let site = self.sites.len();
        self.sites.push(first_line(s));
        let kind = match s {
            Stmt::Assign { lhs, rhs } => {
                if self.is_int_ref(lhs)? {
                    OpKind::AssignI(self.slot(&lhs.name)?, self.int(rhs)?)
                } else {
                    OpKind::AssignR(self.target(lhs)?, self.real(rhs)?)
                }
            }
            Stmt::Increment { lhs, rhs, atomic } => {
                if self.is_int_ref(lhs)? {
                    OpKind::IncI(self.slot(&lhs.name)?, self.int(rhs)?)
                } else {
                    OpKind::IncR {
                        target: self.target(lhs)?,
                        rhs: self.real(rhs)?,
                        atomic: *atomic,
                    }
                }
            }
            Stmt::SeqLoop(lp) => OpKind::Loop(Box::new(self.lp(lp)?)),
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => OpKind::If(
                self.int(cond)?,
                self.block(then_body)?,
                self.block(else_body)?,
            ),
            Stmt::ParallelLoop { lp, clauses } => {
                let ws = WorkshareIr {
                    lp: self.lp(lp)?,
                    schedule: clauses.schedule.unwrap_or(Schedule::Static(None)),
                };
                let mut counters = BTreeSet::new();
                counters.insert(lp.counter.clone());
                loop_counters(&lp.body, &mut counters);
                let private = self.privatized(clauses, &counters)?;
                let inner = Op {
                    kind: OpKind::Workshare(Box::new(ws)),
                    site,
                };
                OpKind::Region(Box::new(RegionIr {
                    private,
                    body: vec![inner],
                }))
            }
            Stmt::ParallelRegion { clauses, body } => {
                let mut counters = BTreeSet::new();
                loop_counters(body, &mut counters);
                OpKind::Region(Box::new(RegionIr {
                    private: self.privatized(clauses, &counters)?,
                    body: self.block(body)?,
                }))
            }
            Stmt::WorkshareLoop { lp, schedule } => OpKind::Workshare(Box::new(WorkshareIr {
                lp: self.lp(lp)?,
                schedule: *schedule,
            })),
            Stmt::Call { func, args } => self.call(*func, args)?,
        };
        Ok(Op { kind, site })
    }

    /// Scopes of a construct: clause entries first, then loop counters that
    /// no clause mentions, which are private.
    fn privatized(
        &self,
        clauses: &adomp_core::ClauseSet,
        counters: &BTreeSet<String>,
    ) -> Result<Vec<(Slot, Scope)>, ExecError> {
        let mut out = Vec::new();
        for (v, s) in clauses.all_scopes() {
            if s.is_privatized() {
                out.push((self.slot(v)?, s));
            }
        }
        for c in counters {
            if clauses.scope_of(c).is_none() {
                out.push((self.slot(c)?, Scope::Private));
            }
        }
        Ok(out)
    }

    fn call(&self, func: RuntimeCall, args: &[Expr]) -> Result<OpKind, ExecError> {
        let as_ref = |e: &Expr| match e {
            Expr::Var(n) => Ok(Ref::scalar(n)),
            Expr::Elem(n, i) => Ok(Ref::elem(n, (**i).clone())),
            other => Err(err(format!(
                "`{}` is not assignable",
                adomp_core::emit_expr(other)
            ))),
        };
        let int_out = |e: &Expr| -> Result<Slot, ExecError> {
            let r = as_ref(e)?;
            if r.index.is_some() || !self.is_int_ref(&r)? {
                return Err(err("integer output must be an integer scalar"));
            }
            self.slot(&r.name)
        };
        Ok(match func {
            RuntimeCall::PushReal8 => OpKind::PushR(self.real(&args[0])?),
            RuntimeCall::PopReal8 => OpKind::PopR(self.target(&as_ref(&args[0])?)?),
            RuntimeCall::PushInteger4 => OpKind::PushI(self.int(&args[0])?),
            RuntimeCall::PopInteger4 => OpKind::PopI(int_out(&args[0])?),
            RuntimeCall::GetStaticSchedule => OpKind::StaticSchedule {
                bounds: [
                    self.int(&args[0])?,
                    self.int(&args[1])?,
                    self.int(&args[2])?,
                ],
                start_out: int_out(&args[3])?,
                end_out: int_out(&args[4])?,
            },
            RuntimeCall::InitDynamicSchedule => OpKind::InitDynamic,
            RuntimeCall::RecordDynamicSchedule => {
                OpKind::RecordDynamic(self.int(&args[0])?, self.int(&args[1])?)
            }
            RuntimeCall::FinalizeDynamicSchedule => OpKind::FinalizeDynamic,
        })
    }
}

fn loop_counters(body: &[Stmt], out: &mut BTreeSet<String>) {
    adomp_core::walk_block(body, &mut |s| {
        if let Stmt::SeqLoop(lp) | Stmt::WorkshareLoop { lp, .. } | Stmt::ParallelLoop { lp, .. } =
            s
        {
            out.insert(lp.counter.clone());
        }
    });
}
