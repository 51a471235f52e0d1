//! Control-flow graph, scope propagation and access classification.
//!
//! Each parallel construct becomes a region whose header block carries the
//! construct's clauses. After [`propagate_scoping`], every variable reference
//! inside a region is tagged with its effective scope, and
//! [`classify_access`] summarizes how a shared variable is touched by the
//! threads of one region.

use crate::ast::*;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub type BlockId = usize;
pub type RegionId = usize;

#[derive(Clone, Debug, PartialEq)]
pub enum BlockKind {
    Plain,
    LoopHeader {
        counter: Ident,
        start: Expr,
        end: Expr,
        stride: Expr,
        /// Set when the loop is a parallel worksharing loop.
        region: Option<RegionId>,
    },
    /// Entry of a `!$omp parallel` region without its own loop.
    RegionHeader {
        region: RegionId,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub id: BlockId,
    pub kind: BlockKind,
    /// Straight-line statements: assignments, increments and calls.
    pub stmts: Vec<Stmt>,
    /// Condition of a two-way branch ending this block.
    pub branch: Option<Expr>,
    pub succs: Vec<BlockId>,
    /// Innermost parallel region containing this block.
    pub region: Option<RegionId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub id: RegionId,
    pub header: BlockId,
    /// Counter of the worksharing loop; `None` for a bare parallel region.
    pub counter: Option<Ident>,
    pub clauses: ClauseSet,
    pub blocks: Vec<BlockId>,
    /// Variables assigned anywhere in the region, counters included.
    pub assigned: BTreeSet<Ident>,
    /// Every loop counter inside the region.
    pub counters: BTreeSet<Ident>,
}

impl Region {
    /// Display name: `loop:i#0` or `region#1`.
    pub fn label(&self) -> String {
        match &self.counter {
            Some(c) => format!("loop:{c}#{}", self.id),
            None => format!("region#{}", self.id),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Access {
    Read,
    Write,
    Increment { atomic: bool },
}

/// One reference to a variable, tagged with its effective scope.
#[derive(Clone, Debug, PartialEq)]
pub struct RefSite {
    pub block: BlockId,
    /// Position in `Block::stmts`; `None` for branch conditions and loop
    /// headers.
    pub stmt: Option<usize>,
    pub var: Ident,
    pub index: Option<Expr>,
    pub access: Access,
    pub region: Option<RegionId>,
    pub scope: Option<Scope>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cfg {
    pub blocks: Vec<Block>,
    pub entry: BlockId,
    pub regions: Vec<Region>,
    /// Filled by [`propagate_scoping`].
    pub refs: Vec<RefSite>,
}

impl Cfg {
    pub fn preds(&self, b: BlockId) -> Vec<BlockId> {
        self.blocks
            .iter()
            .filter(|x| x.succs.contains(&b))
            .map(|x| x.id)
            .collect()
    }

    pub fn reachable(&self) -> BTreeSet<BlockId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.entry];
        while let Some(b) = stack.pop() {
            if seen.insert(b) {
                stack.extend(self.blocks[b].succs.iter().copied());
            }
        }
        seen
    }
}

pub fn build_cfg(program: &Program) -> Cfg {
    let mut b = Builder {
        blocks: Vec::new(),
        regions: Vec::new(),
        region: None,
    };
    let entry = b.block(BlockKind::Plain);
    b.body(&program.body, entry);
    Cfg {
        blocks: b.blocks,
        entry,
        regions: b.regions,
        refs: Vec::new(),
    }
}

struct Builder {
    blocks: Vec<Block>,
    regions: Vec<Region>,
    region: Option<RegionId>,
}

impl Builder {
    fn block(&mut self, kind: BlockKind) -> BlockId {
        let id = self.blocks.len();
        self.blocks.push(Block {
            id,
            kind,
            stmts: Vec::new(),
            branch: None,
            succs: Vec::new(),
            region: self.region,
        });
        if let Some(r) = self.region {
            self.regions[r].blocks.push(id);
        }
        id
    }

    fn edge(&mut self, from: BlockId, to: BlockId) {
        self.blocks[from].succs.push(to);
    }

    /// Appends `body` starting in block `cur`; returns the block where
    /// control continues afterwards.
    fn body(&mut self, body: &[Stmt], mut cur: BlockId) -> BlockId {
        for s in body {
            cur = self.stmt(s, cur);
        }
        cur
    }

    fn open_region(
        &mut self,
        counter: Option<Ident>,
        clauses: &ClauseSet,
        inner: &[Stmt],
    ) -> RegionId {
        let id = self.regions.len();
        let mut counters: BTreeSet<Ident> = counter.iter().cloned().collect();
        walk_block(inner, &mut |s| {
            if let Stmt::SeqLoop(lp) | Stmt::WorkshareLoop { lp, .. } = s {
                counters.insert(lp.counter.clone());
            }
        });
        let mut assigned = assigned_vars(inner);
        assigned.extend(counters.iter().cloned());
        self.regions.push(Region {
            id,
            header: usize::MAX,
            counter,
            clauses: clauses.clone(),
            blocks: Vec::new(),
            assigned,
            counters,
        });
        id
    }

    fn loop_header(&mut self, lp: &Loop, region: Option<RegionId>) -> BlockId {
        self.block(BlockKind::LoopHeader {
            counter: lp.counter.clone(),
            start: lp.start.clone(),
            end: lp.end.clone(),
            stride: lp.stride.clone(),
            region,
        })
    }

    fn stmt(&mut self, s: &Stmt, cur: BlockId) -> BlockId {
        match s {
            Stmt::Assign { .. } | Stmt::Increment { .. } | Stmt::Call { .. } => {
                self.blocks[cur].stmts.push(s.clone());
                cur
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => {
                self.blocks[cur].branch = Some(cond.clone());
                let then_b = self.block(BlockKind::Plain);
                self.edge(cur, then_b);
                let then_end = self.body(then_body, then_b);
                let else_end = if else_body.is_empty() {
                    None
                } else {
                    let else_b = self.block(BlockKind::Plain);
                    self.edge(cur, else_b);
                    Some(self.body(else_body, else_b))
                };
                let join = self.block(BlockKind::Plain);
                self.edge(then_end, join);
                match else_end {
                    Some(e) => self.edge(e, join),
                    None => self.edge(cur, join),
                }
                join
            }
            Stmt::SeqLoop(lp) | Stmt::WorkshareLoop { lp, .. } => {
                let h = self.loop_header(lp, None);
                self.finish_loop(cur, h, &lp.body)
            }
            Stmt::ParallelLoop { lp, clauses } => {
                let r = self.open_region(Some(lp.counter.clone()), clauses, &lp.body);
                let outer = self.region.replace(r);
                let h = self.loop_header(lp, Some(r));
                self.regions[r].header = h;
                self.edge(cur, h);
                let body_b = self.block(BlockKind::Plain);
                self.edge(h, body_b);
                let end = self.body(&lp.body, body_b);
                self.edge(end, h);
                self.region = outer;
                let after = self.block(BlockKind::Plain);
                self.edge(h, after);
                after
            }
            Stmt::ParallelRegion { clauses, body } => {
                let r = self.open_region(None, clauses, body);
                let outer = self.region.replace(r);
                let h = self.block(BlockKind::RegionHeader { region: r });
                self.regions[r].header = h;
                self.edge(cur, h);
                let body_b = self.block(BlockKind::Plain);
                self.edge(h, body_b);
                let end = self.body(body, body_b);
                self.region = outer;
                let after = self.block(BlockKind::Plain);
                self.edge(end, after);
                after
            }
        }
    }

    fn finish_loop(&mut self, cur: BlockId, h: BlockId, body: &[Stmt]) -> BlockId {
        self.edge(cur, h);
        let body_b = self.block(BlockKind::Plain);
        self.edge(h, body_b);
        let end = self.body(body, body_b);
        self.edge(end, h);
        let after = self.block(BlockKind::Plain);
        self.edge(h, after);
        after
    }
}

/// Tags every variable reference with its effective scope in the innermost
/// enclosing region (`None` outside parallel code).
pub fn propagate_scoping(mut cfg: Cfg) -> Cfg {
    let mut refs = Vec::new();
    for blk in &cfg.blocks {
        let region = blk.region;
        let scope_of =
            |v: &str| region.map(|r| cfg.regions[r].clauses.scope_of(v).unwrap_or(Scope::Shared));
        let mut add = |stmt: Option<usize>, var: &str, index: Option<Expr>, access: Access| {
            refs.push(RefSite {
                block: blk.id,
                stmt,
                var: var.to_string(),
                index,
                access,
                region,
                scope: scope_of(var),
            });
        };
        let reads =
            |stmt: Option<usize>,
             e: &Expr,
             add: &mut dyn FnMut(Option<usize>, &str, Option<Expr>, Access)| {
                for r in e.refs() {
                    add(stmt, &r.name, r.index, Access::Read);
                }
            };
        if let BlockKind::LoopHeader {
            counter,
            start,
            end,
            stride,
            ..
        } = &blk.kind
        {
            for e in [start, end, stride] {
                reads(None, e, &mut add);
            }
            add(None, counter, None, Access::Write);
        }
        for (k, s) in blk.stmts.iter().enumerate() {
            match s {
                Stmt::Assign { lhs, rhs } | Stmt::Increment { lhs, rhs, .. } => {
                    reads(Some(k), rhs, &mut add);
                    if let Some(i) = &lhs.index {
                        reads(Some(k), i, &mut add);
                    }
                    let access = match s {
                        Stmt::Increment { atomic, .. } => Access::Increment { atomic: *atomic },
                        _ => Access::Write,
                    };
                    add(Some(k), &lhs.name, lhs.index.clone(), access);
                }
                Stmt::Call { func, args } => {
                    for (role, a) in func.signature().iter().zip(args) {
                        match (role, a) {
                            (ArgRole::RealOut | ArgRole::IntOut, Expr::Var(n)) => {
                                add(Some(k), n, None, Access::Write)
                            }
                            (ArgRole::RealOut | ArgRole::IntOut, Expr::Elem(n, i)) => {
                                reads(Some(k), i, &mut add);
                                add(Some(k), n, Some((**i).clone()), Access::Write)
                            }
                            _ => reads(Some(k), a, &mut add),
                        }
                    }
                }
                _ => unreachable!("structured statements never sit inside a block"),
            }
        }
        if let Some(c) = &blk.branch {
            reads(None, c, &mut add);
        }
    }
    cfg.refs = refs;
    cfg
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AccessPattern {
    NotAccessed,
    ExclusiveSingleThread,
    ReadOnly,
    AtomicIncrementOnly,
    MixedUnprovable,
}

impl AccessPattern {
    pub fn name(self) -> &'static str {
        match self {
            AccessPattern::NotAccessed => "not_accessed",
            AccessPattern::ExclusiveSingleThread => "exclusive_single_thread",
            AccessPattern::ReadOnly => "read_only",
            AccessPattern::AtomicIncrementOnly => "atomic_increment_only",
            AccessPattern::MixedUnprovable => "mixed_unprovable",
        }
    }
}

impl fmt::Display for AccessPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccessSummary {
    pub region: RegionId,
    pub var: Ident,
    pub pattern: AccessPattern,
    pub justification: String,
}

/// Integer affine form `constant + Σ coef·var`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct LinearForm {
    pub terms: BTreeMap<Ident, i64>,
    pub constant: i64,
}

impl LinearForm {
    pub fn coef(&self, v: &str) -> i64 {
        self.terms.get(v).copied().unwrap_or(0)
    }

    fn scaled(mut self, k: i64) -> Option<Self> {
        self.constant = self.constant.checked_mul(k)?;
        for c in self.terms.values_mut() {
            *c = c.checked_mul(k)?;
        }
        self.terms.retain(|_, c| *c != 0);
        Some(self)
    }

    fn plus(mut self, other: LinearForm, sign: i64) -> Option<Self> {
        self.constant = self
            .constant
            .checked_add(other.constant.checked_mul(sign)?)?;
        for (v, c) in other.terms {
            let e = self.terms.entry(v).or_insert(0);
            *e = e.checked_add(c.checked_mul(sign)?)?;
        }
        self.terms.retain(|_, c| *c != 0);
        Some(self)
    }
}

/// Normalizes an integer index expression; `None` when it is not affine with
/// constant coefficients.
pub fn linearize(e: &Expr) -> Option<LinearForm> {
    match e {
        Expr::Int(v) => Some(LinearForm {
            terms: BTreeMap::new(),
            constant: *v,
        }),
        Expr::Var(n) => Some(LinearForm {
            terms: BTreeMap::from([(n.clone(), 1)]),
            constant: 0,
        }),
        Expr::Unary(UnOp::Neg, a) => linearize(a)?.scaled(-1),
        Expr::Binary(BinOp::Add, a, b) => linearize(a)?.plus(linearize(b)?, 1),
        Expr::Binary(BinOp::Sub, a, b) => linearize(a)?.plus(linearize(b)?, -1),
        Expr::Binary(BinOp::Mul, a, b) => {
            let (la, lb) = (linearize(a)?, linearize(b)?);
            if la.terms.is_empty() {
                lb.scaled(la.constant)
            } else if lb.terms.is_empty() {
                la.scaled(lb.constant)
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Classifies how the threads of `region` touch `var`.
///
/// Checks run in priority order: atomic increments only, then a single
/// index form injective in the loop counter, then reads only; anything else
/// is `mixed_unprovable`.
pub fn classify_access(cfg: &Cfg, region: RegionId, var: &str) -> AccessSummary {
    let reg = &cfg.regions[region];
    let sites: Vec<&RefSite> = cfg
        .refs
        .iter()
        .filter(|s| s.region == Some(region) && s.var == var)
        .collect();
    let summary = |pattern, justification: String| AccessSummary {
        region,
        var: var.to_string(),
        pattern,
        justification,
    };
    if sites.is_empty() {
        return summary(AccessPattern::NotAccessed, "no references in region".into());
    }
    let count = |f: &dyn Fn(Access) -> bool| sites.iter().filter(|s| f(s.access)).count();
    let n_read = count(&|a| a == Access::Read);
    let n_write = count(&|a| a == Access::Write);
    let n_atomic = count(&|a| a == Access::Increment { atomic: true });
    let n_incr = count(&|a| a == Access::Increment { atomic: false });
    let tally =
        format!("{n_read} read, {n_write} write, {n_incr} increment, {n_atomic} atomic increment");

    if n_atomic == sites.len() {
        return summary(AccessPattern::AtomicIncrementOnly, tally);
    }

    if let Some(counter) = &reg.counter {
        let forms: BTreeSet<Option<LinearForm>> = sites
            .iter()
            .map(|s| s.index.as_ref().and_then(linearize))
            .collect();
        if forms.len() == 1 {
            if let Some(Some(form)) = forms.iter().next() {
                let c1 = form.coef(counter);
                let invariant_rest = form
                    .terms
                    .keys()
                    .all(|v| v == counter || !reg.assigned.contains(v));
                if c1 != 0 && invariant_rest {
                    let idx = sites[0]
                        .index
                        .as_ref()
                        .map(crate::emit::emit_expr)
                        .unwrap_or_default();
                    return summary(
                        AccessPattern::ExclusiveSingleThread,
                        format!(
                            "{tally}; every access at index {idx}, coefficient {c1} on {counter}"
                        ),
                    );
                }
            }
        }
    }

    if n_read == sites.len() {
        let idx: BTreeSet<String> = sites
            .iter()
            .filter_map(|s| s.index.as_ref().map(crate::emit::emit_expr))
            .collect();
        let detail = if idx.is_empty() {
            String::new()
        } else {
            format!(" at {}", idx.into_iter().collect::<Vec<_>>().join(" | "))
        };
        return summary(AccessPattern::ReadOnly, format!("{tally}{detail}"));
    }

    summary(
        AccessPattern::MixedUnprovable,
        format!("{tally}; no single counter-injective index form"),
    )
}

/// Summaries for every shared variable of every region, in region order.
pub fn analyze(program: &Program) -> Vec<AccessSummary> {
    let cfg = propagate_scoping(build_cfg(program));
    let mut out = Vec::new();
    for r in &cfg.regions {
        let vars: Vec<&Ident> = r
            .clauses
            .all_scopes()
            .filter(|(_, s)| *s == Scope::Shared)
            .map(|(v, _)| v)
            .collect();
        for v in vars {
            out.push(classify_access(&cfg, r.id, v));
        }
    }
    out
}

/// TSV rendering of [`analyze`]: region, variable, pattern, justification.
pub fn analysis_tsv(program: &Program) -> String {
    let cfg = propagate_scoping(build_cfg(program));
    let mut out = String::from("region\tvariable\tpattern\tjustification\n");
    for s in analyze(program) {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            cfg.regions[s.region].label(),
            s.var,
            s.pattern,
            s.justification
        ));
    }
    out
}

/// Kind of a node in a statement dependency graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DepKind {
    Read,
    Write,
    Increment,
}

/// Whether two successive accesses to the same location must keep their
/// order. Reads commute with reads and increments with increments; every
/// other pair is a dependency.
pub fn has_dependency(first: DepKind, second: DepKind) -> bool {
    !matches!(
        (first, second),
        (DepKind::Read, DepKind::Read) | (DepKind::Increment, DepKind::Increment)
    )
}
