//! Recursive-descent parser producing a validated [`Program`].

use crate::ast::*;
use crate::error::{ParseError, SemanticError};
use crate::lexer::{tokenize, Tok, Token};
use crate::validate::validate;
use indexmap::IndexMap;

/// Parses and validates one routine.
///
/// With `omp_enabled = false`, directive lines are plain comments, so every
/// `!$omp parallel do` loop becomes a sequential loop.
pub fn parse(source: &str, omp_enabled: bool) -> Result<Program, ParseError> {
    let tokens = tokenize(source, omp_enabled)?;
    let mut p = Parser {
        toks: tokens,
        pos: 0,
    };
    let mut prog = p.program()?;
    validate(&mut prog)?;
    Ok(prog)
}

/// Parses a single expression (used by tests and command-line hints).
pub fn parse_expr(source: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(source, false)?;
    let mut p = Parser {
        toks: tokens,
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_newlines();
    p.expect(Tok::Eof, "end of expression")?;
    Ok(e)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(ParseError::syntax(t.line, t.col, msg))
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if self.eat(&tok) {
            Ok(())
        } else {
            self.err(format!("expected {what}, found {}", describe(self.peek())))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn is_kw_at(&self, k: usize, kw: &str) -> bool {
        matches!(self.peek_at(k), Tok::Ident(s) if s == kw)
    }

    fn keyword(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{kw}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn skip_newlines(&mut self) {
        while self.eat(&Tok::Newline) {}
    }

    fn end_of_line(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline => {
                self.skip_newlines();
                Ok(())
            }
            Tok::Eof => Ok(()),
            other => {
                let d = describe(other);
                self.err(format!("expected end of line, found {d}"))
            }
        }
    }

    fn program(&mut self) -> PResult<Program> {
        self.skip_newlines();
        self.keyword("subroutine")?;
        let name = self.ident()?;
        self.expect(Tok::LParen, "`(`")?;
        let mut header = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                header.push(self.ident()?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma, "`,` or `)`")?;
            }
        }
        self.end_of_line()?;

        let mut decls: Vec<VarDecl> = Vec::new();
        while self.is_decl_start() {
            decls.extend(self.decl_line()?);
        }

        let body = self.block(&|p| p.is_kw("end") && p.is_kw_at(1, "subroutine"))?;
        self.keyword("end")?;
        self.keyword("subroutine")?;
        if let Tok::Ident(n) = self.peek().clone() {
            if n != name {
                return self.err(format!("`end subroutine {n}` does not match `{name}`"));
            }
            self.bump();
        }
        self.skip_newlines();
        if self.peek() != &Tok::Eof {
            return self.err("only one routine is allowed per file");
        }

        let mut params = Vec::new();
        for h in &header {
            let pos = decls
                .iter()
                .position(|d| &d.name == h)
                .ok_or_else(|| SemanticError::MissingParamDecl(h.clone()))?;
            params.push(decls.remove(pos));
        }
        for d in &decls {
            if d.intent.is_some() {
                return Err(SemanticError::IntentOnLocal(d.name.clone()).into());
            }
        }
        Ok(Program {
            name,
            params,
            locals: decls,
            body,
        })
    }

    fn is_decl_start(&self) -> bool {
        (self.is_kw("real") || self.is_kw("integer"))
            && matches!(self.peek_at(1), Tok::Comma | Tok::DColon)
    }

    fn decl_line(&mut self) -> PResult<Vec<VarDecl>> {
        let is_real = self.is_kw("real");
        self.bump();
        let mut intent = None;
        let mut active = false;
        while self.eat(&Tok::Comma) {
            let attr = self.ident()?;
            match attr.as_str() {
                "intent" => {
                    self.expect(Tok::LParen, "`(`")?;
                    let dir = self.ident()?;
                    intent = Some(match dir.as_str() {
                        "in" => Intent::In,
                        "out" => Intent::Out,
                        "inout" => Intent::InOut,
                        _ => return self.err(format!("unknown intent `{dir}`")),
                    });
                    self.expect(Tok::RParen, "`)`")?;
                }
                "active" => active = true,
                _ => return self.err(format!("unknown attribute `{attr}`")),
            }
        }
        self.expect(Tok::DColon, "`::`")?;
        let mut out = Vec::new();
        loop {
            let name = self.ident()?;
            let kind = if self.eat(&Tok::LParen) {
                let extent = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                if !is_real {
                    return self.err("integer arrays are not supported");
                }
                VarKind::RealArray(extent)
            } else if is_real {
                VarKind::Real
            } else {
                VarKind::Int
            };
            let decl = match intent {
                Some(dir) => VarDecl::param(&name, kind, dir, active),
                None => VarDecl::local(&name, kind),
            };
            out.push(decl);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.end_of_line()?;
        Ok(out)
    }

    fn block(&mut self, stop: &dyn Fn(&Parser) -> bool) -> PResult<Vec<Stmt>> {
        let mut body = Vec::new();
        loop {
            self.skip_newlines();
            if stop(self) {
                return Ok(body);
            }
            if self.peek() == &Tok::Eof {
                return self.err("unexpected end of file");
            }
            body.push(self.stmt()?);
        }
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        match self.peek() {
            Tok::Ad => self.ad_directive(),
            Tok::Omp => self.omp_directive(IndexMap::new()),
            Tok::Ident(s) => match s.as_str() {
                "do" if !matches!(self.peek_at(1), Tok::Assign | Tok::PlusAssign | Tok::LParen) => {
                    Ok(Stmt::SeqLoop(self.do_loop()?))
                }
                "if" if self.peek_at(1) == &Tok::LParen && !self.looks_like_assignment() => {
                    self.if_stmt()
                }
                "call" if matches!(self.peek_at(1), Tok::Ident(_)) => self.call_stmt(),
                _ => self.assignment(false),
            },
            other => {
                let d = describe(other);
                self.err(format!("expected statement, found {d}"))
            }
        }
    }

    /// Distinguishes `if (c) then` from an assignment to an array named `if`,
    /// which validation rejects anyway; keeps error messages meaningful.
    fn looks_like_assignment(&self) -> bool {
        let mut depth = 0usize;
        let mut k = 1;
        loop {
            match self.peek_at(k) {
                Tok::LParen => depth += 1,
                Tok::RParen => {
                    depth -= 1;
                    if depth == 0 {
                        return matches!(self.peek_at(k + 1), Tok::Assign | Tok::PlusAssign);
                    }
                }
                Tok::Newline | Tok::Eof => return false,
                _ => {}
            }
            k += 1;
        }
    }

    fn assignment(&mut self, atomic: bool) -> PResult<Stmt> {
        let lhs = self.lvalue()?;
        let stmt = match self.peek() {
            Tok::Assign if !atomic => {
                self.bump();
                Stmt::assign(lhs, self.expr()?)
            }
            Tok::PlusAssign => {
                self.bump();
                Stmt::increment(lhs, self.expr()?, atomic)
            }
            _ if atomic => return self.err("`!$omp atomic` must precede an increment `+=`"),
            other => {
                let d = describe(other);
                return self.err(format!("expected `=` or `+=`, found {d}"));
            }
        };
        self.end_of_line()?;
        Ok(stmt)
    }

    fn lvalue(&mut self) -> PResult<Ref> {
        let name = self.ident()?;
        if self.eat(&Tok::LParen) {
            let idx = self.expr()?;
            self.expect(Tok::RParen, "`)`")?;
            Ok(Ref::elem(&name, idx))
        } else {
            Ok(Ref::scalar(&name))
        }
    }

    fn do_loop(&mut self) -> PResult<Loop> {
        self.keyword("do")?;
        let counter = self.ident()?;
        self.expect(Tok::Assign, "`=`")?;
        let start = self.expr()?;
        self.expect(Tok::Comma, "`,`")?;
        let end = self.expr()?;
        let stride = if self.eat(&Tok::Comma) {
            self.expr()?
        } else {
            Expr::Int(1)
        };
        self.end_of_line()?;
        let body = self.block(&|p| p.is_kw("enddo") || (p.is_kw("end") && p.is_kw_at(1, "do")))?;
        if !self.eat(&Tok::Ident("enddo".into())) {
            self.keyword("end")?;
            self.keyword("do")?;
        }
        self.end_of_line()?;
        self.skip_end_directive(&["do"]);
        Ok(Loop {
            counter,
            start,
            end,
            stride,
            body,
        })
    }

    /// Skips an optional `!$omp end <words>` line, e.g. `!$omp end parallel do`.
    fn skip_end_directive(&mut self, words: &[&str]) {
        if self.peek() != &Tok::Omp || !self.is_kw_at(1, "end") {
            return;
        }
        let matches = words
            .iter()
            .enumerate()
            .all(|(k, w)| self.is_kw_at(2 + k, w));
        let terminated = matches!(self.peek_at(2 + words.len()), Tok::Newline | Tok::Eof);
        if matches && terminated {
            for _ in 0..2 + words.len() {
                self.bump();
            }
            self.skip_newlines();
        }
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        self.keyword("if")?;
        self.expect(Tok::LParen, "`(`")?;
        let cond = self.expr()?;
        self.expect(Tok::RParen, "`)`")?;
        self.keyword("then")?;
        self.end_of_line()?;
        let is_end = |p: &Parser| p.is_kw("endif") || (p.is_kw("end") && p.is_kw_at(1, "if"));
        let then_body = self.block(&|p| p.is_kw("else") || is_end(p))?;
        let else_body = if self.is_kw("else") {
            self.bump();
            self.end_of_line()?;
            self.block(&is_end)?
        } else {
            Vec::new()
        };
        if !self.eat(&Tok::Ident("endif".into())) {
            self.keyword("end")?;
            self.keyword("if")?;
        }
        self.end_of_line()?;
        Ok(Stmt::If {
            cond,
            then_body,
            else_body,
        })
    }

    fn call_stmt(&mut self) -> PResult<Stmt> {
        self.keyword("call")?;
        let name = self.ident()?;
        let Some(func) = RuntimeCall::from_name(&name) else {
            return self.err(format!("unknown routine `{name}`"));
        };
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                args.push(self.expr()?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma, "`,` or `)`")?;
            }
        }
        self.end_of_line()?;
        Ok(Stmt::call(func, args))
    }

    fn ad_directive(&mut self) -> PResult<Stmt> {
        self.bump();
        let what = self.ident()?;
        if what != "omp_adjoint" {
            return self.err(format!("unknown AD directive `{what}`"));
        }
        let mut ov = IndexMap::new();
        while !matches!(self.peek(), Tok::Newline | Tok::Eof) {
            let kind = self.ident()?;
            self.expect(Tok::LParen, "`(`")?;
            let scope = match kind.as_str() {
                "shared" => OverrideScope::Shared,
                "atomic" => OverrideScope::Atomic,
                "reduction" => {
                    self.reduction_op()?;
                    OverrideScope::ReductionSum
                }
                _ => return self.err(format!("unknown adjoint clause `{kind}`")),
            };
            for v in self.name_list()? {
                if ov.insert(v.clone(), scope).is_some() {
                    return Err(SemanticError::DuplicateClause(v).into());
                }
            }
            self.eat(&Tok::Comma);
        }
        self.end_of_line()?;
        if self.peek() != &Tok::Omp || !self.is_kw_at(1, "parallel") || !self.is_kw_at(2, "do") {
            return self.err("`!$ad omp_adjoint` must precede a `!$omp parallel do` loop");
        }
        self.omp_directive(ov)
    }

    fn omp_directive(&mut self, ad_override: IndexMap<Ident, OverrideScope>) -> PResult<Stmt> {
        self.bump();
        let what = self.ident()?;
        match what.as_str() {
            "atomic" => {
                self.end_of_line()?;
                self.assignment(true)
            }
            "parallel" if self.is_kw("do") => {
                self.bump();
                let mut clauses = self.clauses(true)?;
                clauses.ad_override = ad_override;
                self.end_of_line()?;
                if !self.is_kw("do") {
                    return self.err("`!$omp parallel do` must be followed by a do loop");
                }
                let lp = self.do_loop()?;
                self.skip_end_directive(&["parallel", "do"]);
                Ok(Stmt::ParallelLoop { lp, clauses })
            }
            "parallel" => {
                let clauses = self.clauses(false)?;
                self.end_of_line()?;
                let body = self.block(&|p| {
                    p.peek() == &Tok::Omp && p.is_kw_at(1, "end") && p.is_kw_at(2, "parallel")
                })?;
                self.bump();
                self.bump();
                self.bump();
                self.end_of_line()?;
                Ok(Stmt::ParallelRegion { clauses, body })
            }
            "do" => {
                let clauses = self.clauses(true)?;
                if !clauses.scoping.is_empty() {
                    return self.err("scoping clauses belong on the enclosing `!$omp parallel`");
                }
                self.end_of_line()?;
                if !self.is_kw("do") {
                    return self.err("`!$omp do` must be followed by a do loop");
                }
                let lp = self.do_loop()?;
                Ok(Stmt::WorkshareLoop {
                    lp,
                    schedule: clauses.schedule.unwrap_or(Schedule::Static(None)),
                })
            }
            _ => self.err(format!("unsupported directive `{what}`")),
        }
    }

    fn clauses(&mut self, allow_schedule: bool) -> PResult<ClauseSet> {
        let mut cs = ClauseSet::default();
        while !matches!(self.peek(), Tok::Newline | Tok::Eof) {
            let kind = self.ident()?;
            self.expect(Tok::LParen, "`(`")?;
            let scope = match kind.as_str() {
                "shared" => Scope::Shared,
                "private" => Scope::Private,
                "firstprivate" => Scope::FirstPrivate,
                "lastprivate" => Scope::LastPrivate,
                "reduction" => {
                    self.reduction_op()?;
                    Scope::ReductionSum
                }
                "schedule" if allow_schedule => {
                    if cs.schedule.is_some() {
                        return self.err("duplicate schedule clause");
                    }
                    cs.schedule = Some(self.schedule()?);
                    self.eat(&Tok::Comma);
                    continue;
                }
                _ => return self.err(format!("unknown clause `{kind}`")),
            };
            for v in self.name_list()? {
                if cs.scoping.insert(v.clone(), scope).is_some() {
                    return Err(SemanticError::DuplicateClause(v).into());
                }
            }
            self.eat(&Tok::Comma);
        }
        Ok(cs)
    }

    fn reduction_op(&mut self) -> PResult<()> {
        match self.bump() {
            Tok::Plus => {}
            Tok::Star => return Err(SemanticError::UnsupportedReduction("*".into()).into()),
            Tok::Minus => return Err(SemanticError::UnsupportedReduction("-".into()).into()),
            Tok::Ident(op) => return Err(SemanticError::UnsupportedReduction(op).into()),
            other => {
                return self.err(format!(
                    "expected reduction operator, found {}",
                    describe(&other)
                ))
            }
        }
        self.expect(Tok::Colon, "`:`")
    }

    fn schedule(&mut self) -> PResult<Schedule> {
        let kind = self.ident()?;
        let chunk = if self.eat(&Tok::Comma) {
            match self.bump() {
                Tok::Int(k) if k > 0 => Some(k),
                _ => return self.err("chunk size must be a positive integer literal"),
            }
        } else {
            None
        };
        self.expect(Tok::RParen, "`)`")?;
        match kind.as_str() {
            "static" => Ok(Schedule::Static(chunk)),
            "dynamic" => Ok(Schedule::Dynamic(chunk)),
            _ => self.err(format!("unsupported schedule `{kind}`")),
        }
    }

    /// Reads `a, b, c)` up to and including the closing parenthesis.
    fn name_list(&mut self) -> PResult<Vec<String>> {
        let mut names = vec![self.ident()?];
        while self.eat(&Tok::Comma) {
            names.push(self.ident()?);
        }
        self.expect(Tok::RParen, "`)`")?;
        Ok(names)
    }

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.eat(&Tok::Or) {
            lhs = Expr::binary(BinOp::Or, lhs, self.and_expr()?);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while self.eat(&Tok::And) {
            lhs = Expr::binary(BinOp::And, lhs, self.not_expr()?);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Not) {
            return Ok(Expr::not(self.not_expr()?));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add_expr()?;
        if matches!(
            self.peek(),
            Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge | Tok::EqEq | Tok::Ne
        ) {
            return self.err("comparisons do not chain; add parentheses");
        }
        Ok(Expr::binary(op, lhs, rhs))
    }

    /// A leading minus negates the whole first term, as in Fortran:
    /// `-a*b + c` is `(-(a*b)) + c`.
    fn add_expr(&mut self) -> PResult<Expr> {
        let mut lhs = if self.eat(&Tok::Minus) {
            Expr::neg(self.term()?)
        } else {
            self.term()?
        };
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.factor()?);
        }
    }

    fn factor(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::neg(self.factor()?));
        }
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            Tok::Real(v) => {
                self.bump();
                Ok(Expr::Real(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if self.eat(&Tok::LParen) {
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(match Intrinsic::from_name(&name) {
                        Some(f) => Expr::call(f, arg),
                        None => Expr::elem(&name, arg),
                    })
                } else {
                    Ok(Expr::Var(name))
                }
            }
            other => self.err(format!("expected expression, found {}", describe(&other))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Real(v) => format!("`{v:?}`"),
        Tok::Newline => "end of line".into(),
        Tok::Eof => "end of file".into(),
        Tok::Omp => "`!$omp`".into(),
        Tok::Ad => "`!$ad`".into(),
        other => format!("{other:?}"),
    }
}
