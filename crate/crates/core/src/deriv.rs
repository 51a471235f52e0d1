//! Local derivative rules for expressions.
//!
//! [`tangent`] builds the forward derivative of an expression from the
//! derivatives of its active leaves; [`adjoint_terms`] distributes an
//! adjoint seed back onto those leaves. Both skip subtrees without active
//! references, so no zero terms are generated.

use crate::ast::*;

/// Activity oracle: true for names that carry a derivative.
pub trait Activity {
    fn is_active(&self, name: &str) -> bool;
}

impl<F: Fn(&str) -> bool> Activity for F {
    fn is_active(&self, name: &str) -> bool {
        self(name)
    }
}

pub fn has_active(e: &Expr, act: &dyn Activity) -> bool {
    match e {
        Expr::Real(_) | Expr::Int(_) => false,
        Expr::Var(n) | Expr::Elem(n, _) => act.is_active(n),
        Expr::Unary(_, a) | Expr::Intrinsic(_, a) => has_active(a, act),
        Expr::Binary(_, a, b) => has_active(a, act) || has_active(b, act),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if a.is_one() {
        b
    } else if b.is_one() {
        a
    } else {
        Expr::mul(a, b)
    }
}

/// Forward derivative of `e`; `None` when it is identically zero.
/// `dname` maps a primal name to its tangent name.
pub fn tangent(e: &Expr, act: &dyn Activity, dname: &dyn Fn(&str) -> String) -> Option<Expr> {
    if !has_active(e, act) {
        return None;
    }
    let d = |x: &Expr| tangent(x, act, dname);
    match e {
        Expr::Real(_) | Expr::Int(_) => None,
        Expr::Var(n) => Some(Expr::var(&dname(n))),
        Expr::Elem(n, idx) => Some(Expr::elem(&dname(n), (**idx).clone())),
        Expr::Unary(UnOp::Neg, a) => d(a).map(Expr::neg),
        Expr::Unary(UnOp::Not, _) => None,
        Expr::Binary(op, a, b) => {
            let (da, db) = (d(a), d(b));
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinOp::Add => match (da, db) {
                    (Some(x), Some(y)) => Some(Expr::add(x, y)),
                    (x, y) => x.or(y),
                },
                BinOp::Sub => match (da, db) {
                    (Some(x), Some(y)) => Some(Expr::sub(x, y)),
                    (Some(x), None) => Some(x),
                    (None, y) => y.map(Expr::neg),
                },
                BinOp::Mul => {
                    let l = da.map(|x| mul(x, b));
                    let r = db.map(|y| mul(a, y));
                    match (l, r) {
                        (Some(x), Some(y)) => Some(Expr::add(x, y)),
                        (x, y) => x.or(y),
                    }
                }
                BinOp::Div => {
                    let l = da.map(|x| Expr::div(x, b.clone()));
                    let r = db.map(|y| Expr::div(mul(a, y), Expr::mul(b.clone(), b.clone())));
                    match (l, r) {
                        (Some(x), Some(y)) => Some(Expr::sub(x, y)),
                        (Some(x), None) => Some(x),
                        (None, y) => y.map(Expr::neg),
                    }
                }
                _ => None,
            }
        }
        Expr::Intrinsic(f, a) => {
            let da = d(a)?;
            let a = (**a).clone();
            Some(match f {
                Intrinsic::Sin => mul(da, Expr::call(Intrinsic::Cos, a)),
                Intrinsic::Cos => Expr::neg(mul(da, Expr::call(Intrinsic::Sin, a))),
                Intrinsic::Exp => mul(da, Expr::call(Intrinsic::Exp, a)),
                Intrinsic::Sqrt => Expr::div(
                    da,
                    Expr::mul(Expr::Real(2.0), Expr::call(Intrinsic::Sqrt, a)),
                ),
            })
        }
    }
}

/// Adjoint contributions of `e` for the seed `seed`: one `(leaf, partial·seed)`
/// pair per distinct active reference, in order of first occurrence. Repeated
/// references have their terms summed.
pub fn adjoint_terms(e: &Expr, seed: Expr, act: &dyn Activity) -> Vec<(Ref, Expr)> {
    let mut raw = Vec::new();
    collect(e, seed, act, &mut raw);
    let mut out: Vec<(Ref, Expr)> = Vec::new();
    for (r, t) in raw {
        match out.iter_mut().find(|(q, _)| *q == r) {
            Some((_, acc)) => *acc = Expr::add(acc.clone(), t),
            None => out.push((r, t)),
        }
    }
    out
}

fn collect(e: &Expr, seed: Expr, act: &dyn Activity, out: &mut Vec<(Ref, Expr)>) {
    if !has_active(e, act) {
        return;
    }
    match e {
        Expr::Real(_) | Expr::Int(_) | Expr::Unary(UnOp::Not, _) => {}
        Expr::Var(n) => out.push((Ref::scalar(n), seed)),
        Expr::Elem(n, idx) => out.push((Ref::elem(n, (**idx).clone()), seed)),
        Expr::Unary(UnOp::Neg, a) => collect(a, Expr::neg(seed), act, out),
        Expr::Binary(op, a, b) => {
            let (ea, eb) = ((**a).clone(), (**b).clone());
            match op {
                BinOp::Add => {
                    collect(a, seed.clone(), act, out);
                    collect(b, seed, act, out);
                }
                BinOp::Sub => {
                    collect(a, seed.clone(), act, out);
                    collect(b, Expr::neg(seed), act, out);
                }
                BinOp::Mul => {
                    collect(a, mul(seed.clone(), eb), act, out);
                    collect(b, mul(seed, ea), act, out);
                }
                BinOp::Div => {
                    collect(a, Expr::div(seed.clone(), eb.clone()), act, out);
                    let q = Expr::div(mul(seed, ea), Expr::mul(eb.clone(), eb));
                    collect(b, Expr::neg(q), act, out);
                }
                _ => {}
            }
        }
        Expr::Intrinsic(f, a) => {
            let arg = (**a).clone();
            let s = match f {
                Intrinsic::Sin => mul(seed, Expr::call(Intrinsic::Cos, arg)),
                Intrinsic::Cos => Expr::neg(mul(seed, Expr::call(Intrinsic::Sin, arg))),
                Intrinsic::Exp => mul(seed, Expr::call(Intrinsic::Exp, arg)),
                Intrinsic::Sqrt => Expr::div(
                    seed,
                    Expr::mul(Expr::Real(2.0), Expr::call(Intrinsic::Sqrt, arg)),
                ),
            };
            collect(a, s, act, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emit::emit_expr;
    use crate::parser::parse_expr;

    fn all_but_n(n: &str) -> bool {
        n != "n" && n != "i"
    }

    fn d(src: &str) -> String {
        let e = parse_expr(src).unwrap();
        tangent(&e, &all_but_n, &|n| format!("{n}d"))
            .map(|t| emit_expr(&t))
            .unwrap_or_default()
    }

    fn adj(src: &str) -> Vec<String> {
        let e = parse_expr(src).unwrap();
        adjoint_terms(&e, Expr::var("zb"), &all_but_n)
            .into_iter()
            .map(|(r, t)| {
                let target = r.with_name(&format!("{}b", r.name));
                format!("{} += {}", crate::emit::emit_ref(&target), emit_expr(&t))
            })
            .collect()
    }

    #[test]
    fn product_rule_shapes() {
        assert_eq!(d("x*y"), "xd*y + x*yd");
        assert_eq!(d("x + y"), "xd + yd");
        assert_eq!(d("2.0*x"), "2.0*xd");
        assert_eq!(d("x - y"), "xd - yd");
        assert_eq!(d("n*3"), "");
    }

    #[test]
    fn intrinsic_table() {
        assert_eq!(d("sin(x)"), "xd*cos(x)");
        assert_eq!(d("cos(x)"), "-xd*sin(x)");
        assert_eq!(d("exp(x)"), "xd*exp(x)");
        assert_eq!(d("sqrt(x)"), "xd/(2.0*sqrt(x))");
    }

    #[test]
    fn adjoint_of_product() {
        assert_eq!(adj("x*y"), vec!["xb += zb*y", "yb += zb*x"]);
    }

    #[test]
    fn duplicate_refs_sum() {
        assert_eq!(adj("x*x"), vec!["xb += zb*x + zb*x"]);
    }

    #[test]
    fn array_refs_keep_index() {
        assert_eq!(
            adj("a(i - 1) + a(i)"),
            vec!["ab(i - 1) += zb", "ab(i) += zb"]
        );
    }
}
