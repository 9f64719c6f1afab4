//! Exponential particular solutions of `p_xx = d p_t + a p + S(t,x)`.

use crate::expr::{collect, differentiate, expand, substitute, Expr, Func, Node, Substitution};

/// Splits `rhs` into `d`, `a` and the source `S` for a field `name`; `None`
/// unless the coefficients of `name_t` and `name` are constants.
fn split_linear(rhs: &Expr, name: &str) -> Option<(Expr, Expr, Expr)> {
    let sub = Substitution::new()
        .bind_field(name, 0, 0, Expr::sym("__p"))
        .bind_field(name, 1, 0, Expr::sym("__pt"));
    let r = substitute(rhs, &sub);
    if r.fields().iter().any(|(n, _, _)| n == name) {
        return None;
    }
    let c = collect(&r, &["__p", "__pt"]).ok()?;
    let mono = |s: &str| crate::expr::Monomial(vec![(s.to_string(), 1)]);
    for (m, _) in c.iter() {
        if *m != mono("__p") && *m != mono("__pt") && *m != crate::expr::Monomial::one() {
            return None;
        }
    }
    let (dd, a) = (c.coefficient(&mono("__pt")), c.coefficient(&mono("__p")));
    if !dd.is_constant() || !a.is_constant() {
        return None;
    }
    Some((dd, a, c.remainder()))
}

fn numeric(e: &Expr) -> Option<f64> {
    if !e.is_constant() {
        return None;
    }
    crate::expr::evaluate(e, &crate::expr::Binding::new()).ok()
}

/// Writes a term as `c * exp(a x + b t)` with constants `c, a, b`.
fn exponential_term(term: &Expr) -> Option<(f64, f64, f64)> {
    let factors: Vec<Expr> = match term.node() {
        Node::Mul(fs) => fs.clone(),
        _ => vec![term.clone()],
    };
    let mut coeff = Vec::new();
    let mut arg = Vec::new();
    for f in factors {
        match f.node() {
            Node::Func(Func::Exp, a) => arg.push(a.clone()),
            _ => coeff.push(f),
        }
    }
    let c = numeric(&Expr::product(coeff))?;
    let arg = expand(&Expr::sum(arg));
    let ax = differentiate(&arg, "x");
    let bt = differentiate(&arg, "t");
    let (a, b) = (numeric(&ax)?, numeric(&bt)?);
    let rest = numeric(&expand(&(&arg - &ax * Expr::sym("x") - &bt * Expr::sym("t"))))?;
    Some((c * rest.exp(), a, b))
}

/// Particular solution `sum K_i exp(a_i x + b_i t)` when the source is a sum
/// of exponentials of affine arguments. Resonant terms get an extra factor `t`.
pub fn exponential_particular(rhs: &Expr, name: &str) -> Option<Expr> {
    let (dd, a, source) = split_linear(rhs, name)?;
    let (dd, a) = (numeric(&dd)?, numeric(&a)?);
    let source = expand(&source);
    let terms: Vec<Expr> = match source.node() {
        Node::Add(ts) => ts.clone(),
        _ if source.is_zero() => Vec::new(),
        _ => vec![source.clone()],
    };
    let mut out = Vec::new();
    for term in &terms {
        let (c, ax, bt) = exponential_term(term)?;
        let den = ax * ax - dd * bt - a;
        let arg = Expr::float(ax) * Expr::sym("x") + Expr::float(bt) * Expr::sym("t");
        if den.abs() >= 1e-9 {
            out.push(Expr::float(c / den) * Expr::exp(arg));
        } else if dd.abs() >= 1e-9 {
            // Resonant term: K t exp(ax + bt) with d K + c = 0.
            out.push(Expr::float(-c / dd) * Expr::sym("t") * Expr::exp(arg));
        } else {
            return None;
        }
    }
    Some(Expr::sum(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{evaluate, parse, Binding};

    fn residual(p: &Expr, rhs: &Expr, t: f64, x: f64) -> f64 {
        let sub = Substitution::new()
            .bind_field("p2", 0, 0, p.clone())
            .bind_field("p2", 1, 0, differentiate(p, "t"));
        let r = differentiate(&differentiate(p, "x"), "x") - substitute(rhs, &sub);
        evaluate(&r, &Binding::new().with("t", t).with("x", x)).unwrap()
    }

    #[test]
    fn exponential_source() {
        let rhs = parse("2*p2_t(t,x) + 0.5*p2(t,x) - 3*exp(x + 0.5*t) + exp(-2*x)").unwrap();
        let p = exponential_particular(&rhs, "p2").unwrap();
        for (t, x) in [(0.3, 0.1), (1.2, 1.9)] {
            assert!(residual(&p, &rhs, t, x).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_source() {
        let rhs = parse("2*p2_t(t,x) + 0.5*p2(t,x) + 7").unwrap();
        let p = exponential_particular(&rhs, "p2").unwrap();
        assert!(residual(&p, &rhs, 0.5, 0.5).abs() < 1e-12);
    }

    #[test]
    fn resonant_source() {
        let rhs = parse("2*p2_t(t,x) + 0.5*p2(t,x) - 3*exp(x + 0.25*t)").unwrap();
        let p = exponential_particular(&rhs, "p2").unwrap();
        for (t, x) in [(0.3, 0.1), (1.2, 1.9)] {
            assert!(residual(&p, &rhs, t, x).abs() < 1e-12);
        }
    }

    #[test]
    fn nonexponential_source_is_refused() {
        assert!(exponential_particular(&parse("3*p2_t(t,x) + exp(-x^2/t)").unwrap(), "p2").is_none());
    }
}
