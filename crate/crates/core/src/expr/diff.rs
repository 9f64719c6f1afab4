//! Partial and total derivatives on the second-order jet space.

use thiserror::Error;

use super::{Expr, Func, Node};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Independent {
    T,
    X,
}

impl Independent {
    pub fn name(self) -> &'static str {
        match self {
            Independent::T => "t",
            Independent::X => "x",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JetError {
    #[error("total derivative of `{coordinate}` in {wrt} leaves the second-order jet space")]
    OrderOverflow { coordinate: String, wrt: &'static str },
}

/// Jet promotion table: the coordinate produced by `D_wrt` acting on `coord`.
/// `None` for coordinates whose derivative is third order.
pub fn promote(coord: &str, wrt: Independent) -> Option<&'static str> {
    use Independent::*;
    Some(match (coord, wrt) {
        ("u", T) => "u_t",
        ("v", T) => "v_t",
        ("u", X) => "u_x",
        ("v", X) => "v_x",
        ("u_x", T) | ("u_t", X) => "u_xt",
        ("v_x", T) | ("v_t", X) => "v_xt",
        ("u_t", T) => "u_tt",
        ("v_t", T) => "v_tt",
        ("u_x", X) => "u_xx",
        ("v_x", X) => "v_xx",
        _ => return None,
    })
}

/// Partial derivative with respect to a symbol, all other symbols held fixed.
/// Opaque applications differentiate by the chain rule into formal derivatives.
/// Fields only respond to `t` and `x`.
pub fn differentiate(e: &Expr, s: &str) -> Expr {
    if !e.depends_on(s) {
        return Expr::zero();
    }
    match e.node() {
        Node::Num(_) => Expr::zero(),
        Node::Sym(n) => {
            if &**n == s {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Field { name, dt, dx } => match s {
            "t" => Expr::field(name, dt + 1, *dx),
            "x" => Expr::field(name, *dt, dx + 1),
            _ => Expr::zero(),
        },
        Node::Apply { name, order, arg } => {
            Expr::apply(name, order + 1, arg.clone()) * differentiate(arg, s)
        }
        Node::Func(f, a) => {
            let da = differentiate(a, s);
            let outer = match f {
                Func::Exp => e.clone(),
                Func::Ln => a.recip(),
                Func::Sin => Expr::cos(a.clone()),
                Func::Cos => -Expr::sin(a.clone()),
                Func::Tan => 1 + e.powi(2),
                Func::Tanh => 1 - e.powi(2),
                Func::Sqrt => Expr::rational(1, 2) * e.recip(),
            };
            outer * da
        }
        Node::Pow(b, ex) => {
            let db = differentiate(b, s);
            if !ex.depends_on(s) {
                ex * Expr::pow(b, &(ex - 1)) * db
            } else {
                let dex = differentiate(ex, s);
                if !b.depends_on(s) {
                    e * Expr::ln(b.clone()) * dex
                } else {
                    e * (dex * Expr::ln(b.clone()) + ex * db / b)
                }
            }
        }
        Node::Add(ts) => Expr::sum(ts.iter().map(|t| differentiate(t, s))),
        Node::Mul(fs) => {
            let mut terms = Vec::with_capacity(fs.len());
            for (i, f) in fs.iter().enumerate() {
                let df = differentiate(f, s);
                if df.is_zero() {
                    continue;
                }
                let mut parts: Vec<Expr> = Vec::with_capacity(fs.len());
                parts.extend(fs.iter().take(i).cloned());
                parts.push(df);
                parts.extend(fs.iter().skip(i + 1).cloned());
                terms.push(Expr::product(parts));
            }
            Expr::sum(terms)
        }
    }
}

/// Total derivative `D_t` or `D_x` on the jet space of `t, x, u, v` up to
/// second order.
pub fn total_derivative(e: &Expr, wrt: Independent) -> Result<Expr, JetError> {
    let mut terms = vec![differentiate(e, wrt.name())];
    for coord in super::JET_COORDINATES {
        if !e.depends_on(coord) {
            continue;
        }
        let partial = differentiate(e, coord);
        if partial.is_zero() {
            continue;
        }
        match promote(coord, wrt) {
            Some(next) => terms.push(partial * Expr::sym(next)),
            None => {
                return Err(JetError::OrderOverflow {
                    coordinate: coord.to_string(),
                    wrt: wrt.name(),
                })
            }
        }
    }
    Ok(Expr::sum(terms))
}
