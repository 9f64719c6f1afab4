//! Text serialization. The output re-parses to a structurally equal expression.

use std::fmt::{self, Write};

use super::{Expr, Node, Number};

const ADD: u8 = 1;
const MUL: u8 = 2;
const NEG: u8 = 3;
const POW: u8 = 4;
const ATOM: u8 = 5;

fn number_prec(n: Number) -> u8 {
    if n.is_negative() {
        NEG
    } else if n.is_float() || n.as_integer().is_some() {
        ATOM
    } else {
        MUL
    }
}

fn negative_numeric_exponent(e: &Expr) -> Option<Number> {
    match e.node() {
        Node::Pow(b, ex) if !b.is_number() => ex.as_number().filter(|n| n.is_negative()),
        _ => None,
    }
}

fn prec(e: &Expr) -> u8 {
    match e.node() {
        Node::Num(n) => number_prec(*n),
        Node::Add(_) => ADD,
        Node::Mul(_) => MUL,
        Node::Pow(..) if negative_numeric_exponent(e).is_some() => MUL,
        Node::Pow(..) => POW,
        _ => ATOM,
    }
}

fn write_in(e: &Expr, out: &mut String, min: u8) {
    if prec(e) < min {
        out.push('(');
        write_expr(e, out);
        out.push(')');
    } else {
        write_expr(e, out);
    }
}

fn write_number(n: Number, out: &mut String) {
    let _ = write!(out, "{}", n);
}

fn write_product(coeff: Number, factors: &[Expr], out: &mut String) {
    let mut numer: Vec<Expr> = Vec::new();
    let mut denom: Vec<Expr> = Vec::new();
    for f in factors {
        match (f.node(), negative_numeric_exponent(f)) {
            (Node::Pow(b, _), Some(n)) => denom.push(Expr::pow(b, &Expr::num(n.neg()))),
            _ => numer.push(f.clone()),
        }
    }
    let mut c = coeff;
    if c.is_negative() {
        out.push('-');
        c = c.neg();
    }
    let (c_num, c_den) = match c {
        Number::Rational(r) if !r.is_integer() => (Number::int(*r.numer()), Some(*r.denom())),
        _ => (c, None),
    };
    let mut first = true;
    if !(c_num.is_one() && !c_num.is_float()) || numer.is_empty() {
        write_number(c_num, out);
        first = false;
    }
    for f in &numer {
        if !first {
            out.push('*');
        }
        write_in(f, out, NEG);
        first = false;
    }
    let den_count = denom.len() + usize::from(c_den.is_some());
    if den_count == 0 {
        return;
    }
    out.push('/');
    if den_count > 1 {
        out.push('(');
    }
    let mut first = true;
    if let Some(d) = c_den {
        let _ = write!(out, "{}", d);
        first = false;
    }
    for f in &denom {
        if !first {
            out.push('*');
        }
        write_in(f, out, if den_count > 1 { NEG } else { POW });
        first = false;
    }
    if den_count > 1 {
        out.push(')');
    }
}

fn write_expr(e: &Expr, out: &mut String) {
    match e.node() {
        Node::Num(n) => write_number(*n, out),
        Node::Sym(s) => out.push_str(s),
        Node::Field { name, dt, dx } => {
            out.push_str(name);
            if dt + dx > 0 {
                out.push('_');
                (0..*dt).for_each(|_| out.push('t'));
                (0..*dx).for_each(|_| out.push('x'));
            }
            out.push_str("(t,x)");
        }
        Node::Apply { name, order, arg } => {
            out.push_str(name);
            (0..*order).for_each(|_| out.push('\''));
            out.push('(');
            write_expr(arg, out);
            out.push(')');
        }
        Node::Func(f, a) => {
            out.push_str(f.name());
            out.push('(');
            write_expr(a, out);
            out.push(')');
        }
        Node::Pow(b, ex) => {
            if negative_numeric_exponent(e).is_some() {
                write_product(Number::int(1), std::slice::from_ref(e), out);
                return;
            }
            write_in(b, out, ATOM);
            out.push('^');
            write_in(ex, out, ATOM);
        }
        Node::Mul(fs) => match fs[0].as_number() {
            Some(c) => write_product(c, &fs[1..], out),
            None => write_product(Number::int(1), fs, out),
        },
        Node::Add(ts) => {
            for (i, t) in ts.iter().enumerate() {
                let (c, rest) = t.split_coefficient();
                let negative = match t.node() {
                    Node::Num(n) => n.is_negative(),
                    _ => c.is_negative(),
                };
                if i == 0 {
                    write_in(t, out, ADD);
                } else if negative {
                    out.push_str(" - ");
                    match t.node() {
                        Node::Num(n) => write_in(&Expr::num(n.neg()), out, MUL),
                        _ => {
                            let pos = c.neg();
                            let mut s = String::new();
                            match rest.node() {
                                Node::Mul(fs) => write_product(pos, fs, &mut s),
                                _ => write_product(pos, std::slice::from_ref(&rest), &mut s),
                            }
                            out.push_str(&s);
                        }
                    }
                } else {
                    out.push_str(" + ");
                    write_in(t, out, ADD + 1);
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_expr(self, &mut s);
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{parse, Expr};

    fn rt(s: &str) -> String {
        parse(s).unwrap().to_string()
    }

    #[test]
    fn prints_subtraction_and_division() {
        assert_eq!(rt("x - 3*y"), "x - 3*y");
        assert_eq!(rt("x/y^2"), "x/y^2");
        assert_eq!(rt("1/(x*y)"), "1/(x*y)");
        assert_eq!(rt("x/2"), "x/2");
    }

    #[test]
    fn prints_opaque_and_fields() {
        assert_eq!(rt("f''(u^2 - 2*v)"), "f''(u^2 - 2*v)");
        assert_eq!(rt("p2_xx(t,x)"), "p2_xx(t,x)");
    }

    #[test]
    fn parenthesizes_powers() {
        assert_eq!(rt("(x+1)^(1/2)"), "(1 + x)^(1/2)");
        assert_eq!(rt("u^(-k)"), "u^(-k)");
    }

    #[test]
    fn standalone_negative_power() {
        let e = Expr::sym("x").recip();
        assert_eq!(e.to_string(), "1/x");
        assert_eq!(parse(&e.to_string()).unwrap(), e);
    }
}
