//! Infix expression parser.
//!
//! Grammar (lowest to highest precedence): `+ -`, `* /`, unary `-`, `^`
//! (right associative). Integer literals are exact; literals with a decimal
//! point or exponent are floats. `f(w)`, `f'(w)`, `f''(w)` are opaque unary
//! functions and their formal derivatives; `p(t,x)` and `p_tx(t,x)` are an
//! opaque field of `(t, x)` and its partial derivatives.

use thiserror::Error;

use super::{Expr, Func, Number};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse error at byte {pos}: {message}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Int(i64),
    Float(f64),
    Ident(String),
    Prime,
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let (pos, c) = bytes[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let simple = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '\'' => Some(Tok::Prime),
            _ => None,
        };
        if let Some(t) = simple {
            out.push((pos, t));
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let mut float = false;
            while i < bytes.len() && (bytes[i].1.is_ascii_digit() || bytes[i].1 == '.') {
                float |= bytes[i].1 == '.';
                i += 1;
            }
            if i < bytes.len() && (bytes[i].1 == 'e' || bytes[i].1 == 'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j].1 == '+' || bytes[j].1 == '-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].1.is_ascii_digit() {
                    float = true;
                    i = j;
                    while i < bytes.len() && bytes[i].1.is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let end = if i < bytes.len() { bytes[i].0 } else { src.len() };
            let text = &src[pos..end];
            let tok = if float {
                Tok::Float(text.parse().map_err(|_| ParseError {
                    pos,
                    message: format!("bad number `{}`", text),
                })?)
            } else {
                match text.parse::<i64>() {
                    Ok(n) => Tok::Int(n),
                    Err(_) => Tok::Float(text.parse().map_err(|_| ParseError {
                        pos,
                        message: format!("bad number `{}`", text),
                    })?),
                }
            };
            out.push((pos, tok));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut end = src.len();
            while i < bytes.len() && (bytes[i].1.is_alphanumeric() || bytes[i].1 == '_') {
                i += 1;
            }
            if i < bytes.len() {
                end = bytes[i].0;
            }
            out.push((pos, Tok::Ident(src[pos..end].to_string())));
            continue;
        }
        return Err(ParseError {
            pos,
            message: format!("unexpected character `{}`", c),
        });
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    i: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map(|(p, _)| *p).unwrap_or(self.len)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.pos(),
            message: message.into(),
        })
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<(), ParseError> {
        if self.eat(t) {
            Ok(())
        } else {
            self.err(format!("expected {}", what))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat(&Tok::Plus) {
                terms.push(self.term()?);
            } else if self.eat(&Tok::Minus) {
                terms.push(-self.term()?);
            } else {
                return Ok(Expr::sum(terms));
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(&Tok::Star) {
                let r = self.unary()?;
                acc = acc * r;
            } else if self.eat(&Tok::Slash) {
                let r = self.unary()?;
                acc = acc / r;
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&Tok::Minus) {
            return Ok(-self.unary()?);
        }
        if self.eat(&Tok::Plus) {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(&Tok::Caret) {
            let e = self.unary()?;
            return Ok(Expr::pow(&base, &e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return self.err("unexpected end of input");
        };
        match tok {
            Tok::Int(n) => {
                self.i += 1;
                Ok(Expr::num(Number::int(n)))
            }
            Tok::Float(x) => {
                self.i += 1;
                Ok(Expr::float(x))
            }
            Tok::LParen => {
                self.i += 1;
                let e = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let name_pos = self.pos();
                self.i += 1;
                let mut primes = 0u32;
                while self.eat(&Tok::Prime) {
                    primes += 1;
                }
                if !self.eat(&Tok::LParen) {
                    if primes > 0 {
                        return self.err("expected `(` after derivative primes");
                    }
                    return Ok(Expr::sym(&name));
                }
                let mut args = vec![self.expr()?];
                while self.eat(&Tok::Comma) {
                    args.push(self.expr()?);
                }
                self.expect(&Tok::RParen, "`)`")?;
                self.call(name_pos, &name, primes, args)
            }
            _ => self.err("expected an operand"),
        }
    }

    fn call(&self, pos: usize, name: &str, primes: u32, mut args: Vec<Expr>) -> Result<Expr, ParseError> {
        let fail = |message: String| Err(ParseError { pos, message });
        if let Some(f) = Func::from_name(name) {
            if primes > 0 || args.len() != 1 {
                return fail(format!("`{}` takes one argument", name));
            }
            return Ok(Expr::func(f, args.pop().unwrap()));
        }
        match args.len() {
            1 => Ok(Expr::apply(name, primes, args.pop().unwrap())),
            2 => {
                if primes > 0 {
                    return fail("fields use `_t`/`_x` suffixes, not primes".into());
                }
                if args[0].as_symbol() != Some("t") || args[1].as_symbol() != Some("x") {
                    return fail(format!("field `{}` must be applied to `(t,x)`", name));
                }
                let (base, dt, dx) = split_field_suffix(name);
                Ok(Expr::field(base, dt, dx))
            }
            n => fail(format!("`{}` applied to {} arguments", name, n)),
        }
    }
}

/// `p2_txx` gives `("p2", 1, 2)`; names without a `_[tx]+` suffix are underived.
fn split_field_suffix(name: &str) -> (&str, u32, u32) {
    if let Some(idx) = name.rfind('_') {
        let suffix = &name[idx + 1..];
        if idx > 0 && !suffix.is_empty() && suffix.chars().all(|c| c == 't' || c == 'x') {
            let dt = suffix.chars().filter(|&c| c == 't').count() as u32;
            let dx = suffix.len() as u32 - dt;
            return (&name[..idx], dt, dx);
        }
    }
    (name, 0, 0)
}

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        i: 0,
        len: src.len(),
    };
    let e = p.expr()?;
    if p.i != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}
