//! Numeric evaluation through a compiled instruction tape.
//!
//! A [`Tape`] is compiled once from one or more expressions with common
//! subexpressions shared, then evaluated many times over `f64` or [`Dual`].

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use super::{differentiate, Dual, Expr, Func, Node};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound symbol `{0}`")]
    UnboundSymbol(String),
    #[error("unbound function `{0}`")]
    UnboundFunction(String),
    #[error("unbound field `{0}`")]
    UnboundField(String),
    #[error("value outside the real domain: {0}")]
    DomainError(String),
}

/// A realized unary function: `deriv(n, w)` is the n-th derivative at `w`.
pub trait OpaqueFn: Send + Sync {
    fn deriv(&self, order: u32, w: f64) -> f64;
}

impl<F: Fn(u32, f64) -> f64 + Send + Sync> OpaqueFn for F {
    fn deriv(&self, order: u32, w: f64) -> f64 {
        self(order, w)
    }
}

pub type FunctionTable = HashMap<String, Arc<dyn OpaqueFn>>;

const CACHED_ORDERS: usize = 8;

/// An opaque function realized by a closed-form body in one variable.
pub struct ExprFn {
    var: String,
    body: Expr,
    tapes: Vec<OnceLock<Tape>>,
}

impl ExprFn {
    pub fn new(var: &str, body: Expr) -> Self {
        ExprFn {
            var: var.to_string(),
            body,
            tapes: (0..CACHED_ORDERS).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn body(&self) -> &Expr {
        &self.body
    }

    pub fn var(&self) -> &str {
        &self.var
    }

    fn derivative_expr(&self, order: u32) -> Expr {
        let mut d = self.body.clone();
        for _ in 0..order {
            d = differentiate(&d, &self.var);
        }
        d
    }

    fn eval_tape(&self, tape: &Tape, w: f64) -> f64 {
        let vars: Vec<f64> = tape.symbols().iter().map(|_| w).collect();
        tape.eval(&vars, &[], &[])[0]
    }
}

impl fmt::Debug for ExprFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ExprFn({} -> {})", self.var, self.body)
    }
}

impl OpaqueFn for ExprFn {
    fn deriv(&self, order: u32, w: f64) -> f64 {
        match self.tapes.get(order as usize) {
            Some(cell) => {
                let tape = cell.get_or_init(|| Tape::compile(&[self.derivative_expr(order)]));
                self.eval_tape(tape, w)
            }
            None => self.eval_tape(&Tape::compile(&[self.derivative_expr(order)]), w),
        }
    }
}

/// Arithmetic needed by the tape.
pub trait Scalar:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(x: f64) -> Self;
    fn re(self) -> f64;
    fn func(self, f: Func) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, e: Self) -> Self;
    fn opaque(f: &dyn OpaqueFn, order: u32, w: Self) -> Self;
}

impl Scalar for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn re(self) -> f64 {
        self
    }
    fn func(self, f: Func) -> Self {
        f.eval_f64(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powf(self, e: Self) -> Self {
        f64::powf(self, e)
    }
    fn opaque(f: &dyn OpaqueFn, order: u32, w: Self) -> Self {
        f.deriv(order, w)
    }
}

impl Scalar for Dual {
    fn cst(x: f64) -> Self {
        Dual::constant(x)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn func(self, f: Func) -> Self {
        match f {
            Func::Exp => self.exp(),
            Func::Ln => self.ln(),
            Func::Sin => self.sin(),
            Func::Cos => self.cos(),
            Func::Tan => self.tan(),
            Func::Tanh => self.tanh(),
            Func::Sqrt => self.sqrt(),
        }
    }
    fn powi(self, n: i32) -> Self {
        Dual::powi(self, n)
    }
    fn powf(self, e: Self) -> Self {
        Dual::powf(self, e)
    }
    fn opaque(f: &dyn OpaqueFn, order: u32, w: Self) -> Self {
        let value = f.deriv(order, w.re);
        if w.eps == 0.0 {
            return Dual::constant(value);
        }
        w.chain(value, f.deriv(order + 1, w.re))
    }
}

#[derive(Clone, Debug)]
enum Op {
    Const(f64),
    Var(usize),
    Field(usize),
    Apply { f: usize, order: u32, arg: usize },
    Func(Func, usize),
    PowI(usize, i32),
    PowF(usize, usize),
    Add(Vec<usize>),
    Mul(Vec<usize>),
}

/// Compiled evaluation program for a list of expressions.
#[derive(Clone, Debug)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<usize>,
    symbols: Vec<String>,
    fields: Vec<(String, u32, u32)>,
    functions: Vec<String>,
}

struct Compiler {
    ops: Vec<Op>,
    memo: HashMap<Expr, usize>,
    symbols: Vec<String>,
    fields: Vec<(String, u32, u32)>,
    functions: Vec<String>,
}

fn slot<T: PartialEq + Clone>(list: &mut Vec<T>, item: T) -> usize {
    match list.iter().position(|x| *x == item) {
        Some(i) => i,
        None => {
            list.push(item);
            list.len() - 1
        }
    }
}

impl Compiler {
    fn push(&mut self, op: Op) -> usize {
        self.ops.push(op);
        self.ops.len() - 1
    }

    fn compile(&mut self, e: &Expr) -> usize {
        if let Some(&r) = self.memo.get(e) {
            return r;
        }
        let op = match e.node() {
            Node::Num(n) => Op::Const(n.to_f64()),
            Node::Sym(s) => Op::Var(slot(&mut self.symbols, s.to_string())),
            Node::Field { name, dt, dx } => Op::Field(slot(&mut self.fields, (name.to_string(), *dt, *dx))),
            Node::Apply { name, order, arg } => {
                let a = self.compile(arg);
                Op::Apply {
                    f: slot(&mut self.functions, name.to_string()),
                    order: *order,
                    arg: a,
                }
            }
            Node::Func(f, a) => {
                let a = self.compile(a);
                Op::Func(*f, a)
            }
            Node::Pow(b, ex) => {
                let b = self.compile(b);
                match ex.as_number().and_then(|n| n.as_integer()) {
                    Some(n) if n.unsigned_abs() <= i32::MAX as u64 => Op::PowI(b, n as i32),
                    _ => {
                        let x = self.compile(ex);
                        Op::PowF(b, x)
                    }
                }
            }
            Node::Add(ts) => Op::Add(ts.iter().map(|t| self.compile(t)).collect()),
            Node::Mul(fs) => Op::Mul(fs.iter().map(|f| self.compile(f)).collect()),
        };
        let r = self.push(op);
        self.memo.insert(e.clone(), r);
        r
    }
}

impl Tape {
    pub fn compile(exprs: &[Expr]) -> Tape {
        let mut c = Compiler {
            ops: Vec::new(),
            memo: HashMap::new(),
            symbols: Vec::new(),
            fields: Vec::new(),
            functions: Vec::new(),
        };
        let outputs = exprs.iter().map(|e| c.compile(e)).collect();
        Tape {
            ops: c.ops,
            outputs,
            symbols: c.symbols,
            fields: c.fields,
            functions: c.functions,
        }
    }

    /// Symbol names in input-slot order.
    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn fields(&self) -> &[(String, u32, u32)] {
        &self.fields
    }

    pub fn functions(&self) -> &[String] {
        &self.functions
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Evaluates with inputs given in slot order. Non-finite values propagate.
    pub fn eval<S: Scalar>(&self, vars: &[S], fields: &[S], funcs: &[&dyn OpaqueFn]) -> Vec<S> {
        let mut regs: Vec<S> = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let v = match op {
                Op::Const(c) => S::cst(*c),
                Op::Var(i) => vars[*i],
                Op::Field(i) => fields[*i],
                Op::Apply { f, order, arg } => S::opaque(funcs[*f], *order, regs[*arg]),
                Op::Func(f, a) => regs[*a].func(*f),
                Op::PowI(b, n) => regs[*b].powi(*n),
                Op::PowF(b, e) => regs[*b].powf(regs[*e]),
                Op::Add(xs) => {
                    let mut acc = regs[xs[0]];
                    for x in &xs[1..] {
                        acc = acc + regs[*x];
                    }
                    acc
                }
                Op::Mul(xs) => {
                    let mut acc = regs[xs[0]];
                    for x in &xs[1..] {
                        acc = acc * regs[*x];
                    }
                    acc
                }
            };
            regs.push(v);
        }
        self.outputs.iter().map(|&o| regs[o]).collect()
    }

    /// Values together with a magnitude scale: sums add the scales of their
    /// terms, products multiply them, anything else contributes `|value|`.
    /// A result is numerically zero when `|value| <= tol * (1 + scale)`.
    pub fn eval_scaled(&self, vars: &[f64], fields: &[f64], funcs: &[&dyn OpaqueFn]) -> Vec<(f64, f64)> {
        let mut regs: Vec<(f64, f64)> = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let v = match op {
                Op::Const(c) => (*c, c.abs()),
                Op::Var(i) => (vars[*i], vars[*i].abs()),
                Op::Field(i) => (fields[*i], fields[*i].abs()),
                Op::Apply { f, order, arg } => {
                    let y = funcs[*f].deriv(*order, regs[*arg].0);
                    (y, y.abs())
                }
                Op::Func(f, a) => {
                    let y = f.eval_f64(regs[*a].0);
                    (y, y.abs())
                }
                Op::PowI(b, n) => {
                    let y = regs[*b].0.powi(*n);
                    (y, y.abs())
                }
                Op::PowF(b, e) => {
                    let y = regs[*b].0.powf(regs[*e].0);
                    (y, y.abs())
                }
                Op::Add(xs) => xs.iter().fold((0.0, 0.0), |(v, s), x| (v + regs[*x].0, s + regs[*x].1)),
                Op::Mul(xs) => xs.iter().fold((1.0, 1.0), |(v, s), x| (v * regs[*x].0, s * regs[*x].1)),
            };
            regs.push(v);
        }
        self.outputs.iter().map(|&o| regs[o]).collect()
    }

    /// Resolves named inputs from a binding.
    pub fn resolve<'a>(&self, b: &'a Binding) -> Result<ResolvedInputs<'a>, EvalError> {
        let vars = self
            .symbols
            .iter()
            .map(|s| b.values.get(s).copied().ok_or_else(|| EvalError::UnboundSymbol(s.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let fields = self
            .fields
            .iter()
            .map(|k| {
                b.fields
                    .get(k)
                    .copied()
                    .ok_or_else(|| EvalError::UnboundField(field_label(k)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let funcs = self
            .functions
            .iter()
            .map(|f| {
                b.functions
                    .get(f)
                    .map(|a| a.as_ref())
                    .ok_or_else(|| EvalError::UnboundFunction(f.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ResolvedInputs { vars, fields, funcs })
    }
}

fn field_label((n, dt, dx): &(String, u32, u32)) -> String {
    let mut s = n.clone();
    if dt + dx > 0 {
        s.push('_');
        s.extend(std::iter::repeat_n('t', *dt as usize));
        s.extend(std::iter::repeat_n('x', *dx as usize));
    }
    s
}

pub struct ResolvedInputs<'a> {
    pub vars: Vec<f64>,
    pub fields: Vec<f64>,
    pub funcs: Vec<&'a dyn OpaqueFn>,
}

/// Numeric values for symbols and fields plus realizations of opaque functions.
#[derive(Clone, Default)]
pub struct Binding {
    pub values: HashMap<String, f64>,
    pub fields: HashMap<(String, u32, u32), f64>,
    pub functions: FunctionTable,
}

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), value);
    }

    pub fn set_field(&mut self, name: &str, dt: u32, dx: u32, value: f64) {
        self.fields.insert((name.to_string(), dt, dx), value);
    }

    pub fn set_function(&mut self, name: &str, f: Arc<dyn OpaqueFn>) {
        self.functions.insert(name.to_string(), f);
    }

    pub fn with_function(mut self, name: &str, f: Arc<dyn OpaqueFn>) -> Self {
        self.set_function(name, f);
        self
    }
}

impl fmt::Debug for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut funcs: Vec<&String> = self.functions.keys().collect();
        funcs.sort();
        f.debug_struct("Binding")
            .field("values", &self.values)
            .field("fields", &self.fields)
            .field("functions", &funcs)
            .finish()
    }
}

fn finite(x: f64, e: &Expr) -> Result<f64, EvalError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(EvalError::DomainError(format!("{} evaluated to {}", e, x)))
    }
}

/// One-shot evaluation. Fails on unbound names and non-finite results.
pub fn evaluate(e: &Expr, b: &Binding) -> Result<f64, EvalError> {
    let tape = Tape::compile(std::slice::from_ref(e));
    let inputs = tape.resolve(b)?;
    let y = tape.eval(&inputs.vars, &inputs.fields, &inputs.funcs)[0];
    finite(y, e)
}

/// Value and derivative with respect to the symbol `wrt`.
pub fn evaluate_dual(e: &Expr, b: &Binding, wrt: &str) -> Result<Dual, EvalError> {
    let tape = Tape::compile(std::slice::from_ref(e));
    let inputs = tape.resolve(b)?;
    let vars: Vec<Dual> = tape
        .symbols()
        .iter()
        .zip(&inputs.vars)
        .map(|(s, &v)| if s == wrt { Dual::variable(v) } else { Dual::constant(v) })
        .collect();
    let fields: Vec<Dual> = inputs.fields.iter().map(|&v| Dual::constant(v)).collect();
    let y = tape.eval(&vars, &fields, &inputs.funcs)[0];
    finite(y.re, e)?;
    finite(y.eps, e)?;
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn evaluates_elementary_expressions() {
        let b = Binding::new().with("x", 2.0).with("y", 0.5);
        let v = evaluate(&p("x^2*exp(y) - ln(x)/y + sqrt(x)"), &b).unwrap();
        let expected = 4.0 * 0.5f64.exp() - 2.0f64.ln() / 0.5 + 2.0f64.sqrt();
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn unbound_and_domain_errors() {
        assert_eq!(
            evaluate(&p("x + z"), &Binding::new().with("x", 1.0)),
            Err(EvalError::UnboundSymbol("z".into()))
        );
        assert!(matches!(
            evaluate(&p("ln(x)"), &Binding::new().with("x", -1.0)),
            Err(EvalError::DomainError(_))
        ));
        assert!(matches!(
            evaluate(&p("x^(1/2)"), &Binding::new().with("x", -1.0)),
            Err(EvalError::DomainError(_))
        ));
    }

    #[test]
    fn opaque_functions_and_derivatives() {
        let f: Arc<dyn OpaqueFn> = Arc::new(ExprFn::new("w", p("w^3 + sin(w)")));
        let b = Binding::new().with("u", 0.7).with_function("f", f);
        let v = evaluate(&p("f''(u)"), &b).unwrap();
        assert!((v - (6.0 * 0.7 - 0.7f64.sin())).abs() < 1e-12);
        let d = evaluate_dual(&p("f(u^2)"), &b, "u").unwrap();
        let fp = 3.0 * 0.49f64.powi(2) + 0.49f64.cos();
        assert!((d.eps - fp * 1.4).abs() < 1e-12);
    }

    #[test]
    fn shared_subexpressions_compile_once() {
        let a = p("exp(x*y + 1)");
        let tape = Tape::compile(&[&a + 1, &a * 2]);
        let exps = tape.ops.iter().filter(|o| matches!(o, Op::Func(Func::Exp, _))).count();
        assert_eq!(exps, 1);
    }

    #[test]
    fn scaled_evaluation_tracks_cancellation() {
        let e = p("a - b");
        let tape = Tape::compile(&[e]);
        let r = tape.eval_scaled(&[1e8, 1e8], &[], &[]);
        assert_eq!(tape.symbols(), ["a", "b"]);
        assert_eq!(r[0].0, 0.0);
        assert!((r[0].1 - 2e8).abs() < 1.0);
    }

    #[test]
    fn fields_are_bound_by_derivative_order() {
        let mut b = Binding::new();
        b.set_field("p2", 0, 2, 3.0);
        assert_eq!(evaluate(&p("p2_xx(t,x)"), &b).unwrap(), 3.0);
        assert!(matches!(evaluate(&p("p2(t,x)"), &b), Err(EvalError::UnboundField(_))));
    }
}
