//! Symbolic expression kernel.
//!
//! Expressions are immutable, reference-counted trees over independent
//! variables (`t`, `x`), jet coordinates (`u`, `v`, `u_t`, ..., `v_tt`),
//! parameters, opaque unary functions `f(w)` with formal derivatives, and
//! opaque functions of `(t, x)` used for coefficients that are only known
//! through a differential constraint.
//!
//! Construction goes through normalizing constructors that fold constants,
//! flatten sums and products, merge like terms and like bases, and order
//! operands canonically. The normal form is deliberately weak: deciding
//! whether an expression vanishes is left to [`collect`] plus numeric
//! sampling. Power rules `(a*b)^c = a^c*b^c` and `(a^b)^c = a^(b*c)` are
//! applied with the understanding that bases are positive reals; negative
//! numeric coefficients block the distribution for non-integer exponents.

mod collect;
mod diff;
mod dual;
mod eval;
mod number;
mod parse;
mod print;
mod subst;

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops;
use std::sync::Arc;

pub use collect::{collect, collect_symbols, expand, CollectError, Collected, Monomial};
pub use diff::{differentiate, promote, total_derivative, Independent, JetError};
pub use dual::Dual;
pub use eval::{
    evaluate, evaluate_dual, Binding, EvalError, ExprFn, FunctionTable, OpaqueFn, Scalar, Tape,
};
pub use number::{Number, Rational};
pub use parse::{parse, ParseError};
pub use subst::{substitute, substitute_fixpoint, SubstError, Substitution};

/// Reserved independent variables.
pub const INDEPENDENT: [&str; 2] = ["t", "x"];

/// The second-order jet space of two fields over `(t, x)`.
pub const JET_COORDINATES: [&str; 12] = [
    "u", "v", "u_t", "v_t", "u_x", "v_x", "u_xx", "v_xx", "u_xt", "v_xt", "u_tt", "v_tt",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymbolKind {
    Independent,
    Jet,
    Parameter,
    OpaqueFunction,
}

/// Classifies an identifier. Kinds follow from the name alone, so a name can
/// never change kind.
pub fn symbol_kind(name: &str) -> SymbolKind {
    if INDEPENDENT.contains(&name) {
        SymbolKind::Independent
    } else if JET_COORDINATES.contains(&name) {
        SymbolKind::Jet
    } else {
        SymbolKind::Parameter
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Tan,
    Tanh,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "tanh" => Func::Tanh,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn eval_f64(self, a: f64) -> f64 {
        match self {
            Func::Exp => a.exp(),
            Func::Ln => a.ln(),
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Tan => a.tan(),
            Func::Tanh => a.tanh(),
            Func::Sqrt => a.sqrt(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Node {
    Num(Number),
    Sym(Arc<str>),
    /// Opaque function of `(t, x)` differentiated `dt` times in `t` and `dx` times in `x`.
    Field { name: Arc<str>, dt: u32, dx: u32 },
    /// Opaque unary function; `order > 0` is a formal derivative `f^(order)(arg)`.
    Apply { name: Arc<str>, order: u32, arg: Expr },
    Func(Func, Expr),
    Pow(Expr, Expr),
    Mul(Vec<Expr>),
    Add(Vec<Expr>),
}

#[derive(Debug)]
struct Inner {
    node: Node,
    hash: u64,
    mask: u64,
    size: usize,
}

/// An immutable symbolic expression.
#[derive(Clone)]
pub struct Expr(Arc<Inner>);

fn name_bit(name: &str) -> u64 {
    let mut h = DefaultHasher::new();
    name.hash(&mut h);
    1u64 << (h.finish() % 64)
}

impl Expr {
    fn raw(node: Node) -> Expr {
        let mut h = DefaultHasher::new();
        let (mask, size) = match &node {
            Node::Num(n) => {
                0u8.hash(&mut h);
                n.hash(&mut h);
                (0, 1)
            }
            Node::Sym(s) => {
                1u8.hash(&mut h);
                s.hash(&mut h);
                (name_bit(s), 1)
            }
            Node::Field { name, dt, dx } => {
                2u8.hash(&mut h);
                name.hash(&mut h);
                dt.hash(&mut h);
                dx.hash(&mut h);
                (name_bit("t") | name_bit("x"), 1)
            }
            Node::Apply { name, order, arg } => {
                3u8.hash(&mut h);
                name.hash(&mut h);
                order.hash(&mut h);
                arg.0.hash.hash(&mut h);
                (arg.0.mask, arg.0.size + 1)
            }
            Node::Func(f, a) => {
                4u8.hash(&mut h);
                f.hash(&mut h);
                a.0.hash.hash(&mut h);
                (a.0.mask, a.0.size + 1)
            }
            Node::Pow(b, e) => {
                5u8.hash(&mut h);
                b.0.hash.hash(&mut h);
                e.0.hash.hash(&mut h);
                (b.0.mask | e.0.mask, b.0.size + e.0.size + 1)
            }
            Node::Mul(fs) | Node::Add(fs) => {
                (if matches!(node, Node::Mul(_)) { 6u8 } else { 7u8 }).hash(&mut h);
                let mut mask = 0;
                let mut size = 1;
                for f in fs {
                    f.0.hash.hash(&mut h);
                    mask |= f.0.mask;
                    size += f.0.size;
                }
                (mask, size)
            }
        };
        Expr(Arc::new(Inner {
            node,
            hash: h.finish(),
            mask,
            size,
        }))
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }

    /// Number of nodes in the tree (shared subtrees counted once per use).
    pub fn size(&self) -> usize {
        self.0.size
    }

    pub fn num(n: Number) -> Expr {
        Expr::raw(Node::Num(n))
    }

    pub fn int(n: i64) -> Expr {
        Expr::num(Number::int(n))
    }

    pub fn rational(n: i64, d: i64) -> Expr {
        Expr::num(Number::ratio(n, d))
    }

    pub fn float(x: f64) -> Expr {
        Expr::num(Number::Float(x))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn sym(name: &str) -> Expr {
        Expr::raw(Node::Sym(Arc::from(name)))
    }

    pub fn field(name: &str, dt: u32, dx: u32) -> Expr {
        Expr::raw(Node::Field {
            name: Arc::from(name),
            dt,
            dx,
        })
    }

    pub fn apply(name: &str, order: u32, arg: Expr) -> Expr {
        Expr::raw(Node::Apply {
            name: Arc::from(name),
            order,
            arg,
        })
    }

    pub fn as_number(&self) -> Option<Number> {
        match self.node() {
            Node::Num(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        self.as_number().map(Number::to_f64)
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self.node() {
            Node::Sym(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_number().is_some_and(Number::is_zero)
    }

    pub fn is_one(&self) -> bool {
        self.as_number().is_some_and(Number::is_one)
    }

    pub fn is_number(&self) -> bool {
        matches!(self.node(), Node::Num(_))
    }

    /// Whether the expression may depend on `name`. Fields depend on `t` and `x`.
    pub fn depends_on(&self, name: &str) -> bool {
        if self.0.mask & name_bit(name) == 0 {
            return false;
        }
        match self.node() {
            Node::Num(_) => false,
            Node::Sym(s) => &**s == name,
            Node::Field { .. } => name == "t" || name == "x",
            Node::Apply { arg, .. } => arg.depends_on(name),
            Node::Func(_, a) => a.depends_on(name),
            Node::Pow(b, e) => b.depends_on(name) || e.depends_on(name),
            Node::Mul(fs) | Node::Add(fs) => fs.iter().any(|f| f.depends_on(name)),
        }
    }

    /// True when the expression contains no symbols, fields or opaque functions.
    pub fn is_constant(&self) -> bool {
        match self.node() {
            Node::Num(_) => true,
            Node::Sym(_) | Node::Field { .. } | Node::Apply { .. } => false,
            Node::Func(_, a) => a.is_constant(),
            Node::Pow(b, e) => b.is_constant() && e.is_constant(),
            Node::Mul(fs) | Node::Add(fs) => fs.iter().all(Expr::is_constant),
        }
    }

    /// All symbol names occurring in the expression.
    pub fn symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Node::Sym(s) = e.node() {
                out.insert(s.to_string());
            }
        });
        out
    }

    /// Names of opaque unary functions.
    pub fn functions(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Node::Apply { name, .. } = e.node() {
                out.insert(name.to_string());
            }
        });
        out
    }

    /// Distinct `(name, dt, dx)` field derivatives.
    pub fn fields(&self) -> BTreeSet<(String, u32, u32)> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Node::Field { name, dt, dx } = e.node() {
                out.insert((name.to_string(), *dt, *dx));
            }
        });
        out
    }

    /// Pre-order traversal.
    pub fn visit(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match self.node() {
            Node::Num(_) | Node::Sym(_) | Node::Field { .. } => {}
            Node::Apply { arg, .. } => arg.visit(f),
            Node::Func(_, a) => a.visit(f),
            Node::Pow(b, e) => {
                b.visit(f);
                e.visit(f);
            }
            Node::Mul(fs) | Node::Add(fs) => fs.iter().for_each(|c| c.visit(f)),
        }
    }

    /// Bottom-up rebuild through the normalizing constructors. `rule` sees each
    /// rebuilt node and may replace it.
    pub fn rewrite<E>(&self, rule: &mut dyn FnMut(&Expr) -> Result<Option<Expr>, E>) -> Result<Expr, E> {
        let mut memo: HashMap<Expr, Expr> = HashMap::new();
        self.rewrite_memo(rule, &mut memo)
    }

    fn rewrite_memo<E>(
        &self,
        rule: &mut dyn FnMut(&Expr) -> Result<Option<Expr>, E>,
        memo: &mut HashMap<Expr, Expr>,
    ) -> Result<Expr, E> {
        if let Some(done) = memo.get(self) {
            return Ok(done.clone());
        }
        let rebuilt = match self.node() {
            Node::Num(_) | Node::Sym(_) | Node::Field { .. } => self.clone(),
            Node::Apply { name, order, arg } => {
                let a = arg.rewrite_memo(rule, memo)?;
                if a.ptr_eq(arg) {
                    self.clone()
                } else {
                    Expr::apply(name, *order, a)
                }
            }
            Node::Func(f, a) => {
                let na = a.rewrite_memo(rule, memo)?;
                if na.ptr_eq(a) {
                    self.clone()
                } else {
                    Expr::func(*f, na)
                }
            }
            Node::Pow(b, e) => {
                let nb = b.rewrite_memo(rule, memo)?;
                let ne = e.rewrite_memo(rule, memo)?;
                if nb.ptr_eq(b) && ne.ptr_eq(e) {
                    self.clone()
                } else {
                    Expr::pow(&nb, &ne)
                }
            }
            Node::Mul(fs) | Node::Add(fs) => {
                let mut changed = false;
                let mut out = Vec::with_capacity(fs.len());
                for f in fs {
                    let nf = f.rewrite_memo(rule, memo)?;
                    changed |= !nf.ptr_eq(f);
                    out.push(nf);
                }
                if !changed {
                    self.clone()
                } else if matches!(self.node(), Node::Mul(_)) {
                    Expr::product(out)
                } else {
                    Expr::sum(out)
                }
            }
        };
        let result = match rule(&rebuilt)? {
            Some(r) => r,
            None => rebuilt,
        };
        memo.insert(self.clone(), result.clone());
        Ok(result)
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    // ---- normalizing constructors -------------------------------------

    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        let mut constant = Number::int(0);
        let mut keys: Vec<Expr> = Vec::new();
        let mut coeffs: HashMap<Expr, Number> = HashMap::new();
        let mut push = |t: &Expr, constant: &mut Number| match t.node() {
            Node::Num(n) => *constant = constant.add(*n),
            _ => {
                let (c, rest) = t.split_coefficient();
                match coeffs.get_mut(&rest) {
                    Some(acc) => *acc = acc.add(c),
                    None => {
                        coeffs.insert(rest.clone(), c);
                        keys.push(rest);
                    }
                }
            }
        };
        for t in terms {
            match t.node() {
                Node::Add(inner) => inner.iter().for_each(|i| push(i, &mut constant)),
                _ => push(&t, &mut constant),
            }
        }
        let mut out: Vec<Expr> = Vec::with_capacity(keys.len() + 1);
        for k in keys {
            let c = coeffs[&k];
            if c.is_zero() {
                continue;
            }
            out.push(Expr::with_coefficient(c, k));
        }
        out.sort();
        if !constant.is_zero() {
            out.insert(0, Expr::num(constant));
        }
        match out.len() {
            0 => Expr::num(if constant.is_float() { Number::Float(0.0) } else { Number::int(0) }),
            1 => out.pop().unwrap(),
            _ => Expr::raw(Node::Add(out)),
        }
    }

    pub fn product<I: IntoIterator<Item = Expr>>(factors: I) -> Expr {
        let mut coeff = Number::int(1);
        let mut exp_args: Vec<Expr> = Vec::new();
        let mut keys: Vec<Expr> = Vec::new();
        let mut exps: HashMap<Expr, Vec<Expr>> = HashMap::new();
        let mut flat: Vec<Expr> = Vec::new();
        for f in factors {
            match f.node() {
                Node::Mul(inner) => flat.extend(inner.iter().cloned()),
                _ => flat.push(f),
            }
        }
        for f in flat {
            let (base, e) = match f.node() {
                Node::Num(n) => {
                    coeff = coeff.mul(*n);
                    continue;
                }
                Node::Func(Func::Exp, a) => {
                    exp_args.push(a.clone());
                    continue;
                }
                Node::Pow(b, e) => (b.clone(), e.clone()),
                _ => (f.clone(), Expr::one()),
            };
            match exps.get_mut(&base) {
                Some(v) => v.push(e),
                None => {
                    exps.insert(base.clone(), vec![e]);
                    keys.push(base);
                }
            }
        }
        if coeff.is_zero() {
            return Expr::num(coeff);
        }
        let mut out: Vec<Expr> = Vec::with_capacity(keys.len() + 1);
        let absorb = |p: Expr, coeff: &mut Number, out: &mut Vec<Expr>| match p.node() {
            Node::Num(n) => *coeff = coeff.mul(*n),
            Node::Mul(inner) => {
                for i in inner {
                    match i.node() {
                        Node::Num(n) => *coeff = coeff.mul(*n),
                        _ => out.push(i.clone()),
                    }
                }
            }
            _ => out.push(p),
        };
        for base in keys {
            let es = exps.remove(&base).unwrap();
            let e = if es.len() == 1 { es.into_iter().next().unwrap() } else { Expr::sum(es) };
            absorb(Expr::pow(&base, &e), &mut coeff, &mut out);
        }
        if !exp_args.is_empty() {
            let arg = if exp_args.len() == 1 { exp_args.pop().unwrap() } else { Expr::sum(exp_args) };
            absorb(Expr::exp(arg), &mut coeff, &mut out);
        }
        if coeff.is_zero() {
            return Expr::num(coeff);
        }
        // A pow that produced an exp may need merging with others; one more pass suffices.
        let n_exp = out.iter().filter(|f| matches!(f.node(), Node::Func(Func::Exp, _))).count();
        if n_exp > 1 {
            let mut args = Vec::new();
            out.retain(|f| match f.node() {
                Node::Func(Func::Exp, a) => {
                    args.push(a.clone());
                    false
                }
                _ => true,
            });
            absorb(Expr::exp(Expr::sum(args)), &mut coeff, &mut out);
        }
        out.sort();
        if out.is_empty() {
            return Expr::num(coeff);
        }
        if coeff.is_one() && out.len() == 1 {
            return out.pop().unwrap();
        }
        if !coeff.is_one() {
            out.insert(0, Expr::num(coeff));
        }
        Expr::raw(Node::Mul(out))
    }

    pub fn pow(base: &Expr, exponent: &Expr) -> Expr {
        if let Some(e) = exponent.as_number() {
            if e.is_zero() {
                return Expr::one();
            }
            if e.is_one() {
                return base.clone();
            }
        }
        if let Some(b) = base.as_number() {
            if b.is_one() && !b.is_float() {
                return Expr::one();
            }
            if let Some(e) = exponent.as_number() {
                if b.is_zero() && !e.is_negative() {
                    return Expr::num(b);
                }
                if let Some(v) = b.pow(e) {
                    return Expr::num(v);
                }
            }
            return Expr::raw(Node::Pow(base.clone(), exponent.clone()));
        }
        let integer_exponent = exponent.as_number().and_then(Number::as_integer).is_some();
        match base.node() {
            Node::Pow(b, e1) => {
                let blocked = b.as_number().is_some_and(Number::is_negative) && !integer_exponent;
                if !blocked {
                    return Expr::pow(b, &Expr::product([e1.clone(), exponent.clone()]));
                }
            }
            Node::Mul(fs) => {
                let negative = fs[0].as_number().is_some_and(Number::is_negative);
                if integer_exponent || !negative {
                    return Expr::product(fs.iter().map(|f| Expr::pow(f, exponent)));
                }
            }
            Node::Func(Func::Exp, a) => {
                return Expr::exp(Expr::product([a.clone(), exponent.clone()]));
            }
            _ => {}
        }
        Expr::raw(Node::Pow(base.clone(), exponent.clone()))
    }

    pub fn func(f: Func, arg: Expr) -> Expr {
        if let Some(n) = arg.as_number() {
            if n.is_float() {
                let v = f.eval_f64(n.to_f64());
                if v.is_finite() {
                    return Expr::float(v);
                }
            } else {
                let exact = match (f, n.as_integer()) {
                    (Func::Exp, Some(0)) => Some(1),
                    (Func::Ln, Some(1)) => Some(0),
                    (Func::Sin | Func::Tan | Func::Tanh | Func::Sqrt, Some(0)) => Some(0),
                    (Func::Cos, Some(0)) => Some(1),
                    (Func::Sqrt, Some(1)) => Some(1),
                    _ => None,
                };
                if let Some(v) = exact {
                    return Expr::int(v);
                }
            }
        }
        match (f, arg.node()) {
            (Func::Exp, Node::Func(Func::Ln, a)) => return a.clone(),
            (Func::Ln, Node::Func(Func::Exp, a)) => return a.clone(),
            _ => {}
        }
        Expr::raw(Node::Func(f, arg))
    }

    pub fn exp(arg: Expr) -> Expr {
        Expr::func(Func::Exp, arg)
    }
    pub fn ln(arg: Expr) -> Expr {
        Expr::func(Func::Ln, arg)
    }
    pub fn sin(arg: Expr) -> Expr {
        Expr::func(Func::Sin, arg)
    }
    pub fn cos(arg: Expr) -> Expr {
        Expr::func(Func::Cos, arg)
    }
    pub fn tan(arg: Expr) -> Expr {
        Expr::func(Func::Tan, arg)
    }
    pub fn tanh(arg: Expr) -> Expr {
        Expr::func(Func::Tanh, arg)
    }
    pub fn sqrt(arg: Expr) -> Expr {
        Expr::func(Func::Sqrt, arg)
    }

    pub fn powi(&self, n: i64) -> Expr {
        Expr::pow(self, &Expr::int(n))
    }

    pub fn recip(&self) -> Expr {
        self.powi(-1)
    }

    /// Splits a leading numeric coefficient: `3*x*y` gives `(3, x*y)`.
    pub fn split_coefficient(&self) -> (Number, Expr) {
        if let Node::Mul(fs) = self.node() {
            if let Some(n) = fs[0].as_number() {
                let rest = if fs.len() == 2 {
                    fs[1].clone()
                } else {
                    Expr::raw(Node::Mul(fs[1..].to_vec()))
                };
                return (n, rest);
            }
        }
        (Number::int(1), self.clone())
    }

    fn with_coefficient(c: Number, rest: Expr) -> Expr {
        if c.is_one() && !c.is_float() {
            return rest;
        }
        match rest.node() {
            Node::Mul(fs) => {
                let mut v = Vec::with_capacity(fs.len() + 1);
                v.push(Expr::num(c));
                v.extend(fs.iter().cloned());
                Expr::raw(Node::Mul(v))
            }
            _ => Expr::raw(Node::Mul(vec![Expr::num(c), rest])),
        }
    }

    fn rank(&self) -> u8 {
        match self.node() {
            Node::Num(_) => 0,
            Node::Sym(_) => 1,
            Node::Field { .. } => 2,
            Node::Apply { .. } => 3,
            Node::Func(..) => 4,
            Node::Pow(..) => 5,
            Node::Mul(_) => 6,
            Node::Add(_) => 7,
        }
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        if self.0.hash != other.0.hash || self.0.size != other.0.size {
            return false;
        }
        match (self.node(), other.node()) {
            (Node::Num(a), Node::Num(b)) => a == b,
            (Node::Sym(a), Node::Sym(b)) => a == b,
            (
                Node::Field { name: a, dt: at, dx: ax },
                Node::Field { name: b, dt: bt, dx: bx },
            ) => a == b && at == bt && ax == bx,
            (
                Node::Apply { name: a, order: ao, arg: aa },
                Node::Apply { name: b, order: bo, arg: ba },
            ) => a == b && ao == bo && aa == ba,
            (Node::Func(f, a), Node::Func(g, b)) => f == g && a == b,
            (Node::Pow(a, b), Node::Pow(c, d)) => a == c && b == d,
            (Node::Mul(a), Node::Mul(b)) | (Node::Add(a), Node::Add(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash.hash(state);
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.ptr_eq(other) {
            return Ordering::Equal;
        }
        let r = self.rank().cmp(&other.rank());
        if r != Ordering::Equal {
            return r;
        }
        match (self.node(), other.node()) {
            (Node::Num(a), Node::Num(b)) => a.cmp(b),
            (Node::Sym(a), Node::Sym(b)) => a.cmp(b),
            (
                Node::Field { name: a, dt: at, dx: ax },
                Node::Field { name: b, dt: bt, dx: bx },
            ) => a.cmp(b).then(at.cmp(bt)).then(ax.cmp(bx)),
            (
                Node::Apply { name: a, order: ao, arg: aa },
                Node::Apply { name: b, order: bo, arg: ba },
            ) => a.cmp(b).then(ao.cmp(bo)).then_with(|| aa.cmp(ba)),
            (Node::Func(f, a), Node::Func(g, b)) => f.cmp(g).then_with(|| a.cmp(b)),
            (Node::Pow(a, b), Node::Pow(c, d)) => a.cmp(c).then_with(|| b.cmp(d)),
            (Node::Mul(a), Node::Mul(b)) | (Node::Add(a), Node::Add(b)) => {
                // Compare from the most significant (last) operand so that
                // coefficients only break ties.
                for (x, y) in a.iter().rev().zip(b.iter().rev()) {
                    let c = x.cmp(y);
                    if c != Ordering::Equal {
                        return c;
                    }
                }
                a.len().cmp(&b.len())
            }
            _ => unreachable!("ranks are equal"),
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({})", self)
    }
}

impl From<i64> for Expr {
    fn from(n: i64) -> Self {
        Expr::int(n)
    }
}

impl From<f64> for Expr {
    fn from(x: f64) -> Self {
        Expr::float(x)
    }
}

impl From<Number> for Expr {
    fn from(n: Number) -> Self {
        Expr::num(n)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, &rhs)
            }
        }
        impl ops::$trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, rhs)
            }
        }
        impl ops::$trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, &rhs)
            }
        }
        impl ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl ops::$trait<i64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: i64) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, &Expr::int(rhs))
            }
        }
        impl ops::$trait<i64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: i64) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, &Expr::int(rhs))
            }
        }
        impl ops::$trait<Expr> for i64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&Expr::int(self), &rhs)
            }
        }
        impl ops::$trait<&Expr> for i64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&Expr::int(self), rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::sum([a.clone(), b.clone()]));
binop!(Sub, sub, |a, b| Expr::sum([a.clone(), -b]));
binop!(Mul, mul, |a, b| Expr::product([a.clone(), b.clone()]));
binop!(Div, div, |a, b| Expr::product([a.clone(), b.recip()]));

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::product([Expr::int(-1), self.clone()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(n: &str) -> Expr {
        Expr::sym(n)
    }

    #[test]
    fn like_terms_merge_and_cancel() {
        let x = s("x");
        let e = &x + &x * 2 - 3 * &x;
        assert!(e.is_zero());
        let y = s("y");
        assert_eq!(&x * &y + &y * &x, 2 * (&x * &y));
    }

    #[test]
    fn like_bases_merge() {
        let x = s("x");
        assert_eq!(&x * &x, x.powi(2));
        assert!((&x / &x).is_one());
        let k = s("k");
        let e = Expr::pow(&x, &k) * Expr::pow(&x, &(-&k));
        assert!(e.is_one());
    }

    #[test]
    fn exponentials_combine() {
        let t = s("t");
        let a = s("alpha");
        let e = Expr::exp(&a * &t) * Expr::exp(-(&a * &t));
        assert!(e.is_one());
        let p = Expr::pow(&Expr::exp(t.clone()), &Expr::int(3));
        assert_eq!(p, Expr::exp(3 * &t));
    }

    #[test]
    fn power_distributes_over_products() {
        let phi = s("phi");
        let t = s("t");
        let e = Expr::pow(&(&phi * Expr::exp(t.clone())), &(-s("k")));
        assert_eq!(e, Expr::pow(&phi, &(-s("k"))) * Expr::exp(-(s("k") * &t)));
    }

    #[test]
    fn rational_constants_fold_exactly() {
        let e = Expr::int(1) / Expr::int(3) + Expr::rational(2, 3);
        assert!(e.is_one());
        assert_eq!(Expr::int(2).powi(-2), Expr::rational(1, 4));
    }

    #[test]
    fn float_contamination_is_sticky() {
        let e = Expr::int(1) + Expr::float(0.5);
        assert_eq!(e.as_number(), Some(Number::Float(1.5)));
    }

    #[test]
    fn symbol_kinds_follow_names() {
        assert_eq!(symbol_kind("t"), SymbolKind::Independent);
        assert_eq!(symbol_kind("u_xt"), SymbolKind::Jet);
        assert_eq!(symbol_kind("alpha"), SymbolKind::Parameter);
    }

    #[test]
    fn depends_on_sees_fields() {
        let p = Expr::field("p2", 0, 0);
        assert!(p.depends_on("t"));
        assert!(p.depends_on("x"));
        assert!(!p.depends_on("u"));
    }

    #[test]
    fn negative_coefficient_blocks_fractional_distribution() {
        let x = s("x");
        let e = Expr::pow(&(-&x), &Expr::rational(1, 2));
        assert!(matches!(e.node(), Node::Pow(..)));
    }
}
