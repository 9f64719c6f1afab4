//! Expansion and polynomial collection over a basis of symbols.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use super::{Expr, Node};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CollectError {
    #[error("expression is not polynomial in `{0}`")]
    NotPolynomial(String),
}

/// A product of basis symbols with positive integer exponents, sorted by name.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(pub Vec<(String, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, k)| k).sum()
    }

    pub fn to_expr(&self) -> Expr {
        Expr::product(self.0.iter().map(|(s, k)| Expr::sym(s).powi(*k as i64)))
    }

    fn mul_symbol(&mut self, s: &str, k: u32) {
        match self.0.binary_search_by(|(n, _)| n.as_str().cmp(s)) {
            Ok(i) => self.0[i].1 += k,
            Err(i) => self.0.insert(i, (s.to_string(), k)),
        }
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("1");
        }
        for (i, (s, k)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("*")?;
            }
            if *k == 1 {
                write!(f, "{}", s)?;
            } else {
                write!(f, "{}^{}", s, k)?;
            }
        }
        Ok(())
    }
}

/// Coefficients of an expanded polynomial. Coefficients are free of the basis.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Collected {
    pub terms: BTreeMap<Monomial, Expr>,
}

impl Collected {
    pub fn coefficient(&self, m: &Monomial) -> Expr {
        self.terms.get(m).cloned().unwrap_or_else(Expr::zero)
    }

    /// Coefficient of the constant monomial.
    pub fn remainder(&self) -> Expr {
        self.coefficient(&Monomial::one())
    }

    /// Structural zero: every coefficient folded to zero.
    pub fn is_zero(&self) -> bool {
        self.terms.values().all(Expr::is_zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Monomial, &Expr)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn to_expr(&self) -> Expr {
        Expr::sum(self.terms.iter().map(|(m, c)| c * m.to_expr()))
    }
}

/// Distributes products over sums and positive integer powers of sums,
/// recursively, including inside function arguments and exponents.
pub fn expand(e: &Expr) -> Expr {
    let mut memo = HashMap::new();
    expand_memo(e, &mut memo)
}

const MAX_EXPANDED_POWER: i64 = 12;

fn expand_memo(e: &Expr, memo: &mut HashMap<Expr, Expr>) -> Expr {
    if let Some(r) = memo.get(e) {
        return r.clone();
    }
    let r = match e.node() {
        Node::Num(_) | Node::Sym(_) | Node::Field { .. } => e.clone(),
        Node::Apply { name, order, arg } => Expr::apply(name, *order, expand_memo(arg, memo)),
        Node::Func(f, a) => Expr::func(*f, expand_memo(a, memo)),
        Node::Pow(b, ex) => {
            let b2 = expand_memo(b, memo);
            let e2 = expand_memo(ex, memo);
            match (b2.node(), e2.as_number().and_then(|n| n.as_integer())) {
                (Node::Add(_), Some(n)) if (2..=MAX_EXPANDED_POWER).contains(&n) => {
                    let mut acc = b2.clone();
                    for _ in 1..n {
                        acc = distribute(&acc, &b2);
                    }
                    acc
                }
                _ => Expr::pow(&b2, &e2),
            }
        }
        Node::Add(ts) => Expr::sum(ts.iter().map(|t| expand_memo(t, memo))),
        Node::Mul(fs) => {
            let mut acc = Expr::one();
            for f in fs {
                let f2 = expand_memo(f, memo);
                acc = distribute(&acc, &f2);
            }
            acc
        }
    };
    memo.insert(e.clone(), r.clone());
    r
}

fn terms_of(e: &Expr) -> Vec<Expr> {
    match e.node() {
        Node::Add(ts) => ts.clone(),
        _ => vec![e.clone()],
    }
}

fn distribute(a: &Expr, b: &Expr) -> Expr {
    let ta = terms_of(a);
    let tb = terms_of(b);
    if ta.len() == 1 && tb.len() == 1 {
        return a * b;
    }
    let mut out = Vec::with_capacity(ta.len() * tb.len());
    for x in &ta {
        for y in &tb {
            out.push(x * y);
        }
    }
    Expr::sum(out)
}

/// Expands `e` and collects it as a polynomial in `basis`.
pub fn collect(e: &Expr, basis: &[&str]) -> Result<Collected, CollectError> {
    let expanded = expand(e);
    let mut terms: BTreeMap<Monomial, Vec<Expr>> = BTreeMap::new();
    for term in terms_of(&expanded) {
        let factors = match term.node() {
            Node::Mul(fs) => fs.clone(),
            _ => vec![term.clone()],
        };
        let mut mono = Monomial::one();
        let mut coeff = Vec::new();
        for f in factors {
            let (base, k) = match f.node() {
                Node::Sym(s) if basis.contains(&&**s) => (s.to_string(), 1u32),
                Node::Pow(b, ex) => match (b.as_symbol(), ex.as_number().and_then(|n| n.as_integer())) {
                    (Some(s), Some(k)) if basis.contains(&s) && k > 0 => (s.to_string(), k as u32),
                    _ => {
                        check_free(&f, basis)?;
                        coeff.push(f);
                        continue;
                    }
                },
                _ => {
                    check_free(&f, basis)?;
                    coeff.push(f);
                    continue;
                }
            };
            mono.mul_symbol(&base, k);
        }
        terms.entry(mono).or_default().push(Expr::product(coeff));
    }
    Ok(Collected {
        terms: terms
            .into_iter()
            .map(|(m, cs)| (m, Expr::sum(cs)))
            .filter(|(_, c)| !c.is_zero())
            .collect(),
    })
}

/// Collects over every symbol of `e` accepted by `keep`.
pub fn collect_symbols(e: &Expr, keep: impl Fn(&str) -> bool) -> Result<Collected, CollectError> {
    let names: Vec<String> = e.symbols().into_iter().filter(|s| keep(s)).collect();
    let basis: Vec<&str> = names.iter().map(String::as_str).collect();
    collect(e, &basis)
}

fn check_free(f: &Expr, basis: &[&str]) -> Result<(), CollectError> {
    for b in basis {
        if f.depends_on(b) {
            return Err(CollectError::NotPolynomial(b.to_string()));
        }
    }
    Ok(())
}
