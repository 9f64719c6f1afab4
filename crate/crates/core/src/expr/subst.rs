//! Simultaneous substitution of symbols, field derivatives and opaque functions.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::convert::Infallible;

use thiserror::Error;

use super::{differentiate, Expr, Node};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubstError {
    #[error("cyclic binding through `{0}`")]
    CyclicBinding(String),
}

/// A symbolic binding. Keys are symbols, `(t, x)`-field derivatives, and opaque
/// function names realized as a body in a dummy variable.
#[derive(Clone, Debug, Default)]
pub struct Substitution {
    symbols: BTreeMap<String, Expr>,
    fields: BTreeMap<(String, u32, u32), Expr>,
    functions: BTreeMap<String, (String, Expr)>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, name: &str, value: Expr) -> Self {
        self.symbols.insert(name.to_string(), value);
        self
    }

    pub fn insert(&mut self, name: &str, value: Expr) {
        self.symbols.insert(name.to_string(), value);
    }

    pub fn bind_field(mut self, name: &str, dt: u32, dx: u32, value: Expr) -> Self {
        self.fields.insert((name.to_string(), dt, dx), value);
        self
    }

    /// Realizes opaque `name(w)` as `body` with `var` standing for the argument.
    /// Formal derivatives become derivatives of `body`.
    pub fn bind_function(mut self, name: &str, var: &str, body: Expr) -> Self {
        self.functions.insert(name.to_string(), (var.to_string(), body));
        self
    }

    pub fn insert_function(&mut self, name: &str, var: &str, body: Expr) {
        self.functions.insert(name.to_string(), (var.to_string(), body));
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty() && self.fields.is_empty() && self.functions.is_empty()
    }

    pub fn symbol(&self, name: &str) -> Option<&Expr> {
        self.symbols.get(name)
    }

    fn values(&self) -> impl Iterator<Item = &Expr> {
        self.symbols
            .values()
            .chain(self.fields.values())
            .chain(self.functions.values().map(|(_, b)| b))
    }

    fn check_acyclic(&self) -> Result<(), SubstError> {
        // Nodes are binding keys rendered as strings; an edge k -> k' means the
        // value bound to k mentions k'.
        let key_of_field = |(n, dt, dx): &(String, u32, u32)| format!("{}[{},{}]", n, dt, dx);
        let mut edges: HashMap<String, Vec<String>> = HashMap::new();
        let all_fields: Vec<_> = self.fields.keys().cloned().collect();
        let mentions = |e: &Expr| -> Vec<String> {
            let mut out: Vec<String> = e
                .symbols()
                .into_iter()
                .filter(|s| self.symbols.contains_key(s))
                .collect();
            for f in e.fields() {
                if all_fields.contains(&f) {
                    out.push(key_of_field(&f));
                }
            }
            for f in e.functions() {
                if self.functions.contains_key(&f) {
                    out.push(format!("{}()", f));
                }
            }
            out
        };
        for (k, v) in &self.symbols {
            edges.insert(k.clone(), mentions(v));
        }
        for (k, v) in &self.fields {
            edges.insert(key_of_field(k), mentions(v));
        }
        for (k, (_, body)) in &self.functions {
            edges.insert(format!("{}()", k), mentions(body));
        }
        fn dfs(
            n: &str,
            edges: &HashMap<String, Vec<String>>,
            on_stack: &mut HashSet<String>,
            done: &mut HashSet<String>,
        ) -> Result<(), SubstError> {
            if done.contains(n) {
                return Ok(());
            }
            if !on_stack.insert(n.to_string()) {
                return Err(SubstError::CyclicBinding(n.to_string()));
            }
            for m in edges.get(n).into_iter().flatten() {
                dfs(m, edges, on_stack, done)?;
            }
            on_stack.remove(n);
            done.insert(n.to_string());
            Ok(())
        }
        let mut on_stack = HashSet::new();
        let mut done = HashSet::new();
        let mut keys: Vec<&String> = edges.keys().collect();
        keys.sort();
        for k in keys {
            dfs(k, &edges, &mut on_stack, &mut done)?;
        }
        Ok(())
    }
}

/// Simultaneous substitution: every occurrence is replaced by its binding and
/// the replacements are not substituted again.
pub fn substitute(e: &Expr, b: &Substitution) -> Expr {
    if b.is_empty() {
        return e.clone();
    }
    let mut fn_cache: HashMap<(String, u32), Expr> = HashMap::new();
    let mut rule = |n: &Expr| -> Result<Option<Expr>, Infallible> {
        Ok(match n.node() {
            Node::Sym(s) => b.symbols.get(&**s).cloned(),
            Node::Field { name, dt, dx } => b.fields.get(&(name.to_string(), *dt, *dx)).cloned(),
            Node::Apply { name, order, arg } => match b.functions.get(&**name) {
                Some((var, body)) => {
                    let key = (name.to_string(), *order);
                    let deriv = fn_cache
                        .entry(key)
                        .or_insert_with(|| {
                            let mut d = body.clone();
                            for _ in 0..*order {
                                d = differentiate(&d, var);
                            }
                            d
                        })
                        .clone();
                    Some(substitute(&deriv, &Substitution::new().bind(var, arg.clone())))
                }
                None => None,
            },
            _ => None,
        })
    };
    match e.rewrite(&mut rule) {
        Ok(r) => r,
        Err(never) => match never {},
    }
}

/// Repeats [`substitute`] until nothing changes. Requires an acyclic binding.
pub fn substitute_fixpoint(e: &Expr, b: &Substitution) -> Result<Expr, SubstError> {
    b.check_acyclic()?;
    let bound_symbols: Vec<&String> = b.symbols.keys().collect();
    let mut cur = e.clone();
    let limit = b.symbols.len() + b.fields.len() + b.functions.len() + 1;
    for _ in 0..limit {
        let next = substitute(&cur, b);
        if next == cur {
            return Ok(next);
        }
        cur = next;
    }
    debug_assert!(
        !bound_symbols.iter().any(|s| cur.depends_on(s)) || b.values().count() == 0,
        "acyclic fixpoint did not converge"
    );
    Ok(cur)
}
