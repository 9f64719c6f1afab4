//! Form-preserving point transformations between systems of canonical form.
//!
//! A map sends `(t, x, u, v)` to `(tau, y, w, z)`. Target systems and
//! operators are written back in the symbols `t, x, u, v`.

mod equivalence;
mod local;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Cubic, EngineError, RDSystem, SymmetryOperator};
use crate::expr::{
    differentiate, expand, parse, substitute, Expr, FunctionTable, OpaqueFn, ParseError,
    Substitution, Tape,
};

pub use equivalence::{check_equivalence, EquivalenceReport};
pub use local::LocalPointTransform;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("map does not preserve the form of this system: {equation} depends on (t, x) (deviation {deviation:.3e})")]
    NotFormPreserving { equation: String, deviation: f64 },
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("map is not invertible in closed form: {0}")]
    NotInvertible(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapSet {
    /// `w` built from `u`, `z` from `v`; `lambda = d`.
    I,
    /// `w` built from `v`, `z` from `u`; `lambda = 1/d`.
    II,
}

/// `tau = alpha(t)`, `y = beta(t) x + gamma(t)` and affine field maps
/// `w = f E u + P`, `z = g E_d v + Q` (set I; `u`, `v` exchanged for set II),
/// with `E_k = exp(-k (beta' x^2 + 2 gamma' x) / (4 beta))`.
#[derive(Clone, Debug, PartialEq)]
pub struct FormPreservingMap {
    pub set: MapSet,
    pub alpha: Expr,
    pub beta: Expr,
    pub gamma: Expr,
    pub f: Expr,
    pub g: Expr,
    pub p: Expr,
    pub q: Expr,
}

/// JSON form: `{set, alpha, beta, gamma, f, g, P, Q}` as expression strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub set: MapSet,
    pub alpha: String,
    pub beta: String,
    #[serde(default = "zero_string")]
    pub gamma: String,
    #[serde(default = "one_string")]
    pub f: String,
    #[serde(default = "one_string")]
    pub g: String,
    #[serde(rename = "P", default = "zero_string")]
    pub p: String,
    #[serde(rename = "Q", default = "zero_string")]
    pub q: String,
}

fn zero_string() -> String {
    "0".into()
}

fn one_string() -> String {
    "1".into()
}

impl MapSpec {
    pub fn to_map(&self) -> Result<FormPreservingMap, TransformError> {
        FormPreservingMap::new(
            self.set,
            parse(&self.alpha)?,
            parse(&self.beta)?,
            parse(&self.gamma)?,
            parse(&self.f)?,
            parse(&self.g)?,
            parse(&self.p)?,
            parse(&self.q)?,
        )
    }
}

/// Sampling used to decide form preservation and the map invariants.
#[derive(Clone)]
pub struct MapCheckConfig {
    pub seed: u64,
    /// Random `(w, z)` pairs.
    pub pairs: usize,
    /// `(t, x)` probes per pair.
    pub probes: usize,
    pub tolerance: f64,
    pub t_range: (f64, f64),
    pub x_range: (f64, f64),
    pub u_range: (f64, f64),
    pub v_range: (f64, f64),
    /// Point at which the target reaction terms are frozen.
    pub reference: (f64, f64),
    pub params: BTreeMap<String, f64>,
    pub functions: FunctionTable,
}

impl Default for MapCheckConfig {
    fn default() -> Self {
        MapCheckConfig {
            seed: 0,
            pairs: 20,
            probes: 5,
            tolerance: 1e-8,
            t_range: (0.1, 2.0),
            x_range: (0.1, 2.0),
            u_range: (0.2, 3.0),
            v_range: (0.2, 3.0),
            reference: (1.0, 0.5),
            params: BTreeMap::new(),
            functions: FunctionTable::new(),
        }
    }
}

impl std::fmt::Debug for MapCheckConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MapCheckConfig")
            .field("seed", &self.seed)
            .field("pairs", &self.pairs)
            .field("probes", &self.probes)
            .field("tolerance", &self.tolerance)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

const W: &str = "__w";
const Z: &str = "__z";

fn sym(s: &str) -> Expr {
    Expr::sym(s)
}

fn is_identically_zero(e: &Expr) -> bool {
    expand(e).is_zero()
}

fn dt(e: &Expr) -> Expr {
    differentiate(e, "t")
}

fn dx(e: &Expr) -> Expr {
    differentiate(e, "x")
}

/// Numeric inputs for a tape: named values first, then parameters and
/// opaque functions from the config, random otherwise.
struct Inputs {
    params: BTreeMap<String, f64>,
    funcs: BTreeMap<String, Arc<dyn OpaqueFn>>,
}

impl Inputs {
    fn new(tape: &Tape, cfg: &MapCheckConfig, rng: &mut ChaCha8Rng, known: &[&str]) -> Inputs {
        let mut params = BTreeMap::new();
        for s in tape.symbols() {
            if known.contains(&s.as_str()) {
                continue;
            }
            let v = cfg.params.get(s).copied().unwrap_or_else(|| rng.random_range(0.3..1.7));
            params.insert(s.clone(), v);
        }
        let mut funcs = BTreeMap::new();
        for f in tape.functions() {
            let real: Arc<dyn OpaqueFn> = match cfg.functions.get(f) {
                Some(r) => r.clone(),
                None => Arc::new(Cubic([
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ])),
            };
            funcs.insert(f.clone(), real);
        }
        Inputs { params, funcs }
    }

    fn eval(&self, tape: &Tape, named: &[(&str, f64)]) -> Vec<f64> {
        let vars: Vec<f64> = tape
            .symbols()
            .iter()
            .map(|s| {
                named
                    .iter()
                    .find(|(n, _)| *n == s)
                    .map(|(_, v)| *v)
                    .unwrap_or_else(|| self.params[s])
            })
            .collect();
        let funcs: Vec<&dyn OpaqueFn> = tape.functions().iter().map(|f| self.funcs[f].as_ref()).collect();
        tape.eval(&vars, &[], &funcs)
    }
}

impl FormPreservingMap {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        set: MapSet,
        alpha: Expr,
        beta: Expr,
        gamma: Expr,
        f: Expr,
        g: Expr,
        p: Expr,
        q: Expr,
    ) -> Result<Self, TransformError> {
        for (e, name) in [(&alpha, "alpha"), (&beta, "beta"), (&gamma, "gamma"), (&f, "f"), (&g, "g")] {
            if ["x", "u", "v"].iter().any(|s| e.depends_on(s)) {
                return Err(TransformError::InvalidMap(format!("{} must depend on t only", name)));
            }
        }
        for (e, name) in [(&p, "P"), (&q, "Q")] {
            if e.depends_on("u") || e.depends_on("v") {
                return Err(TransformError::InvalidMap(format!("{} must depend on (t, x) only", name)));
            }
        }
        Ok(FormPreservingMap { set, alpha, beta, gamma, f, g, p, q })
    }

    pub fn identity() -> Self {
        FormPreservingMap {
            set: MapSet::I,
            alpha: sym("t"),
            beta: Expr::one(),
            gamma: Expr::zero(),
            f: Expr::one(),
            g: Expr::one(),
            p: Expr::zero(),
            q: Expr::zero(),
        }
    }

    /// `tau = s^2 t`, `y = s x`.
    pub fn scaling(s: Expr) -> Self {
        FormPreservingMap {
            alpha: s.powi(2) * sym("t"),
            beta: s,
            ..Self::identity()
        }
    }

    /// The rescaling that brings a system with diffusivities `d1, d2`,
    /// written first with `x` measured in units of `sqrt(d1)`, to canonical form.
    pub fn rescaling(d1: Expr) -> Self {
        Self::scaling(Expr::sqrt(d1))
    }

    /// `u -> u - beta`: the shift sending `w = u + beta`.
    pub fn shift_u(beta: Expr) -> Self {
        FormPreservingMap { p: beta, ..Self::identity() }
    }

    /// Exchange of `u` and `v` with the time rescaling `tau = t/d`.
    pub fn swap(d: &Expr) -> Self {
        FormPreservingMap {
            set: MapSet::II,
            alpha: sym("t") / d,
            ..Self::identity()
        }
    }

    pub fn spec(&self) -> MapSpec {
        MapSpec {
            set: self.set,
            alpha: self.alpha.to_string(),
            beta: self.beta.to_string(),
            gamma: self.gamma.to_string(),
            f: self.f.to_string(),
            g: self.g.to_string(),
            p: self.p.to_string(),
            q: self.q.to_string(),
        }
    }

    /// Diffusivity ratio of the target system.
    pub fn lambda(&self, d: &Expr) -> Expr {
        match self.set {
            MapSet::I => d.clone(),
            MapSet::II => d.recip(),
        }
    }

    fn exp_factor(&self, k: &Expr) -> Expr {
        let x = sym("x");
        let inner = dt(&self.beta) * x.powi(2) + Expr::int(2) * dt(&self.gamma) * &x;
        Expr::exp(-(k * inner) / (Expr::int(4) * &self.beta))
    }

    /// `(tau, y, w, z)` as expressions in `(t, x, u, v)`.
    pub fn components(&self, d: &Expr) -> [Expr; 4] {
        let tau = self.alpha.clone();
        let y = &self.beta * sym("x") + &self.gamma;
        let (w_k, w_var, z_k, z_var) = match self.set {
            MapSet::I => (Expr::one(), "u", d.clone(), "v"),
            MapSet::II => (d.clone(), "v", Expr::one(), "u"),
        };
        let w = &self.f * self.exp_factor(&w_k) * sym(w_var) + &self.p;
        let z = &self.g * self.exp_factor(&z_k) * sym(z_var) + &self.q;
        [tau, y, w, z]
    }

    /// Inverse field map: `u`, `v` in terms of `(t, x, __w, __z)`.
    fn field_inverse(&self, d: &Expr) -> (Expr, Expr) {
        let [_, _, w, z] = self.components(d);
        let (w_var, z_var) = match self.set {
            MapSet::I => ("u", "v"),
            MapSet::II => ("v", "u"),
        };
        let w_coef = differentiate(&w, w_var);
        let z_coef = differentiate(&z, z_var);
        let from_w = (sym(W) - &self.p) / w_coef;
        let from_z = (sym(Z) - &self.q) / z_coef;
        match self.set {
            MapSet::I => (from_w, from_z),
            MapSet::II => (from_z, from_w),
        }
    }

    /// Checks `alpha beta != 0`, `f g != 0` and the time-scaling relation
    /// `alpha' = lambda beta^2`, symbolically or on a dense `t` grid.
    pub fn validate(&self, d: &Expr, cfg: &MapCheckConfig) -> Result<(), TransformError> {
        let rel = match self.set {
            MapSet::I => dt(&self.alpha) - self.beta.powi(2),
            MapSet::II => dt(&self.alpha) - self.beta.powi(2) / d,
        };
        let exprs = [rel.clone(), self.alpha.clone(), self.beta.clone(), self.f.clone(), self.g.clone()];
        let symbolic_rel = is_identically_zero(&rel);
        let tape = Tape::compile(&exprs);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA11CE);
        let mut params = cfg.clone();
        if let Some(dv) = d.as_f64() {
            params.params.entry("d".into()).or_insert(dv);
        }
        let inputs = Inputs::new(&tape, &params, &mut rng, &["t"]);
        let (lo, hi) = cfg.t_range;
        for i in 0..=200 {
            let t = lo + (hi - lo) * i as f64 / 200.0;
            let v = inputs.eval(&tape, &[("t", t)]);
            if !symbolic_rel && v[0].abs() > 1e-10 * (1.0 + v[2].powi(2)) {
                let what = if self.set == MapSet::I { "alpha' = beta^2" } else { "alpha' = beta^2/d" };
                return Err(TransformError::InvalidMap(format!("{} fails at t = {}", what, t)));
            }
            for (k, name) in [(1, "alpha"), (2, "beta"), (3, "f"), (4, "g")] {
                if !(v[k].abs() > 1e-14) {
                    return Err(TransformError::InvalidMap(format!("{} vanishes at t = {}", name, t)));
                }
            }
        }
        Ok(())
    }

    /// Target reaction terms `F1(t, x, __w, __z)`, `F2` before the
    /// `(t, x)`-independence check.
    pub(crate) fn raw_targets(&self, sys: &RDSystem) -> [Expr; 2] {
        let d = &sys.d;
        let [_, _, w, z] = self.components(d);
        let b2 = self.beta.powi(2);
        // (field, variable it is built from, reaction term, time coefficient)
        let rhs = |phi: &Expr, var: &str, c: &Expr, k: &Expr| -> Expr {
            let phi_var = differentiate(phi, var);
            let phi_x = dx(phi);
            let phi_xvar = differentiate(&phi_x, var);
            &phi_var * c + dx(&phi_x) - k * dt(phi) - Expr::int(2) * &phi_x * phi_xvar / &phi_var
        };
        let (f1, f2) = match self.set {
            MapSet::I => (rhs(&w, "u", &sys.c1, &Expr::one()), rhs(&z, "v", &sys.c2, d)),
            MapSet::II => (rhs(&w, "v", &sys.c2, d), rhs(&z, "u", &sys.c1, &Expr::one())),
        };
        let (u_inv, v_inv) = self.field_inverse(d);
        let back = Substitution::new().bind("u", u_inv).bind("v", v_inv);
        [substitute(&(f1 / &b2), &back), substitute(&(f2 / &b2), &back)]
    }

    /// Largest scaled `(t, x)`-derivative of the candidate reaction terms
    /// over random `(w, z)` pairs and probes.
    fn dependence(&self, sys: &RDSystem, targets: &[Expr; 2], cfg: &MapCheckConfig) -> Result<[f64; 2], TransformError> {
        let [_, _, w, z] = self.components(&sys.d);
        let mut exprs = vec![w, z];
        for f in targets {
            exprs.extend([f.clone(), dt(f), dx(f)]);
        }
        let tape = Tape::compile(&exprs);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_F0E5);
        let mut pcfg = cfg.clone();
        if let Some(dv) = sys.d.as_f64() {
            pcfg.params.entry("d".into()).or_insert(dv);
        }
        let inputs = Inputs::new(&tape, &pcfg, &mut rng, &["t", "x", "u", "v", W, Z]);
        let mut worst = [0.0f64; 2];
        let mut valid = 0usize;
        for _ in 0..cfg.pairs {
            let t0 = rng.random_range(cfg.t_range.0..cfg.t_range.1);
            let x0 = rng.random_range(cfg.x_range.0..cfg.x_range.1);
            let u0 = rng.random_range(cfg.u_range.0..cfg.u_range.1);
            let v0 = rng.random_range(cfg.v_range.0..cfg.v_range.1);
            let base = inputs.eval(&tape, &[("t", t0), ("x", x0), ("u", u0), ("v", v0), (W, 0.0), (Z, 0.0)]);
            let (wv, zv) = (base[0], base[1]);
            if !wv.is_finite() || !zv.is_finite() {
                continue;
            }
            for probe in 0..cfg.probes {
                let (t, x) = if probe == 0 {
                    (t0, x0)
                } else {
                    (
                        rng.random_range(cfg.t_range.0..cfg.t_range.1),
                        rng.random_range(cfg.x_range.0..cfg.x_range.1),
                    )
                };
                let r = inputs.eval(&tape, &[("t", t), ("x", x), ("u", u0), ("v", v0), (W, wv), (Z, zv)]);
                if r[2..].iter().any(|v| !v.is_finite()) {
                    continue;
                }
                valid += 1;
                for k in 0..2 {
                    let (val, a, b) = (r[2 + 3 * k], r[3 + 3 * k], r[4 + 3 * k]);
                    worst[k] = worst[k].max(a.abs().max(b.abs()) / (1.0 + val.abs()));
                }
            }
        }
        if valid == 0 {
            return Err(TransformError::InvalidMap("no admissible sample points".into()));
        }
        Ok(worst)
    }

    /// Applies the map to `sys`. Fails with `NotFormPreserving` when the
    /// transformed reaction terms still depend on `(t, x)`.
    pub fn apply(&self, sys: &RDSystem, cfg: &MapCheckConfig) -> Result<RDSystem, TransformError> {
        self.validate(&sys.d, cfg)?;
        if !self.nondegenerate(&sys.d, cfg) {
            return Err(TransformError::InvalidMap("Jacobian vanishes".into()));
        }
        let targets = self.raw_targets(sys);
        let dev = self.dependence(sys, &targets, cfg)?;
        for (k, name) in [(0, "F1"), (1, "F2")] {
            if !(dev[k] <= cfg.tolerance) {
                return Err(TransformError::NotFormPreserving { equation: name.into(), deviation: dev[k] });
            }
        }
        let (t0, x0) = cfg.reference;
        let freeze = Substitution::new()
            .bind("t", Expr::float(t0))
            .bind("x", Expr::float(x0))
            .bind(W, sym("u"))
            .bind(Z, sym("v"));
        let [f1, f2] = targets.map(|f| {
            let f = substitute(&f, &freeze);
            let e = expand(&f);
            if e.size() <= f.size() {
                e
            } else {
                f
            }
        });
        Ok(RDSystem::new(self.lambda(&sys.d), f1, f2)?)
    }

    /// True iff the Jacobian determinant of `(tau, y, w, z)` with respect to
    /// `(x, t, u, v)` is nonzero on a sample grid.
    pub fn nondegenerate(&self, d: &Expr, cfg: &MapCheckConfig) -> bool {
        let comps = self.components(d);
        let vars = ["x", "t", "u", "v"];
        let mut entries = Vec::with_capacity(16);
        for c in &comps {
            for v in vars {
                entries.push(differentiate(c, v));
            }
        }
        let tape = Tape::compile(&entries);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xDE7);
        let mut pcfg = cfg.clone();
        if let Some(dv) = d.as_f64() {
            pcfg.params.entry("d".into()).or_insert(dv);
        }
        let inputs = Inputs::new(&tape, &pcfg, &mut rng, &vars);
        for i in 0..5 {
            for j in 0..5 {
                let t = cfg.t_range.0 + (cfg.t_range.1 - cfg.t_range.0) * i as f64 / 4.0;
                let x = cfg.x_range.0 + (cfg.x_range.1 - cfg.x_range.0) * j as f64 / 4.0;
                let m = inputs.eval(&tape, &[("x", x), ("t", t), ("u", 1.0), ("v", 1.0)]);
                let det = det4(&m);
                if !(det.abs() > 1e-12) {
                    return false;
                }
            }
        }
        true
    }

    fn affine_time(&self) -> Result<(Expr, Expr), TransformError> {
        let rate = dt(&self.alpha);
        if rate.depends_on("t") && !is_identically_zero(&dt(&rate)) {
            return Err(TransformError::NotInvertible("alpha is not affine in t".into()));
        }
        let rate = if rate.depends_on("t") { expand(&rate) } else { rate };
        let offset = substitute(&self.alpha, &Substitution::new().bind("t", Expr::zero()));
        Ok((rate, offset))
    }

    /// Old coordinates in terms of the new ones, all written in `t, x, u, v`.
    /// Requires `alpha` affine in `t`.
    pub fn inverse_point_map(&self, d: &Expr) -> Result<[Expr; 4], TransformError> {
        let (rate, offset) = self.affine_time()?;
        let t_old = (sym("t") - offset) / rate;
        let at_t = Substitution::new().bind("t", t_old.clone());
        let x_old = (sym("x") - substitute(&self.gamma, &at_t)) / substitute(&self.beta, &at_t);
        let (u_inv, v_inv) = self.field_inverse(d);
        let sub = Substitution::new()
            .bind("t", t_old.clone())
            .bind("x", x_old.clone())
            .bind(W, sym("u"))
            .bind(Z, sym("v"));
        Ok([t_old, x_old, substitute(&u_inv, &sub), substitute(&v_inv, &sub)])
    }

    /// The inverse map, defined when `beta` is constant.
    pub fn inverse(&self, d: &Expr) -> Result<FormPreservingMap, TransformError> {
        if !is_identically_zero(&dt(&self.beta)) {
            return Err(TransformError::NotInvertible("beta depends on t".into()));
        }
        let [t_old, x_old, _, _] = self.inverse_point_map(d)?;
        let at_old = Substitution::new().bind("t", t_old.clone()).bind("x", x_old);
        let old = |e: &Expr| substitute(e, &at_old);
        let b2 = self.beta.powi(2);
        let gg = &self.gamma * dt(&self.gamma) / (Expr::int(2) * &b2);
        let k1 = Expr::exp(-gg.clone());
        let kd = Expr::exp(-(d * &gg));
        let [_, _, w, z] = self.components(d);
        let (w_var, z_var) = match self.set {
            MapSet::I => ("u", "v"),
            MapSet::II => ("v", "u"),
        };
        let (w_coef, z_coef) = (differentiate(&w, w_var), differentiate(&z, z_var));
        // New first component is old `u`: comes from `w` in set I, `z` in set II.
        let (f, p, g, q) = match self.set {
            MapSet::I => (
                old(&(k1 / &self.f)),
                old(&(-(&self.p) / &w_coef)),
                old(&(kd / &self.g)),
                old(&(-(&self.q) / &z_coef)),
            ),
            MapSet::II => (
                old(&(k1 / &self.g)),
                old(&(-(&self.q) / &z_coef)),
                old(&(kd / &self.f)),
                old(&(-(&self.p) / &w_coef)),
            ),
        };
        Ok(FormPreservingMap {
            set: self.set,
            alpha: t_old,
            beta: self.beta.recip(),
            gamma: old(&(-(&self.gamma) / &self.beta)),
            f,
            g,
            p,
            q,
        })
    }

    /// Pushforward of an operator by the chain rule, expressed in the new
    /// coordinates. Requires `alpha` affine in `t`.
    pub fn pushforward(&self, q: &SymmetryOperator, d: &Expr) -> Result<SymmetryOperator, TransformError> {
        let comps = self.components(d);
        let apply = |c: &Expr| {
            &q.xi0 * dt(c) + &q.xi1 * dx(c) + &q.eta1 * differentiate(c, "u") + &q.eta2 * differentiate(c, "v")
        };
        let [t_old, x_old, u_old, v_old] = self.inverse_point_map(d)?;
        let back = Substitution::new().bind("t", t_old).bind("x", x_old).bind("u", u_old).bind("v", v_old);
        let [a, b, c, e] = comps.map(|c| substitute(&apply(&c), &back));
        Ok(SymmetryOperator::new(a, b, c, e)?)
    }
}

fn det4(m: &[f64]) -> f64 {
    let mut a = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            a[i][j] = m[4 * i + j];
        }
    }
    let mut det = 1.0;
    for c in 0..4 {
        let p = (c..4).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= a[c][c];
        for r in c + 1..4 {
            let k = a[r][c] / a[c][c];
            for j in c..4 {
                a[r][j] -= k * a[c][j];
            }
        }
    }
    det
}

/// Set-I application.
pub fn apply_map_i(sys: &RDSystem, m: &FormPreservingMap, cfg: &MapCheckConfig) -> Result<RDSystem, TransformError> {
    if m.set != MapSet::I {
        return Err(TransformError::InvalidMap("expected a set-I map".into()));
    }
    m.apply(sys, cfg)
}

/// Set-II application.
pub fn apply_map_ii(sys: &RDSystem, m: &FormPreservingMap, cfg: &MapCheckConfig) -> Result<RDSystem, TransformError> {
    if m.set != MapSet::II {
        return Err(TransformError::InvalidMap("expected a set-II map".into()));
    }
    m.apply(sys, cfg)
}

/// Exchanges `u` and `v`: `d -> 1/d`, `C1(u, v) -> C2(v, u)`, `C2(u, v) -> C1(v, u)`.
pub fn apply_swap(sys: &RDSystem) -> Result<RDSystem, TransformError> {
    let ex = swap_vars();
    Ok(RDSystem::new(sys.d.recip(), substitute(&sys.c2, &ex), substitute(&sys.c1, &ex))?)
}

/// The operator matching [`apply_swap`]: time rescaled by `d`, `u`, `v` exchanged.
pub fn swap_operator(q: &SymmetryOperator, d: &Expr) -> Result<SymmetryOperator, TransformError> {
    let ex = swap_vars().bind("t", d * sym("t"));
    let s = |e: &Expr| substitute(e, &ex);
    Ok(SymmetryOperator::new(s(&q.xi0) / d, s(&q.xi1), s(&q.eta2), s(&q.eta1))?)
}

fn swap_vars() -> Substitution {
    Substitution::new().bind("u", sym("v")).bind("v", sym("u"))
}

/// A system `u_t = d1 u_xx + F`, `v_t = d2 v_xx + G` with constant diffusivities.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusivitySystem {
    pub d1: Expr,
    pub d2: Expr,
    pub f: Expr,
    pub g: Expr,
}

impl DiffusivitySystem {
    /// `t -> t/d1`, `F -> -d1 C1`, `G -> -d2 C2`, `d = d1/d2`.
    pub fn canonical(&self) -> Result<RDSystem, TransformError> {
        Ok(RDSystem::new(
            &self.d1 / &self.d2,
            -(&self.f) / &self.d1,
            -(&self.g) / &self.d2,
        )?)
    }

    /// The same system after `x -> sqrt(d1) x` only: `C1 = -F`,
    /// `C2 = -d1 G / d2`. [`FormPreservingMap::rescaling`] maps it to
    /// [`DiffusivitySystem::canonical`].
    pub fn space_scaled(&self) -> Result<RDSystem, TransformError> {
        let d = &self.d1 / &self.d2;
        Ok(RDSystem::new(d.clone(), -(&self.f), -(&d * &self.g))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{instantiate, ParameterAssignment};
    use crate::engine::{invariance_residuals, ManifoldKind, ManifoldSpec, SamplingConfig, Verifier};
    use crate::expr::{evaluate, Binding};

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    pub(crate) fn same_on_samples(a: &Expr, b: &Expr, n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..n {
            let bnd = Binding::new()
                .with("u", rng.random_range(0.2..3.0))
                .with("v", rng.random_range(0.2..3.0));
            let (x, y) = (evaluate(a, &bnd).unwrap(), evaluate(b, &bnd).unwrap());
            worst = worst.max((x - y).abs() / (1.0 + x.abs()));
        }
        worst
    }

    fn sys() -> RDSystem {
        RDSystem::parse("3", "u^2*v - exp(v)", "u*v + ln(u + v)").unwrap()
    }

    #[test]
    fn identity_map() {
        let s = sys();
        let cfg = MapCheckConfig::default();
        let out = apply_map_i(&s, &FormPreservingMap::identity(), &cfg).unwrap();
        assert_eq!(out.d, s.d);
        assert!(same_on_samples(&out.c1, &s.c1, 100, 1) < 1e-14);
        assert!(same_on_samples(&out.c2, &s.c2, 100, 2) < 1e-14);
        assert!(FormPreservingMap::identity().nondegenerate(&s.d, &cfg));
    }

    #[test]
    fn rescaling_reaches_canonical_form() {
        let raw = DiffusivitySystem { d1: Expr::int(2), d2: Expr::int(5), f: p("u - u^3 - v"), g: p("u*v^2") };
        let m = FormPreservingMap::rescaling(raw.d1.clone());
        let src = raw.space_scaled().unwrap();
        let out = apply_map_i(&src, &m, &MapCheckConfig::default()).unwrap();
        let canon = raw.canonical().unwrap();
        assert_eq!(out.d, src.d);
        assert_eq!(out.d.as_f64(), canon.d.as_f64());
        assert!(same_on_samples(&out.c1, &canon.c1, 100, 3) < 1e-12);
        assert!(same_on_samples(&out.c2, &canon.c2, 100, 4) < 1e-12);
    }

    #[test]
    fn shift_sends_pre_case6_system_to_case6_shape() {
        // u_xx = u_t + (u + b) f(u), v_xx = d v_t + f(u) v + a v + g(u), b = 0.7
        let f = "(1 + u^2)";
        let s = RDSystem::parse("2", &format!("(u + 0.7)*{}", f), &format!("{}*v + 0.4*v + u^3", f)).unwrap();
        let out = apply_map_i(&s, &FormPreservingMap::shift_u(p("0.7")), &MapCheckConfig::default()).unwrap();
        // case 6 shape with f~(u) = 1 + (u - 0.7)^2
        let ft = "(1 + (u - 0.7)^2)";
        assert!(same_on_samples(&out.c1, &p(&format!("u*{}", ft)), 100, 5) < 1e-12);
        assert!(same_on_samples(&out.c2, &p(&format!("{}*v + 0.4*v + (u - 0.7)^3", ft)), 100, 6) < 1e-12);
    }

    #[test]
    fn generic_map_is_not_form_preserving() {
        let m = FormPreservingMap {
            f: p("exp(t)"),
            ..FormPreservingMap::identity()
        };
        let err = apply_map_i(&sys(), &m, &MapCheckConfig::default()).unwrap_err();
        assert!(matches!(err, TransformError::NotFormPreserving { .. }), "{:?}", err);
    }

    #[test]
    fn invariant_violations() {
        let cfg = MapCheckConfig::default();
        let d = Expr::int(2);
        let bad_time = FormPreservingMap { alpha: p("2*t"), ..FormPreservingMap::identity() };
        assert!(matches!(bad_time.validate(&d, &cfg), Err(TransformError::InvalidMap(_))));
        let zero_f = FormPreservingMap { f: Expr::zero(), ..FormPreservingMap::identity() };
        assert!(!zero_f.nondegenerate(&d, &cfg));
        let zero_beta = FormPreservingMap { beta: Expr::zero(), alpha: Expr::int(1), ..FormPreservingMap::identity() };
        assert!(!zero_beta.nondegenerate(&d, &cfg));
        assert!(matches!(apply_map_ii(&sys(), &FormPreservingMap::identity(), &cfg), Err(TransformError::InvalidMap(_))));
    }

    #[test]
    fn swap_agrees_with_set_two_map() {
        let s = sys();
        let cfg = MapCheckConfig::default();
        let via_map = apply_map_ii(&s, &FormPreservingMap::swap(&s.d), &cfg).unwrap();
        let direct = apply_swap(&s).unwrap();
        assert_eq!(via_map.d.as_f64(), Some(1.0 / 3.0));
        assert!(same_on_samples(&via_map.c1, &direct.c1, 100, 7) < 1e-12);
        assert!(same_on_samples(&via_map.c2, &direct.c2, 100, 8) < 1e-12);
        let twice = apply_swap(&direct).unwrap();
        assert_eq!(twice.d.as_f64(), Some(3.0));
        assert!(same_on_samples(&twice.c1, &s.c1, 100, 9) < 1e-14);
        let q = SymmetryOperator::parse("1 + t", "x", "u*v", "v").unwrap();
        let pushed = FormPreservingMap::swap(&s.d).pushforward(&q, &s.d).unwrap();
        let direct_q = swap_operator(&q, &s.d).unwrap();
        for (a, b) in pushed.coefficients().iter().zip(direct_q.coefficients()) {
            let e = expand(&(*a - b));
            let bnd = Binding::new().with("t", 0.7).with("x", 1.1).with("u", 0.4).with("v", 1.9);
            assert!(evaluate(&e, &bnd).unwrap().abs() < 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn swapped_case5_passes_on_second_manifold() {
        let pa = ParameterAssignment::new().with("d", 2.0).with_function("f", "w").with_function("g", "1");
        let inst = instantiate(5, &pa).unwrap();
        let sys2 = apply_swap(&inst.system).unwrap();
        let q2 = swap_operator(&inst.operator, &inst.system.d).unwrap();
        let v = Verifier::new(SamplingConfig::default());
        let rep = invariance_residuals(&sys2, &q2, &ManifoldSpec::new(ManifoldKind::M1V), &v).unwrap();
        assert!(rep.passed(), "{:?}", rep.failing().collect::<Vec<_>>());
        let rep = invariance_residuals(&sys2, &q2, &ManifoldSpec::new(ManifoldKind::M1U), &v).unwrap();
        assert!(!rep.passed());
    }

    #[test]
    fn round_trip_through_inverse() {
        let s = RDSystem::parse("2", "u^2 + v", "u*v").unwrap();
        let cfg = MapCheckConfig::default();
        let m = FormPreservingMap {
            alpha: p("4*t + 1"),
            beta: Expr::int(2),
            gamma: Expr::rational(1, 3),
            f: Expr::float(1.5),
            g: Expr::float(-0.5),
            p: Expr::float(0.3),
            q: Expr::float(0.2),
            ..FormPreservingMap::identity()
        };
        let mid = apply_map_i(&s, &m, &cfg).unwrap();
        let inv = m.inverse(&s.d).unwrap();
        let back = apply_map_i(&mid, &inv, &cfg).unwrap();
        assert!(same_on_samples(&back.c1, &s.c1, 100, 10) < 1e-10);
        assert!(same_on_samples(&back.c2, &s.c2, 100, 11) < 1e-10);
    }

    #[test]
    fn galilean_map_on_linear_system_round_trips() {
        let s = RDSystem::parse("2", "0.5*u", "0.3*v").unwrap();
        let cfg = MapCheckConfig::default();
        let m = FormPreservingMap {
            gamma: p("0.4*t"),
            f: p("exp(0.04*t)"),
            g: p("exp(0.08*t)"),
            ..FormPreservingMap::identity()
        };
        let mid = m.apply(&s, &cfg).unwrap();
        let back = m.inverse(&s.d).unwrap().apply(&mid, &cfg).unwrap();
        assert!(same_on_samples(&back.c1, &s.c1, 100, 12) < 1e-10);
        assert!(same_on_samples(&back.c2, &s.c2, 100, 13) < 1e-10);
    }

    #[test]
    fn pushforward_keeps_conditional_symmetry() {
        let pa = ParameterAssignment::new()
            .with("alpha", 0.8)
            .with("k", 2.0)
            .with("d", 3.0)
            .with_function("f", "w")
            .with_function("g", "w^2");
        let inst = instantiate(1, &pa).unwrap();
        let cfg = MapCheckConfig::default();
        let verifier = Verifier::new(SamplingConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..10 {
            let beta = rng.random_range(0.5..1.5);
            let m = FormPreservingMap {
                alpha: Expr::float(beta * beta) * sym("t") + Expr::float(rng.random_range(-0.5..0.5)),
                beta: Expr::float(beta),
                gamma: Expr::float(rng.random_range(-0.5..0.5)),
                f: Expr::float(rng.random_range(0.5..1.5)),
                g: Expr::float(rng.random_range(0.5..1.5)),
                p: Expr::float(rng.random_range(-0.2..0.2)),
                q: Expr::float(rng.random_range(-0.2..0.2)),
                ..FormPreservingMap::identity()
            };
            let target = m.apply(&inst.system, &cfg).unwrap();
            let q = m.pushforward(&inst.operator, &inst.system.d).unwrap();
            let rep = invariance_residuals(&target, &q, &ManifoldSpec::new(ManifoldKind::M1U), &verifier).unwrap();
            assert!(rep.passed(), "{:?}", m.spec());
        }
    }

    #[test]
    fn map_spec_json() {
        let spec: MapSpec = serde_json::from_str(r#"{"set":"II","alpha":"t/2","beta":"1"}"#).unwrap();
        let m = spec.to_map().unwrap();
        assert_eq!(m.set, MapSet::II);
        assert_eq!(m.lambda(&Expr::int(2)).as_f64(), Some(0.5));
        let again: MapSpec = serde_json::from_str(&serde_json::to_string(&m.spec()).unwrap()).unwrap();
        assert_eq!(again.to_map().unwrap(), m);
    }
}
