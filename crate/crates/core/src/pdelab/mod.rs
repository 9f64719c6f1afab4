//! One-dimensional finite differences for `u_t = d1 u_xx + F(u,v)`,
//! `v_t = d2 v_xx + G(u,v)` with zero-flux ends.
//!
//! Diffusion is Crank-Nicolson; the reaction is explicit, averaged over a
//! predictor and a corrector step (Heun), so the scheme is second order in
//! time and, with mirrored ghost nodes, second order in space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::RDSystem;
use crate::expr::{evaluate, Binding, Expr, Tape};
use crate::reduction::ClosedFormSolution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("dt = {dt} exceeds the reaction stability limit {limit:.3e} (0.25 / L, L = {lipschitz:.3e})")]
    StepTooLarge { dt: f64, limit: f64, lipschitz: f64 },
    #[error("blow-up at step {step} (t = {t}): node {node} has u = {u}, v = {v}")]
    BlowUp { step: usize, t: f64, node: usize, u: f64, v: f64 },
    #[error("exact solution undefined at t = {t}, x = {x}")]
    Exact { t: f64, x: f64 },
    #[error("precondition: {0}")]
    Precondition(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x0: f64,
    pub x1: f64,
    pub n_cells: usize,
    pub dt: f64,
    pub t_end: f64,
}

impl Grid1D {
    pub fn new(x0: f64, x1: f64, n_cells: usize, dt: f64, t_end: f64) -> Result<Grid1D, PdeError> {
        let g = Grid1D { x0, x1, n_cells, dt, t_end };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), PdeError> {
        if !(self.x1 > self.x0) {
            return Err(PdeError::InvalidGrid("x1 must exceed x0".into()));
        }
        if self.n_cells < 8 {
            return Err(PdeError::InvalidGrid("at least 8 cells".into()));
        }
        if !(self.dt > 0.0) || !(self.t_end >= 0.0) {
            return Err(PdeError::InvalidGrid("dt > 0 and t_end >= 0".into()));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        (self.x1 - self.x0) / self.n_cells as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.h();
        (0..=self.n_cells).map(|i| self.x0 + h * i as f64).collect()
    }

    /// Number of steps and the step actually used, so that `t_end` is hit exactly.
    pub fn steps(&self) -> (usize, f64) {
        if self.t_end == 0.0 {
            return (0, self.dt);
        }
        let n = (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_end / n as f64)
    }

    /// Halves `h` and quarters `dt`.
    pub fn refined(&self) -> Grid1D {
        Grid1D { n_cells: self.n_cells * 2, dt: self.dt / 4.0, ..*self }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldPair {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FieldPair {
    pub fn sample(grid: &Grid1D, t: f64, f: impl Fn(f64) -> (f64, f64)) -> FieldPair {
        let (u, v) = grid.nodes().into_iter().map(f).unzip();
        FieldPair { t, u, v }
    }

    fn check(&self, grid: &Grid1D) -> Result<(), PdeError> {
        let n = grid.n_cells + 1;
        if self.u.len() != n || self.v.len() != n {
            return Err(PdeError::InvalidGrid(format!("fields need {} nodal values", n)));
        }
        Ok(())
    }
}

/// Trapezoid-weighted mean, the quantity the zero-flux scheme conserves.
pub fn discrete_mean(values: &[f64]) -> f64 {
    let n = values.len() - 1;
    let inner: f64 = values[1..n].iter().sum();
    (inner + 0.5 * (values[0] + values[n])) / n as f64
}

/// `u_t = d1 u_xx + F`, `v_t = d2 v_xx + G` with `F`, `G` in the symbols `u`, `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kinetics {
    pub d1: f64,
    pub d2: f64,
    pub f: Expr,
    pub g: Expr,
}

impl Kinetics {
    pub fn new(d1: f64, d2: f64, f: Expr, g: Expr) -> Result<Kinetics, PdeError> {
        if !(d1 > 0.0 && d2 > 0.0) {
            return Err(PdeError::InvalidSystem("diffusivities must be positive".into()));
        }
        for e in [&f, &g] {
            if let Some(s) = e.symbols().into_iter().find(|s| s != "u" && s != "v") {
                return Err(PdeError::InvalidSystem(format!("unbound symbol `{}` in reaction", s)));
            }
            if !e.fields().is_empty() || !e.functions().is_empty() {
                return Err(PdeError::InvalidSystem("reaction terms must be explicit in u, v".into()));
            }
        }
        Ok(Kinetics { d1, d2, f, g })
    }

    /// `u_xx = u_t + C1`, `v_xx = d v_t + C2` gives `d1 = 1`, `d2 = 1/d`,
    /// `F = -C1`, `G = -C2 / d`.
    pub fn from_canonical(sys: &RDSystem) -> Result<Kinetics, PdeError> {
        let d = evaluate(&sys.d, &Binding::new())
            .map_err(|e| PdeError::InvalidSystem(format!("d must be numeric: {}", e)))?;
        if !(d > 0.0) {
            return Err(PdeError::InvalidSystem("d must be positive".into()));
        }
        Kinetics::new(1.0, 1.0 / d, -sys.c1.clone(), -sys.c2.clone() / Expr::float(d))
    }

    pub fn heat() -> Kinetics {
        Kinetics { d1: 1.0, d2: 1.0, f: Expr::zero(), g: Expr::zero() }
    }

    fn compile(&self) -> Reaction {
        let tape = Tape::compile(&[self.f.clone(), self.g.clone()]);
        let slots = tape.symbols().iter().map(|s| s == "u").collect();
        Reaction { tape, slots }
    }
}

struct Reaction {
    tape: Tape,
    /// For each tape symbol: `true` for `u`, `false` for `v`.
    slots: Vec<bool>,
}

impl Reaction {
    fn eval(&self, u: f64, v: f64) -> (f64, f64) {
        let vars: Vec<f64> = self.slots.iter().map(|&is_u| if is_u { u } else { v }).collect();
        let out = self.tape.eval::<f64>(&vars, &[], &[]);
        (out[0], out[1])
    }
}

/// Secant Lipschitz estimate of `(F, G)` over the box spanned by the fields:
/// the largest `|R(p) - R(q)|_inf / |p - q|_inf` over random pairs.
pub fn sampled_lipschitz(kin: &Kinetics, state: &FieldPair, seed: u64) -> f64 {
    let r = kin.compile();
    let span = |xs: &[f64]| {
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.05 * (hi - lo).max(1e-3);
        (lo - pad, hi + pad)
    };
    let (ub, vb) = (span(&state.u), span(&state.v));
    // Do not extend a non-negative range below zero.
    let clip = |b: (f64, f64), xs: &[f64]| if xs.iter().all(|&x| x >= 0.0) { (b.0.max(0.0), b.1) } else { b };
    let (ub, vb) = (clip(ub, &state.u), clip(vb, &state.v));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |b: (f64, f64)| b.0 + (b.1 - b.0) * rng.random::<f64>();
    let mut l = 0.0f64;
    for _ in 0..512 {
        let (u1, v1, u2, v2) = (pick(ub), pick(vb), pick(ub), pick(vb));
        let (f1, g1) = r.eval(u1, v1);
        let (f2, g2) = r.eval(u2, v2);
        let dist = (u1 - u2).abs().max((v1 - v2).abs());
        let q = (f1 - f2).abs().max((g1 - g2).abs()) / dist;
        if q.is_finite() {
            l = l.max(q);
        }
    }
    l
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    /// Refuse steps above `0.25 / L` before starting.
    pub check_stability: bool,
    /// Extra snapshot times; the final state is always recorded.
    pub output_times: Vec<f64>,
    pub seed: u64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { check_stability: true, output_times: Vec::new(), seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: Grid1D,
    pub dt_used: f64,
    pub steps: usize,
    pub frames: Vec<FieldPair>,
}

impl Trajectory {
    pub fn last(&self) -> &FieldPair {
        self.frames.last().expect("at least the initial frame")
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let xs = self.grid.nodes();
        w.write_record(["t", "x", "u", "v"]).expect("in-memory write");
        for f in &self.frames {
            for (i, x) in xs.iter().enumerate() {
                w.write_record([f.t, *x, f.u[i], f.v[i]].map(|v| v.to_string())).expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// LU factors of `I - r L` where `L` is the Neumann second difference
/// `(U_{i-1} - 2U_i + U_{i+1})` with mirrored ghosts.
struct Tridiagonal {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiagonal {
    fn implicit(n: usize, r: f64) -> Tridiagonal {
        let mut lower = vec![-r; n];
        let mut upper = vec![-r; n];
        let diag = vec![1.0 + 2.0 * r; n];
        upper[0] = -2.0 * r;
        lower[n - 1] = -2.0 * r;
        lower[0] = 0.0;
        upper[n - 1] = 0.0;
        Tridiagonal { lower, diag, upper }
    }

    /// Double-sweep elimination; the matrix is diagonally dominant.
    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        let mut c = vec![0.0; n];
        let mut beta = self.diag[0];
        c[0] = self.upper[0] / beta;
        rhs[0] /= beta;
        for i in 1..n {
            beta = self.diag[i] - self.lower[i] * c[i - 1];
            c[i] = self.upper[i] / beta;
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / beta;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= c[i] * rhs[i + 1];
        }
    }
}

/// `(I + r L) U` with mirrored ghost nodes.
fn explicit_half(u: &[f64], r: f64, out: &mut [f64]) {
    let n = u.len();
    out[0] = u[0] + r * 2.0 * (u[1] - u[0]);
    for i in 1..n - 1 {
        out[i] = u[i] + r * (u[i - 1] - 2.0 * u[i] + u[i + 1]);
    }
    out[n - 1] = u[n - 1] + r * 2.0 * (u[n - 2] - u[n - 1]);
}

/// Relative size of negative nodal values treated as round-off of zero.
pub const SIGN_GUARD: f64 = 1e-6;

fn sup_norm(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn integrate(kin: &Kinetics, ic: &FieldPair, grid: &Grid1D, opts: &IntegrateOptions) -> Result<Trajectory, PdeError> {
    grid.validate()?;
    ic.check(grid)?;
    let (steps, dt) = grid.steps();
    if opts.check_stability {
        let l = sampled_lipschitz(kin, ic, opts.seed);
        let limit = 0.25 / l;
        if l > 0.0 && dt > limit {
            return Err(PdeError::StepTooLarge { dt, limit, lipschitz: l });
        }
    }
    let reaction = kin.compile();
    let n = grid.n_cells + 1;
    let h2 = grid.h() * grid.h();
    let (ru, rv) = (0.5 * dt * kin.d1 / h2, 0.5 * dt * kin.d2 / h2);
    let (mu, mv) = (Tridiagonal::implicit(n, ru), Tridiagonal::implicit(n, rv));
    let mut u = ic.u.clone();
    let mut v = ic.v.clone();
    let mut frames = vec![FieldPair { t: ic.t, u: u.clone(), v: v.clone() }];
    let mut outputs: Vec<usize> = opts
        .output_times
        .iter()
        .filter(|&&t| t > ic.t && t < ic.t + grid.t_end)
        .map(|&t| ((t - ic.t) / dt).round() as usize)
        .collect();
    outputs.sort_unstable();
    outputs.dedup();
    let (mut eu, mut ev) = (vec![0.0; n], vec![0.0; n]);
    let (mut fu0, mut fv0) = (vec![0.0; n], vec![0.0; n]);
    let (mut pu, mut pv) = (vec![0.0; n], vec![0.0; n]);
    let react = |u: &[f64], v: &[f64], fu: &mut [f64], fv: &mut [f64], step: usize, t: f64| -> Result<(), PdeError> {
        let (su, sv) = (sup_norm(u), sup_norm(v));
        for i in 0..u.len() {
            let (mut f, mut g) = reaction.eval(u[i], v[i]);
            if !(f.is_finite() && g.is_finite()) {
                // Round-off below zero next to a touchdown point: evaluate
                // fractional powers at zero instead.
                let guard = |x: f64, scale: f64| if x < 0.0 && x >= -SIGN_GUARD * scale { 0.0 } else { x };
                (f, g) = reaction.eval(guard(u[i], su), guard(v[i], sv));
            }
            if !(f.is_finite() && g.is_finite()) {
                return Err(PdeError::BlowUp { step, t, node: i, u: u[i], v: v[i] });
            }
            fu[i] = f;
            fv[i] = g;
        }
        Ok(())
    };
    for step in 1..=steps {
        let t = ic.t + dt * step as f64;
        explicit_half(&u, ru, &mut eu);
        explicit_half(&v, rv, &mut ev);
        react(&u, &v, &mut fu0, &mut fv0, step, t)?;
        // predictor
        for i in 0..n {
            pu[i] = eu[i] + dt * fu0[i];
            pv[i] = ev[i] + dt * fv0[i];
        }
        mu.solve(&mut pu);
        mv.solve(&mut pv);
        let (mut fu1, mut fv1) = (vec![0.0; n], vec![0.0; n]);
        react(&pu, &pv, &mut fu1, &mut fv1, step, t)?;
        // corrector
        for i in 0..n {
            u[i] = eu[i] + 0.5 * dt * (fu0[i] + fu1[i]);
            v[i] = ev[i] + 0.5 * dt * (fv0[i] + fv1[i]);
        }
        mu.solve(&mut u);
        mv.solve(&mut v);
        if let Some(i) = (0..n).find(|&i| !(u[i].is_finite() && v[i].is_finite())) {
            return Err(PdeError::BlowUp { step, t, node: i, u: u[i], v: v[i] });
        }
        if outputs.binary_search(&step).is_ok() {
            frames.push(FieldPair { t, u: u.clone(), v: v.clone() });
        }
    }
    if steps > 0 {
        frames.push(FieldPair { t: ic.t + grid.t_end, u, v });
    }
    Ok(Trajectory { grid: *grid, dt_used: dt, steps, frames })
}

/// Exact reference `(t, x) -> (u, v)`.
pub trait Exact: Sync {
    fn at(&self, t: f64, x: f64) -> Option<(f64, f64)>;
}

impl<F: Fn(f64, f64) -> (f64, f64) + Sync> Exact for F {
    fn at(&self, t: f64, x: f64) -> Option<(f64, f64)> {
        let (u, v) = self(t, x);
        (u.is_finite() && v.is_finite()).then_some((u, v))
    }
}

/// Compiled closed-form solution.
pub struct CompiledSolution {
    tape: Tape,
    /// `true` for `t`, `false` for `x`.
    slots: Vec<bool>,
}

impl CompiledSolution {
    pub fn new(sol: &ClosedFormSolution) -> Result<CompiledSolution, PdeError> {
        let tape = Tape::compile(&[sol.u.clone(), sol.v.clone()]);
        let mut slots = Vec::new();
        for s in tape.symbols() {
            match s.as_str() {
                "t" => slots.push(true),
                "x" => slots.push(false),
                other => return Err(PdeError::InvalidSystem(format!("solution has free symbol `{}`", other))),
            }
        }
        Ok(CompiledSolution { tape, slots })
    }
}

impl Exact for CompiledSolution {
    fn at(&self, t: f64, x: f64) -> Option<(f64, f64)> {
        let vars: Vec<f64> = self.slots.iter().map(|&is_t| if is_t { t } else { x }).collect();
        let out = self.tape.eval::<f64>(&vars, &[], &[]);
        (out[0].is_finite() && out[1].is_finite()).then_some((out[0], out[1]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelError {
    pub n_cells: usize,
    pub dt: f64,
    /// `[u, v]`.
    pub linf: [f64; 2],
    pub l2: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub t_end: f64,
    pub levels: Vec<LevelError>,
    /// `log2(e_h / e_{h/2})` in the max norm, per consecutive pair, `[u, v]`.
    pub orders_linf: Vec<[f64; 2]>,
    pub orders_l2: Vec<[f64; 2]>,
}

impl ErrorReport {
    fn from_levels(t_end: f64, levels: Vec<LevelError>) -> ErrorReport {
        let order = |a: f64, b: f64| (a / b).log2();
        let pairs = levels.windows(2);
        let orders_linf = pairs.clone().map(|w| [order(w[0].linf[0], w[1].linf[0]), order(w[0].linf[1], w[1].linf[1])]).collect();
        let orders_l2 = pairs.map(|w| [order(w[0].l2[0], w[1].l2[0]), order(w[0].l2[1], w[1].l2[1])]).collect();
        ErrorReport { t_end, levels, orders_linf, orders_l2 }
    }

    pub fn max_linf(&self) -> f64 {
        self.levels.iter().flat_map(|l| l.linf).fold(0.0, f64::max)
    }

    /// Whether every observed max-norm order lies in `[lo, hi]`.
    pub fn orders_within(&self, lo: f64, hi: f64) -> bool {
        !self.orders_linf.is_empty() && self.orders_linf.iter().flatten().all(|o| (lo..=hi).contains(o))
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.levels.windows(2).all(|w| (0..2).all(|i| w[1].linf[i] < w[0].linf[i]))
    }
}

fn sample_exact(exact: &dyn Exact, grid: &Grid1D, t: f64) -> Result<FieldPair, PdeError> {
    let xs = grid.nodes();
    let mut u = Vec::with_capacity(xs.len());
    let mut v = Vec::with_capacity(xs.len());
    for x in xs {
        let (a, b) = exact.at(t, x).ok_or(PdeError::Exact { t, x })?;
        u.push(a);
        v.push(b);
    }
    Ok(FieldPair { t, u, v })
}

fn level_error(kin: &Kinetics, exact: &dyn Exact, grid: &Grid1D, opts: &IntegrateOptions) -> Result<LevelError, PdeError> {
    let ic = sample_exact(exact, grid, 0.0)?;
    let traj = integrate(kin, &ic, grid, &IntegrateOptions { output_times: Vec::new(), ..opts.clone() })?;
    let num = traj.last();
    let reference = sample_exact(exact, grid, grid.t_end)?;
    let h = grid.h();
    let norms = |a: &[f64], b: &[f64]| {
        let n = a.len() - 1;
        let mut linf = 0.0f64;
        let mut sq = 0.0;
        for i in 0..=n {
            let e = (a[i] - b[i]).abs();
            linf = linf.max(e);
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            sq += w * e * e * h;
        }
        (linf, sq.sqrt())
    };
    let (lu, l2u) = norms(&num.u, &reference.u);
    let (lv, l2v) = norms(&num.v, &reference.v);
    Ok(LevelError { n_cells: grid.n_cells, dt: traj.dt_used, linf: [lu, lv], l2: [l2u, l2v] })
}

/// Integrates from the exact solution at `t = 0` and compares at `grid.t_end`.
pub fn manufactured_compare(kin: &Kinetics, exact: &dyn Exact, grid: &Grid1D, opts: &IntegrateOptions) -> Result<ErrorReport, PdeError> {
    let level = level_error(kin, exact, grid, opts)?;
    Ok(ErrorReport::from_levels(grid.t_end, vec![level]))
}

/// `levels` runs, each halving `h` and quartering `dt`.
pub fn convergence_study(
    kin: &Kinetics,
    exact: &dyn Exact,
    base: &Grid1D,
    levels: usize,
    opts: &IntegrateOptions,
) -> Result<ErrorReport, PdeError> {
    if levels < 3 {
        return Err(PdeError::Precondition("a convergence study needs at least 3 levels".into()));
    }
    let mut grid = *base;
    let mut out = Vec::with_capacity(levels);
    for _ in 0..levels {
        out.push(level_error(kin, exact, &grid, opts)?);
        grid = grid.refined();
    }
    Ok(ErrorReport::from_levels(base.t_end, out))
}

/// Grid on the solution's zero-flux interval.
pub fn solution_grid(sol: &ClosedFormSolution, n_cells: usize, dt: f64, t_end: f64) -> Result<Grid1D, PdeError> {
    let l = sol
        .domain
        .length
        .ok_or_else(|| PdeError::Precondition("solution has no zero-flux interval".into()))?;
    Grid1D::new(sol.domain.x.0, sol.domain.x.0 + l, n_cells, dt, t_end)
}
