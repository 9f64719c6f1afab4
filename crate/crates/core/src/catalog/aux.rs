//! Auxiliary functions of one variable defined by ODEs or closed forms.
//!
//! ODE-defined functions are integrated with classical RK4 onto a uniform
//! node grid and interpolated with quintic Hermite polynomials. Derivatives of
//! order two and higher are not interpolated: they are recomputed from the ODE
//! at the interpolated state, so the defining relation holds exactly at every
//! evaluation point.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::expr::{differentiate, Expr, OpaqueFn, Tape};

/// Kinds of auxiliary definitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuxKind {
    LinearOde1,
    LinearOde2,
    NonlinearOde2,
    ClosedForm,
}

/// One branch of a piecewise closed form, taken when `when_nonzero` does not
/// vanish (or unconditionally when absent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedBranch {
    #[serde(default)]
    pub when_nonzero: Option<String>,
    pub body: String,
}

/// Definition of an auxiliary function as stored in the registry.
///
/// ODE kinds give the highest derivative as `rhs` in the variable, `y` and
/// (second order) `yp`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxFunctionDef {
    pub name: String,
    pub var: String,
    pub kind: AuxKind,
    #[serde(default)]
    pub rhs: Option<String>,
    #[serde(default)]
    pub branches: Vec<ClosedBranch>,
}

impl AuxFunctionDef {
    pub fn order(&self) -> u32 {
        match self.kind {
            AuxKind::LinearOde1 => 1,
            AuxKind::LinearOde2 | AuxKind::NonlinearOde2 => 2,
            AuxKind::ClosedForm => 0,
        }
    }

    pub fn is_ode(&self) -> bool {
        self.kind != AuxKind::ClosedForm
    }
}

const NODE_SPACING: f64 = 0.01;
const SUBSTEPS: usize = 10;
const MAX_DERIVATIVE: usize = 7;
const BLOWUP: f64 = 1e12;

/// Numeric solution of `y^(n) = rhs(w, y, y')`, `n` in {1, 2}.
#[derive(Clone)]
pub struct AuxOde {
    order: u32,
    lo: f64,
    /// Per node: `[y, y', y'', y''']`.
    nodes: Vec<[f64; 4]>,
    /// `E_n(w, y, yp)` for `n = 0..=MAX_DERIVATIVE`, slots `[w, y, yp]`.
    derivs: Arc<Vec<(Tape, [Option<usize>; 3])>>,
}

impl std::fmt::Debug for AuxOde {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuxOde")
            .field("order", &self.order)
            .field("domain", &self.domain())
            .finish()
    }
}

fn slots(t: &Tape, var: &str) -> [Option<usize>; 3] {
    let pos = |n: &str| t.symbols().iter().position(|s| s == n);
    [pos(var), pos("y"), pos("yp")]
}

impl AuxOde {
    /// Integrates from `w0 = 0` with the given initial value and slope over
    /// `[lo, hi]`. The domain shrinks to the part where the solution stays
    /// finite and below `1e12` in magnitude.
    pub fn new(var: &str, order: u32, rhs: &Expr, y0: f64, yp0: f64, lo: f64, hi: f64) -> Result<Self, String> {
        assert!(order == 1 || order == 2);
        assert!(lo <= 0.0 && hi >= 0.0);
        for s in rhs.symbols() {
            if s != var && s != "y" && !(order == 2 && s == "yp") {
                return Err(format!("ODE right-hand side has unbound symbol `{}`", s));
            }
        }
        let (y, yp) = (Expr::sym("y"), Expr::sym("yp"));
        let mut exprs = vec![y.clone()];
        if order == 2 {
            exprs.push(yp.clone());
        }
        exprs.push(rhs.clone());
        while exprs.len() <= MAX_DERIVATIVE {
            let e = exprs.last().unwrap();
            let mut next = differentiate(e, var) + differentiate(e, "y") * if order == 2 { yp.clone() } else { rhs.clone() };
            if order == 2 {
                next = next + differentiate(e, "yp") * rhs;
            }
            exprs.push(next);
        }
        let derivs: Vec<(Tape, [Option<usize>; 3])> = exprs
            .iter()
            .map(|e| {
                let t = Tape::compile(std::slice::from_ref(e));
                let s = slots(&t, var);
                (t, s)
            })
            .collect();
        let mut ode = AuxOde {
            order,
            lo,
            nodes: Vec::new(),
            derivs: Arc::new(derivs),
        };
        let n_back = (-lo / NODE_SPACING).round() as usize;
        let n_fwd = (hi / NODE_SPACING).round() as usize;
        let back = ode.trajectory(y0, yp0, -NODE_SPACING, n_back);
        let fwd = ode.trajectory(y0, yp0, NODE_SPACING, n_fwd);
        ode.lo = -((back.len() - 1) as f64) * NODE_SPACING;
        let mut nodes: Vec<[f64; 4]> = back.into_iter().skip(1).rev().collect();
        nodes.extend(fwd);
        if nodes.len() < 2 {
            return Err("ODE solution blows up immediately".into());
        }
        ode.nodes = nodes;
        Ok(ode)
    }

    fn eval_deriv(&self, n: usize, w: f64, y: f64, yp: f64) -> f64 {
        let (tape, s) = &self.derivs[n];
        let mut vars = vec![0.0; tape.symbols().len()];
        for (slot, val) in s.iter().zip([w, y, yp]) {
            if let Some(i) = slot {
                vars[*i] = val;
            }
        }
        tape.eval::<f64>(&vars, &[], &[])[0]
    }

    fn state_rate(&self, w: f64, st: [f64; 2]) -> [f64; 2] {
        if self.order == 2 {
            [st[1], self.eval_deriv(2, w, st[0], st[1])]
        } else {
            [self.eval_deriv(1, w, st[0], 0.0), 0.0]
        }
    }

    fn node(&self, w: f64, st: [f64; 2]) -> [f64; 4] {
        let mut out = [st[0], 0.0, 0.0, 0.0];
        for (i, o) in out.iter_mut().enumerate().skip(1) {
            *o = self.eval_deriv(i, w, st[0], st[1]);
        }
        out
    }

    fn trajectory(&self, y0: f64, yp0: f64, step: f64, count: usize) -> Vec<[f64; 4]> {
        let mut st = [y0, yp0];
        let mut w = 0.0;
        let mut out = vec![self.node(w, st)];
        let h = step / SUBSTEPS as f64;
        for _ in 0..count {
            for _ in 0..SUBSTEPS {
                let k1 = self.state_rate(w, st);
                let k2 = self.state_rate(w + h / 2.0, [st[0] + h / 2.0 * k1[0], st[1] + h / 2.0 * k1[1]]);
                let k3 = self.state_rate(w + h / 2.0, [st[0] + h / 2.0 * k2[0], st[1] + h / 2.0 * k2[1]]);
                let k4 = self.state_rate(w + h, [st[0] + h * k3[0], st[1] + h * k3[1]]);
                for i in 0..2 {
                    st[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                w += h;
            }
            let nd = self.node(w, st);
            if nd.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP) {
                break;
            }
            out.push(nd);
        }
        out
    }

    /// Interval on which the solution is available.
    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.lo + (self.nodes.len() - 1) as f64 * NODE_SPACING)
    }

    /// Interpolated `(y, y')`; `None` outside the domain.
    pub fn state(&self, w: f64) -> Option<(f64, f64)> {
        let (lo, hi) = self.domain();
        if !(lo..=hi).contains(&w) {
            return None;
        }
        let pos = (w - lo) / NODE_SPACING;
        let i = (pos.floor() as usize).min(self.nodes.len() - 2);
        let s = pos - i as f64;
        let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
        let y = quintic_hermite(s, NODE_SPACING, [a[0], a[1], a[2]], [b[0], b[1], b[2]]);
        let yp = if self.order == 2 {
            quintic_hermite(s, NODE_SPACING, [a[1], a[2], a[3]], [b[1], b[2], b[3]])
        } else {
            0.0
        };
        Some((y, yp))
    }
}

impl OpaqueFn for AuxOde {
    fn deriv(&self, order: u32, w: f64) -> f64 {
        let Some((y, yp)) = self.state(w) else {
            return f64::NAN;
        };
        match (self.order, order) {
            (_, 0) => y,
            (2, 1) => yp,
            (_, n) if (n as usize) < self.derivs.len() => self.eval_deriv(n as usize, w, y, yp),
            _ => f64::NAN,
        }
    }
}

/// Quintic Hermite interpolation on `[0, h]` at `s*h` from value, first and
/// second derivative at both ends.
pub fn quintic_hermite(s: f64, h: f64, f0: [f64; 3], f1: [f64; 3]) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let h00 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
    let h01 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    let h02 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
    let h10 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
    let h11 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    let h12 = 0.5 * (s3 - 2.0 * s4 + s5);
    f0[0] * h00 + h * f0[1] * h01 + h * h * f0[2] * h02 + f1[0] * h10 + h * f1[1] * h11 + h * h * f1[2] * h12
}
