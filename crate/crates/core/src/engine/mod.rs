//! Symmetry verification for two-component reaction-diffusion systems
//! `u_xx = u_t + C1(u,v)`, `v_xx = d v_t + C2(u,v)`.
//!
//! The engine builds the second prolongation of a point operator
//! `Q = xi0 d_t + xi1 d_x + eta1 d_u + eta2 d_v`, eliminates jets on the
//! chosen solution manifold and decides whether the invariance conditions
//! vanish, first structurally and otherwise by seeded random sampling.

mod manifold;
mod prolong;
mod residuals;
mod sampling;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, parse, Expr, JetError, ParseError, SubstError, SymbolKind};

pub use manifold::{apply_side_constraints, manifold_reduce};
pub use prolong::{prolong2, ProlongationCoefficients};
pub use residuals::{
    combine_with_lie_tail, invariance_residuals, is_purely_conditional, lie_residuals,
    reduced_invariance, structured_residuals, EquationResidual, ResidualReport, Verdict,
};
pub use sampling::{Cubic, SampleBox, SamplingConfig, ScaledExp, Verifier};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("xi0 vanishes identically; Q(u)=0 cannot be solved for u_t")]
    DegenerateOperator,
    #[error("first-type classification requires d != 1")]
    UnitDiffusivity,
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid operator: {0}")]
    InvalidOperator(String),
    #[error("operator is not of the linear coefficient shape: {0}")]
    NotLinearForm(String),
    #[error("not a Lie tail operator (h1 v + h0) d_v: {0}")]
    NotLieTail(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Subst(#[from] SubstError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

fn check_point_expr(e: &Expr, allowed_jets: &[&str], what: &str) -> Result<(), String> {
    for s in e.symbols() {
        if expr::symbol_kind(&s) == SymbolKind::Jet && !allowed_jets.contains(&s.as_str()) {
            return Err(format!("{} contains jet coordinate `{}`", what, s));
        }
    }
    Ok(())
}

/// A system in canonical form: `u_xx = u_t + C1`, `v_xx = d v_t + C2`.
#[derive(Clone, Debug, PartialEq)]
pub struct RDSystem {
    pub d: Expr,
    pub c1: Expr,
    pub c2: Expr,
}

impl RDSystem {
    pub fn new(d: Expr, c1: Expr, c2: Expr) -> Result<Self, EngineError> {
        for (e, name) in [(&c1, "C1"), (&c2, "C2")] {
            check_point_expr(e, &["u", "v"], name).map_err(EngineError::InvalidSystem)?;
            if e.depends_on("t") || e.depends_on("x") {
                return Err(EngineError::InvalidSystem(format!("{} depends on t or x", name)));
            }
        }
        check_point_expr(&d, &[], "d").map_err(EngineError::InvalidSystem)?;
        if d.depends_on("t") || d.depends_on("x") || d.depends_on("u") || d.depends_on("v") {
            return Err(EngineError::InvalidSystem("d must be a constant".into()));
        }
        if let Some(v) = d.as_f64() {
            if v <= 0.0 {
                return Err(EngineError::InvalidSystem(format!("d = {} is not positive", v)));
            }
        }
        Ok(RDSystem { d, c1, c2 })
    }

    pub fn parse(d: &str, c1: &str, c2: &str) -> Result<Self, EngineError> {
        RDSystem::new(parse(d)?, parse(c1)?, parse(c2)?)
    }

    /// True when `d` is the literal constant 1.
    pub fn d_is_one(&self) -> bool {
        self.d.as_f64() == Some(1.0)
    }

    /// Left-hand sides `S1 = u_xx - u_t - C1`, `S2 = v_xx - d v_t - C2`.
    pub fn equations(&self) -> [Expr; 2] {
        [
            Expr::sym("u_xx") - Expr::sym("u_t") - &self.c1,
            Expr::sym("v_xx") - &self.d * Expr::sym("v_t") - &self.c2,
        ]
    }
}

/// Coefficients of `xi0 d_t + xi1 d_x + eta1 d_u + eta2 d_v`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryOperator {
    pub xi0: Expr,
    pub xi1: Expr,
    pub eta1: Expr,
    pub eta2: Expr,
}

impl SymmetryOperator {
    pub fn new(xi0: Expr, xi1: Expr, eta1: Expr, eta2: Expr) -> Result<Self, EngineError> {
        for (e, name) in [(&xi0, "xi0"), (&xi1, "xi1"), (&eta1, "eta1"), (&eta2, "eta2")] {
            check_point_expr(e, &["u", "v"], name).map_err(EngineError::InvalidOperator)?;
        }
        Ok(SymmetryOperator { xi0, xi1, eta1, eta2 })
    }

    pub fn parse(xi0: &str, xi1: &str, eta1: &str, eta2: &str) -> Result<Self, EngineError> {
        SymmetryOperator::new(parse(xi0)?, parse(xi1)?, parse(eta1)?, parse(eta2)?)
    }

    pub fn coefficients(&self) -> [&Expr; 4] {
        [&self.xi0, &self.xi1, &self.eta1, &self.eta2]
    }

    pub fn map(&self, f: impl Fn(&Expr) -> Expr) -> SymmetryOperator {
        SymmetryOperator {
            xi0: f(&self.xi0),
            xi1: f(&self.xi1),
            eta1: f(&self.eta1),
            eta2: f(&self.eta2),
        }
    }

    pub fn scaled(&self, c: &Expr) -> SymmetryOperator {
        self.map(|e| c * e)
    }

    pub fn plus(&self, other: &SymmetryOperator) -> SymmetryOperator {
        SymmetryOperator {
            xi0: &self.xi0 + &other.xi0,
            xi1: &self.xi1 + &other.xi1,
            eta1: &self.eta1 + &other.eta1,
            eta2: &self.eta2 + &other.eta2,
        }
    }

    /// Invariant-surface expressions `Q(u) = xi0 u_t + xi1 u_x - eta1` and `Q(v)`.
    pub fn surface_conditions(&self) -> [Expr; 2] {
        [
            &self.xi0 * Expr::sym("u_t") + &self.xi1 * Expr::sym("u_x") - &self.eta1,
            &self.xi0 * Expr::sym("v_t") + &self.xi1 * Expr::sym("v_x") - &self.eta2,
        ]
    }
}

/// Operators with `xi0(t)`, `xi1(t,x)`, `eta1 = r1 u + p1`, `eta2 = q u + r2 v + p2`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearCoefficientForm {
    pub xi0: Expr,
    pub xi1: Expr,
    pub r1: Expr,
    pub p1: Expr,
    pub q: Expr,
    pub r2: Expr,
    pub p2: Expr,
}

impl LinearCoefficientForm {
    pub fn to_operator(&self) -> SymmetryOperator {
        let u = Expr::sym("u");
        let v = Expr::sym("v");
        SymmetryOperator {
            xi0: self.xi0.clone(),
            xi1: self.xi1.clone(),
            eta1: &self.r1 * &u + &self.p1,
            eta2: &self.q * &u + &self.r2 * &v + &self.p2,
        }
    }

    /// Splits an operator into the linear shape; fails when a coefficient has
    /// the wrong dependence.
    pub fn from_operator(op: &SymmetryOperator) -> Result<Self, EngineError> {
        let bad = |what: &str| EngineError::NotLinearForm(what.to_string());
        if ["x", "u", "v"].iter().any(|s| op.xi0.depends_on(s)) {
            return Err(bad("xi0 must depend on t only"));
        }
        if ["u", "v"].iter().any(|s| op.xi1.depends_on(s)) {
            return Err(bad("xi1 must depend on t, x only"));
        }
        let e1 = expr::collect(&op.eta1, &["u", "v"]).map_err(|_| bad("eta1 is not polynomial in u, v"))?;
        let e2 = expr::collect(&op.eta2, &["u", "v"]).map_err(|_| bad("eta2 is not polynomial in u, v"))?;
        let mono = |s: &str| expr::Monomial(vec![(s.to_string(), 1)]);
        let one = expr::Monomial::one();
        for (m, _) in e1.iter() {
            if *m != one && *m != mono("u") {
                return Err(bad("eta1 must be r1 u + p1"));
            }
        }
        for (m, _) in e2.iter() {
            if *m != one && *m != mono("u") && *m != mono("v") {
                return Err(bad("eta2 must be q u + r2 v + p2"));
            }
        }
        Ok(LinearCoefficientForm {
            xi0: op.xi0.clone(),
            xi1: op.xi1.clone(),
            r1: e1.coefficient(&mono("u")),
            p1: e1.coefficient(&one),
            q: e2.coefficient(&mono("u")),
            r2: e2.coefficient(&mono("v")),
            p2: e2.coefficient(&one),
        })
    }
}

/// `X = (h1(t,x) v + h0(t,x)) d_v`.
#[derive(Clone, Debug, PartialEq)]
pub struct LieTailOperator {
    pub h1: Expr,
    pub h0: Expr,
}

impl LieTailOperator {
    pub fn new(h1: Expr, h0: Expr) -> Result<Self, EngineError> {
        for (e, n) in [(&h1, "h1"), (&h0, "h0")] {
            if ["u", "v"].iter().any(|s| e.depends_on(s)) {
                return Err(EngineError::NotLieTail(format!("{} must depend on t, x only", n)));
            }
            check_point_expr(e, &[], n).map_err(EngineError::NotLieTail)?;
        }
        Ok(LieTailOperator { h1, h0 })
    }

    pub fn from_operator(op: &SymmetryOperator) -> Result<Self, EngineError> {
        for (e, n) in [(&op.xi0, "xi0"), (&op.xi1, "xi1"), (&op.eta1, "eta1")] {
            if !e.is_zero() {
                return Err(EngineError::NotLieTail(format!("{} component is nonzero", n)));
            }
        }
        let c = expr::collect(&op.eta2, &["u", "v"])
            .map_err(|_| EngineError::NotLieTail("eta2 is not affine in v".into()))?;
        let one = expr::Monomial::one();
        let v = expr::Monomial(vec![("v".into(), 1)]);
        for (m, _) in c.iter() {
            if *m != one && *m != v {
                return Err(EngineError::NotLieTail(format!("eta2 contains the monomial {}", m)));
            }
        }
        LieTailOperator::new(c.coefficient(&v), c.coefficient(&one))
    }

    pub fn to_operator(&self) -> SymmetryOperator {
        SymmetryOperator {
            xi0: Expr::zero(),
            xi1: Expr::zero(),
            eta1: Expr::zero(),
            eta2: &self.h1 * Expr::sym("v") + &self.h0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManifoldKind {
    /// The system alone (Lie symmetry).
    #[serde(rename = "M")]
    M,
    /// System plus `Q(u) = 0` and its differential consequences.
    #[serde(rename = "M1-u")]
    M1U,
    /// System plus `Q(v) = 0`.
    #[serde(rename = "M1-v")]
    M1V,
    /// System plus both invariant-surface conditions.
    #[serde(rename = "M2")]
    M2,
}

impl ManifoldKind {
    pub fn name(self) -> &'static str {
        match self {
            ManifoldKind::M => "M",
            ManifoldKind::M1U => "M1-u",
            ManifoldKind::M1V => "M1-v",
            ManifoldKind::M2 => "M2",
        }
    }

    pub fn uses_u(self) -> bool {
        matches!(self, ManifoldKind::M1U | ManifoldKind::M2)
    }

    pub fn uses_v(self) -> bool {
        matches!(self, ManifoldKind::M1V | ManifoldKind::M2)
    }

    /// Jet coordinates that remain after elimination.
    pub fn free_jets(self) -> &'static [&'static str] {
        match self {
            ManifoldKind::M => &["u_t", "v_t", "u_x", "v_x", "u_xt", "v_xt", "u_tt", "v_tt"],
            ManifoldKind::M1U => &["u_x", "v_x", "v_t", "v_xt", "v_tt"],
            ManifoldKind::M1V => &["u_x", "v_x", "u_t", "u_xt", "u_tt"],
            ManifoldKind::M2 => &["u_x", "v_x"],
        }
    }
}

impl std::str::FromStr for ManifoldKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "M" | "lie" => ManifoldKind::M,
            "M1-u" | "M1" | "first" => ManifoldKind::M1U,
            "M1-v" => ManifoldKind::M1V,
            "M2" | "second" => ManifoldKind::M2,
            _ => return Err(format!("unknown manifold `{}`", s)),
        })
    }
}

/// A relation `name_{t^dt x^dx}(t,x) = rhs` used as a rewrite rule on field
/// derivatives, together with all its `t`, `x` derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct SideConstraint {
    pub field: String,
    pub dt: u32,
    pub dx: u32,
    pub rhs: Expr,
}

impl SideConstraint {
    /// Solves for the second `x`-derivative of `field`.
    pub fn xx(field: &str, rhs: Expr) -> Self {
        SideConstraint {
            field: field.to_string(),
            dt: 0,
            dx: 2,
            rhs,
        }
    }

    pub fn lhs(&self) -> Expr {
        Expr::field(&self.field, self.dt, self.dx)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    pub side_constraints: Vec<SideConstraint>,
}

impl ManifoldSpec {
    pub fn new(kind: ManifoldKind) -> Self {
        ManifoldSpec {
            kind,
            side_constraints: Vec::new(),
        }
    }

    pub fn with_constraints(kind: ManifoldKind, side_constraints: Vec<SideConstraint>) -> Self {
        ManifoldSpec { kind, side_constraints }
    }
}
