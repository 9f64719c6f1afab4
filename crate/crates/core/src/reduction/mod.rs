//! Reduction of the `omega = u^{-k}(v - u)` family to ODEs and the exact
//! solutions built from it.
//!
//! The family is
//! `u_xx = u_t + u f(omega)`,
//! `v_xx = d v_t + u^k g(omega) + u (f(omega) + alpha (1 - d))`,
//! whose conditional symmetry `d_t + alpha u d_u + alpha ((1-k) u + k v) d_v`
//! yields the ansatz `u = phi(x) e^{alpha t}`, `v = psi(x) e^{k alpha t} + phi(x) e^{alpha t}`.

mod check;
mod families;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, RDSystem, SymmetryOperator};
use crate::expr::{differentiate, expand, substitute, Expr, Node, ParseError, Substitution};

pub use check::{
    decay_ratio, grid_csv, min_max_on_grid, neumann_defect, residual, solution_metadata, GridExtrema,
    ResidualSummary, SolutionMetadata,
};
pub use families::{
    cosine_solution, power_law_family, power_law_solution, predator_prey_solution, profile_family, profile_solution, Branch, ClosedFormSolution,
    ConstraintCheck, CosineParams, Domain, Family, PositivityConstraints, PowerLawParams, PowerLawSolution,
    PredatorPreyParams, Profile, ProfileBranch, ProfileParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReductionError {
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("branch mismatch: beta + alpha*k*d = {value} selects the {expected:?} branch, not {requested:?}")]
    BranchMismatch { requested: Branch, expected: Branch, value: f64 },
    #[error("reduction failed: {0}")]
    NotReducible(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("export failed: {0}")]
    Export(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Symbol names of the unknown profiles inside reduced equations.
pub const PHI: &str = "phi";
pub const PSI: &str = "psi";

fn profile(name: &str) -> Expr {
    Expr::apply(name, 0, Expr::sym("x"))
}

/// Whether `v → -v` has been applied relative to the base family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    Direct,
    NegatedV,
}

impl Orientation {
    pub fn flipped(self) -> Orientation {
        match self {
            Orientation::Direct => Orientation::NegatedV,
            Orientation::NegatedV => Orientation::Direct,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ansatz {
    pub alpha: Expr,
    pub k: Expr,
    /// In `t`, `x` and the profiles `phi(x)`, `psi(x)`.
    pub u: Expr,
    pub v: Expr,
}

pub fn build_ansatz_case1(alpha: Expr, k: Expr) -> Result<Ansatz, ReductionError> {
    if k.as_f64() == Some(1.0) {
        return Err(ReductionError::ConstraintViolation("k != 1".into()));
    }
    let t = Expr::sym("t");
    let e1 = Expr::exp(&alpha * &t);
    let ek = Expr::exp(&k * &alpha * &t);
    let u = profile(PHI) * &e1;
    let v = profile(PSI) * ek + &u;
    Ok(Ansatz { alpha, k, u, v })
}

impl Ansatz {
    /// The operator whose invariant surface conditions produce the ansatz.
    pub fn operator(&self) -> SymmetryOperator {
        let (u, v) = (Expr::sym("u"), Expr::sym("v"));
        let eta2 = &self.alpha * ((1 - &self.k) * &u + &self.k * &v);
        SymmetryOperator::new(Expr::one(), Expr::zero(), &self.alpha * u, eta2).expect("point operator")
    }

    /// `Q(u)` and `Q(v)` evaluated on the ansatz, expanded.
    pub fn characteristic_residuals(&self) -> [Expr; 2] {
        let q = self.operator();
        let [xi0, xi1, eta1, eta2] = q.coefficients();
        let on = |e: &Expr| substitute(e, &Substitution::new().bind("u", self.u.clone()).bind("v", self.v.clone()));
        let qf = |f: &Expr, eta: &Expr| {
            expand(&(on(xi0) * differentiate(f, "t") + on(xi1) * differentiate(f, "x") - on(eta)))
        };
        [qf(&self.u, eta1), qf(&self.v, eta2)]
    }
}

/// `phi'' = phi_xx` and `psi'' = psi_xx`, right-hand sides in the symbols
/// `phi`, `psi` and the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedOdeSystem {
    pub phi_xx: Expr,
    pub psi_xx: Expr,
}

impl std::fmt::Display for ReducedOdeSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "phi'' = {}\npsi'' = {}", self.phi_xx, self.psi_xx)
    }
}

/// Reaction function of `omega`: opaque (`None`) or an expression in `w`.
fn reaction_fn(name: &str, body: Option<&Expr>, omega: &Expr) -> Expr {
    match body {
        None => Expr::apply(name, 0, omega.clone()),
        Some(b) => substitute(b, &Substitution::new().bind("w", omega.clone())),
    }
}

/// The family in canonical form for the given `f`, `g` (expressions in `w`, or opaque).
pub fn case1_system(
    f: Option<&Expr>,
    g: Option<&Expr>,
    alpha: &Expr,
    k: &Expr,
    d: &Expr,
) -> Result<RDSystem, ReductionError> {
    let (u, v) = (Expr::sym("u"), Expr::sym("v"));
    let omega = Expr::pow(&u, &-k) * (&v - &u);
    let fw = reaction_fn("f", f, &omega);
    let gw = reaction_fn("g", g, &omega);
    let c1 = &u * &fw;
    let c2 = Expr::pow(&u, k) * gw + &u * (fw + alpha * (1 - d));
    Ok(RDSystem::new(d.clone(), c1, c2)?)
}

/// Substitutes the ansatz into the family, strips `e^{alpha t}` and
/// `e^{k alpha t}` and returns the remaining ODEs. Fails if anything
/// time-dependent survives.
pub fn reduce_case1(
    f: Option<&Expr>,
    g: Option<&Expr>,
    alpha: &Expr,
    k: &Expr,
    d: &Expr,
) -> Result<ReducedOdeSystem, ReductionError> {
    let ansatz = build_ansatz_case1(alpha.clone(), k.clone())?;
    let sys = case1_system(f, g, alpha, k, d)?;
    let on = Substitution::new().bind("u", ansatz.u.clone()).bind("v", ansatz.v.clone());
    let c1 = substitute(&sys.c1, &on);
    let c2 = substitute(&sys.c2, &on);
    let dxx = |e: &Expr| differentiate(&differentiate(e, "x"), "x");
    let r1 = dxx(&ansatz.u) - differentiate(&ansatz.u, "t") - c1;
    let r2 = dxx(&ansatz.v) - d * differentiate(&ansatz.v, "t") - c2;
    let t = Expr::sym("t");
    let e1 = Expr::exp(alpha * &t);
    let ek = Expr::exp(k * alpha * &t);
    let eq1 = drop_float_noise(&expand(&(&r1 * e1.recip())));
    let eq2 = drop_float_noise(&expand(&((r2 - &e1 * &eq1) * ek.recip())));
    for (i, e) in [&eq1, &eq2].iter().enumerate() {
        if e.depends_on("t") {
            return Err(ReductionError::NotReducible(format!("equation {} keeps a t-dependence: {}", i + 1, e)));
        }
    }
    let phi2 = Expr::apply(PHI, 2, Expr::sym("x"));
    let psi2 = Expr::apply(PSI, 2, Expr::sym("x"));
    let rhs1 = expand(&(&phi2 - &eq1));
    let rhs2 = expand(&(&psi2 - &eq2));
    Ok(ReducedOdeSystem { phi_xx: symbolize(&rhs1)?, psi_xx: symbolize(&rhs2)? })
}

/// Drops summands whose float coefficient is round-off.
fn drop_float_noise(e: &Expr) -> Expr {
    match e.node() {
        Node::Add(ts) => Expr::sum(ts.iter().filter(|t| {
            let (c, _) = t.split_coefficient();
            !(c.is_float() && c.to_f64().abs() < 1e-12)
        }).cloned()),
        _ => e.clone(),
    }
}

/// Replaces `phi(x)`, `psi(x)` by plain symbols; derivatives are an error.
fn symbolize(e: &Expr) -> Result<Expr, ReductionError> {
    let out = e.rewrite(&mut |n: &Expr| match n.node() {
        Node::Apply { name, order, arg } if (&**name == PHI || &**name == PSI) && arg.as_symbol() == Some("x") => {
            if *order == 0 {
                Ok(Some(Expr::sym(name)))
            } else {
                Err(ReductionError::NotReducible(format!("derivative of {} on the right-hand side", name)))
            }
        }
        _ => Ok(None),
    })?;
    if out.depends_on("x") {
        return Err(ReductionError::NotReducible(format!("explicit x-dependence: {}", out)));
    }
    Ok(out)
}

/// The reduced system as displayed for the family: `phi'' = phi (alpha + f(omega))`,
/// `psi'' = phi^k g(omega) + alpha k d psi`, `omega = psi phi^{-k}`.
pub fn expected_reduction(f: Option<&Expr>, g: Option<&Expr>, alpha: &Expr, k: &Expr, d: &Expr) -> ReducedOdeSystem {
    let (phi, psi) = (Expr::sym(PHI), Expr::sym(PSI));
    let omega = &psi * Expr::pow(&phi, &-k);
    let fw = reaction_fn("f", f, &omega);
    let gw = reaction_fn("g", g, &omega);
    ReducedOdeSystem {
        phi_xx: &phi * (alpha + fw),
        psi_xx: Expr::pow(&phi, k) * gw + alpha * k * d * psi,
    }
}

/// `f = gamma w^{1/k} - alpha`, `g = beta w`.
pub fn power_law_reactions(alpha: &Expr, beta: &Expr, gamma: &Expr, k: &Expr) -> (Expr, Expr) {
    let w = Expr::sym("w");
    (gamma * Expr::pow(&w, &k.recip()) - alpha, beta * w)
}

/// `f = -(a1 + b w)`, `g = (alpha (1 - d) - a1) w`.
pub fn linear_interaction_reactions(alpha: &Expr, a1: &Expr, b: &Expr, d: &Expr) -> (Expr, Expr) {
    let w = Expr::sym("w");
    (-(a1 + b * &w), (alpha * (1 - d) - a1) * w)
}

/// `a2 = alpha (1 - d) - a1`; never a free parameter.
pub fn derived_a2(alpha: &Expr, a1: &Expr, d: &Expr) -> Expr {
    alpha * (1 - d) - a1
}

/// `u_t = u_xx + alpha u - gamma (v-u)^{1/k}`,
/// `d v_t = v_xx - gamma (v-u)^{1/k} - beta v + (beta + alpha d) u`.
pub fn power_law_system(alpha: &Expr, beta: &Expr, gamma: &Expr, k: &Expr, d: &Expr) -> Result<RDSystem, ReductionError> {
    let (u, v) = (Expr::sym("u"), Expr::sym("v"));
    let drive = gamma * Expr::pow(&(&v - &u), &k.recip());
    let c1 = &drive - alpha * &u;
    let c2 = drive + beta * &v - (beta + alpha * d) * u;
    Ok(RDSystem::new(d.clone(), c1, c2)?)
}

/// `u_t = u_xx + a1 u - b u^{2-k} + b v u^{1-k}`,
/// `d v_t = v_xx - a2 v - b u^{2-k} + b v u^{1-k}`.
pub fn linear_interaction_system(alpha: &Expr, a1: &Expr, b: &Expr, k: &Expr, d: &Expr) -> Result<RDSystem, ReductionError> {
    let (u, v) = (Expr::sym("u"), Expr::sym("v"));
    let a2 = derived_a2(alpha, a1, d);
    let cross = b * Expr::pow(&u, &(2 - k)) - b * &v * Expr::pow(&u, &(1 - k));
    let c1 = -(a1 * &u) + &cross;
    let c2 = a2 * v + cross;
    Ok(RDSystem::new(d.clone(), c1, c2)?)
}

/// The linear-interaction system after `v → -v`: a predator-prey model
/// `u_t = u_xx + u (a1 - b u^{1-k}) - b v u^{1-k}`,
/// `d v_t = v_xx + v (-a2 + b u^{1-k}) + b u^{2-k}`.
pub fn predator_prey_system(alpha: &Expr, a1: &Expr, b: &Expr, k: &Expr, d: &Expr) -> Result<RDSystem, ReductionError> {
    negate_v(&linear_interaction_system(alpha, a1, b, k, d)?)
}

/// `v → -v`: `C1(u, v) → C1(u, -v)`, `C2(u, v) → -C2(u, -v)`.
pub fn negate_v(sys: &RDSystem) -> Result<RDSystem, ReductionError> {
    let flip = Substitution::new().bind("v", -Expr::sym("v"));
    Ok(RDSystem::new(sys.d.clone(), substitute(&sys.c1, &flip), -substitute(&sys.c2, &flip))?)
}

/// Named systems of the family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedSystem {
    Case1,
    PowerLaw,
    LinearInteraction,
    PredatorPrey,
}

impl NamedSystem {
    pub const ALL: [NamedSystem; 4] =
        [NamedSystem::Case1, NamedSystem::PowerLaw, NamedSystem::LinearInteraction, NamedSystem::PredatorPrey];

    pub fn id(self) -> &'static str {
        match self {
            NamedSystem::Case1 => "case1",
            NamedSystem::PowerLaw => "power-law",
            NamedSystem::LinearInteraction => "linear-interaction",
            NamedSystem::PredatorPrey => "predator-prey",
        }
    }

    pub fn from_id(id: &str) -> Option<NamedSystem> {
        NamedSystem::ALL.into_iter().find(|s| s.id() == id)
    }

    pub fn orientation(self) -> Orientation {
        match self {
            NamedSystem::PredatorPrey => Orientation::NegatedV,
            _ => Orientation::Direct,
        }
    }

    /// Parameter names, in the order `build` reads them.
    pub fn parameters(self) -> &'static [&'static str] {
        match self {
            NamedSystem::Case1 => &["alpha", "k", "d"],
            NamedSystem::PowerLaw => &["alpha", "beta", "gamma", "k", "d"],
            NamedSystem::LinearInteraction | NamedSystem::PredatorPrey => &["alpha", "a1", "b", "k", "d"],
        }
    }

    /// Builds the system with symbolic parameters; substitute values afterwards.
    pub fn build(self) -> Result<RDSystem, ReductionError> {
        let s = Expr::sym;
        match self {
            NamedSystem::Case1 => case1_system(None, None, &s("alpha"), &s("k"), &s("d")),
            NamedSystem::PowerLaw => power_law_system(&s("alpha"), &s("beta"), &s("gamma"), &s("k"), &s("d")),
            NamedSystem::LinearInteraction => linear_interaction_system(&s("alpha"), &s("a1"), &s("b"), &s("k"), &s("d")),
            NamedSystem::PredatorPrey => predator_prey_system(&s("alpha"), &s("a1"), &s("b"), &s("k"), &s("d")),
        }
    }
}

/// Exact integers stay exact; everything else becomes a float.
pub(crate) fn number(v: f64) -> Expr {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        Expr::int(v as i64)
    } else {
        Expr::float(v)
    }
}
