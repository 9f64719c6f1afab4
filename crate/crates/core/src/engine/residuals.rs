use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::expr::{differentiate, Expr};

use super::{
    apply_side_constraints, manifold_reduce, prolong2, EngineError, LieTailOperator,
    LinearCoefficientForm, ManifoldKind, ManifoldSpec, RDSystem, SideConstraint, SymmetryOperator,
    Verifier,
};

const SYMBOLIC_TEXT_LIMIT: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ProvedZero,
    NumericallyZero,
    Nonzero,
}

impl Verdict {
    pub fn passed(self) -> bool {
        self != Verdict::Nonzero
    }

    /// The weakest of a set of verdicts; an empty set is proved zero.
    pub fn combine<I: IntoIterator<Item = Verdict>>(it: I) -> Verdict {
        it.into_iter().fold(Verdict::ProvedZero, |acc, v| match (acc, v) {
            (Verdict::Nonzero, _) | (_, Verdict::Nonzero) => Verdict::Nonzero,
            (Verdict::NumericallyZero, _) | (_, Verdict::NumericallyZero) => Verdict::NumericallyZero,
            _ => Verdict::ProvedZero,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquationResidual {
    pub id: String,
    /// Reduced residual, truncated for very large expressions.
    pub symbolic: String,
    pub verdict: Verdict,
    pub max_abs: f64,
    pub max_scaled: f64,
    pub samples: usize,
    pub failed_points: usize,
    pub worst_point: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub check: String,
    pub manifold: Option<ManifoldKind>,
    pub equations: Vec<EquationResidual>,
    pub verdict: Verdict,
    pub seed: u64,
    pub normalized: bool,
}

impl ResidualReport {
    fn new(check: &str, manifold: Option<ManifoldKind>, equations: Vec<EquationResidual>, v: &Verifier) -> Self {
        let verdict = Verdict::combine(equations.iter().map(|e| e.verdict));
        ResidualReport {
            check: check.to_string(),
            manifold,
            equations,
            verdict,
            seed: v.config.seed,
            normalized: v.config.normalize,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }

    pub fn failing(&self) -> impl Iterator<Item = &EquationResidual> {
        self.equations.iter().filter(|e| !e.verdict.passed())
    }
}

pub(crate) fn render(e: &Expr) -> String {
    let s = e.to_string();
    if s.len() <= SYMBOLIC_TEXT_LIMIT {
        return s;
    }
    let mut cut = SYMBOLIC_TEXT_LIMIT;
    while !s.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{} ... ({} chars)", &s[..cut], s.len())
}

fn salt_of(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// Invariance conditions `Q_2 S_1`, `Q_2 S_2` reduced on the manifold.
/// Returns the reduced residuals without deciding them.
pub fn reduced_invariance(
    sys: &RDSystem,
    q: &SymmetryOperator,
    m: &ManifoldSpec,
    normalize: bool,
) -> Result<[Expr; 2], EngineError> {
    if matches!(m.kind, ManifoldKind::M1U | ManifoldKind::M1V) && sys.d_is_one() {
        return Err(EngineError::UnitDiffusivity);
    }
    let q = if normalize {
        if q.xi0.is_zero() {
            return Err(EngineError::DegenerateOperator);
        }
        q.map(|c| c / &q.xi0)
    } else {
        q.clone()
    };
    let pc = prolong2(&q)?;
    let c1u = differentiate(&sys.c1, "u");
    let c1v = differentiate(&sys.c1, "v");
    let c2u = differentiate(&sys.c2, "u");
    let c2v = differentiate(&sys.c2, "v");
    let s1 = &pc.sigma_xx[0] - &pc.rho_t[0] - &q.eta1 * c1u - &q.eta2 * c1v;
    let s2 = &pc.sigma_xx[1] - &sys.d * &pc.rho_t[1] - &q.eta1 * c2u - &q.eta2 * c2v;
    Ok([manifold_reduce(&s1, sys, &q, m)?, manifold_reduce(&s2, sys, &q, m)?])
}

/// Decides invariance of the system under `q` on the given manifold.
pub fn invariance_residuals(
    sys: &RDSystem,
    q: &SymmetryOperator,
    m: &ManifoldSpec,
    verifier: &Verifier,
) -> Result<ResidualReport, EngineError> {
    let [r1, r2] = reduced_invariance(sys, q, m, verifier.config.normalize)?;
    let eqs = vec![("invariance.u".to_string(), r1), ("invariance.v".to_string(), r2)];
    let res = verifier.check(&eqs, salt_of(m.kind.name()));
    Ok(ResidualReport::new("invariance", Some(m.kind), res, verifier))
}

fn d(e: &Expr, s: &str) -> Expr {
    differentiate(e, s)
}

/// The classical determining equations for a Lie symmetry with `d != 1`.
pub fn lie_residuals(
    sys: &RDSystem,
    q: &SymmetryOperator,
    side: &[SideConstraint],
    verifier: &Verifier,
) -> Result<ResidualReport, EngineError> {
    if sys.d_is_one() {
        return Err(EngineError::UnitDiffusivity);
    }
    let (xi0, xi1, e1, e2) = (&q.xi0, &q.xi1, &q.eta1, &q.eta2);
    let (c1, c2, dd) = (&sys.c1, &sys.c2, &sys.d);
    let two = Expr::int(2);
    let xi1_x2 = &two * d(xi1, "x");
    let eqs: Vec<(&str, Expr)> = vec![
        ("xi0_x", d(xi0, "x")),
        ("xi0_u", d(xi0, "u")),
        ("xi0_v", d(xi0, "v")),
        ("xi1_u", d(xi1, "u")),
        ("xi1_v", d(xi1, "v")),
        ("eta1_v", d(e1, "v")),
        ("eta2_u", d(e2, "u")),
        ("eta1_uu", d(&d(e1, "u"), "u")),
        ("eta2_vv", d(&d(e2, "v"), "v")),
        ("time_scaling", &xi1_x2 - d(xi0, "t")),
        ("eta1_xu", &two * d(&d(e1, "x"), "u") + d(xi1, "t")),
        ("eta2_xv", &two * d(&d(e2, "x"), "v") + dd * d(xi1, "t")),
        (
            "reaction_u",
            e1 * d(c1, "u") + e2 * d(c1, "v") + (&xi1_x2 - d(e1, "u")) * c1
                - (d(&d(e1, "x"), "x") - d(e1, "t")),
        ),
        (
            "reaction_v",
            e1 * d(c2, "u") + e2 * d(c2, "v") + (&xi1_x2 - d(e2, "v")) * c2
                - (d(&d(e2, "x"), "x") - dd * d(e2, "t")),
        ),
    ];
    let eqs: Vec<(String, Expr)> =
        eqs.into_iter().map(|(n, e)| (n.to_string(), apply_side_constraints(&e, side))).collect();
    let res = verifier.check(&eqs, salt_of("lie"));
    Ok(ResidualReport::new("lie", Some(ManifoldKind::M), res, verifier))
}

/// Determining equations for first-type conditional symmetry specialized to
/// the linear coefficient form.
pub fn structured_residuals(
    sys: &RDSystem,
    form: &LinearCoefficientForm,
    side: &[SideConstraint],
    verifier: &Verifier,
) -> Result<ResidualReport, EngineError> {
    if sys.d_is_one() {
        return Err(EngineError::UnitDiffusivity);
    }
    if form.xi0.is_zero() {
        return Err(EngineError::DegenerateOperator);
    }
    let f = form;
    let (c1, c2, dd) = (&sys.c1, &sys.c2, &sys.d);
    let (u, v) = (Expr::sym("u"), Expr::sym("v"));
    let two = Expr::int(2);
    let xi1_x2 = &two * d(&f.xi1, "x");
    let eta1 = &f.r1 * &u + &f.p1;
    let eta2 = &f.q * &u + &f.r2 * &v + &f.p2;
    let xx = |e: &Expr| d(&d(e, "x"), "x");
    let eqs: Vec<(&str, Expr)> = vec![
        ("q_transport", &two * &f.xi0 * d(&f.q, "x") + &f.xi1 * (dd - 1) * &f.q),
        ("r1_x", &two * d(&f.r1, "x") + d(&f.xi1, "t")),
        ("r2_x", &two * d(&f.r2, "x") + dd * d(&f.xi1, "t")),
        ("time_scaling", &xi1_x2 - d(&f.xi0, "t")),
        (
            "reaction_u",
            &eta1 * d(c1, "u") + &eta2 * d(c1, "v") + (&xi1_x2 - &f.r1) * c1
                - ((xx(&f.r1) - d(&f.r1, "t")) * &u + xx(&f.p1) - d(&f.p1, "t")),
        ),
        (
            "reaction_v",
            &eta1 * d(c2, "u") + &eta2 * d(c2, "v") + (&xi1_x2 - &f.r2) * c2
                - (&f.q * c1
                    + &eta1 * &f.q * (1 - dd) / &f.xi0
                    + (xx(&f.r2) - dd * d(&f.r2, "t")) * &v
                    + (xx(&f.q) - dd * d(&f.q, "t")) * &u
                    + xx(&f.p2)
                    - dd * d(&f.p2, "t")),
        ),
    ];
    let eqs: Vec<(String, Expr)> =
        eqs.into_iter().map(|(n, e)| (n.to_string(), apply_side_constraints(&e, side))).collect();
    let res = verifier.check(&eqs, salt_of("structured"));
    Ok(ResidualReport::new("structured", None, res, verifier))
}

/// True when `d eta2 / du` does not vanish identically.
pub fn is_purely_conditional(q: &SymmetryOperator, verifier: &Verifier) -> bool {
    let e = differentiate(&q.eta2, "u");
    !e.is_zero() && !verifier.is_zero(&e, salt_of("eta2_u"))
}

/// `c1 Q1 + c2 X` for nonzero constants.
pub fn combine_with_lie_tail(
    q1: &SymmetryOperator,
    x: &LieTailOperator,
    c1: &Expr,
    c2: &Expr,
) -> Result<SymmetryOperator, EngineError> {
    for (c, n) in [(c1, "c1"), (c2, "c2")] {
        if !c.is_constant() || c.is_zero() {
            return Err(EngineError::Precondition(format!("{} must be a nonzero constant", n)));
        }
    }
    Ok(q1.scaled(c1).plus(&x.to_operator().scaled(c2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn m1() -> ManifoldSpec {
        ManifoldSpec::new(ManifoldKind::M1U)
    }

    fn case5_system() -> RDSystem {
        RDSystem::parse("2", "u^2 - 2*v", "u*(u^2 - 2*v) + 1 - u").unwrap()
    }

    #[test]
    fn translation_in_x_is_lie() {
        let sys = RDSystem::parse("3", "u*f(u*v)", "v^2 - g(u)").unwrap();
        let q = SymmetryOperator::parse("0", "1", "0", "0").unwrap();
        let v = Verifier::default();
        let rep = invariance_residuals(&sys, &q, &ManifoldSpec::new(ManifoldKind::M), &v).unwrap();
        assert_eq!(rep.verdict, Verdict::ProvedZero);
        assert!(lie_residuals(&sys, &q, &[], &v).unwrap().passed());
    }

    #[test]
    fn v_scaling_on_a_linear_in_v_system_is_lie() {
        let sys = RDSystem::parse("d", "f(u)", "v*g(u)").unwrap();
        let q = SymmetryOperator::parse("0", "0", "0", "v").unwrap();
        let v = Verifier::default().with_param("d", 2.0);
        assert!(lie_residuals(&sys, &q, &[], &v).unwrap().passed());
        let rep = invariance_residuals(&sys, &q, &ManifoldSpec::new(ManifoldKind::M), &v).unwrap();
        assert!(rep.passed());
    }

    #[test]
    fn nonsymmetry_fails() {
        let sys = RDSystem::parse("2", "u*v", "u").unwrap();
        let q = SymmetryOperator::parse("1", "0", "u^2", "0").unwrap();
        let v = Verifier::default();
        assert!(!invariance_residuals(&sys, &q, &ManifoldSpec::new(ManifoldKind::M), &v).unwrap().passed());
        let lie = lie_residuals(&sys, &q, &[], &v).unwrap();
        assert!(lie.failing().any(|e| e.id == "eta1_uu"));
    }

    #[test]
    fn conditional_operator_on_first_manifold() {
        // eta2 = u: with C2 built from the reaction balance this holds on M1-u only.
        let sys = RDSystem::parse("2", "u*(1 - v)", "-u - v + u*v").unwrap();
        let q = SymmetryOperator::parse("1", "0", "0", "u").unwrap();
        let v = Verifier::default();
        let on_m = invariance_residuals(&sys, &q, &ManifoldSpec::new(ManifoldKind::M), &v).unwrap();
        assert!(!on_m.passed());
        let form = LinearCoefficientForm::from_operator(&q).unwrap();
        let st = structured_residuals(&sys, &form, &[], &v).unwrap();
        let direct = invariance_residuals(&sys, &q, &m1(), &v).unwrap();
        assert_eq!(st.passed(), direct.passed());
    }

    #[test]
    fn catalog_case_and_perturbation() {
        let sys = case5_system();
        let v = Verifier::default();
        let q = SymmetryOperator::parse("1", "0", "1", "u").unwrap();
        let ok = invariance_residuals(&sys, &q, &m1(), &v).unwrap();
        assert!(ok.passed(), "{:?}", ok);
        let on_m = invariance_residuals(&sys, &q, &ManifoldSpec::new(ManifoldKind::M), &v).unwrap();
        assert!(!on_m.passed());
        let bad_q = SymmetryOperator::parse("1", "0", "1", "u + 1").unwrap();
        assert!(!invariance_residuals(&sys, &bad_q, &m1(), &v).unwrap().passed());
        for op in [&q, &bad_q] {
            let form = LinearCoefficientForm::from_operator(op).unwrap();
            assert_eq!(
                structured_residuals(&sys, &form, &[], &v).unwrap().passed(),
                invariance_residuals(&sys, op, &m1(), &v).unwrap().passed()
            );
        }
    }

    #[test]
    fn unit_diffusivity_is_refused() {
        let sys = RDSystem::parse("1", "u", "v").unwrap();
        let q = SymmetryOperator::parse("1", "0", "0", "u").unwrap();
        assert_eq!(
            invariance_residuals(&sys, &q, &m1(), &Verifier::default()),
            Err(EngineError::UnitDiffusivity)
        );
    }

    #[test]
    fn purely_conditional_flag() {
        let v = Verifier::default();
        assert!(is_purely_conditional(&SymmetryOperator::parse("1", "0", "0", "exp(x)*u").unwrap(), &v));
        assert!(!is_purely_conditional(&SymmetryOperator::parse("1", "0", "u", "v + t").unwrap(), &v));
    }

    #[test]
    fn lie_tail_combination() {
        let q = SymmetryOperator::parse("1", "0", "0", "u").unwrap();
        let x = LieTailOperator::new(Expr::one(), Expr::zero()).unwrap();
        let c = combine_with_lie_tail(&q, &x, &Expr::int(2), &Expr::int(3)).unwrap();
        assert_eq!(c.eta2, p("2*u + 3*v"));
        assert!(combine_with_lie_tail(&q, &x, &Expr::int(1), &Expr::zero()).is_err());
    }

    #[test]
    fn report_serializes() {
        let sys = RDSystem::parse("2", "u", "v").unwrap();
        let q = SymmetryOperator::parse("1", "0", "0", "0").unwrap();
        let rep = invariance_residuals(&sys, &q, &m1(), &Verifier::default()).unwrap();
        let js = serde_json::to_value(&rep).unwrap();
        assert_eq!(js["manifold"], "M1-u");
        assert_eq!(js["verdict"], "proved-zero");
        assert_eq!(js["normalized"], false);
    }
}
