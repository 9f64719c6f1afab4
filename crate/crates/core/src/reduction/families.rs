//! Closed-form profiles and exact solutions of the reduced systems.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{number, power_law_system, predator_prey_system, linear_interaction_system, Orientation, ReductionError};
use crate::engine::RDSystem;
use crate::expr::{evaluate, Binding, Expr};

const EXACT: f64 = 1e-14;

/// Branch of `psi'' = (beta + alpha k d) psi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Exponential,
    Trigonometric,
    Linear,
}

impl Branch {
    pub fn of(mu2: f64) -> Branch {
        if mu2.abs() <= 1e-12 {
            Branch::Linear
        } else if mu2 > 0.0 {
            Branch::Exponential
        } else {
            Branch::Trigonometric
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k: f64,
    pub d: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl PowerLawParams {
    /// `beta + alpha k d`, the coefficient of the `psi` equation.
    pub fn mu2(&self) -> f64 {
        self.beta + self.alpha * self.k * self.d
    }

    fn k_expr(&self) -> Expr {
        if (self.k - 1.0 / 3.0).abs() < EXACT {
            Expr::rational(1, 3)
        } else {
            number(self.k)
        }
    }
}

/// `phi` as a closed form in `x`, or as `gamma ∫_0^x (x - s) psi(s)^p ds + c3 x + c4`.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    Closed(Expr),
    Quadrature { psi: Expr, exponent: f64, gamma: f64, c3: f64, c4: f64 },
}

impl Profile {
    pub fn expr(&self) -> Option<&Expr> {
        match self {
            Profile::Closed(e) => Some(e),
            Profile::Quadrature { .. } => None,
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64, ReductionError> {
        match self {
            Profile::Closed(e) => evaluate(e, &Binding::new().with("x", x)).map_err(|e| ReductionError::Domain(e.to_string())),
            Profile::Quadrature { psi, exponent, gamma, c3, c4 } => {
                let mut err = None;
                let integrand = |s: f64| {
                    let p = evaluate(psi, &Binding::new().with("x", s)).unwrap_or(f64::NAN);
                    let v = (x - s) * p.powf(*exponent);
                    if !v.is_finite() && err.is_none() {
                        err = Some(s);
                    }
                    v
                };
                let integral = adaptive_simpson(integrand, 0.0, x, 1e-10);
                if let Some(s) = err {
                    return Err(ReductionError::Domain(format!("psi^{} is not real at x = {}", exponent, s)));
                }
                Ok(gamma * integral + c3 * x + c4)
            }
        }
    }
}

/// Adaptive Simpson quadrature on `[a, b]` with absolute tolerance `tol`.
pub(crate) fn adaptive_simpson(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol || !delta.is_finite() {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(&mut f, a, b, fa, fm, fb, whole, tol, 48)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerLawSolution {
    pub branch: Branch,
    pub psi: Expr,
    pub phi: Profile,
}

/// Profiles of `phi'' = gamma psi^{1/k}`, `psi'' = (beta + alpha k d) psi`.
/// Closed forms exist for `k = 1/3` and `k = 1`; other `k` use quadrature.
pub fn power_law_family(p: &PowerLawParams, branch: Branch) -> Result<PowerLawSolution, ReductionError> {
    if p.k == 0.0 {
        return Err(ReductionError::ConstraintViolation("k != 0".into()));
    }
    let mu2 = p.mu2();
    let expected = Branch::of(mu2);
    if expected != branch {
        return Err(ReductionError::BranchMismatch { requested: branch, expected, value: mu2 });
    }
    let x = Expr::sym("x");
    let (c1, c2) = (number(p.c1), number(p.c2));
    let rate = number(mu2.abs().sqrt());
    let psi = match branch {
        Branch::Exponential => &c1 * Expr::exp(&rate * &x) + &c2 * Expr::exp(-(&rate * &x)),
        Branch::Trigonometric => &c1 * Expr::cos(&rate * &x) + &c2 * Expr::sin(&rate * &x),
        Branch::Linear => &c1 * &x + &c2,
    };
    let affine = number(p.c3) * &x + number(p.c4);
    let g = p.gamma;
    let r2 = mu2.abs();
    let closed = if (p.k - 1.0).abs() < EXACT {
        Some(match branch {
            Branch::Exponential => number(g / r2) * &psi,
            Branch::Trigonometric => number(-g / r2) * &psi,
            Branch::Linear => number(g * p.c1 / 6.0) * x.powi(3) + number(g * p.c2 / 2.0) * x.powi(2),
        })
    } else if (p.k - 1.0 / 3.0).abs() < EXACT {
        Some(match branch {
            Branch::Exponential => {
                let e = |m: i64| Expr::exp(number(m as f64 * r2.sqrt()) * &x);
                number(g * p.c1.powi(3) / (9.0 * r2)) * e(3)
                    + number(3.0 * g * p.c1 * p.c1 * p.c2 / r2) * e(1)
                    + number(3.0 * g * p.c1 * p.c2 * p.c2 / r2) * e(-1)
                    + number(g * p.c2.powi(3) / (9.0 * r2)) * e(-3)
            }
            Branch::Trigonometric => {
                // c1 cos + c2 sin = R cos(nu x - theta)
                let radius = p.c1.hypot(p.c2);
                let theta = p.c2.atan2(p.c1);
                let c = Expr::cos(&rate * &x - number(theta));
                number(-g * radius.powi(3) / (9.0 * r2)) * (c.powi(2) + 6) * c
            }
            Branch::Linear if p.c1 != 0.0 => number(g / (20.0 * p.c1 * p.c1)) * (&c1 * &x + &c2).powi(5),
            Branch::Linear => number(g * p.c2.powi(3) / 2.0) * x.powi(2),
        })
    } else {
        None
    };
    let phi = match closed {
        Some(e) => Profile::Closed(e + affine),
        None => Profile::Quadrature { psi: psi.clone(), exponent: 1.0 / p.k, gamma: g, c3: p.c3, c4: p.c4 },
    };
    Ok(PowerLawSolution { branch, psi, phi })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileBranch {
    Tan,
    Tanh,
}

/// Parameters of the profile with `psi = -delta`; `alpha` is forced to
/// `a1 / (d (k - 1) + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub a1: f64,
    pub b: f64,
    pub delta: f64,
    pub d: f64,
    pub k: f64,
    /// Integration constant of the first-order equation.
    #[serde(default)]
    pub shift: f64,
    /// Sign of the square root, `±1`; it reflects `x`.
    #[serde(default = "plus_one")]
    pub sign: f64,
}

fn plus_one() -> f64 {
    1.0
}

impl ProfileParams {
    pub fn alpha(&self) -> Result<f64, ReductionError> {
        let den = self.d * (self.k - 1.0) + 1.0;
        if den.abs() < 1e-12 {
            return Err(ReductionError::ConstraintViolation("d (k - 1) + 1 != 0".into()));
        }
        Ok(self.a1 / den)
    }

    /// `(a1 - alpha)(2 - k) / (2 b delta)`.
    pub fn beta(&self) -> Result<f64, ReductionError> {
        Ok((self.a1 - self.alpha()?) * (2.0 - self.k) / (2.0 * self.b * self.delta))
    }
}

/// Solution of `phi' = ±sqrt((alpha - a1) phi^2 + 2 b delta phi^{2-k} / (2 - k))`:
/// `(beta (tan^2 + 1))^{-1/k}` for `a1 > alpha`, `(-beta (tanh^2 - 1))^{-1/k}`
/// for `a1 < alpha`, real only for `beta > 0`, both at argument `k sqrt(|a1 - alpha|) / 2 (±x + shift)`.
/// `k = 2` turns the equation into a different (logarithmic) one and is excluded.
pub fn profile_family(p: &ProfileParams) -> Result<(ProfileBranch, Expr), ReductionError> {
    if (p.k - 2.0).abs() < 1e-12 {
        return Err(ReductionError::ConstraintViolation("k != 2".into()));
    }
    if p.k == 0.0 {
        return Err(ReductionError::ConstraintViolation("k != 0".into()));
    }
    if p.delta == 0.0 || p.b == 0.0 {
        return Err(ReductionError::ConstraintViolation("b delta != 0".into()));
    }
    let alpha = p.alpha()?;
    let gap = p.a1 - alpha;
    if gap.abs() < 1e-12 {
        return Err(ReductionError::ConstraintViolation("a1 != alpha".into()));
    }
    let beta = p.beta()?;
    let branch = if gap > 0.0 { ProfileBranch::Tan } else { ProfileBranch::Tanh };
    let x = Expr::sym("x");
    let arg = number(p.k * gap.abs().sqrt() / 2.0) * (number(p.sign.signum()) * &x + number(p.shift));
    let inv_k = number(-1.0 / p.k);
    if beta <= 0.0 {
        return Err(ReductionError::ConstraintViolation("beta = (a1-alpha)(2-k)/(2 b delta) > 0".into()));
    }
    let inner = match branch {
        ProfileBranch::Tan => Expr::tan(arg).powi(2) + 1,
        ProfileBranch::Tanh => 1 - Expr::tanh(arg).powi(2),
    };
    let phi = Expr::pow(&(number(beta) * inner), &inv_k);
    Ok((branch, phi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    PredatorPrey,
    TanProfile,
    TanhProfile,
    Cosine,
    Exponential,
    Linear,
}

impl Family {
    pub fn id(self) -> &'static str {
        match self {
            Family::PredatorPrey => "predator-prey",
            Family::TanProfile => "tan-profile",
            Family::TanhProfile => "tanh-profile",
            Family::Cosine => "cosine",
            Family::Exponential => "exponential",
            Family::Linear => "linear",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub t: (f64, f64),
    pub x: (f64, f64),
    /// Interval length carrying zero-flux boundaries, when there is one.
    pub length: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub holds: bool,
}

#[derive(Clone, Debug)]
pub struct ClosedFormSolution {
    pub family: Family,
    pub u: Expr,
    pub v: Expr,
    pub params: BTreeMap<String, f64>,
    pub domain: Domain,
    pub constraints: Vec<ConstraintCheck>,
    /// The system the solution satisfies, with numeric parameters.
    pub system: RDSystem,
    pub orientation: Orientation,
}

impl ClosedFormSolution {
    pub fn valid(&self) -> bool {
        self.constraints.iter().all(|c| c.holds)
    }

    pub fn eval(&self, t: f64, x: f64) -> Result<(f64, f64), ReductionError> {
        let b = Binding::new().with("t", t).with("x", x);
        let ev = |e: &Expr| evaluate(e, &b).map_err(|e| ReductionError::Domain(e.to_string()));
        Ok((ev(&self.u)?, ev(&self.v)?))
    }

    /// The same solution seen through `v → -v`.
    pub fn negate_v(&self) -> Result<ClosedFormSolution, ReductionError> {
        Ok(ClosedFormSolution {
            v: -self.v.clone(),
            system: super::negate_v(&self.system)?,
            orientation: self.orientation.flipped(),
            ..self.clone()
        })
    }
}

/// Parameters of the predator-prey solution; `alpha`, `a2`, `beta` and the
/// interval length are derived.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredatorPreyParams {
    pub k: f64,
    pub delta: f64,
    pub d: f64,
    pub a1: f64,
    pub b: f64,
    #[serde(default = "one_u32")]
    pub j: u32,
}

fn one_u32() -> u32 {
    1
}

impl Default for PredatorPreyParams {
    /// The reference parameter set `k = 0.5, delta = 6, d = 4, a1 = 5, b = 3`.
    fn default() -> Self {
        PredatorPreyParams { k: 0.5, delta: 6.0, d: 4.0, a1: 5.0, b: 3.0, j: 1 }
    }
}

impl PredatorPreyParams {
    #[cfg(test)]
    fn profile(&self) -> ProfileParams {
        ProfileParams { a1: self.a1, b: self.b, delta: self.delta, d: self.d, k: self.k, shift: 0.0, sign: 1.0 }
    }

    pub fn alpha(&self) -> f64 {
        self.a1 / (self.d * (self.k - 1.0) + 1.0)
    }

    pub fn a2(&self) -> f64 {
        self.alpha() * (1.0 - self.d) - self.a1
    }

    pub fn beta(&self) -> f64 {
        (self.a1 - self.alpha()) * (2.0 - self.k) / (2.0 * self.b * self.delta)
    }

    /// `((2 - k)(a1 - alpha) / (2 b))^{1/(1-k)}`.
    pub fn delta_bound(&self) -> f64 {
        ((2.0 - self.k) * (self.a1 - self.alpha()) / (2.0 * self.b)).powf(1.0 / (1.0 - self.k))
    }

    /// `2 pi j / (k sqrt(a1 - alpha))`.
    pub fn length(&self) -> f64 {
        2.0 * PI * self.j as f64 / (self.k * (self.a1 - self.alpha()).sqrt())
    }

    pub fn constraints(&self) -> PositivityConstraints {
        PositivityConstraints::check(self)
    }

    fn map(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for (k, v) in [
            ("k", self.k),
            ("delta", self.delta),
            ("d", self.d),
            ("a1", self.a1),
            ("b", self.b),
            ("j", self.j as f64),
            ("alpha", self.alpha()),
            ("a2", self.a2()),
            ("beta", self.beta()),
        ] {
            m.insert(k.to_string(), v);
        }
        m
    }
}

/// Conditions for the predator-prey solution to be non-negative and bounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityConstraints {
    pub checks: Vec<ConstraintCheck>,
}

impl PositivityConstraints {
    pub const K_RANGE: &'static str = "0 < k < 1 - 1/d";
    pub const DELTA_RANGE: &'static str = "0 < delta <= ((2-k)(a1-alpha)/(2b))^(1/(1-k))";
    pub const ALPHA: &'static str = "alpha = a1/(d(k-1)+1) < 1";

    pub fn check(p: &PredatorPreyParams) -> PositivityConstraints {
        let den = p.d * (p.k - 1.0) + 1.0;
        let alpha = p.alpha();
        let bound = p.delta_bound();
        let checks = vec![
            ConstraintCheck { name: Self::K_RANGE.into(), holds: p.k > 0.0 && p.k < 1.0 - 1.0 / p.d },
            ConstraintCheck {
                name: Self::DELTA_RANGE.into(),
                holds: p.delta > 0.0 && bound.is_finite() && p.delta <= bound * (1.0 + 1e-12),
            },
            ConstraintCheck { name: Self::ALPHA.into(), holds: den != 0.0 && alpha.is_finite() && alpha < 1.0 },
        ];
        PositivityConstraints { checks }
    }

    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn first_violation(&self) -> Option<&str> {
        self.checks.iter().find(|c| !c.holds).map(|c| c.name.as_str())
    }
}

/// `u = (beta (tan^2(kappa x) + 1))^{-1/k} e^{alpha t}`, `v = delta e^{alpha k t} - u`
/// with `kappa = k sqrt(a1 - alpha) / 2`, on `[0, l]` with zero-flux ends.
/// `u` is stored as `beta^{-1/k} ((1 + cos(2 kappa x)) / 2)^{1/k} e^{alpha t}`,
/// which is the same function without the poles of `tan`.
pub fn predator_prey_solution(p: &PredatorPreyParams) -> Result<ClosedFormSolution, ReductionError> {
    let constraints = p.constraints();
    if let Some(name) = constraints.first_violation() {
        let detail = match name {
            PositivityConstraints::DELTA_RANGE => format!(" (delta = {} exceeds bound {:.4})", p.delta, p.delta_bound()),
            PositivityConstraints::K_RANGE => format!(" (k = {}, 1 - 1/d = {:.4})", p.k, 1.0 - 1.0 / p.d),
            _ => format!(" (alpha = {:.4})", p.alpha()),
        };
        return Err(ReductionError::ConstraintViolation(format!("{}{}", name, detail)));
    }
    if p.b <= 0.0 || p.j == 0 {
        return Err(ReductionError::ConstraintViolation("b > 0 and j >= 1".into()));
    }
    let alpha = p.alpha();
    if p.a1 <= alpha {
        return Err(ReductionError::ConstraintViolation("a1 > alpha".into()));
    }
    let (x, t) = (Expr::sym("x"), Expr::sym("t"));
    let kappa = p.k * (p.a1 - alpha).sqrt() / 2.0;
    let inv_k = number(1.0 / p.k);
    let cos2 = (1 + Expr::cos(number(2.0 * kappa) * &x)) / 2;
    let u = number(p.beta().powf(-1.0 / p.k)) * Expr::pow(&cos2, &inv_k) * Expr::exp(number(alpha) * &t);
    let v = number(p.delta) * Expr::exp(number(alpha * p.k) * &t) - &u;
    let system = predator_prey_system(&number(alpha), &number(p.a1), &number(p.b), &number(p.k), &number(p.d))?;
    let l = p.length();
    Ok(ClosedFormSolution {
        family: Family::PredatorPrey,
        u,
        v,
        params: p.map(),
        domain: Domain { t: (0.0, 1.0), x: (0.0, l), length: Some(l) },
        constraints: constraints.checks,
        system,
        orientation: Orientation::NegatedV,
    })
}

/// `u = phi e^{alpha t}`, `v = -delta e^{alpha k t} + phi e^{alpha t}` for the
/// linear-interaction system, with `phi` from [`profile_family`].
pub fn profile_solution(p: &ProfileParams) -> Result<ClosedFormSolution, ReductionError> {
    let (branch, phi) = profile_family(p)?;
    let alpha = p.alpha()?;
    let t = Expr::sym("t");
    let u = phi * Expr::exp(number(alpha) * &t);
    let v = number(-p.delta) * Expr::exp(number(alpha * p.k) * &t) + &u;
    let system = linear_interaction_system(&number(alpha), &number(p.a1), &number(p.b), &number(p.k), &number(p.d))?;
    let mut params = BTreeMap::new();
    for (k, v) in [("a1", p.a1), ("b", p.b), ("delta", p.delta), ("d", p.d), ("k", p.k), ("shift", p.shift), ("alpha", alpha)] {
        params.insert(k.to_string(), v);
    }
    params.insert("a2".into(), alpha * (1.0 - p.d) - p.a1);
    params.insert("beta".into(), p.beta()?);
    let gap = (p.a1 - alpha).abs().sqrt() * p.k / 2.0;
    let x_max = match branch {
        // stay inside one period of tan
        ProfileBranch::Tan => (PI / 2.0 / gap).min(1.0) * 0.9,
        ProfileBranch::Tanh => 1.0,
    };
    Ok(ClosedFormSolution {
        family: if branch == ProfileBranch::Tan { Family::TanProfile } else { Family::TanhProfile },
        u,
        v,
        params,
        domain: Domain { t: (0.0, 1.0), x: (0.0, x_max), length: None },
        constraints: Vec::new(),
        system,
        orientation: Orientation::Direct,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub d: f64,
    pub c1: f64,
    #[serde(default = "one_u32")]
    pub j: u32,
}

impl Default for CosineParams {
    fn default() -> Self {
        CosineParams { alpha: -1.0, beta: 0.2, gamma: 1.0, d: 2.0, c1: 1.0, j: 1 }
    }
}

impl CosineParams {
    /// `nu = sqrt(-(beta + alpha d / 3))`.
    pub fn nu(&self) -> f64 {
        (-(self.beta + self.alpha * self.d / 3.0)).sqrt()
    }

    fn power_law(&self) -> PowerLawParams {
        PowerLawParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            k: 1.0 / 3.0,
            d: self.d,
            c1: self.c1,
            c2: 0.0,
            c3: 0.0,
            c4: 0.0,
        }
    }
}

/// `k = 1/3`, `psi = c1 cos(nu x)`, `c3 = c4 = 0`:
/// `u = -(gamma c1^3 / (9 nu^2)) (cos^2(nu x) + 6) cos(nu x) e^{alpha t}`,
/// `v = c1 cos(nu x) e^{alpha t / 3} + u`, zero flux at `x = 0` and `x = j pi / nu`.
pub fn cosine_solution(p: &CosineParams) -> Result<ClosedFormSolution, ReductionError> {
    if p.j == 0 {
        return Err(ReductionError::ConstraintViolation("j >= 1".into()));
    }
    let mut sol = power_law_solution(&p.power_law(), Branch::Trigonometric)?;
    let l = p.j as f64 * PI / p.nu();
    sol.domain = Domain { t: (0.0, 1.0), x: (0.0, l), length: Some(l) };
    sol.params.insert("j".into(), p.j as f64);
    sol.params.insert("nu".into(), p.nu());
    Ok(sol)
}

/// Full solution `u = phi e^{alpha t}`, `v = psi e^{k alpha t} + u` of the
/// power-law system, when `phi` has a closed form.
pub fn power_law_solution(p: &PowerLawParams, branch: Branch) -> Result<ClosedFormSolution, ReductionError> {
    let fam = power_law_family(p, branch)?;
    let phi = match fam.phi {
        Profile::Closed(e) => e,
        Profile::Quadrature { .. } => {
            return Err(ReductionError::Domain(format!("no closed form for phi at k = {}", p.k)));
        }
    };
    let k = p.k_expr();
    let t = Expr::sym("t");
    let alpha = number(p.alpha);
    let u = phi * Expr::exp(&alpha * &t);
    let v = fam.psi * Expr::exp(&k * &alpha * &t) + &u;
    let system = power_law_system(&alpha, &number(p.beta), &number(p.gamma), &k, &number(p.d))?;
    let mut params = BTreeMap::new();
    for (n, v) in [
        ("alpha", p.alpha),
        ("beta", p.beta),
        ("gamma", p.gamma),
        ("k", p.k),
        ("d", p.d),
        ("c1", p.c1),
        ("c2", p.c2),
        ("c3", p.c3),
        ("c4", p.c4),
    ] {
        params.insert(n.to_string(), v);
    }
    let family = match branch {
        Branch::Exponential => Family::Exponential,
        Branch::Trigonometric => Family::Cosine,
        Branch::Linear => Family::Linear,
    };
    let name = match branch {
        Branch::Exponential => "beta + alpha k d > 0",
        Branch::Trigonometric => "beta + alpha k d < 0",
        Branch::Linear => "beta + alpha k d = 0",
    };
    Ok(ClosedFormSolution {
        family,
        u,
        v,
        params,
        domain: Domain { t: (0.0, 1.0), x: (0.0, 1.0), length: None },
        constraints: vec![ConstraintCheck { name: name.into(), holds: true }],
        system,
        orientation: Orientation::Direct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::differentiate;

    fn dxx(e: &Expr) -> Expr {
        differentiate(&differentiate(e, "x"), "x")
    }

    fn at(e: &Expr, x: f64) -> f64 {
        evaluate(e, &Binding::new().with("x", x)).unwrap()
    }

    fn base(k: f64, beta: f64) -> PowerLawParams {
        PowerLawParams { alpha: -1.0, beta, gamma: 1.3, k, d: 2.0, c1: 0.8, c2: 0.4, c3: 0.2, c4: -0.1 }
    }

    #[test]
    fn cosine_profile_has_the_stated_form() {
        let p = PowerLawParams { c2: 0.0, c3: 0.0, c4: 0.0, ..base(1.0 / 3.0, 0.2) };
        let sol = power_law_family(&p, Branch::Trigonometric).unwrap();
        let nu2 = -p.mu2();
        let phi = sol.phi.expr().unwrap();
        for x in [0.0, 0.3, 1.1, 2.7] {
            let c = (nu2.sqrt() * x).cos();
            let want = -(p.gamma * p.c1.powi(3) / (9.0 * nu2)) * (c * c + 6.0) * c;
            assert!((at(phi, x) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn closed_profiles_solve_the_reduced_system() {
        for k in [1.0 / 3.0, 1.0] {
            for beta in [2.0, 0.2, 2.0 * k] {
                let p = base(k, beta);
                let branch = Branch::of(p.mu2());
                let sol = power_law_family(&p, branch).unwrap();
                let phi = sol.phi.expr().expect("closed form");
                for x in [0.1, 0.7, 1.3, 2.2] {
                    let psi = at(&sol.psi, x);
                    let lhs = at(&dxx(phi), x);
                    let rhs = p.gamma * psi.powi((1.0 / k).round() as i32);
                    assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()), "k={} {:?} x={}", k, branch, x);
                    let psi2 = at(&dxx(&sol.psi), x);
                    assert!((psi2 - p.mu2() * psi).abs() < 1e-10 * (1.0 + psi.abs()));
                }
            }
        }
    }

    #[test]
    fn degenerate_coefficient_gives_linear_psi() {
        let p = base(0.5, 1.0);
        assert_eq!(p.mu2(), 0.0);
        let sol = power_law_family(&p, Branch::Linear).unwrap();
        assert!((at(&sol.psi, 2.0) - (2.0 * p.c1 + p.c2)).abs() < 1e-15);
    }

    #[test]
    fn branch_mismatch_is_reported() {
        let p = base(0.5, 2.0);
        assert!(matches!(
            power_law_family(&p, Branch::Trigonometric),
            Err(ReductionError::BranchMismatch { expected: Branch::Exponential, .. })
        ));
    }

    #[test]
    fn quadrature_profile_for_general_k() {
        // psi > 0 on the exponential branch, k = 0.4 has no coded closed form.
        let p = PowerLawParams { c2: 0.5, ..base(0.4, 2.0) };
        let sol = power_law_family(&p, Branch::Exponential).unwrap();
        assert!(sol.phi.expr().is_none());
        assert!((sol.phi.eval(0.0).unwrap() - p.c4).abs() < 1e-14);
        // central second difference against gamma psi^{1/k}
        let h = 1e-3;
        for x in [0.3, 0.9] {
            let f = |y: f64| sol.phi.eval(y).unwrap();
            let second = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            let want = p.gamma * at(&sol.psi, x).powf(1.0 / p.k);
            assert!((second - want).abs() < 1e-5 * want.abs().max(1.0), "{} vs {}", second, want);
        }
    }

    #[test]
    fn simpson_integrates_polynomials_and_exponentials() {
        assert!((adaptive_simpson(|x| x.powi(4), 0.0, 2.0, 1e-12) - 6.4).abs() < 1e-10);
        assert!((adaptive_simpson(f64::exp, 0.0, 1.0, 1e-12) - (1f64.exp() - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn profile_family_branches() {
        let p = ProfileParams { a1: 5.0, b: 3.0, delta: 6.0, d: 4.0, k: 0.5, shift: 0.0, sign: 1.0 };
        assert_eq!(p.alpha().unwrap(), -5.0);
        assert_eq!(profile_family(&p).unwrap().0, ProfileBranch::Tan);
        // a1 < alpha: d (k - 1) + 1 in (0, 1) with a1 > 0
        let q = ProfileParams { a1: 1.0, d: 1.5, k: 0.5, b: -3.0, ..p };
        assert!(q.a1 < q.alpha().unwrap());
        assert_eq!(profile_family(&q).unwrap().0, ProfileBranch::Tanh);
        let r = ProfileParams { k: 2.0, ..p };
        assert!(matches!(profile_family(&r), Err(ReductionError::ConstraintViolation(m)) if m.contains("k != 2")));
    }

    #[test]
    fn profiles_satisfy_the_first_integral() {
        let tan = ProfileParams { a1: 5.0, b: 3.0, delta: 6.0, d: 4.0, k: 0.5, shift: 0.1, sign: -1.0 };
        let tanh = ProfileParams { a1: 1.0, b: -2.0, delta: 0.7, d: 1.5, k: 0.5, shift: 0.2, sign: 1.0 };
        for p in [tan, tanh] {
            let (_, phi) = profile_family(&p).unwrap();
            let alpha = p.alpha().unwrap();
            let dphi = differentiate(&phi, "x");
            for i in 0..200 {
                let x = -0.4 + 0.9 * i as f64 / 199.0;
                let (f, df) = (at(&phi, x), at(&dphi, x));
                let rhs = (alpha - p.a1) * f * f + 2.0 * p.b * p.delta / (2.0 - p.k) * f.powf(2.0 - p.k);
                assert!((df * df - rhs).abs() < 1e-9 * (1.0 + rhs.abs()), "x={} {} vs {}", x, df * df, rhs);
            }
        }
    }

    #[test]
    fn reference_parameters() {
        let p = PredatorPreyParams::default();
        assert_eq!(p.alpha(), -5.0);
        assert_eq!(p.a2(), 10.0);
        assert!((p.delta_bound() - 6.25).abs() < 1e-12);
        assert!((p.length() - 3.97384).abs() < 1e-5);
        assert!(p.constraints().all_hold());
        assert!(0.5 < 1.0 - 1.0 / p.d);
    }

    #[test]
    fn violations_are_named() {
        let p = PredatorPreyParams { delta: 7.0, ..Default::default() };
        let err = predator_prey_solution(&p).unwrap_err();
        assert_eq!(
            err,
            ReductionError::ConstraintViolation(format!("{} (delta = 7 exceeds bound 6.2500)", PositivityConstraints::DELTA_RANGE))
        );
        let p = PredatorPreyParams { k: 0.8, ..Default::default() };
        assert_eq!(p.constraints().first_violation(), Some(PositivityConstraints::K_RANGE));
    }

    #[test]
    fn stored_form_equals_the_tan_form() {
        let p = PredatorPreyParams::default();
        let sol = predator_prey_solution(&p).unwrap();
        let pp = p.profile();
        let (_, phi) = profile_family(&pp).unwrap();
        for x in [0.0, 0.5, 1.4, 2.5, 3.9] {
            let (u, v) = sol.eval(0.0, x).unwrap();
            assert!((u - at(&phi, x)).abs() < 1e-12, "x={}", x);
            assert!((u + v - p.delta).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_solution_domain() {
        let c = CosineParams::default();
        let sol = cosine_solution(&c).unwrap();
        assert_eq!(sol.family, Family::Cosine);
        assert!((sol.domain.length.unwrap() - PI / c.nu()).abs() < 1e-15);
        let bad = CosineParams { beta: 2.0, ..c };
        assert!(matches!(cosine_solution(&bad), Err(ReductionError::BranchMismatch { .. })));
    }
}
