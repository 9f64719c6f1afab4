//! Necessary conditions for two systems to be related by a local substitution:
//! proportional diffusivities and reaction terms that differ only by
//! `a1 u + a2` and `a3 v + a4` after the candidate map.

use serde::{Deserialize, Serialize};

use super::{FormPreservingMap, MapCheckConfig, MapSet};
use crate::engine::{RDSystem, SamplingConfig, Verifier};
use crate::expr::{collect, differentiate, evaluate, expand, Binding, Expr, Monomial};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub proportional_diffusivities: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_set: Option<MapSet>,
    /// `C1` of the second system minus the mapped `C1` of the first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_difference: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_difference: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_affine: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_affine: Option<bool>,
    /// No obstruction found: the conditions are necessary, not sufficient.
    pub equivalent: bool,
    pub message: String,
}

impl EquivalenceReport {
    fn rejected(proportional: bool, message: String) -> Self {
        EquivalenceReport {
            proportional_diffusivities: proportional,
            map_set: None,
            first_difference: None,
            second_difference: None,
            first_affine: None,
            second_affine: None,
            equivalent: false,
            message,
        }
    }
}

fn same(a: &Expr, b: &Expr, params: &Binding) -> Option<bool> {
    if expand(&(a - b)).is_zero() {
        return Some(true);
    }
    match (evaluate(a, params), evaluate(b, params)) {
        (Ok(x), Ok(y)) => Some((x - y).abs() <= 1e-12 * (1.0 + x.abs())),
        _ => None,
    }
}

/// Part of `diff` outside `span{1, keep}`; `None` when `diff` is not
/// polynomial in `(u, v)`.
fn offending_part(diff: &Expr, keep: &str) -> Option<Expr> {
    let c = collect(&expand(diff), &["u", "v"]).ok()?;
    let allowed = [Monomial::one(), Monomial(vec![(keep.to_string(), 1)])];
    let mut bad = Vec::new();
    for (m, coef) in c.iter() {
        if !allowed.contains(m) && !expand(coef).is_zero() {
            bad.push(coef * m.to_expr());
        }
    }
    Some(Expr::sum(bad))
}

/// Whether `diff` is affine in `keep` and free of the other field.
fn affine_in(diff: &Expr, keep: &str, other: &str, verifier: &Verifier) -> bool {
    let d2 = differentiate(&differentiate(diff, keep), keep);
    let d_other = differentiate(diff, other);
    verifier.is_zero(&d2, 0xAFF1) && verifier.is_zero(&d_other, 0xAFF2)
}

/// Checks the obstruction to local equivalence of `a` and `b`. Without a
/// candidate the identity (equal ratios) or the swap (reciprocal ratios) is used.
pub fn check_equivalence(
    a: &RDSystem,
    b: &RDSystem,
    candidate: Option<&FormPreservingMap>,
    cfg: &MapCheckConfig,
) -> EquivalenceReport {
    let mut params = Binding::new();
    for (k, v) in &cfg.params {
        params.set(k, *v);
    }
    let equal = same(&a.d, &b.d, &params);
    let reciprocal = same(&a.d.recip(), &b.d, &params);
    let set = match (equal, reciprocal) {
        (Some(true), _) => MapSet::I,
        (_, Some(true)) => MapSet::II,
        (Some(false), Some(false)) => {
            return EquivalenceReport::rejected(
                false,
                format!("not equivalent: diffusivity ratio {} is neither {} nor its reciprocal", b.d, a.d),
            )
        }
        _ => {
            return EquivalenceReport::rejected(false, "diffusivity ratios could not be compared".into());
        }
    };
    let map = match candidate {
        Some(m) => m.clone(),
        None if set == MapSet::I => FormPreservingMap::identity(),
        None => FormPreservingMap::swap(&a.d),
    };
    if map.set != set {
        return EquivalenceReport::rejected(true, format!("candidate map is of set {:?}, ratios require set {:?}", map.set, set));
    }
    let mapped = match map.apply(a, cfg) {
        Ok(s) => s,
        Err(e) => return EquivalenceReport::rejected(true, format!("candidate map fails: {}", e)),
    };
    let diff1 = &b.c1 - &mapped.c1;
    let diff2 = &b.c2 - &mapped.c2;
    let mut verifier = Verifier::new(SamplingConfig { seed: cfg.seed, ..Default::default() });
    for (k, v) in &cfg.params {
        verifier = verifier.with_param(k, *v);
    }
    for (k, f) in &cfg.functions {
        verifier = verifier.with_function(k, f.clone());
    }
    let aff1 = affine_in(&diff1, "u", "v", &verifier);
    let aff2 = affine_in(&diff2, "v", "u", &verifier);
    let message = if aff1 && aff2 {
        "no obstruction: reaction terms differ by a1*u + a2 and a3*v + a4".to_string()
    } else {
        let (diff, keep, which) = if aff1 { (&diff2, "v", "second") } else { (&diff1, "u", "first") };
        match offending_part(diff, keep) {
            Some(term) if !term.is_zero() => format!("not equivalent: residual term {} cannot be removed", term),
            _ => format!("not equivalent: the {} reaction terms differ by more than an affine term", which),
        }
    };
    EquivalenceReport {
        proportional_diffusivities: true,
        map_set: Some(set),
        first_difference: Some(expand(&diff1).to_string()),
        second_difference: Some(expand(&diff2).to_string()),
        first_affine: Some(aff1),
        second_affine: Some(aff2),
        equivalent: aff1 && aff2,
        message,
    }
}
