use std::convert::Infallible;

use crate::expr::{
    differentiate, substitute_fixpoint, total_derivative, Expr, Independent, Node, Substitution,
};

use super::{EngineError, ManifoldSpec, RDSystem, SideConstraint, SymmetryOperator};

const MAX_CONSTRAINT_PASSES: usize = 32;

/// Rewrites every field derivative at or above a constraint's leading term by
/// the matching derivative of its right-hand side, to fixpoint.
pub fn apply_side_constraints(e: &Expr, constraints: &[SideConstraint]) -> Expr {
    if constraints.is_empty() {
        return e.clone();
    }
    let mut cur = e.clone();
    for _ in 0..MAX_CONSTRAINT_PASSES {
        let mut changed = false;
        let mut rule = |n: &Expr| -> Result<Option<Expr>, Infallible> {
            if let Node::Field { name, dt, dx } = n.node() {
                for c in constraints {
                    if **name == *c.field && *dt >= c.dt && *dx >= c.dx {
                        let mut r = c.rhs.clone();
                        for _ in 0..(dt - c.dt) {
                            r = differentiate(&r, "t");
                        }
                        for _ in 0..(dx - c.dx) {
                            r = differentiate(&r, "x");
                        }
                        changed = true;
                        return Ok(Some(r));
                    }
                }
            }
            Ok(None)
        };
        let next = match cur.rewrite(&mut rule) {
            Ok(n) => n,
            Err(never) => match never {},
        };
        cur = next;
        if !changed {
            break;
        }
    }
    cur
}

/// Eliminates jets on the manifold: `u_t` (and `v_t`) from the invariant
/// surface conditions with their `x` and `t` consequences, second
/// `x`-derivatives from the system, then field derivatives from the side
/// constraints.
pub fn manifold_reduce(
    e: &Expr,
    sys: &RDSystem,
    q: &SymmetryOperator,
    m: &ManifoldSpec,
) -> Result<Expr, EngineError> {
    let mut sub = Substitution::new()
        .bind("u_xx", Expr::sym("u_t") + &sys.c1)
        .bind("v_xx", &sys.d * Expr::sym("v_t") + &sys.c2);
    if (m.kind.uses_u() || m.kind.uses_v()) && q.xi0.is_zero() {
        return Err(EngineError::DegenerateOperator);
    }
    for (uses, w, eta) in [(m.kind.uses_u(), "u", &q.eta1), (m.kind.uses_v(), "v", &q.eta2)] {
        if !uses {
            continue;
        }
        let w_t = (eta - &q.xi1 * Expr::sym(&format!("{}_x", w))) / &q.xi0;
        let w_xt = total_derivative(&w_t, Independent::X)?;
        let w_tt = total_derivative(&w_t, Independent::T)?;
        sub.insert(&format!("{}_t", w), w_t);
        sub.insert(&format!("{}_xt", w), w_xt);
        sub.insert(&format!("{}_tt", w), w_tt);
    }
    let reduced = substitute_fixpoint(e, &sub)?;
    Ok(apply_side_constraints(&reduced, &m.side_constraints))
}
