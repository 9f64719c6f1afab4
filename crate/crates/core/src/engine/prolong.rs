use crate::expr::{total_derivative, Expr, Independent};

use super::{EngineError, SymmetryOperator};

/// First- and second-order prolongation coefficients for both fields.
/// Index 0 is the `u` component, index 1 the `v` component.
#[derive(Clone, Debug, PartialEq)]
pub struct ProlongationCoefficients {
    pub rho_t: [Expr; 2],
    pub rho_x: [Expr; 2],
    pub sigma_xx: [Expr; 2],
}

/// Second prolongation of `q` restricted to the coefficients needed for
/// `u_t`, `u_x`, `u_xx` (and their `v` analogues).
pub fn prolong2(q: &SymmetryOperator) -> Result<ProlongationCoefficients, EngineError> {
    let dt = |e: &Expr| total_derivative(e, Independent::T);
    let dx = |e: &Expr| total_derivative(e, Independent::X);
    let dt_xi0 = dt(&q.xi0)?;
    let dt_xi1 = dt(&q.xi1)?;
    let dx_xi0 = dx(&q.xi0)?;
    let dx_xi1 = dx(&q.xi1)?;
    let mut rho_t = Vec::with_capacity(2);
    let mut rho_x = Vec::with_capacity(2);
    let mut sigma = Vec::with_capacity(2);
    for (eta, w) in [(&q.eta1, "u"), (&q.eta2, "v")] {
        let w_t = Expr::sym(&format!("{}_t", w));
        let w_x = Expr::sym(&format!("{}_x", w));
        let w_xt = Expr::sym(&format!("{}_xt", w));
        let w_xx = Expr::sym(&format!("{}_xx", w));
        let rt = dt(eta)? - &w_t * &dt_xi0 - &w_x * &dt_xi1;
        let rx = dx(eta)? - &w_t * &dx_xi0 - &w_x * &dx_xi1;
        let sxx = dx(&rx)? - &w_xt * &dx_xi0 - &w_xx * &dx_xi1;
        rho_t.push(rt);
        rho_x.push(rx);
        sigma.push(sxx);
    }
    let pair = |v: Vec<Expr>| -> [Expr; 2] {
        let mut it = v.into_iter();
        [it.next().unwrap(), it.next().unwrap()]
    };
    Ok(ProlongationCoefficients {
        rho_t: pair(rho_t),
        rho_x: pair(rho_x),
        sigma_xx: pair(sigma),
    })
}
