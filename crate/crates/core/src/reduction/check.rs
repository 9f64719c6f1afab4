//! Sampling checks and export for closed-form solutions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::families::{ClosedFormSolution, ConstraintCheck, Domain, Family};
use super::{Orientation, ReductionError};
use crate::engine::RDSystem;
use crate::expr::{differentiate, Binding, Expr, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub samples: usize,
    /// Points rejected because something evaluated to a non-finite value.
    pub rejected: usize,
    pub max_first: f64,
    pub max_second: f64,
}

impl ResidualSummary {
    pub fn max(&self) -> f64 {
        self.max_first.max(self.max_second)
    }
}

/// Evaluates `u_xx - u_t - C1` and `v_xx - d v_t - C2` of `sys` at `n` random
/// interior points of the solution's domain.
pub fn residual(sys: &RDSystem, sol: &ClosedFormSolution, n: usize, seed: u64) -> Result<ResidualSummary, ReductionError> {
    let Domain { t: (t0, t1), x: (x0, x1), .. } = sol.domain;
    if !(t1 > t0 && x1 > x0) || n == 0 {
        return Err(ReductionError::Domain("empty sampling domain".into()));
    }
    let dxx = |e: &Expr| differentiate(&differentiate(e, "x"), "x");
    let sol_tape = Tape::compile(&[
        sol.u.clone(),
        sol.v.clone(),
        differentiate(&sol.u, "t"),
        dxx(&sol.u),
        differentiate(&sol.v, "t"),
        dxx(&sol.v),
    ]);
    let sys_tape = Tape::compile(&[sys.c1.clone(), sys.c2.clone(), sys.d.clone()]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut max1, mut max2, mut taken, mut rejected) = (0.0f64, 0.0f64, 0usize, 0usize);
    while taken < n {
        if rejected > 50 * n {
            return Err(ReductionError::Domain(format!("only {} of {} admissible samples", taken, n)));
        }
        // interior: t in (t0, t1], x in (x0, x1)
        let t = t1 - (t1 - t0) * rng.random::<f64>();
        let x = x0 + (x1 - x0) * (0.001 + 0.998 * rng.random::<f64>());
        let b = Binding::new().with("t", t).with("x", x);
        let Ok(s) = eval_tape(&sol_tape, &b) else {
            rejected += 1;
            continue;
        };
        let b2 = Binding::new().with("u", s[0]).with("v", s[1]);
        let Ok(c) = eval_tape(&sys_tape, &b2) else {
            rejected += 1;
            continue;
        };
        let r1 = s[3] - s[2] - c[0];
        let r2 = s[5] - c[2] * s[4] - c[1];
        if !(r1.is_finite() && r2.is_finite()) {
            rejected += 1;
            continue;
        }
        max1 = max1.max(r1.abs());
        max2 = max2.max(r2.abs());
        taken += 1;
    }
    Ok(ResidualSummary { samples: taken, rejected, max_first: max1, max_second: max2 })
}

fn eval_tape(tape: &Tape, b: &Binding) -> Result<Vec<f64>, ReductionError> {
    let inputs = tape.resolve(b).map_err(|e| ReductionError::Domain(e.to_string()))?;
    let out = tape.eval(&inputs.vars, &inputs.fields, &inputs.funcs);
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(ReductionError::Domain("non-finite value".into()))
    }
}

/// Largest `|u_x|`, `|v_x|` at both ends of the zero-flux interval over `times`.
pub fn neumann_defect(sol: &ClosedFormSolution, times: &[f64]) -> Result<f64, ReductionError> {
    let l = sol.domain.length.ok_or_else(|| ReductionError::Domain("solution has no zero-flux interval".into()))?;
    let x0 = sol.domain.x.0;
    let tape = Tape::compile(&[differentiate(&sol.u, "x"), differentiate(&sol.v, "x")]);
    let mut worst = 0.0f64;
    for &t in times {
        for x in [x0, x0 + l] {
            let d = eval_tape(&tape, &Binding::new().with("t", t).with("x", x))?;
            worst = worst.max(d[0].abs()).max(d[1].abs());
        }
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridExtrema {
    pub min_u: f64,
    pub max_u: f64,
    pub min_v: f64,
    pub max_v: f64,
}

fn grid_points(range: (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![range.0];
    }
    (0..n).map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64).collect()
}

fn x_range(sol: &ClosedFormSolution) -> (f64, f64) {
    match sol.domain.length {
        Some(l) => (sol.domain.x.0, sol.domain.x.0 + l),
        None => sol.domain.x,
    }
}

/// Extrema of `u` and `v` on an `nt × nx` grid over `t_range × [x0, x1]`.
pub fn min_max_on_grid(sol: &ClosedFormSolution, t_range: (f64, f64), nt: usize, nx: usize) -> Result<GridExtrema, ReductionError> {
    let tape = Tape::compile(&[sol.u.clone(), sol.v.clone()]);
    let xs = grid_points(x_range(sol), nx);
    let rows: Result<Vec<GridExtrema>, ReductionError> = grid_points(t_range, nt)
        .into_par_iter()
        .map(|t| {
            let mut e = GridExtrema { min_u: f64::INFINITY, max_u: f64::NEG_INFINITY, min_v: f64::INFINITY, max_v: f64::NEG_INFINITY };
            for &x in &xs {
                let uv = eval_tape(&tape, &Binding::new().with("t", t).with("x", x))?;
                e.min_u = e.min_u.min(uv[0]);
                e.max_u = e.max_u.max(uv[0]);
                e.min_v = e.min_v.min(uv[1]);
                e.max_v = e.max_v.max(uv[1]);
            }
            Ok(e)
        })
        .collect();
    Ok(rows?.into_iter().reduce(|a, b| GridExtrema {
        min_u: a.min_u.min(b.min_u),
        max_u: a.max_u.max(b.max_u),
        min_v: a.min_v.min(b.min_v),
        max_v: a.max_v.max(b.max_v),
    }).expect("nonempty grid"))
}

/// `sup|u(t,.)| / sup|u(0,.)|` and the same for `v`, on `nx` nodes.
pub fn decay_ratio(sol: &ClosedFormSolution, t: f64, nx: usize) -> Result<[f64; 2], ReductionError> {
    let tape = Tape::compile(&[sol.u.clone(), sol.v.clone()]);
    let sup = |time: f64| -> Result<[f64; 2], ReductionError> {
        let mut s = [0.0f64; 2];
        for x in grid_points(x_range(sol), nx) {
            let uv = eval_tape(&tape, &Binding::new().with("t", time).with("x", x))?;
            s[0] = s[0].max(uv[0].abs());
            s[1] = s[1].max(uv[1].abs());
        }
        Ok(s)
    };
    let (s0, s1) = (sup(0.0)?, sup(t)?);
    Ok([s1[0] / s0[0], s1[1] / s0[1]])
}

/// CSV with columns `t,x,u,v` on `times × nx` nodes of the solution interval.
pub fn grid_csv(sol: &ClosedFormSolution, times: &[f64], nx: usize) -> Result<String, ReductionError> {
    let tape = Tape::compile(&[sol.u.clone(), sol.v.clone()]);
    let mut w = csv::Writer::from_writer(Vec::new());
    let export = |e: csv::Error| ReductionError::Export(e.to_string());
    w.write_record(["t", "x", "u", "v"]).map_err(export)?;
    for &t in times {
        for x in grid_points(x_range(sol), nx) {
            let uv = eval_tape(&tape, &Binding::new().with("t", t).with("x", x))?;
            w.write_record([t, x, uv[0], uv[1]].map(|v| v.to_string())).map_err(export)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| ReductionError::Export(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ReductionError::Export(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionMetadata {
    pub family: Family,
    pub orientation: Orientation,
    pub params: BTreeMap<String, f64>,
    pub constraints: Vec<ConstraintCheck>,
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    pub domain: Domain,
    pub u: String,
    pub v: String,
    pub system: [String; 3],
}

pub fn solution_metadata(sol: &ClosedFormSolution) -> SolutionMetadata {
    SolutionMetadata {
        family: sol.family,
        orientation: sol.orientation,
        params: sol.params.clone(),
        constraints: sol.constraints.clone(),
        valid: sol.valid(),
        length: sol.domain.length,
        domain: sol.domain,
        u: sol.u.to_string(),
        v: sol.v.to_string(),
        system: [sol.system.d.to_string(), sol.system.c1.to_string(), sol.system.c2.to_string()],
    }
}

#[cfg(test)]
mod tests {
    use super::super::families::{cosine_solution, power_law_solution, predator_prey_solution, profile_solution};
    use super::super::{Branch, CosineParams, PowerLawParams, PredatorPreyParams, ProfileParams};
    use super::*;

    #[test]
    fn predator_prey_solution_is_exact() {
        let sol = predator_prey_solution(&PredatorPreyParams::default()).unwrap();
        let r = residual(&sol.system, &sol, 500, 7).unwrap();
        assert!(r.max() <= 1e-8, "{:?}", r);
    }

    #[test]
    fn flipped_interaction_sign_breaks_it() {
        let p = PredatorPreyParams::default();
        let sol = predator_prey_solution(&p).unwrap();
        let alpha = p.alpha();
        let wrong = super::super::predator_prey_system(
            &Expr::float(alpha),
            &Expr::float(p.a1),
            &Expr::float(-p.b),
            &Expr::float(p.k),
            &Expr::float(p.d),
        )
        .unwrap();
        let r = residual(&wrong, &sol, 200, 7).unwrap();
        assert!(r.max() > 0.1, "{:?}", r);
    }

    #[test]
    fn cosine_solution_is_exact() {
        let sol = cosine_solution(&CosineParams::default()).unwrap();
        let r = residual(&sol.system, &sol, 500, 3).unwrap();
        assert!(r.max() <= 1e-8, "{:?}", r);
        assert!(neumann_defect(&sol, &[0.0, 0.5, 1.0]).unwrap() <= 1e-10);
        let three = CosineParams { j: 3, ..Default::default() };
        let sol = cosine_solution(&three).unwrap();
        assert!(neumann_defect(&sol, &[0.0, 1.0]).unwrap() <= 1e-10);
    }

    #[test]
    fn other_branches_are_exact() {
        for (k, beta) in [(1.0 / 3.0, 2.0), (1.0 / 3.0, 2.0 / 3.0)] {
            let p = PowerLawParams { alpha: -1.0, beta, gamma: 0.7, k, d: 2.0, c1: 0.8, c2: 0.4, c3: 0.2, c4: 0.1 };
            let sol = power_law_solution(&p, Branch::of(p.mu2())).unwrap();
            let r = residual(&sol.system, &sol, 300, 5).unwrap();
            assert!(r.max() <= 1e-8, "{:?} {:?}", sol.family, r);
        }
    }

    #[test]
    fn profile_solutions_are_exact() {
        let tan = ProfileParams { a1: 5.0, b: 3.0, delta: 6.0, d: 4.0, k: 0.5, shift: 0.0, sign: 1.0 };
        let tanh = ProfileParams { a1: 1.0, b: -2.0, delta: 0.7, d: 1.5, k: 0.5, shift: 0.2, sign: 1.0 };
        for p in [tan, tanh] {
            let sol = profile_solution(&p).unwrap();
            let r = residual(&sol.system, &sol, 300, 11).unwrap();
            assert!(r.max() <= 1e-8, "{:?} {:?}", sol.family, r);
        }
    }

    #[test]
    fn predator_prey_is_nonnegative_and_decays() {
        let sol = predator_prey_solution(&PredatorPreyParams::default()).unwrap();
        let e = min_max_on_grid(&sol, (0.0, 10.0), 200, 200).unwrap();
        assert!(e.min_u >= -1e-9 && e.min_v >= -1e-9, "{:?}", e);
        assert!(e.max_u.is_finite() && e.max_v.is_finite());
        let [ru, rv] = decay_ratio(&sol, 10.0, 200).unwrap();
        assert!(ru <= 1e-3 && rv <= 1e-3);
        assert!(neumann_defect(&sol, &[0.0, 0.5, 1.0]).unwrap() <= 1e-10);
    }

    #[test]
    fn negated_orientation_round_trips() {
        let sol = predator_prey_solution(&PredatorPreyParams::default()).unwrap();
        let direct = sol.negate_v().unwrap();
        assert_eq!(direct.orientation, Orientation::Direct);
        assert!(residual(&direct.system, &direct, 200, 1).unwrap().max() <= 1e-8);
    }

    #[test]
    fn csv_and_metadata() {
        let sol = predator_prey_solution(&PredatorPreyParams::default()).unwrap();
        let csv = grid_csv(&sol, &[0.0, 1.0], 5).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x,u,v");
        assert_eq!(lines.len(), 11);
        let meta = solution_metadata(&sol);
        let json = serde_json::to_value(&meta).unwrap();
        assert_eq!(json["family"], "predator-prey");
        assert_eq!(json["orientation"], "negated-v");
        assert!((json["length"].as_f64().unwrap() - 3.97384).abs() < 1e-5);
        assert_eq!(json["valid"], true);
    }
}
