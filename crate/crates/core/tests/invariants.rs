use proptest::prelude::*;
use rdsym::engine::RDSystem;
use rdsym::expr::{evaluate, Binding, Expr};
use rdsym::pdelab::{discrete_mean, integrate, FieldPair, Grid1D, IntegrateOptions, Kinetics};
use rdsym::reduction::{build_ansatz_case1, min_max_on_grid, predator_prey_solution, residual, PredatorPreyParams};
use rdsym::transforms::apply_swap;

/// Parameters inside the positivity region: `0 < k < 1 - 1/d` and
/// `delta` a fraction of its bound.
fn valid_params() -> impl Strategy<Value = PredatorPreyParams> {
    (3.0f64..6.0, 0.0f64..1.0, 0.5f64..6.0, 0.5f64..4.0, 0.05f64..1.0).prop_map(|(d, s, a1, b, frac)| {
        let k = 0.25 + s * (1.0 - 1.0 / d - 0.3);
        let mut p = PredatorPreyParams { k, delta: 1.0, d, a1, b, j: 1 };
        p.delta = frac * p.delta_bound();
        p
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn admissible_parameters_give_nonnegative_exact_solutions(p in valid_params()) {
        prop_assert!(p.constraints().all_hold(), "{:?}", p.constraints());
        let sol = predator_prey_solution(&p).unwrap();
        let ext = min_max_on_grid(&sol, (0.0, 2.0), 21, 41).unwrap();
        let scale = 1.0 + ext.max_u.abs().max(ext.max_v.abs());
        prop_assert!(ext.min_u >= -1e-12 * scale, "{:?}", ext);
        prop_assert!(ext.min_v >= -1e-12 * scale, "{:?}", ext);
        let r = residual(&sol.system, &sol, 50, 11).unwrap();
        prop_assert!(r.max() <= 1e-8 * scale, "{:?}", r);
    }

    #[test]
    fn delta_beyond_the_bound_is_rejected(p in valid_params(), over in 1.01f64..3.0) {
        let q = PredatorPreyParams { delta: p.delta_bound() * over, ..p };
        prop_assert!(!q.constraints().all_hold());
        let err = predator_prey_solution(&q).unwrap_err().to_string();
        prop_assert!(err.contains("exceeds bound"), "{}", err);
    }

    #[test]
    fn constraints_always_evaluate(k in -1.0f64..3.0, d in 0.1f64..8.0, a1 in -5.0f64..5.0, b in -3.0f64..3.0, delta in -2.0f64..10.0) {
        let p = PredatorPreyParams { k, delta, d, a1, b, j: 1 };
        let c = p.constraints();
        prop_assert_eq!(c.checks.len(), 3);
        let expected = c.all_hold() && b > 0.0 && a1 > p.alpha();
        prop_assert_eq!(predator_prey_solution(&p).is_ok(), expected);
    }

    #[test]
    fn ansatz_solves_its_characteristic_equations(alpha in -3.0f64..3.0, k in 0.1f64..3.0) {
        prop_assume!((k - 1.0).abs() > 1e-3);
        let a = build_ansatz_case1(Expr::float(alpha), Expr::float(k)).unwrap();
        for r in a.characteristic_residuals() {
            let b = Binding::new().with("t", 0.3).with("x", 0.7);
            let v = if r.is_zero() { 0.0 } else { evaluate(&r, &b).unwrap_or(f64::NAN) };
            prop_assert!(v.abs() < 1e-12, "{}", r);
        }
    }

    #[test]
    fn refinement_halves_h_and_quarters_dt(n in 8usize..64, dt in 1e-4f64..1e-1, l in 0.5f64..5.0) {
        let g = Grid1D::new(0.0, l, n, dt, 1.0).unwrap();
        let r = g.refined();
        prop_assert_eq!(r.n_cells, 2 * n);
        prop_assert!((r.h() - g.h() / 2.0).abs() < 1e-15);
        prop_assert!((r.dt - dt / 4.0).abs() < 1e-18);
        prop_assert_eq!(r.nodes().len(), 2 * n + 1);
    }

    #[test]
    fn pure_diffusion_conserves_the_mean(a in -1.0f64..1.0, b in -1.0f64..1.0, m in 1usize..4) {
        let grid = Grid1D::new(0.0, 2.0, 32, 5e-3, 0.2).unwrap();
        let ic = FieldPair::sample(&grid, 0.0, |x| {
            (1.0 + a * (m as f64 * x).cos(), b * x * x)
        });
        let traj = integrate(&Kinetics::heat(), &ic, &grid, &IntegrateOptions::default()).unwrap();
        let end = traj.last();
        prop_assert!((discrete_mean(&end.u) - discrete_mean(&ic.u)).abs() < 1e-10);
        prop_assert!((discrete_mean(&end.v) - discrete_mean(&ic.v)).abs() < 1e-10);
    }

    #[test]
    fn swapping_twice_restores_the_system(d in 0.2f64..5.0, c in -2.0f64..2.0) {
        let sys = RDSystem::new(Expr::float(d), Expr::float(c) * Expr::sym("u") * Expr::sym("v"), Expr::sym("u").powi(2)).unwrap();
        let back = apply_swap(&apply_swap(&sys).unwrap()).unwrap();
        prop_assert!((back.d.as_f64().unwrap() - d).abs() < 1e-12 * d);
        let b = Binding::new().with("u", 0.6).with("v", 1.7);
        for (x, y) in [(&back.c1, &sys.c1), (&back.c2, &sys.c2)] {
            prop_assert!((evaluate(x, &b).unwrap() - evaluate(y, &b).unwrap()).abs() < 1e-12);
        }
    }
}
