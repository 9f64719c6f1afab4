//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdsym::catalog::{self, draw_parameters, instantiate, registry, verify_instance, Instance, SweepReport};
use rdsym::engine::{
    combine_with_lie_tail, invariance_residuals, lie_residuals, structured_residuals, LieTailOperator,
    LinearCoefficientForm, ManifoldKind, ManifoldSpec, RDSystem, SamplingConfig, SymmetryOperator, Verifier,
};
use rdsym::expr::{expand, parse, Expr};
use rdsym::pdelab::{
    convergence_study, integrate, solution_grid, CompiledSolution, Exact, FieldPair, Grid1D, IntegrateOptions,
    Kinetics,
};
use rdsym::reduction::{
    cosine_solution, decay_ratio, derived_a2, expected_reduction, grid_csv, linear_interaction_reactions,
    neumann_defect, power_law_reactions, predator_prey_solution, reduce_case1, residual, CosineParams,
    PredatorPreyParams, PHI, PSI,
};
use rdsym::transforms::{
    apply_map_i, apply_swap, swap_operator, DiffusivitySystem, FormPreservingMap, LocalPointTransform,
    MapCheckConfig,
};

const SEED: u64 = 20_240_101;
/// Scale-free zero tolerance of the invariance checks.
const ZERO_TOL: f64 = 1e-9;
const MIN_SAMPLES: usize = 200;
const SWEEP_LIMIT: Duration = Duration::from_secs(120);
const NUMERICS_LIMIT: Duration = Duration::from_secs(300);
const EXACT_RESIDUAL_TOL: f64 = 1e-8;
const NEUMANN_TOL: f64 = 1e-10;
const DECAY_TOL: f64 = 1e-3;
const ORDER_BAND: (f64, f64) = (1.85, 2.15);
/// Max-norm gap between the exact surfaces and the reference solve.
const SURFACE_TOL: f64 = 5e-4;
const EMBEDDING_TOL: f64 = 1e-10;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn sampling() -> SamplingConfig {
    SamplingConfig { seed: SEED, tolerance: ZERO_TOL, samples: MIN_SAMPLES, ..SamplingConfig::default() }
}

fn p(s: &str) -> Expr {
    parse(s).unwrap()
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_instance(id: u32, rng: &mut ChaCha8Rng) -> Result<Instance, String> {
    let pa = draw_parameters(id, rng).map_err(|e| format!("case {}: {}", id, e))?;
    instantiate(id, &pa).map_err(|e| format!("case {}: {}", id, e))
}

fn c1_catalog_sweep(sweep: &Result<(SweepReport, Duration), String>) -> Outcome {
    let (rep, took) = sweep.as_ref().map_err(|e| e.clone())?;
    check(rep.total == 26, || format!("{} entries, expected 26", rep.total))?;
    check(rep.trials_per_case == 3, || "expected 3 draws per entry".into())?;
    for row in &rep.rows {
        for t in &row.trials {
            check(t.samples >= MIN_SAMPLES, || format!("case {} used {} samples", row.id, t.samples))?;
            check(t.error.is_none(), || format!("case {}: {}", row.id, t.error.clone().unwrap_or_default()))?;
        }
    }
    check(rep.passed == rep.total, || {
        let bad: Vec<String> = rep.rows.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
        format!("{}; failing: {}", rep.summary(), bad.join(", "))
    })?;
    check(*took <= SWEEP_LIMIT, || format!("took {:.1?}", took))?;
    let worst = rep.rows.iter().map(|r| r.max_scaled).fold(0.0, f64::max);
    Ok(format!("{}, worst scaled residual {:.2e}, {:.1?}", rep.summary(), worst, took))
}

fn c2_purely_conditional(sweep: &Result<(SweepReport, Duration), String>) -> Outcome {
    let (rep, _) = sweep.as_ref().map_err(|e| e.clone())?;
    let mut checked = 0;
    for row in &rep.rows {
        for t in &row.trials {
            check(t.purely_conditional, || format!("case {}: eta2_u vanishes", row.id))?;
            check(!t.lie_verdict.passed(), || format!("case {}: operator passes the Lie check", row.id))?;
            checked += 1;
        }
    }
    Ok(format!("{} operators: eta2_u != 0 and Lie check fails for all", checked))
}

struct Verdicts {
    lie: bool,
    first: bool,
    second: bool,
}

fn verdicts(sys: &RDSystem, q: &SymmetryOperator, m: &ManifoldSpec, v: &Verifier) -> Result<Verdicts, String> {
    let err = |e: rdsym::engine::EngineError| e.to_string();
    let lie = lie_residuals(sys, q, &m.side_constraints, v).map_err(err)?.passed();
    let first = if m.kind == ManifoldKind::M1U || m.kind == ManifoldKind::M1V {
        invariance_residuals(sys, q, m, v).map_err(err)?.passed()
    } else {
        let on = |k| invariance_residuals(sys, q, &ManifoldSpec::with_constraints(k, m.side_constraints.clone()), v);
        on(ManifoldKind::M1U).map_err(err)?.passed() || on(ManifoldKind::M1V).map_err(err)?.passed()
    };
    let m2 = ManifoldSpec::with_constraints(ManifoldKind::M2, m.side_constraints.clone());
    let second = invariance_residuals(sys, q, &m2, v).map_err(err)?.passed();
    Ok(Verdicts { lie, first, second })
}

/// Autonomous systems with known Lie operators (time and space translations,
/// scalings) mixed with random affine operators.
fn random_pair(rng: &mut ChaCha8Rng, i: usize) -> (RDSystem, SymmetryOperator) {
    let systems = [
        ("2", "u^2 - v", "u*v"),
        ("3", "u^3", "v^3"),
        ("0.5", "sin(u) + v", "u*v^2 - v"),
        ("2.5", "u*(1 - v)", "-u - v + u*v"),
    ];
    let (d, c1, c2) = systems[rng.random_range(0..systems.len())];
    let sys = RDSystem::parse(d, c1, c2).unwrap();
    let c = rng.random_range(-1.5..1.5);
    let q = match i % 3 {
        0 => SymmetryOperator::parse("1", &format!("{}", c), "0", "0").unwrap(),
        1 if c1 == "u^3" => SymmetryOperator::parse("2*t", "x", "-u", "-v").unwrap(),
        _ => {
            let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
            SymmetryOperator::parse(
                "1",
                &format!("{}", c),
                &format!("{}*u + {}", a[0], a[1]),
                &format!("{}*u + {}*v", a[2], a[3]),
            )
            .unwrap()
        }
    };
    (sys, q)
}

fn c3_hierarchy() -> Outcome {
    let cfg = sampling();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 3);
    let mut counts = [0usize; 3];
    let mut pairs = 0;
    let mut tally = |v: &Verdicts, what: String| -> Result<(), String> {
        check(!v.lie || v.first, || format!("{}: Lie passes but first type fails", what))?;
        check(!v.first || v.second, || format!("{}: first type passes but second type fails", what))?;
        counts[0] += v.lie as usize;
        counts[1] += v.first as usize;
        counts[2] += v.second as usize;
        Ok(())
    };
    for id in registry().ids() {
        let inst = random_instance(id, &mut rng)?;
        let v = verdicts(&inst.system, &inst.operator, &inst.manifold, &inst.verifier(&cfg))?;
        tally(&v, format!("case {}", id))?;
        pairs += 1;
    }
    let verifier = Verifier::new(cfg.clone());
    let plain = ManifoldSpec::new(ManifoldKind::M);
    for i in 0..(50 - pairs) {
        let (sys, q) = random_pair(&mut rng, i);
        let v = verdicts(&sys, &q, &plain, &verifier)?;
        tally(&v, format!("random pair {}", i))?;
        pairs += 1;
    }
    check(counts[0] > 0, || "no Lie-passing pair exercised".into())?;
    Ok(format!(
        "{} pairs, 0 counterexamples (Lie {}, first {}, second {})",
        pairs, counts[0], counts[1], counts[2]
    ))
}

fn perturb(form: &LinearCoefficientForm, rng: &mut ChaCha8Rng) -> LinearCoefficientForm {
    let c = Expr::float((rng.random_range(0.3..1.5f64) * 100.0).round() / 100.0);
    let mut f = form.clone();
    match rng.random_range(0..4) {
        0 => f.r1 = &f.r1 + c,
        1 => f.p1 = &f.p1 + c * p("x"),
        2 => f.q = &f.q + c,
        _ => f.r2 = &f.r2 + c * p("t"),
    }
    f
}

fn c4_structured_vs_direct() -> Outcome {
    let cfg = sampling();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 4);
    let mut instances = Vec::new();
    for id in registry().ids() {
        let inst = random_instance(id, &mut rng)?;
        if inst.manifold.kind == ManifoldKind::M1U && LinearCoefficientForm::from_operator(&inst.operator).is_ok() {
            instances.push(inst);
        }
    }
    check(!instances.is_empty(), || "no catalog operator has the linear coefficient form".into())?;
    let (mut agree, mut passes) = (0, 0);
    for i in 0..50 {
        let inst = &instances[i % instances.len()];
        let base = LinearCoefficientForm::from_operator(&inst.operator).unwrap();
        let form = if i < instances.len() { base } else { perturb(&base, &mut rng) };
        let v = inst.verifier(&cfg);
        let structured = structured_residuals(&inst.system, &form, &inst.manifold.side_constraints, &v)
            .map_err(|e| format!("case {}: {}", inst.id, e))?;
        let direct = invariance_residuals(&inst.system, &form.to_operator(), &inst.manifold, &v)
            .map_err(|e| format!("case {}: {}", inst.id, e))?;
        check(structured.passed() == direct.passed(), || {
            format!(
                "case {} form {}: structured {:?}, direct {:?}",
                inst.id, i, structured.verdict, direct.verdict
            )
        })?;
        agree += 1;
        passes += direct.passed() as usize;
    }
    check(passes > 0 && passes < agree, || format!("degenerate sample: {} of {} pass", passes, agree))?;
    Ok(format!("{}/50 verdicts agree ({} pass, {} fail)", agree, passes, agree - passes))
}

fn c5_reduction() -> Outcome {
    let s = |n: &str| Expr::sym(n);
    let (alpha, k, d) = (s("alpha"), s("k"), s("d"));
    let got = reduce_case1(None, None, &alpha, &k, &d).map_err(|e| e.to_string())?;
    let want = expected_reduction(None, None, &alpha, &k, &d);
    check(expand(&(&got.phi_xx - &want.phi_xx)).is_zero(), || format!("phi'' = {}", got.phi_xx))?;
    check(expand(&(&got.psi_xx - &want.psi_xx)).is_zero(), || format!("psi'' = {}", got.psi_xx))?;

    let (phi, psi) = (s(PHI), s(PSI));
    let (beta, gamma) = (s("beta"), s("gamma"));
    let (f, g) = power_law_reactions(&alpha, &beta, &gamma, &k);
    let pl = reduce_case1(Some(&f), Some(&g), &alpha, &k, &d).map_err(|e| e.to_string())?;
    let pl1 = &gamma * Expr::pow(&psi, &k.recip());
    let pl2 = (&beta + &alpha * &k * &d) * &psi;
    let v = Verifier::new(sampling()).with_range(PHI, (0.2, 2.0)).with_range(PSI, (0.2, 2.0));
    let symbolic1 = expand(&(&pl.phi_xx - &pl1)).is_zero();
    check(symbolic1 || v.is_zero(&(&pl.phi_xx - &pl1), 51), || format!("power law phi'' = {}", pl.phi_xx))?;
    check(expand(&(&pl.psi_xx - &pl2)).is_zero(), || format!("power law psi'' = {}", pl.psi_xx))?;

    let (a1, b) = (s("a1"), s("b"));
    let (f, g) = linear_interaction_reactions(&alpha, &a1, &b, &d);
    let li = reduce_case1(Some(&f), Some(&g), &alpha, &k, &d).map_err(|e| e.to_string())?;
    let li1 = -(&b * &psi * Expr::pow(&phi, &(1 - &k))) - (&a1 - &alpha) * &phi;
    let li2 = (&alpha * &k * &d + derived_a2(&alpha, &a1, &d)) * &psi;
    check(expand(&(&li.phi_xx - &li1)).is_zero(), || format!("linear interaction phi'' = {}", li.phi_xx))?;
    check(expand(&(&li.psi_xx - &li2)).is_zero(), || format!("linear interaction psi'' = {}", li.psi_xx))?;
    Ok(format!(
        "remainder identically zero; power law ({}), linear interaction (symbolic)",
        if symbolic1 { "symbolic" } else { "symbolic psi, sampled phi" }
    ))
}

fn c6_exact_solutions() -> Outcome {
    let pp = PredatorPreyParams::default();
    let sol = predator_prey_solution(&pp).map_err(|e| e.to_string())?;
    let r = residual(&sol.system, &sol, 1000, SEED).map_err(|e| e.to_string())?;
    check(r.samples >= 1000 && r.max() <= EXACT_RESIDUAL_TOL, || format!("predator-prey residual {:?}", r))?;
    let l = pp.length();
    let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
    let n_pp = neumann_defect(&sol, &times).map_err(|e| e.to_string())?;
    check(n_pp <= NEUMANN_TOL, || format!("predator-prey Neumann defect {:.2e}", n_pp))?;

    let cos = cosine_solution(&CosineParams::default()).map_err(|e| e.to_string())?;
    let rc = residual(&cos.system, &cos, 1000, SEED).map_err(|e| e.to_string())?;
    check(rc.max() <= EXACT_RESIDUAL_TOL, || format!("cosine residual {:?}", rc))?;
    let n_cos = neumann_defect(&cos, &times).map_err(|e| e.to_string())?;
    check(n_cos <= NEUMANN_TOL, || format!("cosine Neumann defect {:.2e}", n_cos))?;

    let bound = format!("{:.3}", pp.delta_bound());
    check(bound == "6.250", || format!("delta bound {}", bound))?;
    check(pp.constraints().all_hold(), || "reference parameters violate a constraint".into())?;
    let too_wide = PredatorPreyParams { delta: 6.26, ..pp };
    check(predator_prey_solution(&too_wide).is_err(), || "delta = 6.26 accepted".into())?;
    Ok(format!(
        "residuals {:.1e} (predator-prey), {:.1e} (cosine); Neumann {:.1e}, {:.1e}; delta bound {}; l = {:.5}",
        r.max(),
        rc.max(),
        n_pp,
        n_cos,
        bound,
        l
    ))
}

fn c7_decay() -> Outcome {
    let sol = predator_prey_solution(&PredatorPreyParams::default()).map_err(|e| e.to_string())?;
    let [ru, rv] = decay_ratio(&sol, 10.0, 401).map_err(|e| e.to_string())?;
    check(ru <= DECAY_TOL && rv <= DECAY_TOL, || format!("sup ratios u {:.2e}, v {:.2e}", ru, rv))?;
    Ok(format!("sup-norm ratio at t = 10: u {:.2e}, v {:.2e}", ru, rv))
}

fn heat_exact(t: f64, x: f64) -> (f64, f64) {
    ((-t).exp() * x.cos(), (-4.0 * t).exp() * (2.0 * x).cos())
}

fn parse_surface(csv_text: &str) -> Result<Vec<[f64; 4]>, String> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    rdr.deserialize::<[f64; 4]>().map(|r| r.map_err(|e| e.to_string())).collect()
}

fn c8_numerics() -> Outcome {
    let start = Instant::now();
    let sol = predator_prey_solution(&PredatorPreyParams::default()).map_err(|e| e.to_string())?;
    let kin = Kinetics::from_canonical(&sol.system).map_err(|e| e.to_string())?;
    let exact = CompiledSolution::new(&sol).map_err(|e| e.to_string())?;
    let opts = IntegrateOptions { seed: SEED, ..IntegrateOptions::default() };
    let base = solution_grid(&sol, 16, 1e-3, 0.5).map_err(|e| e.to_string())?;
    let rep = convergence_study(&kin, &exact, &base, 4, &opts).map_err(|e| e.to_string())?;
    check(rep.orders_within(ORDER_BAND.0, ORDER_BAND.1), || format!("orders {:?}", rep.orders_linf))?;

    let heat_grid = Grid1D::new(0.0, PI, 16, 4e-3, 0.5).map_err(|e| e.to_string())?;
    let heat = convergence_study(&Kinetics::heat(), &heat_exact, &heat_grid, 4, &opts).map_err(|e| e.to_string())?;
    check(heat.orders_within(ORDER_BAND.0, ORDER_BAND.1), || format!("heat orders {:?}", heat.orders_linf))?;

    // Exact surfaces on the solver's nodes against the reference solve.
    let times = vec![0.1, 0.25, 0.5];
    let grid = solution_grid(&sol, 128, 1e-4, 0.5).map_err(|e| e.to_string())?;
    let ic = FieldPair::sample(&grid, 0.0, |x| exact.at(0.0, x).unwrap_or((f64::NAN, f64::NAN)));
    let traj = integrate(&kin, &ic, &grid, &IntegrateOptions { output_times: times.clone(), ..opts.clone() })
        .map_err(|e| e.to_string())?;
    let surface = parse_surface(&grid_csv(&sol, &times, grid.n_cells + 1).map_err(|e| e.to_string())?)?;
    let xs = grid.nodes();
    let mut gap: f64 = 0.0;
    let mut compared = 0;
    for frame in traj.frames.iter().filter(|f| times.iter().any(|t| (t - f.t).abs() < 1e-9)) {
        for row in surface.iter().filter(|r| (r[0] - frame.t).abs() < 1e-9) {
            let i = xs.iter().position(|x| (x - row[1]).abs() < 1e-9).ok_or("surface node off the grid")?;
            gap = gap.max((row[2] - frame.u[i]).abs()).max((row[3] - frame.v[i]).abs());
            compared += 1;
        }
    }
    check(compared == times.len() * xs.len(), || format!("compared {} surface points", compared))?;
    check(gap <= SURFACE_TOL, || format!("surface gap {:.2e}", gap))?;
    let took = start.elapsed();
    check(took <= NUMERICS_LIMIT, || format!("took {:.1?}", took))?;
    let fmt = |r: &rdsym::pdelab::ErrorReport| {
        r.orders_linf.iter().map(|o| format!("{:.3}/{:.3}", o[0], o[1])).collect::<Vec<_>>().join(", ")
    };
    Ok(format!(
        "orders u/v [{}], heat [{}], surface gap {:.2e}, {:.1?}",
        fmt(&rep),
        fmt(&heat),
        gap,
        took
    ))
}

fn c9_transformations() -> Outcome {
    let cfg = MapCheckConfig { seed: SEED, ..MapCheckConfig::default() };
    let sys = RDSystem::parse("3", "u^2*v - exp(v)", "u*v + ln(u + v)").map_err(|e| e.to_string())?;
    let id = apply_map_i(&sys, &FormPreservingMap::identity(), &cfg).map_err(|e| e.to_string())?;
    check(id.d == sys.d, || format!("identity gives lambda = {}", id.d))?;

    let raw = DiffusivitySystem { d1: Expr::int(2), d2: Expr::int(5), f: p("u - u^3 - v"), g: p("u*v^2") };
    let src = raw.space_scaled().map_err(|e| e.to_string())?;
    let out = apply_map_i(&src, &FormPreservingMap::rescaling(raw.d1.clone()), &cfg).map_err(|e| e.to_string())?;
    check(out.d == src.d, || format!("rescaling gives lambda = {}, d = {}", out.d, src.d))?;

    let target = RDSystem::parse("2.5", "u^2*v - exp(v)", "u*v + sin(u + v)").map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 9);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let m = LocalPointTransform::random(&mut rng);
        worst = worst.max(m.embedding_discrepancy(&target, 100, &cfg).map_err(|e| e.to_string())?);
    }
    check(worst <= EMBEDDING_TOL, || format!("embedding discrepancy {:.2e}", worst))?;

    let pa = catalog::ParameterAssignment::new().with("d", 2.0);
    let inst = instantiate(5, &pa).map_err(|e| e.to_string())?;
    let swapped = apply_swap(&inst.system).map_err(|e| e.to_string())?;
    let q = swap_operator(&inst.operator, &inst.system.d).map_err(|e| e.to_string())?;
    let v = inst.verifier(&sampling());
    let rep = invariance_residuals(&swapped, &q, &ManifoldSpec::new(ManifoldKind::M1V), &v)
        .map_err(|e| e.to_string())?;
    check(rep.passed(), || format!("swapped case 5 on M1-v: {:?}", rep.verdict))?;
    Ok(format!(
        "lambda = d for identity and rescaling; 10 local transforms embed (max {:.1e}); swapped case 5 passes on M1-v",
        worst
    ))
}

fn c10_closure() -> Outcome {
    let cfg = sampling();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 10);
    let pa = draw_parameters(6, &mut rng).map_err(|e| e.to_string())?.with_function("g", "0");
    let inst = instantiate(6, &pa).map_err(|e| e.to_string())?;
    let v = inst.verifier(&cfg);
    let x = LieTailOperator::new(Expr::one(), Expr::zero()).map_err(|e| e.to_string())?;
    let lie = lie_residuals(&inst.system, &x.to_operator(), &[], &v).map_err(|e| e.to_string())?;
    check(lie.passed(), || format!("v d_v is not Lie: {:?}", lie.verdict))?;
    check(verify_instance(&inst, &cfg).map(|r| r.passed()).unwrap_or(false), || "Q1 fails".into())?;
    for i in 0..10 {
        let mut draw = || {
            let m = rng.random_range(0.3..2.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        };
        let (c1, c2) = (draw(), draw());
        let q = combine_with_lie_tail(&inst.operator, &x, &Expr::float(c1), &Expr::float(c2))
            .map_err(|e| e.to_string())?;
        let rep = invariance_residuals(&inst.system, &q, &inst.manifold, &v).map_err(|e| e.to_string())?;
        check(rep.passed(), || format!("pair {} ({:.3}, {:.3}): {:?}", i, c1, c2, rep.verdict))?;
    }
    Ok("X = v d_v is Lie for g = 0; c1 Q1 + c2 X passes for 10 random pairs".into())
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let sweep = catalog::sweep(&registry().ids(), 3, &sampling())
        .map(|r| (r, t0.elapsed()))
        .map_err(|e| e.to_string());
    let criteria: Vec<Criterion> = vec![
        ("catalog sweep", Box::new(|| c1_catalog_sweep(&sweep))),
        ("purely conditional", Box::new(|| c2_purely_conditional(&sweep))),
        ("symmetry hierarchy", Box::new(c3_hierarchy)),
        ("structured vs direct", Box::new(c4_structured_vs_direct)),
        ("reduction exactness", Box::new(c5_reduction)),
        ("exact solutions", Box::new(c6_exact_solutions)),
        ("decay", Box::new(c7_decay)),
        ("numerics", Box::new(c8_numerics)),
        ("transformations", Box::new(c9_transformations)),
        ("statement closure", Box::new(c10_closure)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS criterion {} ({}): {}", i + 1, name, detail),
            Err(reason) => {
                failed += 1;
                println!("FAIL criterion {} ({}): {}", i + 1, name, reason);
            }
        }
    }
    println!("{}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
