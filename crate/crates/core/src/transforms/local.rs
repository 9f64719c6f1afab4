//! The thirteen-constant family of local transformations used to normalize
//! classified systems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sym, FormPreservingMap, Inputs, MapCheckConfig, MapSet, TransformError};
use crate::engine::RDSystem;
use crate::expr::{differentiate, expand, substitute, Expr, Substitution, Tape};

/// `t -> C1 t + C2`, `x -> C3 x + C4`, `u -> C5 e^(C6 t) u + C7 t + C8`,
/// `v -> C9 e^(C10 t) v + C11 t^2 + C12 t + C13`: each old variable is
/// replaced by the expression in the new ones. `c[0]` is `C1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalPointTransform {
    pub c: [f64; 13],
}

impl LocalPointTransform {
    pub fn new(c: [f64; 13]) -> Result<Self, TransformError> {
        if c[0] * c[2] * c[4] * c[8] == 0.0 {
            return Err(TransformError::InvalidMap("C1 C3 C5 C9 must be nonzero".into()));
        }
        Ok(LocalPointTransform { c })
    }

    pub fn identity() -> Self {
        let mut c = [0.0; 13];
        c[0] = 1.0;
        c[2] = 1.0;
        c[4] = 1.0;
        c[8] = 1.0;
        LocalPointTransform { c }
    }

    /// Random instance with `C1 = C3^2`, so that the canonical form is kept.
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let nonzero = |rng: &mut ChaCha8Rng| {
            let m = rng.random_range(0.5..1.5);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        };
        let mut c = [0.0; 13];
        c[2] = nonzero(rng);
        c[0] = c[2] * c[2];
        c[4] = nonzero(rng);
        c[8] = nonzero(rng);
        for k in [1, 3, 5, 6, 7, 9, 10, 11, 12] {
            c[k] = rng.random_range(-0.5..0.5);
        }
        LocalPointTransform { c }
    }

    fn k(&self, i: usize) -> Expr {
        Expr::float(self.c[i - 1])
    }

    /// Old `(t, x, u, v)` from new coordinates.
    pub fn forward(&self, [t, x, u, v]: [f64; 4]) -> [f64; 4] {
        let c = &self.c;
        [
            c[0] * t + c[1],
            c[2] * x + c[3],
            c[4] * (c[5] * t).exp() * u + c[6] * t + c[7],
            c[8] * (c[9] * t).exp() * v + c[10] * t * t + c[11] * t + c[12],
        ]
    }

    /// New `(t, x, u, v)` from old coordinates.
    pub fn backward(&self, [t, x, u, v]: [f64; 4]) -> [f64; 4] {
        let c = &self.c;
        let tn = (t - c[1]) / c[0];
        [
            tn,
            (x - c[3]) / c[2],
            (u - c[6] * tn - c[7]) / (c[4] * (c[5] * tn).exp()),
            (v - c[10] * tn * tn - c[11] * tn - c[12]) / (c[8] * (c[9] * tn).exp()),
        ]
    }

    fn check_time_scale(&self) -> Result<(), TransformError> {
        let (c1, c3) = (self.c[0], self.c[2]);
        if (c1 - c3 * c3).abs() > 1e-12 * (1.0 + c1.abs()) {
            return Err(TransformError::InvalidMap(format!(
                "C1 = {} differs from C3^2 = {}; the canonical form is not kept",
                c1,
                c3 * c3
            )));
        }
        Ok(())
    }

    /// The same transformation as a set-I form-preserving map.
    pub fn to_map(&self) -> Result<FormPreservingMap, TransformError> {
        self.check_time_scale()?;
        let t = sym("t");
        let tn = (&t - self.k(2)) / self.k(1);
        let fu = Expr::exp(-(self.k(6) * &tn)) / self.k(5);
        let fv = Expr::exp(-(self.k(10) * &tn)) / self.k(9);
        Ok(FormPreservingMap {
            set: MapSet::I,
            alpha: tn.clone(),
            beta: self.k(3).recip(),
            gamma: -self.k(4) / self.k(3),
            p: -(self.k(7) * &tn + self.k(8)) * &fu,
            q: -(self.k(11) * tn.powi(2) + self.k(12) * &tn + self.k(13)) * &fv,
            f: fu,
            g: fv,
        })
    }

    /// Reaction terms of the transformed equations in the new `(t, u, v)`,
    /// before any check that they are free of `t`.
    pub fn raw_targets(&self, sys: &RDSystem) -> [Expr; 2] {
        let t = sym("t");
        let a = self.k(5) * Expr::exp(self.k(6) * &t);
        let b = self.k(7) * &t + self.k(8);
        let dd = self.k(9) * Expr::exp(self.k(10) * &t);
        let e = self.k(11) * t.powi(2) + self.k(12) * &t + self.k(13);
        let (u, v) = (sym("u"), sym("v"));
        let old = Substitution::new().bind("u", &a * &u + &b).bind("v", &dd * &v + &e);
        let dt = |x: &Expr| differentiate(x, "t");
        let f1 = (dt(&a) * &u + dt(&b) + self.k(1) * substitute(&sys.c1, &old)) / &a;
        let f2 = (&sys.d * (dt(&dd) * &v + dt(&e)) + self.k(1) * substitute(&sys.c2, &old)) / &dd;
        [f1, f2]
    }

    /// Applies the substitution directly to the equations.
    pub fn apply(&self, sys: &RDSystem, cfg: &MapCheckConfig) -> Result<RDSystem, TransformError> {
        self.check_time_scale()?;
        let [f1, f2] = self.raw_targets(sys);
        let dev = time_dependence(&[f1.clone(), f2.clone()], &sys.d, cfg);
        for (k, name) in [(0, "F1"), (1, "F2")] {
            if !(dev[k] <= cfg.tolerance) {
                return Err(TransformError::NotFormPreserving { equation: name.into(), deviation: dev[k] });
            }
        }
        let freeze = Substitution::new().bind("t", Expr::float(cfg.reference.0));
        let [f1, f2] = [f1, f2].map(|f| expand(&substitute(&f, &freeze)));
        Ok(RDSystem::new(sys.d.clone(), f1, f2)?)
    }

    /// Largest scaled difference between the directly transformed reaction
    /// terms and those produced by the embedded set-I map, over `samples`
    /// random points of the new variables.
    pub fn embedding_discrepancy(
        &self,
        sys: &RDSystem,
        samples: usize,
        cfg: &MapCheckConfig,
    ) -> Result<f64, TransformError> {
        let direct = self.raw_targets(sys);
        let embedded = self.to_map()?.raw_targets(sys);
        let exprs = [direct[0].clone(), direct[1].clone(), embedded[0].clone(), embedded[1].clone()];
        // The map's terms use old (t, x) and the new field values.
        let old_t = "__told".to_string();
        let rename = Substitution::new().bind("t", sym(&old_t));
        let exprs: Vec<Expr> = exprs
            .iter()
            .enumerate()
            .map(|(i, e)| if i >= 2 { substitute(e, &rename) } else { e.clone() })
            .collect();
        let tape = Tape::compile(&exprs);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xE3B);
        let mut pcfg = cfg.clone();
        if let Some(dv) = sys.d.as_f64() {
            pcfg.params.entry("d".into()).or_insert(dv);
        }
        let inputs = Inputs::new(&tape, &pcfg, &mut rng, &["t", "x", "u", "v", super::W, super::Z, &old_t]);
        let mut worst: f64 = 0.0;
        let mut valid = 0;
        for _ in 0..samples * 20 {
            if valid == samples {
                break;
            }
            let t = rng.random_range(cfg.t_range.0..cfg.t_range.1);
            let x = rng.random_range(cfg.x_range.0..cfg.x_range.1);
            let u = rng.random_range(cfg.u_range.0..cfg.u_range.1);
            let v = rng.random_range(cfg.v_range.0..cfg.v_range.1);
            let [to, xo, _, _] = self.forward([t, x, u, v]);
            let r = inputs.eval(
                &tape,
                &[("t", t), ("u", u), ("v", v), (&old_t, to), ("x", xo), (super::W, u), (super::Z, v)],
            );
            if r.iter().any(|y| !y.is_finite()) {
                continue;
            }
            valid += 1;
            for k in 0..2 {
                worst = worst.max((r[k] - r[k + 2]).abs() / (1.0 + r[k].abs()));
            }
        }
        if valid < samples {
            return Err(TransformError::InvalidMap("too few admissible sample points".into()));
        }
        Ok(worst)
    }
}

/// Largest scaled `t`-derivative of expressions in `(t, u, v)`.
fn time_dependence(exprs: &[Expr; 2], d: &Expr, cfg: &MapCheckConfig) -> [f64; 2] {
    let mut all = Vec::new();
    for f in exprs {
        all.extend([f.clone(), differentiate(f, "t")]);
    }
    let tape = Tape::compile(&all);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x32);
    let mut pcfg = cfg.clone();
    if let Some(dv) = d.as_f64() {
        pcfg.params.entry("d".into()).or_insert(dv);
    }
    let inputs = Inputs::new(&tape, &pcfg, &mut rng, &["t", "u", "v"]);
    let mut worst = [0.0f64; 2];
    for _ in 0..cfg.pairs * cfg.probes {
        let t = rng.random_range(cfg.t_range.0..cfg.t_range.1);
        let u = rng.random_range(cfg.u_range.0..cfg.u_range.1);
        let v = rng.random_range(cfg.v_range.0..cfg.v_range.1);
        let r = inputs.eval(&tape, &[("t", t), ("u", u), ("v", v)]);
        for k in 0..2 {
            let (val, der) = (r[2 * k], r[2 * k + 1]);
            if val.is_finite() && der.is_finite() {
                worst[k] = worst[k].max(der.abs() / (1.0 + val.abs()));
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::super::tests::same_on_samples;
    use super::*;
    use crate::transforms::apply_map_i;

    #[test]
    fn forward_backward_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let m = LocalPointTransform::random(&mut rng);
            let p = [0.7, -0.3, 1.2, 2.5];
            let q = m.backward(m.forward(p));
            for k in 0..4 {
                assert!((p[k] - q[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_constants_are_refused() {
        let mut c = LocalPointTransform::identity().c;
        c[4] = 0.0;
        assert!(LocalPointTransform::new(c).is_err());
        let mut c = LocalPointTransform::identity().c;
        c[0] = 2.0;
        let m = LocalPointTransform::new(c).unwrap();
        assert!(m.to_map().is_err());
    }

    #[test]
    fn random_instances_match_their_embedding() {
        let sys = RDSystem::parse("2.5", "u^2*v - exp(v)", "u*v + sin(u + v)").unwrap();
        let cfg = MapCheckConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let m = LocalPointTransform::random(&mut rng);
            assert!(m.embedding_discrepancy(&sys, 100, &cfg).unwrap() < 1e-10);
        }
    }

    #[test]
    fn form_preserving_instances_agree() {
        // Linear reactions keep the class closed under the full family.
        let sys = RDSystem::parse("2.5", "0.4*u - 1.3*v + 0.2", "0.7*v - 0.5").unwrap();
        let cfg = MapCheckConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        for _ in 0..10 {
            let mut m = LocalPointTransform::random(&mut rng);
            // Time-dependent factors and drifts only preserve special systems.
            for k in [5, 6, 9, 10, 11] {
                m.c[k] = 0.0;
            }
            let (direct, embedded) = (m.apply(&sys, &cfg), apply_map_i(&sys, &m.to_map().unwrap(), &cfg));
            match (direct, embedded) {
                (Ok(a), Ok(b)) => {
                    assert_eq!(a.d, b.d);
                    assert!(same_on_samples(&a.c1, &b.c1, 100, 1) < 1e-10);
                    assert!(same_on_samples(&a.c2, &b.c2, 100, 2) < 1e-10);
                    checked += 1;
                }
                (Err(_), Err(_)) => {}
                (a, b) => panic!("direct {:?} vs embedded {:?}", a.is_ok(), b.is_ok()),
            }
        }
        assert!(checked > 0);
    }
}
