use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expr::{self, expand, Expr, FunctionTable, OpaqueFn, SymbolKind, Tape};

use super::residuals::{EquationResidual, Verdict};

/// Ranges for the sampled coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub t: (f64, f64),
    pub x: (f64, f64),
    pub u: (f64, f64),
    pub v: (f64, f64),
    pub jets: (f64, f64),
    pub fields: (f64, f64),
    pub params: (f64, f64),
}

impl Default for SampleBox {
    fn default() -> Self {
        SampleBox {
            t: (0.1, 2.0),
            x: (0.1, 2.0),
            u: (0.2, 3.0),
            v: (0.2, 3.0),
            jets: (-1.0, 1.0),
            fields: (-1.0, 1.0),
            params: (0.3, 1.7),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Points per function realization.
    pub samples: usize,
    /// Random cubic realizations of every unbound opaque function.
    pub random_cubics: usize,
    /// Add the realization where every unbound opaque function is `exp(0.3 w)`.
    pub exponential: bool,
    pub seed: u64,
    /// A residual passes when `|r| <= tolerance * (1 + scale)`.
    pub tolerance: f64,
    /// Redraws of a point whose evaluation is not finite.
    pub max_retries: usize,
    pub sample_box: SampleBox,
    /// Divide the operator by `xi0` before prolongation.
    pub normalize: bool,
    /// Largest expression size attempted symbolically.
    pub symbolic_size_limit: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            samples: 200,
            random_cubics: 3,
            exponential: true,
            seed: 0,
            tolerance: 1e-9,
            max_retries: 10,
            sample_box: SampleBox::default(),
            normalize: false,
            symbolic_size_limit: 4000,
        }
    }
}

/// `c0 + c1 w + c2 w^2 + c3 w^3`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cubic(pub [f64; 4]);

impl OpaqueFn for Cubic {
    fn deriv(&self, order: u32, w: f64) -> f64 {
        let c = &self.0;
        match order {
            0 => c[0] + w * (c[1] + w * (c[2] + w * c[3])),
            1 => c[1] + w * (2.0 * c[2] + 3.0 * w * c[3]),
            2 => 2.0 * c[2] + 6.0 * w * c[3],
            3 => 6.0 * c[3],
            _ => 0.0,
        }
    }
}

/// `exp(rate * w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledExp {
    pub rate: f64,
}

impl OpaqueFn for ScaledExp {
    fn deriv(&self, order: u32, w: f64) -> f64 {
        self.rate.powi(order as i32) * (self.rate * w).exp()
    }
}

/// Seeded zero tester. Opaque functions and parameters listed here are held
/// fixed; everything else unbound is drawn per realization.
#[derive(Clone, Default)]
pub struct Verifier {
    pub config: SamplingConfig,
    pub functions: FunctionTable,
    pub params: BTreeMap<String, f64>,
    /// Per-symbol sampling ranges that override the box.
    pub ranges: BTreeMap<String, (f64, f64)>,
}

impl std::fmt::Debug for Verifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let funcs: BTreeSet<&String> = self.functions.keys().collect();
        f.debug_struct("Verifier")
            .field("config", &self.config)
            .field("functions", &funcs)
            .field("params", &self.params)
            .field("ranges", &self.ranges)
            .finish()
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Realization {
    funcs: Vec<Arc<dyn OpaqueFn>>,
    params: BTreeMap<String, f64>,
}

struct PointResult {
    values: Vec<(f64, f64)>,
    vars: Vec<f64>,
}

impl Verifier {
    pub fn new(config: SamplingConfig) -> Self {
        Verifier {
            config,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.config.seed = seed;
        self
    }

    pub fn with_function(mut self, name: &str, f: Arc<dyn OpaqueFn>) -> Self {
        self.functions.insert(name.to_string(), f);
        self
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn with_range(mut self, name: &str, range: (f64, f64)) -> Self {
        self.ranges.insert(name.to_string(), range);
        self
    }

    fn range_of(&self, name: &str) -> (f64, f64) {
        if let Some(r) = self.ranges.get(name) {
            return *r;
        }
        let b = &self.config.sample_box;
        match name {
            "t" => b.t,
            "x" => b.x,
            "u" => b.u,
            "v" => b.v,
            _ if expr::symbol_kind(name) == SymbolKind::Jet => b.jets,
            _ => b.params,
        }
    }

    fn realizations(&self, tape: &Tape, salt: u64) -> Vec<Realization> {
        let unbound_fns: Vec<&String> =
            tape.functions().iter().filter(|f| !self.functions.contains_key(*f)).collect();
        let unbound_params: Vec<&String> = tape
            .symbols()
            .iter()
            .filter(|s| expr::symbol_kind(s) == SymbolKind::Parameter && !self.params.contains_key(*s))
            .collect();
        let mut count = self.config.random_cubics + usize::from(self.config.exponential);
        if unbound_fns.is_empty() && unbound_params.is_empty() {
            count = 1;
        }
        let count = count.max(1);
        (0..count)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(self.config.seed, salt));
                rng.set_stream(u64::MAX - k as u64);
                let exp_slot = self.config.exponential && k == count - 1 && !unbound_fns.is_empty();
                let funcs = tape
                    .functions()
                    .iter()
                    .map(|name| -> Arc<dyn OpaqueFn> {
                        if let Some(f) = self.functions.get(name) {
                            f.clone()
                        } else if exp_slot {
                            Arc::new(ScaledExp { rate: 0.3 })
                        } else {
                            let mut c = [0.0; 4];
                            for ci in &mut c {
                                *ci = rng.random_range(-2.0..2.0);
                            }
                            Arc::new(Cubic(c))
                        }
                    })
                    .collect();
                let params = unbound_params
                    .iter()
                    .map(|p| ((*p).clone(), draw(&mut rng, self.range_of(p))))
                    .collect();
                Realization { funcs, params }
            })
            .collect()
    }

    fn sample_point(&self, tape: &Tape, real: &Realization, rng: &mut ChaCha8Rng) -> Option<PointResult> {
        let funcs: Vec<&dyn OpaqueFn> = real.funcs.iter().map(|f| f.as_ref()).collect();
        for _ in 0..=self.config.max_retries {
            let vars: Vec<f64> = tape
                .symbols()
                .iter()
                .map(|s| {
                    if let Some(v) = self.params.get(s).or_else(|| real.params.get(s)) {
                        *v
                    } else {
                        draw(rng, self.range_of(s))
                    }
                })
                .collect();
            let fields: Vec<f64> =
                tape.fields().iter().map(|_| draw(rng, self.config.sample_box.fields)).collect();
            let values = tape.eval_scaled(&vars, &fields, &funcs);
            if values.iter().all(|(v, s)| v.is_finite() && s.is_finite()) {
                return Some(PointResult { values, vars });
            }
        }
        None
    }

    /// Decides each expression: structural zero after expansion, otherwise
    /// the worst scaled residual over all realizations and sample points.
    pub fn check(&self, eqs: &[(String, Expr)], salt: u64) -> Vec<EquationResidual> {
        let exprs: Vec<Expr> = eqs.iter().map(|(_, e)| e.clone()).collect();
        let proved: Vec<bool> = exprs
            .par_iter()
            .map(|e| e.is_zero() || (e.size() <= self.config.symbolic_size_limit && expand(e).is_zero()))
            .collect();
        let tape = Tape::compile(&exprs);
        let reals = self.realizations(&tape, salt);
        let n = self.config.samples.max(1);
        let base_seed = mix(self.config.seed, salt);
        let points: Vec<Option<PointResult>> = (0..reals.len() * n)
            .into_par_iter()
            .map(|i| {
                let (k, j) = (i / n, i % n);
                let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
                rng.set_stream(((k as u64) << 32) | j as u64);
                self.sample_point(&tape, &reals[k], &mut rng)
            })
            .collect();
        eqs.iter()
            .enumerate()
            .map(|(idx, (id, e))| {
                let mut max_abs: f64 = 0.0;
                let mut max_scaled: f64 = 0.0;
                let mut worst: Option<&PointResult> = None;
                let mut failed = 0usize;
                for p in &points {
                    match p {
                        None => failed += 1,
                        Some(p) => {
                            let (v, s) = p.values[idx];
                            let r = v.abs() / (1.0 + s);
                            max_abs = max_abs.max(v.abs());
                            if r > max_scaled || worst.is_none() {
                                max_scaled = max_scaled.max(r);
                                worst = Some(p);
                            }
                        }
                    }
                }
                if failed > 0 {
                    max_abs = f64::INFINITY;
                    max_scaled = f64::INFINITY;
                }
                let verdict = if proved[idx] {
                    Verdict::ProvedZero
                } else if max_scaled <= self.config.tolerance {
                    Verdict::NumericallyZero
                } else {
                    Verdict::Nonzero
                };
                let worst_point = worst
                    .map(|p| tape.symbols().iter().cloned().zip(p.vars.iter().copied()).collect())
                    .unwrap_or_default();
                EquationResidual {
                    id: id.clone(),
                    symbolic: super::residuals::render(e),
                    verdict,
                    max_abs,
                    max_scaled,
                    samples: points.len() - failed,
                    failed_points: failed,
                    worst_point,
                }
            })
            .collect()
    }

    /// True when `e` is zero on every sample (structurally or numerically).
    pub fn is_zero(&self, e: &Expr, salt: u64) -> bool {
        self.check(&[("e".to_string(), e.clone())], salt)[0].verdict.passed()
    }
}
