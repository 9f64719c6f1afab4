//! Registry of the 26 classified systems with purely conditional first-type
//! symmetry operators, their instantiation and verification.

mod aux;
mod particular;

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    invariance_residuals, is_purely_conditional, lie_residuals, EngineError, ManifoldKind,
    ManifoldSpec, RDSystem, ResidualReport, SamplingConfig, SideConstraint, SymmetryOperator,
    Verdict, Verifier,
};
use crate::expr::{
    evaluate, parse, substitute, substitute_fixpoint, Binding, Expr, FunctionTable, ParseError,
    Substitution,
};

pub use aux::{quintic_hermite, AuxFunctionDef, AuxKind, AuxOde, ClosedBranch};
pub use particular::exponential_particular;

const REGISTRY_JSON: &str = include_str!("../../data/catalog.json");

/// Interval on which ODE-defined auxiliary functions are integrated.
pub const AUX_DOMAIN: (f64, f64) = (-1.0, 4.0);
/// Part of the aux domain that must stay free of blow-up.
const AUX_REQUIRED: (f64, f64) = (0.0, 2.5);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("unknown catalog id {0}")]
    UnknownId(u32),
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("auxiliary function `{0}`: {1}")]
    Aux(String, String),
    #[error("no exponential particular solution for `{0}`")]
    NoParticularSolution(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamConstraint {
    /// Expression that must not vanish.
    pub nonzero: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ParamConstraint {
    pub fn describe(&self) -> String {
        self.label.clone().unwrap_or_else(|| format!("{} != 0", self.nonzero))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideConstraintDef {
    pub field: String,
    pub rhs: String,
}

/// One registry row. Templates use `w` for the argument combination `omega`
/// where present, `d` for the diffusivity ratio and the names in `params`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    pub c1: String,
    pub c2: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<String>,
    pub xi0: String,
    pub xi1: String,
    pub eta1: String,
    pub eta2: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub definitions: BTreeMap<String, String>,
    pub params: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub functions: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aux: Vec<String>,
    pub constraints: Vec<ParamConstraint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub side_constraints: Vec<SideConstraintDef>,
}

impl CatalogEntry {
    /// Parameters including `d` when it is free.
    pub fn free_parameters(&self) -> Vec<String> {
        let mut out = self.params.clone();
        if self.d.is_none() {
            out.push("d".into());
        }
        out
    }

    pub fn aux_defs(&self) -> Vec<&'static AuxFunctionDef> {
        self.aux.iter().filter_map(|n| registry().aux_def(n)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub version: u32,
    pub aux: Vec<AuxFunctionDef>,
    pub entries: Vec<CatalogEntry>,
}

impl Registry {
    pub fn entry(&self, id: u32) -> Result<&CatalogEntry, CatalogError> {
        self.entries.iter().find(|e| e.id == id).ok_or(CatalogError::UnknownId(id))
    }

    pub fn aux_def(&self, name: &str) -> Option<&AuxFunctionDef> {
        self.aux.iter().find(|a| a.name == name)
    }

    pub fn ids(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.id).collect()
    }
}

/// The registry embedded in the library.
pub fn registry() -> &'static Registry {
    static REG: OnceLock<Registry> = OnceLock::new();
    REG.get_or_init(|| serde_json::from_str(REGISTRY_JSON).expect("embedded catalog is valid JSON"))
}

/// Concrete parameter values, optional concrete forms of `f`, `g` (as
/// expressions in `w`) and optional initial conditions `[y(0), y'(0)]` for
/// ODE-defined auxiliary functions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterAssignment {
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
    #[serde(default)]
    pub functions: BTreeMap<String, String>,
    #[serde(default)]
    pub initial_conditions: BTreeMap<String, [f64; 2]>,
}

impl ParameterAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn with_function(mut self, name: &str, body: &str) -> Self {
        self.functions.insert(name.to_string(), body.to_string());
        self
    }
}

/// A fully concrete system/operator pair.
#[derive(Clone)]
pub struct Instance {
    pub id: u32,
    pub params: BTreeMap<String, f64>,
    pub system: RDSystem,
    pub operator: SymmetryOperator,
    pub manifold: ManifoldSpec,
    /// Numeric realizations of ODE-defined auxiliary functions.
    pub functions: FunctionTable,
    /// Exponential particular solution for a constraint-defined `p2`.
    pub p2_particular: Option<Expr>,
}

impl std::fmt::Debug for Instance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Instance")
            .field("id", &self.id)
            .field("params", &self.params)
            .field("system", &self.system)
            .field("operator", &self.operator)
            .field("manifold", &self.manifold)
            .field("p2_particular", &self.p2_particular)
            .finish()
    }
}

impl Instance {
    pub fn verifier(&self, config: &SamplingConfig) -> Verifier {
        Verifier {
            config: config.clone(),
            functions: self.functions.clone(),
            ..Default::default()
        }
    }

    /// The same instance with `p2` replaced by its exponential particular
    /// solution and the side constraint dropped.
    pub fn with_particular_p2(&self) -> Result<Instance, CatalogError> {
        let p = self.p2_particular.clone().ok_or_else(|| CatalogError::NoParticularSolution("p2".into()))?;
        let mut sub = Substitution::new();
        for (name, dt, dx) in self.operator.eta2.fields() {
            if name == "p2" {
                let mut e = p.clone();
                for _ in 0..dt {
                    e = crate::expr::differentiate(&e, "t");
                }
                for _ in 0..dx {
                    e = crate::expr::differentiate(&e, "x");
                }
                sub = sub.bind_field("p2", dt, dx, e);
            }
        }
        let mut out = self.clone();
        out.operator = self.operator.map(|c| substitute(c, &sub));
        out.manifold.side_constraints.retain(|c| c.field != "p2");
        Ok(out)
    }
}

fn number(v: f64) -> Expr {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        Expr::int(v as i64)
    } else {
        Expr::float(v)
    }
}

fn eval_const(e: &Expr) -> Result<f64, CatalogError> {
    evaluate(e, &Binding::new()).map_err(|err| CatalogError::ConstraintViolation(format!("{}: {}", e, err)))
}

/// Builds the concrete system, operator and manifold for a registry row.
pub fn instantiate(id: u32, pa: &ParameterAssignment) -> Result<Instance, CatalogError> {
    let entry = registry().entry(id)?;
    let mut values = BTreeMap::new();
    match (entry.d, pa.values.get("d")) {
        (Some(fixed), Some(given)) if (fixed - given).abs() > 0.0 => {
            return Err(CatalogError::ConstraintViolation(format!("d = {} is fixed for case {}", fixed, id)));
        }
        (Some(fixed), _) => {
            values.insert("d".to_string(), fixed);
        }
        (None, Some(given)) => {
            values.insert("d".to_string(), *given);
        }
        (None, None) => return Err(CatalogError::MissingParameter("d".into())),
    }
    let d = values["d"];
    if d == 1.0 {
        return Err(CatalogError::ConstraintViolation("d != 1".into()));
    }
    if d <= 0.0 {
        return Err(CatalogError::ConstraintViolation("d > 0".into()));
    }
    for p in &entry.params {
        let v = pa.values.get(p).ok_or_else(|| CatalogError::MissingParameter(p.clone()))?;
        values.insert(p.clone(), *v);
    }
    let mut sub = Substitution::new();
    for (k, v) in &values {
        sub.insert(k, number(*v));
    }
    for c in &entry.constraints {
        let v = eval_const(&substitute(&parse(&c.nonzero)?, &sub))?;
        if v.abs() < 1e-12 {
            return Err(CatalogError::ConstraintViolation(c.describe()));
        }
    }
    let mut functions = FunctionTable::new();
    for def in entry.aux_defs() {
        match def.kind {
            AuxKind::ClosedForm => {
                let mut chosen = None;
                for b in &def.branches {
                    let take = match &b.when_nonzero {
                        None => true,
                        Some(cond) => eval_const(&substitute(&parse(cond)?, &sub))?.abs() > 1e-12,
                    };
                    if take {
                        chosen = Some(substitute(&parse(&b.body)?, &sub));
                        break;
                    }
                }
                let body = chosen.ok_or_else(|| CatalogError::Aux(def.name.clone(), "no branch applies".into()))?;
                sub.insert_function(&def.name, &def.var, body);
            }
            _ => {
                let rhs = substitute(&parse(def.rhs.as_deref().unwrap_or("0"))?, &sub);
                let [y0, yp0] = pa.initial_conditions.get(&def.name).copied().unwrap_or([1.0, 0.0]);
                let ode = AuxOde::new(&def.var, def.order(), &rhs, y0, yp0, AUX_DOMAIN.0, AUX_DOMAIN.1)
                    .map_err(|e| CatalogError::Aux(def.name.clone(), e))?;
                let (lo, hi) = ode.domain();
                if lo > AUX_REQUIRED.0 || hi < AUX_REQUIRED.1 {
                    return Err(CatalogError::Aux(
                        def.name.clone(),
                        format!("solution blows up; available on [{:.2}, {:.2}]", lo, hi),
                    ));
                }
                functions.insert(def.name.clone(), Arc::new(ode));
            }
        }
    }
    for (name, body) in &pa.functions {
        if !entry.functions.contains(name) {
            return Err(CatalogError::ConstraintViolation(format!("case {} has no function `{}`", id, name)));
        }
        let body = substitute(&parse(body)?, &Substitution::new().bind("w", Expr::sym("__arg")));
        let body = substitute(&body, &sub);
        sub.insert_function(name, "__arg", body);
    }
    for (k, v) in &entry.definitions {
        sub.insert(k, parse(v)?);
    }
    if let Some(omega) = &entry.omega {
        sub.insert("w", parse(omega)?);
    }
    let conv = |s: &str| -> Result<Expr, CatalogError> {
        substitute_fixpoint(&parse(s)?, &sub).map_err(|e| CatalogError::Engine(e.into()))
    };
    let system = RDSystem::new(number(d), conv(&entry.c1)?, conv(&entry.c2)?)?;
    let operator = SymmetryOperator::new(conv(&entry.xi0)?, conv(&entry.xi1)?, conv(&entry.eta1)?, conv(&entry.eta2)?)?;
    let mut side = Vec::new();
    for sc in &entry.side_constraints {
        side.push(SideConstraint::xx(&sc.field, conv(&sc.rhs)?));
    }
    let p2_particular = if id == 25 {
        None
    } else {
        side.iter().find(|c| c.field == "p2").and_then(|c| exponential_particular(&c.rhs, "p2"))
    };
    Ok(Instance {
        id,
        params: values,
        system,
        operator,
        manifold: ManifoldSpec::with_constraints(ManifoldKind::M1U, side),
        functions,
        p2_particular,
    })
}

/// First-type verification of an instance on `M1-u` with its side constraints.
pub fn verify_instance(inst: &Instance, config: &SamplingConfig) -> Result<ResidualReport, CatalogError> {
    Ok(invariance_residuals(&inst.system, &inst.operator, &inst.manifold, &inst.verifier(config))?)
}

pub fn verify_case(id: u32, pa: &ParameterAssignment, config: &SamplingConfig) -> Result<ResidualReport, CatalogError> {
    verify_instance(&instantiate(id, pa)?, config)
}

const MIN_MAGNITUDE: f64 = 0.3;
const MAX_MAGNITUDE: f64 = 1.7;
const DRAW_ATTEMPTS: usize = 200;

fn draw_signed(rng: &mut ChaCha8Rng) -> f64 {
    let m = rng.random_range(MIN_MAGNITUDE..MAX_MAGNITUDE);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

/// Random valid parameters: magnitudes in `[0.3, 1.7]` with random sign, `d`
/// in `[0.3, 3]` away from 1, and every constraint expression and branch
/// condition at least `0.1` away from zero. Redraws when an ODE-defined
/// auxiliary function blows up on the sampling interval.
pub fn draw_parameters(id: u32, rng: &mut ChaCha8Rng) -> Result<ParameterAssignment, CatalogError> {
    let entry = registry().entry(id)?;
    let mut conditions: Vec<Expr> = Vec::new();
    for c in &entry.constraints {
        conditions.push(parse(&c.nonzero)?);
    }
    for def in entry.aux_defs() {
        for b in &def.branches {
            if let Some(cond) = &b.when_nonzero {
                conditions.push(parse(cond)?);
            }
        }
    }
    for _ in 0..DRAW_ATTEMPTS {
        let mut pa = ParameterAssignment::new();
        if entry.d.is_none() {
            let d = loop {
                let d = rng.random_range(0.3..3.0);
                if (d - 1.0f64).abs() > 0.15 {
                    break d;
                }
            };
            pa.values.insert("d".into(), d);
        }
        for p in &entry.params {
            pa.values.insert(p.clone(), draw_signed(rng));
        }
        let mut b = Binding::new();
        for (k, v) in &pa.values {
            b.set(k, *v);
        }
        if let Some(d) = entry.d {
            b.set("d", d);
        }
        let ok = conditions.iter().all(|c| evaluate(c, &b).map(|v| v.abs() >= 0.1).unwrap_or(false));
        if !ok {
            continue;
        }
        match instantiate(id, &pa) {
            Ok(_) => return Ok(pa),
            Err(CatalogError::Aux(..)) | Err(CatalogError::ConstraintViolation(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(CatalogError::ConstraintViolation(format!("no valid parameters found for case {}", id)))
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub params: BTreeMap<String, f64>,
    pub verdict: Verdict,
    pub max_scaled: f64,
    pub samples: usize,
    pub purely_conditional: bool,
    pub lie_verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub id: u32,
    pub passed: bool,
    pub max_scaled: f64,
    pub trials: Vec<TrialResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seed: u64,
    pub trials_per_case: usize,
    pub passed: usize,
    pub total: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn summary(&self) -> String {
        format!("{}/{} pass", self.passed, self.total)
    }
}

fn run_trial(id: u32, trial: usize, config: &SamplingConfig) -> TrialResult {
    let seed = mix(config.seed, id as u64, trial as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SamplingConfig { seed, ..config.clone() };
    let failed = |params: BTreeMap<String, f64>, e: CatalogError| TrialResult {
        trial,
        params,
        verdict: Verdict::Nonzero,
        max_scaled: f64::INFINITY,
        samples: 0,
        purely_conditional: false,
        lie_verdict: Verdict::Nonzero,
        error: Some(e.to_string()),
    };
    let pa = match draw_parameters(id, &mut rng) {
        Ok(pa) => pa,
        Err(e) => return failed(BTreeMap::new(), e),
    };
    let inst = match instantiate(id, &pa) {
        Ok(i) => i,
        Err(e) => return failed(pa.values, e),
    };
    let report = match verify_instance(&inst, &cfg) {
        Ok(r) => r,
        Err(e) => return failed(inst.params, e),
    };
    let verifier = inst.verifier(&cfg);
    let lie = lie_residuals(&inst.system, &inst.operator, &inst.manifold.side_constraints, &verifier)
        .map(|r| r.verdict)
        .unwrap_or(Verdict::Nonzero);
    TrialResult {
        trial,
        params: inst.params.clone(),
        verdict: report.verdict,
        max_scaled: report.equations.iter().map(|e| e.max_scaled).fold(0.0, f64::max),
        samples: report.equations.iter().map(|e| e.samples).min().unwrap_or(0),
        purely_conditional: is_purely_conditional(&inst.operator, &verifier),
        lie_verdict: lie,
        error: None,
    }
}

/// Verifies each id on `trials` random parameter draws. Deterministic for a
/// given `config.seed`.
pub fn sweep(ids: &[u32], trials: usize, config: &SamplingConfig) -> Result<SweepReport, CatalogError> {
    for id in ids {
        registry().entry(*id)?;
    }
    let jobs: Vec<(u32, usize)> = ids.iter().flat_map(|id| (0..trials).map(move |t| (*id, t))).collect();
    let results: Vec<TrialResult> = jobs.par_iter().map(|(id, t)| run_trial(*id, *t, config)).collect();
    let rows: Vec<SweepRow> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let trials: Vec<TrialResult> = results[i * trials..(i + 1) * trials].to_vec();
            SweepRow {
                id: *id,
                passed: trials.iter().all(|t| t.verdict.passed() && t.error.is_none()),
                max_scaled: trials.iter().map(|t| t.max_scaled).fold(0.0, f64::max),
                trials,
            }
        })
        .collect();
    Ok(SweepReport {
        seed: config.seed,
        trials_per_case: trials,
        passed: rows.iter().filter(|r| r.passed).count(),
        total: rows.len(),
        rows,
    })
}
