//! Likely pre-/post-conditions per function, inferred from successful
//! observations by instantiating comparison templates and keeping the
//! candidates no observation falsifies.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::logic::{implies, parse_formula, Atom, CmpOp, Domains, Formula, LogicError, Term};
use crate::slicer::Slice;
use crate::trace::{Binding, ContractSchema, ObservationStep, ParamDecl, Value, ValueType};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InvariantError {
    #[error("no observations to infer from")]
    NoObservations,
    #[error("no predicate over state variables survived inference")]
    EmptyPool,
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("malformed conditions report: {0}")]
    Malformed(String),
    #[error("step {seq} of `{event}` violates its inferred {which}condition")]
    Unsound { event: String, seq: u64, which: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferOptions {
    /// Events observed fewer times get unconstrained conditions.
    pub min_support: usize,
    /// Parameters left out of every template, typically session keys.
    pub exclude_params: BTreeSet<String>,
    /// Variables with more distinct observed values than this only get
    /// the constants 0 and 1.
    pub max_constants: usize,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions { min_support: 1, exclude_params: BTreeSet::new(), max_constants: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionConditions {
    pub event: String,
    pub pre: Formula,
    pub post: Formula,
    pub support: usize,
}

pub type Conditions = BTreeMap<String, FunctionConditions>;

/// Distinct successful steps across all slices. Slices built in the formal
/// mode may share steps, and a step counts once.
fn observations(slices: &[Slice]) -> BTreeSet<&ObservationStep> {
    slices.iter().flat_map(|s| s.steps.iter()).filter(|s| s.is_success()).collect()
}

struct Templates<'a> {
    schema: &'a ContractSchema,
    constants: BTreeMap<String, Vec<Value>>,
    /// Variables with few enough distinct values to be treated as enums.
    enum_like: BTreeSet<String>,
}

impl<'a> Templates<'a> {
    fn new(schema: &'a ContractSchema, obs: &BTreeSet<&ObservationStep>, max_constants: usize) -> Self {
        let mut seen: BTreeMap<String, BTreeSet<Value>> = BTreeMap::new();
        for s in obs {
            for (k, v) in s.args.iter().chain(&s.pre).chain(&s.post) {
                seen.entry(k.clone()).or_default().insert(v.clone());
            }
        }
        let mut constants = BTreeMap::new();
        let mut enum_like = BTreeSet::new();
        for (name, values) in seen {
            let Some(ty) = schema.type_of(&name) else { continue };
            // Enum-like: few values packed into a narrow range. Scattered
            // values (amounts, ids) would otherwise each become a constant.
            let ints: Vec<&BigInt> = values.iter().filter_map(Value::as_int).collect();
            let narrow = match (ints.iter().min(), ints.iter().max()) {
                (Some(lo), Some(hi)) => *hi - *lo < BigInt::from(max_constants),
                _ => true,
            };
            let few = values.len() <= max_constants && narrow;
            // On wide ranges 1 only produces `x > 1` next to `x > 0`.
            let mut k: BTreeSet<Value> = match ty {
                ValueType::Addr => [Value::zero_of(ty)].into(),
                _ if few => [Value::int(0), Value::int(1)].into(),
                _ => [Value::int(0)].into(),
            };
            if ty != ValueType::Bool && few {
                k.extend(values);
                enum_like.insert(name.clone());
            }
            constants.insert(name, k.into_iter().collect());
        }
        Templates { schema, constants, enum_like }
    }

    fn decl(&self, name: &str) -> &ParamDecl {
        self.schema.decl(name).expect("parameter declared in schema").0
    }

    fn comparable(&self, x: &str, y: &str) -> bool {
        let (a, b) = (self.decl(x), self.decl(y));
        match (a.ty, b.ty) {
            (ValueType::Addr, ValueType::Addr) | (ValueType::Bool, ValueType::Bool) => true,
            (ValueType::Int | ValueType::Uint, ValueType::Int | ValueType::Uint) => a.unit == b.unit,
            _ => false,
        }
    }

    /// Candidate atoms over `params`, given the valuations they must hold
    /// on (used to restrict `x != c` to constants inside the observed range).
    fn candidates(&self, params: &[String], samples: &[Binding]) -> Vec<Atom> {
        let mut out = Vec::new();
        for (i, x) in params.iter().enumerate() {
            let ty = self.decl(x).ty;
            let range = int_range(samples, x);
            for c in self.constants.get(x).into_iter().flatten() {
                for op in ops_for(ty) {
                    if op == CmpOp::Ne {
                        if !self.enum_like.contains(x) {
                            continue;
                        }
                        let inside = match (c, &range) {
                            (Value::Int(c), Some((lo, hi))) => lo < c && c < hi,
                            _ => false,
                        };
                        if !inside {
                            continue;
                        }
                    }
                    out.push(Atom::var_const(x, op, c.clone()));
                }
            }
            for y in &params[i + 1..] {
                if self.comparable(x, y) {
                    for op in ops_for(ty) {
                        out.push(Atom::var_var(x, op, y));
                    }
                }
            }
        }
        out
    }
}

fn ops_for(ty: ValueType) -> Vec<CmpOp> {
    match ty {
        ValueType::Addr => vec![CmpOp::Eq, CmpOp::Ne],
        _ => CmpOp::ALL.to_vec(),
    }
}

fn int_range(samples: &[Binding], x: &str) -> Option<(BigInt, BigInt)> {
    let mut it = samples.iter().filter_map(|b| b.get(x).and_then(Value::as_int));
    let first = it.next()?.clone();
    Some(it.fold((first.clone(), first), |(lo, hi), v| (lo.min(v.clone()), hi.max(v.clone()))))
}

fn survivors(cands: Vec<Atom>, samples: &[Binding]) -> BTreeSet<Atom> {
    cands
        .into_iter()
        .filter(|a| samples.iter().all(|v| a.eval(v).unwrap_or(false)))
        .map(|a| a.canonical())
        .collect()
}

/// Readability order for pruning: equalities first, then bounds, then
/// disequalities; state-only atoms before mixed ones; small constants first.
fn rank(a: &Atom, schema: &ContractSchema) -> impl Ord {
    let class = match a.op {
        CmpOp::Eq => 0,
        CmpOp::Ne => 2,
        _ => 1,
    };
    let mixed = !a.vars().all(|v| schema.is_state_var(v));
    let (var_var, mag) = match &a.rhs {
        Term::Var(_) => (true, BigInt::zero()),
        Term::Const(Value::Int(k)) => (false, k.abs()),
        Term::Const(Value::Addr(_)) => (false, BigInt::zero()),
    };
    (class, mixed, var_var, mag, a.to_string())
}

fn is_bound(a: &Atom) -> bool {
    !a.op.is_equality() && matches!(a.rhs, Term::Const(_))
}

/// Keeps an atom only if the atoms kept so far do not already imply it.
/// Bounds implied by `invariant` are dropped as well: they restate facts
/// true of every observed state rather than anything about the function.
fn prune(atoms: BTreeSet<Atom>, invariant: &Formula, schema: &ContractSchema, domains: &Domains) -> Result<Vec<Atom>, LogicError> {
    let mut sorted: Vec<Atom> = atoms.into_iter().collect();
    sorted.sort_by_cached_key(|a| rank(a, schema));
    let mut kept: Vec<Atom> = Vec::new();
    for a in sorted {
        let target = Formula::Atom(a.clone());
        if is_bound(&a) && a.vars().all(|v| schema.is_state_var(v)) && implies(invariant, &target, domains)? {
            continue;
        }
        let ctx = Formula::and(kept.iter().cloned().map(Formula::Atom).collect());
        if !implies(&ctx, &target, domains)? {
            kept.push(a);
        }
    }
    // A later, stronger atom can make an earlier one redundant.
    let mut i = kept.len();
    while i > 0 {
        i -= 1;
        let rest = Formula::and(kept.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, a)| Formula::Atom(a.clone())).collect());
        if implies(&rest, &Formula::Atom(kept[i].clone()), domains)? {
            kept.remove(i);
        }
    }
    Ok(kept)
}

/// Bounds on state variables that hold in every observed state.
fn state_invariant(t: &Templates, schema: &ContractSchema, obs: &BTreeSet<&ObservationStep>) -> Formula {
    let vars: Vec<String> = schema.state_var_names().map(str::to_string).collect();
    let states: Vec<Binding> = obs.iter().flat_map(|s| [s.pre.clone(), s.post.clone()]).collect();
    let found = survivors(t.candidates(&vars, &states), &states);
    Formula::and(found.into_iter().filter(is_bound).map(Formula::Atom).collect())
}

/// Infers a precondition and a post-condition for every observed event.
pub fn infer_conditions(slices: &[Slice], schema: &ContractSchema, opts: &InferOptions) -> Result<Conditions, InvariantError> {
    let obs = observations(slices);
    if obs.is_empty() {
        return Err(InvariantError::NoObservations);
    }
    let domains = schema.domains();
    let templates = Templates::new(schema, &obs, opts.max_constants);
    let invariant = state_invariant(&templates, schema, &obs);
    log::debug!("state invariant: {invariant}");

    let mut by_event: BTreeMap<&str, Vec<&ObservationStep>> = BTreeMap::new();
    for s in &obs {
        by_event.entry(s.event.as_str()).or_default().push(s);
    }
    let mut out = Conditions::new();
    for (event, steps) in by_event {
        let support = steps.len();
        if support < opts.min_support {
            log::warn!("`{event}` observed {support} times, below the minimum support; leaving it unconstrained");
            out.insert(
                event.to_string(),
                FunctionConditions { event: event.to_string(), pre: Formula::True, post: Formula::True, support },
            );
            continue;
        }
        let pre: Vec<Binding> = steps.iter().map(|s| s.pre_valuation()).collect();
        let post: Vec<Binding> = steps.iter().map(|s| s.post_valuation()).collect();
        let params = relevant_params(schema, event, &pre, &opts.exclude_params);
        let infer = |samples: &[Binding]| -> Result<Formula, LogicError> {
            let found = survivors(templates.candidates(&params, samples), samples);
            let kept = prune(found, &invariant, schema, &domains)?;
            Ok(Formula::and(kept.into_iter().map(Formula::Atom).collect()))
        };
        let fc = FunctionConditions { event: event.to_string(), pre: infer(&pre)?, post: infer(&post)?, support };
        log::debug!("{event}: pre {} / post {}", fc.pre, fc.post);
        out.insert(event.to_string(), fc);
    }
    Ok(out)
}

/// State variables, the event's inputs and the environment symbols bound in
/// every observation, minus exclusions, in a fixed order.
fn relevant_params(schema: &ContractSchema, event: &str, samples: &[Binding], exclude: &BTreeSet<String>) -> Vec<String> {
    let mut names: Vec<String> = schema.state_var_names().map(str::to_string).collect();
    if let Some(f) = schema.function(event) {
        names.extend(f.inputs.iter().map(|p| p.name.clone()));
    }
    names.extend(schema.env.iter().map(|p| p.name.clone()));
    let mut seen = BTreeSet::new();
    names
        .into_iter()
        .filter(|n| !exclude.contains(n) && seen.insert(n.clone()))
        .filter(|n| samples.iter().all(|b| b.contains_key(n)))
        .collect()
}

/// Checks every observation against its event's conditions.
pub fn check_conditions(conds: &Conditions, slices: &[Slice]) -> Result<(), InvariantError> {
    for s in observations(slices) {
        let Some(fc) = conds.get(&s.event) else { continue };
        if !fc.pre.eval(&s.pre_valuation())? {
            return Err(InvariantError::Unsound { event: s.event.clone(), seq: s.seq, which: "pre" });
        }
        if !fc.post.eval(&s.post_valuation())? {
            return Err(InvariantError::Unsound { event: s.event.clone(), seq: s.seq, which: "post" });
        }
    }
    Ok(())
}

/// State predicates used for abstraction.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PredicatePool {
    pub atoms: Vec<Atom>,
}

impl PredicatePool {
    pub fn contains_equivalent(&self, a: &Atom, domains: &Domains) -> bool {
        let target = Formula::Atom(a.clone());
        self.atoms.iter().any(|b| {
            let b = Formula::Atom(b.clone());
            implies(&b, &target, domains).unwrap_or(false) && implies(&target, &b, domains).unwrap_or(false)
        })
    }
}

/// Positive representative of an atom: `!=` becomes `==` and upper bounds
/// become the complementary lower bound.
fn positive(a: &Atom) -> Atom {
    let flipped = match (a.op, &a.rhs) {
        (CmpOp::Ne, _) => a.negate(),
        (CmpOp::Lt | CmpOp::Le, Term::Const(_)) => a.negate(),
        _ => a.clone(),
    };
    flipped.canonical()
}

/// Collects the state-only atoms of all conditions.
pub fn build_predicate_pool(conds: &Conditions, schema: &ContractSchema) -> Result<PredicatePool, InvariantError> {
    let domains = schema.domains();
    let mut found: BTreeSet<Atom> = BTreeSet::new();
    for fc in conds.values() {
        for a in fc.pre.atoms().into_iter().chain(fc.post.atoms()) {
            if a.vars().all(|v| schema.is_state_var(v)) {
                found.insert(positive(a));
            }
        }
    }
    let mut pool = PredicatePool::default();
    for a in found {
        if !pool.contains_equivalent(&a, &domains) {
            pool.atoms.push(a);
        }
    }
    if pool.atoms.is_empty() {
        return Err(InvariantError::EmptyPool);
    }
    Ok(pool)
}

pub fn conditions_to_json(conds: &Conditions) -> Json {
    let mut m = Map::new();
    for (event, fc) in conds {
        let mut e = Map::new();
        e.insert("pre".into(), Json::String(fc.pre.to_string()));
        e.insert("post".into(), Json::String(fc.post.to_string()));
        e.insert("support".into(), Json::from(fc.support as u64));
        m.insert(event.clone(), Json::Object(e));
    }
    Json::Object(m)
}

pub fn conditions_from_json(j: &Json) -> Result<Conditions, InvariantError> {
    let bad = |m: String| InvariantError::Malformed(m);
    let obj = j.as_object().ok_or_else(|| bad("expected an object keyed by event".into()))?;
    let mut out = Conditions::new();
    for (event, e) in obj {
        let field = |k: &str| -> Result<Formula, InvariantError> {
            let text = e.get(k).and_then(Json::as_str).ok_or_else(|| bad(format!("`{event}.{k}` must be formula text")))?;
            Ok(parse_formula(text)?)
        };
        let support = e
            .get("support")
            .and_then(Json::as_u64)
            .ok_or_else(|| bad(format!("`{event}.support` must be a count")))?;
        out.insert(
            event.clone(),
            FunctionConditions { event: event.clone(), pre: field("pre")?, post: field("post")?, support: support as usize },
        );
    }
    Ok(out)
}
