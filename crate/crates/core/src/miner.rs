//! Counterexample-guided mining of an EFSM.
//!
//! Starting from the zero state and its complement, the miner alternates
//! two rules. Construct adds every transition whose guard is satisfiable in
//! the source state and whose update is satisfiable in the target. RmPath
//! looks for a symbolic path with no concrete witness in the observed
//! history and removes it by splitting a state or dropping a transition.
//!
//! The history is read as a labelled transition system: concrete states
//! are the observed valuations of the state variables and every successful
//! step is an edge. A symbolic path is supported when some chain of
//! observed edges starting at genesis follows it state by state.
//!
//! Under the default [`StateView::Predicates`] two valuations count as one
//! concrete state when the view atoms agree on them. Enum-like integer
//! variables contribute one atom per observed value, so the view is exact
//! on them; wide-ranging values such as stakes and timestamps are only
//! seen through the predicates of the conditions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_bigint::BigInt;
use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::efsm::{EfsmError, Efsm, StateId, SymbolicPath, SymbolicState, TKey, Transition};
use crate::invariants::{build_predicate_pool, Conditions};
use crate::logic::{implies, is_sat, Atom, CmpOp, Domain, Domains, Formula, LogicError, Term};
use crate::slicer::Slice;
use crate::trace::{Binding, ContractSchema, Value};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MinerError {
    #[error("the schema declares no state variables")]
    DegenerateSchema,
    #[error("nothing to mine: no slices")]
    NoSlices,
    #[error("slice {0} does not start from the all-zero state")]
    NonZeroGenesis(String),
    #[error("no conditions for event `{0}`")]
    MissingConditions(String),
    #[error("{used} refinement steps exceed the termination bound {bound}")]
    BudgetExceeded { used: u64, bound: u64 },
    #[error("splitting state q{state} needs {count} explicit valuations (limit {limit}); use coarser predicates")]
    CorpusTooDiverse { state: StateId, count: usize, limit: usize },
    #[error("internal invariant broken: {0}")]
    InvariantBroken(String),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Efsm(#[from] EfsmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathOrder {
    #[default]
    ShortestFirst,
}

/// How observed valuations are identified with one another when the
/// history is read as a transition system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StateView {
    /// Two valuations are the same concrete state when every state-only
    /// predicate of the conditions (and `v == 0` for each state variable)
    /// agrees on them.
    #[default]
    Predicates,
    /// Every distinct valuation is its own concrete state.
    Exact,
}

impl StateView {
    pub fn name(self) -> &'static str {
        match self {
            StateView::Predicates => "predicates",
            StateView::Exact => "exact",
        }
    }
}

impl std::str::FromStr for StateView {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "predicates" => Ok(StateView::Predicates),
            "exact" => Ok(StateView::Exact),
            other => Err(format!("unknown state view `{other}` (expected `predicates` or `exact`)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinerConfig {
    pub view: StateView,
    /// Keep self-loop transitions; spurious paths are then only sought
    /// among paths that use each transition at most once.
    pub allow_loops: bool,
    /// Optional cap on RmPath actions, below the proved bound.
    pub max_rmpath_actions: Option<u64>,
    pub seed: u64,
    pub path_order: PathOrder,
    /// Explicit-valuation splits larger than this abort the run.
    pub max_pred_disjuncts: usize,
    /// Integer state variables with at most this many observed values, all
    /// within a range of this width, get one view atom per value.
    pub view_constants: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig { view: StateView::Predicates, allow_loops: true, max_rmpath_actions: None, seed: 0, path_order: PathOrder::ShortestFirst, max_pred_disjuncts: 256, view_constants: 20 }
    }
}

/// Quantities in the termination bound `(N_s + 1) · n̂ · M · n̂`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TerminationBudget {
    pub n_s: u64,
    pub n_p: u64,
    pub m: u64,
    pub n_hat: u64,
    pub actions_used: u64,
}

impl TerminationBudget {
    pub fn bound(&self) -> u64 {
        (self.n_s + 1) * self.n_hat * self.m * self.n_hat
    }

    pub fn to_json(&self) -> Json {
        let mut o = Map::new();
        o.insert("n_s".into(), Json::from(self.n_s));
        o.insert("n_p".into(), Json::from(self.n_p));
        o.insert("m".into(), Json::from(self.m));
        o.insert("n_hat".into(), Json::from(self.n_hat));
        o.insert("actions_used".into(), Json::from(self.actions_used));
        o.insert("bound".into(), Json::from(self.bound()));
        Json::Object(o)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitKind {
    Guard,
    Pool,
    Valuations(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Construct { added: usize },
    Split { path: String, state: StateId, into: (StateId, StateId), kind: SplitKind },
    Remove { path: String, transition: TKey },
}

impl Action {
    pub fn to_json(&self) -> Json {
        let mut o = Map::new();
        match self {
            Action::Construct { added } => {
                o.insert("rule".into(), Json::String("construct".into()));
                o.insert("added".into(), Json::from(*added as u64));
            }
            Action::Split { path, state, into, kind } => {
                o.insert("rule".into(), Json::String("split".into()));
                o.insert("path".into(), Json::String(path.clone()));
                o.insert("state".into(), Json::from(*state as u64));
                o.insert("into".into(), Json::Array(vec![Json::from(into.0 as u64), Json::from(into.1 as u64)]));
                let by = match kind {
                    SplitKind::Guard => "guard".to_string(),
                    SplitKind::Pool => "pool".to_string(),
                    SplitKind::Valuations(n) => format!("valuations({n})"),
                };
                o.insert("by".into(), Json::String(by));
            }
            Action::Remove { path, transition } => {
                o.insert("rule".into(), Json::String("remove".into()));
                o.insert("path".into(), Json::String(path.clone()));
                o.insert(
                    "transition".into(),
                    Json::String(format!("q{}-{}-q{}", transition.src, transition.event, transition.dst)),
                );
            }
        }
        Json::Object(o)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiningReport {
    pub actions: Vec<Action>,
    pub rmpath_count: u64,
    pub budget: TerminationBudget,
}

impl MiningReport {
    pub fn to_json(&self, m: &Efsm, domains: &Domains) -> Json {
        let mut o = Map::new();
        o.insert("actions".into(), Json::Array(self.actions.iter().map(Action::to_json).collect()));
        o.insert("rmpath_count".into(), Json::from(self.rmpath_count));
        o.insert("budget".into(), self.budget.to_json());
        let states = m
            .states
            .iter()
            .map(|s| {
                let mut so = Map::new();
                so.insert("id".into(), Json::from(s.id as u64));
                so.insert("formula".into(), Json::String(crate::efsm::simplify(&s.formula, domains).to_string()));
                Json::Object(so)
            })
            .collect();
        o.insert("states".into(), Json::Array(states));
        let transitions = m
            .transitions
            .keys()
            .map(|k| Json::String(format!("q{}-{}-q{}", k.src, k.event, k.dst)))
            .collect();
        o.insert("transitions".into(), Json::Array(transitions));
        let support = m
            .support
            .iter()
            .map(|(k, n)| (format!("q{}-{}-q{}", k.src, k.event, k.dst), Json::from(*n)))
            .collect();
        o.insert("support".into(), Json::Object(support));
        Json::Object(o)
    }
}

/// The observed history as a concrete transition system.
#[derive(Debug, Clone)]
pub struct Corpus {
    /// One representative valuation per concrete state.
    pub states: Vec<Binding>,
    /// The formula describing each concrete state: its valuation, or its
    /// truth vector over the view atoms.
    pub describe: Vec<Formula>,
    pub genesis: BTreeSet<usize>,
    /// Outgoing edges per concrete state: event → targets.
    pub edges: Vec<BTreeMap<String, BTreeSet<usize>>>,
    pub slices: usize,
    /// Atoms that identify concrete states; empty in the exact view.
    pub atoms: Vec<Atom>,
}

/// Adds `a` unless an atom already in `atoms` is equivalent to it or to
/// its negation.
fn push_distinct(atoms: &mut Vec<Atom>, a: Atom, domains: &Domains) {
    let fa = Formula::Atom(a.clone());
    let iff = |x: &Formula, y: &Formula| implies(x, y, domains).unwrap_or(false) && implies(y, x, domains).unwrap_or(false);
    let known = atoms.iter().any(|b| {
        let fb = Formula::Atom(b.clone());
        iff(&fa, &fb) || iff(&fa, &Formula::not(fb))
    });
    if !known {
        atoms.push(a);
    }
}

/// State-only atoms of the conditions together with `v == 0` for every
/// state variable, deduplicated up to equivalence.
pub fn view_atoms(conds: &Conditions, schema: &ContractSchema) -> Vec<Atom> {
    let domains = schema.domains();
    let mut atoms = build_predicate_pool(conds, schema).map(|p| p.atoms).unwrap_or_default();
    for p in &schema.state_vars {
        push_distinct(&mut atoms, Atom::var_const(&p.name, CmpOp::Eq, Value::zero_of(p.ty)).canonical(), &domains);
    }
    atoms
}

/// `v == c` for every value observed on an integer state variable whose
/// values are few and close together. Such variables behave like enums,
/// and distinguishing their values keeps the view exact on them.
pub fn enum_atoms(slices: &[Slice], schema: &ContractSchema, max_constants: usize) -> Vec<Atom> {
    let mut seen: BTreeMap<&str, BTreeSet<BigInt>> = BTreeMap::new();
    for step in slices.iter().flat_map(|s| &s.steps) {
        for b in [&step.pre, &step.post] {
            for p in &schema.state_vars {
                if let Some(x) = b.get(&p.name).and_then(Value::as_int) {
                    seen.entry(p.name.as_str()).or_default().insert(x.clone());
                }
            }
        }
    }
    let mut atoms = Vec::new();
    for (var, values) in seen {
        let (Some(lo), Some(hi)) = (values.first(), values.last()) else { continue };
        if values.len() <= max_constants && hi - lo < BigInt::from(max_constants) {
            atoms.extend(values.iter().map(|c| Atom::var_const(var, CmpOp::Eq, Value::Int(c.clone())).canonical()));
        }
    }
    atoms
}

impl Corpus {
    /// Reads the slices as a transition system. `atoms` selects the
    /// predicate view; pass an empty slice for exact valuations.
    pub fn new(slices: &[Slice], schema: &ContractSchema, atoms: &[Atom]) -> Result<Self, MinerError> {
        if slices.is_empty() {
            return Err(MinerError::NoSlices);
        }
        let zero = schema.zero_state();
        let key = |b: &Binding| -> Result<Vec<Option<bool>>, MinerError> {
            if atoms.is_empty() {
                return Ok(Vec::new());
            }
            atoms.iter().map(|a| a.eval(b).map(Some).map_err(MinerError::from)).collect()
        };
        let mut index: BTreeMap<(Vec<Option<bool>>, Option<Binding>), usize> = BTreeMap::new();
        let mut corpus = Corpus {
            states: Vec::new(),
            describe: Vec::new(),
            genesis: BTreeSet::new(),
            edges: Vec::new(),
            slices: slices.len(),
            atoms: atoms.to_vec(),
        };
        let mut intern = |b: &Binding, c: &mut Corpus| -> Result<usize, MinerError> {
            let k = key(b)?;
            let exact = if atoms.is_empty() { Some(b.clone()) } else { None };
            if let Some(&i) = index.get(&(k.clone(), exact.clone())) {
                return Ok(i);
            }
            let describe = if atoms.is_empty() {
                Formula::and(b.iter().map(|(n, v)| Formula::Atom(Atom::var_const(n, CmpOp::Eq, v.clone()))).collect())
            } else {
                Formula::and(
                    atoms
                        .iter()
                        .zip(&k)
                        .map(|(a, t)| Formula::Atom(if *t == Some(true) { a.clone() } else { a.negate() }))
                        .collect(),
                )
            };
            c.states.push(b.clone());
            c.describe.push(describe);
            c.edges.push(BTreeMap::new());
            index.insert((k, exact), c.states.len() - 1);
            Ok(c.states.len() - 1)
        };
        for sl in slices {
            let Some(first) = sl.steps.first() else { continue };
            if first.pre != zero {
                return Err(MinerError::NonZeroGenesis(sl.key_label()));
            }
            let g = intern(&first.pre, &mut corpus)?;
            corpus.genesis.insert(g);
            for step in &sl.steps {
                let a = intern(&step.pre, &mut corpus)?;
                let b = intern(&step.post, &mut corpus)?;
                corpus.edges[a].entry(step.event.clone()).or_default().insert(b);
            }
        }
        if corpus.states.is_empty() {
            // Only empty slices: the history is the genesis state alone.
            let g = intern(&zero, &mut corpus)?;
            corpus.genesis.insert(g);
        }
        Ok(corpus)
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }
}

/// Abstraction of every concrete state under the current model.
fn abstraction(m: &Efsm, corpus: &Corpus) -> Result<Vec<StateId>, MinerError> {
    corpus
        .states
        .iter()
        .map(|s| {
            m.abstract_state(s)?
                .ok_or_else(|| MinerError::InvariantBroken(format!("concrete state {s:?} has no symbolic state")))
        })
        .collect()
}

fn conjuncts(f: &Formula) -> Vec<Formula> {
    match f {
        Formula::And(cs) => cs.iter().flat_map(conjuncts).collect(),
        Formula::True => Vec::new(),
        other => vec![other.clone()],
    }
}

/// `¬f` with the negation pushed into a conjunction of atoms.
fn negate(f: &Formula) -> Formula {
    let parts = conjuncts(f);
    if !parts.is_empty() && parts.iter().all(|p| matches!(p, Formula::Atom(_))) {
        return Formula::or(
            parts
                .iter()
                .map(|p| match p {
                    Formula::Atom(a) => Formula::Atom(a.negate()),
                    _ => unreachable!(),
                })
                .collect(),
        );
    }
    Formula::not(f.clone())
}

fn conj(a: &Formula, b: Formula) -> Formula {
    let mut parts = conjuncts(a);
    parts.extend(conjuncts(&b));
    Formula::and(parts)
}

/// The conjuncts of a guard that mention state variables only.
fn state_projection(guard: &Formula, schema: &ContractSchema) -> Formula {
    let parts = conjuncts(guard)
        .into_iter()
        .filter(|c| {
            let vars = c.free_vars();
            !vars.is_empty() && vars.iter().all(|v| schema.is_state_var(v))
        })
        .collect();
    Formula::and(parts)
}

/// Init: the zero state and its complement, no transitions.
pub fn init(conds: &Conditions, schema: &ContractSchema) -> Result<Efsm, MinerError> {
    if schema.state_vars.is_empty() {
        return Err(MinerError::DegenerateSchema);
    }
    let q0 = Formula::and(
        schema
            .state_vars
            .iter()
            .map(|p| Formula::Atom(Atom::var_const(&p.name, CmpOp::Eq, Value::zero_of(p.ty))))
            .collect(),
    );
    let q1 = negate(&q0);
    let mut m = Efsm::default();
    m.states.push(SymbolicState { id: 0, formula: q0, is_initial: true, parent: None });
    m.states.push(SymbolicState { id: 1, formula: q1, is_initial: false, parent: None });
    m.alphabet.extend(conds.keys().cloned());
    Ok(m)
}

/// Mutable mining state: the model plus caches keyed by state id.
pub struct Miner<'a> {
    pub model: Efsm,
    schema: &'a ContractSchema,
    conds: &'a Conditions,
    domains: Domains,
    corpus: Corpus,
    cfg: MinerConfig,
    pool: Vec<Atom>,
    removed: BTreeSet<TKey>,
    guard_ok: BTreeMap<(StateId, String), bool>,
    update_ok: BTreeMap<(StateId, String), bool>,
    alpha: Vec<StateId>,
    pub report: MiningReport,
}

/// What find_spurious returns: a supported path, the concrete states it
/// reaches, and an outgoing transition whose extension is unsupported.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spurious {
    pub path: SymbolicPath,
    pub reached: BTreeSet<usize>,
    pub next: TKey,
}

/// Concrete states reached by following `t` from `from`.
fn step_states(corpus: &Corpus, alpha: &[StateId], from: &BTreeSet<usize>, t: &TKey) -> BTreeSet<usize> {
    from.iter()
        .filter_map(|&s| corpus.edges[s].get(&t.event))
        .flatten()
        .copied()
        .filter(|&d| alpha[d] == t.dst)
        .collect()
}

/// Breadth-first search over supported paths that use each transition at
/// most once, extensions ordered by (event, target). Returns the first
/// unsupported one-step extension.
pub fn find_spurious(m: &Efsm, corpus: &Corpus) -> Result<Option<Spurious>, MinerError> {
    let alpha = abstraction(m, corpus)?;
    Ok(find_spurious_with(m, corpus, &alpha))
}

fn find_spurious_with(m: &Efsm, corpus: &Corpus, alpha: &[StateId]) -> Option<Spurious> {
    let q0 = m.initial();
    let start: BTreeSet<usize> = corpus.genesis.iter().copied().filter(|&g| alpha[g] == q0).collect();
    let mut queue = VecDeque::from([(SymbolicPath { start: q0, steps: Vec::new() }, start)]);
    // Paths with the same transitions, end and reached states have the same
    // extensions; keep the first.
    let mut seen: BTreeSet<(BTreeSet<TKey>, BTreeSet<usize>)> = BTreeSet::new();
    while let Some((path, reached)) = queue.pop_front() {
        for t in m.outgoing(path.end()) {
            let k = t.key();
            if path.steps.contains(&k) {
                continue;
            }
            let next = step_states(corpus, alpha, &reached, &k);
            if next.is_empty() {
                return Some(Spurious { path, reached, next: k });
            }
            let mut p = path.clone();
            p.steps.push(k);
            let used: BTreeSet<TKey> = p.steps.iter().cloned().collect();
            if seen.insert((used, next.clone())) {
                queue.push_back((p, next));
            }
        }
    }
    None
}

/// Counts supported paths and unsupported extensions among paths that use
/// each transition at most once, without deduplication. Stops after
/// `limit` supported paths and reports whether it finished.
pub fn audit_paths(m: &Efsm, corpus: &Corpus, limit: usize) -> Result<PathAudit, MinerError> {
    let alpha = abstraction(m, corpus)?;
    let q0 = m.initial();
    let start: BTreeSet<usize> = corpus.genesis.iter().copied().filter(|&g| alpha[g] == q0).collect();
    let mut audit = PathAudit { supported: 0, unsupported: 0, complete: true };
    if start.is_empty() {
        audit.unsupported = 1;
        return Ok(audit);
    }
    let mut stack = vec![(SymbolicPath { start: q0, steps: Vec::new() }, start)];
    while let Some((path, reached)) = stack.pop() {
        audit.supported += 1;
        if audit.supported > limit {
            audit.complete = false;
            break;
        }
        for t in m.outgoing(path.end()) {
            let k = t.key();
            if path.steps.contains(&k) {
                continue;
            }
            let next = step_states(corpus, &alpha, &reached, &k);
            if next.is_empty() {
                audit.unsupported += 1;
            } else {
                let mut p = path.clone();
                p.steps.push(k);
                stack.push((p, next));
            }
        }
    }
    Ok(audit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathAudit {
    pub supported: usize,
    pub unsupported: usize,
    pub complete: bool,
}

/// Folds the constant comparisons on each variable of a cube into an
/// interval with holes and writes it back with as few literals as
/// possible: a single point becomes `x == c`, a lower bound `x > c`.
fn as_intervals(cube: &[Formula], domains: &Domains) -> Vec<Formula> {
    #[derive(Default)]
    struct Span {
        lo: Option<BigInt>,
        hi: Option<BigInt>,
        holes: BTreeSet<BigInt>,
    }
    let mut spans: BTreeMap<String, Span> = BTreeMap::new();
    let mut other = Vec::new();
    for lit in cube {
        let Formula::Atom(Atom { lhs, op, rhs: Term::Const(Value::Int(c)) }) = lit else {
            other.push(lit.clone());
            continue;
        };
        let sp = spans.entry(lhs.clone()).or_insert_with(|| match domains.get(lhs) {
            Some(Domain::Int { lo, hi }) => Span { lo: lo.clone(), hi: hi.clone(), holes: BTreeSet::new() },
            _ => Span::default(),
        });
        let raise = |b: &mut Option<BigInt>, v: BigInt| *b = Some(b.take().map_or(v.clone(), |x| x.max(v)));
        let lower = |b: &mut Option<BigInt>, v: BigInt| *b = Some(b.take().map_or(v.clone(), |x| x.min(v)));
        match op {
            CmpOp::Eq => {
                raise(&mut sp.lo, c.clone());
                lower(&mut sp.hi, c.clone());
            }
            CmpOp::Ne => {
                sp.holes.insert(c.clone());
            }
            CmpOp::Lt => lower(&mut sp.hi, c - 1),
            CmpOp::Le => lower(&mut sp.hi, c.clone()),
            CmpOp::Gt => raise(&mut sp.lo, c + 1),
            CmpOp::Ge => raise(&mut sp.lo, c.clone()),
        }
    }
    let mut out = Vec::new();
    for (x, mut sp) in spans {
        // Holes at the ends of the interval just move the end.
        loop {
            if let Some(l) = sp.lo.clone().filter(|l| sp.holes.remove(l)) {
                sp.lo = Some(l + 1);
            } else if let Some(h) = sp.hi.clone().filter(|h| sp.holes.remove(h)) {
                sp.hi = Some(h - 1);
            } else {
                break;
            }
        }
        let (dlo, dhi) = match domains.get(&x) {
            Some(Domain::Int { lo, hi }) => (lo.clone(), hi.clone()),
            _ => (None, None),
        };
        let atom = |op, c: &BigInt| Formula::Atom(Atom::var_const(&x, op, Value::Int(c.clone())));
        match (&sp.lo, &sp.hi) {
            (Some(l), Some(h)) if l == h => out.push(atom(CmpOp::Eq, l)),
            _ => {
                if let Some(l) = sp.lo.as_ref().filter(|l| Some(*l) != dlo.as_ref()) {
                    out.push(atom(CmpOp::Gt, &(l - 1)));
                }
                if let Some(h) = sp.hi.as_ref().filter(|h| Some(*h) != dhi.as_ref()) {
                    out.push(atom(CmpOp::Le, h));
                }
            }
        }
        let inside = |c: &BigInt| sp.lo.as_ref().is_none_or(|l| c > l) && sp.hi.as_ref().is_none_or(|h| c < h);
        for c in sp.holes.iter().filter(|c| inside(c)) {
            out.push(atom(CmpOp::Ne, c));
        }
    }
    out.extend(other);
    out
}


impl<'a> Miner<'a> {
    pub fn new(slices: &[Slice], conds: &'a Conditions, schema: &'a ContractSchema, cfg: MinerConfig) -> Result<Self, MinerError> {
        for sl in slices {
            for step in &sl.steps {
                if !conds.contains_key(&step.event) {
                    return Err(MinerError::MissingConditions(step.event.clone()));
                }
            }
        }
        let model = init(conds, schema)?;
        let (corpus, pool) = match cfg.view {
            StateView::Predicates => {
                let mut atoms = view_atoms(conds, schema);
                let domains = schema.domains();
                for a in enum_atoms(slices, schema, cfg.view_constants) {
                    push_distinct(&mut atoms, a, &domains);
                }
                (Corpus::new(slices, schema, &atoms)?, atoms)
            }
            StateView::Exact => (
                Corpus::new(slices, schema, &[])?,
                build_predicate_pool(conds, schema).map(|p| p.atoms).unwrap_or_default(),
            ),
        };
        let budget = TerminationBudget {
            n_s: corpus.state_count() as u64,
            n_p: corpus.slices as u64,
            m: schema.function_count().max(conds.len()) as u64,
            n_hat: model.states.len() as u64,
            actions_used: 0,
        };
        let mut miner = Miner {
            model,
            schema,
            conds,
            domains: schema.domains(),
            corpus,
            cfg,
            pool,
            removed: BTreeSet::new(),
            guard_ok: BTreeMap::new(),
            update_ok: BTreeMap::new(),
            alpha: Vec::new(),
            report: MiningReport { actions: Vec::new(), rmpath_count: 0, budget },
        };
        miner.alpha = abstraction(&miner.model, &miner.corpus)?;
        Ok(miner)
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    fn feasible(&mut self, q: StateId, event: &str, guard: bool) -> Result<bool, MinerError> {
        let cache = if guard { &self.guard_ok } else { &self.update_ok };
        if let Some(&b) = cache.get(&(q, event.to_string())) {
            return Ok(b);
        }
        let fc = &self.conds[event];
        let cond = if guard { &fc.pre } else { &fc.post };
        let state = &self.model.state(q).expect("known state").formula;
        let ok = is_sat(&conj(state, cond.clone()), &self.domains)?;
        let cache = if guard { &mut self.guard_ok } else { &mut self.update_ok };
        cache.insert((q, event.to_string()), ok);
        Ok(ok)
    }

    /// Construct: adds every feasible transition that was not removed.
    /// Returns the number added.
    pub fn construct(&mut self) -> Result<usize, MinerError> {
        let ids = self.model.state_ids();
        let events: Vec<String> = self.conds.keys().cloned().collect();
        let mut added = 0;
        for &qi in &ids {
            for e in &events {
                if !self.feasible(qi, e, true)? {
                    continue;
                }
                for &qj in &ids {
                    if qi == qj && !self.cfg.allow_loops {
                        continue;
                    }
                    let key = TKey::new(qi, e, qj);
                    if self.model.transitions.contains_key(&key) || self.removed.contains(&key) {
                        continue;
                    }
                    if self.feasible(qj, e, false)? {
                        let fc = &self.conds[e];
                        self.model.add_transition(Transition {
                            src: qi,
                            event: e.clone(),
                            guard: fc.pre.clone(),
                            update: fc.post.clone(),
                            dst: qj,
                        });
                        added += 1;
                    }
                }
            }
        }
        self.report.actions.push(Action::Construct { added });
        Ok(added)
    }

    pub fn find_spurious(&self) -> Option<Spurious> {
        find_spurious_with(&self.model, &self.corpus, &self.alpha)
    }

    fn traversed(&self, t: &TKey) -> bool {
        self.corpus.edges.iter().enumerate().any(|(s, out)| {
            self.alpha[s] == t.src && out.get(&t.event).is_some_and(|ds| ds.iter().any(|&d| self.alpha[d] == t.dst))
        })
    }

    fn replace_state(&mut self, q: StateId, parts: [Formula; 2]) -> Result<(StateId, StateId), MinerError> {
        let pos = self.model.states.iter().position(|s| s.id == q).expect("known state");
        if self.model.states[pos].is_initial {
            return Err(MinerError::InvariantBroken("the initial state was split".into()));
        }
        let old = self.model.states.remove(pos);
        let first = self.model.next_id().max(q + 1);
        let ids = (first, first + 1);
        for (id, f) in [ids.0, ids.1].into_iter().zip(parts) {
            if !is_sat(&f, &self.domains)? {
                return Err(MinerError::InvariantBroken(format!("split of q{q} produced an empty state")));
            }
            self.model.states.push(SymbolicState { id, formula: f, is_initial: false, parent: Some(q) });
        }
        debug_assert!(!old.is_initial);
        let stale: Vec<TKey> = self.model.transitions.keys().filter(|k| k.src == q || k.dst == q).cloned().collect();
        for k in stale {
            self.model.remove_transition(&k);
        }
        self.removed.retain(|k| k.src != q && k.dst != q);
        self.alpha = abstraction(&self.model, &self.corpus)?;
        self.report.budget.n_hat = self.report.budget.n_hat.max(self.model.states.len() as u64);
        Ok(ids)
    }

    fn splits(&self, q: &Formula, p: &Formula) -> Result<bool, MinerError> {
        Ok(is_sat(&conj(q, p.clone()), &self.domains)? && is_sat(&conj(q, negate(p)), &self.domains)?)
    }

    /// SplitRemove for the spurious extension `sp`.
    pub fn split_remove(&mut self, sp: &Spurious) -> Result<(), MinerError> {
        let qn = sp.path.end();
        let qf = self.model.state(qn).expect("known state").formula.clone();
        let path = format!("{}-{}-q{}", sp.path, sp.next.event, sp.next.dst);

        let g = state_projection(&self.conds[&sp.next.event].pre, self.schema);
        if g != Formula::True && self.splits(&qf, &g)? {
            let into = self.replace_state(qn, [conj(&qf, g.clone()), conj(&qf, negate(&g))])?;
            self.report.actions.push(Action::Split { path, state: qn, into, kind: SplitKind::Guard });
            return Ok(());
        }
        if !self.traversed(&sp.next) {
            self.model.remove_transition(&sp.next);
            self.removed.insert(sp.next.clone());
            self.report.actions.push(Action::Remove { path, transition: sp.next.clone() });
            return Ok(());
        }

        // The extension is traversed from concrete states of q_n that this
        // path does not reach. Separate the reached ones from those sources,
        // first by the predicates they share, else state by state.
        let sources: Vec<usize> = (0..self.corpus.states.len())
            .filter(|&s| {
                self.alpha[s] == qn
                    && self.corpus.edges[s]
                        .get(&sp.next.event)
                        .is_some_and(|ds| ds.iter().any(|&d| self.alpha[d] == sp.next.dst))
            })
            .collect();
        let holds = |f: &Formula, s: usize| f.eval(&self.corpus.states[s]).unwrap_or(false);
        let cube = Formula::and(
            self.pool
                .iter()
                .filter(|a| sp.reached.iter().all(|&s| a.eval(&self.corpus.states[s]).unwrap_or(false)))
                .cloned()
                .map(Formula::Atom)
                .collect(),
        );
        if cube != Formula::True && sources.iter().any(|&s| !holds(&cube, s)) && self.splits(&qf, &cube)? {
            let into = self.replace_state(qn, [conj(&qf, cube.clone()), conj(&qf, negate(&cube))])?;
            self.report.actions.push(Action::Split { path, state: qn, into, kind: SplitKind::Pool });
            return Ok(());
        }

        let parts: BTreeSet<&Formula> = sp.reached.iter().map(|&s| &self.corpus.describe[s]).collect();
        let count = parts.len();
        if count > self.cfg.max_pred_disjuncts {
            return Err(MinerError::CorpusTooDiverse { state: qn, count, limit: self.cfg.max_pred_disjuncts });
        }
        let pred = Formula::or(parts.into_iter().cloned().collect());
        if !self.splits(&qf, &pred)? {
            return Err(MinerError::InvariantBroken(format!("no refinement removes {path}")));
        }
        let into = self.replace_state(qn, [conj(&qf, pred.clone()), conj(&qf, Formula::not(pred))])?;
        self.report.actions.push(Action::Split { path, state: qn, into, kind: SplitKind::Valuations(count) });
        Ok(())
    }

    /// Rewrites each state formula as an equivalent conjunction of pool
    /// atoms when one exists, dropping conjuncts the others imply.
    fn tidy(&mut self) -> Result<(), MinerError> {
        for i in 0..self.model.states.len() {
            let f = self.model.states[i].formula.clone();
            let mut cube = Vec::new();
            for a in &self.pool {
                for lit in [a.clone(), a.negate()] {
                    let lit = Formula::Atom(lit);
                    if implies(&f, &lit, &self.domains)? {
                        cube.push(lit);
                    }
                }
            }
            if !implies(&Formula::and(cube.clone()), &f, &self.domains)? {
                continue;
            }
            let mut k = 0;
            while k < cube.len() {
                let rest: Vec<Formula> = cube.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, c)| c.clone()).collect();
                if implies(&Formula::and(rest.clone()), &f, &self.domains)? {
                    cube = rest;
                } else {
                    k += 1;
                }
            }
            let readable = Formula::and(as_intervals(&cube, &self.domains));
            let same = implies(&readable, &f, &self.domains)? && implies(&f, &readable, &self.domains)?;
            self.model.states[i].formula = if same { readable } else { Formula::and(cube) };
        }
        Ok(())
    }

    /// Drops symbolic states that no transition path from q0 reaches. They
    /// hold no observed concrete state: every observed state lies on a
    /// replayed session.
    fn prune_unreachable(&mut self) {
        let mut seen: BTreeSet<StateId> = [self.model.initial()].into();
        let mut queue = VecDeque::from([self.model.initial()]);
        while let Some(q) = queue.pop_front() {
            for t in self.model.outgoing(q) {
                if seen.insert(t.dst) {
                    queue.push_back(t.dst);
                }
            }
        }
        let dead: Vec<TKey> = self.model.transitions.keys().filter(|k| !seen.contains(&k.src)).cloned().collect();
        for k in dead {
            self.model.remove_transition(&k);
        }
        self.model.states.retain(|s| seen.contains(&s.id));
    }

    /// Runs the fair schedule to completion.
    pub fn run(mut self) -> Result<(Efsm, MiningReport), MinerError> {
        self.construct()?;
        while let Some(sp) = self.find_spurious() {
            self.report.rmpath_count += 1;
            self.report.budget.actions_used += 1;
            let bound = self.report.budget.bound();
            let cap = self.cfg.max_rmpath_actions.map_or(bound, |c| c.min(bound));
            if self.report.budget.actions_used > cap {
                return Err(MinerError::BudgetExceeded { used: self.report.budget.actions_used, bound: cap });
            }
            log::debug!("spurious: {}-{}-q{}", sp.path, sp.next.event, sp.next.dst);
            let before = self.model.states.len();
            self.split_remove(&sp)?;
            if self.model.states.len() != before {
                while self.construct()? > 0 {}
            }
        }
        self.prune_unreachable();
        self.tidy()?;
        let slices = self.corpus.slices;
        log::info!(
            "mined {} states and {} transitions from {} slices in {} refinement steps",
            self.model.states.len(),
            self.model.transitions.len(),
            slices,
            self.report.rmpath_count
        );
        Ok((self.model, self.report))
    }
}

/// Mines an EFSM from sliced sessions and inferred conditions.
pub fn mine(slices: &[Slice], conds: &Conditions, schema: &ContractSchema, cfg: &MinerConfig) -> Result<(Efsm, MiningReport), MinerError> {
    let (mut model, report) = Miner::new(slices, conds, schema, cfg.clone())?.run()?;
    if !cfg.allow_loops {
        // Without self-loops a session that repeats a state cannot replay.
        model.replay_all(slices)?;
        return Ok((model, report));
    }
    for (i, r) in model.replay_all(slices)?.iter().enumerate() {
        if !r.is_accepted() {
            return Err(MinerError::InvariantBroken(format!("training slice {i} does not replay: {r:?}")));
        }
    }
    Ok((model, report))
}
