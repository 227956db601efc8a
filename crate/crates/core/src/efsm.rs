//! Extended finite state machines over symbolic states.
//!
//! A state is a formula over state variables; a transition carries the
//! guard and update of its event. Concrete valuations map to the unique
//! state whose formula they satisfy.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::baselines::Fsm;
use crate::logic::{implies, is_sat, parse_formula, Domains, Formula, LogicError};
use crate::slicer::Slice;
use crate::trace::Binding;

pub type StateId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EfsmError {
    #[error("valuation {valuation} satisfies states {ids:?}")]
    AmbiguousAbstraction { valuation: String, ids: Vec<StateId> },
    #[error("state {0} is unsatisfiable")]
    EmptyState(StateId),
    #[error("states {0} and {1} overlap")]
    Overlap(StateId, StateId),
    #[error("expected exactly one initial state, found {0}")]
    InitialCount(usize),
    #[error("transition refers to unknown state {0}")]
    DanglingState(StateId),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("malformed model: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicState {
    pub id: StateId,
    pub formula: Formula,
    pub is_initial: bool,
    /// The state this one was split from, for debugging.
    pub parent: Option<StateId>,
}

/// Identity of a transition. Guard and update are determined by the event.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TKey {
    pub src: StateId,
    pub event: String,
    pub dst: StateId,
}

impl TKey {
    pub fn new(src: StateId, event: &str, dst: StateId) -> Self {
        TKey { src, event: event.to_string(), dst }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub src: StateId,
    pub event: String,
    pub guard: Formula,
    pub update: Formula,
    pub dst: StateId,
}

impl Transition {
    pub fn key(&self) -> TKey {
        TKey::new(self.src, &self.event, self.dst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Efsm {
    pub states: Vec<SymbolicState>,
    pub transitions: BTreeMap<TKey, Transition>,
    pub alphabet: BTreeSet<String>,
    pub support: BTreeMap<TKey, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    NoState,
    NoTransition,
    GuardFalse,
    UpdateFalse,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Replay {
    Accepted(Vec<StateId>),
    Rejected { index: usize, reason: RejectReason },
}

impl Replay {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Replay::Accepted(_))
    }
}

/// `q₀ t₁ q₁ … tₙ qₙ`, stored as its start state and transitions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SymbolicPath {
    pub start: StateId,
    pub steps: Vec<TKey>,
}

impl SymbolicPath {
    pub fn end(&self) -> StateId {
        self.steps.last().map_or(self.start, |t| t.dst)
    }

    pub fn states(&self) -> Vec<StateId> {
        std::iter::once(self.start).chain(self.steps.iter().map(|t| t.dst)).collect()
    }

    pub fn events(&self) -> Vec<&str> {
        self.steps.iter().map(|t| t.event.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl std::fmt::Display for SymbolicPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "q{}", self.start)?;
        for t in &self.steps {
            write!(f, "-{}-q{}", t.event, t.dst)?;
        }
        Ok(())
    }
}

impl Efsm {
    pub fn state(&self, id: StateId) -> Option<&SymbolicState> {
        self.states.iter().find(|s| s.id == id)
    }

    pub fn initial(&self) -> StateId {
        self.states.iter().find(|s| s.is_initial).map(|s| s.id).expect("model has an initial state")
    }

    pub fn state_ids(&self) -> Vec<StateId> {
        self.states.iter().map(|s| s.id).collect()
    }

    pub fn next_id(&self) -> StateId {
        self.states.iter().map(|s| s.id + 1).max().unwrap_or(0)
    }

    pub fn add_transition(&mut self, t: Transition) {
        self.alphabet.insert(t.event.clone());
        self.transitions.insert(t.key(), t);
    }

    pub fn remove_transition(&mut self, key: &TKey) -> Option<Transition> {
        self.support.remove(key);
        self.transitions.remove(key)
    }

    /// Outgoing transitions of `src` ordered by event name, then target.
    pub fn outgoing(&self, src: StateId) -> impl Iterator<Item = &Transition> {
        self.transitions
            .range(TKey::new(src, "", 0)..)
            .take_while(move |(k, _)| k.src == src)
            .map(|(_, t)| t)
    }

    /// α(s): the unique state whose formula holds on `s`.
    pub fn abstract_state(&self, s: &Binding) -> Result<Option<StateId>, EfsmError> {
        let mut hits = Vec::new();
        for q in &self.states {
            if q.formula.eval(s)? {
                hits.push(q.id);
            }
        }
        match hits.len() {
            0 => Ok(None),
            1 => Ok(Some(hits[0])),
            _ => Err(EfsmError::AmbiguousAbstraction { valuation: fmt_binding(s), ids: hits }),
        }
    }

    /// Walks a slice through the model without touching support counters.
    pub fn replay(&self, slice: &Slice) -> Result<Replay, EfsmError> {
        let mut path = Vec::with_capacity(slice.steps.len() + 1);
        for (index, step) in slice.steps.iter().enumerate() {
            let reject = |reason| Ok(Replay::Rejected { index, reason });
            let (Some(qi), Some(qj)) = (self.abstract_state(&step.pre)?, self.abstract_state(&step.post)?) else {
                return reject(RejectReason::NoState);
            };
            if index == 0 {
                path.push(qi);
            } else if path.last() != Some(&qi) {
                return reject(RejectReason::NoState);
            }
            let Some(t) = self.transitions.get(&TKey::new(qi, &step.event, qj)) else {
                return reject(RejectReason::NoTransition);
            };
            if !t.guard.eval(&step.pre_valuation()).unwrap_or(false) {
                return reject(RejectReason::GuardFalse);
            }
            if !t.update.eval(&step.post_valuation()).unwrap_or(false) {
                return reject(RejectReason::UpdateFalse);
            }
            path.push(qj);
        }
        if path.is_empty() {
            path.push(self.initial());
        }
        Ok(Replay::Accepted(path))
    }

    /// Replays every slice, recomputing support counters from scratch.
    pub fn replay_all(&mut self, slices: &[Slice]) -> Result<Vec<Replay>, EfsmError> {
        self.support.clear();
        let mut out = Vec::with_capacity(slices.len());
        for s in slices {
            let r = self.replay(s)?;
            if r.is_accepted() {
                for step in &s.steps {
                    let qi = self.abstract_state(&step.pre)?.expect("accepted");
                    let qj = self.abstract_state(&step.post)?.expect("accepted");
                    *self.support.entry(TKey::new(qi, &step.event, qj)).or_default() += 1;
                }
            }
            out.push(r);
        }
        Ok(out)
    }

    /// Paths from the initial state, shortest first; equal-length paths are
    /// ordered by their (event, target) sequence. With `loop_once` no
    /// transition occurs twice on a path and the stream is finite.
    pub fn enumerate_paths(&self, loop_once: bool) -> PathIter<'_> {
        let mut queue = VecDeque::new();
        if !self.states.is_empty() {
            queue.push_back(SymbolicPath { start: self.initial(), steps: Vec::new() });
        }
        PathIter { m: self, loop_once, queue }
    }

    /// Event-level, prefix-closed acceptance from the initial state.
    pub fn accepts_word<S: AsRef<str>>(&self, w: &[S], loop_once: bool) -> bool {
        if loop_once {
            fn go<S: AsRef<str>>(m: &Efsm, q: StateId, w: &[S], used: &mut BTreeSet<TKey>) -> bool {
                let Some((e, rest)) = w.split_first() else { return true };
                for t in m.outgoing(q).filter(|t| t.event == e.as_ref()) {
                    let k = t.key();
                    if used.insert(k.clone()) {
                        let ok = go(m, t.dst, rest, used);
                        used.remove(&k);
                        if ok {
                            return true;
                        }
                    }
                }
                false
            }
            return go(self, self.initial(), w, &mut BTreeSet::new());
        }
        self.to_fsm().accepts(w)
    }

    /// Checks that states are satisfiable, pairwise disjoint, and that there
    /// is exactly one initial state.
    pub fn check_well_formed(&self, domains: &Domains) -> Result<(), EfsmError> {
        let initials = self.states.iter().filter(|s| s.is_initial).count();
        if initials != 1 {
            return Err(EfsmError::InitialCount(initials));
        }
        for (i, a) in self.states.iter().enumerate() {
            if !is_sat(&a.formula, domains)? {
                return Err(EfsmError::EmptyState(a.id));
            }
            for b in &self.states[i + 1..] {
                let both = Formula::And(vec![a.formula.clone(), b.formula.clone()]);
                if is_sat(&both, domains)? {
                    return Err(EfsmError::Overlap(a.id, b.id));
                }
            }
        }
        for k in self.transitions.keys() {
            for id in [k.src, k.dst] {
                if self.state(id).is_none() {
                    return Err(EfsmError::DanglingState(id));
                }
            }
        }
        Ok(())
    }

    /// The event automaton: same states, guards and updates dropped.
    pub fn to_fsm(&self) -> Fsm {
        let index: BTreeMap<StateId, usize> = self.states.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
        let mut fsm = Fsm::new(self.states.len().max(1), index.get(&self.initial()).copied().unwrap_or(0));
        for k in self.transitions.keys() {
            fsm.add_edge(index[&k.src], &k.event, index[&k.dst]);
        }
        fsm
    }

    pub fn to_json(&self) -> Json {
        let mut m = Map::new();
        m.insert("kind".into(), Json::String("efsm".into()));
        m.insert("initial".into(), Json::from(self.initial() as u64));
        m.insert("alphabet".into(), Json::Array(self.alphabet.iter().cloned().map(Json::String).collect()));
        let states = self
            .states
            .iter()
            .map(|s| {
                let mut o = Map::new();
                o.insert("id".into(), Json::from(s.id as u64));
                o.insert("formula".into(), Json::String(s.formula.to_string()));
                o.insert("parent".into(), s.parent.map_or(Json::Null, |p| Json::from(p as u64)));
                Json::Object(o)
            })
            .collect();
        m.insert("states".into(), Json::Array(states));
        let transitions = self
            .transitions
            .values()
            .map(|t| {
                let mut o = Map::new();
                o.insert("src".into(), Json::from(t.src as u64));
                o.insert("event".into(), Json::String(t.event.clone()));
                o.insert("guard".into(), Json::String(t.guard.to_string()));
                o.insert("update".into(), Json::String(t.update.to_string()));
                o.insert("dst".into(), Json::from(t.dst as u64));
                o.insert("support".into(), Json::from(self.support.get(&t.key()).copied().unwrap_or(0)));
                Json::Object(o)
            })
            .collect();
        m.insert("transitions".into(), Json::Array(transitions));
        Json::Object(m)
    }

    pub fn from_json(j: &Json) -> Result<Self, EfsmError> {
        let bad = |m: &str| EfsmError::Malformed(m.to_string());
        let obj = j.as_object().ok_or_else(|| bad("expected an object"))?;
        if obj.get("kind").and_then(Json::as_str) != Some("efsm") {
            return Err(bad("`kind` must be \"efsm\""));
        }
        let uint = |o: &Json, k: &str| -> Result<usize, EfsmError> {
            o.get(k).and_then(Json::as_u64).map(|x| x as usize).ok_or_else(|| bad(&format!("`{k}` must be a non-negative integer")))
        };
        let text = |o: &Json, k: &str| -> Result<String, EfsmError> {
            o.get(k).and_then(Json::as_str).map(str::to_string).ok_or_else(|| bad(&format!("`{k}` must be a string")))
        };
        let initial = uint(j, "initial")?;
        let mut m = Efsm::default();
        for s in obj.get("states").and_then(Json::as_array).ok_or_else(|| bad("`states` must be an array"))? {
            let id = uint(s, "id")?;
            let parent = match s.get("parent") {
                None | Some(Json::Null) => None,
                Some(_) => Some(uint(s, "parent")?),
            };
            m.states.push(SymbolicState { id, formula: parse_formula(&text(s, "formula")?)?, is_initial: id == initial, parent });
        }
        for t in obj.get("transitions").and_then(Json::as_array).ok_or_else(|| bad("`transitions` must be an array"))? {
            let tr = Transition {
                src: uint(t, "src")?,
                event: text(t, "event")?,
                guard: parse_formula(&text(t, "guard")?)?,
                update: parse_formula(&text(t, "update")?)?,
                dst: uint(t, "dst")?,
            };
            let support = t.get("support").and_then(Json::as_u64).unwrap_or(0);
            if support > 0 {
                m.support.insert(tr.key(), support);
            }
            m.add_transition(tr);
        }
        if let Some(alpha) = obj.get("alphabet").and_then(Json::as_array) {
            m.alphabet.extend(alpha.iter().filter_map(Json::as_str).map(str::to_string));
        }
        Ok(m)
    }

    /// Graphviz rendering; node ids are state ids and labels are the
    /// simplified state formulas.
    pub fn to_dot(&self, domains: &Domains) -> String {
        let mut out = String::from("digraph efsm {\n  rankdir=LR;\n  node [shape=box];\n");
        for s in &self.states {
            let label = simplify(&s.formula, domains).to_string();
            let shape = if s.is_initial { ", peripheries=2" } else { "" };
            let _ = writeln!(out, "  q{} [label=\"q{}: {}\"{}];", s.id, s.id, escape(&label), shape);
        }
        for t in self.transitions.values() {
            let label = format!("{} [{}]", t.event, simplify(&t.guard, domains));
            let _ = writeln!(out, "  q{} -> q{} [label=\"{}\"];", t.src, t.dst, escape(&label));
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn fmt_binding(b: &Binding) -> String {
    let parts: Vec<String> = b.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{{{}}}", parts.join(", "))
}

/// An equivalent formula for display. Conjunctions are flattened, and a
/// conjunct implied by the others is dropped. Falls back to `f` when the
/// decision procedure gives up.
pub fn simplify(f: &Formula, domains: &Domains) -> Formula {
    fn flatten(f: &Formula, out: &mut Vec<Formula>) {
        match f {
            Formula::And(cs) => cs.iter().for_each(|c| flatten(c, out)),
            Formula::True => {}
            other => out.push(other.clone()),
        }
    }
    let mut parts = Vec::new();
    flatten(f, &mut parts);
    let mut i = 0;
    while i < parts.len() {
        let others: Vec<Formula> = parts.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| c.clone()).collect();
        match implies(&Formula::and(others), &parts[i], domains) {
            Ok(true) => {
                parts.remove(i);
            }
            Ok(false) => i += 1,
            Err(_) => return f.clone(),
        }
    }
    Formula::and(parts)
}

pub struct PathIter<'a> {
    m: &'a Efsm,
    loop_once: bool,
    queue: VecDeque<SymbolicPath>,
}

impl Iterator for PathIter<'_> {
    type Item = SymbolicPath;

    fn next(&mut self) -> Option<SymbolicPath> {
        let p = self.queue.pop_front()?;
        for t in self.m.outgoing(p.end()) {
            let k = t.key();
            if self.loop_once && p.steps.contains(&k) {
                continue;
            }
            let mut q = p.clone();
            q.steps.push(k);
            self.queue.push_back(q);
        }
        Some(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{ObservationStep, Status, Value};

    fn f(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    fn model(states: &[&str], edges: &[(StateId, &str, StateId)]) -> Efsm {
        let mut m = Efsm::default();
        for (i, s) in states.iter().enumerate() {
            m.states.push(SymbolicState { id: i, formula: f(s), is_initial: i == 0, parent: None });
        }
        for (src, e, dst) in edges {
            m.add_transition(Transition { src: *src, event: e.to_string(), guard: Formula::True, update: Formula::True, dst: *dst });
        }
        m
    }

    fn st(x: i64) -> Binding {
        [("x".to_string(), Value::int(x))].into()
    }

    fn step(e: &str, pre: i64, post: i64) -> ObservationStep {
        ObservationStep { seq: 0, event: e.into(), args: Binding::new(), pre: st(pre), post: st(post), status: Status::Success }
    }

    #[test]
    fn abstraction() {
        let m = model(&["x == 0", "x == 1"], &[]);
        assert_eq!(m.abstract_state(&st(1)).unwrap(), Some(1));
        assert_eq!(m.abstract_state(&st(7)).unwrap(), None);
        let bad = model(&["x >= 0", "x <= 0"], &[]);
        assert!(matches!(bad.abstract_state(&st(0)), Err(EfsmError::AmbiguousAbstraction { .. })));
    }

    #[test]
    fn replay_outcomes() {
        let mut m = model(&["x == 0", "x != 0"], &[(0, "A", 1)]);
        let slice = |steps| Slice { key: Binding::new(), run: 0, steps };
        assert_eq!(m.replay(&slice(vec![])).unwrap(), Replay::Accepted(vec![0]));
        assert_eq!(m.replay(&slice(vec![step("A", 0, 1)])).unwrap(), Replay::Accepted(vec![0, 1]));
        assert_eq!(
            m.replay(&slice(vec![step("B", 0, 1)])).unwrap(),
            Replay::Rejected { index: 0, reason: RejectReason::NoTransition }
        );
        m.transitions.get_mut(&TKey::new(0, "A", 1)).unwrap().guard = f("x == 5");
        assert_eq!(
            m.replay(&slice(vec![step("A", 0, 1)])).unwrap(),
            Replay::Rejected { index: 0, reason: RejectReason::GuardFalse }
        );
        m.transitions.get_mut(&TKey::new(0, "A", 1)).unwrap().guard = Formula::True;
        m.replay_all(&[slice(vec![step("A", 0, 1)]), slice(vec![step("A", 0, 2)])]).unwrap();
        assert_eq!(m.support[&TKey::new(0, "A", 1)], 2);
    }

    #[test]
    fn chain_has_two_paths() {
        let m = model(&["x == 0", "x != 0"], &[(0, "A", 1)]);
        let paths: Vec<String> = m.enumerate_paths(true).map(|p| p.to_string()).collect();
        assert_eq!(paths, vec!["q0", "q0-A-q1"]);
    }

    #[test]
    fn loop_once_paths_are_finite_and_ordered() {
        let m = model(&["x == 0", "x != 0"], &[(0, "A", 1), (1, "C", 1), (1, "D", 1)]);
        let paths: Vec<String> = m.enumerate_paths(true).map(|p| p.to_string()).collect();
        assert_eq!(
            paths,
            vec!["q0", "q0-A-q1", "q0-A-q1-C-q1", "q0-A-q1-D-q1", "q0-A-q1-C-q1-D-q1", "q0-A-q1-D-q1-C-q1"]
        );
        assert_eq!(m.enumerate_paths(false).take(50).count(), 50);
    }

    #[test]
    fn word_acceptance() {
        let m = model(&["x == 0", "x != 0"], &[(0, "A", 1), (1, "D", 1)]);
        assert!(m.accepts_word::<&str>(&[], false));
        assert!(m.accepts_word(&["A", "D", "D"], false));
        assert!(!m.accepts_word(&["A", "D", "D"], true));
        assert!(!m.accepts_word(&["D"], false));
    }

    #[test]
    fn json_round_trip_and_dot() {
        let mut m = model(&["x == 0", "x > 0 && !(x == 3)", "x < 0 || x == 3"], &[(0, "A", 1), (1, "B", 2)]);
        m.transitions.get_mut(&TKey::new(0, "A", 1)).unwrap().guard = f("x == 0 && y > x");
        m.support.insert(TKey::new(0, "A", 1), 4);
        m.states[2].parent = Some(1);
        let back = Efsm::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let dot = m.to_dot(&Domains::default());
        assert_eq!(dot.matches("->").count(), 2);
        assert!(dot.contains("q0 [label=\"q0: x == 0\", peripheries=2]"));
        m.check_well_formed(&Domains::default()).unwrap();
    }

    #[test]
    fn well_formedness_violations() {
        let overlap = model(&["x >= 0", "x <= 0"], &[]);
        assert_eq!(overlap.check_well_formed(&Domains::default()), Err(EfsmError::Overlap(0, 1)));
        let empty = model(&["x == 0", "x > 0 && x < 1"], &[]);
        assert_eq!(empty.check_well_formed(&Domains::default()), Err(EfsmError::EmptyState(1)));
    }

    #[test]
    fn simplify_drops_implied_conjuncts() {
        let g = simplify(&f("x == 1 && x > 0 && (y == 2 && y != 3)"), &Domains::default());
        assert_eq!(g.to_string(), "x == 1 && y == 2");
    }
}
