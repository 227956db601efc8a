//! Event automata, prefix-tree acceptors and the k-tail learner.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde_json::{Map, Value as Json};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FsmError {
    #[error("malformed automaton: {0}")]
    Malformed(String),
}

/// A possibly nondeterministic automaton over event names. Every state
/// accepts (acceptance is prefix-closed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fsm {
    pub states: usize,
    pub initial: usize,
    pub edges: BTreeSet<(usize, String, usize)>,
}

impl Fsm {
    pub fn new(states: usize, initial: usize) -> Self {
        assert!(initial < states.max(1), "initial state out of range");
        Fsm { states: states.max(1), initial, edges: BTreeSet::new() }
    }

    pub fn add_edge(&mut self, src: usize, event: &str, dst: usize) {
        assert!(src < self.states && dst < self.states, "edge endpoint out of range");
        self.edges.insert((src, event.to_string(), dst));
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn outgoing(&self, s: usize) -> impl Iterator<Item = &(usize, String, usize)> {
        self.edges.range((s, String::new(), 0)..).take_while(move |e| e.0 == s)
    }

    pub fn alphabet(&self) -> BTreeSet<&str> {
        self.edges.iter().map(|e| e.1.as_str()).collect()
    }

    /// Whether `w` labels some path from the initial state.
    pub fn accepts<S: AsRef<str>>(&self, w: &[S]) -> bool {
        let mut cur: BTreeSet<usize> = [self.initial].into();
        for e in w {
            cur = cur
                .iter()
                .flat_map(|&s| self.outgoing(s).filter(|x| x.1 == e.as_ref()).map(|x| x.2))
                .collect();
            if cur.is_empty() {
                return false;
            }
        }
        true
    }

    pub fn reachable(&self) -> BTreeSet<usize> {
        let mut seen: BTreeSet<usize> = [self.initial].into();
        let mut queue = VecDeque::from([self.initial]);
        while let Some(s) = queue.pop_front() {
            for e in self.outgoing(s) {
                if seen.insert(e.2) {
                    queue.push_back(e.2);
                }
            }
        }
        seen
    }

    /// Structural isomorphism preserving the initial state and labels.
    pub fn isomorphic(&self, other: &Fsm) -> bool {
        if self.states != other.states || self.edges.len() != other.edges.len() {
            return false;
        }
        fn sig(m: &Fsm, s: usize) -> (Vec<String>, usize, bool) {
            let out = m.outgoing(s).map(|e| e.1.clone()).collect();
            let indegree = m.edges.iter().filter(|e| e.2 == s).count();
            (out, indegree, s == m.initial)
        }
        fn consistent(a: &Fsm, b: &Fsm, map: &[usize]) -> bool {
            a.edges.iter().all(|(s, e, d)| {
                map[*s] == usize::MAX || map[*d] == usize::MAX || b.edges.contains(&(map[*s], e.clone(), map[*d]))
            })
        }
        fn go(a: &Fsm, b: &Fsm, i: usize, map: &mut Vec<usize>, used: &mut Vec<bool>) -> bool {
            if i == a.states {
                return true;
            }
            for j in 0..b.states {
                if used[j] || sig(a, i) != sig(b, j) {
                    continue;
                }
                map[i] = j;
                used[j] = true;
                if consistent(a, b, map) && go(a, b, i + 1, map, used) {
                    return true;
                }
                map[i] = usize::MAX;
                used[j] = false;
            }
            false
        }
        let mut map = vec![usize::MAX; self.states];
        let mut used = vec![false; other.states];
        go(self, other, 0, &mut map, &mut used)
    }

    pub fn to_json(&self) -> Json {
        let mut m = Map::new();
        m.insert("kind".into(), Json::String("fsm".into()));
        m.insert("states".into(), Json::from(self.states as u64));
        m.insert("initial".into(), Json::from(self.initial as u64));
        let edges = self
            .edges
            .iter()
            .map(|(s, e, d)| {
                let mut o = Map::new();
                o.insert("src".into(), Json::from(*s as u64));
                o.insert("event".into(), Json::String(e.clone()));
                o.insert("dst".into(), Json::from(*d as u64));
                Json::Object(o)
            })
            .collect();
        m.insert("edges".into(), Json::Array(edges));
        Json::Object(m)
    }

    pub fn from_json(j: &Json) -> Result<Self, FsmError> {
        let bad = |m: &str| FsmError::Malformed(m.to_string());
        if j.get("kind").and_then(Json::as_str) != Some("fsm") {
            return Err(bad("`kind` must be \"fsm\""));
        }
        let uint = |o: &Json, k: &str| {
            o.get(k).and_then(Json::as_u64).map(|x| x as usize).ok_or_else(|| bad(&format!("`{k}` must be a non-negative integer")))
        };
        let states = uint(j, "states")?;
        let initial = uint(j, "initial")?;
        if states == 0 || initial >= states {
            return Err(bad("initial state out of range"));
        }
        let mut fsm = Fsm::new(states, initial);
        for e in j.get("edges").and_then(Json::as_array).ok_or_else(|| bad("`edges` must be an array"))? {
            let (s, d) = (uint(e, "src")?, uint(e, "dst")?);
            let ev = e.get("event").and_then(Json::as_str).ok_or_else(|| bad("`event` must be a string"))?;
            if s >= states || d >= states {
                return Err(bad("edge endpoint out of range"));
            }
            fsm.add_edge(s, ev, d);
        }
        Ok(fsm)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph fsm {\n  rankdir=LR;\n");
        for s in 0..self.states {
            let extra = if s == self.initial { " [peripheries=2]" } else { "" };
            let _ = writeln!(out, "  s{s}{extra};");
        }
        for (s, e, d) in &self.edges {
            let _ = writeln!(out, "  s{s} -> s{d} [label=\"{e}\"];");
        }
        out.push_str("}\n");
        out
    }
}

/// Prefix-tree acceptor: node 0 is the root, children are keyed by event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pta {
    pub children: Vec<BTreeMap<String, usize>>,
}

impl Pta {
    pub fn node_count(&self) -> usize {
        self.children.len()
    }

    pub fn to_fsm(&self) -> Fsm {
        let mut fsm = Fsm::new(self.children.len(), 0);
        for (s, kids) in self.children.iter().enumerate() {
            for (e, d) in kids {
                fsm.add_edge(s, e, *d);
            }
        }
        fsm
    }
}

/// The trie of `words`, nodes numbered in breadth-first order with
/// children visited by event name.
pub fn build_pta<S: AsRef<str>>(words: &[Vec<S>]) -> Pta {
    let mut trie: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new()];
    for w in words {
        let mut cur = 0;
        for e in w {
            let next = trie.len();
            cur = *trie[cur].entry(e.as_ref().to_string()).or_insert(next);
            if cur == next {
                trie.push(BTreeMap::new());
            }
        }
    }
    // Renumber breadth-first so that node order is independent of word order.
    let mut order = vec![0];
    let mut i = 0;
    while i < order.len() {
        order.extend(trie[order[i]].values().copied());
        i += 1;
    }
    let mut rank = vec![0; trie.len()];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let children = order
        .iter()
        .map(|&old| trie[old].iter().map(|(e, d)| (e.clone(), rank[*d])).collect())
        .collect();
    Pta { children }
}

/// Label sequences of length at most `k` leaving each state (prefix-closed).
fn tails(fsm: &Fsm, k: usize) -> Vec<BTreeSet<Vec<String>>> {
    let mut out: Vec<BTreeSet<Vec<String>>> = vec![[Vec::new()].into(); fsm.states];
    for _ in 0..k {
        let prev = out.clone();
        for (s, e, d) in &fsm.edges {
            for t in &prev[*d] {
                if t.len() < k {
                    let mut w = vec![e.clone()];
                    w.extend(t.iter().cloned());
                    out[*s].insert(w);
                }
            }
        }
    }
    out
}

fn quotient(pta: &Fsm, class: &[usize]) -> Fsm {
    let ids: BTreeSet<usize> = class.iter().copied().collect();
    let index: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let mut fsm = Fsm::new(ids.len(), index[&class[pta.initial]]);
    for (s, e, d) in &pta.edges {
        fsm.add_edge(index[&class[*s]], e, index[&class[*d]]);
    }
    fsm
}

/// Classic k-tail: repeatedly merge the first pair of states (in
/// breadth-first order of their smallest PTA node) whose length-≤k tails
/// agree on the current machine, until no such pair remains.
pub fn ktail<S: AsRef<str>>(words: &[Vec<S>], k: usize) -> Fsm {
    assert!(k >= 1, "k-tail needs k >= 1");
    let pta = build_pta(words).to_fsm();
    // class[node] = smallest PTA node of its block
    let mut class: Vec<usize> = (0..pta.states).collect();
    loop {
        let m = quotient(&pta, &class);
        let blocks: Vec<usize> = class.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let t = tails(&m, k);
        let mut merge = None;
        'find: for i in 0..blocks.len() {
            for j in i + 1..blocks.len() {
                if t[i] == t[j] {
                    merge = Some((blocks[i], blocks[j]));
                    break 'find;
                }
            }
        }
        let Some((keep, gone)) = merge else { return m };
        for c in class.iter_mut() {
            if *c == gone {
                *c = keep;
            }
        }
    }
}
