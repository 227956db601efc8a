//! Comparing automata by the sentences they generate.
//!
//! Sentences are random walks from the initial state. At every step the
//! walk stops with probability `1 / (d + 1)`, where `d` is the model's
//! average out-degree, and otherwise follows an enabled edge chosen
//! uniformly. It also stops at a dead end or at the length limit.
//! Precision is the share of the mined model's sentences accepted by the
//! truth, recall the converse.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::baselines::Fsm;
use crate::slicer::Slice;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("generation policy field `{0}` is out of range")]
    BadPolicy(&'static str),
    #[error("the test set is empty")]
    EmptyTestSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenPolicy {
    pub max_sentences: u64,
    /// Stop once every reachable edge appears in this many sentences.
    pub min_transition_coverage: u64,
    /// Sentences are at most this many times the truth's edge count long.
    pub max_len_factor: u64,
    pub seed: u64,
    /// Per-step stop probability; `None` means `1 / (d + 1)`.
    pub stop_probability: Option<f64>,
    /// Score each distinct sentence once instead of by frequency.
    pub dedup: bool,
}

impl Default for GenPolicy {
    fn default() -> Self {
        GenPolicy {
            max_sentences: 10_000,
            min_transition_coverage: 20,
            max_len_factor: 2,
            seed: 0,
            stop_probability: None,
            dedup: false,
        }
    }
}

impl GenPolicy {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.max_sentences == 0 {
            return Err(MetricsError::BadPolicy("max_sentences"));
        }
        if self.min_transition_coverage == 0 {
            return Err(MetricsError::BadPolicy("min_transition_coverage"));
        }
        if self.max_len_factor == 0 {
            return Err(MetricsError::BadPolicy("max_len_factor"));
        }
        if self.stop_probability.is_some_and(|p| !(p > 0.0 && p <= 1.0)) {
            return Err(MetricsError::BadPolicy("stop_probability"));
        }
        Ok(())
    }
}

type Edge = (usize, String, usize);

/// A multiset of sentences, plus the edges no walk can reach.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub sentences: Vec<Vec<String>>,
    pub unreachable: Vec<Edge>,
}

fn stop_probability(m: &Fsm, pol: &GenPolicy) -> f64 {
    if let Some(p) = pol.stop_probability {
        return p;
    }
    let degree = m.edge_count() as f64 / m.states as f64;
    1.0 / (degree + 1.0)
}

fn walk(m: &Fsm, max_len: usize, p_stop: f64, rng: &mut ChaCha8Rng, used: &mut BTreeSet<Edge>) -> Vec<String> {
    let mut cur = m.initial;
    let mut word = Vec::new();
    while word.len() < max_len {
        let out: Vec<&Edge> = m.outgoing(cur).collect();
        if out.is_empty() || rng.gen_bool(p_stop) {
            break;
        }
        let e = out[rng.gen_range(0..out.len())];
        used.insert(e.clone());
        word.push(e.1.clone());
        cur = e.2;
    }
    word
}

fn generate_with(m: &Fsm, pol: &GenPolicy, truth_edges: usize, rng: &mut ChaCha8Rng) -> Generated {
    let reachable = m.reachable();
    let unreachable: Vec<Edge> = m.edges.iter().filter(|e| !reachable.contains(&e.0)).cloned().collect();
    if !unreachable.is_empty() {
        log::warn!("{} edge(s) unreachable from the initial state; coverage ignores them", unreachable.len());
    }
    let max_len = (pol.max_len_factor as usize).saturating_mul(truth_edges);
    let p_stop = stop_probability(m, pol);
    let mut coverage: BTreeMap<Edge, u64> =
        m.edges.iter().filter(|e| reachable.contains(&e.0)).map(|e| (e.clone(), 0)).collect();
    let mut sentences = Vec::new();
    while (sentences.len() as u64) < pol.max_sentences {
        let mut used = BTreeSet::new();
        sentences.push(walk(m, max_len, p_stop, rng, &mut used));
        for e in used {
            *coverage.get_mut(&e).expect("walked edges are reachable") += 1;
        }
        if coverage.values().all(|&c| c >= pol.min_transition_coverage) {
            break;
        }
    }
    Generated { sentences, unreachable }
}

/// Seeded random walks over `m`. `truth_edges` is the transition count of
/// the reference automaton, which fixes the length limit.
pub fn generate_sentences(m: &Fsm, pol: &GenPolicy, truth_edges: usize) -> Result<Generated, MetricsError> {
    pol.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(pol.seed);
    Ok(generate_with(m, pol, truth_edges, &mut rng))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub acc: Option<f64>,
    pub sentences_used: u64,
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

impl Score {
    fn new(precision: f64, recall: f64, sentences_used: u64) -> Self {
        Score { precision, recall, f1: f1(precision, recall), acc: None, sentences_used }
    }

    pub fn to_json(&self) -> Json {
        let num = |x: f64| serde_json::Number::from_f64(x).map_or(Json::Null, Json::Number);
        let mut m = Map::new();
        m.insert("precision".into(), num(self.precision));
        m.insert("recall".into(), num(self.recall));
        m.insert("f1".into(), num(self.f1));
        m.insert("acc".into(), self.acc.map_or(Json::Null, num));
        m.insert("sentences_used".into(), Json::from(self.sentences_used));
        Json::Object(m)
    }
}

fn accepted_share(words: &[Vec<String>], by: &Fsm, dedup: bool) -> f64 {
    let distinct: Vec<&Vec<String>>;
    let words: Vec<&Vec<String>> = if dedup {
        distinct = words.iter().collect::<BTreeSet<_>>().into_iter().collect();
        distinct
    } else {
        words.iter().collect()
    };
    if words.is_empty() {
        return 1.0;
    }
    words.iter().filter(|w| by.accepts(w)).count() as f64 / words.len() as f64
}

/// Precision and recall from sampled sentences. The two sides draw from
/// separate streams of the same seed.
pub fn score(mined: &Fsm, truth: &Fsm, pol: &GenPolicy) -> Result<Score, MetricsError> {
    pol.validate()?;
    let t = truth.edge_count();
    let mut rng = ChaCha8Rng::seed_from_u64(pol.seed);
    rng.set_stream(1);
    let from_mined = generate_with(mined, pol, t, &mut rng);
    rng = ChaCha8Rng::seed_from_u64(pol.seed);
    rng.set_stream(2);
    let from_truth = generate_with(truth, pol, t, &mut rng);
    let used = (from_mined.sentences.len() + from_truth.sentences.len()) as u64;
    let (p, r) = (accepted_share(&from_mined.sentences, truth, pol.dedup), accepted_share(&from_truth.sentences, mined, pol.dedup));
    Ok(Score::new(p, r, used))
}

/// Probability that one walk over `gen` yields a sentence `by` accepts.
/// Walks are tracked as a distribution over (state of `gen`, states of
/// `by` reached by the same word), so no sentence is enumerated.
pub fn acceptance_probability(gen: &Fsm, by: &Fsm, max_len: usize, pol: &GenPolicy) -> f64 {
    let p_stop = stop_probability(gen, pol);
    let mut frontier: BTreeMap<(usize, BTreeSet<usize>), f64> = BTreeMap::from([((gen.initial, [by.initial].into()), 1.0)]);
    let mut accepted = 0.0;
    for len in 0..=max_len {
        let mut next: BTreeMap<(usize, BTreeSet<usize>), f64> = BTreeMap::new();
        for ((s, reached), mass) in frontier {
            let out: Vec<&Edge> = gen.outgoing(s).collect();
            let stop = if out.is_empty() || len == max_len { 1.0 } else { p_stop };
            accepted += mass * stop;
            let share = mass * (1.0 - stop) / out.len().max(1) as f64;
            if share == 0.0 {
                continue;
            }
            for (_, e, d) in out {
                let r: BTreeSet<usize> =
                    reached.iter().flat_map(|&q| by.outgoing(q).filter(|x| &x.1 == e).map(|x| x.2)).collect();
                // Once `by` rejects, every extension is rejected too.
                if !r.is_empty() {
                    *next.entry((*d, r)).or_default() += share;
                }
            }
        }
        frontier = next;
    }
    accepted
}

/// The expectation that sampled scores estimate, computed exactly. It is
/// the frequency-weighted score, so `dedup` has no effect here.
pub fn score_exhaustive(mined: &Fsm, truth: &Fsm, pol: &GenPolicy) -> Result<Score, MetricsError> {
    pol.validate()?;
    let max_len = (pol.max_len_factor as usize).saturating_mul(truth.edge_count());
    let p = acceptance_probability(mined, truth, max_len, pol);
    let r = acceptance_probability(truth, mined, max_len, pol);
    Ok(Score::new(p, r, 0))
}

/// Share of test slices whose event word the model accepts.
pub fn accuracy(mined: &Fsm, test: &[Slice]) -> Result<f64, MetricsError> {
    if test.is_empty() {
        return Err(MetricsError::EmptyTestSet);
    }
    Ok(test.iter().filter(|s| mined.accepts(&s.events())).count() as f64 / test.len() as f64)
}
