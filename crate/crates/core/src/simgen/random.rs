//! Small random reference contracts for property tests.
//!
//! The contract keeps its control state in `st` and the index (plus one)
//! of the last function called in `last`, so concrete states are richer
//! than the control states of the ground truth.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{RefFunction, ReferenceContract};
use crate::baselines::Fsm;
use crate::invariants::InferOptions;
use crate::slicer::SliceConfig;
use crate::trace::{Binding, ContractSchema, FunctionDecl, ParamDecl, Value, ValueType};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomShape {
    pub max_states: usize,
    pub max_events: usize,
}

impl Default for RandomShape {
    fn default() -> Self {
        RandomShape { max_states: 5, max_events: 4 }
    }
}

/// A random deterministic contract with between 2 and `max_states`
/// control states and between 1 and `max_events` functions.
pub fn random_reference(seed: u64, shape: RandomShape) -> ReferenceContract {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=shape.max_states.max(2));
    let m = rng.gen_range(1..=shape.max_events.max(1));
    let events: Vec<String> = (0..m).map(|i| format!("f{i}")).collect();
    let mut delta: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for s in 0..n {
        for e in 0..m {
            if rng.gen_bool(0.5) {
                delta.insert((s, e), rng.gen_range(0..n));
            }
        }
    }
    if !(0..m).any(|e| delta.contains_key(&(0, e))) {
        delta.insert((0, rng.gen_range(0..m)), rng.gen_range(1..n));
    }

    let schema = ContractSchema::new(
        vec![ParamDecl::new("st", ValueType::Uint), ParamDecl::new("last", ValueType::Uint)],
        vec![ParamDecl::new("session", ValueType::Uint)],
        events.iter().map(|e| FunctionDecl { name: e.clone(), inputs: vec![] }).collect(),
    )
    .expect("valid schema");
    let st = |b: &Binding| b["st"].as_int().and_then(|i| usize::try_from(i).ok()).expect("st is a small integer");
    let delta = Arc::new(delta);
    let mut functions = BTreeMap::new();
    let mut ground_truth = Fsm::new(n, 0);
    for (e, name) in events.iter().enumerate() {
        let d = Arc::clone(&delta);
        let d2 = Arc::clone(&delta);
        functions.insert(
            name.clone(),
            RefFunction {
                guard: Arc::new(move |c| d.contains_key(&(st(c.state), e))),
                effect: Arc::new(move |c| {
                    let next = d2[&(st(c.state), e)];
                    let post = [("st".to_string(), Value::int(next as i64)), ("last".to_string(), Value::int(e as i64 + 1))].into();
                    (post, c.ghost.clone())
                }),
                sampler: Arc::new(|_, slot| [("session".to_string(), Value::int(slot.instance as i64))].into()),
            },
        );
    }
    for ((s, e), d) in delta.iter() {
        ground_truth.add_edge(*s, &events[*e], *d);
    }
    ReferenceContract {
        name: format!("random-{seed}"),
        schema,
        functions,
        ground_truth,
        slice_config: SliceConfig::new(["session"]),
        infer_options: InferOptions { exclude_params: ["session".to_string()].into(), ..InferOptions::default() },
    }
}
