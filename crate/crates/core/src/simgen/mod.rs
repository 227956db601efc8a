//! Synthetic histories from executable reference contracts.
//!
//! A reference contract pairs a schema with, per function, a guard, a
//! deterministic effect and an argument sampler, plus the event-level
//! automaton it is known to implement. Simulation deploys the contract a
//! number of times and fires random transactions at each deployment,
//! recording reverted calls as well as successful ones.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::Fsm;
use crate::invariants::InferOptions;
use crate::slicer::SliceConfig;
use crate::trace::{Binding, ContractSchema, ObservationStep, Status, Trace};

mod fixtures;
mod random;

pub use fixtures::{gamechannel, rps, GAMECHANNEL_SERVER};
pub use random::{random_reference, RandomShape};

/// What a guard or effect sees: the contract state, the call's inputs and
/// environment, and ghost variables that are not part of the schema.
pub struct Ctx<'a> {
    pub state: &'a Binding,
    pub args: &'a Binding,
    pub ghost: &'a Binding,
}

/// Position of a transaction inside the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxSlot {
    pub instance: u64,
    pub tx: u64,
    pub timestamp: u64,
}

pub type GuardFn = Arc<dyn Fn(&Ctx) -> bool + Send + Sync>;
/// Returns the new state and the new ghost variables.
pub type EffectFn = Arc<dyn Fn(&Ctx) -> (Binding, Binding) + Send + Sync>;
pub type SamplerFn = Arc<dyn Fn(&mut ChaCha8Rng, &TxSlot) -> Binding + Send + Sync>;

#[derive(Clone)]
pub struct RefFunction {
    pub guard: GuardFn,
    pub effect: EffectFn,
    pub sampler: SamplerFn,
}

#[derive(Clone)]
pub struct ReferenceContract {
    pub name: String,
    pub schema: ContractSchema,
    pub functions: BTreeMap<String, RefFunction>,
    /// The event language of the contract from genesis.
    pub ground_truth: Fsm,
    /// How the simulated history is cut into sessions.
    pub slice_config: SliceConfig,
    /// Parameters such as session identifiers that carry no behaviour.
    pub infer_options: InferOptions,
}

impl std::fmt::Debug for ReferenceContract {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReferenceContract")
            .field("name", &self.name)
            .field("functions", &self.functions.keys().collect::<Vec<_>>())
            .field("ground_truth", &self.ground_truth)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenProtocol {
    pub instances: u64,
    pub txs_per_instance: u64,
    pub seed: u64,
}

impl Default for GenProtocol {
    fn default() -> Self {
        GenProtocol { instances: 100, txs_per_instance: 100, seed: 0 }
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of one deployment, independent of how many draws the others made.
pub fn instance_seed(master: u64, instance: u64) -> u64 {
    splitmix64(master ^ splitmix64(instance))
}

const GENESIS_TIME: u64 = 1_600_000_000;

fn run_instance(rc: &ReferenceContract, proto: &GenProtocol, instance: u64, out: &mut Vec<ObservationStep>) {
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(proto.seed, instance));
    let names: Vec<&String> = rc.functions.keys().collect();
    let mut state = rc.schema.zero_state();
    let mut ghost = Binding::new();
    let mut clock = GENESIS_TIME + instance * 1_000_000;
    for tx in 0..proto.txs_per_instance {
        clock += rng.gen_range(1..=30);
        let name = names[rng.gen_range(0..names.len())];
        let f = &rc.functions[name];
        let args = (f.sampler)(&mut rng, &TxSlot { instance, tx, timestamp: clock });
        let ctx = Ctx { state: &state, args: &args, ghost: &ghost };
        let (post, status) = if (f.guard)(&ctx) {
            let (post, g) = (f.effect)(&ctx);
            ghost = g;
            (post, Status::Success)
        } else {
            (state.clone(), Status::Reverted)
        };
        out.push(ObservationStep { seq: 0, event: name.clone(), args, pre: state, post: post.clone(), status });
        state = post;
    }
}

/// Runs `proto.instances` independent deployments and concatenates their
/// transactions.
pub fn simulate(rc: &ReferenceContract, proto: &GenProtocol) -> Trace {
    let mut steps = Vec::new();
    for i in 0..proto.instances {
        run_instance(rc, proto, i, &mut steps);
    }
    for (i, s) in steps.iter_mut().enumerate() {
        s.seq = i as u64;
    }
    Trace { steps, schema: rc.schema.clone() }
}

/// Error returned when breadth-first exploration finds too many states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TooManyStates(pub usize);

/// A history that covers every concrete transition reachable from genesis:
/// one session per (reachable state, enabled function) pair, made of a
/// shortest path to the state followed by the call. Each function's
/// sampler is drawn once per session from a fixed seed, so the corpus is
/// exhaustive only for contracts whose samplers do not matter to guards.
pub fn exhaustive_trace(rc: &ReferenceContract, max_states: usize) -> Result<Trace, TooManyStates> {
    type Node = (Binding, Binding);
    let zero: Node = (rc.schema.zero_state(), Binding::new());
    let mut index: BTreeMap<Node, usize> = BTreeMap::from([(zero.clone(), 0)]);
    let mut nodes = vec![zero];
    // How each node was first reached: (parent, function).
    let mut parent: Vec<Option<(usize, String)>> = vec![None];
    let mut queue = VecDeque::from([0usize]);
    let mut edges: Vec<(usize, String)> = Vec::new();
    let args_for = |name: &str, session: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        (rc.functions[name].sampler)(&mut rng, &TxSlot { instance: session, tx: 0, timestamp: GENESIS_TIME })
    };
    while let Some(n) = queue.pop_front() {
        for (name, f) in &rc.functions {
            let args = args_for(name, 0);
            let (state, ghost) = &nodes[n];
            let ctx = Ctx { state, args: &args, ghost };
            if !(f.guard)(&ctx) {
                continue;
            }
            edges.push((n, name.clone()));
            let next = (f.effect)(&ctx);
            if !index.contains_key(&next) {
                if nodes.len() >= max_states {
                    return Err(TooManyStates(nodes.len() + 1));
                }
                index.insert(next.clone(), nodes.len());
                nodes.push(next);
                parent.push(Some((n, name.clone())));
                queue.push_back(nodes.len() - 1);
            }
        }
    }
    let mut steps = Vec::new();
    for (session, (n, last)) in edges.iter().enumerate() {
        let mut word = vec![last.clone()];
        let mut cur = *n;
        while let Some((p, e)) = &parent[cur] {
            word.push(e.clone());
            cur = *p;
        }
        word.reverse();
        let (mut state, mut ghost) = nodes[0].clone();
        for name in word {
            let args = args_for(&name, session as u64);
            let ctx = Ctx { state: &state, args: &args, ghost: &ghost };
            assert!((rc.functions[&name].guard)(&ctx), "replayed path must stay enabled");
            let (post, g) = (rc.functions[&name].effect)(&ctx);
            steps.push(ObservationStep {
                seq: steps.len() as u64,
                event: name,
                args,
                pre: state,
                post: post.clone(),
                status: Status::Success,
            });
            state = post;
            ghost = g;
        }
    }
    Ok(Trace { steps, schema: rc.schema.clone() })
}

/// The built-in reference contracts by name.
pub fn builtin_fixtures() -> BTreeMap<String, ReferenceContract> {
    [gamechannel(), rps()].into_iter().map(|rc| (rc.name.clone(), rc)).collect()
}

/// Event words of each simulated deployment that succeeded, in order.
pub fn success_words(trace: &Trace, cfg: &SliceConfig) -> Vec<Vec<String>> {
    let mut by_key: BTreeMap<Binding, Vec<String>> = BTreeMap::new();
    let mut order: Vec<Binding> = Vec::new();
    for s in trace.successes() {
        let key = cfg.binding_of(s);
        if !by_key.contains_key(&key) {
            order.push(key.clone());
        }
        by_key.entry(key).or_default().push(s.event.clone());
    }
    order.into_iter().map(|k| by_key.remove(&k).unwrap_or_default()).collect()
}
