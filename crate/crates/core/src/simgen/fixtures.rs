//! GameChannel and a rock-paper-scissors game as reference contracts.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{Ctx, RefFunction, ReferenceContract, TxSlot};
use crate::baselines::Fsm;
use crate::invariants::InferOptions;
use crate::slicer::SliceConfig;
use crate::trace::{Binding, ContractSchema, FunctionDecl, ParamDecl, Value, ValueType};

pub const GAMECHANNEL_SERVER: &str = "0x5e7e000000000000000000000000000000000001";

const USERS: [&str; 3] = [
    "0x00000000000000000000000000000000000000a1",
    "0x00000000000000000000000000000000000000b2",
    "0x00000000000000000000000000000000000000c3",
];

fn callers() -> Vec<Value> {
    std::iter::once(GAMECHANNEL_SERVER).chain(USERS).map(Value::addr).collect()
}

/// Few distinct values, so that independent draws collide (a player
/// repeating the stored round, say).
fn amount(rng: &mut ChaCha8Rng, large: i64) -> Value {
    let picks = [0, 1, 2, 3, large];
    Value::int(*picks.choose(rng).expect("non-empty"))
}

fn wei(rng: &mut ChaCha8Rng) -> Value {
    amount(rng, 1_000_000_000_000_000_000)
}

fn uint(name: &str, unit: Option<&str>) -> ParamDecl {
    ParamDecl { name: name.into(), ty: ValueType::Uint, unit: unit.map(str::to_string) }
}

fn int_of(b: &Binding, k: &str) -> BigInt {
    b.get(k).and_then(Value::as_int).cloned().unwrap_or_default()
}

fn is(b: &Binding, k: &str, v: i64) -> bool {
    int_of(b, k) == BigInt::from(v)
}

fn set(b: &Binding, updates: &[(&str, Value)]) -> Binding {
    let mut out = b.clone();
    for (k, v) in updates {
        out.insert(k.to_string(), v.clone());
    }
    out
}

fn caller(c: &Ctx) -> Value {
    c.args.get("caller").cloned().unwrap_or_else(|| Value::addr("0x0"))
}

fn by_server(c: &Ctx) -> bool {
    caller(c) == Value::addr(GAMECHANNEL_SERVER)
}

fn by_creator(c: &Ctx) -> bool {
    c.ghost.get("creator") == Some(&caller(c))
}

fn env(rng: &mut ChaCha8Rng, slot: &TxSlot, value: Value) -> Binding {
    let mut b = Binding::new();
    b.insert("caller".into(), callers().choose(rng).expect("non-empty").clone());
    b.insert("msg.value".into(), value);
    b.insert("block.timestamp".into(), Value::int(slot.timestamp as i64));
    b
}

fn function(
    guard: impl Fn(&Ctx) -> bool + Send + Sync + 'static,
    effect: impl Fn(&Ctx) -> (Binding, Binding) + Send + Sync + 'static,
    sampler: impl Fn(&mut ChaCha8Rng, &TxSlot) -> Binding + Send + Sync + 'static,
) -> RefFunction {
    RefFunction { guard: Arc::new(guard), effect: Arc::new(effect), sampler: Arc::new(sampler) }
}

fn fsm(states: usize, edges: &[(usize, &str, usize)]) -> Fsm {
    let mut m = Fsm::new(states, 0);
    for (s, e, d) in edges {
        m.add_edge(*s, e, *d);
    }
    m
}

/// A fresh game: only allowed on the untouched (all-zero) game record.
fn create_game(rng: &mut ChaCha8Rng, slot: &TxSlot) -> Binding {
    let value = wei(rng);
    let mut b = env(rng, slot, value);
    b.insert("gameIdCntr".into(), Value::int(slot.instance as i64));
    b
}

fn game_call(round: bool) -> impl Fn(&mut ChaCha8Rng, &TxSlot) -> Binding {
    move |rng, slot| {
        let mut b = env(rng, slot, Value::int(0));
        b.insert("gameId".into(), Value::int(slot.instance as i64));
        if round {
            b.insert("_roundId".into(), amount(rng, u32::MAX as i64));
        }
        b
    }
}

fn fresh(c: &Ctx) -> bool {
    c.state.values().all(|v| v.as_int().is_some_and(|i| *i == BigInt::from(0)))
}

fn positive(b: &Binding, k: &str) -> bool {
    int_of(b, k) > BigInt::from(0)
}

/// The game channel of a dice-betting DApp with one game per deployment.
///
/// States of the ground truth: 0 genesis, 1 active, 2 server-initiated end
/// without round, 3 server-initiated end with round, 4 and 5 the same for
/// user-initiated ends, 6 ended.
pub fn gamechannel() -> ReferenceContract {
    let game_id = || uint("gameId", None);
    let round = || uint("_roundId", Some("round"));
    let schema = ContractSchema::new(
        vec![
            uint("status", None),
            uint("stake", Some("wei")),
            uint("roundId", Some("round")),
            uint("endInitiatedTime", Some("time")),
        ],
        vec![
            uint("msg.value", Some("wei")),
            ParamDecl::new("caller", ValueType::Addr),
            uint("block.timestamp", Some("time")),
            uint("gameIdCntr", None),
        ],
        vec![
            FunctionDecl { name: "createGame".into(), inputs: vec![] },
            FunctionDecl { name: "serverEndGameConflict".into(), inputs: vec![round(), game_id()] },
            FunctionDecl { name: "serverCancelActiveGame".into(), inputs: vec![game_id()] },
            FunctionDecl { name: "serverEndGame".into(), inputs: vec![game_id()] },
            FunctionDecl { name: "userCancelActiveGame".into(), inputs: vec![game_id()] },
            FunctionDecl { name: "userEndGameConflict".into(), inputs: vec![round(), game_id()] },
            FunctionDecl { name: "serverForceGameEnd".into(), inputs: vec![game_id()] },
        ],
    )
    .expect("valid schema");

    let now = |c: &Ctx| c.args["block.timestamp"].clone();
    let mut functions = BTreeMap::new();
    functions.insert(
        "createGame".to_string(),
        function(
            |c| fresh(c) && positive(c.args, "msg.value"),
            |c| {
                let post = set(c.state, &[("status", Value::int(1)), ("stake", c.args["msg.value"].clone())]);
                (post, set(c.ghost, &[("creator", caller(c))]))
            },
            create_game,
        ),
    );
    functions.insert(
        "serverEndGame".to_string(),
        function(|c| by_server(c) && is(c.state, "status", 1), |c| (set(c.state, &[("status", Value::int(0))]), c.ghost.clone()), game_call(false)),
    );
    functions.insert(
        "serverForceGameEnd".to_string(),
        function(|c| by_server(c) && is(c.state, "status", 3), |c| (set(c.state, &[("status", Value::int(0))]), c.ghost.clone()), game_call(false)),
    );
    functions.insert(
        "userCancelActiveGame".to_string(),
        function(
            |c| by_creator(c) && (is(c.state, "status", 1) || (is(c.state, "status", 3) && is(c.state, "roundId", 0))),
            move |c| {
                let post = if is(c.state, "status", 1) {
                    set(c.state, &[("status", Value::int(2)), ("endInitiatedTime", now(c))])
                } else {
                    set(c.state, &[("status", Value::int(0))])
                };
                (post, c.ghost.clone())
            },
            game_call(false),
        ),
    );
    functions.insert(
        "serverCancelActiveGame".to_string(),
        function(
            |c| by_server(c) && (is(c.state, "status", 1) || (is(c.state, "status", 2) && is(c.state, "roundId", 0))),
            move |c| {
                let post = if is(c.state, "status", 1) {
                    set(c.state, &[("status", Value::int(3)), ("endInitiatedTime", now(c))])
                } else {
                    set(c.state, &[("status", Value::int(0))])
                };
                (post, c.ghost.clone())
            },
            game_call(false),
        ),
    );
    // Both conflict functions: the other side's pending end with the same
    // round closes the game; an active game or a newer round opens this
    // side's end.
    let conflict = |mine: i64, theirs: i64| {
        let guard = move |c: &Ctx| {
            let r = int_of(c.args, "_roundId");
            let rid = int_of(c.state, "roundId");
            r > BigInt::from(0)
                && (is(c.state, "status", 1) || (is(c.state, "status", theirs) && rid <= r))
        };
        let effect = move |c: &Ctx| {
            let r = c.args["_roundId"].clone();
            let post = if is(c.state, "status", theirs) && c.state["roundId"] == r {
                set(c.state, &[("status", Value::int(0))])
            } else {
                set(c.state, &[("status", Value::int(mine)), ("endInitiatedTime", c.args["block.timestamp"].clone()), ("roundId", r)])
            };
            (post, c.ghost.clone())
        };
        (guard, effect)
    };
    let (g, e) = conflict(3, 2);
    functions.insert("serverEndGameConflict".to_string(), function(move |c| by_server(c) && g(c), e, game_call(true)));
    let (g, e) = conflict(2, 3);
    functions.insert("userEndGameConflict".to_string(), function(move |c| by_creator(c) && g(c), e, game_call(true)));

    let ground_truth = fsm(
        7,
        &[
            (0, "createGame", 1),
            (1, "serverEndGame", 6),
            (1, "serverCancelActiveGame", 2),
            (1, "serverEndGameConflict", 3),
            (1, "userCancelActiveGame", 4),
            (1, "userEndGameConflict", 5),
            (2, "userCancelActiveGame", 6),
            (2, "userEndGameConflict", 5),
            (2, "serverForceGameEnd", 6),
            (3, "userEndGameConflict", 6),
            (3, "userEndGameConflict", 5),
            (3, "serverForceGameEnd", 6),
            (4, "serverCancelActiveGame", 6),
            (4, "serverEndGameConflict", 3),
            (5, "serverEndGameConflict", 6),
            (5, "serverEndGameConflict", 3),
        ],
    );
    ReferenceContract {
        name: "gamechannel".into(),
        schema,
        functions,
        ground_truth,
        slice_config: SliceConfig::new(["gameId"]).with_key_source("createGame", "gameIdCntr"),
        infer_options: InferOptions {
            exclude_params: ["gameId".to_string(), "gameIdCntr".to_string()].into(),
            ..InferOptions::default()
        },
    }
}

/// A sealed-choice rock-paper-scissors game: the creator commits, a second
/// player joins, and the creator reveals. Games that stall can be closed.
pub fn rps() -> ReferenceContract {
    let game_id = || uint("gameId", None);
    let schema = ContractSchema::new(
        vec![uint("status", None), uint("stake", Some("wei"))],
        vec![uint("msg.value", Some("wei")), ParamDecl::new("caller", ValueType::Addr), uint("gameIdCntr", None)],
        vec![
            FunctionDecl { name: "createGame".into(), inputs: vec![] },
            FunctionDecl { name: "joinGame".into(), inputs: vec![game_id()] },
            FunctionDecl { name: "reveal".into(), inputs: vec![game_id()] },
            FunctionDecl { name: "closeGame".into(), inputs: vec![game_id()] },
        ],
    )
    .expect("valid schema");
    let base = |rng: &mut ChaCha8Rng, value: Value| {
        let mut b = Binding::new();
        b.insert("caller".into(), callers().choose(rng).expect("non-empty").clone());
        b.insert("msg.value".into(), value);
        b
    };
    let call = move |payable: bool| {
        move |rng: &mut ChaCha8Rng, slot: &TxSlot| {
            let v = if payable { wei(rng) } else { Value::int(0) };
            let mut b = base(rng, v);
            b.insert("gameId".into(), Value::int(slot.instance as i64));
            b
        }
    };
    let mut functions = BTreeMap::new();
    functions.insert(
        "createGame".to_string(),
        function(
            |c| fresh(c) && positive(c.args, "msg.value"),
            |c| {
                let post = set(c.state, &[("status", Value::int(1)), ("stake", c.args["msg.value"].clone())]);
                (post, set(c.ghost, &[("creator", caller(c))]))
            },
            move |rng, slot| {
                let value = wei(rng);
                let mut b = base(rng, value);
                b.insert("gameIdCntr".into(), Value::int(slot.instance as i64));
                b
            },
        ),
    );
    functions.insert(
        "joinGame".to_string(),
        function(
            |c| is(c.state, "status", 1) && !by_creator(c) && positive(c.args, "msg.value"),
            |c| (set(c.state, &[("status", Value::int(2))]), set(c.ghost, &[("joiner", caller(c))])),
            call(true),
        ),
    );
    functions.insert(
        "reveal".to_string(),
        function(|c| is(c.state, "status", 2) && by_creator(c), |c| (set(c.state, &[("status", Value::int(3))]), c.ghost.clone()), call(false)),
    );
    // An open game is withdrawn by its creator; a joined game whose
    // creator never reveals is claimed by the second player.
    functions.insert(
        "closeGame".to_string(),
        function(
            |c| {
                (is(c.state, "status", 1) && by_creator(c))
                    || (is(c.state, "status", 2) && c.ghost.get("joiner") == Some(&caller(c)))
            },
            |c| (set(c.state, &[("status", Value::int(3))]), c.ghost.clone()),
            call(false),
        ),
    );
    let ground_truth = fsm(
        4,
        &[(0, "createGame", 1), (1, "joinGame", 2), (1, "closeGame", 3), (2, "reveal", 3), (2, "closeGame", 3)],
    );
    ReferenceContract {
        name: "rps".into(),
        schema,
        functions,
        ground_truth,
        slice_config: SliceConfig::new(["gameId"]).with_key_source("createGame", "gameIdCntr"),
        infer_options: InferOptions {
            exclude_params: ["gameId".to_string(), "gameIdCntr".to_string()].into(),
            ..InferOptions::default()
        },
    }
}
