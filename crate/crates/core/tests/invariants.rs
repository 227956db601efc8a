use specmine::invariants::{conditions_from_json, conditions_to_json, infer_conditions, Conditions};
use specmine::logic::{implies, parse_formula};
use specmine::simgen::{builtin_fixtures, simulate, GenProtocol, ReferenceContract, GAMECHANNEL_SERVER};
use specmine::slicer::{slice, Slice};

fn corpus(name: &str, seed: u64) -> (ReferenceContract, Vec<Slice>, Conditions) {
    let rc = builtin_fixtures().remove(name).unwrap();
    let trace = simulate(&rc, &GenProtocol { instances: 100, txs_per_instance: 100, seed });
    let slices = slice(&trace, &rc.slice_config).unwrap().slices;
    let conds = infer_conditions(&slices, &rc.schema, &rc.infer_options).unwrap();
    (rc, slices, conds)
}

#[test]
fn conditions_hold_on_every_observation() {
    for name in ["gamechannel", "rps"] {
        let (_, slices, conds) = corpus(name, 1);
        for step in slices.iter().flat_map(|s| &s.steps) {
            let c = &conds[&step.event];
            assert!(c.pre.eval(&step.pre_valuation()).unwrap(), "{name} {}: pre {}", step.event, c.pre);
            assert!(c.post.eval(&step.post_valuation()).unwrap(), "{name} {}: post {}", step.event, c.post);
        }
    }
}

#[test]
fn gamechannel_conditions_imply_the_documented_ones() {
    let (rc, _, conds) = corpus("gamechannel", 0);
    let domains = rc.schema.domains();
    let documented = [
        ("createGame", true, "status == 0 && stake == 0".to_string()),
        ("createGame", false, "status == 1 && stake > 0 && stake == msg.value".to_string()),
        ("serverEndGame", true, format!("status == 1 && caller == {GAMECHANNEL_SERVER}")),
        ("serverEndGame", false, "status == 0".to_string()),
        ("userCancelActiveGame", false, "status == 2 || status == 0".to_string()),
    ];
    for (event, pre, text) in documented {
        let ours = if pre { &conds[event].pre } else { &conds[event].post };
        let want = parse_formula(&text).unwrap();
        assert!(implies(ours, &want, &domains).unwrap(), "{event}: `{ours}` does not imply `{text}`");
    }
}

#[test]
fn json_round_trip_preserves_conditions() {
    let (rc, _, conds) = corpus("rps", 2);
    let back = conditions_from_json(&conditions_to_json(&conds)).unwrap();
    let domains = rc.schema.domains();
    assert_eq!(conds.keys().collect::<Vec<_>>(), back.keys().collect::<Vec<_>>());
    for (e, c) in &conds {
        let d = &back[e];
        assert_eq!(c.support, d.support);
        for (x, y) in [(&c.pre, &d.pre), (&c.post, &d.post)] {
            assert!(implies(x, y, &domains).unwrap() && implies(y, x, &domains).unwrap(), "{e}");
        }
    }
}
