//! Random formula generation and an enumeration oracle for tests.

use std::ops::RangeInclusive;

use proptest::prelude::*;

use super::{Atom, CmpOp, Formula, Term};
use crate::trace::{Binding, Value};

const NAMES: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

fn arb_op() -> impl Strategy<Value = CmpOp> {
    prop::sample::select(CmpOp::ALL.to_vec())
}

pub fn arb_atom(vars: usize) -> impl Strategy<Value = Atom> {
    let names = NAMES[..vars].to_vec();
    let rhs = prop_oneof![
        prop::sample::select(names.clone()).prop_map(|n| Term::Var(n.to_string())),
        (-3i64..=3).prop_map(|k| Term::Const(Value::int(k))),
    ];
    (prop::sample::select(names), arb_op(), rhs).prop_map(|(l, op, rhs)| Atom { lhs: l.to_string(), op, rhs })
}

/// Formulas built through the normalising constructors, of bounded depth.
pub fn arb_formula(vars: usize, depth: u32) -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        8 => arb_atom(vars).prop_map(Formula::Atom),
        1 => Just(Formula::True),
        1 => Just(Formula::False),
    ];
    leaf.prop_recursive(depth, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::And),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::Or),
            inner.prop_map(|f| Formula::Not(Box::new(f))),
        ]
    })
}

/// Exhaustive search over `range^vars`.
pub fn brute_force_sat(f: &Formula, vars: &[&str], range: RangeInclusive<i64>) -> bool {
    fn go(f: &Formula, vars: &[&str], range: &RangeInclusive<i64>, b: &mut Binding) -> bool {
        let Some((first, rest)) = vars.split_first() else {
            return f.eval(b).unwrap();
        };
        for x in range.clone() {
            b.insert(first.to_string(), Value::int(x));
            if go(f, rest, range, b) {
                return true;
            }
        }
        false
    }
    go(f, vars, &range, &mut Binding::new())
}
