//! Comparison atoms, boolean formulas over them, and a decision procedure
//! for the fragment (integer order and equality, address equality).

mod sat;
#[cfg(test)]
pub(crate) mod testgen;
mod text;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use thiserror::Error;

use crate::trace::{Binding, Value};

pub use sat::{implies, is_sat, sat, sat_with, SatLimits, SatResult};
pub use text::parse_formula;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogicError {
    #[error("parameter `{0}` is not bound")]
    UnboundParam(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("formula exceeds the decision procedure budget ({0})")]
    ComplexityBudgetExceeded(String),
    #[error("parse error at offset {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn negate(self) -> Self {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    /// The operator with its operands swapped: `a op b` iff `b op.flip() a`.
    pub fn flip(self) -> Self {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            other => other,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_equality(self) -> bool {
        matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Const(Value),
}

/// `lhs op rhs` where `lhs` is a parameter and `rhs` a parameter or constant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub lhs: String,
    pub op: CmpOp,
    pub rhs: Term,
}

impl Atom {
    pub fn var_const(lhs: &str, op: CmpOp, c: Value) -> Self {
        Atom { lhs: lhs.to_string(), op, rhs: Term::Const(c) }
    }

    pub fn var_var(lhs: &str, op: CmpOp, rhs: &str) -> Self {
        Atom { lhs: lhs.to_string(), op, rhs: Term::Var(rhs.to_string()) }
    }

    pub fn negate(&self) -> Self {
        Atom { lhs: self.lhs.clone(), op: self.op.negate(), rhs: self.rhs.clone() }
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        let rhs = match &self.rhs {
            Term::Var(v) => Some(v.as_str()),
            Term::Const(_) => None,
        };
        std::iter::once(self.lhs.as_str()).chain(rhs)
    }

    pub fn constant(&self) -> Option<&Value> {
        match &self.rhs {
            Term::Const(c) => Some(c),
            Term::Var(_) => None,
        }
    }

    pub fn eval(&self, v: &Binding) -> Result<bool, LogicError> {
        let lhs = v.get(&self.lhs).ok_or_else(|| LogicError::UnboundParam(self.lhs.clone()))?;
        let rhs = match &self.rhs {
            Term::Var(name) => v.get(name).ok_or_else(|| LogicError::UnboundParam(name.clone()))?,
            Term::Const(c) => c,
        };
        compare(lhs, self.op, rhs)
    }

    /// Canonical representative among syntactic variants of the same
    /// relation: variable pairs are ordered by name, and an integer bound is
    /// written with the constant of smaller magnitude (`x >= 1` becomes
    /// `x > 0`, `x < 1` becomes `x <= 0`).
    pub fn canonical(&self) -> Atom {
        match &self.rhs {
            Term::Var(r) if r < &self.lhs => Atom::var_var(r, self.op.flip(), &self.lhs),
            Term::Var(_) => self.clone(),
            Term::Const(Value::Int(c)) => {
                let one = BigInt::from(1);
                let alt = match self.op {
                    CmpOp::Ge => Some((CmpOp::Gt, c - &one)),
                    CmpOp::Gt => Some((CmpOp::Ge, c + &one)),
                    CmpOp::Le => Some((CmpOp::Lt, c + &one)),
                    CmpOp::Lt => Some((CmpOp::Le, c - &one)),
                    _ => None,
                };
                match alt {
                    Some((op, k)) if magnitude_key(&k) < magnitude_key(c) => {
                        Atom::var_const(&self.lhs, op, Value::Int(k))
                    }
                    _ => self.clone(),
                }
            }
            Term::Const(Value::Addr(_)) => self.clone(),
        }
    }
}

// Smaller magnitude first; on ties prefer the non-negative constant.
fn magnitude_key(k: &BigInt) -> (BigInt, bool) {
    (num_traits::Signed::abs(k), num_traits::Signed::is_negative(k))
}

pub(crate) fn compare(lhs: &Value, op: CmpOp, rhs: &Value) -> Result<bool, LogicError> {
    match (lhs, rhs) {
        (Value::Int(a), Value::Int(b)) => Ok(op.holds(a.cmp(b))),
        (Value::Addr(a), Value::Addr(b)) if op.is_equality() => Ok(op.holds(a.cmp(b))),
        (Value::Addr(_), Value::Addr(_)) => Err(LogicError::TypeMismatch(format!(
            "addresses only support == and !=, found {}",
            op.symbol()
        ))),
        _ => Err(LogicError::TypeMismatch(format!("cannot compare {lhs} with {rhs}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
}

impl Formula {
    /// Conjunction; empty is `True` and a single operand is returned as is.
    pub fn and(mut parts: Vec<Formula>) -> Formula {
        match parts.len() {
            0 => Formula::True,
            1 => parts.pop().unwrap(),
            _ => Formula::And(parts),
        }
    }

    pub fn or(mut parts: Vec<Formula>) -> Formula {
        match parts.len() {
            0 => Formula::False,
            1 => parts.pop().unwrap(),
            _ => Formula::Or(parts),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        match f {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            other => Formula::Not(Box::new(other)),
        }
    }

    pub fn atom(a: Atom) -> Formula {
        Formula::Atom(a)
    }

    pub fn eval(&self, v: &Binding) -> Result<bool, LogicError> {
        Ok(match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => a.eval(v)?,
            Formula::And(cs) => {
                for c in cs {
                    if !c.eval(v)? {
                        return Ok(false);
                    }
                }
                true
            }
            Formula::Or(cs) => {
                for c in cs {
                    if c.eval(v)? {
                        return Ok(true);
                    }
                }
                false
            }
            Formula::Not(c) => !c.eval(v)?,
        })
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for a in self.atoms() {
            out.extend(a.vars().map(str::to_string));
        }
        out
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        fn walk<'a>(f: &'a Formula, out: &mut Vec<&'a Atom>) {
            match f {
                Formula::Atom(a) => out.push(a),
                Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| walk(c, out)),
                Formula::Not(c) => walk(c, out),
                Formula::True | Formula::False => {}
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    /// Top-level conjuncts; a non-conjunction is its own single conjunct.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        match self {
            Formula::And(cs) => cs.iter().collect(),
            Formula::True => Vec::new(),
            other => vec![other],
        }
    }

    /// Number of atoms and connectives.
    pub fn size(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => 1,
            Formula::And(cs) | Formula::Or(cs) => 1 + cs.iter().map(Formula::size).sum::<usize>(),
            Formula::Not(c) => 1 + c.size(),
        }
    }
}

impl From<Atom> for Formula {
    fn from(a: Atom) -> Self {
        Formula::Atom(a)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.lhs, self.op.symbol())?;
        match &self.rhs {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&text::print(self))
    }
}

impl std::str::FromStr for Formula {
    type Err = LogicError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

/// Value domain of a parameter as seen by the decision procedure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Domain {
    Int { lo: Option<BigInt>, hi: Option<BigInt> },
    Addr,
}

impl Domain {
    pub fn int() -> Self {
        Domain::Int { lo: None, hi: None }
    }

    pub fn bounded(lo: i64, hi: i64) -> Self {
        Domain::Int { lo: Some(BigInt::from(lo)), hi: Some(BigInt::from(hi)) }
    }
}

/// Declared domains by parameter name. Unlisted integer parameters are
/// unbounded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Domains(BTreeMap<String, Domain>);

impl Domains {
    pub fn insert(&mut self, name: &str, d: Domain) {
        self.0.insert(name.to_string(), d);
    }

    pub fn get(&self, name: &str) -> Option<&Domain> {
        self.0.get(name)
    }

    pub fn uniform<'a>(names: impl IntoIterator<Item = &'a str>, d: Domain) -> Self {
        Domains(names.into_iter().map(|n| (n.to_string(), d.clone())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(pairs: &[(&str, i64)]) -> Binding {
        pairs.iter().map(|(k, x)| (k.to_string(), Value::int(*x))).collect()
    }

    fn p(s: &str) -> Formula {
        s.parse().unwrap()
    }

    #[test]
    fn eval_predicates() {
        let st = v(&[("status", 0), ("roundId", 0), ("endInitiatedTime", 0), ("stake", 0)]);
        assert!(p("status == 0").eval(&st).unwrap());
        assert!(Formula::True.eval(&st).unwrap());
        // serverCancelActiveGame's precondition on a server-initiated end at round zero
        let g_c = p("status == 1 || status == 2 && roundId == 0");
        assert!(!g_c.eval(&v(&[("status", 3), ("roundId", 0)])).unwrap());
        assert!(g_c.eval(&v(&[("status", 2), ("roundId", 0)])).unwrap());
        let g_e = p("status == 1 || status == 3 && roundId == 0");
        assert!(g_e.eval(&v(&[("status", 3), ("roundId", 0)])).unwrap());
    }

    #[test]
    fn eval_errors() {
        assert_eq!(p("x > 0").eval(&Binding::new()), Err(LogicError::UnboundParam("x".into())));
        let mut b = Binding::new();
        b.insert("a".into(), Value::addr("0x1"));
        b.insert("n".into(), Value::int(1));
        assert!(matches!(p("a < 0x2").eval(&b), Err(LogicError::TypeMismatch(_))));
        assert!(matches!(p("a == n").eval(&b), Err(LogicError::TypeMismatch(_))));
        assert!(p("a != 0x2").eval(&b).unwrap());
    }

    #[test]
    fn canonical_forms() {
        let c = |s: &str| match p(s) {
            Formula::Atom(a) => a.canonical().to_string(),
            _ => unreachable!(),
        };
        assert_eq!(c("x >= 1"), "x > 0");
        assert_eq!(c("x > 0"), "x > 0");
        assert_eq!(c("x < 1"), "x <= 0");
        assert_eq!(c("x >= 0"), "x >= 0");
        assert_eq!(c("x > -1"), "x >= 0");
        assert_eq!(c("y < x"), "x > y");
        assert_eq!(c("x <= 3"), "x <= 3");
    }

    #[test]
    fn connective_constructors() {
        assert_eq!(Formula::and(vec![]), Formula::True);
        assert_eq!(Formula::or(vec![]), Formula::False);
        assert_eq!(Formula::not(Formula::True), Formula::False);
        let a = p("x == 1");
        assert_eq!(Formula::and(vec![a.clone()]), a);
    }

    mod props {
        use super::super::testgen::{arb_atom, arb_formula};
        use super::super::*;
        use proptest::prelude::*;

        fn valuation() -> impl Strategy<Value = Binding> {
            prop::collection::vec(-3i64..=3, 3).prop_map(|xs| {
                ["a", "b", "c"].iter().zip(xs).map(|(k, x)| (k.to_string(), Value::int(x))).collect()
            })
        }

        proptest! {
            #[test]
            fn de_morgan(a in arb_formula(3, 2), b in arb_formula(3, 2), v in valuation()) {
                let lhs = Formula::not(Formula::And(vec![a.clone(), b.clone()]));
                let rhs = Formula::Or(vec![Formula::not(a), Formula::not(b)]);
                prop_assert_eq!(lhs.eval(&v).unwrap(), rhs.eval(&v).unwrap());
            }

            #[test]
            fn text_round_trip(f in arb_formula(3, 3)) {
                let printed = f.to_string();
                prop_assert_eq!(parse_formula(&printed).unwrap(), f, "{}", printed);
            }

            #[test]
            fn canonical_is_equivalent(a in arb_atom(3), v in valuation()) {
                prop_assert_eq!(a.eval(&v).unwrap(), a.canonical().eval(&v).unwrap());
                prop_assert_eq!(a.canonical().canonical(), a.canonical());
            }
        }
    }
}
