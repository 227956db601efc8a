//! Satisfiability for boolean combinations of comparison atoms.
//!
//! The formula is put in negation normal form and searched depth-first over
//! disjunct choices. Each partial conjunction of atoms is decided by a
//! theory check: union-find over equalities, a difference-constraint graph
//! with Bellman-Ford negative-cycle detection for the integer order, and
//! lazy case splitting of integer disequalities (`x != y` into `x < y` or
//! `x > y`). Addresses live in an infinite domain, so union-find with
//! distinctness checks decides them.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::{One, Zero};

use super::{Atom, CmpOp, Domain, Domains, Formula, LogicError, Term};
use crate::trace::{Binding, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    Sat(Binding),
    Unsat,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

/// Search limits. A conjunct is one partial assignment of disjunct choices.
#[derive(Debug, Clone, Copy)]
pub struct SatLimits {
    pub max_atoms_per_conjunct: usize,
    pub max_conjuncts: usize,
}

impl Default for SatLimits {
    fn default() -> Self {
        SatLimits { max_atoms_per_conjunct: 64, max_conjuncts: 4096 }
    }
}

pub fn sat(f: &Formula, domains: &Domains) -> Result<SatResult, LogicError> {
    sat_with(f, domains, SatLimits::default())
}

pub fn is_sat(f: &Formula, domains: &Domains) -> Result<bool, LogicError> {
    sat(f, domains).map(|r| r.is_sat())
}

/// `f ⇒ g` over the given domains, i.e. `f ∧ ¬g` is unsatisfiable.
pub fn implies(f: &Formula, g: &Formula, domains: &Domains) -> Result<bool, LogicError> {
    let q = Formula::And(vec![f.clone(), Formula::not(g.clone())]);
    Ok(!is_sat(&q, domains)?)
}

pub fn sat_with(f: &Formula, domains: &Domains, limits: SatLimits) -> Result<SatResult, LogicError> {
    let nnf = Nnf::from_formula(f, true);
    let sorts = infer_sorts(f, domains)?;
    let mut search = Search { domains, sorts: &sorts, limits, conjuncts: 0 };
    let Some(mut model) = search.solve(Vec::new(), vec![&nnf])? else {
        return Ok(SatResult::Unsat);
    };
    // Parameters that only occur in untaken branches still need a value.
    let mut fresh = FreshAddrs::new(f);
    for name in f.free_vars() {
        if model.contains_key(&name) {
            continue;
        }
        let v = match sorts.get(&name) {
            Some(Sort::Addr) => fresh.next(),
            _ => Value::Int(default_int(domains.get(&name))),
        };
        model.insert(name, v);
    }
    assert!(
        f.eval(&model).unwrap_or(false),
        "decision procedure returned a non-witness for {f}"
    );
    Ok(SatResult::Sat(model))
}

fn default_int(d: Option<&Domain>) -> BigInt {
    match d {
        Some(Domain::Int { lo: Some(lo), .. }) if lo > &BigInt::zero() => lo.clone(),
        Some(Domain::Int { hi: Some(hi), .. }) if hi < &BigInt::zero() => hi.clone(),
        _ => BigInt::zero(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sort {
    Int,
    Addr,
}

/// Sort of every parameter: declared domain first, otherwise inferred from
/// the constants and parameters it is compared with. Defaults to integer.
fn infer_sorts(f: &Formula, domains: &Domains) -> Result<BTreeMap<String, Sort>, LogicError> {
    let mut sorts: BTreeMap<String, Sort> = BTreeMap::new();
    for v in f.free_vars() {
        if let Some(d) = domains.get(&v) {
            sorts.insert(v, if matches!(d, Domain::Addr) { Sort::Addr } else { Sort::Int });
        }
    }
    let atoms = f.atoms();
    for a in &atoms {
        if let Term::Const(c) = &a.rhs {
            let s = if c.is_addr() { Sort::Addr } else { Sort::Int };
            sorts.entry(a.lhs.clone()).or_insert(s);
        }
    }
    loop {
        let mut changed = false;
        for a in &atoms {
            if let Term::Var(r) = &a.rhs {
                match (sorts.get(&a.lhs).copied(), sorts.get(r).copied()) {
                    (Some(s), None) => {
                        sorts.insert(r.clone(), s);
                        changed = true;
                    }
                    (None, Some(s)) => {
                        sorts.insert(a.lhs.clone(), s);
                        changed = true;
                    }
                    _ => {}
                }
            }
        }
        if !changed {
            break;
        }
    }
    for a in &atoms {
        let ls = *sorts.entry(a.lhs.clone()).or_insert(Sort::Int);
        let rs = match &a.rhs {
            Term::Var(r) => *sorts.entry(r.clone()).or_insert(Sort::Int),
            Term::Const(c) if c.is_addr() => Sort::Addr,
            Term::Const(_) => Sort::Int,
        };
        if ls != rs {
            return Err(LogicError::TypeMismatch(format!("`{a}` compares an address with an integer")));
        }
        if ls == Sort::Addr && !a.op.is_equality() {
            return Err(LogicError::TypeMismatch(format!("`{a}` orders addresses")));
        }
    }
    Ok(sorts)
}

/// Negation normal form: negations are absorbed into the atoms.
#[derive(Debug, Clone)]
enum Nnf {
    True,
    False,
    Lit(Atom),
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
}

impl Nnf {
    fn from_formula(f: &Formula, positive: bool) -> Nnf {
        match (f, positive) {
            (Formula::True, true) | (Formula::False, false) => Nnf::True,
            (Formula::True, false) | (Formula::False, true) => Nnf::False,
            (Formula::Atom(a), true) => Nnf::Lit(a.clone()),
            (Formula::Atom(a), false) => Nnf::Lit(a.negate()),
            (Formula::Not(c), p) => Nnf::from_formula(c, !p),
            (Formula::And(cs), true) | (Formula::Or(cs), false) => {
                Nnf::And(cs.iter().map(|c| Nnf::from_formula(c, positive)).collect())
            }
            (Formula::Or(cs), true) | (Formula::And(cs), false) => {
                Nnf::Or(cs.iter().map(|c| Nnf::from_formula(c, positive)).collect())
            }
        }
    }

    /// Truth value under a partial model; `None` when some parameter is unbound.
    fn eval(&self, m: &Binding) -> Option<bool> {
        match self {
            Nnf::True => Some(true),
            Nnf::False => Some(false),
            Nnf::Lit(a) => a.eval(m).ok(),
            Nnf::And(cs) => {
                let mut all = Some(true);
                for c in cs {
                    match c.eval(m) {
                        Some(false) => return Some(false),
                        None => all = None,
                        Some(true) => {}
                    }
                }
                all
            }
            Nnf::Or(cs) => {
                let mut any = Some(false);
                for c in cs {
                    match c.eval(m) {
                        Some(true) => return Some(true),
                        None => any = None,
                        Some(false) => {}
                    }
                }
                any
            }
        }
    }
}

struct Search<'a> {
    domains: &'a Domains,
    sorts: &'a BTreeMap<String, Sort>,
    limits: SatLimits,
    conjuncts: usize,
}

impl Search<'_> {
    fn tick(&mut self) -> Result<(), LogicError> {
        self.conjuncts += 1;
        if self.conjuncts > self.limits.max_conjuncts {
            return Err(LogicError::ComplexityBudgetExceeded(format!(
                "more than {} conjuncts",
                self.limits.max_conjuncts
            )));
        }
        Ok(())
    }

    fn solve<'n>(&mut self, mut lits: Vec<Atom>, pending: Vec<&'n Nnf>) -> Result<Option<Binding>, LogicError> {
        let mut stack = pending;
        let mut ors: Vec<&'n Nnf> = Vec::new();
        while let Some(n) = stack.pop() {
            match n {
                Nnf::True => {}
                Nnf::False => return Ok(None),
                Nnf::Lit(a) => {
                    if !lits.contains(a) {
                        lits.push(a.clone());
                    }
                }
                Nnf::And(cs) => stack.extend(cs.iter()),
                Nnf::Or(_) => ors.push(n),
            }
        }
        if lits.len() > self.limits.max_atoms_per_conjunct {
            return Err(LogicError::ComplexityBudgetExceeded(format!(
                "more than {} atoms in one conjunct",
                self.limits.max_atoms_per_conjunct
            )));
        }
        let Some(model) = self.theory(&lits)? else {
            return Ok(None);
        };
        // Branch on the first disjunction the current model does not already satisfy.
        let open = ors.iter().position(|n| n.eval(&model) != Some(true));
        let Some(open) = open else {
            return Ok(Some(model));
        };
        let Nnf::Or(children) = ors[open] else { unreachable!() };
        let rest: Vec<&'n Nnf> = ors
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != open)
            .map(|(_, n)| *n)
            .collect();
        for child in children {
            self.tick()?;
            let mut next = rest.clone();
            next.push(child);
            if let Some(m) = self.solve(lits.clone(), next)? {
                return Ok(Some(m));
            }
        }
        Ok(None)
    }

    fn theory(&mut self, lits: &[Atom]) -> Result<Option<Binding>, LogicError> {
        let (addr, int): (Vec<&Atom>, Vec<&Atom>) =
            lits.iter().partition(|a| self.sorts.get(&a.lhs) == Some(&Sort::Addr));
        let Some(mut model) = solve_addr(&addr) else {
            return Ok(None);
        };
        let Some(ints) = self.solve_int(int.into_iter().cloned().collect())? else {
            return Ok(None);
        };
        model.extend(ints);
        Ok(Some(model))
    }

    /// Integer conjunction with lazy disequality splitting.
    fn solve_int(&mut self, atoms: Vec<Atom>) -> Result<Option<Binding>, LogicError> {
        let Some(model) = DiffGraph::solve(&atoms, self.domains)? else {
            return Ok(None);
        };
        let violated = atoms.iter().position(|a| a.op == CmpOp::Ne && !a.eval(&model).unwrap_or(false));
        let Some(i) = violated else {
            return Ok(Some(model));
        };
        for op in [CmpOp::Lt, CmpOp::Gt] {
            self.tick()?;
            let mut next = atoms.clone();
            next[i].op = op;
            if let Some(m) = self.solve_int(next)? {
                return Ok(Some(m));
            }
        }
        Ok(None)
    }
}

#[derive(Default)]
struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn add(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.parent.len() - 1
    }

    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn solve_addr(atoms: &[&Atom]) -> Option<Binding> {
    let mut ids: BTreeMap<Term, usize> = BTreeMap::new();
    let mut uf = UnionFind::default();
    let mut id = |t: Term, uf: &mut UnionFind| *ids.entry(t).or_insert_with(|| uf.add());
    let mut pairs = Vec::new();
    for a in atoms {
        let l = id(Term::Var(a.lhs.clone()), &mut uf);
        let r = id(a.rhs.clone(), &mut uf);
        pairs.push((l, a.op, r));
    }
    for &(l, op, r) in &pairs {
        if op == CmpOp::Eq {
            uf.union(l, r);
        }
    }
    let mut class_const: BTreeMap<usize, Value> = BTreeMap::new();
    for (t, &i) in &ids {
        if let Term::Const(c) = t {
            let root = uf.find(i);
            if class_const.insert(root, c.clone()).is_some_and(|prev| &prev != c) {
                return None;
            }
        }
    }
    for &(l, op, r) in &pairs {
        if op == CmpOp::Ne && uf.find(l) == uf.find(r) {
            return None;
        }
    }
    let used: BTreeSet<Value> = class_const.values().cloned().collect();
    let mut fresh = FreshAddrs { used, next: 0 };
    let mut model = Binding::new();
    let mut class_val: BTreeMap<usize, Value> = BTreeMap::new();
    for (t, &i) in &ids {
        if let Term::Var(name) = t {
            let root = uf.find(i);
            let v = match class_const.get(&root) {
                Some(c) => c.clone(),
                None => class_val.entry(root).or_insert_with(|| fresh.next()).clone(),
            };
            model.insert(name.clone(), v);
        }
    }
    Some(model)
}

struct FreshAddrs {
    used: BTreeSet<Value>,
    next: u64,
}

impl FreshAddrs {
    fn new(f: &Formula) -> Self {
        let used = f.atoms().iter().filter_map(|a| a.constant().cloned()).collect();
        FreshAddrs { used, next: 0 }
    }

    fn next(&mut self) -> Value {
        loop {
            self.next += 1;
            let v = Value::addr(&format!("0x{:x}", 0xf000_0000u64 + self.next));
            if self.used.insert(v.clone()) {
                return v;
            }
        }
    }
}

/// Difference constraints `val(to) - val(from) <= w` over equality classes,
/// with node 0 standing for the constant zero.
struct DiffGraph {
    edges: Vec<(usize, usize, BigInt)>,
    nodes: usize,
}

impl DiffGraph {
    fn solve(atoms: &[Atom], domains: &Domains) -> Result<Option<Binding>, LogicError> {
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut uf = UnionFind::default();
        uf.add(); // zero
        for a in atoms {
            for v in a.vars() {
                index.entry(v).or_insert_with(|| uf.add());
            }
        }
        for a in atoms {
            if let (CmpOp::Eq, Term::Var(r)) = (a.op, &a.rhs) {
                uf.union(index[a.lhs.as_str()], index[r.as_str()]);
            }
        }
        let mut g = DiffGraph { edges: Vec::new(), nodes: uf.parent.len() };
        let zero = 0;
        // x - y <= w
        let mut le = |x: usize, y: usize, w: BigInt| g.edges.push((y, x, w));
        let one = BigInt::one();
        for a in atoms {
            let x = uf.find(index[a.lhs.as_str()]);
            match &a.rhs {
                Term::Const(c) => {
                    let c = c.as_int().ok_or_else(|| {
                        LogicError::TypeMismatch(format!("`{a}` compares an integer with an address"))
                    })?;
                    match a.op {
                        CmpOp::Eq => {
                            le(x, zero, c.clone());
                            le(zero, x, -c);
                        }
                        CmpOp::Le => le(x, zero, c.clone()),
                        CmpOp::Lt => le(x, zero, c - &one),
                        CmpOp::Ge => le(zero, x, -c),
                        CmpOp::Gt => le(zero, x, -(c + &one)),
                        CmpOp::Ne => {}
                    }
                }
                Term::Var(r) => {
                    let y = uf.find(index[r.as_str()]);
                    match a.op {
                        CmpOp::Eq => {}
                        CmpOp::Le => le(x, y, BigInt::zero()),
                        CmpOp::Lt => le(x, y, -one.clone()),
                        CmpOp::Ge => le(y, x, BigInt::zero()),
                        CmpOp::Gt => le(y, x, -one.clone()),
                        CmpOp::Ne if x == y => return Ok(None),
                        CmpOp::Ne => {}
                    }
                }
            }
        }
        for (name, &i) in &index {
            if let Some(Domain::Int { lo, hi }) = domains.get(name) {
                let x = uf.find(i);
                if let Some(lo) = lo {
                    le(zero, x, -lo);
                }
                if let Some(hi) = hi {
                    le(x, zero, hi.clone());
                }
            }
        }
        let Some(dist) = g.bellman_ford() else {
            return Ok(None);
        };
        let mut model = Binding::new();
        for (name, &i) in &index {
            let x = uf.find(i);
            model.insert(name.to_string(), Value::Int(&dist[x] - &dist[zero]));
        }
        Ok(Some(model))
    }

    /// Shortest distances from a virtual source joined to every node with
    /// weight zero; `None` on a negative cycle.
    fn bellman_ford(&self) -> Option<Vec<BigInt>> {
        let mut dist = vec![BigInt::zero(); self.nodes];
        for round in 0..=self.nodes {
            let mut changed = false;
            for (from, to, w) in &self.edges {
                let cand = &dist[*from] + w;
                if cand < dist[*to] {
                    dist[*to] = cand;
                    changed = true;
                }
            }
            if !changed {
                return Some(dist);
            }
            if round == self.nodes {
                break;
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::testgen::{arb_formula, brute_force_sat};
    use proptest::prelude::*;

    fn p(s: &str) -> Formula {
        s.parse().unwrap()
    }

    fn open() -> Domains {
        Domains::default()
    }

    #[test]
    fn contradictory_equalities() {
        assert_eq!(sat(&p("status == 0 && status == 1"), &open()).unwrap(), SatResult::Unsat);
    }

    #[test]
    fn split_of_the_non_initial_state_is_feasible() {
        let q1 = p("!(status == 0 && roundId == 0 && endInitiatedTime == 0 && stake == 0)");
        let g_c = p("status == 1 || status == 2 && roundId == 0");
        let d = open();
        assert!(is_sat(&Formula::and(vec![q1.clone(), g_c.clone()]), &d).unwrap());
        assert!(is_sat(&Formula::and(vec![q1, Formula::not(g_c)]), &d).unwrap());
    }

    #[test]
    fn strict_cycle_is_unsat() {
        let f = p("x > y && y > z && z > x");
        // exhaustive check over {0..3}^3
        let mut any = false;
        for x in 0..4 {
            for y in 0..4 {
                for z in 0..4 {
                    any |= x > y && y > z && z > x;
                }
            }
        }
        assert!(!any);
        assert_eq!(sat(&f, &open()).unwrap(), SatResult::Unsat);
        assert!(is_sat(&p("x > y && y > z && z < x"), &open()).unwrap());
    }

    #[test]
    fn implication() {
        let d = open();
        assert!(implies(&p("x == 1"), &p("x > 0"), &d).unwrap());
        assert!(implies(&p("status == 1"), &p("!(status == 0)"), &d).unwrap());
        assert!(!implies(&p("roundId > 0"), &p("roundId == 0"), &d).unwrap());
        assert!(!implies(&p("x > 0"), &p("x == 1"), &d).unwrap());
    }

    #[test]
    fn integer_semantics_of_strict_bounds() {
        assert!(!is_sat(&p("x > 0 && x < 1"), &open()).unwrap());
        assert!(!is_sat(&p("x > y && z > x && z <= y"), &open()).unwrap());
        assert!(is_sat(&p("x > y && z > x && z <= 2 && y >= 0"), &open()).unwrap());
        assert!(!is_sat(&p("x > y && z > x && z <= 1 && y >= 0"), &open()).unwrap());
    }

    #[test]
    fn bounded_domains_need_disequality_splitting() {
        let d = Domains::uniform(["x", "y", "z"], Domain::bounded(0, 1));
        assert!(!is_sat(&p("x != y && y != z && x != z"), &d).unwrap());
        assert!(is_sat(&p("x != y && y != z"), &d).unwrap());
        let b = Domains::uniform(["b"], Domain::bounded(0, 1));
        assert!(!is_sat(&p("b != 0 && b != 1"), &b).unwrap());
        assert!(is_sat(&p("b != 0 && b != 1"), &open()).unwrap());
        assert!(!is_sat(&p("x > 4"), &Domains::uniform(["x"], Domain::bounded(-4, 4))).unwrap());
    }

    #[test]
    fn addresses() {
        let d = open();
        assert!(!is_sat(&p("a == b && b == 0x1 && a != 0x1"), &d).unwrap());
        assert!(!is_sat(&p("a == 0x1 && a == 0x2"), &d).unwrap());
        let SatResult::Sat(w) = sat(&p("a != b && b != c && a != c && a != 0x1"), &d).unwrap() else {
            panic!()
        };
        assert_ne!(w["a"], w["b"]);
        assert_ne!(w["a"], Value::addr("0x1"));
        assert!(matches!(sat(&p("a < 0x1"), &d), Err(LogicError::TypeMismatch(_))));
        assert!(matches!(sat(&p("a == 0x1 && a > 3"), &d), Err(LogicError::TypeMismatch(_))));
    }

    #[test]
    fn witness_binds_every_parameter() {
        let SatResult::Sat(w) = sat(&p("x == 1 || y == 2 && z != caller"), &open()).unwrap() else {
            panic!()
        };
        for v in ["x", "y", "z", "caller"] {
            assert!(w.contains_key(v), "{v}");
        }
    }

    #[test]
    fn budget_is_enforced() {
        let parts: Vec<Formula> = (0..12).map(|i| p(&format!("x{i} == 0 || x{i} == 1"))).collect();
        let mut all = parts;
        all.push(p("y > 0 && y < 1"));
        let tight = SatLimits { max_atoms_per_conjunct: 64, max_conjuncts: 8 };
        assert_eq!(sat_with(&Formula::and(all.clone()), &open(), tight).unwrap(), SatResult::Unsat);
        let hard = p("(x == 0 || x == 1) && x != 0 && x != 1");
        assert_eq!(sat(&hard, &open()).unwrap(), SatResult::Unsat);
        let one = SatLimits { max_atoms_per_conjunct: 64, max_conjuncts: 1 };
        assert!(matches!(sat_with(&hard, &open(), one), Err(LogicError::ComplexityBudgetExceeded(_))));
        let many: Vec<Formula> = (0..70).map(|i| p(&format!("v{i} > 0"))).collect();
        assert!(matches!(sat(&Formula::and(many), &open()), Err(LogicError::ComplexityBudgetExceeded(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]

        #[test]
        fn agrees_with_enumeration(f in arb_formula(3, 3)) {
            let d = Domains::uniform(["a", "b", "c"], Domain::bounded(-2, 2));
            let expected = brute_force_sat(&f, &["a", "b", "c"], -2..=2);
            let got = sat(&f, &d).unwrap();
            prop_assert_eq!(got.is_sat(), expected, "{}", f);
        }

        #[test]
        fn implies_matches_definition(f in arb_formula(3, 2), g in arb_formula(3, 2)) {
            let d = Domains::uniform(["a", "b", "c"], Domain::bounded(-2, 2));
            let q = Formula::And(vec![f.clone(), Formula::not(g.clone())]);
            let expected = !brute_force_sat(&q, &["a", "b", "c"], -2..=2);
            prop_assert_eq!(implies(&f, &g, &d).unwrap(), expected);
        }
    }
}
