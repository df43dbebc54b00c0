//! Finite-domain constraint solving over sketch holes.
//!
//! Each hole becomes a variable ranging over integer codes, one code per
//! (rule, candidate) pair. Constraints are CNF formulas over four kinds of
//! literal: `x = c`, `x ≠ c`, `x = y`, `x ≠ y`. Search is depth-first in
//! hole order and candidate order with unit propagation, so the first model
//! found is the lexicographically smallest one.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::datalog::Program;
use crate::sketch::{Candidate, Sketch};

pub type Code = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolverError {
    #[error("model enumeration exceeded the budget of {0} models")]
    BudgetExceeded(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Literal {
    Eq(usize, Code),
    Ne(usize, Code),
    EqVar(usize, usize),
    NeVar(usize, usize),
}

impl Literal {
    pub fn negate(self) -> Literal {
        match self {
            Literal::Eq(x, c) => Literal::Ne(x, c),
            Literal::Ne(x, c) => Literal::Eq(x, c),
            Literal::EqVar(x, y) => Literal::NeVar(x, y),
            Literal::NeVar(x, y) => Literal::EqVar(x, y),
        }
    }

    fn vars(self) -> (usize, Option<usize>) {
        match self {
            Literal::Eq(x, _) | Literal::Ne(x, _) => (x, None),
            Literal::EqVar(x, y) | Literal::NeVar(x, y) => (x, Some(y)),
        }
    }

    pub fn holds(self, model: &Model) -> bool {
        let v = &model.0;
        match self {
            Literal::Eq(x, c) => v[x] == c,
            Literal::Ne(x, c) => v[x] != c,
            Literal::EqVar(x, y) => v[x] == v[y],
            Literal::NeVar(x, y) => v[x] != v[y],
        }
    }
}

/// A disjunction of literals.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Clause(pub Vec<Literal>);

impl Clause {
    pub fn holds(&self, model: &Model) -> bool {
        self.0.iter().any(|l| l.holds(model))
    }
}

/// A conjunction of literals; its negation is a single clause.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Conjunction(pub Vec<Literal>);

impl Conjunction {
    pub fn negate(&self) -> Clause {
        Clause(self.0.iter().map(|l| l.negate()).collect())
    }

    pub fn holds(&self, model: &Model) -> bool {
        self.0.iter().all(|l| l.holds(model))
    }

    /// The conjunction as a CNF of unit clauses.
    pub fn to_clauses(&self) -> Vec<Clause> {
        self.0.iter().map(|l| Clause(vec![*l])).collect()
    }
}

/// A candidate code for every hole, indexed by hole id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Model(pub Vec<Code>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FdVar {
    pub hole: usize,
    pub candidates: Vec<Code>,
}

/// Bijection between codes and (rule index, candidate) pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Codebook {
    entries: Vec<(usize, Candidate)>,
    index: HashMap<(usize, Candidate), Code>,
}

impl Codebook {
    pub fn code(&mut self, rule: usize, cand: &Candidate) -> Code {
        if let Some(&c) = self.index.get(&(rule, cand.clone())) {
            return c;
        }
        let c = self.entries.len() as Code;
        self.entries.push((rule, cand.clone()));
        self.index.insert((rule, cand.clone()), c);
        c
    }

    pub fn lookup(&self, rule: usize, cand: &Candidate) -> Option<Code> {
        self.index.get(&(rule, cand.clone())).copied()
    }

    pub fn candidate(&self, code: Code) -> &Candidate {
        &self.entries[code as usize].1
    }
}

/// Constraints over a sketch's holes: domain and head-coverage clauses plus
/// blocking clauses added during search.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub vars: Vec<FdVar>,
    pub codebook: Codebook,
    pub base: Vec<Clause>,
    pub blocking: Vec<Clause>,
    /// Smallest model not yet ruled out by search; only ever increases.
    frontier: Option<Model>,
}

/// Encodes "every hole takes a value of its domain" and "every head
/// variable is used by some hole whose domain contains it".
pub fn encode(sketch: &Sketch) -> Encoding {
    let mut codebook = Codebook::default();
    let mut vars = Vec::with_capacity(sketch.holes.len());
    let mut base = Vec::new();
    for hole in &sketch.holes {
        let candidates: Vec<Code> = hole
            .domain
            .iter()
            .map(|c| codebook.code(hole.rule, c))
            .collect();
        base.push(Clause(
            candidates
                .iter()
                .map(|&c| Literal::Eq(hole.id, c))
                .collect(),
        ));
        vars.push(FdVar {
            hole: hole.id,
            candidates,
        });
    }
    for (ri, rule) in sketch.rules.iter().enumerate() {
        for (_, v) in &rule.head_vars {
            let cand = Candidate::Var(v.clone());
            let Some(code) = codebook.lookup(ri, &cand) else {
                continue;
            };
            let covering: Vec<Literal> = rule
                .holes
                .iter()
                .filter(|&&h| sketch.holes[h].domain.contains(&cand))
                .map(|&h| Literal::Eq(h, code))
                .collect();
            base.push(Clause(covering));
        }
    }
    Encoding {
        vars,
        codebook,
        base,
        blocking: Vec::new(),
        frontier: None,
    }
}

impl Encoding {
    pub fn add_blocking_clause(&mut self, clause: Clause) {
        self.blocking.push(clause);
    }

    pub fn clauses(&self) -> impl Iterator<Item = &Clause> {
        self.base.iter().chain(&self.blocking)
    }

    /// Lexicographically smallest model, if any.
    ///
    /// Clauses are only ever added, so the smallest model never decreases;
    /// the search resumes from the previous answer.
    pub fn get_model(&mut self) -> Option<Model> {
        let clauses: Vec<&Clause> = self.clauses().collect();
        let mut search = Search::new(&self.vars, &clauses);
        let found = search.first_from(self.frontier.as_ref());
        if let Some(m) = &found {
            self.frontier = Some(m.clone());
        }
        found
    }

    pub fn count_models(&self, cap: u64) -> Result<u64, SolverError> {
        let clauses: Vec<&Clause> = self.clauses().collect();
        count_models(&self.vars, &clauses, cap)
    }

    /// Candidate chosen for every hole.
    pub fn candidates<'a>(&'a self, model: &Model) -> Vec<&'a Candidate> {
        model
            .0
            .iter()
            .map(|&c| self.codebook.candidate(c))
            .collect()
    }

    pub fn instantiate(&self, sketch: &Sketch, model: &Model) -> Program {
        sketch.instantiate(&self.candidates(model))
    }

    pub fn show_literal(&self, l: Literal) -> String {
        let x = |i: usize| format!("x{}", i + 1);
        let c = |code: Code| self.codebook.candidate(code).to_string();
        match l {
            Literal::Eq(i, k) => format!("{} = {}", x(i), c(k)),
            Literal::Ne(i, k) => format!("{} ≠ {}", x(i), c(k)),
            Literal::EqVar(i, j) => format!("{} = {}", x(i), x(j)),
            Literal::NeVar(i, j) => format!("{} ≠ {}", x(i), x(j)),
        }
    }

    pub fn show_clause(&self, clause: &Clause) -> String {
        let lits: Vec<String> = clause.0.iter().map(|&l| self.show_literal(l)).collect();
        format!("({})", lits.join(" ∨ "))
    }

    pub fn show_conjunction(&self, conj: &Conjunction) -> String {
        let lits: Vec<String> = conj.0.iter().map(|&l| self.show_literal(l)).collect();
        lits.join(" ∧ ")
    }

    pub fn show_model(&self, model: &Model) -> String {
        let parts: Vec<String> = model
            .0
            .iter()
            .enumerate()
            .map(|(i, &c)| format!("x{} = {}", i + 1, self.codebook.candidate(c)))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for clause in self.clauses() {
            writeln!(f, "{}", self.show_clause(clause))?;
        }
        Ok(())
    }
}

/// Exact number of assignments over `vars` satisfying every clause.
pub fn count_models(vars: &[FdVar], clauses: &[&Clause], cap: u64) -> Result<u64, SolverError> {
    let mut n = 0u64;
    Search::new(vars, clauses).each(&mut |_| {
        n += 1;
        if n > cap {
            Err(SolverError::BudgetExceeded(cap))
        } else {
            Ok(())
        }
    })?;
    Ok(n)
}

/// Every satisfying assignment, in lexicographic order.
pub fn all_models(
    vars: &[FdVar],
    clauses: &[&Clause],
    cap: u64,
) -> Result<Vec<Model>, SolverError> {
    let mut out = Vec::new();
    Search::new(vars, clauses).each(&mut |m| {
        if out.len() as u64 >= cap {
            return Err(SolverError::BudgetExceeded(cap));
        }
        out.push(m);
        Ok(())
    })?;
    Ok(out)
}

/// Remaining candidate positions of one variable.
#[derive(Clone)]
struct Domain {
    alive: Vec<bool>,
    size: usize,
}

impl Domain {
    fn single(&self) -> Option<usize> {
        (self.size == 1).then(|| self.alive.iter().position(|&a| a).unwrap())
    }
}

enum Status {
    True,
    False,
    Unit(Literal),
    Open,
}

struct Search<'a> {
    vars: &'a [FdVar],
    clauses: &'a [&'a Clause],
    /// Position of each code in each variable's candidate list.
    pos: Vec<HashMap<Code, usize>>,
    /// Clauses mentioning each variable.
    watch: Vec<Vec<usize>>,
}

impl<'a> Search<'a> {
    fn new(vars: &'a [FdVar], clauses: &'a [&'a Clause]) -> Self {
        let pos = vars
            .iter()
            .map(|v| {
                v.candidates
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| (c, i))
                    .collect()
            })
            .collect();
        let mut watch = vec![Vec::new(); vars.len()];
        for (ci, clause) in clauses.iter().enumerate() {
            for &l in &clause.0 {
                let (x, y) = l.vars();
                watch[x].push(ci);
                if let Some(y) = y {
                    watch[y].push(ci);
                }
            }
        }
        for w in &mut watch {
            w.dedup();
        }
        Search {
            vars,
            clauses,
            pos,
            watch,
        }
    }

    fn initial(&self) -> Vec<Domain> {
        self.vars
            .iter()
            .map(|v| Domain {
                alive: vec![true; v.candidates.len()],
                size: v.candidates.len(),
            })
            .collect()
    }

    fn code(&self, x: usize, p: usize) -> Code {
        self.vars[x].candidates[p]
    }

    fn status(&self, clause: &Clause, d: &[Domain]) -> Status {
        let mut unit = None;
        let mut open = 0;
        for &l in &clause.0 {
            match self.literal(l, d) {
                Some(true) => return Status::True,
                Some(false) => {}
                None => {
                    open += 1;
                    unit = Some(l);
                }
            }
        }
        match (open, unit) {
            (0, _) => Status::False,
            (1, Some(l)) => Status::Unit(l),
            _ => Status::Open,
        }
    }

    fn has(&self, x: usize, code: Code, d: &[Domain]) -> bool {
        self.pos[x].get(&code).is_some_and(|&p| d[x].alive[p])
    }

    fn literal(&self, l: Literal, d: &[Domain]) -> Option<bool> {
        match l {
            Literal::Eq(x, c) | Literal::Ne(x, c) => {
                let eq = if !self.has(x, c, d) {
                    Some(false)
                } else if d[x].size == 1 {
                    Some(true)
                } else {
                    None
                };
                if matches!(l, Literal::Eq(..)) {
                    eq
                } else {
                    eq.map(|b| !b)
                }
            }
            Literal::EqVar(x, y) | Literal::NeVar(x, y) => {
                let eq = match (d[x].single(), d[y].single()) {
                    (Some(p), Some(q)) => Some(self.code(x, p) == self.code(y, q)),
                    _ if !self.overlap(x, y, d) => Some(false),
                    _ => None,
                };
                if matches!(l, Literal::EqVar(..)) {
                    eq
                } else {
                    eq.map(|b| !b)
                }
            }
        }
    }

    fn overlap(&self, x: usize, y: usize, d: &[Domain]) -> bool {
        d[x].alive
            .iter()
            .enumerate()
            .any(|(p, &a)| a && self.has(y, self.code(x, p), d))
    }

    /// Keeps only the positions of `x` satisfying `keep`; returns whether
    /// anything changed.
    fn restrict(&self, x: usize, d: &mut [Domain], keep: impl Fn(Code) -> bool) -> bool {
        let mut changed = false;
        for p in 0..d[x].alive.len() {
            if d[x].alive[p] && !keep(self.code(x, p)) {
                d[x].alive[p] = false;
                d[x].size -= 1;
                changed = true;
            }
        }
        changed
    }

    /// Makes `l` true as far as domains allow; returns the changed variables.
    fn force(&self, l: Literal, d: &mut [Domain]) -> Vec<usize> {
        let mut changed = Vec::new();
        match l {
            Literal::Eq(x, c) => {
                if self.restrict(x, d, |k| k == c) {
                    changed.push(x);
                }
            }
            Literal::Ne(x, c) => {
                if self.restrict(x, d, |k| k != c) {
                    changed.push(x);
                }
            }
            Literal::EqVar(x, y) => {
                let dy = d[y].clone();
                if self.restrict(x, d, |k| self.pos[y].get(&k).is_some_and(|&p| dy.alive[p])) {
                    changed.push(x);
                }
                let dx = d[x].clone();
                if self.restrict(y, d, |k| self.pos[x].get(&k).is_some_and(|&p| dx.alive[p])) {
                    changed.push(y);
                }
            }
            Literal::NeVar(x, y) => {
                if let Some(q) = d[y].single() {
                    let c = self.code(y, q);
                    if self.restrict(x, d, |k| k != c) {
                        changed.push(x);
                    }
                } else if let Some(p) = d[x].single() {
                    let c = self.code(x, p);
                    if self.restrict(y, d, |k| k != c) {
                        changed.push(y);
                    }
                }
            }
        }
        changed
    }

    /// Unit propagation to a fixpoint; `false` on conflict.
    fn propagate(&self, d: &mut [Domain], mut queue: Vec<usize>) -> bool {
        let mut pending: Vec<usize> = Vec::new();
        if queue.is_empty() {
            pending.extend(0..self.clauses.len());
        }
        loop {
            for x in queue.drain(..) {
                pending.extend(&self.watch[x]);
            }
            let Some(ci) = pending.pop() else { return true };
            match self.status(self.clauses[ci], d) {
                Status::True | Status::Open => {}
                Status::False => return false,
                Status::Unit(l) => {
                    queue = self.force(l, d);
                    if queue.iter().any(|&x| d[x].size == 0) {
                        return false;
                    }
                }
            }
        }
    }

    fn first_from(&mut self, lower: Option<&Model>) -> Option<Model> {
        let mut d = self.initial();
        if !self.propagate(&mut d, Vec::new()) {
            return None;
        }
        let lower: Option<Vec<usize>> = lower.map(|m| {
            m.0.iter()
                .enumerate()
                .map(|(x, c)| self.pos[x][c])
                .collect()
        });
        self.dfs_first(0, d, lower.as_deref())
    }

    fn dfs_first(&self, x: usize, d: Vec<Domain>, lower: Option<&[usize]>) -> Option<Model> {
        if x == self.vars.len() {
            let m = Model(
                d.iter()
                    .enumerate()
                    .map(|(x, dom)| self.code(x, dom.single().unwrap()))
                    .collect(),
            );
            return Some(m);
        }
        let start = lower.map_or(0, |l| l[x]);
        for p in start..d[x].alive.len() {
            if !d[x].alive[p] {
                continue;
            }
            let mut next = d.clone();
            self.restrict(x, &mut next, |k| k == self.code(x, p));
            if !self.propagate(&mut next, vec![x]) {
                continue;
            }
            let tight = lower.filter(|l| l[x] == p);
            if let Some(m) = self.dfs_first(x + 1, next, tight) {
                return Some(m);
            }
        }
        None
    }

    fn each(
        &mut self,
        visit: &mut dyn FnMut(Model) -> Result<(), SolverError>,
    ) -> Result<(), SolverError> {
        let mut d = self.initial();
        if !self.propagate(&mut d, Vec::new()) {
            return Ok(());
        }
        self.dfs_all(0, d, visit)
    }

    fn dfs_all(
        &self,
        x: usize,
        d: Vec<Domain>,
        visit: &mut dyn FnMut(Model) -> Result<(), SolverError>,
    ) -> Result<(), SolverError> {
        if x == self.vars.len() {
            let m = Model(
                d.iter()
                    .enumerate()
                    .map(|(x, dom)| self.code(x, dom.single().unwrap()))
                    .collect(),
            );
            return visit(m);
        }
        for p in 0..d[x].alive.len() {
            if !d[x].alive[p] {
                continue;
            }
            let mut next = d.clone();
            self.restrict(x, &mut next, |k| k == self.code(x, p));
            if self.propagate(&mut next, vec![x]) {
                self.dfs_all(x + 1, next, visit)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(sizes: &[usize]) -> Vec<FdVar> {
        let mut next = 0;
        sizes
            .iter()
            .enumerate()
            .map(|(hole, &n)| {
                let candidates = (next..next + n as Code).collect();
                next += n as Code;
                FdVar { hole, candidates }
            })
            .collect()
    }

    fn shared(n: usize, k: Code) -> Vec<FdVar> {
        (0..n)
            .map(|hole| FdVar {
                hole,
                candidates: (0..k).collect(),
            })
            .collect()
    }

    /// Brute-force count by walking the full cartesian product.
    fn brute(vars: &[FdVar], clauses: &[&Clause]) -> u64 {
        let mut idx = vec![0usize; vars.len()];
        let mut n = 0;
        loop {
            let m = Model(
                idx.iter()
                    .enumerate()
                    .map(|(x, &i)| vars[x].candidates[i])
                    .collect(),
            );
            if clauses.iter().all(|c| c.holds(&m)) {
                n += 1;
            }
            let mut x = 0;
            loop {
                if x == vars.len() {
                    return n;
                }
                idx[x] += 1;
                if idx[x] < vars[x].candidates.len() {
                    break;
                }
                idx[x] = 0;
                x += 1;
            }
        }
    }

    #[test]
    fn unconstrained_counts_product() {
        let v = vars(&[4, 4, 2, 5]);
        assert_eq!(count_models(&v, &[], 1_000).unwrap(), 160);
        assert_eq!(
            count_models(&v, &[], 100),
            Err(SolverError::BudgetExceeded(100))
        );
        assert_eq!(count_models(&[], &[], 10).unwrap(), 1);
    }

    #[test]
    fn blocked_singleton_is_unsat() {
        let v = vars(&[1]);
        let c = Clause(vec![Literal::Ne(0, 0)]);
        assert_eq!(count_models(&v, &[&c], 10).unwrap(), 0);
        let empty = Clause::default();
        assert_eq!(count_models(&vars(&[3]), &[&empty], 10).unwrap(), 0);
    }

    #[test]
    fn equality_literals_agree_with_brute_force() {
        let v = shared(4, 3);
        let c1 = Clause(vec![Literal::EqVar(0, 1), Literal::Eq(2, 1)]);
        let c2 = Clause(vec![Literal::NeVar(1, 3)]);
        let c3 = Clause(vec![
            Literal::Ne(0, 2),
            Literal::EqVar(2, 3),
            Literal::NeVar(0, 2),
        ]);
        let cs = [&c1, &c2, &c3];
        assert_eq!(count_models(&v, &cs, 1000).unwrap(), brute(&v, &cs));
        let all = all_models(&v, &cs, 1000).unwrap();
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert!(all.iter().all(|m| cs.iter().all(|c| c.holds(m))));
    }

    #[test]
    fn enumeration_by_blocking_visits_every_model_in_order() {
        let v = shared(3, 3);
        let c = Clause(vec![Literal::NeVar(0, 1), Literal::Eq(2, 0)]);
        let mut enc = Encoding {
            vars: v.clone(),
            codebook: Codebook::default(),
            base: vec![c.clone()],
            blocking: Vec::new(),
            frontier: None,
        };
        let mut seen = Vec::new();
        while let Some(m) = enc.get_model() {
            enc.add_blocking_clause(
                Conjunction(
                    m.0.iter()
                        .enumerate()
                        .map(|(x, &k)| Literal::Eq(x, k))
                        .collect(),
                )
                .negate(),
            );
            seen.push(m);
        }
        assert_eq!(seen, all_models(&v, &[&c], 100).unwrap());
    }

    #[test]
    fn negation_flips_literals() {
        let conj = Conjunction(vec![Literal::Eq(0, 1), Literal::NeVar(0, 1)]);
        assert_eq!(
            conj.negate(),
            Clause(vec![Literal::Ne(0, 1), Literal::EqVar(0, 1)])
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn literal(n: usize, k: Code) -> impl Strategy<Value = Literal> {
            (0..n, 0..n, 0..k, 0..4u8).prop_map(|(x, y, c, kind)| match kind {
                0 => Literal::Eq(x, c),
                1 => Literal::Ne(x, c),
                2 => Literal::EqVar(x, y),
                _ => Literal::NeVar(x, y),
            })
        }

        proptest! {
            #[test]
            fn search_matches_brute_force(clauses in prop::collection::vec(
                prop::collection::vec(literal(4, 3), 1..4).prop_map(Clause), 0..6)
            ) {
                let v = shared(4, 3);
                let refs: Vec<&Clause> = clauses.iter().collect();
                prop_assert_eq!(count_models(&v, &refs, 1000).unwrap(), brute(&v, &refs));
                let mut enc = Encoding {
                    vars: v.clone(), codebook: Codebook::default(),
                    base: clauses.clone(), blocking: Vec::new(), frontier: None,
                };
                let first = all_models(&v, &refs, 1000).unwrap().into_iter().next();
                prop_assert_eq!(enc.get_model(), first);
            }
        }
    }
}
