//! Conflict analysis for a failed completion.
//!
//! A minimal distinguishing projection (MDP) is a smallest set of output
//! attributes on which the actual and expected outputs already differ. Any
//! completion that agrees with the failed one on the holes feeding those
//! attributes, up to renaming of the other variables, must fail too, so the
//! whole family is blocked at once.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::fdsolver::{Clause, Conjunction, Encoding, Literal, Model};
use crate::instance::{instance_to_facts, project, FactBase, Instance, InstanceError};
use crate::schema::{QualifiedAttr, Schema, TypeName};
use crate::sketch::{Candidate, Sketch};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalyzeError {
    #[error("actual and expected outputs are equal")]
    EqualOutputs,
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Attributes of one output relation, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mdp {
    pub relation: TypeName,
    pub attrs: Vec<QualifiedAttr>,
}

impl fmt::Display for Mdp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.attrs.iter().map(|a| a.name.as_str()).collect();
        write!(f, "{}{{{}}}", self.relation, names.join(", "))
    }
}

/// Pins every hole assigned a head variable or constant and relates all
/// other holes to each other by equality or disequality.
pub fn generalize(model: &Model, sketch: &Sketch, enc: &Encoding) -> Conjunction {
    let holes: Vec<usize> = (0..sketch.holes.len()).collect();
    general(model, sketch, enc, &holes, |_| true)
}

/// Like [`generalize`], restricted to the rule producing the MDP's relation
/// and pinning only head variables whose attribute is in the MDP.
pub fn generalize_with_mdp(
    model: &Model,
    sketch: &Sketch,
    enc: &Encoding,
    mdp: &Mdp,
) -> Conjunction {
    let Some(rule) = sketch.rule_of_relation(&mdp.relation) else {
        return generalize(model, sketch, enc);
    };
    let holes = &sketch.rules[rule].holes;
    general(model, sketch, enc, holes, |attr| mdp.attrs.contains(attr))
}

fn general(
    model: &Model,
    sketch: &Sketch,
    enc: &Encoding,
    holes: &[usize],
    keep_head: impl Fn(&QualifiedAttr) -> bool,
) -> Conjunction {
    let pinned: Vec<bool> = holes
        .iter()
        .map(|&h| match enc.codebook.candidate(model.0[h]) {
            Candidate::Const(_) => true,
            Candidate::Var(v) => {
                let rule = &sketch.rules[sketch.holes[h].rule];
                rule.head_attr(v).is_some_and(&keep_head)
            }
        })
        .collect();
    let mut lits: Vec<Literal> = holes
        .iter()
        .zip(&pinned)
        .filter(|(_, &p)| p)
        .map(|(&h, _)| Literal::Eq(h, model.0[h]))
        .collect();
    for (i, &x) in holes.iter().enumerate() {
        for (j, &y) in holes.iter().enumerate().skip(i + 1) {
            if (pinned[i] && pinned[j]) || sketch.holes[x].rule != sketch.holes[y].rule {
                continue;
            }
            lits.push(if model.0[x] == model.0[y] {
                Literal::EqVar(x, y)
            } else {
                Literal::NeVar(x, y)
            });
        }
    }
    Conjunction(lits)
}

/// Whether projecting both fact bases onto `attrs` gives different sets.
pub fn distinguishes(
    target: &Schema,
    actual: &FactBase,
    expected: &FactBase,
    attrs: &[QualifiedAttr],
) -> bool {
    let a = project(target, actual, attrs).expect("attributes of one output relation");
    let e = project(target, expected, attrs).expect("attributes of one output relation");
    a != e
}

/// All minimal distinguishing projections, found breadth-first per output
/// relation.
pub fn mdp_set(
    target: &Schema,
    actual: &Instance,
    expected: &Instance,
) -> Result<Vec<Mdp>, AnalyzeError> {
    if actual == expected {
        return Err(AnalyzeError::EqualOutputs);
    }
    let fa = instance_to_facts(target, actual)?;
    let fe = instance_to_facts(target, expected)?;
    let mut out = Vec::new();
    for rec in target.records() {
        let universe = target.prim_attrs_of(&rec.name);
        let mut emitted: Vec<Vec<usize>> = Vec::new();
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        let mut queue: VecDeque<Vec<usize>> = (0..universe.len()).map(|i| vec![i]).collect();
        while let Some(set) = queue.pop_front() {
            let attrs: Vec<QualifiedAttr> = set.iter().map(|&i| universe[i].clone()).collect();
            if distinguishes(target, &fa, &fe, &attrs) {
                if !emitted.iter().any(|e| e.iter().all(|i| set.contains(i))) {
                    out.push(Mdp {
                        relation: rec.name.clone(),
                        attrs,
                    });
                    emitted.push(set);
                }
                continue;
            }
            for i in 0..universe.len() {
                if set.contains(&i) {
                    continue;
                }
                let mut bigger = set.clone();
                bigger.push(i);
                bigger.sort_unstable();
                if seen.insert(bigger.clone()) {
                    queue.push_back(bigger);
                }
            }
        }
    }
    Ok(out)
}

/// Outcome of analyzing one failed completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Analysis {
    pub mdps: Vec<Mdp>,
    /// One generalization per MDP; the completion families to block.
    pub generalizations: Vec<Conjunction>,
}

impl Analysis {
    pub fn blocking_clauses(&self) -> Vec<Clause> {
        self.generalizations
            .iter()
            .map(Conjunction::negate)
            .collect()
    }
}

/// Blocks every completion sharing the failure's cause. When the outputs
/// differ only in how records nest, no projection separates them and the
/// plain generalization is used instead.
pub fn analyze(
    model: &Model,
    sketch: &Sketch,
    enc: &Encoding,
    target: &Schema,
    actual: &Instance,
    expected: &Instance,
) -> Result<Analysis, AnalyzeError> {
    let mdps = mdp_set(target, actual, expected)?;
    let generalizations = if mdps.is_empty() {
        vec![generalize(model, sketch, enc)]
    } else {
        mdps.iter()
            .map(|phi| generalize_with_mdp(model, sketch, enc, phi))
            .collect()
    };
    Ok(Analysis {
        mdps,
        generalizations,
    })
}
