//! Program sketches: Datalog rules whose body arguments are holes with
//! finite candidate domains.
//!
//! Each top-level target record gets one rule. Its heads cover the record
//! and everything nested in it; its body holds one chain of source atoms,
//! from a top-level record down to the attribute's owner, for every pair of
//! a target attribute and a source attribute aliasing it.

use std::collections::{HashMap, HashSet};
use std::fmt;

use num_bigint::BigUint;
use thiserror::Error;

use crate::attrmap::{AttrRef, AttributeMapping};
use crate::datalog::{Atom, Program, Rule, Term};
use crate::instance::{Field, Instance, Record, Value};
use crate::schema::{AttrKind, QualifiedAttr, RecordType, Schema, TypeName};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SketchError {
    #[error("no source attribute contains the values of {}", list(.0))]
    UnmappableTargetAttribute(Vec<QualifiedAttr>),
}

fn list(attrs: &[QualifiedAttr]) -> String {
    attrs
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Candidate {
    Var(String),
    Const(Value),
}

impl Candidate {
    fn to_term(&self) -> Term {
        match self {
            Candidate::Var(v) => Term::Var(v.clone()),
            Candidate::Const(c) => Term::Const(c.clone()),
        }
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Candidate::Var(v) => f.write_str(v),
            Candidate::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hole {
    pub id: usize,
    /// Index of the rule whose body holds the hole.
    pub rule: usize,
    /// Source attribute at the hole's position.
    pub attr: QualifiedAttr,
    pub domain: Vec<Candidate>,
}

impl Hole {
    pub fn label(&self) -> String {
        format!("??{}", self.id + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SketchTerm {
    Hole(usize),
    Var(String),
    Wildcard,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchAtom {
    pub relation: TypeName,
    pub args: Vec<SketchTerm>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSketch {
    /// Top-level target record the rule produces.
    pub target: TypeName,
    pub heads: Vec<Atom>,
    /// Head variable of every primitive target attribute, in nest order.
    pub head_vars: Vec<(QualifiedAttr, String)>,
    pub body: Vec<SketchAtom>,
    pub holes: Vec<usize>,
}

impl RuleSketch {
    /// Target attribute represented by a head variable.
    pub fn head_attr(&self, var: &str) -> Option<&QualifiedAttr> {
        self.head_vars
            .iter()
            .find(|(_, v)| v == var)
            .map(|(a, _)| a)
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.heads.iter().map(|a| a.relation.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sketch {
    pub rules: Vec<RuleSketch>,
    pub holes: Vec<Hole>,
}

impl Sketch {
    /// Number of completions: the product of all domain sizes.
    pub fn search_space_size(&self) -> BigUint {
        self.holes
            .iter()
            .map(|h| BigUint::from(h.domain.len()))
            .product()
    }

    /// Index of the rule whose heads produce `relation`.
    pub fn rule_of_relation(&self, relation: &str) -> Option<usize> {
        self.rules
            .iter()
            .position(|r| r.relations().any(|n| n == relation))
    }

    /// Substitutes the chosen candidate, indexed by hole id, into every hole.
    pub fn instantiate(&self, choice: &[&Candidate]) -> Program {
        let rules = self
            .rules
            .iter()
            .map(|r| Rule {
                heads: r.heads.clone(),
                body: r
                    .body
                    .iter()
                    .map(|a| Atom {
                        relation: a.relation.clone(),
                        args: a
                            .args
                            .iter()
                            .map(|t| match t {
                                SketchTerm::Hole(h) => choice[*h].to_term(),
                                SketchTerm::Var(v) => Term::Var(v.clone()),
                                SketchTerm::Wildcard => Term::Wildcard,
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        Program { rules }
    }
}

impl fmt::Display for SketchAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, t) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match t {
                SketchTerm::Hole(h) => write!(f, "??{}", h + 1)?,
                SketchTerm::Var(v) => f.write_str(v)?,
                SketchTerm::Wildcard => f.write_str("_")?,
            }
        }
        f.write_str(")")
    }
}

impl fmt::Display for Sketch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rule in &self.rules {
            let heads: Vec<String> = rule.heads.iter().map(ToString::to_string).collect();
            let body: Vec<String> = rule.body.iter().map(ToString::to_string).collect();
            writeln!(f, "{} :- {}.", heads.join(", "), body.join(", "))?;
            for &h in &rule.holes {
                let hole = &self.holes[h];
                let domain: Vec<String> = hole.domain.iter().map(ToString::to_string).collect();
                writeln!(
                    f,
                    "  {} ∈ {{{}}}  [{}]",
                    hole.label(),
                    domain.join(", "),
                    hole.attr
                )?;
            }
        }
        Ok(())
    }
}

/// Hands out variable names that are unique within one rule.
#[derive(Default)]
struct Names {
    used: HashSet<String>,
}

impl Names {
    fn take(&mut self, preferred: &str, fallback: &str) -> String {
        for name in [preferred, fallback] {
            if self.used.insert(name.to_owned()) {
                return name.to_owned();
            }
        }
        (2..)
            .map(|k| format!("{fallback}_{k}"))
            .find(|n| self.used.insert(n.clone()))
            .unwrap()
    }

    fn next_numbered(&mut self, prefix: &str, counter: &mut usize) -> String {
        loop {
            *counter += 1;
            let name = format!("{prefix}{counter}");
            if self.used.insert(name.clone()) {
                return name;
            }
        }
    }
}

/// Head atoms for target record `name` and everything nested in it.
/// Record-typed positions carry a connector variable that leads the child's
/// atom.
pub fn intensional_preds(target: &Schema, name: &str) -> Vec<Atom> {
    let mut names = Names::default();
    let head_vars = head_var_names(target, name, &mut names);
    head_atoms(target, name, &head_vars, &mut names)
}

fn head_var_names(target: &Schema, name: &str, names: &mut Names) -> Vec<(QualifiedAttr, String)> {
    target
        .nest(name)
        .iter()
        .flat_map(|rec| target.prim_attrs_of(&rec.name))
        .map(|a| {
            let var = names.take(&a.name, &format!("{}_{}", a.owner, a.name));
            (a, var)
        })
        .collect()
}

fn head_atoms(
    target: &Schema,
    name: &str,
    head_vars: &[(QualifiedAttr, String)],
    names: &mut Names,
) -> Vec<Atom> {
    let mut connectors: HashMap<&str, String> = HashMap::new();
    let mut atoms = Vec::new();
    for rec in target.nest(name) {
        let mut args = Vec::with_capacity(rec.arity());
        if rec.is_nested() {
            args.push(Term::Var(connectors[rec.name.as_str()].clone()));
        }
        for attr in &rec.attrs {
            let qa = QualifiedAttr::new(rec.name.clone(), attr.name.clone());
            let var = match attr.kind {
                AttrKind::Prim(_) => head_vars.iter().find(|(a, _)| *a == qa).unwrap().1.clone(),
                AttrKind::Record => {
                    let v = names.take(
                        &format!("v{}", attr.name),
                        &format!("v{}_{}", rec.name, attr.name),
                    );
                    connectors.insert(&attr.name, v.clone());
                    v
                }
            };
            args.push(Term::Var(var));
        }
        atoms.push(Atom::new(rec.name.clone(), args));
    }
    atoms
}

/// The chain of body atoms reaching record `name` from its top-level
/// ancestor, with holes (numbered from 0) at primitive positions.
pub fn extensional_chain(source: &Schema, name: &str) -> (Vec<SketchAtom>, Vec<QualifiedAttr>) {
    let mut holes = Vec::new();
    let mut names = Names::default();
    let mut counter = 0;
    let atoms = chain_atoms(&source.ancestry(name), &mut holes, &mut names, &mut counter);
    (atoms, holes)
}

fn chain_atoms(
    chain: &[&RecordType],
    holes: &mut Vec<QualifiedAttr>,
    names: &mut Names,
    counter: &mut usize,
) -> Vec<SketchAtom> {
    let mut atoms = Vec::with_capacity(chain.len());
    let mut link: Option<String> = None;
    for (k, rec) in chain.iter().enumerate() {
        let mut args = Vec::with_capacity(rec.arity());
        if let Some(v) = link.take() {
            args.push(SketchTerm::Var(v));
        }
        for attr in &rec.attrs {
            args.push(match attr.kind {
                AttrKind::Prim(_) => {
                    holes.push(QualifiedAttr::new(rec.name.clone(), attr.name.clone()));
                    SketchTerm::Hole(holes.len() - 1)
                }
                AttrKind::Record if chain.get(k + 1).is_some_and(|c| c.name == attr.name) => {
                    let v = names.next_numbered("v", counter);
                    link = Some(v.clone());
                    SketchTerm::Var(v)
                }
                AttrKind::Record => SketchTerm::Wildcard,
            });
        }
        atoms.push(SketchAtom {
            relation: rec.name.clone(),
            args,
        });
    }
    atoms
}

/// Distinct primitive values of the output instances, in document order.
pub fn output_constants<'a>(outputs: impl IntoIterator<Item = &'a Instance>) -> Vec<Value> {
    fn walk(records: &[Record], seen: &mut HashSet<Value>, out: &mut Vec<Value>) {
        for r in records {
            for field in &r.fields {
                match field {
                    Field::Prim(v) => {
                        if seen.insert(v.clone()) {
                            out.push(v.clone());
                        }
                    }
                    Field::Nested(children) => walk(children, seen, out),
                }
            }
        }
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for inst in outputs {
        for records in inst.relations.values() {
            walk(records, &mut seen, &mut out);
        }
    }
    out
}

/// Builds the sketch for every top-level target record. `constants` are
/// appended to the domain of every hole of matching primitive kind; pass an
/// empty slice to disable filtering.
pub fn sketch_gen(
    psi: &AttributeMapping,
    source: &Schema,
    target: &Schema,
    constants: &[Value],
) -> Result<Sketch, SketchError> {
    let mut rules = Vec::new();
    let mut holes: Vec<Hole> = Vec::new();
    let mut unmapped = Vec::new();
    for name in target.top_level_records() {
        match gen_rule_sketch(
            psi,
            source,
            target,
            name,
            rules.len(),
            holes.len(),
            constants,
        ) {
            Ok((rule, rule_holes)) => {
                rules.push(rule);
                holes.extend(rule_holes);
            }
            Err(SketchError::UnmappableTargetAttribute(attrs)) => unmapped.extend(attrs),
        }
    }
    if !unmapped.is_empty() {
        return Err(SketchError::UnmappableTargetAttribute(unmapped));
    }
    Ok(Sketch { rules, holes })
}

fn gen_rule_sketch(
    psi: &AttributeMapping,
    source: &Schema,
    target: &Schema,
    name: &str,
    rule_index: usize,
    first_hole: usize,
    constants: &[Value],
) -> Result<(RuleSketch, Vec<Hole>), SketchError> {
    let mut names = Names::default();
    let head_vars = head_var_names(target, name, &mut names);
    let heads = head_atoms(target, name, &head_vars, &mut names);

    let mut chains: Vec<Vec<&RecordType>> = Vec::new();
    let mut unmapped = Vec::new();
    for (t_attr, _) in &head_vars {
        let sources = psi.sources_of_target(t_attr);
        if sources.is_empty() {
            unmapped.push(t_attr.clone());
        }
        chains.extend(sources.into_iter().map(|a| source.ancestry(&a.owner)));
    }
    if !unmapped.is_empty() {
        return Err(SketchError::UnmappableTargetAttribute(unmapped));
    }
    // Longer chains first; ties keep target-attribute order.
    chains.sort_by_key(|c| std::cmp::Reverse(c.len()));

    let mut copies: HashMap<&str, usize> = HashMap::new();
    for rec in chains.iter().flatten() {
        *copies.entry(rec.name.as_str()).or_default() += 1;
    }
    let src_attrs = source.prim_attrbs();
    let mut copy_vars: HashMap<&QualifiedAttr, Vec<String>> = HashMap::new();
    for a in &src_attrs {
        let k = copies.get(a.owner.as_str()).copied().unwrap_or(0);
        let vars = (1..=k).map(|j| {
            names.take(
                &format!("{}{j}", a.name),
                &format!("{}_{}{j}", a.owner, a.name),
            )
        });
        copy_vars.insert(a, vars.collect());
    }

    let mut hole_attrs = Vec::new();
    let mut counter = 0;
    let body: Vec<SketchAtom> = chains
        .iter()
        .flat_map(|chain| chain_atoms(chain, &mut hole_attrs, &mut names, &mut counter))
        .map(|mut atom| {
            for t in &mut atom.args {
                if let SketchTerm::Hole(h) = t {
                    *h += first_hole;
                }
            }
            atom
        })
        .collect();

    let holes: Vec<Hole> = hole_attrs
        .into_iter()
        .enumerate()
        .map(|(i, attr)| {
            let mut domain: Vec<Candidate> = head_vars
                .iter()
                .filter(|(t, _)| psi.contains(&attr, &AttrRef::Target(t.clone())))
                .map(|(_, v)| Candidate::Var(v.clone()))
                .collect();
            for y in src_attrs
                .iter()
                .filter(|y| **y == attr || psi.aliases(&attr, y))
            {
                domain.extend(copy_vars[y].iter().map(|v| Candidate::Var(v.clone())));
            }
            let kind = source.prim_kind(&attr);
            domain.extend(
                constants
                    .iter()
                    .filter(|c| c.kind() == kind)
                    .map(|c| Candidate::Const(c.clone())),
            );
            Hole {
                id: first_hole + i,
                rule: rule_index,
                attr,
                domain,
            }
        })
        .collect();

    let rule = RuleSketch {
        target: name.to_owned(),
        heads,
        head_vars,
        body,
        holes: holes.iter().map(|h| h.id).collect(),
    };
    Ok((rule, holes))
}
