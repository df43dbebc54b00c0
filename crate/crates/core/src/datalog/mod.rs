//! Non-recursive Datalog: syntax tree, evaluation, renaming, and cleanup.

mod eval;
mod simplify;
mod syntax;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::instance::Value;
use crate::schema::Schema;

pub use eval::evaluate;
pub use simplify::simplify;
pub use syntax::parse_program;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DatalogError {
    #[error("relation {relation} used with {found} arguments, expected {expected}")]
    ArityMismatch {
        relation: String,
        expected: usize,
        found: usize,
    },
    #[error("head variable `{0}` is not bound by the rule body")]
    UnboundHeadVariable(String),
    #[error("wildcard in the head of a rule for {0}")]
    WildcardInHead(String),
    #[error("relation {0} is defined by a rule and also used in a body")]
    Recursive(String),
    #[error("relation {0} is not part of the schema")]
    UnknownRelation(String),
    #[error("substitution maps more than one variable to `{0}`")]
    NonInjectiveSubstitution(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Wildcard,
    Const(Value),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub relation: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(relation: impl Into<String>, args: Vec<Term>) -> Atom {
        Atom {
            relation: relation.into(),
            args,
        }
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(Term::as_var)
    }
}

/// `H1, ..., Hm :- B1, ..., Bn.` -- m rules sharing one body.
///
/// Head variables normally occur in the body. The exception is a variable
/// that links a nested head atom to its parent: it occurs once in a
/// non-leading position of the parent atom and leads each child atom. Such
/// variables receive a record identifier derived from the parent atom's
/// other arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub heads: Vec<Atom>,
    pub body: Vec<Atom>,
}

impl Rule {
    pub fn head_vars(&self) -> BTreeSet<&str> {
        self.heads.iter().flat_map(Atom::vars).collect()
    }

    pub fn body_vars(&self) -> BTreeSet<&str> {
        self.body.iter().flat_map(Atom::vars).collect()
    }

    /// Occurrence count of every variable across heads and body.
    pub fn var_counts(&self) -> HashMap<&str, usize> {
        let mut counts = HashMap::new();
        for atom in self.heads.iter().chain(&self.body) {
            for v in atom.vars() {
                *counts.entry(v).or_insert(0) += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Program {
    pub rules: Vec<Rule>,
}

impl Program {
    pub fn new(rules: Vec<Rule>) -> Program {
        Program { rules }
    }

    pub fn vars(&self) -> BTreeSet<&str> {
        self.rules
            .iter()
            .flat_map(|r| r.heads.iter().chain(&r.body))
            .flat_map(Atom::vars)
            .collect()
    }

    pub fn head_relations(&self) -> BTreeSet<&str> {
        self.rules
            .iter()
            .flat_map(|r| &r.heads)
            .map(|a| a.relation.as_str())
            .collect()
    }

    /// Checks that bodies read relations of `source` and, when given, that
    /// heads define relations of `target`, each with the schema's arity.
    pub fn check_schemas(
        &self,
        source: &Schema,
        target: Option<&Schema>,
    ) -> Result<(), DatalogError> {
        let check = |atom: &Atom, schema: &Schema| {
            let rec = schema
                .record(&atom.relation)
                .ok_or_else(|| DatalogError::UnknownRelation(atom.relation.clone()))?;
            if rec.arity() == atom.args.len() {
                Ok(())
            } else {
                Err(DatalogError::ArityMismatch {
                    relation: atom.relation.clone(),
                    expected: rec.arity(),
                    found: atom.args.len(),
                })
            }
        };
        for rule in &self.rules {
            rule.body.iter().try_for_each(|a| check(a, source))?;
            if let Some(target) = target {
                rule.heads.iter().try_for_each(|a| check(a, target))?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Wildcard => f.write_str("_"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, t) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |atoms: &[Atom]| {
            atoms
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        };
        write!(f, "{} :- {}.", join(&self.heads), join(&self.body))
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rule in &self.rules {
            writeln!(f, "{rule}")?;
        }
        Ok(())
    }
}

/// Applies a variable substitution, which must be injective on the
/// program's variables. Unmapped variables stay as they are.
pub fn rename(p: &Program, subst: &HashMap<String, String>) -> Result<Program, DatalogError> {
    let mut images = HashSet::new();
    for v in p.vars() {
        let image = subst.get(v).map(String::as_str).unwrap_or(v);
        if !images.insert(image) {
            return Err(DatalogError::NonInjectiveSubstitution(image.to_owned()));
        }
    }
    let map_atom = |a: &Atom| Atom {
        relation: a.relation.clone(),
        args: a
            .args
            .iter()
            .map(|t| match t {
                Term::Var(v) => Term::Var(subst.get(v).cloned().unwrap_or_else(|| v.clone())),
                other => other.clone(),
            })
            .collect(),
    };
    Ok(Program {
        rules: p
            .rules
            .iter()
            .map(|r| Rule {
                heads: r.heads.iter().map(map_atom).collect(),
                body: r.body.iter().map(map_atom).collect(),
            })
            .collect(),
    })
}

/// Canonical representative of a program's renaming class: body variables
/// that occur once become wildcards and the remaining variables are renamed
/// `V0, V1, ...` per rule in order of first occurrence.
pub fn canonical_form(p: &Program) -> Program {
    let rules = p
        .rules
        .iter()
        .map(|rule| {
            let counts = rule.var_counts();
            let head_vars = rule.head_vars();
            let mut names: HashMap<String, String> = HashMap::new();
            let mut map_atom = |a: &Atom, in_head: bool| Atom {
                relation: a.relation.clone(),
                args: a
                    .args
                    .iter()
                    .map(|t| match t {
                        Term::Var(v)
                            if !in_head
                                && counts[v.as_str()] == 1
                                && !head_vars.contains(v.as_str()) =>
                        {
                            Term::Wildcard
                        }
                        Term::Var(v) => {
                            let next = names.len();
                            Term::Var(
                                names
                                    .entry(v.clone())
                                    .or_insert_with(|| format!("V{next}"))
                                    .clone(),
                            )
                        }
                        other => other.clone(),
                    })
                    .collect(),
            };
            let heads = rule.heads.iter().map(|a| map_atom(a, true)).collect();
            let body = rule.body.iter().map(|a| map_atom(a, false)).collect();
            Rule { heads, body }
        })
        .collect();
    Program { rules }
}

/// Syntactic equality up to injective variable renaming.
pub fn alpha_equivalent(a: &Program, b: &Program) -> bool {
    canonical_form(a) == canonical_form(b)
}
