use std::collections::{HashMap, HashSet};

use super::{Atom, Program, Rule, Term};

/// Removes redundant body atoms from every rule.
///
/// Two kinds of atoms go: dangling atoms, whose variables all occur exactly
/// once in the rule and which carry no constants, and atoms that a
/// head-preserving homomorphism folds onto the rest of the body. The first
/// kind only changes results when the atom's relation is empty; the second
/// never does.
pub fn simplify(p: &Program) -> Program {
    Program {
        rules: p.rules.iter().map(simplify_rule).collect(),
    }
}

fn simplify_rule(rule: &Rule) -> Rule {
    let mut rule = rule.clone();
    while let Some(i) = dangling_atom(&rule).or_else(|| foldable_atom(&rule)) {
        rule.body.remove(i);
    }
    rule
}

fn dangling_atom(rule: &Rule) -> Option<usize> {
    if rule.body.len() < 2 {
        return None;
    }
    let counts = rule.var_counts();
    (0..rule.body.len()).rev().find(|&i| {
        rule.body[i].args.iter().all(|t| match t {
            Term::Var(v) => counts[v.as_str()] == 1,
            Term::Wildcard => true,
            Term::Const(_) => false,
        })
    })
}

fn foldable_atom(rule: &Rule) -> Option<usize> {
    if rule.body.len() < 2 {
        return None;
    }
    let fixed: HashSet<&str> = rule.head_vars().into_iter().collect();
    let counts = rule.var_counts();
    let all: Vec<&Atom> = rule.body.iter().collect();
    (0..rule.body.len()).rev().find(|&i| {
        let rest: Vec<&Atom> = rule
            .body
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, a)| a)
            .collect();
        let ctx = Fold {
            targets: &rest,
            fixed: &fixed,
            counts: &counts,
        };
        ctx.search(&all, &mut HashMap::new())
    })
}

struct Fold<'r, 'a> {
    targets: &'r [&'a Atom],
    fixed: &'r HashSet<&'a str>,
    counts: &'r HashMap<&'a str, usize>,
}

impl<'a> Fold<'_, 'a> {
    /// Whether `atoms` map into the targets by a variable mapping that fixes
    /// head variables. A target wildcard can only absorb a variable that
    /// occurs once.
    fn search(&self, atoms: &[&'a Atom], mapping: &mut HashMap<&'a str, &'a Term>) -> bool {
        let Some((atom, remaining)) = atoms.split_first() else {
            return true;
        };
        for target in self
            .targets
            .iter()
            .filter(|t| t.relation == atom.relation && t.args.len() == atom.args.len())
        {
            let mut added = Vec::new();
            let ok = atom
                .args
                .iter()
                .zip(&target.args)
                .all(|(from, to)| match from {
                    Term::Wildcard => true,
                    Term::Const(_) => from == to,
                    Term::Var(v) if self.fixed.contains(v.as_str()) => {
                        matches!(to, Term::Var(w) if w == v)
                    }
                    Term::Var(v) => match mapping.get(v.as_str()) {
                        Some(image) => *image == to,
                        None if matches!(to, Term::Wildcard) => self.counts[v.as_str()] == 1,
                        None => {
                            mapping.insert(v.as_str(), to);
                            added.push(v.as_str());
                            true
                        }
                    },
                });
            if ok && self.search(remaining, mapping) {
                return true;
            }
            for v in added {
                mapping.remove(v);
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::parse_program;

    fn simp(text: &str) -> String {
        simplify(&parse_program(text).unwrap()).to_string()
    }

    #[test]
    fn drops_dangling_copy() {
        assert_eq!(
            simp("Admission(grad,ug,num) :- Univ(id1,grad,v1), Admit(v1,id2,num), Univ(id2,ug,_), Univ(id3,name1,_)."),
            "Admission(grad,ug,num) :- Univ(id1,grad,v1), Admit(v1,id2,num), Univ(id2,ug,_).\n"
        );
    }

    #[test]
    fn folds_duplicated_copy() {
        assert_eq!(
            simp("Admission(grad,ug,num) :- Univ(id1,grad,v1), Admit(v1,id2,num), Univ(id2,ug,v2), Univ(id1,grad,v3)."),
            "Admission(grad,ug,num) :- Univ(id1,grad,v1), Admit(v1,id2,num), Univ(id2,ug,v2).\n"
        );
    }

    #[test]
    fn keeps_joined_atoms() {
        let text = "H(a) :- R(a,b), S(b,c).\n";
        assert_eq!(simp(text), text);
        let text = "H(x,y) :- R(x,z), R(z,y).\n";
        assert_eq!(simp(text), text);
        let text = "H(x) :- R(x,1), R(x,_).\n";
        assert_eq!(simp(text), "H(x) :- R(x,1).\n");
    }

    #[test]
    fn wildcard_targets_do_not_absorb_shared_variables() {
        // R(x,y) cannot fold onto R(x,_) because y is needed by S.
        let text = "H(x) :- R(x,_), R(x,y), S(y).\n";
        assert_eq!(simp(text), "H(x) :- R(x,y), S(y).\n");
    }

    #[test]
    fn never_empties_a_body() {
        assert_eq!(simp("H(x) :- R(_,_)."), "H(x) :- R(_,_).\n");
    }
}
