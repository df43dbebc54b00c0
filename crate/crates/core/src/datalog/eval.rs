use std::collections::{HashMap, HashSet};

use super::{Atom, DatalogError, Program, Rule, Term};
use crate::instance::{FactBase, RecId, Tuple, Value};

/// Computes the least model of a non-recursive program over `fb`, returning
/// only the facts of head relations.
pub fn evaluate(p: &Program, fb: &FactBase) -> Result<FactBase, DatalogError> {
    check_program(p, fb)?;
    let mut out = FactBase::new();
    for rule in &p.rules {
        eval_rule(rule, fb, &mut out)?;
    }
    Ok(out)
}

fn check_program(p: &Program, fb: &FactBase) -> Result<(), DatalogError> {
    let mut arity: HashMap<&str, usize> = HashMap::new();
    for name in fb.relation_names() {
        if let Some(n) = fb.arity(name) {
            arity.insert(name, n);
        }
    }
    let heads = p.head_relations();
    for rule in &p.rules {
        for atom in rule.heads.iter().chain(&rule.body) {
            let expected = *arity
                .entry(atom.relation.as_str())
                .or_insert(atom.args.len());
            if expected != atom.args.len() {
                return Err(DatalogError::ArityMismatch {
                    relation: atom.relation.clone(),
                    expected,
                    found: atom.args.len(),
                });
            }
        }
        if let Some(atom) = rule
            .body
            .iter()
            .find(|a| heads.contains(a.relation.as_str()))
        {
            return Err(DatalogError::Recursive(atom.relation.clone()));
        }
        if let Some(atom) = rule.heads.iter().find(|a| a.args.contains(&Term::Wildcard)) {
            return Err(DatalogError::WildcardInHead(atom.relation.clone()));
        }
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Source<'a> {
    Slot(usize),
    Const(&'a Value),
    Ident(usize),
}

/// How to derive the identifier bound to a parent-child link variable.
struct IdentPlan<'a> {
    relation: &'a str,
    position: usize,
    key: Vec<Source<'a>>,
}

fn eval_rule(rule: &Rule, fb: &FactBase, out: &mut FactBase) -> Result<(), DatalogError> {
    let mut slots: HashMap<&str, usize> = HashMap::new();
    for v in rule.body.iter().flat_map(Atom::vars) {
        let next = slots.len();
        slots.entry(v).or_insert(next);
    }
    let (head_plan, idents) = plan_heads(rule, &slots)?;
    let rows = join_body(&rule.body, fb, &slots);

    for row in rows {
        let mut ident_values: Vec<Option<Value>> = vec![None; idents.len()];
        for (atom, sources) in rule.heads.iter().zip(&head_plan) {
            let tuple: Tuple = sources
                .iter()
                .map(|s| resolve(*s, &row, &idents, &mut ident_values))
                .collect();
            out.insert(&atom.relation, tuple)
                .map_err(|_| DatalogError::ArityMismatch {
                    relation: atom.relation.clone(),
                    expected: out.arity(&atom.relation).unwrap_or_default(),
                    found: atom.args.len(),
                })?;
        }
    }
    Ok(())
}

fn resolve(
    source: Source<'_>,
    row: &[Option<Value>],
    idents: &[IdentPlan<'_>],
    memo: &mut Vec<Option<Value>>,
) -> Value {
    match source {
        Source::Slot(i) => row[i].clone().expect("body join binds every slot"),
        Source::Const(v) => v.clone(),
        Source::Ident(i) => {
            if let Some(v) = &memo[i] {
                return v.clone();
            }
            let plan = &idents[i];
            let parts: Vec<String> = plan
                .key
                .iter()
                .map(|s| resolve(*s, row, idents, memo).to_string())
                .collect();
            let value = Value::Id(RecId(format!(
                "{}.{}({})",
                plan.relation,
                plan.position,
                parts.join(",")
            )));
            memo[i] = Some(value.clone());
            value
        }
    }
}

fn plan_heads<'a>(
    rule: &'a Rule,
    slots: &HashMap<&'a str, usize>,
) -> Result<(Vec<Vec<Source<'a>>>, Vec<IdentPlan<'a>>), DatalogError> {
    // Head variables missing from the body must be parent-child links.
    let mut ident_index: HashMap<&str, usize> = HashMap::new();
    let mut defining: Vec<(usize, usize)> = Vec::new();
    for (ai, atom) in rule.heads.iter().enumerate() {
        for (pos, term) in atom.args.iter().enumerate() {
            let Term::Var(v) = term else { continue };
            if slots.contains_key(v.as_str()) || pos == 0 {
                continue;
            }
            if ident_index.insert(v, defining.len()).is_some() {
                return Err(DatalogError::UnboundHeadVariable(v.clone()));
            }
            defining.push((ai, pos));
        }
    }
    let mut leading: HashSet<&str> = HashSet::new();
    for atom in &rule.heads {
        if let Some(Term::Var(v)) = atom.args.first() {
            if !slots.contains_key(v.as_str()) && !ident_index.contains_key(v.as_str()) {
                return Err(DatalogError::UnboundHeadVariable(v.clone()));
            }
            leading.insert(v);
        }
    }
    if let Some(v) = ident_index.keys().find(|v| !leading.contains(*v)) {
        return Err(DatalogError::UnboundHeadVariable((*v).to_owned()));
    }
    let source = |t: &'a Term| match t {
        Term::Var(v) => match slots.get(v.as_str()) {
            Some(&s) => Source::Slot(s),
            None => Source::Ident(ident_index[v.as_str()]),
        },
        Term::Const(c) => Source::Const(c),
        Term::Wildcard => unreachable!("checked before planning"),
    };
    let head_plan: Vec<Vec<Source>> = rule
        .heads
        .iter()
        .map(|a| a.args.iter().map(source).collect())
        .collect();

    let mut idents = Vec::with_capacity(defining.len());
    for &(ai, pos) in &defining {
        let atom = &rule.heads[ai];
        let key = atom
            .args
            .iter()
            .enumerate()
            .filter(|&(j, t)| j != pos && (j == 0 || !matches!(source(t), Source::Ident(_))))
            .map(|(_, t)| source(t))
            .collect();
        idents.push(IdentPlan {
            relation: &atom.relation,
            position: pos,
            key,
        });
    }
    // A link may depend on its parent's link, but never on itself.
    for start in 0..idents.len() {
        let mut seen = HashSet::from([start]);
        let mut cur = start;
        while let Some(Source::Ident(next)) = idents[cur]
            .key
            .iter()
            .find(|s| matches!(s, Source::Ident(_)))
            .copied()
        {
            if !seen.insert(next) {
                let name = ident_index
                    .iter()
                    .find(|(_, &i)| i == start)
                    .map(|(v, _)| *v)
                    .unwrap();
                return Err(DatalogError::UnboundHeadVariable(name.to_owned()));
            }
            cur = next;
        }
    }
    Ok((head_plan, idents))
}

enum Role<'a> {
    Key(usize),
    Bind(usize),
    SameAs(usize),
    Equals(&'a Value),
    Skip,
}

/// Left-to-right hash join; returns one slot vector per satisfying assignment.
fn join_body(
    body: &[Atom],
    fb: &FactBase,
    slots: &HashMap<&str, usize>,
) -> Vec<Vec<Option<Value>>> {
    let mut rows: Vec<Vec<Option<Value>>> = vec![vec![None; slots.len()]];
    let mut bound = vec![false; slots.len()];
    for atom in body {
        let mut first_pos: HashMap<usize, usize> = HashMap::new();
        let roles: Vec<Role> = atom
            .args
            .iter()
            .enumerate()
            .map(|(pos, t)| match t {
                Term::Var(v) => {
                    let s = slots[v.as_str()];
                    if bound[s] {
                        Role::Key(s)
                    } else if let Some(&p) = first_pos.get(&s) {
                        Role::SameAs(p)
                    } else {
                        first_pos.insert(s, pos);
                        Role::Bind(s)
                    }
                }
                Term::Const(c) => Role::Equals(c),
                Term::Wildcard => Role::Skip,
            })
            .collect();

        let mut index: HashMap<Vec<&Value>, Vec<&Tuple>> = HashMap::new();
        'facts: for t in fb.tuples(&atom.relation) {
            let mut key = Vec::new();
            for (pos, role) in roles.iter().enumerate() {
                match role {
                    Role::Key(_) => key.push(&t[pos]),
                    Role::SameAs(p) if t[pos] != t[*p] => continue 'facts,
                    Role::Equals(c) if t[pos] != **c => continue 'facts,
                    _ => {}
                }
            }
            index.entry(key).or_default().push(t);
        }

        let mut next = Vec::new();
        for row in &rows {
            let key: Vec<&Value> = roles
                .iter()
                .filter_map(|r| match r {
                    Role::Key(s) => Some(row[*s].as_ref().expect("bound slot")),
                    _ => None,
                })
                .collect();
            let Some(matches) = index.get(&key) else {
                continue;
            };
            for t in matches {
                let mut extended = row.clone();
                for (pos, role) in roles.iter().enumerate() {
                    if let Role::Bind(s) = role {
                        extended[*s] = Some(t[pos].clone());
                    }
                }
                next.push(extended);
            }
        }
        for role in &roles {
            if let Role::Bind(s) = role {
                bound[*s] = true;
            }
        }
        rows = next;
        if rows.is_empty() {
            break;
        }
    }
    rows
}
