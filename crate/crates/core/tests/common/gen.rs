//! Seeded generators for random schemas, instances, programs, and tasks.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use datamig::datalog::{evaluate, Atom, Program, Rule, Term};
use datamig::instance::{facts_to_instance, Example, FactBase, Field, Instance, Record, Value};
use datamig::schema::{PrimKind, Schema, TypeDef};

const WORDS: [&str; 5] = ["p", "q", "r", "s", "t"];

pub fn value(rng: &mut ChaCha8Rng, kind: PrimKind) -> Value {
    match kind {
        PrimKind::Int => Value::Int(rng.gen_range(0..6)),
        PrimKind::String => Value::str(*WORDS.choose(rng).unwrap()),
    }
}

/// Value drawn from the vocabulary of column group `col`.
fn column_value(rng: &mut ChaCha8Rng, kind: PrimKind, col: usize) -> Value {
    let k = rng.gen_range(0..4);
    match kind {
        PrimKind::Int => Value::Int((col * 100 + k) as i64),
        PrimKind::String => {
            Value::str(format!("{}{k}", WORDS[col % WORDS.len()]) + &"'".repeat(col / WORDS.len()))
        }
    }
}

fn kind(rng: &mut ChaCha8Rng) -> PrimKind {
    if rng.gen_bool(0.5) {
        PrimKind::Int
    } else {
        PrimKind::String
    }
}

/// Flat relations `R0..Rn` with small integer facts.
pub fn fact_base(rng: &mut ChaCha8Rng, arities: &[usize], max_facts: usize) -> FactBase {
    let mut fb = FactBase::new();
    for (i, &n) in arities.iter().enumerate() {
        for _ in 0..rng.gen_range(0..=max_facts / arities.len()) {
            let t = (0..n).map(|_| Value::Int(rng.gen_range(0..4))).collect();
            fb.insert(&format!("R{i}"), t).unwrap();
        }
    }
    fb
}

/// A rule over `R0..Rn` whose head uses only body variables.
pub fn rule(rng: &mut ChaCha8Rng, arities: &[usize], head: &str, allow_consts: bool) -> Rule {
    let vars = ["a", "b", "c", "d", "e"];
    let mut body = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let r = rng.gen_range(0..arities.len());
        let args = (0..arities[r])
            .map(|_| match rng.gen_range(0..10) {
                0 => Term::Wildcard,
                1 if allow_consts => Term::Const(Value::Int(rng.gen_range(0..4))),
                _ => Term::var(*vars.choose(rng).unwrap()),
            })
            .collect();
        body.push(Atom::new(format!("R{r}"), args));
    }
    let mut bound: Vec<String> = body
        .iter()
        .flat_map(|a| a.vars().map(str::to_owned))
        .collect();
    bound.sort();
    bound.dedup();
    if bound.is_empty() {
        body[0].args[0] = Term::var("a");
        bound.push("a".into());
    }
    let n = rng.gen_range(1..=bound.len().min(3));
    let head_args = (0..n)
        .map(|_| Term::var(bound.choose(rng).unwrap().clone()))
        .collect();
    Rule {
        heads: vec![Atom::new(head, head_args)],
        body,
    }
}

/// Random nested schema of depth at most three with a random instance.
pub fn nested_instance(rng: &mut ChaCha8Rng) -> (Schema, Instance) {
    let mut defs: BTreeMap<String, TypeDef> = BTreeMap::new();
    let depth = rng.gen_range(1..=3);
    for level in 0..depth {
        let mut attrs = Vec::new();
        for j in 0..rng.gen_range(1..=2) {
            let name = format!("a{level}_{j}");
            let k = kind(rng);
            defs.insert(name.clone(), TypeDef::Prim(k));
            attrs.push(name);
        }
        if level + 1 < depth {
            attrs.insert(rng.gen_range(0..=attrs.len()), format!("N{}", level + 1));
        }
        defs.insert(format!("N{level}"), TypeDef::Record(attrs));
    }
    let defs: indexmap::IndexMap<String, TypeDef> = defs.into_iter().collect();
    let schema = Schema::from_defs(&defs, None).unwrap();
    fn records(rng: &mut ChaCha8Rng, schema: &Schema, level: usize, max: usize) -> Vec<Record> {
        let rec = schema.record(&format!("N{level}")).unwrap().clone();
        (0..rng.gen_range(0..=max))
            .map(|_| Record {
                fields: rec
                    .attrs
                    .iter()
                    .map(|a| match a.kind {
                        datamig::schema::AttrKind::Prim(k) => Field::Prim(value(rng, k)),
                        datamig::schema::AttrKind::Record => {
                            Field::Nested(records(rng, schema, level + 1, 3))
                        }
                    })
                    .collect(),
            })
            .collect()
    }
    let mut instance = Instance::new();
    let top = records(rng, &schema, 0, 4);
    instance.relations.insert("N0".into(), top);
    (schema, instance)
}

/// A flat migration task produced by running a hidden join-project rule.
pub struct GenTask {
    pub source: Schema,
    pub target: Schema,
    pub example: Example,
    pub golden: Program,
}

pub fn join_task(rng: &mut ChaCha8Rng) -> GenTask {
    loop {
        if let Some(t) = try_join_task(rng) {
            return t;
        }
    }
}

fn try_join_task(rng: &mut ChaCha8Rng) -> Option<GenTask> {
    let nrel = rng.gen_range(1..=3);
    let mut defs: indexmap::IndexMap<String, TypeDef> = indexmap::IndexMap::new();
    let mut rel_kinds: Vec<Vec<PrimKind>> = Vec::new();
    for i in 0..nrel {
        let n = rng.gen_range(2..=4);
        let ks: Vec<PrimKind> = (0..n).map(|_| kind(rng)).collect();
        defs.insert(
            format!("R{i}"),
            TypeDef::Record((0..n).map(|j| format!("r{i}_{j}")).collect()),
        );
        rel_kinds.push(ks);
    }
    // Body: R0, optionally joined with R1 on one column pair of equal kind.
    let join = nrel > 1 && rng.gen_bool(0.6);
    let (ja, jb) = (
        rng.gen_range(0..rel_kinds[0].len()),
        rng.gen_range(0..rel_kinds[1.min(nrel - 1)].len()),
    );
    if join {
        rel_kinds[1][jb] = rel_kinds[0][ja];
    }
    for (i, ks) in rel_kinds.iter().enumerate() {
        for (j, &k) in ks.iter().enumerate() {
            defs.insert(format!("r{i}_{j}"), TypeDef::Prim(k));
        }
    }
    let source = Schema::from_defs(&defs, None).unwrap();

    let mut input = FactBase::new();
    for (i, ks) in rel_kinds.iter().enumerate() {
        for _ in 0..rng.gen_range(3..=5) {
            let t = ks
                .iter()
                .enumerate()
                .map(|(j, &k)| column_value(rng, k, i * 10 + j / 2))
                .collect();
            input.insert(&format!("R{i}"), t).unwrap();
        }
    }
    if join {
        // Join column of R1 draws from R0's join column so the values nest.
        let pool: Vec<Value> = input.tuples("R0").map(|t| t[ja].clone()).collect();
        let rows: Vec<Vec<Value>> = input.tuples("R1").cloned().collect();
        let mut r1 = FactBase::new();
        for mut t in rows {
            t[jb] = pool.choose(rng).unwrap().clone();
            r1.insert("R1", t).unwrap();
        }
        let mut merged = FactBase::new();
        for f in input
            .facts()
            .filter(|f| f.relation != "R1")
            .chain(r1.facts())
        {
            merged.insert(&f.relation, f.args).unwrap();
        }
        input = merged;
    }

    let mut body = vec![Atom::new(
        "R0",
        (0..rel_kinds[0].len())
            .map(|j| Term::var(format!("x{j}")))
            .collect(),
    )];
    let mut head_pool: Vec<Vec<(String, PrimKind)>> = vec![(0..rel_kinds[0].len())
        .map(|j| (format!("x{j}"), rel_kinds[0][j]))
        .collect()];
    if join {
        let args = (0..rel_kinds[1].len())
            .map(|j| {
                if j == jb {
                    Term::var(format!("x{ja}"))
                } else {
                    Term::var(format!("y{j}"))
                }
            })
            .collect();
        body.push(Atom::new("R1", args));
        head_pool.push(
            (0..rel_kinds[1].len())
                .filter(|&j| j != jb)
                .map(|j| (format!("y{j}"), rel_kinds[1][j]))
                .collect(),
        );
    }
    // Every body atom contributes at least one head variable.
    let mut head: Vec<(String, PrimKind)> = head_pool
        .iter()
        .filter_map(|p| p.choose(rng).cloned())
        .collect();
    if head_pool.iter().any(Vec::is_empty) {
        return None;
    }
    let extra: Vec<(String, PrimKind)> = head_pool.concat();
    if head.len() < 3 && rng.gen_bool(0.5) {
        let pick = extra.choose(rng).unwrap().clone();
        if !head.contains(&pick) {
            head.push(pick);
        }
    }
    let mut tdefs: indexmap::IndexMap<String, TypeDef> = indexmap::IndexMap::new();
    tdefs.insert(
        "T".into(),
        TypeDef::Record((0..head.len()).map(|i| format!("t{i}")).collect()),
    );
    for (i, (_, k)) in head.iter().enumerate() {
        tdefs.insert(format!("t{i}"), TypeDef::Prim(*k));
    }
    let target = Schema::from_defs(&tdefs, None).unwrap();
    let golden = Program::new(vec![Rule {
        heads: vec![Atom::new(
            "T",
            head.iter().map(|(v, _)| Term::var(v.clone())).collect(),
        )],
        body,
    }]);
    let out = evaluate(&golden, &input).unwrap();
    if out.is_empty() {
        return None;
    }
    let example = Example {
        input: facts_to_instance(&source, &input).unwrap(),
        output: facts_to_instance(&target, &out).unwrap(),
    };
    Some(GenTask {
        source,
        target,
        example,
        golden,
    })
}
