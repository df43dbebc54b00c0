//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::gen;
use datamig::analyze::{generalize_with_mdp, mdp_set, Mdp};
use datamig::datalog::{
    alpha_equivalent, evaluate, parse_program, rename, Atom, Program, Rule, Term,
};
use datamig::fdsolver::{all_models, count_models, Clause, Model};
use datamig::instance::{
    facts_to_instance, instance_to_facts, Example, FactBase, Field, Instance, Record, Tuple, Value,
};
use datamig::schema::{QualifiedAttr, Schema};
use datamig::sketch::Candidate;
use datamig::synth::{
    distinguishing_pool, find_distinguishing_input, find_second_program, interactive_synthesize,
    synthesize, Strategy, SynthOptions, Synthesizer,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const INCORRECT_PROGRAM: &str =
    "Admission(grad,ug,num) :- Univ(id1,grad,v1), Admit(v1,id1,num), Univ(id1,ug,_), Univ(id2,name1,_).\n";

fn output_of(target: &Schema, p: &Program, input: &FactBase) -> Option<Instance> {
    facts_to_instance(target, &evaluate(p, input).ok()?).ok()
}

fn univ_session() -> Synthesizer {
    let t = common::univ();
    Synthesizer::new(&t.source, &t.target, &[t.example], &SynthOptions::default()).unwrap()
}

/// The failing assignment behind the incorrect program.
fn sigma2(s: &Synthesizer) -> Model {
    let names = ["id1", "grad", "id1", "num", "id1", "ug", "id2", "name1"];
    Model(
        names
            .iter()
            .map(|n| {
                s.encoding
                    .codebook
                    .lookup(0, &Candidate::Var((*n).into()))
                    .unwrap()
            })
            .collect(),
    )
}

fn a1() -> Outcome {
    let t = common::univ();
    let start = Instant::now();
    let r = synthesize(
        &t.source,
        &t.target,
        std::slice::from_ref(&t.example),
        &SynthOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let expected = parse_program(common::UNIV_PROGRAM).unwrap();
    ensure!(alpha_equivalent(&r.program, &expected), "got {}", r.program);
    let input = instance_to_facts(&t.source, &t.example.input).unwrap();
    let out = output_of(&t.target, &r.program, &input);
    ensure!(
        out.as_ref() == Some(&t.example.output),
        "output differs from the example"
    );
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!(
        "{} in {} iterations, {elapsed:.2?}",
        r.program.to_string().trim(),
        r.iterations
    ))
}

fn a2() -> Outcome {
    let size = univ_session().sketch.search_space_size();
    ensure!(size.to_string() == "64000", "search space {size}");
    Ok(format!("search space {size}"))
}

fn a3() -> Outcome {
    let t = common::univ();
    let input = instance_to_facts(&t.source, &t.example.input).unwrap();
    let actual = output_of(
        &t.target,
        &parse_program(INCORRECT_PROGRAM).unwrap(),
        &input,
    )
    .unwrap();
    let mdps = mdp_set(&t.target, &actual, &t.example.output).map_err(|e| e.to_string())?;
    let got: BTreeSet<BTreeSet<String>> = mdps
        .iter()
        .map(|m| m.attrs.iter().map(|a| a.name.clone()).collect())
        .collect();
    let want: BTreeSet<BTreeSet<String>> = [vec!["num"], vec!["grad", "ug"]]
        .iter()
        .map(|s| s.iter().map(|x| x.to_string()).collect())
        .collect();
    ensure!(got == want, "got {got:?}");
    Ok(mdps
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", "))
}

fn a4() -> Outcome {
    let s = univ_session();
    let sigma = sigma2(&s);
    let shown = s.encoding.instantiate(&s.sketch, &sigma).to_string();
    ensure!(shown == INCORRECT_PROGRAM, "σ₂ instantiates to {shown}");
    let phi = Mdp {
        relation: "Admission".into(),
        attrs: vec![QualifiedAttr::new("Admission", "num")],
    };
    let g = generalize_with_mdp(&sigma, &s.sketch, &s.encoding, &phi);
    let clauses = g.to_clauses();
    let refs: Vec<&Clause> = clauses.iter().collect();
    let counted = count_models(&s.encoding.vars, &refs, 64_000).map_err(|e| e.to_string())?;

    // Independent count: walk all 64,000 assignments by candidate name and
    // keep those that pin num and repeat σ₂'s equality pattern elsewhere.
    let domains: Vec<Vec<String>> = s
        .sketch
        .holes
        .iter()
        .map(|h| h.domain.iter().map(ToString::to_string).collect())
        .collect();
    let names: Vec<String> = sigma
        .0
        .iter()
        .map(|&c| s.encoding.codebook.candidate(c).to_string())
        .collect();
    let pinned: Vec<bool> = names.iter().map(|n| n == "num").collect();
    let mut idx = vec![0usize; domains.len()];
    let (mut brute, mut total) = (0u64, 0u64);
    'outer: loop {
        total += 1;
        let a: Vec<&str> = idx
            .iter()
            .enumerate()
            .map(|(h, &i)| domains[h][i].as_str())
            .collect();
        let pins_ok = (0..a.len()).all(|h| !pinned[h] || a[h] == names[h]);
        let pattern_ok = (0..a.len()).all(|i| {
            (i + 1..a.len())
                .all(|j| (pinned[i] && pinned[j]) || (a[i] == a[j]) == (names[i] == names[j]))
        });
        if pins_ok && pattern_ok {
            brute += 1;
        }
        for h in 0..idx.len() {
            idx[h] += 1;
            if idx[h] < domains[h].len() {
                continue 'outer;
            }
            idx[h] = 0;
        }
        break;
    }
    ensure!(total == 64_000, "enumerated {total} assignments");
    ensure!(
        counted == 720 && brute == 720,
        "solver {counted}, brute force {brute}"
    );
    Ok(format!(
        "{counted} models (brute force over {total} assignments: {brute}; σ₂ itself included)"
    ))
}

fn random_program(rng: &mut ChaCha8Rng, arities: &[usize]) -> Program {
    let rules = (0..rng.gen_range(1..=2))
        .map(|i| gen::rule(rng, arities, &format!("H{i}"), true))
        .collect();
    Program::new(rules)
}

fn a5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e01);
    for case in 0..200 {
        let arities: Vec<usize> = (0..rng.gen_range(1..=5))
            .map(|_| rng.gen_range(1..=3))
            .collect();
        let fb = gen::fact_base(&mut rng, &arities, 20);
        let p = random_program(&mut rng, &arities);
        let vars: Vec<String> = p.vars().into_iter().map(str::to_owned).collect();
        let mut images: Vec<String> = vars.clone();
        images.extend((0..3).map(|i| format!("w{i}")));
        images.shuffle(&mut rng);
        let subst: HashMap<String, String> = vars.iter().cloned().zip(images).collect();
        let q = rename(&p, &subst).map_err(|e| e.to_string())?;
        let (a, b) = (evaluate(&p, &fb), evaluate(&q, &fb));
        ensure!(a == b, "case {case}: {p} vs {q}");
    }
    Ok("200 random programs agree with their renamings".into())
}

fn a6() -> Outcome {
    let t = common::univ();
    let mut s = univ_session();
    s.run().map_err(|e| e.to_string())?;
    let input = instance_to_facts(&t.source, &t.example.input).unwrap();
    let (mut families, mut programs) = (0, 0usize);
    for it in s.trace.iter().filter(|it| !it.consistent) {
        for g in &it.blocked {
            families += 1;
            let clauses = g.to_clauses();
            let refs: Vec<&Clause> = clauses.iter().collect();
            let models = all_models(&s.encoding.vars, &refs, 64_000).map_err(|e| e.to_string())?;
            ensure!(
                models.contains(&it.model),
                "iteration {} does not block its own model",
                it.index
            );
            for m in models {
                programs += 1;
                let p = s.encoding.instantiate(&s.sketch, &m);
                let out = output_of(&t.target, &p, &input);
                ensure!(
                    out.as_ref() != Some(&t.example.output),
                    "blocked program is consistent: {p}"
                );
            }
        }
    }
    Ok(format!(
        "{programs} blocked programs across {families} blocked families are all inconsistent"
    ))
}

fn run_both(source: &Schema, target: &Schema, example: &Example) -> Result<(u64, u64), String> {
    let mut counts = [0u64; 2];
    let mut programs = Vec::new();
    for (k, strategy) in [Strategy::Mdp, Strategy::Naive].into_iter().enumerate() {
        let opts = SynthOptions {
            strategy,
            timeout: Some(Duration::from_secs(60)),
            ..SynthOptions::default()
        };
        let r = synthesize(source, target, std::slice::from_ref(example), &opts)
            .map_err(|e| format!("{strategy}: {e}"))?;
        let input = instance_to_facts(source, &example.input).unwrap();
        ensure!(
            output_of(target, &r.program, &input).as_ref() == Some(&example.output),
            "{strategy} program inconsistent: {}",
            r.program
        );
        counts[k] = r.iterations;
        programs.push(r.program);
    }
    Ok((counts[0], counts[1]))
}

const MAX_ABLATION_SPACE: u32 = 200_000;

fn a7() -> Outcome {
    let t = common::univ();
    let (m, n) = run_both(&t.source, &t.target, &t.example)?;
    ensure!(m < n, "university task: mdp {m} vs naive {n}");
    let mut rng = ChaCha8Rng::seed_from_u64(0xab1a7e);
    let (mut sum_m, mut sum_n) = (m, n);
    let (mut i, mut skipped) = (0, 0);
    while i < 20 {
        let task = gen::join_task(&mut rng);
        // Naive enumeration must be able to finish.
        let space = Synthesizer::new(
            &task.source,
            &task.target,
            std::slice::from_ref(&task.example),
            &SynthOptions::default(),
        )
        .map(|s| s.sketch.search_space_size())
        .map_err(|e| format!("task {i}: {e}"))?;
        if space > MAX_ABLATION_SPACE.into() {
            skipped += 1;
            continue;
        }
        i += 1;
        let (tm, tn) = run_both(&task.source, &task.target, &task.example)
            .map_err(|e| format!("task {i} ({}): {e}", task.golden.to_string().trim()))?;
        ensure!(tm <= tn, "task {i}: mdp {tm} > naive {tn}");
        sum_m += tm;
        sum_n += tn;
    }
    Ok(format!(
        "university: mdp {m} vs naive {n} iterations; all 21 tasks: {sum_m} vs {sum_n} \
         ({skipped} generated tasks over {MAX_ABLATION_SPACE} completions skipped)"
    ))
}

fn a8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a08);
    for case in 0..100 {
        let arities: Vec<usize> = (0..rng.gen_range(1..=3))
            .map(|_| rng.gen_range(1..=3))
            .collect();
        let fb = gen::fact_base(&mut rng, &arities, 20);
        let base = gen::rule(&mut rng, &arities, "H", false);
        let mut vars: Vec<String> = base.body_vars().into_iter().map(str::to_owned).collect();
        vars.shuffle(&mut rng);
        let full = Program::new(vec![Rule {
            heads: vec![Atom::new(
                "H",
                vars.iter().map(|v| Term::var(v.clone())).collect(),
            )],
            body: base.body.clone(),
        }]);
        let keep: Vec<usize> = (0..vars.len()).filter(|_| rng.gen_bool(0.5)).collect();
        let keep = if keep.is_empty() { vec![0] } else { keep };
        let restricted = Program::new(vec![Rule {
            heads: vec![Atom::new(
                "H",
                keep.iter().map(|&i| Term::var(vars[i].clone())).collect(),
            )],
            body: base.body,
        }]);
        let projected: BTreeSet<Tuple> = evaluate(&full, &fb)
            .unwrap()
            .tuples("H")
            .map(|t| keep.iter().map(|&i| t[i].clone()).collect())
            .collect();
        let direct: BTreeSet<Tuple> = evaluate(&restricted, &fb)
            .unwrap()
            .tuples("H")
            .cloned()
            .collect();
        ensure!(projected == direct, "case {case}: {full}");
    }
    Ok("100 random rules: head restriction equals projection".into())
}

fn a9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a09);
    let mut records = 0;
    for case in 0..100 {
        let (schema, instance) = gen::nested_instance(&mut rng);
        let facts = instance_to_facts(&schema, &instance).map_err(|e| e.to_string())?;
        ensure!(
            facts.len() <= instance.record_count(),
            "case {case}: more facts than records"
        );
        let back = facts_to_instance(&schema, &facts).map_err(|e| e.to_string())?;
        ensure!(back == instance, "case {case}: round trip differs");
        let again = instance_to_facts(&schema, &back).map_err(|e| e.to_string())?;
        ensure!(
            again.len() == facts.len(),
            "case {case}: fact count changed on the way back"
        );
        records += instance.record_count();
    }
    Ok(format!(
        "100 random nested instances ({records} records) round-trip"
    ))
}

fn a10() -> Outcome {
    let t = common::worksin();
    let joined = parse_program("WorksIn(x,y) :- Employee(x,z), Department(z,y).").unwrap();
    let unjoined = parse_program("WorksIn(x,y) :- Employee(x,z), Department(w,y).").unwrap();
    let opts = SynthOptions::default();
    let examples = vec![t.example.clone()];
    let first = synthesize(&t.source, &t.target, &examples, &opts)
        .map_err(|e| e.to_string())?
        .program;
    let second = find_second_program(&t.source, &t.target, &examples, &first, &opts)
        .map_err(|e| e.to_string())?
        .ok_or("no second program")?;
    let found = [&first, &second];
    ensure!(
        found.iter().any(|p| alpha_equivalent(p, &joined))
            && found.iter().any(|p| alpha_equivalent(p, &unjoined)),
        "found {first} and {second}"
    );
    let pool = distinguishing_pool(&t.source, &examples).map_err(|e| e.to_string())?;
    let input = find_distinguishing_input(&t.source, &t.target, &first, &second, &pool, 100_000)
        .map_err(|e| e.to_string())?
        .ok_or("no distinguishing input")?;
    ensure!(
        input.len() <= 4,
        "distinguishing input has {} tuples",
        input.len()
    );
    ensure!(
        output_of(&t.target, &first, &input) != output_of(&t.target, &second, &input),
        "outputs agree on the distinguishing input"
    );

    // The user answers by running the intended join.
    let mut asked = 0;
    let (result, all) = interactive_synthesize(&t.source, &t.target, &examples, &opts, |q| {
        asked += 1;
        let fb = instance_to_facts(&t.source, &q.input).unwrap();
        output_of(&t.target, &joined, &fb)
            .unwrap()
            .to_json(&t.target)
    })
    .map_err(|e| e.to_string())?;
    ensure!(
        alpha_equivalent(&result.program, &joined),
        "final program {}",
        result.program
    );
    let rest = find_second_program(&t.source, &t.target, &all, &result.program, &opts)
        .map_err(|e| e.to_string())?;
    ensure!(rest.is_none(), "still ambiguous: {}", rest.unwrap());
    let shown: Vec<String> = input.facts().map(|f| f.to_string()).collect();
    Ok(format!(
        "distinguishing input {{{}}}; {asked} question(s); final {}",
        shown.join(", "),
        result.program.to_string().trim()
    ))
}

/// Projection of a flat instance computed straight from its records.
fn oracle_projection(inst: &Instance, relation: &str, positions: &[usize]) -> BTreeSet<Vec<Value>> {
    inst.records(relation)
        .iter()
        .map(|r: &Record| {
            positions
                .iter()
                .map(|&p| match &r.fields[p] {
                    Field::Prim(v) => v.clone(),
                    Field::Nested(_) => unreachable!("flat relations only"),
                })
                .collect()
        })
        .collect()
}

fn a11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3d11);
    let mut cases = 0;
    let mut total = 0;
    while cases < 50 {
        let relations: Vec<usize> = (0..rng.gen_range(1..=2))
            .map(|_| rng.gen_range(1..=5))
            .collect();
        let mut defs = indexmap::IndexMap::new();
        for (r, &n) in relations.iter().enumerate() {
            defs.insert(
                format!("T{r}"),
                datamig::schema::TypeDef::Record((0..n).map(|j| format!("c{r}_{j}")).collect()),
            );
            for j in 0..n {
                defs.insert(
                    format!("c{r}_{j}"),
                    datamig::schema::TypeDef::Prim(datamig::schema::PrimKind::Int),
                );
            }
        }
        let schema = Schema::from_defs(&defs, None).unwrap();
        let mut pair = Vec::new();
        for _ in 0..2 {
            let mut inst = Instance::new();
            for (r, &n) in relations.iter().enumerate() {
                let rows = (0..rng.gen_range(0..=4))
                    .map(|_| Record {
                        fields: (0..n)
                            .map(|_| Field::Prim(Value::Int(rng.gen_range(0..3))))
                            .collect(),
                    })
                    .collect();
                inst.relations.insert(format!("T{r}"), rows);
            }
            pair.push(inst);
        }
        if pair[0] == pair[1] {
            continue;
        }
        cases += 1;
        let got: BTreeSet<(String, Vec<String>)> = mdp_set(&schema, &pair[0], &pair[1])
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|m| (m.relation, m.attrs.into_iter().map(|a| a.name).collect()))
            .collect();
        let mut want = BTreeSet::new();
        for (r, &n) in relations.iter().enumerate() {
            let rel = format!("T{r}");
            let differs = |mask: u32| {
                let pos: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
                oracle_projection(&pair[0], &rel, &pos) != oracle_projection(&pair[1], &rel, &pos)
            };
            for mask in 1u32..(1 << n) {
                let minimal = (1u32..mask).filter(|s| s & mask == *s).all(|s| !differs(s));
                if differs(mask) && minimal {
                    want.insert((
                        rel.clone(),
                        (0..n)
                            .filter(|j| mask & (1 << j) != 0)
                            .map(|j| format!("c{r}_{j}"))
                            .collect(),
                    ));
                }
            }
        }
        ensure!(got == want, "case {cases}: got {got:?}, want {want:?}");
        total += got.len();
    }
    Ok(format!(
        "50 random output pairs match the powerset oracle ({total} MDPs)"
    ))
}

fn a12() -> Outcome {
    let source = Schema::parse(
        r#"{"types": {"Emp": {"record": ["name", "grade", "team"]}, "name": "String", "grade": "Int", "team": "Int"}}"#,
    )
    .unwrap();
    let target = Schema::parse(
        r#"{"types": {"T": {"record": ["tname", "tgrade"]}, "tname": "String", "tgrade": "Int"}}"#,
    )
    .unwrap();
    let input = Instance::parse(
        &source,
        r#"{"Emp": [{"name": "a", "grade": 1, "team": 1}, {"name": "b", "grade": 2, "team": 1},
                    {"name": "c", "grade": 2, "team": 9}, {"name": "d", "grade": 3, "team": 9}]}"#,
    )
    .unwrap();
    let golden = parse_program("T(n,g) :- Emp(n,g,1).").unwrap();
    let output = output_of(
        &target,
        &golden,
        &instance_to_facts(&source, &input).unwrap(),
    )
    .unwrap();
    let example = Example { input, output };
    let with = SynthOptions {
        filtering: true,
        ..SynthOptions::default()
    };
    let r = synthesize(&source, &target, std::slice::from_ref(&example), &with)
        .map_err(|e| e.to_string())?;
    let facts = instance_to_facts(&source, &example.input).unwrap();
    ensure!(
        output_of(&target, &r.program, &facts).as_ref() == Some(&example.output),
        "inconsistent {}",
        r.program
    );
    ensure!(
        r.program.rules[0]
            .body
            .iter()
            .flat_map(|a| &a.args)
            .any(|t| matches!(t, Term::Const(_))),
        "no constant in {}",
        r.program
    );
    let without = synthesize(&source, &target, &[example], &SynthOptions::default());
    ensure!(
        without.is_err(),
        "unfiltered synthesis succeeded: {}",
        without.unwrap().program
    );
    Ok(format!(
        "with filtering: {}; without: {}",
        r.program.to_string().trim(),
        without.err().unwrap()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("A1", a1),
        ("A2", a2),
        ("A3", a3),
        ("A4", a4),
        ("A5", a5),
        ("A6", a6),
        ("A7", a7),
        ("A8", a8),
        ("A9", a9),
        ("A10", a10),
        ("A11", a11),
        ("A12", a12),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == name) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("{name} PASS {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{name} FAIL {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
