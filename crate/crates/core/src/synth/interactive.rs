//! Resolving ambiguity by asking for more examples.
//!
//! When two non-equivalent programs both fit the examples, the smallest
//! input on which they disagree is shown to the user, whose answer becomes
//! a new example.

use std::collections::{BTreeSet, HashMap};

use serde_json::Value as Json;

use super::{Found, SynthError, SynthOptions, SynthesisResult, Synthesizer};
use crate::datalog::{evaluate, Program};
use crate::instance::{
    facts_to_instance, instance_to_facts, Example, Fact, FactBase, Instance, InstanceError, RecId,
    Value,
};
use crate::schema::Schema;

/// A consistent program that is not equivalent to `first`, if one exists.
pub fn find_second_program(
    source: &Schema,
    target: &Schema,
    examples: &[Example],
    first: &Program,
    options: &SynthOptions,
) -> Result<Option<Program>, SynthError> {
    let mut session = Synthesizer::new(source, target, examples, options)?;
    Ok(session
        .next_distinct(std::slice::from_ref(first))?
        .map(|f| f.program))
}

/// Candidate input facts: every example input, plus a copy of each with all
/// values replaced by fresh ones.
pub fn distinguishing_pool(source: &Schema, examples: &[Example]) -> Result<FactBase, SynthError> {
    let mut pool = FactBase::new();
    for (i, e) in examples.iter().enumerate() {
        let facts = instance_to_facts(source, &e.input)?;
        for fact in facts.facts() {
            let args = fact
                .args
                .iter()
                .map(|v| tag_id(v, &format!("@{}", i + 1)))
                .collect();
            pool.insert(&fact.relation, args)?;
        }
    }
    let ints: BTreeSet<i64> = pool
        .facts()
        .flat_map(|f| f.args)
        .filter_map(|v| match v {
            Value::Int(n) => Some(n),
            _ => None,
        })
        .collect();
    let next = ints.iter().next_back().map_or(0, |m| m.saturating_add(1));
    let fresh: HashMap<i64, i64> = ints
        .iter()
        .enumerate()
        .map(|(rank, &n)| (n, next.saturating_add(rank as i64)))
        .collect();
    let originals: Vec<Fact> = pool.facts().collect();
    for fact in originals {
        let args = fact
            .args
            .iter()
            .map(|v| match v {
                Value::Int(n) => Value::Int(fresh[n]),
                Value::Str(s) => Value::Str(format!("{s}'")),
                Value::Id(_) => tag_id(v, "'"),
            })
            .collect();
        pool.insert(&fact.relation, args)?;
    }
    Ok(pool)
}

fn tag_id(v: &Value, suffix: &str) -> Value {
    match v {
        Value::Id(RecId(id)) => Value::Id(RecId(format!("{id}{suffix}"))),
        other => other.clone(),
    }
}

/// Smallest subset of `pool` on which `p1` and `p2` produce different
/// target instances. Only subsets in which every nested fact's parent is
/// present are considered.
pub fn find_distinguishing_input(
    source: &Schema,
    target: &Schema,
    p1: &Program,
    p2: &Program,
    pool: &FactBase,
    budget: u64,
) -> Result<Option<FactBase>, SynthError> {
    let facts: Vec<Fact> = pool.facts().collect();
    // For nested facts, the pool indices of facts that can act as parent.
    let mut parents: Vec<Option<Vec<usize>>> = Vec::with_capacity(facts.len());
    for fact in &facts {
        let rec = source.record(&fact.relation).ok_or_else(|| {
            InstanceError::SchemaMismatch(format!("unknown relation `{}`", fact.relation))
        })?;
        parents.push(rec.parent.as_deref().map(|parent| {
            let prec = source.record(parent).unwrap();
            let pos = prec.position_of(prec.attr_index(&rec.name).unwrap());
            facts
                .iter()
                .enumerate()
                .filter(|(_, f)| f.relation == prec.name && f.args[pos] == fact.args[0])
                .map(|(j, _)| j)
                .collect()
        }));
    }
    let is_closed = |subset: &[usize]| {
        subset.iter().all(|&i| match &parents[i] {
            None => true,
            Some(ps) => ps.iter().any(|p| subset.contains(p)),
        })
    };
    let output = |fb: &FactBase, p: &Program| -> Result<Option<Instance>, SynthError> {
        Ok(facts_to_instance(target, &evaluate(p, fb)?).ok())
    };

    let mut tried = 0u64;
    for k in 1..=facts.len() {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            if is_closed(&idx) {
                tried += 1;
                if tried > budget {
                    return Err(SynthError::DistinguishBudgetExceeded(budget));
                }
                let fb = FactBase::from_facts(idx.iter().map(|&i| facts[i].clone()))?;
                if let (Some(a), Some(b)) = (output(&fb, p1)?, output(&fb, p2)?) {
                    if a != b {
                        return Ok(Some(fb));
                    }
                }
            }
            if !next_combination(&mut idx, facts.len()) {
                break;
            }
        }
    }
    Ok(None)
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// A question for the user: the target output expected for `input`.
#[derive(Debug, Clone)]
pub struct Query {
    pub input: Instance,
    /// The two example-consistent programs the answer decides between.
    pub candidates: [Program; 2],
}

#[derive(Debug, Clone)]
pub enum Step {
    Done(SynthesisResult),
    Ask(Query),
}

/// Interactive synthesis as a resumable state machine.
pub struct Interaction {
    source: Schema,
    target: Schema,
    examples: Vec<Example>,
    options: SynthOptions,
    pending: Option<Query>,
    rounds: usize,
}

impl Interaction {
    pub fn start(
        source: &Schema,
        target: &Schema,
        examples: &[Example],
        options: &SynthOptions,
    ) -> Result<(Interaction, Step), SynthError> {
        let mut it = Interaction {
            source: source.clone(),
            target: target.clone(),
            examples: examples.to_vec(),
            options: options.clone(),
            pending: None,
            rounds: 0,
        };
        let step = it.advance()?;
        Ok((it, step))
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn pending(&self) -> Option<&Query> {
        self.pending.as_ref()
    }

    /// Supplies the expected output for the pending query. A malformed
    /// answer is rejected without changing any state.
    pub fn answer(&mut self, output: &Json) -> Result<Step, SynthError> {
        let query = self
            .pending
            .as_ref()
            .ok_or_else(|| SynthError::OracleRejected("no pending query".into()))?;
        let output = Instance::from_json(&self.target, output)
            .map_err(|e| SynthError::OracleRejected(e.to_string()))?;
        let input = query.input.clone();
        self.pending = None;
        self.examples.push(Example { input, output });
        self.rounds += 1;
        self.advance()
    }

    fn advance(&mut self) -> Result<Step, SynthError> {
        let mut session =
            Synthesizer::new(&self.source, &self.target, &self.examples, &self.options)?;
        let Some(first) = session.next_consistent()? else {
            return Err(SynthError::NoProgram);
        };
        let result = session.result(first.clone());
        if self.rounds >= self.options.max_rounds {
            return Ok(Step::Done(result));
        }
        let pool = distinguishing_pool(&self.source, &self.examples)?;
        let mut excluded = vec![first.program.clone()];
        while let Some(Found {
            program: second, ..
        }) = session.next_distinct(&excluded)?
        {
            let found = find_distinguishing_input(
                &self.source,
                &self.target,
                &first.program,
                &second,
                &pool,
                self.options.distinguish_budget,
            )?;
            match found {
                Some(fb) => {
                    let query = Query {
                        input: facts_to_instance(&self.source, &fb)?,
                        candidates: [first.program.clone(), second],
                    };
                    self.pending = Some(query.clone());
                    return Ok(Step::Ask(query));
                }
                // Indistinguishable on every candidate input: treat as equivalent.
                None => excluded.push(second),
            }
        }
        Ok(Step::Done(result))
    }
}

/// Runs the question-answer loop to completion with `oracle` answering each
/// query by a target instance in JSON form.
pub fn interactive_synthesize(
    source: &Schema,
    target: &Schema,
    examples: &[Example],
    options: &SynthOptions,
    mut oracle: impl FnMut(&Query) -> Json,
) -> Result<(SynthesisResult, Vec<Example>), SynthError> {
    let (mut it, mut step) = Interaction::start(source, target, examples, options)?;
    loop {
        match step {
            Step::Done(result) => return Ok((result, it.examples)),
            Step::Ask(query) => step = it.answer(&oracle(&query))?,
        }
    }
}
