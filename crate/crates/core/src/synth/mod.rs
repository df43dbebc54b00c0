//! The synthesis loop: propose the smallest remaining completion, check it
//! against every example, and block the failure's whole family on mismatch.

mod interactive;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::analyze::{analyze, generalize, AnalyzeError, Mdp};
use crate::attrmap::{infer_attr_mapping_all, AttributeMapping};
use crate::datalog::{alpha_equivalent, evaluate, simplify, DatalogError, Program};
use crate::fdsolver::{
    count_models, encode, Clause, Conjunction, Encoding, Literal, Model, SolverError,
};
use crate::instance::{facts_to_instance, instance_to_facts, FactBase, Instance, InstanceError};
use crate::schema::Schema;
use crate::sketch::{output_constants, sketch_gen, Sketch, SketchError};

pub use crate::instance::Example;
pub use interactive::{
    distinguishing_pool, find_distinguishing_input, find_second_program, interactive_synthesize,
    Interaction, Query, Step,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no completion of the sketch is consistent with the examples")]
    NoProgram,
    #[error("synthesis timed out after {0:?}")]
    Timeout(Duration),
    #[error("synthesis stopped after {0} iterations")]
    IterationBudgetExceeded(u64),
    #[error("at least one example is required")]
    NoExamples,
    #[error("oracle answer rejected: {0}")]
    OracleRejected(String),
    #[error("no distinguishing input found within {0} candidate inputs")]
    DistinguishBudgetExceeded(u64),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Datalog(#[from] DatalogError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// How a failed completion is blocked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Block every completion sharing a minimal distinguishing projection.
    #[default]
    Mdp,
    /// Block only the failed completion itself.
    Naive,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mdp" => Ok(Strategy::Mdp),
            "naive" => Ok(Strategy::Naive),
            other => Err(format!(
                "unknown strategy `{other}` (expected mdp or naive)"
            )),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Mdp => "mdp",
            Strategy::Naive => "naive",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub strategy: Strategy,
    /// Allow constants from the example outputs as hole candidates.
    pub filtering: bool,
    pub timeout: Option<Duration>,
    pub max_iterations: Option<u64>,
    /// Interactive mode: maximum number of questions asked.
    pub max_rounds: usize,
    /// Interactive mode: maximum candidate inputs tried per question.
    pub distinguish_budget: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            strategy: Strategy::Mdp,
            filtering: false,
            timeout: None,
            max_iterations: None,
            max_rounds: 8,
            distinguish_budget: 200_000,
        }
    }
}

/// One checked completion.
#[derive(Debug, Clone)]
pub struct Iteration {
    pub index: u64,
    pub model: Model,
    pub consistent: bool,
    pub mdps: Vec<Mdp>,
    /// Families blocked after this iteration, as conjunctions over holes.
    pub blocked: Vec<Conjunction>,
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    /// Simplified program, or the raw completion when simplification
    /// changes the result on an example.
    pub program: Program,
    pub raw: Program,
    pub model: Model,
    pub iterations: u64,
    pub blocking_clauses: usize,
    pub elapsed: Duration,
    pub search_space: BigUint,
}

/// A consistent completion found by the search.
#[derive(Debug, Clone)]
pub struct Found {
    pub model: Model,
    pub raw: Program,
    pub program: Program,
}

/// One synthesis session over a fixed list of examples.
pub struct Synthesizer {
    pub target: Schema,
    pub examples: Vec<Example>,
    inputs: Vec<FactBase>,
    pub psi: AttributeMapping,
    pub sketch: Sketch,
    pub encoding: Encoding,
    pub options: SynthOptions,
    pub trace: Vec<Iteration>,
    started: Instant,
}

impl Synthesizer {
    pub fn new(
        source: &Schema,
        target: &Schema,
        examples: &[Example],
        options: &SynthOptions,
    ) -> Result<Synthesizer, SynthError> {
        if examples.is_empty() {
            return Err(SynthError::NoExamples);
        }
        let psi = infer_attr_mapping_all(source, target, examples)?;
        let constants = if options.filtering {
            output_constants(examples.iter().map(|e| &e.output))
        } else {
            Vec::new()
        };
        let sketch = sketch_gen(&psi, source, target, &constants)?;
        let encoding = encode(&sketch);
        let inputs = examples
            .iter()
            .map(|e| instance_to_facts(source, &e.input))
            .collect::<Result<_, _>>()?;
        Ok(Synthesizer {
            target: target.clone(),
            examples: examples.to_vec(),
            inputs,
            psi,
            sketch,
            encoding,
            options: options.clone(),
            trace: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn iterations(&self) -> u64 {
        self.trace.len() as u64
    }

    /// Output of `p` on example `i`, or `None` when the facts do not form a
    /// target instance.
    fn output(&self, p: &Program, i: usize) -> Result<Option<Instance>, SynthError> {
        let facts = evaluate(p, &self.inputs[i])?;
        Ok(facts_to_instance(&self.target, &facts).ok())
    }

    /// Whether `p` reproduces every example output.
    pub fn consistent(&self, p: &Program) -> Result<bool, SynthError> {
        for (i, e) in self.examples.iter().enumerate() {
            if self.output(p, i)?.as_ref() != Some(&e.output) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Finds the next consistent completion, blocking every failure met on
    /// the way. Returns `None` once the encoding is unsatisfiable.
    pub fn next_consistent(&mut self) -> Result<Option<Found>, SynthError> {
        loop {
            if let Some(limit) = self.options.timeout {
                if self.started.elapsed() > limit {
                    return Err(SynthError::Timeout(limit));
                }
            }
            if let Some(max) = self.options.max_iterations {
                if self.iterations() >= max {
                    return Err(SynthError::IterationBudgetExceeded(max));
                }
            }
            let Some(model) = self.encoding.get_model() else {
                return Ok(None);
            };
            let raw = self.encoding.instantiate(&self.sketch, &model);
            let index = self.iterations() + 1;

            let mut failure = None;
            for (i, e) in self.examples.iter().enumerate() {
                let actual = self.output(&raw, i)?;
                if actual.as_ref() != Some(&e.output) {
                    failure = Some((actual, &e.output));
                    break;
                }
            }
            let Some((actual, expected)) = failure else {
                self.trace.push(Iteration {
                    index,
                    model: model.clone(),
                    consistent: true,
                    mdps: vec![],
                    blocked: vec![],
                });
                let simplified = simplify(&raw);
                let program = if self.consistent(&simplified)? {
                    simplified
                } else {
                    raw.clone()
                };
                return Ok(Some(Found {
                    model,
                    raw,
                    program,
                }));
            };

            let (mdps, blocked) = match (self.options.strategy, actual) {
                (Strategy::Naive, _) => (vec![], vec![exact(&model)]),
                (Strategy::Mdp, Some(actual)) => {
                    match analyze(
                        &model,
                        &self.sketch,
                        &self.encoding,
                        &self.target,
                        &actual,
                        expected,
                    ) {
                        Ok(a) => (a.mdps, a.generalizations),
                        Err(AnalyzeError::EqualOutputs) => {
                            unreachable!("outputs were compared unequal")
                        }
                        Err(AnalyzeError::Instance(e)) => return Err(e.into()),
                    }
                }
                (Strategy::Mdp, None) => (
                    vec![],
                    vec![generalize(&model, &self.sketch, &self.encoding)],
                ),
            };
            for g in &blocked {
                self.encoding.add_blocking_clause(g.negate());
            }
            self.trace.push(Iteration {
                index,
                model,
                consistent: false,
                mdps,
                blocked,
            });
        }
    }

    /// Blocks `model` and every completion equal to it up to renaming.
    pub fn block_class(&mut self, model: &Model) {
        let g = generalize(model, &self.sketch, &self.encoding);
        self.encoding.add_blocking_clause(g.negate());
    }

    /// Next consistent completion not equivalent to any of `excluded`.
    pub fn next_distinct(&mut self, excluded: &[Program]) -> Result<Option<Found>, SynthError> {
        while let Some(found) = self.next_consistent()? {
            self.block_class(&found.model);
            let same = excluded.iter().any(|p| {
                alpha_equivalent(&found.program, p)
                    || alpha_equivalent(&found.raw, p)
                    || alpha_equivalent(&simplify(p), &found.program)
            });
            if !same {
                return Ok(Some(found));
            }
        }
        Ok(None)
    }

    /// One stats record for `it`: the completion tried, its MDPs, and the
    /// size of each blocked family. Families larger than `cap` report `cap`
    /// with `exact` false.
    pub fn iteration_stats(&self, it: &Iteration, cap: u64) -> Json {
        let blocked: Vec<Json> = it
            .blocked
            .iter()
            .map(|g| {
                let clauses = g.to_clauses();
                let refs: Vec<&Clause> = clauses.iter().collect();
                let models = count_models(&self.encoding.vars, &refs, cap);
                json!({
                    "literals": g.0.len(),
                    "models": models.as_ref().map_or(cap, |n| *n),
                    "exact": models.is_ok(),
                })
            })
            .collect();
        json!({
            "iteration": it.index,
            "consistent": it.consistent,
            "program": self.encoding.instantiate(&self.sketch, &it.model).to_string().trim_end(),
            "mdps": it.mdps.iter().map(ToString::to_string).collect::<Vec<_>>(),
            "blocked": blocked,
        })
    }

    pub fn result(&self, found: Found) -> SynthesisResult {
        SynthesisResult {
            program: found.program,
            raw: found.raw,
            model: found.model,
            iterations: self.iterations(),
            blocking_clauses: self.encoding.blocking.len(),
            elapsed: self.started.elapsed(),
            search_space: self.sketch.search_space_size(),
        }
    }

    /// Runs the loop to the first consistent completion.
    pub fn run(&mut self) -> Result<SynthesisResult, SynthError> {
        match self.next_consistent()? {
            Some(found) => Ok(self.result(found)),
            None => Err(SynthError::NoProgram),
        }
    }
}

fn exact(model: &Model) -> Conjunction {
    Conjunction(
        model
            .0
            .iter()
            .enumerate()
            .map(|(x, &c)| Literal::Eq(x, c))
            .collect(),
    )
}

/// Negation of a single completion.
pub fn block_exact(model: &Model) -> Clause {
    exact(model).negate()
}

/// Synthesizes a program consistent with every example.
pub fn synthesize(
    source: &Schema,
    target: &Schema,
    examples: &[Example],
    options: &SynthOptions,
) -> Result<SynthesisResult, SynthError> {
    Synthesizer::new(source, target, examples, options)?.run()
}
