//! Session state and its JSON views.

use std::time::Duration;

use datamig::instance::{
    facts_from_rows, facts_to_instance, instance_to_facts, tables, Example, Instance,
};
use datamig::schema::Schema;
use datamig::synth::{
    Interaction, Query, Step, Strategy, SynthError, SynthOptions, SynthesisResult,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Synthesizing,
    AwaitingAnswer,
    Done,
    Failed,
}

/// Body of `POST /sessions`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub source_schema: Json,
    pub target_schema: Json,
    #[serde(default)]
    pub example: Option<Json>,
    #[serde(default)]
    pub examples: Vec<Json>,
    #[serde(default)]
    pub options: OptionsPayload,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsPayload {
    pub strategy: Option<String>,
    #[serde(default)]
    pub filtering: bool,
    /// Seconds.
    pub timeout: Option<f64>,
    pub max_iters: Option<u64>,
}

/// Body of `POST /sessions/{id}/answer`: the expected output either as an
/// instance or as per-relation rows.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub output: Option<Json>,
    pub rows: Option<Json>,
}

/// Everything needed to start a session, validated.
pub struct Setup {
    pub source: Schema,
    pub target: Schema,
    pub examples: Vec<Example>,
    pub options: SynthOptions,
}

impl CreateRequest {
    pub fn validate(self) -> Result<Setup, String> {
        let source =
            Schema::from_json(&self.source_schema).map_err(|e| format!("source_schema: {e}"))?;
        let target =
            Schema::from_json(&self.target_schema).map_err(|e| format!("target_schema: {e}"))?;
        let raw: Vec<Json> = self.example.into_iter().chain(self.examples).collect();
        if raw.is_empty() {
            return Err("at least one example is required".into());
        }
        let examples = raw
            .iter()
            .enumerate()
            .map(|(i, e)| {
                Example::from_json(&source, &target, e)
                    .map_err(|m| format!("example {}: {m}", i + 1))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let o = self.options;
        let mut options = SynthOptions {
            filtering: o.filtering,
            max_iterations: o.max_iters,
            ..SynthOptions::default()
        };
        if let Some(s) = o.strategy {
            options.strategy = s.parse::<Strategy>()?;
        }
        if let Some(t) = o.timeout {
            options.timeout =
                Some(Duration::try_from_secs_f64(t).map_err(|e| format!("timeout: {e}"))?);
        }
        Ok(Setup {
            source,
            target,
            examples,
            options,
        })
    }
}

impl AnswerRequest {
    /// The answer as a target instance in JSON form.
    pub fn to_output(&self, target: &Schema) -> Result<Json, String> {
        match (&self.output, &self.rows) {
            (Some(out), None) => {
                let inst = Instance::from_json(target, out).map_err(|e| e.to_string())?;
                Ok(inst.to_json(target))
            }
            (None, Some(rows)) => {
                let fb = facts_from_rows(target, rows).map_err(|e| e.to_string())?;
                let inst = facts_to_instance(target, &fb).map_err(|e| e.to_string())?;
                Ok(inst.to_json(target))
            }
            _ => Err("give exactly one of `output` or `rows`".into()),
        }
    }
}

pub struct Session {
    pub id: String,
    pub status: Status,
    pub source: Schema,
    pub target: Schema,
    /// Held by the worker while synthesizing.
    pub interaction: Option<Interaction>,
    pub examples: Vec<Example>,
    pub query: Option<Query>,
    pub result: Option<SynthesisResult>,
    pub error: Option<String>,
    pub answers: usize,
}

impl Session {
    pub fn new(id: String, setup: &Setup) -> Session {
        Session {
            id,
            status: Status::Synthesizing,
            source: setup.source.clone(),
            target: setup.target.clone(),
            interaction: None,
            examples: setup.examples.clone(),
            query: None,
            result: None,
            error: None,
            answers: 0,
        }
    }

    /// Records a worker's outcome.
    pub fn apply(&mut self, interaction: Option<Interaction>, step: Result<Step, SynthError>) {
        if let Some(it) = &interaction {
            self.examples = it.examples().to_vec();
        }
        self.interaction = interaction;
        match step {
            Ok(Step::Done(result)) => {
                self.status = Status::Done;
                self.result = Some(result);
                self.query = None;
            }
            Ok(Step::Ask(query)) => {
                self.status = Status::AwaitingAnswer;
                self.query = Some(query);
            }
            Err(e) => {
                self.status = Status::Failed;
                self.query = None;
                self.error = Some(e.to_string());
            }
        }
    }

    pub fn program_text(&self) -> Option<String> {
        self.result.as_ref().map(|r| r.program.to_string())
    }

    pub fn stats(&self) -> Option<Json> {
        self.result.as_ref().map(|r| {
            json!({
                "iterations": r.iterations,
                "blocking_clauses": r.blocking_clauses,
                "elapsed_ms": r.elapsed.as_secs_f64() * 1000.0,
                "search_space": r.search_space.to_string(),
            })
        })
    }

    fn query_json(&self) -> Option<Json> {
        let q = self.query.as_ref()?;
        let facts = instance_to_facts(&self.source, &q.input).ok()?;
        Some(json!({
            "input": q.input.to_json(&self.source),
            "tables": tables(&self.source, &facts).iter().map(|t| t.to_json()).collect::<Vec<_>>(),
            "candidates": q.candidates.iter().map(ToString::to_string).collect::<Vec<_>>(),
        }))
    }

    pub fn snapshot(&self) -> Json {
        json!({
            "id": self.id,
            "status": self.status,
            "examples": self.examples.len(),
            "answers": self.answers,
            "program": self.program_text(),
            "query": self.query_json(),
            "error": self.error,
            "stats": self.stats(),
        })
    }

    /// Full record written to the audit directory.
    pub fn audit_record(&self) -> Json {
        let mut record = self.snapshot();
        record["examples"] = self
            .examples
            .iter()
            .map(|e| e.to_json(&self.source, &self.target))
            .collect();
        record
    }
}
