mod config;

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use datamig::datalog::{evaluate, parse_program, Program};
use datamig::instance::{
    facts_from_rows, facts_to_instance, instance_to_facts, tables, Example, FactBase, Instance,
};
use datamig::schema::Schema;
use datamig::synth::{Interaction, Step, Strategy, SynthError, SynthesisResult, Synthesizer};
use serde_json::{json, Value};

use config::{Flags, RunConfig};

/// Upper bound when counting the programs in each blocked family for stats.
const STATS_COUNT_CAP: u64 = 100_000;

#[derive(Parser)]
#[command(
    name = "datamig",
    version,
    about = "Synthesize and run schema migrations from examples"
)]
struct Cli {
    /// TOML file with defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a program from examples and write its text.
    Synth(Flags),
    /// Migrate an instance with a given or freshly synthesized program.
    Migrate(Flags),
    /// Evaluate a program on an instance.
    Run(Flags),
    /// Print the attribute mapping, sketch, search space, and encoding.
    Inspect {
        #[command(flatten)]
        flags: Flags,
        #[arg(long)]
        psi: bool,
        #[arg(long)]
        sketch: bool,
        #[arg(long)]
        encoding: bool,
    },
    /// Run both strategies and report their iteration counts.
    Compare(Flags),
    /// Synthesize, asking for outputs on inputs where candidates disagree.
    Interactive {
        #[command(flatten)]
        flags: Flags,
        /// Serve sessions over HTTP instead of prompting.
        #[arg(long)]
        serve: bool,
        #[arg(long, value_name = "N")]
        port: Option<u16>,
        /// Write finished service sessions here.
        #[arg(long, value_name = "DIR")]
        audit_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 when synthesis produced no program, 2 for usage and input problems.
fn exit_code(e: &anyhow::Error) -> u8 {
    let synthesis_failed = e.chain().any(|c| {
        matches!(
            c.downcast_ref::<SynthError>(),
            Some(
                SynthError::NoProgram
                    | SynthError::Timeout(_)
                    | SynthError::IterationBudgetExceeded(_)
                    | SynthError::DistinguishBudgetExceeded(_)
                    | SynthError::Sketch(_)
                    | SynthError::Solver(_)
            )
        )
    });
    if synthesis_failed {
        1
    } else {
        2
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = cli.config.as_deref();
    match cli.command {
        Command::Synth(flags) => synth(&RunConfig::load(flags, file)?),
        Command::Migrate(flags) => migrate(&RunConfig::load(flags, file)?),
        Command::Run(flags) => run(&RunConfig::load(flags, file)?),
        Command::Inspect {
            flags,
            psi,
            sketch,
            encoding,
        } => {
            let all = !(psi || sketch || encoding);
            inspect(
                &RunConfig::load(flags, file)?,
                psi || all,
                sketch || all,
                encoding || all,
            )
        }
        Command::Compare(flags) => compare(&RunConfig::load(flags, file)?),
        Command::Interactive {
            flags,
            serve: true,
            port,
            audit_dir,
        } => {
            let cfg = RunConfig::load(flags, file)?;
            serve(
                port.or(cfg.port).unwrap_or(8080),
                audit_dir.or(cfg.audit_dir),
            )
        }
        Command::Interactive { flags, .. } => interactive(&RunConfig::load(flags, file)?),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| anyhow!("--{flag} is required"))
}

fn load_schema(path: &Option<PathBuf>, flag: &str) -> Result<Schema> {
    let path = required(path, flag)?;
    Schema::parse(&read(path)?).with_context(|| format!("schema {}", path.display()))
}

fn schemas(cfg: &RunConfig) -> Result<(Schema, Schema)> {
    Ok((
        load_schema(&cfg.source_schema, "source-schema")?,
        load_schema(&cfg.target_schema, "target-schema")?,
    ))
}

fn load_examples(cfg: &RunConfig, source: &Schema, target: &Schema) -> Result<Vec<Example>> {
    if cfg.examples.is_empty() {
        bail!("--example is required");
    }
    cfg.examples
        .iter()
        .map(|p| {
            Example::parse(source, target, &read(p)?)
                .with_context(|| format!("example {}", p.display()))
        })
        .collect()
}

fn load_instance(cfg: &RunConfig, source: &Schema) -> Result<Instance> {
    let path = required(&cfg.instance, "instance")?;
    Instance::parse(source, &read(path)?).with_context(|| format!("instance {}", path.display()))
}

fn load_program(path: &Path, source: &Schema, target: Option<&Schema>) -> Result<Program> {
    let program =
        parse_program(&read(path)?).with_context(|| format!("program {}", path.display()))?;
    program
        .check_schemas(source, target)
        .with_context(|| format!("program {}", path.display()))?;
    Ok(program)
}

/// Writes to `--out`, or stdout without it.
fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn pretty(json: &Value) -> String {
    let mut text = serde_json::to_string_pretty(json).expect("JSON values serialize");
    text.push('\n');
    text
}

/// Runs synthesis, writing stats lines when asked even if it fails.
fn synthesize(cfg: &RunConfig, source: &Schema, target: &Schema) -> Result<SynthesisResult> {
    let examples = load_examples(cfg, source, target)?;
    let started = Instant::now();
    let mut session = Synthesizer::new(source, target, &examples, &cfg.options())?;
    let outcome = session.run();
    if let Some(path) = &cfg.stats {
        let mut lines = String::new();
        for it in &session.trace {
            lines.push_str(&session.iteration_stats(it, STATS_COUNT_CAP).to_string());
            lines.push('\n');
        }
        let summary = json!({
            "summary": {
                "strategy": cfg.strategy.to_string(),
                "iterations": session.iterations(),
                "blocking_clauses": session.encoding.blocking.len(),
                "search_space": session.sketch.search_space_size().to_string(),
                "program": outcome.as_ref().ok().map(|r| r.program.to_string()),
                "error": outcome.as_ref().err().map(ToString::to_string),
            }
        });
        lines.push_str(&summary.to_string());
        lines.push('\n');
        fs::write(path, lines).with_context(|| format!("writing {}", path.display()))?;
    }
    let result = outcome?;
    eprintln!(
        "{} iterations, {} blocking clauses, {:.1?}",
        result.iterations,
        result.blocking_clauses,
        started.elapsed()
    );
    Ok(result)
}

fn synth(cfg: &RunConfig) -> Result<()> {
    let (source, target) = schemas(cfg)?;
    let result = synthesize(cfg, &source, &target)?;
    emit(&cfg.out, &result.program.to_string())
}

fn migrate_with(
    program: &Program,
    source: &Schema,
    target: &Schema,
    instance: &Instance,
) -> Result<Instance> {
    let facts = instance_to_facts(source, instance)?;
    let derived = evaluate(program, &facts)?;
    facts_to_instance(target, &derived).context("program output is not a target instance")
}

fn migrate(cfg: &RunConfig) -> Result<()> {
    let (source, target) = schemas(cfg)?;
    let instance = load_instance(cfg, &source)?;
    let program = match &cfg.program {
        Some(path) => load_program(path, &source, Some(&target))?,
        None => synthesize(cfg, &source, &target)?.program,
    };
    let migrated = migrate_with(&program, &source, &target, &instance)?;
    emit(&cfg.out, &pretty(&migrated.to_json(&target)))
}

fn run(cfg: &RunConfig) -> Result<()> {
    let source = load_schema(&cfg.source_schema, "source-schema")?;
    let target = match cfg.target_schema {
        Some(_) => Some(load_schema(&cfg.target_schema, "target-schema")?),
        None => None,
    };
    let program = load_program(required(&cfg.program, "program")?, &source, target.as_ref())?;
    let instance = load_instance(cfg, &source)?;
    match target {
        Some(target) => {
            let migrated = migrate_with(&program, &source, &target, &instance)?;
            emit(&cfg.out, &pretty(&migrated.to_json(&target)))
        }
        None => {
            let derived = evaluate(&program, &instance_to_facts(&source, &instance)?)?;
            emit(&cfg.out, &derived.to_string())
        }
    }
}

fn inspect(cfg: &RunConfig, psi: bool, sketch: bool, encoding: bool) -> Result<()> {
    let (source, target) = schemas(cfg)?;
    let examples = load_examples(cfg, &source, &target)?;
    let session = Synthesizer::new(&source, &target, &examples, &cfg.options())?;
    let mut text = String::new();
    if psi {
        text.push_str(&format!("# attribute mapping\n{}\n", session.psi));
    }
    if sketch {
        text.push_str(&format!(
            "# sketch\n{}\n# search space: {}\n\n",
            session.sketch,
            session.sketch.search_space_size()
        ));
    }
    if encoding {
        text.push_str(&format!("# encoding\n{}", session.encoding));
    }
    emit(&cfg.out, &text)
}

fn compare(cfg: &RunConfig) -> Result<()> {
    let (source, target) = schemas(cfg)?;
    let examples = load_examples(cfg, &source, &target)?;
    let mut lines = String::new();
    for strategy in [Strategy::Mdp, Strategy::Naive] {
        let options = datamig::synth::SynthOptions {
            strategy,
            ..cfg.options()
        };
        let mut session = Synthesizer::new(&source, &target, &examples, &options)?;
        let started = Instant::now();
        let outcome = session.run();
        eprintln!("{strategy}: {:.1?}", started.elapsed());
        let line = json!({
            "strategy": strategy.to_string(),
            "iterations": session.iterations(),
            "blocking_clauses": session.encoding.blocking.len(),
            "program": outcome.as_ref().ok().map(|r| r.program.to_string()),
            "error": outcome.as_ref().err().map(ToString::to_string),
        });
        lines.push_str(&line.to_string());
        lines.push('\n');
        outcome?;
    }
    emit(&cfg.out, &lines)
}

/// Reads one answer: lines up to the first blank line after some text.
fn read_answer(input: &mut impl BufRead) -> Result<Option<String>> {
    let mut text = String::new();
    loop {
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            return Ok((!text.trim().is_empty()).then_some(text));
        }
        if line.trim().is_empty() {
            if !text.trim().is_empty() {
                return Ok(Some(text));
            }
            continue;
        }
        text.push_str(&line);
    }
}

/// Accepts a target instance or per-relation rows.
fn parse_answer(target: &Schema, text: &str) -> Result<Value> {
    let json: Value = serde_json::from_str(text).context("answer is not valid JSON")?;
    match Instance::from_json(target, &json) {
        Ok(inst) => Ok(inst.to_json(target)),
        Err(as_instance) => {
            let facts: FactBase = facts_from_rows(target, &json).map_err(|_| as_instance)?;
            Ok(facts_to_instance(target, &facts)?.to_json(target))
        }
    }
}

fn interactive(cfg: &RunConfig) -> Result<()> {
    let (source, target) = schemas(cfg)?;
    let examples = load_examples(cfg, &source, &target)?;
    let (mut session, mut step) = Interaction::start(&source, &target, &examples, &cfg.options())?;
    let stdin = io::stdin();
    let mut input = stdin.lock();
    loop {
        let query = match step {
            Step::Done(result) => {
                eprintln!("{} example(s) used", session.examples().len());
                return emit(&cfg.out, &result.program.to_string());
            }
            Step::Ask(query) => query,
        };
        let mut prompt = String::from("Two programs fit the examples so far:\n");
        for (i, p) in query.candidates.iter().enumerate() {
            prompt.push_str(&format!("  ({}) {}", i + 1, p));
        }
        prompt.push_str("They disagree on this input:\n");
        for table in tables(&source, &instance_to_facts(&source, &query.input)?) {
            prompt.push_str(&table.to_string());
        }
        prompt.push_str("Enter the expected output as JSON (an instance or {\"Relation\": [[...], ...]}), then an empty line:\n");
        eprint!("{prompt}");
        step = loop {
            let Some(text) = read_answer(&mut input)? else {
                bail!("input ended before the question was answered");
            };
            match parse_answer(&target, &text) {
                Ok(answer) => break session.answer(&answer)?,
                Err(e) => eprintln!("rejected: {e:#}\ntry again:"),
            }
        };
    }
}

fn serve(port: u16, audit_dir: Option<PathBuf>) -> Result<()> {
    let config = datamig_service::ServiceConfig {
        audit_dir,
        ..Default::default()
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(datamig_service::serve(port, config))?;
    Ok(())
}
