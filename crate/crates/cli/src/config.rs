//! Run settings from flags and an optional TOML file. Flags win; relative
//! paths in the file resolve against the file's directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Args;
use datamig::synth::{Strategy, SynthOptions};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Source schema (JSON).
    #[arg(long, value_name = "FILE")]
    pub source_schema: Option<PathBuf>,
    /// Target schema (JSON).
    #[arg(long, value_name = "FILE")]
    pub target_schema: Option<PathBuf>,
    /// Example file {"input": ..., "output": ...}; repeat for more examples.
    #[arg(long = "example", value_name = "FILE")]
    pub examples: Vec<PathBuf>,
    /// Source instance to migrate or run on.
    #[arg(long, value_name = "FILE")]
    pub instance: Option<PathBuf>,
    /// Where to write the result; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Datalog program file.
    #[arg(long, value_name = "FILE")]
    pub program: Option<PathBuf>,
    #[arg(long, value_name = "mdp|naive")]
    pub strategy: Option<Strategy>,
    /// Allow constants from the example outputs in the program.
    #[arg(long)]
    pub filtering: bool,
    #[arg(long, value_name = "SECONDS")]
    pub timeout: Option<f64>,
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iters: Option<u64>,
    /// Per-iteration statistics as JSON lines.
    #[arg(long, value_name = "FILE")]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    #[default]
    None,
    One(PathBuf),
    Many(Vec<PathBuf>),
}

/// Config file contents; keys match the long flag names.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct FileConfig {
    source_schema: Option<PathBuf>,
    target_schema: Option<PathBuf>,
    #[serde(default)]
    example: OneOrMany,
    instance: Option<PathBuf>,
    out: Option<PathBuf>,
    program: Option<PathBuf>,
    strategy: Option<String>,
    #[serde(default)]
    filtering: bool,
    timeout: Option<f64>,
    max_iters: Option<u64>,
    stats: Option<PathBuf>,
    port: Option<u16>,
    audit_dir: Option<PathBuf>,
}

/// Merged settings for one run.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub source_schema: Option<PathBuf>,
    pub target_schema: Option<PathBuf>,
    pub examples: Vec<PathBuf>,
    pub instance: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub program: Option<PathBuf>,
    pub strategy: Strategy,
    pub filtering: bool,
    pub timeout: Option<Duration>,
    pub max_iters: Option<u64>,
    pub stats: Option<PathBuf>,
    pub port: Option<u16>,
    pub audit_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(flags: Flags, file: Option<&Path>) -> Result<RunConfig> {
        let (cfg, base) = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let cfg: FileConfig =
                    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                (
                    cfg,
                    path.parent().map(Path::to_path_buf).unwrap_or_default(),
                )
            }
            None => (FileConfig::default(), PathBuf::new()),
        };
        let rel = |p: Option<PathBuf>| p.map(|p| base.join(p));
        let file_examples = match cfg.example {
            OneOrMany::None => vec![],
            OneOrMany::One(p) => vec![base.join(p)],
            OneOrMany::Many(ps) => ps.into_iter().map(|p| base.join(p)).collect(),
        };
        let strategy = match (flags.strategy, cfg.strategy) {
            (Some(s), _) => s,
            (None, Some(s)) => s.parse().map_err(anyhow::Error::msg)?,
            (None, None) => Strategy::default(),
        };
        let timeout = match flags.timeout.or(cfg.timeout) {
            Some(t) if t > 0.0 && t.is_finite() => Some(Duration::from_secs_f64(t)),
            Some(t) => bail!("timeout must be a positive number of seconds, got {t}"),
            None => None,
        };
        let max_iters = flags.max_iters.or(cfg.max_iters);
        if max_iters == Some(0) {
            bail!("max-iters must be positive");
        }
        Ok(RunConfig {
            source_schema: flags.source_schema.or(rel(cfg.source_schema)),
            target_schema: flags.target_schema.or(rel(cfg.target_schema)),
            examples: if flags.examples.is_empty() {
                file_examples
            } else {
                flags.examples
            },
            instance: flags.instance.or(rel(cfg.instance)),
            out: flags.out.or(rel(cfg.out)),
            program: flags.program.or(rel(cfg.program)),
            strategy,
            filtering: flags.filtering || cfg.filtering,
            timeout,
            max_iters,
            stats: flags.stats.or(rel(cfg.stats)),
            port: cfg.port,
            audit_dir: rel(cfg.audit_dir),
        })
    }

    pub fn options(&self) -> SynthOptions {
        SynthOptions {
            strategy: self.strategy,
            filtering: self.filtering,
            timeout: self.timeout,
            max_iterations: self.max_iters,
            ..SynthOptions::default()
        }
    }
}
