//! Command-line interface: build, expand, eval, sweep and gen-synth.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{mention_stream, parse_corpus, EntityId};
use crate::error::Error;
use crate::evaluation::{run_benchmark, BenchmarkReport, GroundTruth, Query, DEFAULT_KS};
use crate::expansion::{expand, Config, ExpansionState};
use crate::graph::{build_graph, DEFAULT_MIN_COUNT};
use crate::index_io::{load_index, save_index};
use crate::synth::{generate, SynthParams};

/// Environment variable naming a JSON config file with default model parameters.
pub const CONFIG_ENV: &str = "SETEXPAN_CONFIG";

#[derive(Debug, Parser)]
#[command(
    name = "setexpan",
    version,
    about = "Corpus-based entity set expansion"
)]
pub struct Cli {
    /// JSON file with default model parameters; flags override it.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an annotated corpus and write the entity-context index.
    Build(BuildArgs),
    /// Expand a seed set.
    Expand(ExpandArgs),
    /// Expand every query and score against ground truth.
    Eval(EvalArgs),
    /// Re-run the evaluation for each value of one model parameter.
    Sweep(SweepArgs),
    /// Write a synthetic corpus with planted classes, plus queries and truth.
    GenSynth(GenSynthArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    pub corpus: PathBuf,
    pub index: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
    pub min_count: u64,
}

/// Model parameter overrides shared by expand, eval and sweep.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Target size of the expanded set, seeds included.
    #[arg(short = 'K', long = "target-size")]
    pub target_size: Option<usize>,
    /// Context features selected per iteration.
    #[arg(short = 'Q', long = "context-features")]
    pub context_features: Option<usize>,
    /// Number of sampled feature subsets in the rank ensemble.
    #[arg(short = 'T', long = "ensemble-size")]
    pub ensemble_size: Option<usize>,
    /// Relative size of each sampled feature subset, in (0, 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Average-rank threshold; entities need mrr >= T / r.
    #[arg(short = 'r', long = "rank-threshold")]
    pub rank_threshold: Option<f64>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Do not filter candidates by coarse type.
    #[arg(long)]
    pub no_type_filter: bool,
    /// Truncate ranked lists: a positive number or "all".
    #[arg(long, value_parser = parse_cutoff)]
    pub list_cutoff: Option<Cutoff>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cutoff(pub Option<usize>);

fn parse_cutoff(s: &str) -> std::result::Result<Cutoff, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Cutoff(None));
    }
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(Cutoff(Some(n))),
        _ => Err(format!("expected a positive integer or \"all\", got `{s}`")),
    }
}

impl ModelArgs {
    pub fn apply(&self, base: &Config) -> Config {
        let mut c = base.clone();
        if let Some(v) = self.target_size {
            c.target_size = v;
        }
        if let Some(v) = self.context_features {
            c.context_features = v;
        }
        if let Some(v) = self.ensemble_size {
            c.ensemble_size = v;
        }
        if let Some(v) = self.alpha {
            c.subset_fraction = v;
        }
        if let Some(v) = self.rank_threshold {
            c.rank_threshold = v;
        }
        if let Some(v) = self.rng_seed {
            c.rng_seed = v;
        }
        if let Some(v) = self.max_iterations {
            c.max_iterations = v;
        }
        if self.no_type_filter {
            c.type_filter = false;
        }
        if let Some(Cutoff(v)) = self.list_cutoff {
            c.list_cutoff = v;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Tsv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    pub index: PathBuf,
    /// Seed entity surface form (repeatable).
    #[arg(long = "seed", required = true)]
    pub seeds: Vec<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = OutputFormat::Tsv)]
    pub output: OutputFormat,
    /// Include per-iteration provenance in JSON output.
    #[arg(long)]
    pub history: bool,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub index: PathBuf,
    pub queries: PathBuf,
    pub truth: PathBuf,
    /// Cutoffs for AP/MAP/MMAP.
    #[arg(long = "k", value_delimiter = ',', default_values_t = DEFAULT_KS)]
    pub ks: Vec<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum SweepParam {
    #[value(name = "Q")]
    Q,
    #[value(name = "T")]
    T,
    #[value(name = "alpha")]
    Alpha,
    #[value(name = "r")]
    R,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub index: PathBuf,
    pub queries: PathBuf,
    pub truth: PathBuf,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long = "k", value_delimiter = ',', default_values_t = DEFAULT_KS)]
    pub ks: Vec<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    /// Output directory for corpus.jsonl, queries.json and truth.json.
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 30)]
    pub entities_per_class: usize,
    /// Cross-class contamination probability per mention.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
    #[arg(long, default_value_t = 5)]
    pub queries_per_class: usize,
    #[arg(long, default_value_t = 3)]
    pub seeds_per_query: usize,
}

/// Provenance embedded in every expansion and evaluation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Config,
    /// Input name to sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub started_at: u64,
    pub finished_at: u64,
    pub status: Option<String>,
}

impl RunManifest {
    fn start(command: &str, config: &Config, inputs: &[(&str, &Path)]) -> Result<Self> {
        let mut digests = BTreeMap::new();
        for (name, path) in inputs {
            digests.insert(name.to_string(), file_digest(path)?);
        }
        Ok(RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            inputs: digests,
            started_at: unix_now(),
            finished_at: 0,
            status: None,
        })
    }

    fn finish(mut self, status: Option<String>) -> Self {
        self.finished_at = unix_now();
        self.status = status;
        self
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn load_base_config(path: Option<&Path>) -> Result<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_output(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => out.write_all(text.as_bytes()).map_err(Into::into),
    }
}

/// Runs a parsed command line, writing results to `out` and progress to stderr.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let base = load_base_config(cli.config.as_deref())?;
    match cli.command {
        Command::Build(args) => cmd_build(&args, out),
        Command::Expand(args) => cmd_expand(&args, &base, out),
        Command::Eval(args) => cmd_eval(&args, &base, out),
        Command::Sweep(args) => cmd_sweep(&args, &base, out),
        Command::GenSynth(args) => cmd_gen_synth(&args, out),
    }
}

pub fn cmd_build(args: &BuildArgs, out: &mut dyn Write) -> Result<()> {
    let file = fs::File::open(&args.corpus)
        .with_context(|| format!("opening corpus {}", args.corpus.display()))?;
    let mut reader = parse_corpus(BufReader::new(file));
    let mut records = Vec::new();
    let mut first_errors = Vec::new();
    for item in mention_stream(reader.by_ref()) {
        match item {
            Ok(r) => records.push(r),
            Err(Error::MalformedLine { line, message }) => {
                if first_errors.len() < 5 {
                    first_errors.push(format!("line {line}: {message}"));
                }
            }
            Err(e) => return Err(e).context("reading corpus"),
        }
    }
    let malformed = reader.malformed_lines();
    if malformed > 0 {
        eprintln!("warning: skipped {malformed} malformed line(s)");
        for e in &first_errors {
            eprintln!("  {e}");
        }
    }
    let graph = build_graph(records, args.min_count)?;
    save_index(&graph, &args.index)
        .with_context(|| format!("writing index {}", args.index.display()))?;
    writeln!(out, "entities\t{}", graph.num_entities())?;
    writeln!(out, "features\t{}", graph.num_features())?;
    writeln!(out, "edges\t{}", graph.num_edges())?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExpandedEntity {
    pub entity: String,
    pub rank: usize,
    pub iteration: usize,
    pub mrr: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExpandOutput {
    pub manifest: RunManifest,
    pub seeds: Vec<String>,
    pub status: String,
    pub iterations: usize,
    pub entities: Vec<ExpandedEntity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<crate::expansion::IterationRecord>>,
}

pub fn cmd_expand(args: &ExpandArgs, base: &Config, out: &mut dyn Write) -> Result<()> {
    let config = args.model.apply(base);
    config.validate()?;
    let manifest = RunManifest::start("expand", &config, &[("index", &args.index)])?;
    let graph = load_index(&args.index)
        .with_context(|| format!("loading index {}", args.index.display()))?;
    let seeds = args
        .seeds
        .iter()
        .map(|s| EntityId::new(s))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let state = expand(&graph, &seeds, &config)?;
    let manifest = manifest.finish(Some(state.status.to_string()));
    let text = render_expansion(&state, manifest, args.output, args.history)?;
    write_output(out, args.out.as_deref(), &text)
}

fn render_expansion(
    state: &ExpansionState,
    manifest: RunManifest,
    format: OutputFormat,
    with_history: bool,
) -> Result<String> {
    let entities: Vec<ExpandedEntity> = state
        .accepted()
        .enumerate()
        .map(|(i, (e, iteration, mrr))| ExpandedEntity {
            entity: e.to_string(),
            rank: i + 1,
            iteration,
            mrr,
        })
        .collect();
    Ok(match format {
        OutputFormat::Json => {
            let output = ExpandOutput {
                manifest,
                seeds: state.seeds().iter().map(ToString::to_string).collect(),
                status: state.status.to_string(),
                iterations: state.iteration,
                entities,
                history: with_history.then(|| state.history.clone()),
            };
            serde_json::to_string_pretty(&output)? + "\n"
        }
        OutputFormat::Tsv => {
            let mut s = format!("# manifest: {}\n", serde_json::to_string(&manifest)?);
            s.push_str("entity\trank\titeration\tmrr\n");
            for e in &entities {
                s.push_str(&format!(
                    "{}\t{}\t{}\t{:.6}\n",
                    e.entity, e.rank, e.iteration, e.mrr
                ));
            }
            s
        }
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalOutput {
    pub manifest: RunManifest,
    pub report: BenchmarkReport,
}

fn evaluate(
    command: &str,
    index: &Path,
    queries_path: &Path,
    truth_path: &Path,
    config: &Config,
    ks: &[usize],
) -> Result<EvalOutput> {
    config.validate()?;
    let manifest = RunManifest::start(
        command,
        config,
        &[
            ("index", index),
            ("queries", queries_path),
            ("truth", truth_path),
        ],
    )?;
    let graph = load_index(index).with_context(|| format!("loading index {}", index.display()))?;
    let queries: Vec<Query> = read_json(queries_path)?;
    let truths: Vec<GroundTruth> = read_json(truth_path)?;
    let report = run_benchmark(&graph, &queries, &truths, config, ks)?;
    for q in report.failed_queries() {
        eprintln!(
            "warning: query {} ({}) failed: {}",
            q.index,
            q.class,
            q.error.as_deref().unwrap_or_default()
        );
    }
    Ok(EvalOutput {
        manifest: manifest.finish(None),
        report,
    })
}

pub fn cmd_eval(args: &EvalArgs, base: &Config, out: &mut dyn Write) -> Result<()> {
    let config = args.model.apply(base);
    let result = evaluate(
        "eval",
        &args.index,
        &args.queries,
        &args.truth,
        &config,
        &args.ks,
    )?;
    let json = serde_json::to_string_pretty(&result)? + "\n";
    if let Some(path) = &args.report {
        fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
    }
    match args.format {
        ReportFormat::Json => out.write_all(json.as_bytes())?,
        ReportFormat::Table => out.write_all(result.report.to_table().as_bytes())?,
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub mmap: BTreeMap<usize, f64>,
    pub failed_queries: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepOutput {
    pub manifest: RunManifest,
    pub param: SweepParam,
    pub ks: Vec<usize>,
    pub rows: Vec<SweepRow>,
}

fn with_param(config: &Config, param: SweepParam, value: f64) -> Result<Config> {
    let as_count = |v: f64| -> Result<usize> {
        if v.fract() != 0.0 || v < 1.0 {
            bail!("{param:?} takes positive integers, got {v}");
        }
        Ok(v as usize)
    };
    let mut c = config.clone();
    match param {
        SweepParam::Q => c.context_features = as_count(value)?,
        SweepParam::T => c.ensemble_size = as_count(value)?,
        SweepParam::Alpha => c.subset_fraction = value,
        SweepParam::R => c.rank_threshold = value,
    }
    c.validate()?;
    Ok(c)
}

pub fn cmd_sweep(args: &SweepArgs, base: &Config, out: &mut dyn Write) -> Result<()> {
    let config = args.model.apply(base);
    let configs = args
        .values
        .iter()
        .map(|&v| with_param(&config, args.param, v))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest::start(
        "sweep",
        &config,
        &[
            ("index", &args.index),
            ("queries", &args.queries),
            ("truth", &args.truth),
        ],
    )?;
    let mut rows = Vec::new();
    for (&value, c) in args.values.iter().zip(&configs) {
        let result = evaluate(
            "sweep",
            &args.index,
            &args.queries,
            &args.truth,
            c,
            &args.ks,
        )?;
        rows.push(SweepRow {
            value,
            mmap: result.report.mmap,
            failed_queries: result.report.queries.iter().filter(|q| q.failed()).count(),
        });
    }
    let output = SweepOutput {
        manifest: manifest.finish(None),
        param: args.param,
        ks: args.ks.clone(),
        rows,
    };
    match args.format {
        ReportFormat::Json => {
            out.write_all((serde_json::to_string_pretty(&output)? + "\n").as_bytes())?
        }
        ReportFormat::Table => {
            let name = match args.param {
                SweepParam::Q => "Q",
                SweepParam::T => "T",
                SweepParam::Alpha => "alpha",
                SweepParam::R => "r",
            };
            write!(out, "{name:>8}")?;
            for k in &output.ks {
                write!(out, "  {:>8}", format!("MMAP@{k}"))?;
            }
            writeln!(out)?;
            for row in &output.rows {
                write!(out, "{:>8}", row.value)?;
                for k in &output.ks {
                    write!(
                        out,
                        "  {:>8.4}",
                        row.mmap.get(k).copied().unwrap_or(f64::NAN)
                    )?;
                }
                writeln!(out)?;
            }
        }
    }
    Ok(())
}

pub fn cmd_gen_synth(args: &GenSynthArgs, out: &mut dyn Write) -> Result<()> {
    let params = SynthParams {
        classes: args.classes,
        entities_per_class: args.entities_per_class,
        noise: args.noise,
        rng_seed: args.rng_seed,
        queries_per_class: args.queries_per_class,
        seeds_per_query: args.seeds_per_query,
        ..SynthParams::default()
    };
    let corpus = generate(&params)?;
    let audit = corpus.audit()?;
    let paths = corpus.write_to(&args.out_dir)?;
    for p in &paths {
        writeln!(out, "wrote\t{}", p.display())?;
    }
    writeln!(out, "sentences\t{}", audit.sentences)?;
    writeln!(out, "entities\t{}", audit.entities)?;
    writeln!(out, "cross_class_mentions\t{}", audit.cross_class_mentions)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_parsing() {
        assert_eq!(parse_cutoff("all").unwrap(), Cutoff(None));
        assert_eq!(parse_cutoff("25").unwrap(), Cutoff(Some(25)));
        assert!(parse_cutoff("0").is_err());
        assert!(parse_cutoff("x").is_err());
    }

    #[test]
    fn flags_override_base_config() {
        let args = ModelArgs {
            ensemble_size: Some(7),
            alpha: Some(0.5),
            no_type_filter: true,
            ..ModelArgs::default()
        };
        let c = args.apply(&Config::default());
        assert_eq!(c.ensemble_size, 7);
        assert_eq!(c.subset_fraction, 0.5);
        assert!(!c.type_filter);
        assert_eq!(c.context_features, Config::default().context_features);
    }

    #[test]
    fn sweep_params_need_integers_for_counts() {
        assert!(with_param(&Config::default(), SweepParam::T, 2.5).is_err());
        assert_eq!(
            with_param(&Config::default(), SweepParam::Q, 20.0)
                .unwrap()
                .context_features,
            20
        );
        assert!(with_param(&Config::default(), SweepParam::Alpha, 1.2).is_err());
    }

    #[test]
    fn cli_parses_repeated_seeds_and_short_flags() {
        let cli = Cli::try_parse_from([
            "setexpan", "expand", "idx.bin", "--seed", "Texas", "--seed", "Ohio", "-K", "10", "-T",
            "3", "-r", "2.5", "--output", "json",
        ])
        .unwrap();
        let Command::Expand(args) = cli.command else {
            panic!()
        };
        assert_eq!(args.seeds, vec!["Texas", "Ohio"]);
        assert_eq!(args.model.target_size, Some(10));
        assert_eq!(args.model.rank_threshold, Some(2.5));
        assert_eq!(args.output, OutputFormat::Json);
        assert!(Cli::try_parse_from([
            "setexpan", "sweep", "i", "q", "t", "--param", "zeta", "--values", "1"
        ])
        .is_err());
    }
}
