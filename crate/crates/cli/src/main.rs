//! `mas`: score pronoun candidates from exported attention dumps.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 evaluation
//! finished but some instances could not be scored.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mas_core::{
    dataset, eval, AggregationMode, EvalConfig, Execution, OccurrencePolicy, ReportFormat,
    SchemaInstance, Source, TiePolicy,
};

#[derive(Parser, Debug)]
#[command(
    name = "mas",
    version,
    about = "Maximum attention score pronoun resolution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score one instance against a dump and print the result as JSON.
    Score(ScoreArgs),
    /// Score a whole dataset and write an accuracy report.
    Evaluate(EvaluateArgs),
    /// Render the per-candidate attention grids of one instance as SVG.
    Visualize(VisualizeArgs),
    /// Check a dump directory for shape and row-sum problems.
    ValidateDump(ValidateArgs),
    /// Write a seeded synthetic dump with a planted winner.
    Synth(SynthArgs),
    /// Convert a dataset to canonical JSONL.
    Convert(ConvertArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AggArg {
    Sum,
    Max,
    Mean,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TieArg {
    NoneWins,
    AllWin,
    LowestIndex,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OccurrenceArg {
    First,
    Last,
    NearestBefore,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DatasetFormat {
    WscXml,
    Jsonl,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum XmlFormat {
    WscXml,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceArg {
    Wsc273,
    Pdp60,
    Custom,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReportFormatArg {
    Json,
    Csv,
    Text,
}

#[derive(Args, Debug)]
struct ScoringArgs {
    /// Aggregation over multi-token candidates.
    #[arg(long, value_enum, default_value = "sum")]
    agg: AggArg,
    /// Mask assignment on tied cells.
    #[arg(long, value_enum, default_value = "none-wins")]
    tie: TieArg,
    /// Which occurrence of a repeated candidate to use.
    #[arg(long, value_enum, default_value = "nearest-before")]
    occurrence: OccurrenceArg,
}

impl ScoringArgs {
    fn agg(&self) -> AggregationMode {
        match self.agg {
            AggArg::Sum => AggregationMode::Sum,
            AggArg::Max => AggregationMode::Max,
            AggArg::Mean => AggregationMode::Mean,
        }
    }

    fn tie(&self) -> TiePolicy {
        match self.tie {
            TieArg::NoneWins => TiePolicy::NoneWins,
            TieArg::AllWin => TiePolicy::AllWin,
            TieArg::LowestIndex => TiePolicy::LowestIndexWins,
        }
    }

    fn occurrence(&self) -> OccurrencePolicy {
        match self.occurrence {
            OccurrenceArg::First => OccurrencePolicy::First,
            OccurrenceArg::Last => OccurrencePolicy::Last,
            OccurrenceArg::NearestBefore => OccurrencePolicy::NearestBeforePronoun,
        }
    }
}

#[derive(Args, Debug)]
struct InstanceArgs {
    /// Dump directory (manifest.json + attention.f32).
    #[arg(long)]
    dump: PathBuf,
    #[arg(long)]
    sentence: String,
    /// Character offset of the pronoun in the sentence.
    #[arg(long)]
    pronoun_start: usize,
    #[arg(long)]
    pronoun: String,
    /// Comma-separated candidate antecedents.
    #[arg(long)]
    candidates: String,
    #[command(flatten)]
    scoring: ScoringArgs,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[command(flatten)]
    instance: InstanceArgs,
}

#[derive(Args, Debug)]
struct VisualizeArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Output SVG file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    format: DatasetFormat,
    /// Directory holding one dump directory per instance id.
    #[arg(long)]
    dumps: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    report_format: ReportFormatArg,
    /// Worker count; output is identical for every value.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Benchmark tag for XML input (ids and comparison table).
    #[arg(long, value_enum, default_value = "wsc273")]
    source: SourceArg,
    #[command(flatten)]
    scoring: ScoringArgs,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    dump: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Whitespace-separated tokens, boundary tokens included.
    #[arg(long)]
    tokens: String,
    #[arg(long)]
    layers: usize,
    #[arg(long)]
    heads: usize,
    /// Index of the reference (pronoun) token.
    #[arg(long)]
    reference: usize,
    /// Index of the token that receives the boosted attention.
    #[arg(long)]
    winner: usize,
    #[arg(long)]
    boost: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: XmlFormat,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "wsc273")]
    source: SourceArg,
}

fn source_of(arg: SourceArg) -> Source {
    match arg {
        SourceArg::Wsc273 => Source::Wsc273,
        SourceArg::Pdp60 => Source::Pdp60,
        SourceArg::Custom => Source::Custom,
    }
}

fn require_exists(path: &Path) -> anyhow::Result<()> {
    if !path.exists() {
        bail!("{} does not exist", path.display());
    }
    Ok(())
}

fn require_parent(path: &Path) -> anyhow::Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => {
            bail!("output directory {} does not exist", p.display())
        }
        _ => Ok(()),
    }
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn score_one(args: &InstanceArgs) -> anyhow::Result<(mas_core::MasResult, Vec<String>)> {
    require_exists(&args.dump)?;
    let dump = mas_core::read_dump(&args.dump)
        .with_context(|| format!("reading dump {}", args.dump.display()))?;
    let candidates: Vec<String> = args
        .candidates
        .split(',')
        .map(|c| c.trim().to_string())
        .filter(|c| !c.is_empty())
        .collect();
    let id = if dump.example_id.is_empty() {
        "custom-001".to_string()
    } else {
        dump.example_id.clone()
    };
    let instance = SchemaInstance::new(
        id,
        args.sentence.clone(),
        &args.pronoun,
        args.pronoun_start,
        candidates,
        None,
    )?;
    let s = &args.scoring;
    let result = eval::resolve_instance(&instance, &dump, s.agg(), s.tie(), s.occurrence())
        .map_err(|e| anyhow!(e))?;
    Ok((result, dump.tokens))
}

fn load_dataset(
    path: &Path,
    format: DatasetFormat,
    source: Source,
) -> anyhow::Result<Vec<SchemaInstance>> {
    let bytes = read(path)?;
    let parsed = match format {
        DatasetFormat::WscXml => dataset::parse_schema_xml(&bytes, source),
        DatasetFormat::Jsonl => dataset::parse_jsonl(&bytes),
    };
    parsed.with_context(|| format!("parsing {}", path.display()))
}

enum Outcome {
    Done,
    Partial,
}

fn dispatch(command: Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Score(args) => {
            let (result, _) = score_one(&args.instance)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Visualize(args) => {
            require_parent(&args.out)?;
            let (result, tokens) = score_one(&args.instance)?;
            write(&args.out, &mas_core::render_heatmap(&result, &tokens))?;
        }
        Command::Evaluate(args) => {
            require_exists(&args.dataset)?;
            require_exists(&args.dumps)?;
            require_parent(&args.report)?;
            let instances = load_dataset(&args.dataset, args.format, source_of(args.source))?;
            let config = EvalConfig {
                agg: args.scoring.agg(),
                tie: args.scoring.tie(),
                occurrence: args.scoring.occurrence(),
                execution: Execution::from_jobs(args.jobs),
            };
            let report = mas_core::evaluate(&instances, &args.dumps, &config)?;
            let format = match args.report_format {
                ReportFormatArg::Json => ReportFormat::Json,
                ReportFormatArg::Csv => ReportFormat::Csv,
                ReportFormatArg::Text => ReportFormat::Text,
            };
            write(&args.report, &mas_core::render_report(&report, format))?;
            println!(
                "accuracy: {:.2}% ({}/{}), {} failed",
                report.accuracy * 100.0,
                report.correct_count,
                report.total,
                report.total - report.scored
            );
            if report.scored < report.total {
                return Ok(Outcome::Partial);
            }
        }
        Command::ValidateDump(args) => {
            require_exists(&args.dump)?;
            let dump = mas_core::read_dump(&args.dump)
                .with_context(|| format!("reading dump {}", args.dump.display()))?;
            let report = mas_core::validate(&dump);
            for finding in &report.findings {
                println!("{}", serde_json::to_string(finding)?);
            }
            if !report.is_valid() {
                bail!(
                    "{} finding(s) in {}",
                    report.findings.len(),
                    args.dump.display()
                );
            }
            println!("ok: {}", args.dump.display());
        }
        Command::Synth(args) => {
            let tokens: Vec<String> = args.tokens.split_whitespace().map(str::to_string).collect();
            let mut dump = mas_core::synth_dump(
                &tokens,
                args.layers,
                args.heads,
                args.reference,
                args.winner,
                args.boost,
                args.seed,
            )?;
            if let Some(name) = args.out.file_name() {
                dump.example_id = name.to_string_lossy().into_owned();
            }
            mas_core::write_dump(&dump, &args.out)?;
        }
        Command::Convert(args) => {
            require_exists(&args.input)?;
            require_parent(&args.out)?;
            let instances = match args.format {
                XmlFormat::WscXml => {
                    load_dataset(&args.input, DatasetFormat::WscXml, source_of(args.source))?
                }
            };
            write(&args.out, &mas_core::convert(&instances))?;
        }
    }
    Ok(Outcome::Done)
}

fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(Outcome::Done) => 0,
        Ok(Outcome::Partial) => 3,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}
