//! Operator commands. Each is a thin wrapper over a library operation.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use milrw_core::analytics::{build_report, read_surveys, read_votes, render_text, ReportOptions, RougeNormalization};
use milrw_core::corpus::{
    adapters, build_corpus, read_annotated, read_pairs, sample_corpus, write_corpus, AnnotatedInput, CorpusBuild,
    CorpusOptions, RecordError, SplitRatios,
};
use milrw_core::feedback::{extract_pairs, mix_with_original, unmixed, ExtractOptions, FeedbackDataset};
use milrw_core::generation::{GenerationBackend, HttpBackend, Lexicon, StubBackend};
use milrw_core::session::{parse_events, replay_events, Snapshot};

use crate::config::ServiceConfig;

#[derive(Parser, Debug)]
#[command(name = "milrw", version, about = "Span rewriting workbench: study server and data tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a pseudo-parallel corpus from annotated sentences.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Run the study server.
    Serve(ServeArgs),
    /// Turn an interaction log into fine-tuning pairs.
    #[command(subcommand)]
    Feedback(FeedbackCommand),
    /// Compute the metrics report from a log.
    Report(ReportArgs),
    /// Check that a log replays cleanly and matches a stored snapshot.
    ReplayValidate(ValidateArgs),
}

#[derive(Subcommand, Debug)]
pub enum CorpusCommand {
    Build(CorpusBuildArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    /// JSONL records with `text` and char-offset `spans`.
    Annotated,
    /// One sentence per line, creative spans wrapped in `**`.
    Emphasis,
    /// Sentence, then tab-separated creative phrases.
    PhraseTsv,
}

#[derive(Args, Debug)]
pub struct CorpusBuildArgs {
    /// Input files; the bundled 50-sentence sample when none are given.
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "annotated")]
    pub format: InputFormat,
    /// Device label recorded for line-based formats.
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Infilling endpoint; the stub infiller when absent.
    #[arg(long)]
    pub infiller_url: Option<String>,
    #[arg(long, default_value_t = 30_000)]
    pub infiller_timeout_ms: u64,
    /// Lexicon for the stub infiller.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub no_drift_filter: bool,
    /// Split proportions as TRAIN:VALID:TEST.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, env = "MILRW_CONFIG")]
    pub config: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum FeedbackCommand {
    Export(FeedbackExportArgs),
}

#[derive(Args, Debug)]
pub struct FeedbackExportArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Training pairs to mix in; without it only feedback pairs are written.
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub siblings_as_rejects: bool,
    #[arg(long)]
    pub reject_all_shown: bool,
    #[arg(long)]
    pub include_closed: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum RougeArg {
    Suggestion,
    Caption,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub surveys: Option<PathBuf>,
    #[arg(long)]
    pub votes: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ReportFormat,
    /// Which length normalizes Rouge-L.
    #[arg(long, value_enum, default_value = "suggestion")]
    pub rouge: RougeArg,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
}

fn parse_split(s: &str) -> anyhow::Result<SplitRatios> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad split {s:?}"))?;
    let [train, valid, test] = parts[..] else { bail!("split needs three parts, got {s:?}") };
    Ok(SplitRatios { train, valid, test })
}

fn read_lines_input(path: &Path, format: InputFormat, label: Option<&str>) -> anyhow::Result<AnnotatedInput> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let name = path.display().to_string();
    let source_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| name.clone());
    let mut input = AnnotatedInput { name: name.clone(), ..Default::default() };
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = match format {
            InputFormat::Emphasis => adapters::from_inline_emphasis(&line, &source_id, label),
            _ => adapters::from_phrase_tsv(&line, &source_id, label),
        };
        match rec {
            Ok(r) => input.records.push((i + 1, r)),
            Err(e) => input.errors.push(RecordError { input: name.clone(), line: i + 1, reason: e.to_string() }),
        }
    }
    Ok(input)
}

pub fn corpus_build(args: &CorpusBuildArgs) -> anyhow::Result<CorpusBuild> {
    let inputs = if args.inputs.is_empty() {
        vec![sample_corpus()]
    } else {
        args.inputs
            .iter()
            .map(|p| match args.format {
                InputFormat::Annotated => Ok(read_annotated(p)?),
                f => read_lines_input(p, f, args.label.as_deref()),
            })
            .collect::<anyhow::Result<Vec<_>>>()?
    };
    let infiller: Box<dyn GenerationBackend> = match (&args.infiller_url, &args.lexicon) {
        (Some(url), _) => Box::new(HttpBackend::new("infiller", url, Duration::from_millis(args.infiller_timeout_ms))),
        (None, Some(lex)) => Box::new(StubBackend::with_lexicon("stub-infiller", 0, Arc::new(Lexicon::load(lex)?))),
        (None, None) => Box::new(StubBackend::new("stub-infiller", 0)),
    };
    let mut opts = CorpusOptions { seed: args.seed, ..Default::default() };
    opts.drift_filter.enabled = !args.no_drift_filter;
    if let Some(s) = &args.split {
        opts.split_ratios = parse_split(s)?;
    }
    let build = build_corpus(&inputs, infiller.as_ref(), &opts)?;
    write_corpus(&build, &args.out)?;
    Ok(build)
}

pub fn feedback_export(args: &FeedbackExportArgs) -> anyhow::Result<FeedbackDataset> {
    let log = std::fs::read_to_string(&args.log).with_context(|| format!("reading {}", args.log.display()))?;
    let opts = ExtractOptions {
        siblings_as_rejects: args.siblings_as_rejects,
        reject_all_shown: args.reject_all_shown,
        include_closed: args.include_closed,
    };
    let ex = extract_pairs(&log, &opts)?;
    let ds = match &args.base {
        Some(base) => mix_with_original(ex, &read_pairs(base)?, args.ratio, args.seed, opts)?,
        None => unmixed(ex, args.seed, opts),
    };
    ds.write(&args.out)?;
    Ok(ds)
}

/// The rendered report, JSON or text.
pub fn report(args: &ReportArgs) -> anyhow::Result<String> {
    let log = std::fs::read_to_string(&args.log).with_context(|| format!("reading {}", args.log.display()))?;
    let surveys = match &args.surveys {
        Some(p) => read_surveys(p)?,
        None => BTreeMap::new(),
    };
    let votes = match &args.votes {
        Some(p) => read_votes(p)?,
        None => Vec::new(),
    };
    let rouge = match args.rouge {
        RougeArg::Suggestion => RougeNormalization::Suggestion,
        RougeArg::Caption => RougeNormalization::Caption,
    };
    let r = build_report(&log, &surveys, &votes, &ReportOptions { rouge, ..Default::default() })?;
    Ok(match args.format {
        ReportFormat::Json => r.to_canonical_json(),
        ReportFormat::Text => render_text(&r),
    })
}

#[derive(Debug)]
pub struct ValidateSummary {
    pub events: usize,
    pub sessions: usize,
}

/// Replay the log, then compare against the snapshot if one is given.
pub fn replay_validate(args: &ValidateArgs) -> anyhow::Result<ValidateSummary> {
    let log = std::fs::read_to_string(&args.log).with_context(|| format!("reading {}", args.log.display()))?;
    let events = parse_events(&log)?;
    let sessions = replay_events(&events)?;
    if let Some(path) = &args.snapshot {
        let snap = Snapshot::read(path).with_context(|| format!("reading {}", path.display()))?;
        snap.check(&log).map_err(|e| anyhow::anyhow!("snapshot mismatch: {e}"))?;
    }
    Ok(ValidateSummary { events: events.len(), sessions: sessions.len() })
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Corpus(CorpusCommand::Build(args)) => {
            let b = corpus_build(&args)?;
            let m = &b.manifest;
            println!(
                "{} sentences, {} pairs generated, {} kept, {} dropped (train {} / valid {} / test {}) -> {}",
                m.sentences_processed,
                m.pairs_generated,
                m.pairs_kept,
                m.pairs_dropped,
                m.counts.train,
                m.counts.valid,
                m.counts.test,
                args.out.display()
            );
            if m.records_failed > 0 {
                eprintln!("{} input records failed; see manifest.json", m.records_failed);
            }
        }
        Command::Serve(args) => {
            let cfg = ServiceConfig::load(&args.config)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::server::serve(cfg))?;
        }
        Command::Feedback(FeedbackCommand::Export(args)) => {
            let ds = feedback_export(&args)?;
            let m = &ds.manifest;
            println!(
                "{} feedback pairs ({} accept, {} reject) + {} original = {} -> {}",
                m.feedback_pairs,
                m.accept_pairs,
                m.reject_pairs,
                m.mixed_original,
                m.total,
                args.out.display()
            );
        }
        Command::Report(args) => {
            let text = report(&args)?;
            match &args.out {
                Some(p) => std::fs::write(p, text)?,
                None => print!("{text}"),
            }
        }
        Command::ReplayValidate(args) => {
            let s = replay_validate(&args)?;
            println!("ok: {} events, {} sessions", s.events, s.sessions);
        }
    }
    Ok(())
}
