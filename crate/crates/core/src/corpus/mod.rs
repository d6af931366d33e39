//! Pseudo-parallel corpus synthesis.
//!
//! Each annotated creative sentence has its creative spans masked out and
//! infilled by a generic model, giving a plain "source" sentence. The pair
//! (plain source, creative target) is emitted twice: once with the infilled
//! text wrapped in rewrite markers and once with it masked.

pub mod adapters;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::{GenerationBackend, GenerationError};
use crate::markup::{to_model_input, Demarcation, DemarcatedDraft, MarkupError};
use crate::text::{self, char_offset, char_slice};

/// Reference corpus sizes the split ratios default to.
pub const REFERENCE_TRAIN_PAIRS: usize = 42_000;
pub const REFERENCE_VALID_PAIRS: usize = 2_000;
pub const REFERENCE_TEST_PAIRS: usize = 1_626;

/// How many candidates to ask the infiller for; the best one is used.
const INFILL_POOL: usize = 8;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("infill failed: {0}")]
    InfillFailed(String),
    #[error("replaced range out of bounds: {0}")]
    RangeOutOfBounds(String),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Markup(#[from] MarkupError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub text: String,
    /// Char ranges of the annotated creative spans.
    pub spans: Vec<(usize, usize)>,
    pub source_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_label: Option<String>,
}

impl AnnotatedSentence {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let len = self.text.chars().count();
        if self.text.trim().is_empty() {
            return Err(CorpusError::InvalidRecord("empty text".into()));
        }
        if self.spans.is_empty() {
            return Err(CorpusError::InvalidRecord("no annotated spans".into()));
        }
        check_ranges(&self.spans, len).map_err(CorpusError::InvalidRecord)
    }

    pub fn span_texts(&self) -> Vec<&str> {
        self.spans.iter().map(|&(s, e)| char_slice(&self.text, s, e)).collect()
    }
}

/// Sorted, non-empty, non-overlapping, in bounds.
fn check_ranges(ranges: &[(usize, usize)], len: usize) -> Result<(), String> {
    let mut prev_end = 0;
    for (i, &(s, e)) in ranges.iter().enumerate() {
        if s >= e {
            return Err(format!("empty range {s}..{e}"));
        }
        if e > len {
            return Err(format!("range {s}..{e} exceeds length {len}"));
        }
        if i > 0 && s < prev_end {
            return Err(format!("range {s}..{e} overlaps or is out of order"));
        }
        prev_end = e;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleType {
    Rewrite,
    Infill,
    FeedbackAccept,
    FeedbackReject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
    #[default]
    Unsplit,
}

/// Where a pair came from. Corpus pairs carry the dataset and record index;
/// feedback pairs carry session, request and decision event ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrainingPair {
    pub source: String,
    pub target: String,
    pub example_type: ExampleType,
    pub provenance: Provenance,
    #[serde(default)]
    pub split: Split,
}

/// Result of masking and infilling one annotated sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Synthesis {
    pub generic: String,
    /// Char ranges of the infilled text inside `generic`.
    pub replaced_ranges: Vec<(usize, usize)>,
    pub original_spans: Vec<String>,
    pub infilled_spans: Vec<String>,
}

/// Mask every annotated span, infill with the best candidate, and locate the
/// infilled text in the result.
pub fn synthesize_source(a: &AnnotatedSentence, infiller: &dyn GenerationBackend) -> Result<Synthesis, CorpusError> {
    a.validate()?;
    // literal text between spans
    let mut pieces = Vec::with_capacity(a.spans.len() + 1);
    let mut pos = 0;
    for &(s, e) in &a.spans {
        pieces.push(char_slice(&a.text, pos, s));
        pos = e;
    }
    pieces.push(char_slice(&a.text, pos, usize::MAX));

    let mut plain = String::new();
    let mut blanks = Vec::with_capacity(a.spans.len());
    for piece in &pieces[..pieces.len() - 1] {
        plain.push_str(piece);
        blanks.push(Demarcation::infill(plain.chars().count()));
    }
    plain.push_str(pieces[pieces.len() - 1]);
    let masked = to_model_input(&DemarcatedDraft::from_parts(plain, blanks)?)?;

    let pool = infiller.candidates(&masked, INFILL_POOL)?;
    let best = pool
        .iter()
        .reduce(|best, c| if c.score > best.score { c } else { best })
        .ok_or_else(|| CorpusError::InfillFailed("infiller returned no candidate".into()))?;
    let generic = best.text.clone();

    let fills = align_fills(&generic, &pieces)
        .ok_or_else(|| CorpusError::InfillFailed(format!("candidate does not match masked sentence: {generic:?}")))?;
    let mut replaced_ranges = Vec::with_capacity(fills.len());
    let mut infilled_spans = Vec::with_capacity(fills.len());
    for (b0, b1) in fills {
        let raw = &generic[b0..b1];
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Err(CorpusError::InfillFailed("empty infill for a masked span".into()));
        }
        let lead = raw.len() - raw.trim_start().len();
        let start = b0 + lead;
        let end = start + trimmed.len();
        replaced_ranges.push((char_offset(&generic, start), char_offset(&generic, end)));
        infilled_spans.push(trimmed.to_string());
    }
    Ok(Synthesis {
        generic,
        replaced_ranges,
        original_spans: a.span_texts().into_iter().map(str::to_string).collect(),
        infilled_spans,
    })
}

/// Byte ranges of the text filling each gap between `pieces` in `candidate`.
fn align_fills(candidate: &str, pieces: &[&str]) -> Option<Vec<(usize, usize)>> {
    let (first, last) = (pieces[0], pieces[pieces.len() - 1]);
    if !candidate.starts_with(first) || !candidate.ends_with(last) {
        return None;
    }
    let tail_start = candidate.len().checked_sub(last.len())?;
    let mut pos = first.len();
    let mut fills = Vec::with_capacity(pieces.len() - 1);
    for piece in &pieces[1..pieces.len() - 1] {
        if piece.is_empty() {
            return None;
        }
        let at = pos + candidate.get(pos..tail_start)?.find(piece)?;
        fills.push((pos, at));
        pos = at + piece.len();
    }
    if pos > tail_start {
        return None;
    }
    fills.push((pos, tail_start));
    Some(fills)
}

/// The rewrite and infill examples for one sentence, in that order.
pub fn make_training_examples(
    generic: &str,
    creative: &str,
    replaced_ranges: &[(usize, usize)],
    provenance: Provenance,
) -> Result<[TrainingPair; 2], CorpusError> {
    if replaced_ranges.is_empty() {
        return Err(CorpusError::RangeOutOfBounds("no replaced range".into()));
    }
    check_ranges(replaced_ranges, generic.chars().count()).map_err(CorpusError::RangeOutOfBounds)?;

    let rewrite_spans = replaced_ranges
        .iter()
        .map(|&(s, e)| Demarcation::rewrite(s, e, char_slice(generic, s, e)))
        .collect();
    let rewrite = to_model_input(&DemarcatedDraft::from_parts(generic, rewrite_spans)?)?;

    let mut plain = String::new();
    let mut blanks = Vec::new();
    let mut pos = 0;
    for &(s, e) in replaced_ranges {
        plain.push_str(char_slice(generic, pos, s));
        blanks.push(Demarcation::infill(plain.chars().count()));
        pos = e;
    }
    plain.push_str(char_slice(generic, pos, usize::MAX));
    let infill = to_model_input(&DemarcatedDraft::from_parts(plain, blanks)?)?;

    let pair = |source: String, example_type| TrainingPair {
        source,
        target: creative.to_string(),
        example_type,
        provenance: provenance.clone(),
        split: Split::Unsplit,
    };
    Ok([pair(rewrite.text, ExampleType::Rewrite), pair(infill.text, ExampleType::Infill)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftFilterConfig {
    pub enabled: bool,
    /// A pair is a drift candidate when the infilled span shares fewer content
    /// tokens than this with the original span.
    pub min_shared_content_tokens: usize,
    /// ...and introduces at least this many content tokens the creative
    /// sentence does not contain.
    pub min_novel_content_tokens: usize,
}

impl Default for DriftFilterConfig {
    fn default() -> Self {
        DriftFilterConfig { enabled: true, min_shared_content_tokens: 1, min_novel_content_tokens: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    ContentDrift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Drop(DropReason),
}

/// Flag a pair whose infilled span wandered away from the original span's
/// content. The creative sentence is the pair's target.
pub fn drift_filter(cfg: &DriftFilterConfig, pair: &TrainingPair, original_span: &str, infilled_span: &str) -> FilterDecision {
    if !cfg.enabled {
        return FilterDecision::Keep;
    }
    let original = text::content_tokens(original_span);
    let infilled = text::content_tokens(infilled_span);
    let creative = text::content_tokens(&pair.target);
    let shared = infilled.iter().filter(|t| original.contains(t)).count();
    let novel = infilled.iter().filter(|t| !creative.contains(t)).count();
    if shared < cfg.min_shared_content_tokens && novel >= cfg.min_novel_content_tokens {
        FilterDecision::Drop(DropReason::ContentDrift)
    } else {
        FilterDecision::Keep
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: REFERENCE_TRAIN_PAIRS as f64,
            valid: REFERENCE_VALID_PAIRS as f64,
            test: REFERENCE_TEST_PAIRS as f64,
        }
    }
}

impl SplitRatios {
    /// Sentence counts per split for `n` sentences: valid and test are
    /// rounded, train takes the rest.
    pub fn allocate(&self, n: usize) -> Result<(usize, usize, usize), CorpusError> {
        let total = self.train + self.valid + self.test;
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) || total <= 0.0 {
            return Err(CorpusError::InvalidRecord(format!("bad split ratios {self:?}")));
        }
        let valid = ((n as f64) * self.valid / total).round() as usize;
        let test = (((n as f64) * self.test / total).round() as usize).min(n - valid.min(n));
        let valid = valid.min(n);
        Ok((n - valid - test, valid, test))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusOptions {
    pub seed: u64,
    pub split_ratios: SplitRatios,
    pub drift_filter: DriftFilterConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub input: String,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema: String,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub infiller: String,
    pub records_read: usize,
    pub records_failed: usize,
    pub record_errors: Vec<RecordError>,
    pub sentences_processed: usize,
    pub pairs_generated: usize,
    pub pairs_kept: usize,
    pub pairs_dropped: usize,
    pub drop_reasons: BTreeMap<DropReason, usize>,
    pub drift_filter: DriftFilterConfig,
    pub split_ratios: SplitRatios,
    pub counts: SplitCounts,
    pub reference: serde_json::Value,
}

/// Reference corpus scale and fine-tuning recipe, recorded for downstream use.
pub fn reference_metadata() -> serde_json::Value {
    serde_json::json!({
        "split_targets": {
            "train": REFERENCE_TRAIN_PAIRS,
            "valid": REFERENCE_VALID_PAIRS,
            "test": REFERENCE_TEST_PAIRS,
        },
        "fine_tuning": {
            "base_model": "bart-large",
            "epochs": 5,
            "learning_rate": 3e-5,
            "optimizer": "adam",
            "adam_betas": [0.9, 0.999],
            "dropout": 0.1,
            "lr_schedule": "polynomial_decay",
            "weight_decay": 0.01,
            "decoding": { "strategy": "top_k_sampling", "k": 10 },
        },
    })
}

/// Pairs and manifest produced by [`build_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusBuild {
    pub pairs: Vec<TrainingPair>,
    pub dropped: Vec<(TrainingPair, DropReason)>,
    pub manifest: CorpusManifest,
}

impl CorpusBuild {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &TrainingPair> {
        self.pairs.iter().filter(move |p| p.split == split)
    }
}

/// Records of one input file plus per-line parse failures.
#[derive(Debug, Clone, Default)]
pub struct AnnotatedInput {
    pub name: String,
    pub records: Vec<(usize, AnnotatedSentence)>,
    pub errors: Vec<RecordError>,
}

/// Read a JSONL file of annotated sentences. Unparseable lines are collected,
/// not fatal; only an unreadable file is.
pub fn read_annotated(path: &Path) -> Result<AnnotatedInput, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let name = path.display().to_string();
    let mut input = AnnotatedInput { name: name.clone(), ..Default::default() };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<AnnotatedSentence>(&line) {
            Ok(rec) => input.records.push((i + 1, rec)),
            Err(e) => input.errors.push(RecordError { input: name.clone(), line: i + 1, reason: e.to_string() }),
        }
    }
    Ok(input)
}

/// Synthesize, filter, shuffle and split. Output order depends only on the
/// inputs and the seed.
pub fn build_corpus(
    inputs: &[AnnotatedInput],
    infiller: &dyn GenerationBackend,
    opts: &CorpusOptions,
) -> Result<CorpusBuild, CorpusError> {
    let mut record_errors: Vec<RecordError> = Vec::new();
    let mut groups: Vec<[TrainingPair; 2]> = Vec::new();
    let mut dropped = Vec::new();
    let mut drop_reasons = BTreeMap::new();
    let mut records_read = 0;
    let mut processed = 0;
    let mut record_index = 0;

    for input in inputs {
        records_read += input.records.len() + input.errors.len();
        record_errors.extend(input.errors.iter().cloned());
        for (line, rec) in &input.records {
            let index = record_index;
            record_index += 1;
            let provenance = Provenance { source_id: Some(rec.source_id.clone()), record: Some(index), ..Default::default() };
            let made = synthesize_source(rec, infiller).and_then(|syn| {
                let pairs = make_training_examples(&syn.generic, &rec.text, &syn.replaced_ranges, provenance)?;
                Ok((syn, pairs))
            });
            let (syn, pairs) = match made {
                Ok(v) => v,
                Err(CorpusError::Generation(GenerationError::BackendUnavailable(m))) => {
                    return Err(CorpusError::Generation(GenerationError::BackendUnavailable(m)))
                }
                Err(e) => {
                    tracing::warn!(input = %input.name, line, error = %e, "skipping record");
                    record_errors.push(RecordError { input: input.name.clone(), line: *line, reason: e.to_string() });
                    continue;
                }
            };
            processed += 1;
            let verdict = syn
                .original_spans
                .iter()
                .zip(&syn.infilled_spans)
                .map(|(o, f)| drift_filter(&opts.drift_filter, &pairs[0], o, f))
                .find(|d| *d != FilterDecision::Keep)
                .unwrap_or(FilterDecision::Keep);
            match verdict {
                FilterDecision::Keep => groups.push(pairs),
                FilterDecision::Drop(reason) => {
                    *drop_reasons.entry(reason).or_insert(0) += pairs.len();
                    dropped.extend(pairs.into_iter().map(|p| (p, reason)));
                }
            }
        }
    }

    // both examples of a sentence stay in the same split
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    groups.shuffle(&mut rng);
    let (n_train, n_valid, _) = opts.split_ratios.allocate(groups.len())?;
    let mut pairs = Vec::with_capacity(groups.len() * 2);
    for (i, group) in groups.into_iter().enumerate() {
        let split = if i < n_train {
            Split::Train
        } else if i < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        };
        pairs.extend(group.into_iter().map(|mut p| {
            p.split = split;
            p
        }));
    }
    let count = |s| pairs.iter().filter(|p: &&TrainingPair| p.split == s).count();
    let manifest = CorpusManifest {
        schema: "milrw-corpus/1".into(),
        seed: opts.seed,
        inputs: inputs.iter().map(|i| i.name.clone()).collect(),
        infiller: infiller.id().to_string(),
        records_read,
        records_failed: record_errors.len(),
        record_errors,
        sentences_processed: processed,
        pairs_generated: processed * 2,
        pairs_kept: pairs.len(),
        pairs_dropped: dropped.len(),
        drop_reasons,
        drift_filter: opts.drift_filter,
        split_ratios: opts.split_ratios,
        counts: SplitCounts { train: count(Split::Train), valid: count(Split::Valid), test: count(Split::Test) },
        reference: reference_metadata(),
    };
    Ok(CorpusBuild { pairs, dropped, manifest })
}

/// Write `train.jsonl`, `valid.jsonl`, `test.jsonl` and `manifest.json`.
pub fn write_corpus(build: &CorpusBuild, out_dir: &Path) -> Result<(), CorpusError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CorpusError::io(out_dir, e))?;
    for (split, name) in [(Split::Train, "train.jsonl"), (Split::Valid, "valid.jsonl"), (Split::Test, "test.jsonl")] {
        write_jsonl(&out_dir.join(name), build.split(split))?;
    }
    let path = out_dir.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&build.manifest).expect("manifest serializes");
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| CorpusError::io(&path, e))
}

/// One JSON object per line.
pub fn write_jsonl<'a>(path: &Path, pairs: impl IntoIterator<Item = &'a TrainingPair>) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        let line = serde_json::to_string(p).expect("pair serializes");
        writeln!(w, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

/// Read training pairs written by [`write_jsonl`].
pub fn read_pairs(path: &Path) -> Result<Vec<TrainingPair>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair = serde_json::from_str(&line)
            .map_err(|e| CorpusError::InvalidRecord(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(pair);
    }
    Ok(out)
}

/// The bundled 50-sentence sample, one JSON record per line.
pub const SAMPLE_CORPUS: &str = include_str!("../../data/sample_corpus.jsonl");

pub fn sample_corpus() -> AnnotatedInput {
    let mut input = AnnotatedInput { name: "sample_corpus.jsonl".into(), ..Default::default() };
    for (i, line) in SAMPLE_CORPUS.lines().enumerate() {
        let rec = serde_json::from_str(line).expect("bundled sample parses");
        input.records.push((i + 1, rec));
    }
    input
}
