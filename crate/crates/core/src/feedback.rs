//! Fine-tuning pairs harvested from accept/reject decisions.
//!
//! An accepted suggestion teaches draft → suggestion. A rejected one teaches
//! suggestion → draft. Either way the target is the text the user preferred.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{write_jsonl, CorpusError, ExampleType, Provenance, Split, TrainingPair};
use crate::session::{replay, Action, Session, SessionError, SessionState};

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error(transparent)]
    Log(#[from] SessionError),
    #[error("base corpus has {available} eligible pairs, {requested} requested")]
    InsufficientBase { requested: usize, available: usize },
    #[error("base corpus is empty")]
    EmptyBase,
    #[error("mixing ratio must be a positive finite number, got {0}")]
    InvalidRatio(f64),
    #[error(transparent)]
    Output(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractOptions {
    /// Also emit (sibling → accepted) reject pairs for the suggestions shown
    /// next to an accepted one.
    pub siblings_as_rejects: bool,
    /// On reject, emit one pair per shown suggestion instead of the first only.
    pub reject_all_shown: bool,
    /// Include sessions that were closed without a submission.
    pub include_closed: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Extraction {
    pub pairs: Vec<TrainingPair>,
    pub accept_decisions: usize,
    pub reject_decisions: usize,
    /// Pairs skipped because source and target were identical.
    pub skipped_degenerate: usize,
    pub sessions: Vec<String>,
}

/// Replay a log and extract feedback pairs.
pub fn extract_pairs(log_text: &str, opts: &ExtractOptions) -> Result<Extraction, FeedbackError> {
    let sessions = replay(log_text)?;
    Ok(extract_from_sessions(&sessions, opts))
}

/// Pairs in (session id, decision event id) order.
pub fn extract_from_sessions(sessions: &BTreeMap<String, Session>, opts: &ExtractOptions) -> Extraction {
    let mut out = Extraction::default();
    for s in sessions.values() {
        if s.state == SessionState::Closed && !opts.include_closed {
            continue;
        }
        let mut rounds: Vec<_> = s.rounds.iter().filter(|r| r.decision.is_some()).collect();
        rounds.sort_by_key(|r| r.decision_event_id);
        let mut used = false;
        for r in rounds {
            let draft = r.suggestion_set.model_input.origin.plain_text.as_str();
            let shown = &r.suggestion_set.suggestions;
            let provenance = Provenance {
                session_id: Some(s.session_id.clone()),
                request_id: Some(r.request_id.clone()),
                event_id: r.decision_event_id,
                ..Default::default()
            };
            let mut candidates: Vec<(&str, &str, ExampleType)> = Vec::new();
            match r.decision.expect("filtered") {
                Action::Accept(i) => {
                    out.accept_decisions += 1;
                    candidates.push((draft, &shown[i], ExampleType::FeedbackAccept));
                    if opts.siblings_as_rejects {
                        for (j, sib) in shown.iter().enumerate() {
                            if j != i {
                                candidates.push((sib, &shown[i], ExampleType::FeedbackReject));
                            }
                        }
                    }
                }
                Action::Reject => {
                    out.reject_decisions += 1;
                    let n = if opts.reject_all_shown { shown.len() } else { 1 };
                    for rejected in shown.iter().take(n) {
                        candidates.push((rejected, draft, ExampleType::FeedbackReject));
                    }
                }
            }
            for (source, target, example_type) in candidates {
                if source == target || source.is_empty() || target.is_empty() {
                    out.skipped_degenerate += 1;
                    continue;
                }
                used = true;
                out.pairs.push(TrainingPair {
                    source: source.to_string(),
                    target: target.to_string(),
                    example_type,
                    provenance: provenance.clone(),
                    split: Split::Unsplit,
                });
            }
        }
        if used {
            out.sessions.push(s.session_id.clone());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackManifest {
    pub schema: String,
    pub seed: u64,
    pub ratio: f64,
    pub feedback_pairs: usize,
    pub accept_pairs: usize,
    pub reject_pairs: usize,
    pub mixed_original: usize,
    pub total: usize,
    pub skipped_degenerate: usize,
    pub source_sessions: Vec<String>,
    pub options: ExtractOptions,
    pub reference: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackDataset {
    pub pairs: Vec<TrainingPair>,
    pub mixed_original: Vec<TrainingPair>,
    pub seed: u64,
    pub manifest: FeedbackManifest,
}

impl FeedbackDataset {
    /// Feedback pairs first, then the sampled originals.
    pub fn all(&self) -> impl Iterator<Item = &TrainingPair> {
        self.pairs.iter().chain(&self.mixed_original)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in self.all() {
            out.push_str(&serde_json::to_string(p).expect("pair serializes"));
            out.push('\n');
        }
        out
    }

    /// Write `feedback.jsonl` and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), FeedbackError> {
        std::fs::create_dir_all(dir).map_err(SessionError::Store)?;
        write_jsonl(&dir.join("feedback.jsonl"), self.all())?;
        let mut json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        json.push('\n');
        std::fs::write(dir.join("manifest.json"), json).map_err(SessionError::Store)?;
        Ok(())
    }
}

/// Fine-tuning recipe for adapting the deployed rewriter on feedback data.
pub fn reference_recipe() -> serde_json::Value {
    serde_json::json!({
        "start_from": "deployed rewriting model",
        "epochs": 5,
        "learning_rate": 3e-6,
        "learning_rate_selection": "five-fold cross-validation",
        "selection_criterion": "label-smoothed cross-entropy",
        "other_hyperparameters": "fine-tuning script defaults (Adam, dropout, scheduler)",
        "reference_counts": { "feedback_pairs": 474, "original_pairs": 450, "total": 924 },
    })
}

/// Number of base pairs mixed in for `n` feedback pairs.
pub fn mix_count(n: usize, ratio: f64) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Add `floor(ratio * |pairs|)` training-split pairs from `base`, sampled
/// uniformly without replacement.
pub fn mix_with_original(
    extraction: Extraction,
    base: &[TrainingPair],
    ratio: f64,
    seed: u64,
    opts: ExtractOptions,
) -> Result<FeedbackDataset, FeedbackError> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(FeedbackError::InvalidRatio(ratio));
    }
    if base.is_empty() {
        return Err(FeedbackError::EmptyBase);
    }
    let own: HashSet<(&str, &str)> = extraction.pairs.iter().map(|p| (p.source.as_str(), p.target.as_str())).collect();
    // distinct training pairs not already among the feedback pairs
    let mut seen = BTreeSet::new();
    let eligible: Vec<&TrainingPair> = base
        .iter()
        .filter(|p| matches!(p.split, Split::Train | Split::Unsplit))
        .filter(|p| !own.contains(&(p.source.as_str(), p.target.as_str())))
        .filter(|p| seen.insert((p.source.as_str(), p.target.as_str(), p.example_type as u8)))
        .collect();
    let requested = mix_count(extraction.pairs.len(), ratio);
    if requested > eligible.len() {
        return Err(FeedbackError::InsufficientBase { requested, available: eligible.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, eligible.len(), requested).into_vec();
    picks.sort_unstable();
    let mixed_original: Vec<TrainingPair> = picks.into_iter().map(|i| eligible[i].clone()).collect();

    let accept_pairs = extraction.pairs.iter().filter(|p| p.example_type == ExampleType::FeedbackAccept).count();
    let manifest = FeedbackManifest {
        schema: "milrw-feedback/1".into(),
        seed,
        ratio,
        feedback_pairs: extraction.pairs.len(),
        accept_pairs,
        reject_pairs: extraction.pairs.len() - accept_pairs,
        mixed_original: mixed_original.len(),
        total: extraction.pairs.len() + mixed_original.len(),
        skipped_degenerate: extraction.skipped_degenerate,
        source_sessions: extraction.sessions.clone(),
        options: opts,
        reference: reference_recipe(),
    };
    Ok(FeedbackDataset { pairs: extraction.pairs, mixed_original, seed, manifest })
}

/// Feedback pairs alone, for when no base corpus is configured.
pub fn unmixed(extraction: Extraction, seed: u64, opts: ExtractOptions) -> FeedbackDataset {
    let accept_pairs = extraction.pairs.iter().filter(|p| p.example_type == ExampleType::FeedbackAccept).count();
    let manifest = FeedbackManifest {
        schema: "milrw-feedback/1".into(),
        seed,
        ratio: 0.0,
        feedback_pairs: extraction.pairs.len(),
        accept_pairs,
        reject_pairs: extraction.pairs.len() - accept_pairs,
        mixed_original: 0,
        total: extraction.pairs.len(),
        skipped_degenerate: extraction.skipped_degenerate,
        source_sessions: extraction.sessions.clone(),
        options: opts,
        reference: reference_recipe(),
    };
    FeedbackDataset { pairs: extraction.pairs, mixed_original: Vec::new(), seed, manifest }
}
