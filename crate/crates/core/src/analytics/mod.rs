//! Study metrics: survey means and rank tests, acceptance and retention,
//! lexical diversity, third-party votes, error flags, length profiles and
//! the skill breakdown, assembled into one [`MetricsReport`].

mod flags;
mod lengths;
mod mww;
mod report;
mod skill;
mod votes;

pub use flags::{flag_suggestion, Flag};
pub use lengths::{length_profiles, quartiles, LengthProfile, LengthProfiles, Quartiles};
pub use mww::{midranks, mww_test, MwwResult, EXACT_MAX_PRODUCT};
pub use report::{build_report, read_surveys, render_text, ArmStats, Comparison, MetricsReport, ReportOptions, TrigramStats};
pub use skill::{skill_breakdown, skill_group, GroupStats, SkillBreakdown, SkillGroup};
pub use votes::{majority_vote, read_votes, Side, VoteRecord, VoteTally};

use std::collections::BTreeMap;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{replay, Action, Session, SessionError};
use crate::text::{lcs_len, tokenize};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("suggestion has no tokens")]
    EmptySuggestion,
    #[error("reference text has no tokens")]
    EmptyReference,
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFiniteValue,
    #[error("session {0} has no survey")]
    MissingSurvey(String),
    #[error("malformed vote record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error(transparent)]
    Log(#[from] SessionError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Which side the Rouge-L LCS is normalized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RougeNormalization {
    /// Share of the suggestion kept in the caption.
    #[default]
    Suggestion,
    /// Share of the caption covered by the suggestion.
    Caption,
}

/// LCS(suggestion, caption) / |suggestion|.
pub fn rouge_l_recall(suggestion_tokens: &[String], caption_tokens: &[String]) -> Result<f64, AnalyticsError> {
    rouge_l(suggestion_tokens, caption_tokens, RougeNormalization::Suggestion)
}

pub fn rouge_l(
    suggestion_tokens: &[String],
    caption_tokens: &[String],
    norm: RougeNormalization,
) -> Result<f64, AnalyticsError> {
    if suggestion_tokens.is_empty() {
        return Err(AnalyticsError::EmptySuggestion);
    }
    let lcs = lcs_len(suggestion_tokens, caption_tokens) as f64;
    match norm {
        RougeNormalization::Suggestion => Ok(lcs / suggestion_tokens.len() as f64),
        RougeNormalization::Caption if caption_tokens.is_empty() => Err(AnalyticsError::EmptyReference),
        RougeNormalization::Caption => Ok(lcs / caption_tokens.len() as f64),
    }
}

/// Distinct `n`-token windows of the canonical token sequence; 0 for `n == 0`.
pub fn unique_ngrams(text: &str, n: usize) -> usize {
    let tokens = tokenize(text);
    if n == 0 || tokens.len() < n {
        return 0;
    }
    tokens.windows(n).collect::<HashSet<_>>().len()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub n_requests: usize,
    pub n_accepted: usize,
    /// Absent when there were no requests.
    pub rate: Option<f64>,
}

impl AcceptanceStats {
    pub fn new(n_requests: usize, n_accepted: usize) -> Self {
        let rate = (n_requests > 0).then(|| n_accepted as f64 / n_requests as f64);
        AcceptanceStats { n_requests, n_accepted, rate }
    }
}

/// Requests and accepts over every session of `arm` in the log.
pub fn acceptance_stats(log_text: &str, arm: &str) -> Result<AcceptanceStats, AnalyticsError> {
    Ok(acceptance_from_sessions(replay(log_text)?.values().filter(|s| s.arm == arm)))
}

pub fn acceptance_from_sessions<'a>(sessions: impl IntoIterator<Item = &'a Session>) -> AcceptanceStats {
    let (mut req, mut acc) = (0, 0);
    for s in sessions {
        req += s.rounds.len();
        acc += s.rounds.iter().filter(|r| matches!(r.decision, Some(Action::Accept(_)))).count();
    }
    AcceptanceStats::new(req, acc)
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Sessions grouped by arm, in arm-name order.
fn by_arm(sessions: &BTreeMap<String, Session>) -> BTreeMap<&str, Vec<&Session>> {
    let mut out: BTreeMap<&str, Vec<&Session>> = BTreeMap::new();
    for s in sessions.values() {
        out.entry(s.arm.as_str()).or_default().push(s);
    }
    out
}
