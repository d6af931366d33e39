//! Assembly of the full metrics report and its plain-text rendering.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    acceptance_from_sessions, by_arm, flag_suggestion, length_profiles, majority_vote, mean, mww_test, rouge_l,
    skill_breakdown, AnalyticsError, LengthProfiles, MwwResult, RougeNormalization, SkillBreakdown, VoteRecord,
    VoteTally,
};
use crate::session::{replay, Action, Session, SurveyResponse};
use crate::text::tokenize;

pub const REPORT_SCHEMA: &str = "milrw-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub rouge: RougeNormalization,
    pub alpha: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { rouge: RougeNormalization::Suggestion, alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrigramStats {
    pub captions: usize,
    /// Distinct trigrams across the whole caption set.
    pub unique: usize,
    pub total: usize,
    pub mean_unique_per_caption: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub arm: String,
    pub sessions: usize,
    pub submitted: usize,
    pub surveys: usize,
    pub mean_helpfulness: Option<f64>,
    pub mean_grammaticality: Option<f64>,
    pub mean_satisfaction: Option<f64>,
    pub n_requests: usize,
    pub n_accepted: usize,
    pub acceptance_rate: Option<f64>,
    /// Mean Rouge-L of accepted suggestions against the final caption.
    pub mean_rouge_l: Option<f64>,
    pub rouge_samples: usize,
    pub trigrams: TrigramStats,
    /// Flag counts over every shown suggestion.
    pub flags: BTreeMap<String, usize>,
    pub suggestions_shown: usize,
    pub lengths: LengthProfiles,
    /// Over the arm's sessions that have a survey.
    pub skill: Option<SkillBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub arm_a: String,
    pub arm_b: String,
    pub question: String,
    pub result: Option<MwwResult>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: String,
    pub options: ReportOptions,
    pub session_ids: Vec<String>,
    pub arms: Vec<ArmStats>,
    pub comparisons: Vec<Comparison>,
    pub votes: Vec<VoteTally>,
    /// Sessions without any survey, in id order.
    pub missing_surveys: Vec<String>,
}

impl MetricsReport {
    pub fn arm(&self, name: &str) -> Option<&ArmStats> {
        self.arms.iter().find(|a| a.arm == name)
    }

    /// Pretty JSON with object keys sorted.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
        s.push('\n');
        s
    }
}

#[derive(Deserialize)]
struct SurveyLine {
    session_id: String,
    #[serde(flatten)]
    response: SurveyResponse,
}

/// Read a survey JSONL file keyed by session id. Later lines win.
pub fn read_surveys(path: &Path) -> Result<BTreeMap<String, SurveyResponse>, AnalyticsError> {
    let file = std::fs::File::open(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SurveyLine = serde_json::from_str(&line)
            .map_err(|e| AnalyticsError::MalformedRecord { line: i + 1, reason: e.to_string() })?;
        rec.response
            .validate()
            .map_err(|e| AnalyticsError::MalformedRecord { line: i + 1, reason: e.to_string() })?;
        out.insert(rec.session_id, rec.response);
    }
    Ok(out)
}

const QUESTIONS: [&str; 3] = ["helpfulness", "grammaticality", "satisfaction"];

fn answer(s: &SurveyResponse, question: &str) -> f64 {
    let v = match question {
        "helpfulness" => s.helpfulness,
        "grammaticality" => s.grammaticality,
        _ => s.satisfaction,
    };
    v as f64
}

fn trigram_stats<'a>(captions: impl IntoIterator<Item = &'a str>) -> TrigramStats {
    let mut all: HashSet<Vec<String>> = HashSet::new();
    let mut per_caption = Vec::new();
    let mut total = 0;
    for c in captions {
        let tokens = tokenize(c);
        let grams: HashSet<Vec<String>> = tokens.windows(3).map(|w| w.to_vec()).collect();
        total += tokens.len().saturating_sub(2);
        per_caption.push(grams.len() as f64);
        all.extend(grams);
    }
    TrigramStats {
        captions: per_caption.len(),
        unique: all.len(),
        total,
        mean_unique_per_caption: mean(per_caption),
    }
}

fn arm_stats(
    arm: &str,
    sessions: &[&Session],
    surveys: &BTreeMap<String, SurveyResponse>,
    opts: &ReportOptions,
) -> Result<ArmStats, AnalyticsError> {
    let surveyed: Vec<&Session> = sessions.iter().copied().filter(|s| surveys.contains_key(&s.session_id)).collect();
    let question_mean = |q: &str| mean(surveyed.iter().map(|s| answer(&surveys[&s.session_id], q)));
    let acc = acceptance_from_sessions(sessions.iter().copied());

    let mut rouge = Vec::new();
    let mut flags: BTreeMap<String, usize> = BTreeMap::new();
    let mut shown = 0;
    for s in sessions {
        for r in &s.rounds {
            let draft = &r.suggestion_set.model_input.origin;
            for text in &r.suggestion_set.suggestions {
                shown += 1;
                for f in flag_suggestion(draft, text) {
                    let key = serde_json::to_value(f).expect("flag serializes");
                    *flags.entry(key.as_str().unwrap_or_default().to_string()).or_default() += 1;
                }
            }
            let (Some(Action::Accept(i)), Some(caption)) = (r.decision, s.final_caption.as_deref()) else {
                continue;
            };
            let suggestion = tokenize(&r.suggestion_set.suggestions[i]);
            if let Ok(v) = rouge_l(&suggestion, &tokenize(caption), opts.rouge) {
                rouge.push(v);
            }
        }
    }

    let submitted: Vec<&str> = sessions.iter().filter_map(|s| s.final_caption.as_deref()).collect();
    let skill = if surveyed.is_empty() { None } else { Some(skill_breakdown(surveyed.iter().copied(), surveys)?) };
    Ok(ArmStats {
        arm: arm.to_string(),
        sessions: sessions.len(),
        submitted: submitted.len(),
        surveys: surveyed.len(),
        mean_helpfulness: question_mean("helpfulness"),
        mean_grammaticality: question_mean("grammaticality"),
        mean_satisfaction: question_mean("satisfaction"),
        n_requests: acc.n_requests,
        n_accepted: acc.n_accepted,
        acceptance_rate: acc.rate,
        mean_rouge_l: mean(rouge.iter().copied()),
        rouge_samples: rouge.len(),
        trigrams: trigram_stats(submitted.iter().copied()),
        flags,
        suggestions_shown: shown,
        lengths: length_profiles(sessions.iter().copied(), surveys),
        skill,
    })
}

/// Build the report from a log, extra survey records (which override surveys
/// found in the log) and vote records.
pub fn build_report(
    log_text: &str,
    extra_surveys: &BTreeMap<String, SurveyResponse>,
    votes: &[VoteRecord],
    opts: &ReportOptions,
) -> Result<MetricsReport, AnalyticsError> {
    let sessions = replay(log_text)?;
    let mut surveys: BTreeMap<String, SurveyResponse> =
        sessions.values().filter_map(|s| s.survey.map(|v| (s.session_id.clone(), v))).collect();
    for (id, v) in extra_surveys {
        if sessions.contains_key(id) {
            surveys.insert(id.clone(), *v);
        }
    }

    let groups = by_arm(&sessions);
    let arms = groups
        .iter()
        .map(|(arm, list)| arm_stats(arm, list, &surveys, opts))
        .collect::<Result<Vec<_>, _>>()?;

    let names: Vec<&str> = groups.keys().copied().collect();
    let ratings = |arm: &str, q: &str| -> Vec<f64> {
        groups[arm].iter().filter_map(|s| surveys.get(&s.session_id)).map(|v| answer(v, q)).collect()
    };
    let mut comparisons = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            for q in QUESTIONS {
                let (xa, xb) = (ratings(a, q), ratings(b, q));
                let result = if xa.is_empty() || xb.is_empty() { None } else { Some(mww_test(&xa, &xb)?) };
                comparisons.push(Comparison {
                    arm_a: a.to_string(),
                    arm_b: b.to_string(),
                    question: q.to_string(),
                    significant: result.as_ref().is_some_and(|r| r.significant(opts.alpha)),
                    result,
                });
            }
        }
    }

    Ok(MetricsReport {
        schema: REPORT_SCHEMA.to_string(),
        options: *opts,
        session_ids: sessions.keys().cloned().collect(),
        arms,
        comparisons,
        votes: majority_vote(votes)?,
        missing_surveys: sessions.keys().filter(|id| !surveys.contains_key(*id)).cloned().collect(),
    })
}

fn num(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", x * 100.0))
}

/// Plain-text tables: survey means, usage, skill groups, comparisons, votes.
pub fn render_text(report: &MetricsReport) -> String {
    let mut out = String::new();
    let w = report.arms.iter().map(|a| a.arm.len()).max().unwrap_or(3).max(3);

    let _ = writeln!(out, "Survey means");
    let _ = writeln!(out, "{:w$}  {:>8}  {:>8}  {:>8}  {:>6}", "arm", "helpful", "grammar", "satisfy", "n");
    for a in &report.arms {
        let _ = writeln!(
            out,
            "{:w$}  {:>8}  {:>8}  {:>8}  {:>6}",
            a.arm,
            num(a.mean_helpfulness, 2),
            num(a.mean_grammaticality, 2),
            num(a.mean_satisfaction, 2),
            a.surveys
        );
    }

    let _ = writeln!(out, "\nSuggestion usage");
    let _ = writeln!(out, "{:w$}  {:>8}  {:>8}  {:>8}  {:>8}", "arm", "requests", "accepted", "% acc", "rouge-l");
    for a in &report.arms {
        let _ = writeln!(
            out,
            "{:w$}  {:>8}  {:>8}  {:>8}  {:>8}",
            a.arm,
            a.n_requests,
            a.n_accepted,
            pct(a.acceptance_rate),
            num(a.mean_rouge_l, 3)
        );
    }

    let _ = writeln!(out, "\nSkill groups");
    let _ = writeln!(out, "{:w$}  {:8}  {:>6}  {:>8}  {:>9}  {:>8}", "arm", "group", "users", "helpful", "# request", "% acc");
    for a in &report.arms {
        let Some(skill) = &a.skill else { continue };
        for (name, g) in [("novice", &skill.novice), ("skilled", &skill.skilled)] {
            let _ = writeln!(
                out,
                "{:w$}  {:8}  {:>6}  {:>8}  {:>9}  {:>8}",
                a.arm,
                name,
                g.users,
                num(g.mean_helpfulness, 2),
                num(g.mean_requests, 2),
                pct(g.acceptance_rate)
            );
        }
    }

    if !report.comparisons.is_empty() {
        let _ = writeln!(out, "\nRank-sum comparisons");
        for c in &report.comparisons {
            let detail = c.result.as_ref().map_or_else(
                || "no data".to_string(),
                |r| format!("U={:.1} p={:.3}{}", r.u, r.p_two_sided, if c.significant { " *" } else { "" }),
            );
            let _ = writeln!(out, "{} vs {} {}: {}", c.arm_a, c.arm_b, c.question, detail);
        }
    }

    if !report.votes.is_empty() {
        let _ = writeln!(out, "\nPairwise votes");
        for t in &report.votes {
            let _ = writeln!(
                out,
                "{} vs {}: {} / {} of {}",
                t.condition_a, t.condition_b, t.a_wins, t.b_wins, t.records
            );
        }
    }

    if !report.missing_surveys.is_empty() {
        let _ = writeln!(out, "\nSessions without survey: {}", report.missing_surveys.len());
    }
    out
}
