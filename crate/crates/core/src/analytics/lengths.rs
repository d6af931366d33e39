//! Character-length profiles of requests, split by decision and skill.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::skill::{skill_group, SkillGroup};
use crate::markup::extract_revision;
use crate::session::{Action, Session, SurveyResponse};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Five-number summary with linearly interpolated quartiles; `None` when empty.
pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some(Quartiles { n: v.len(), min: v[0], q1: at(0.25), median: at(0.5), q3: at(0.75), max: v[v.len() - 1] })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LengthProfile {
    pub rounds: usize,
    /// Characters in the draft at request time.
    pub source_chars: Option<Quartiles>,
    /// Characters of suggestion-only text in the decided suggestion.
    pub revised_chars: Option<Quartiles>,
    /// Share of the draft's characters inside rewrite spans.
    pub demarcated_fraction: Option<Quartiles>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LengthProfiles {
    pub accepted: LengthProfile,
    pub rejected: LengthProfile,
    /// Keyed by skill group; only sessions with a survey are included.
    pub by_skill: BTreeMap<SkillGroup, LengthProfile>,
}

#[derive(Default)]
struct Acc {
    source: Vec<f64>,
    revised: Vec<f64>,
    fraction: Vec<f64>,
}

impl Acc {
    fn finish(&self) -> LengthProfile {
        LengthProfile {
            rounds: self.source.len(),
            source_chars: quartiles(&self.source),
            revised_chars: quartiles(&self.revised),
            demarcated_fraction: quartiles(&self.fraction),
        }
    }
}

/// Profiles over every decided round. For rejects the first shown suggestion
/// stands in for the decided one.
pub fn length_profiles<'a>(
    sessions: impl IntoIterator<Item = &'a Session>,
    surveys: &BTreeMap<String, SurveyResponse>,
) -> LengthProfiles {
    let (mut acc, mut rej) = (Acc::default(), Acc::default());
    let mut skill: BTreeMap<SkillGroup, Acc> = BTreeMap::new();
    for s in sessions {
        let group = surveys.get(&s.session_id).map(|v| skill_group(v.self_skill));
        for r in &s.rounds {
            let Some(action) = r.decision else { continue };
            let draft = &r.suggestion_set.model_input.origin;
            let shown = &r.suggestion_set.suggestions;
            let decided = match action {
                Action::Accept(i) => &shown[i],
                Action::Reject => &shown[0],
            };
            let plain_chars = draft.plain_text.chars().count();
            let source = plain_chars as f64;
            let revised = extract_revision(&draft.plain_text, decided).chars_introduced as f64;
            let marked: usize = draft.spans.iter().map(|d| d.end - d.start).sum();
            let fraction = if plain_chars == 0 { 0.0 } else { marked as f64 / plain_chars as f64 };
            let bucket = if matches!(action, Action::Accept(_)) { &mut acc } else { &mut rej };
            for b in [Some(bucket), group.map(|g| skill.entry(g).or_default())].into_iter().flatten() {
                b.source.push(source);
                b.revised.push(revised);
                b.fraction.push(fraction);
            }
        }
    }
    LengthProfiles {
        accepted: acc.finish(),
        rejected: rej.finish(),
        by_skill: skill.iter().map(|(g, a)| (*g, a.finish())).collect(),
    }
}
