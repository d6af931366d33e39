//! Novice versus skilled writers, split on self-rated skill.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{acceptance_from_sessions, mean, mww_test, AnalyticsError, MwwResult};
use crate::session::{Session, SurveyResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillGroup {
    Novice,
    Skilled,
}

/// Self-rated skill above 3 counts as skilled.
pub fn skill_group(self_skill: u8) -> SkillGroup {
    if self_skill > 3 {
        SkillGroup::Skilled
    } else {
        SkillGroup::Novice
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub users: usize,
    pub mean_helpfulness: Option<f64>,
    /// Suggestion requests per user.
    pub mean_requests: Option<f64>,
    pub n_requests: usize,
    pub n_accepted: usize,
    /// Pooled over the group's requests.
    pub acceptance_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillBreakdown {
    pub novice: GroupStats,
    pub skilled: GroupStats,
    /// Helpfulness ratings compared across groups; absent when a group is empty.
    pub helpfulness_mww: Option<MwwResult>,
}

fn group_stats(sessions: &[&Session], surveys: &BTreeMap<String, SurveyResponse>) -> GroupStats {
    let acc = acceptance_from_sessions(sessions.iter().copied());
    GroupStats {
        users: sessions.len(),
        mean_helpfulness: mean(sessions.iter().map(|s| surveys[&s.session_id].helpfulness as f64)),
        mean_requests: mean(sessions.iter().map(|s| s.rounds.len() as f64)),
        n_requests: acc.n_requests,
        n_accepted: acc.n_accepted,
        acceptance_rate: acc.rate,
    }
}

/// Each session is one user. Every session needs a survey in `surveys`.
pub fn skill_breakdown<'a>(
    sessions: impl IntoIterator<Item = &'a Session>,
    surveys: &BTreeMap<String, SurveyResponse>,
) -> Result<SkillBreakdown, AnalyticsError> {
    let (mut novice, mut skilled) = (Vec::new(), Vec::new());
    for s in sessions {
        let survey = surveys
            .get(&s.session_id)
            .ok_or_else(|| AnalyticsError::MissingSurvey(s.session_id.clone()))?;
        match skill_group(survey.self_skill) {
            SkillGroup::Novice => novice.push(s),
            SkillGroup::Skilled => skilled.push(s),
        }
    }
    let ratings =
        |g: &[&Session]| g.iter().map(|s| surveys[&s.session_id].helpfulness as f64).collect::<Vec<_>>();
    let helpfulness_mww = if novice.is_empty() || skilled.is_empty() {
        None
    } else {
        Some(mww_test(&ratings(&novice), &ratings(&skilled))?)
    };
    Ok(SkillBreakdown {
        novice: group_stats(&novice, surveys),
        skilled: group_stats(&skilled, surveys),
        helpfulness_mww,
    })
}
