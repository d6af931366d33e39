//! Third-party pairwise caption votes.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub image_id: String,
    pub caption_a_id: String,
    pub caption_b_id: String,
    pub votes: Vec<Side>,
    /// Writing condition of caption A, e.g. "human_only".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_b: Option<String>,
}

impl VoteRecord {
    pub fn winner(&self) -> Option<Side> {
        if self.votes.len() != 3 {
            return None;
        }
        let a = self.votes.iter().filter(|v| **v == Side::A).count();
        Some(if a >= 2 { Side::A } else { Side::B })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub condition_a: String,
    pub condition_b: String,
    pub records: usize,
    pub a_wins: usize,
    pub b_wins: usize,
}

/// Majority winner per record, tallied per (condition A, condition B) pair.
/// Records without conditions are tallied under "A" and "B".
pub fn majority_vote(records: &[VoteRecord]) -> Result<Vec<VoteTally>, AnalyticsError> {
    let mut tallies: BTreeMap<(String, String), VoteTally> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let winner = r.winner().ok_or_else(|| AnalyticsError::MalformedRecord {
            line: i + 1,
            reason: format!("expected 3 votes, found {}", r.votes.len()),
        })?;
        let ca = r.condition_a.clone().unwrap_or_else(|| "A".into());
        let cb = r.condition_b.clone().unwrap_or_else(|| "B".into());
        let t = tallies.entry((ca.clone(), cb.clone())).or_insert(VoteTally {
            condition_a: ca,
            condition_b: cb,
            records: 0,
            a_wins: 0,
            b_wins: 0,
        });
        t.records += 1;
        match winner {
            Side::A => t.a_wins += 1,
            Side::B => t.b_wins += 1,
        }
    }
    Ok(tallies.into_values().collect())
}

/// Read a JSONL vote file. Records must parse and carry exactly three votes.
pub fn read_votes(path: &Path) -> Result<Vec<VoteRecord>, AnalyticsError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: VoteRecord = serde_json::from_str(&line)
            .map_err(|e| AnalyticsError::MalformedRecord { line: i + 1, reason: e.to_string() })?;
        if rec.votes.len() != 3 {
            return Err(AnalyticsError::MalformedRecord {
                line: i + 1,
                reason: format!("expected 3 votes, found {}", rec.votes.len()),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(votes: &[Side]) -> VoteRecord {
        VoteRecord {
            image_id: "img".into(),
            caption_a_id: "a".into(),
            caption_b_id: "b".into(),
            votes: votes.to_vec(),
            condition_a: None,
            condition_b: None,
        }
    }

    #[test]
    fn majority() {
        assert_eq!(rec(&[Side::A, Side::A, Side::B]).winner(), Some(Side::A));
        assert_eq!(rec(&[Side::B, Side::A, Side::B]).winner(), Some(Side::B));
        assert!(majority_vote(&[rec(&[Side::A, Side::B])]).is_err());
    }

    #[test]
    fn tally_43_57() {
        let mut records = vec![rec(&[Side::A, Side::A, Side::B]); 43];
        records.extend(vec![rec(&[Side::B, Side::B, Side::A]); 57]);
        let t = majority_vote(&records).unwrap();
        assert_eq!((t[0].a_wins, t[0].b_wins), (43, 57));
    }
}
