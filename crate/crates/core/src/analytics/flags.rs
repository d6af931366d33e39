//! Heuristic error flags for a suggestion against the draft it came from.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::markup::{extract_revision, DemarcatedDraft, DemarcationKind};
use crate::text::{char_slice, content_tokens};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// The suggestion repeats the draft unchanged.
    VerbatimCopy,
    /// Some edit touches none of the demarcated spans.
    OutOfRegionEdit,
    /// A rewritten span shares no content word with what it replaced.
    PossibleDrift,
}

pub fn flag_suggestion(draft: &DemarcatedDraft, suggestion: &str) -> BTreeSet<Flag> {
    let mut flags = BTreeSet::new();
    if suggestion == draft.plain_text {
        flags.insert(Flag::VerbatimCopy);
        return flags;
    }
    let diff = extract_revision(&draft.plain_text, suggestion);
    // Spans reach over adjacent whitespace, since insertions carry their own.
    let chars: Vec<char> = draft.plain_text.chars().collect();
    let reach: Vec<(usize, usize)> = draft
        .spans
        .iter()
        .map(|d| {
            let mut lo = d.start;
            while lo > 0 && chars[lo - 1].is_whitespace() {
                lo -= 1;
            }
            let mut hi = d.end;
            while hi < chars.len() && chars[hi].is_whitespace() {
                hi += 1;
            }
            (lo, hi)
        })
        .collect();
    let touches = |(s, e): (usize, usize)| reach.iter().any(|&(lo, hi)| s <= hi && e >= lo);
    if diff.segments.iter().any(|seg| !touches(seg.source_range)) {
        flags.insert(Flag::OutOfRegionEdit);
    }
    for span in draft.spans.iter().filter(|d| d.kind == DemarcationKind::Rewrite) {
        let (a, b) = diff.map_range(span.start, span.end);
        let replacement = char_slice(suggestion, a, b);
        if replacement.trim() == span.inner {
            continue;
        }
        let before = content_tokens(&span.inner);
        let after = content_tokens(replacement);
        if !before.is_empty() && !after.is_empty() && !after.iter().any(|t| before.contains(t)) {
            flags.insert(Flag::PossibleDrift);
        }
    }
    flags
}
