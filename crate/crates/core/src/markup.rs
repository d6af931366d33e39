//! User-facing demarcation markup and the model-input marker format.
//!
//! Users type `[ ... ]` around text they want rewritten and a run of three or
//! more underscores where they want a blank filled. [`parse_markup`] turns that
//! into a [`DemarcatedDraft`]; [`to_model_input`] renders the draft with the
//! `<replace> ... </replace>` and `<mask>` markers the rewriting model expects.
//!
//! All span offsets are char offsets into `plain_text`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{self, char_offset, char_slice};

pub const REPLACE_OPEN: &str = "<replace>";
pub const REPLACE_CLOSE: &str = "</replace>";
pub const MASK: &str = "<mask>";

/// Minimum underscore run that counts as a blank.
pub const BLANK_MIN_UNDERSCORES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarkupError {
    #[error("draft is empty")]
    EmptyDraft,
    #[error("unbalanced bracket at char {position}")]
    UnbalancedBrackets { position: usize },
    #[error("nested bracket at char {position}")]
    NestedBrackets { position: usize },
    #[error("empty rewrite span at char {position}")]
    EmptyRewriteSpan { position: usize },
    #[error("draft contains no demarcated span or blank")]
    NoDemarcations,
    #[error("draft contains the reserved marker {marker:?}")]
    ReservedMarker { marker: String },
    #[error("malformed model input: {0}")]
    MalformedModelInput(String),
    #[error("invalid span {start}..{end}: {reason}")]
    InvalidSpan { start: usize, end: usize, reason: String },
}

impl MarkupError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            MarkupError::EmptyDraft => "EMPTY_DRAFT",
            MarkupError::UnbalancedBrackets { .. } => "UNBALANCED_BRACKETS",
            MarkupError::NestedBrackets { .. } => "NESTED_BRACKETS",
            MarkupError::EmptyRewriteSpan { .. } => "EMPTY_REWRITE_SPAN",
            MarkupError::NoDemarcations => "NO_DEMARCATIONS",
            MarkupError::ReservedMarker { .. } => "RESERVED_MARKER",
            MarkupError::MalformedModelInput(_) => "MALFORMED_MODEL_INPUT",
            MarkupError::InvalidSpan { .. } => "INVALID_SPAN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemarcationKind {
    Rewrite,
    Infill,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demarcation {
    pub kind: DemarcationKind,
    pub start: usize,
    pub end: usize,
    /// The bracketed text for rewrite spans, empty for blanks.
    pub inner: String,
}

impl Demarcation {
    pub fn rewrite(start: usize, end: usize, inner: impl Into<String>) -> Self {
        Demarcation { kind: DemarcationKind::Rewrite, start, end, inner: inner.into() }
    }

    pub fn infill(at: usize) -> Self {
        Demarcation { kind: DemarcationKind::Infill, start: at, end: at, inner: String::new() }
    }
}

/// A draft with its markup stripped and the demarcated spans recorded.
///
/// Equality ignores `raw_text`: two drafts are equal when they have the same
/// plain text and spans, however they were typed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemarcatedDraft {
    pub raw_text: String,
    pub plain_text: String,
    pub spans: Vec<Demarcation>,
}

impl PartialEq for DemarcatedDraft {
    fn eq(&self, other: &Self) -> bool {
        self.plain_text == other.plain_text && self.spans == other.spans
    }
}

impl Eq for DemarcatedDraft {}

impl DemarcatedDraft {
    /// Build a draft from plain text and spans, validating every invariant.
    /// `raw_text` is set to the canonical rendering.
    pub fn from_parts(plain_text: impl Into<String>, spans: Vec<Demarcation>) -> Result<Self, MarkupError> {
        let plain_text = plain_text.into();
        let len = plain_text.chars().count();
        let mut last_end = 0usize;
        let mut last_start = 0usize;
        for (i, s) in spans.iter().enumerate() {
            let bad = |reason: &str| MarkupError::InvalidSpan {
                start: s.start,
                end: s.end,
                reason: reason.to_string(),
            };
            if s.end > len {
                return Err(bad("out of bounds"));
            }
            match s.kind {
                DemarcationKind::Rewrite => {
                    if s.end <= s.start {
                        return Err(bad("rewrite span must be non-empty"));
                    }
                    if char_slice(&plain_text, s.start, s.end) != s.inner {
                        return Err(bad("inner text does not match plain text"));
                    }
                }
                DemarcationKind::Infill => {
                    if s.end != s.start || !s.inner.is_empty() {
                        return Err(bad("blank must be an empty insertion point"));
                    }
                }
            }
            if i > 0 && (s.start < last_end || s.start < last_start) {
                return Err(bad("spans overlap or are out of order"));
            }
            last_end = s.end;
            last_start = s.start;
        }
        let mut draft = DemarcatedDraft { raw_text: String::new(), plain_text, spans };
        draft.raw_text = draft.render();
        Ok(draft)
    }

    /// Canonical markup: `[ inner ]` for rewrite spans, `___` for blanks.
    pub fn render(&self) -> String {
        self.render_with(|s| match s.kind {
            DemarcationKind::Rewrite => format!("[ {} ]", s.inner),
            DemarcationKind::Infill => "_".repeat(BLANK_MIN_UNDERSCORES),
        })
    }

    fn render_with(&self, mut marker: impl FnMut(&Demarcation) -> String) -> String {
        let mut out = String::with_capacity(self.plain_text.len() + 16 * self.spans.len());
        let mut pos = 0usize;
        for s in &self.spans {
            out.push_str(char_slice(&self.plain_text, pos, s.start));
            out.push_str(&marker(s));
            pos = s.end;
        }
        out.push_str(char_slice(&self.plain_text, pos, usize::MAX));
        out
    }

    pub fn count(&self, kind: DemarcationKind) -> usize {
        self.spans.iter().filter(|s| s.kind == kind).count()
    }
}

/// Parse user markup.
pub fn parse_markup(raw: &str) -> Result<DemarcatedDraft, MarkupError> {
    if raw.is_empty() {
        return Err(MarkupError::EmptyDraft);
    }
    let chars: Vec<char> = raw.chars().collect();
    let mut plain = String::with_capacity(raw.len());
    let mut plain_len = 0usize;
    let mut spans = Vec::new();
    // (char position of '[', accumulated inner text)
    let mut open: Option<(usize, String)> = None;

    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '[' => {
                if open.is_some() {
                    return Err(MarkupError::NestedBrackets { position: i });
                }
                open = Some((i, String::new()));
            }
            ']' => {
                let Some((at, inner)) = open.take() else {
                    return Err(MarkupError::UnbalancedBrackets { position: i });
                };
                let inner = inner.trim();
                if inner.is_empty() {
                    return Err(MarkupError::EmptyRewriteSpan { position: at });
                }
                let start = plain_len;
                plain.push_str(inner);
                plain_len += inner.chars().count();
                spans.push(Demarcation::rewrite(start, plain_len, inner));
            }
            '_' if open.is_none() => {
                let run = chars[i..].iter().take_while(|&&ch| ch == '_').count();
                if run >= BLANK_MIN_UNDERSCORES {
                    spans.push(Demarcation::infill(plain_len));
                } else {
                    plain.extend(std::iter::repeat_n('_', run));
                    plain_len += run;
                }
                i += run;
                continue;
            }
            _ => match open.as_mut() {
                Some((_, inner)) => inner.push(c),
                None => {
                    plain.push(c);
                    plain_len += 1;
                }
            },
        }
        i += 1;
    }
    if let Some((at, _)) = open {
        return Err(MarkupError::UnbalancedBrackets { position: at });
    }
    for marker in [REPLACE_OPEN, REPLACE_CLOSE, MASK] {
        if plain.contains(marker) {
            return Err(MarkupError::ReservedMarker { marker: marker.to_string() });
        }
    }
    Ok(DemarcatedDraft { raw_text: raw.to_string(), plain_text: plain, spans })
}

/// How demarcations are rendered for a backend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelInputStyle {
    /// Rewrite spans get `<replace>` markers, blanks get `<mask>`.
    #[default]
    Markers,
    /// Every demarcation becomes `<mask>`, for plain infilling models.
    MaskAll,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInput {
    pub text: String,
    pub origin: DemarcatedDraft,
}

/// One piece of a marker-bearing model input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSegment {
    Text(String),
    Replace(String),
    Mask,
}

pub fn to_model_input(draft: &DemarcatedDraft) -> Result<ModelInput, MarkupError> {
    to_model_input_with(draft, ModelInputStyle::Markers)
}

pub fn to_model_input_with(draft: &DemarcatedDraft, style: ModelInputStyle) -> Result<ModelInput, MarkupError> {
    if draft.spans.is_empty() {
        return Err(MarkupError::NoDemarcations);
    }
    let text = draft.render_with(|s| match (style, s.kind) {
        (ModelInputStyle::Markers, DemarcationKind::Rewrite) => {
            format!("{REPLACE_OPEN} {} {REPLACE_CLOSE}", s.inner)
        }
        _ => MASK.to_string(),
    });
    Ok(ModelInput { text, origin: draft.clone() })
}

impl ModelInput {
    pub fn segments(&self) -> Result<Vec<InputSegment>, MarkupError> {
        parse_model_text(&self.text)
    }
}

/// Split marker text into literal pieces, replace regions and masks.
/// Markers must be balanced and at least one must be present.
pub fn parse_model_text(text: &str) -> Result<Vec<InputSegment>, MarkupError> {
    let malformed = |m: &str| MarkupError::MalformedModelInput(m.to_string());
    let mut out = Vec::new();
    let mut rest = text;
    let mut markers = 0;
    loop {
        let next_open = rest.find(REPLACE_OPEN);
        let next_mask = rest.find(MASK);
        let next_close = rest.find(REPLACE_CLOSE);
        let first = [next_open, next_mask].into_iter().flatten().min();
        if let Some(c) = next_close {
            if first.is_none_or(|f| c < f) {
                return Err(malformed("closing marker without opener"));
            }
        }
        let Some(at) = first else {
            if !rest.is_empty() {
                out.push(InputSegment::Text(rest.to_string()));
            }
            break;
        };
        if at > 0 {
            out.push(InputSegment::Text(rest[..at].to_string()));
        }
        markers += 1;
        if Some(at) == next_mask {
            out.push(InputSegment::Mask);
            rest = &rest[at + MASK.len()..];
        } else {
            let body = &rest[at + REPLACE_OPEN.len()..];
            let close = body.find(REPLACE_CLOSE).ok_or_else(|| malformed("unclosed <replace>"))?;
            let inner = &body[..close];
            if inner.contains(REPLACE_OPEN) || inner.contains(MASK) {
                return Err(malformed("nested marker inside <replace>"));
            }
            let inner = inner.trim();
            if inner.is_empty() {
                return Err(malformed("empty <replace> region"));
            }
            out.push(InputSegment::Replace(inner.to_string()));
            rest = &body[close + REPLACE_CLOSE.len()..];
        }
    }
    if markers == 0 {
        return Err(malformed("no marker present"));
    }
    Ok(out)
}

/// One differing region between a source text and a suggestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffSegment {
    pub source_range: (usize, usize),
    pub target_range: (usize, usize),
    pub source_text: String,
    pub target_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RevisionDiff {
    pub segments: Vec<DiffSegment>,
    /// Characters of target-only text, surrounding whitespace excluded.
    pub chars_introduced: usize,
}

impl RevisionDiff {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Apply the diff to `source`, yielding the target text.
    pub fn apply(&self, source: &str) -> String {
        let mut out = String::with_capacity(source.len());
        let mut pos = 0;
        for seg in &self.segments {
            out.push_str(char_slice(source, pos, seg.source_range.0));
            out.push_str(&seg.target_text);
            pos = seg.source_range.1;
        }
        out.push_str(char_slice(source, pos, usize::MAX));
        out
    }

    /// Map a source char range onto the target. Segments straddling either
    /// boundary, and insertions touching it, are pulled into the range.
    pub fn map_range(&self, start: usize, end: usize) -> (usize, usize) {
        let len = |r: (usize, usize)| r.1 as i64 - r.0 as i64;
        let mut delta = 0i64;
        let mut t_start = None;
        for seg in &self.segments {
            let (a, b) = seg.source_range;
            let empty = a == b;
            if b < start || (b == start && !empty) {
                delta += len(seg.target_range) - len(seg.source_range);
            } else if a < start || (empty && a == start) {
                t_start = Some(seg.target_range.0);
                break;
            } else {
                break;
            }
        }
        let t_start = t_start.unwrap_or((start as i64 + delta) as usize);

        let mut delta = 0i64;
        let mut t_end = None;
        for seg in &self.segments {
            let (a, b) = seg.source_range;
            let empty = a == b;
            if a < end || (empty && a == end) {
                if b > end {
                    t_end = Some(seg.target_range.1);
                    break;
                }
                delta += len(seg.target_range) - len(seg.source_range);
            } else {
                break;
            }
        }
        let t_end = t_end.unwrap_or((end as i64 + delta) as usize);
        (t_start, t_end.max(t_start))
    }
}

/// Token-level diff of `source_plain` against `suggestion`.
///
/// Tokens are aligned by a longest common subsequence over canonical tokens.
/// Everything between aligned tokens that differs (or an aligned token whose
/// surface form differs) becomes a segment; segments drop whitespace shared
/// at both ends. Applying the segments to the source reproduces the
/// suggestion exactly.
pub fn extract_revision(source_plain: &str, suggestion: &str) -> RevisionDiff {
    if source_plain == suggestion {
        return RevisionDiff::default();
    }
    let st = text::tokenize_with_offsets(source_plain);
    let tt = text::tokenize_with_offsets(suggestion);
    let sk: Vec<&str> = st.iter().map(|t| t.text.as_str()).collect();
    let tk: Vec<&str> = tt.iter().map(|t| t.text.as_str()).collect();
    let pairs = text::lcs_alignment(&sk, &tk);

    // alternating gap / anchor pieces, as byte ranges (s0, s1, t0, t1)
    let mut pieces = Vec::with_capacity(pairs.len() * 2 + 1);
    let (mut sp, mut tp) = (0usize, 0usize);
    for &(i, j) in &pairs {
        pieces.push((sp, st[i].start, tp, tt[j].start));
        pieces.push((st[i].start, st[i].end, tt[j].start, tt[j].end));
        sp = st[i].end;
        tp = tt[j].end;
    }
    pieces.push((sp, source_plain.len(), tp, suggestion.len()));

    let mut diff = RevisionDiff::default();
    let mut current: Option<(usize, usize, usize, usize)> = None;
    for p in pieces {
        if source_plain[p.0..p.1] == suggestion[p.2..p.3] {
            if let Some(region) = current.take() {
                push_segment(&mut diff, source_plain, suggestion, region);
            }
        } else {
            current = Some(match current {
                Some((s0, _, t0, _)) => (s0, p.1, t0, p.3),
                None => p,
            });
        }
    }
    if let Some(region) = current {
        push_segment(&mut diff, source_plain, suggestion, region);
    }
    diff
}

fn push_segment(diff: &mut RevisionDiff, source: &str, target: &str, region: (usize, usize, usize, usize)) {
    let (mut s0, mut s1, mut t0, mut t1) = region;
    // drop whitespace common to both ends
    while s0 < s1 && t0 < t1 {
        let (a, b) = (source[s0..].chars().next().unwrap(), target[t0..].chars().next().unwrap());
        if a == b && a.is_whitespace() {
            s0 += a.len_utf8();
            t0 += b.len_utf8();
        } else {
            break;
        }
    }
    while s0 < s1 && t0 < t1 {
        let (a, b) = (source[..s1].chars().next_back().unwrap(), target[..t1].chars().next_back().unwrap());
        if a == b && a.is_whitespace() {
            s1 -= a.len_utf8();
            t1 -= b.len_utf8();
        } else {
            break;
        }
    }
    let target_text = &target[t0..t1];
    diff.chars_introduced += target_text.trim().chars().count();
    diff.segments.push(DiffSegment {
        source_range: (char_offset(source, s0), char_offset(source, s1)),
        target_range: (char_offset(target, t0), char_offset(target, t1)),
        source_text: source[s0..s1].to_string(),
        target_text: target_text.to_string(),
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rewrite_span() {
        let d = parse_markup("A child stands tall in a [ wave ] on the beach.").unwrap();
        assert_eq!(d.plain_text, "A child stands tall in a wave on the beach.");
        assert_eq!(d.spans, vec![Demarcation::rewrite(25, 29, "wave")]);
    }

    #[test]
    fn parses_blank() {
        let d = parse_markup("The dark clouds ___ as the sun sets for the day.").unwrap();
        assert_eq!(d.plain_text, "The dark clouds  as the sun sets for the day.");
        assert_eq!(d.spans, vec![Demarcation::infill(16)]);
    }

    #[test]
    fn no_markers_is_identity() {
        let d = parse_markup("no markers here").unwrap();
        assert_eq!(d.plain_text, "no markers here");
        assert!(d.spans.is_empty());
    }

    #[test]
    fn short_underscore_runs_are_text() {
        let d = parse_markup("snake_case and a__b").unwrap();
        assert_eq!(d.plain_text, "snake_case and a__b");
        assert!(d.spans.is_empty());
        let d = parse_markup("x_____y").unwrap();
        assert_eq!(d.plain_text, "xy");
        assert_eq!(d.spans, vec![Demarcation::infill(1)]);
    }

    #[test]
    fn error_classes() {
        assert_eq!(parse_markup("a [ b [ c ] ]"), Err(MarkupError::NestedBrackets { position: 6 }));
        assert_eq!(parse_markup("a ] b"), Err(MarkupError::UnbalancedBrackets { position: 2 }));
        assert_eq!(parse_markup("a [ b"), Err(MarkupError::UnbalancedBrackets { position: 2 }));
        assert_eq!(parse_markup("a [  ] b"), Err(MarkupError::EmptyRewriteSpan { position: 2 }));
        assert_eq!(parse_markup(""), Err(MarkupError::EmptyDraft));
        assert_eq!(parse_markup("say <mask> [ it ]").unwrap_err().code(), "RESERVED_MARKER");
    }

    #[test]
    fn model_input_rendering() {
        let d = parse_markup("A child stands tall in a [ wave ] on the beach.").unwrap();
        assert_eq!(
            to_model_input(&d).unwrap().text,
            "A child stands tall in a <replace> wave </replace> on the beach."
        );
        let d = parse_markup("The dark clouds ___ as the sun sets for the day.").unwrap();
        assert_eq!(to_model_input(&d).unwrap().text, "The dark clouds <mask> as the sun sets for the day.");
        let d = parse_markup("nothing to do").unwrap();
        assert_eq!(to_model_input(&d), Err(MarkupError::NoDemarcations));
    }

    #[test]
    fn mask_all_style() {
        let d = parse_markup("The [ great piece of technology ] and ___ here").unwrap();
        let mi = to_model_input_with(&d, ModelInputStyle::MaskAll).unwrap();
        assert_eq!(mi.text, "The <mask> and <mask> here");
    }

    #[test]
    fn model_text_segments() {
        let segs = parse_model_text("a <replace> wave </replace> b <mask>.").unwrap();
        assert_eq!(
            segs,
            vec![
                InputSegment::Text("a ".into()),
                InputSegment::Replace("wave".into()),
                InputSegment::Text(" b ".into()),
                InputSegment::Mask,
                InputSegment::Text(".".into()),
            ]
        );
        assert!(parse_model_text("plain").is_err());
        assert!(parse_model_text("a </replace> b").is_err());
        assert!(parse_model_text("a <replace> b").is_err());
        assert!(parse_model_text("a <replace> <mask> </replace>").is_err());
    }

    #[test]
    fn from_parts_validates() {
        assert!(DemarcatedDraft::from_parts("abc", vec![Demarcation::rewrite(0, 2, "ab")]).is_ok());
        assert!(DemarcatedDraft::from_parts("abc", vec![Demarcation::rewrite(0, 2, "xx")]).is_err());
        assert!(DemarcatedDraft::from_parts("abc", vec![Demarcation::rewrite(2, 5, "c")]).is_err());
        assert!(DemarcatedDraft::from_parts(
            "abc",
            vec![Demarcation::rewrite(0, 2, "ab"), Demarcation::rewrite(1, 3, "bc")]
        )
        .is_err());
        let d = DemarcatedDraft::from_parts("ab", vec![Demarcation::infill(1)]).unwrap();
        assert_eq!(d.raw_text, "a___b");
    }

    #[test]
    fn revision_single_replacement() {
        let src = "A child stands tall in a wave on the beach.";
        let tgt = "A child stands tall in a motorized scooter on the beach.";
        let diff = extract_revision(src, tgt);
        assert_eq!(diff.segments.len(), 1);
        let seg = &diff.segments[0];
        assert_eq!(seg.source_text, "wave");
        assert_eq!(seg.target_text, "motorized scooter");
        assert_eq!(seg.source_range, (25, 29));
        assert_eq!(diff.chars_introduced, "motorized scooter".len());
        assert_eq!(diff.apply(src), tgt);
    }

    #[test]
    fn revision_identity() {
        let d = extract_revision("same text", "same text");
        assert!(d.is_empty());
        assert_eq!(d.chars_introduced, 0);
    }

    #[test]
    fn revision_replacement_and_append() {
        let src = "the quick brown fox";
        let tgt = "the slow brown fox ran";
        let diff = extract_revision(src, tgt);
        let texts: Vec<_> = diff
            .segments
            .iter()
            .map(|s| (s.source_text.trim(), s.target_text.trim()))
            .collect();
        assert_eq!(texts, [("quick", "slow"), ("", "ran")]);
        assert_eq!(diff.apply(src), tgt);
    }

    #[test]
    fn revision_catches_case_and_punctuation() {
        let src = "The beach.";
        let tgt = "the beach!";
        let diff = extract_revision(src, tgt);
        assert_eq!(diff.apply(src), tgt);
        assert_eq!(diff.segments.len(), 2);
    }

    #[test]
    fn map_range_follows_replacement() {
        let src = "The iPhone was a great piece of technology that changed the world";
        let tgt = "The iPhone was a revolution in technology that changed the world";
        let diff = extract_revision(src, tgt);
        let (a, b) = diff.map_range(17, 42);
        assert_eq!(char_slice(tgt, a, b), "revolution in technology");
        // outside the edit the mapping is a shift
        let (a, b) = diff.map_range(43, 47);
        assert_eq!(char_slice(tgt, a, b), "that");
    }

    #[test]
    fn map_range_for_blank() {
        let src = "The dark clouds  as the sun sets.";
        let tgt = "The dark clouds slowly disperse as the sun sets.";
        let diff = extract_revision(src, tgt);
        let (a, b) = diff.map_range(16, 16);
        assert_eq!(char_slice(tgt, a, b).trim(), "slowly disperse");
    }
}
