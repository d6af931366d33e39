//! Converters from common annotation layouts into [`AnnotatedSentence`].
//!
//! Source datasets mark creative spans in different ways. Two shapes cover
//! most of them: inline emphasis (`**span**`) and a sentence plus the phrase
//! to locate in it.

use super::{AnnotatedSentence, CorpusError};
use crate::text::char_offset;

const EMPHASIS: &str = "**";

/// Parse a sentence with `**...**` around each annotated span.
pub fn from_inline_emphasis(
    line: &str,
    source_id: &str,
    device_label: Option<&str>,
) -> Result<AnnotatedSentence, CorpusError> {
    let parts: Vec<&str> = line.split(EMPHASIS).collect();
    if parts.len().is_multiple_of(2) {
        return Err(CorpusError::InvalidRecord(format!("unbalanced {EMPHASIS} markers")));
    }
    let mut text = String::with_capacity(line.len());
    let mut spans = Vec::new();
    for (i, part) in parts.iter().enumerate() {
        if i % 2 == 1 {
            let start = text.chars().count();
            text.push_str(part);
            spans.push((start, text.chars().count()));
        } else {
            text.push_str(part);
        }
    }
    let a = AnnotatedSentence {
        text,
        spans,
        source_id: source_id.to_string(),
        device_label: device_label.map(str::to_string),
    };
    a.validate()?;
    Ok(a)
}

/// Locate each phrase in `text`, left to right, each search starting where the
/// previous phrase ended.
pub fn from_phrases(
    text: &str,
    phrases: &[&str],
    source_id: &str,
    device_label: Option<&str>,
) -> Result<AnnotatedSentence, CorpusError> {
    let mut spans = Vec::with_capacity(phrases.len());
    let mut from = 0;
    for phrase in phrases {
        let phrase = phrase.trim();
        if phrase.is_empty() {
            return Err(CorpusError::InvalidRecord("empty phrase".into()));
        }
        let at = text[from..]
            .find(phrase)
            .map(|i| from + i)
            .ok_or_else(|| CorpusError::InvalidRecord(format!("phrase {phrase:?} not found in sentence")))?;
        spans.push((char_offset(text, at), char_offset(text, at + phrase.len())));
        from = at + phrase.len();
    }
    let a = AnnotatedSentence {
        text: text.to_string(),
        spans,
        source_id: source_id.to_string(),
        device_label: device_label.map(str::to_string),
    };
    a.validate()?;
    Ok(a)
}

/// Parse a `sentence<TAB>phrase[<TAB>phrase...]` line.
pub fn from_phrase_tsv(line: &str, source_id: &str, device_label: Option<&str>) -> Result<AnnotatedSentence, CorpusError> {
    let mut fields = line.split('\t');
    let text = fields.next().unwrap_or_default();
    let phrases: Vec<&str> = fields.collect();
    from_phrases(text, &phrases, source_id, device_label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_emphasis() {
        let a = from_inline_emphasis("I **attacked** the problem as soon as I was up.", "wordnet", Some("emotion"))
            .unwrap();
        assert_eq!(a.text, "I attacked the problem as soon as I was up.");
        assert_eq!(a.span_texts(), ["attacked"]);
        assert!(from_inline_emphasis("a **b c", "x", None).is_err());
        assert!(from_inline_emphasis("no spans", "x", None).is_err());
    }

    #[test]
    fn phrase_locator() {
        let a = from_phrase_tsv(
            "The stones appeared dull, like black onyx, with no sparkle.\tlike black onyx",
            "reviews",
            None,
        )
        .unwrap();
        assert_eq!(a.span_texts(), ["like black onyx"]);
        assert!(from_phrases("abc", &["zz"], "x", None).is_err());
        let a = from_phrases("a b a b", &["a", "a"], "x", None).unwrap();
        assert_eq!(a.spans, vec![(0, 1), (4, 5)]);
    }
}
