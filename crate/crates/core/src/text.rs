//! Canonical tokenization shared by diffs, drift checks and every metric.
//!
//! A token is a whitespace-delimited word, lowercased, with leading and
//! trailing non-alphanumeric characters removed. Words that are pure
//! punctuation produce no token. Offsets always refer to the stripped core
//! of the word inside the original string (byte offsets).

use std::collections::HashSet;
use std::sync::OnceLock;

/// A canonical token together with the byte range of its core in the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Tokenize with byte offsets.
pub fn tokenize_with_offsets(s: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in s.char_indices() {
        if c.is_whitespace() {
            if let Some(ws) = word_start.take() {
                push_word(s, ws, i, &mut out);
            }
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    if let Some(ws) = word_start {
        push_word(s, ws, s.len(), &mut out);
    }
    out
}

fn push_word(s: &str, start: usize, end: usize, out: &mut Vec<Token>) {
    let word = &s[start..end];
    let lead = word
        .char_indices()
        .find(|(_, c)| c.is_alphanumeric())
        .map(|(i, _)| i);
    let Some(lead) = lead else { return };
    let trail = word
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_alphanumeric())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(word.len());
    out.push(Token {
        text: word[lead..trail].to_lowercase(),
        start: start + lead,
        end: start + trail,
    });
}

/// Tokenize, keeping only the normalized strings.
pub fn tokenize(s: &str) -> Vec<String> {
    tokenize_with_offsets(s).into_iter().map(|t| t.text).collect()
}

const STOPWORDS_TXT: &str = include_str!("../data/stopwords.txt");

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_TXT
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// A content token is a non-stop-word token of at least two characters.
pub fn is_content_token(token: &str) -> bool {
    token.chars().count() >= 2 && !is_stopword(token)
}

/// Distinct content tokens of `s`, in first-occurrence order.
pub fn content_tokens(s: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    tokenize(s)
        .into_iter()
        .filter(|t| is_content_token(t))
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

/// Length of the longest common subsequence, two-row dynamic program.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Index pairs of one longest common subsequence. Ties prefer the earliest
/// match in both sequences, so the alignment is deterministic.
pub fn lcs_alignment<T: PartialEq>(a: &[T], b: &[T]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    // suffix table: table[i][j] = LCS of a[i..], b[j..]
    let mut table = vec![0u32; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[idx(i, j)] = if a[i] == b[j] {
                table[idx(i + 1, j + 1)] + 1
            } else {
                table[idx(i + 1, j)].max(table[idx(i, j + 1)])
            };
        }
    }
    let mut pairs = Vec::with_capacity(table[0] as usize);
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i] == b[j] && table[idx(i, j)] == table[idx(i + 1, j + 1)] + 1 {
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if table[idx(i + 1, j)] >= table[idx(i, j + 1)] {
            i += 1;
        } else {
            j += 1;
        }
    }
    pairs
}

/// Convert a byte offset into a char offset.
pub(crate) fn char_offset(s: &str, byte: usize) -> usize {
    s[..byte].chars().count()
}

/// Convert a char offset into a byte offset; offsets past the end clamp to `s.len()`.
pub(crate) fn byte_offset(s: &str, chars: usize) -> usize {
    s.char_indices().nth(chars).map(|(i, _)| i).unwrap_or(s.len())
}

/// Substring by char range.
pub(crate) fn char_slice(s: &str, start: usize, end: usize) -> &str {
    let b0 = byte_offset(s, start);
    let b1 = byte_offset(s, end);
    &s[b0..b1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_punctuation_and_lowercases() {
        let toks = tokenize_with_offsets("The  beach. \"Wave\"— mother's");
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["the", "beach", "wave", "mother's"]);
        assert_eq!(&"The  beach. \"Wave\"— mother's"[toks[2].start..toks[2].end], "Wave");
    }

    #[test]
    fn punctuation_only_words_vanish() {
        assert_eq!(tokenize("a -- b ..."), ["a", "b"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn lcs_basics() {
        let a = tokenize("the quick brown fox");
        let b = tokenize("the brown fox jumps");
        assert_eq!(lcs_len(&a, &b), 3);
        assert_eq!(lcs_alignment(&a, &b), [(0, 0), (2, 1), (3, 2)]);
        assert_eq!(lcs_len::<String>(&[], &b), 0);
    }

    #[test]
    fn content_tokens_skip_stopwords() {
        assert_eq!(content_tokens("a revolution in technology"), ["revolution", "technology"]);
        assert!(is_content_token("scooter"));
        assert!(!is_content_token("the"));
        assert!(!is_content_token("x"));
    }

    #[test]
    fn char_helpers() {
        let s = "héllo wörld";
        assert_eq!(char_slice(s, 6, 11), "wörld");
        assert_eq!(char_offset(s, byte_offset(s, 7)), 7);
    }
}
