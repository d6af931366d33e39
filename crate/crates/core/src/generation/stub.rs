//! Deterministic lexicon-driven backend used for tests, demos and corpus
//! synthesis when no model server is available.
//!
//! Lexicon lines are `headword<TAB>replacement`. Besides plain headwords
//! (single words or phrases) a few key shapes drive blank filling:
//!
//! - `after:w1 w2` / `after:w`: fills for a blank following those words
//! - `before:w`: fills for a blank preceding `w`
//! - `*blank*`: generic fills for any blank
//! - `*rewrite*`: templates for spans with no entry, `{}` stands for the span

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use super::{fnv1a, splitmix64, Candidate, GenerationBackend, GenerationError};
use crate::markup::{InputSegment, ModelInput};
use crate::text;

const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.tsv");

const MAX_OPTIONS_PER_SLOT: usize = 12;
const MAX_COMBINATIONS: usize = 512;
const JITTER: f64 = 0.9;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    entries: HashMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn parse(src: &str) -> Result<Self, GenerationError> {
        let mut entries: HashMap<String, Vec<String>> = HashMap::new();
        for (n, line) in src.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((head, repl)) = line.split_once('\t') else {
                return Err(GenerationError::InvalidConfig(format!("lexicon line {}: missing tab", n + 1)));
            };
            let (head, repl) = (normalize_key(head), repl.trim());
            if head.is_empty() || repl.is_empty() {
                return Err(GenerationError::InvalidConfig(format!("lexicon line {}: empty field", n + 1)));
            }
            let list = entries.entry(head).or_default();
            if !list.iter().any(|r| r == repl) {
                list.push(repl.to_string());
            }
        }
        Ok(Lexicon { entries })
    }

    pub fn load(path: &Path) -> Result<Self, GenerationError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| GenerationError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::parse(&src)
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> Arc<Lexicon> {
        static LEX: OnceLock<Arc<Lexicon>> = OnceLock::new();
        LEX.get_or_init(|| Arc::new(Lexicon::parse(BUNDLED_LEXICON).expect("bundled lexicon parses")))
            .clone()
    }

    pub fn get(&self, key: &str) -> &[String] {
        self.entries.get(&normalize_key(key)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn normalize_key(key: &str) -> String {
    let key = key.trim();
    if key.starts_with('*') {
        return key.to_string();
    }
    for prefix in ["after:", "before:"] {
        if let Some(rest) = key.strip_prefix(prefix) {
            return format!("{prefix}{}", text::tokenize(rest).join(" "));
        }
    }
    text::tokenize(key).join(" ")
}

#[derive(Debug, Clone)]
pub struct StubBackend {
    id: String,
    seed: u64,
    lexicon: Arc<Lexicon>,
}

impl StubBackend {
    pub fn new(id: impl Into<String>, seed: u64) -> Self {
        Self::with_lexicon(id, seed, Lexicon::bundled())
    }

    pub fn with_lexicon(id: impl Into<String>, seed: u64, lexicon: Arc<Lexicon>) -> Self {
        StubBackend { id: id.into(), seed, lexicon }
    }
}

impl GenerationBackend for StubBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn candidates(&self, input: &ModelInput, max_candidates: usize) -> Result<Vec<Candidate>, GenerationError> {
        let mut out = generate(&self.lexicon, input, self.seed)?;
        out.truncate(max_candidates);
        Ok(out)
    }
}

/// All stub candidates for `input` under the bundled lexicon, best first.
pub fn stub_suggest(input: &ModelInput, seed: u64) -> Result<Vec<Candidate>, GenerationError> {
    generate(&Lexicon::bundled(), input, seed)
}

fn generate(lex: &Lexicon, input: &ModelInput, seed: u64) -> Result<Vec<Candidate>, GenerationError> {
    let segments = input.segments()?;

    // per marker slot: options as (text, tier)
    let mut slots: Vec<Vec<(String, u32)>> = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        let before = match i.checked_sub(1).map(|j| &segments[j]) {
            Some(InputSegment::Text(t)) => t.as_str(),
            _ => "",
        };
        let after = match segments.get(i + 1) {
            Some(InputSegment::Text(t)) => t.as_str(),
            _ => "",
        };
        let opts = match seg {
            InputSegment::Text(_) => continue,
            InputSegment::Replace(inner) => replace_options(lex, inner),
            InputSegment::Mask => mask_options(lex, before, after),
        };
        if opts.is_empty() {
            return Ok(Vec::new());
        }
        slots.push(opts);
    }

    let plain: String = segments
        .iter()
        .map(|s| match s {
            InputSegment::Text(t) | InputSegment::Replace(t) => t.as_str(),
            InputSegment::Mask => "",
        })
        .collect();

    let mut out: Vec<Candidate> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut odometer = vec![0usize; slots.len()];
    for _ in 0..MAX_COMBINATIONS {
        let mut text = String::new();
        let mut tiers = 0u32;
        let mut slot = 0;
        for seg in &segments {
            match seg {
                InputSegment::Text(t) => text.push_str(t),
                _ => {
                    let (opt, tier) = &slots[slot][odometer[slot]];
                    text.push_str(opt);
                    tiers += tier;
                    slot += 1;
                }
            }
        }
        if text != plain && seen.insert(text.clone()) {
            let score = -f64::from(tiers) - JITTER * unit_hash(seed, &text);
            out.push(Candidate { text, score });
        }
        if !advance(&mut odometer, &slots) {
            break;
        }
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.text.cmp(&b.text)));
    Ok(out)
}

fn advance(odometer: &mut [usize], slots: &[Vec<(String, u32)>]) -> bool {
    for i in (0..odometer.len()).rev() {
        odometer[i] += 1;
        if odometer[i] < slots[i].len() {
            return true;
        }
        odometer[i] = 0;
    }
    false
}

fn unit_hash(seed: u64, text: &str) -> f64 {
    (splitmix64(seed ^ fnv1a(text.as_bytes())) >> 11) as f64 / (1u64 << 53) as f64
}

fn replace_options(lex: &Lexicon, inner: &str) -> Vec<(String, u32)> {
    let mut opts = Vec::new();
    for r in lex.get(inner) {
        opts.push((r.clone(), 0));
    }
    for tok in text::tokenize_with_offsets(inner) {
        if !text::is_content_token(&tok.text) {
            continue;
        }
        let surface = &inner[tok.start..tok.end];
        for r in lex.get(&tok.text) {
            let r = match_case(surface, r);
            opts.push((format!("{}{}{}", &inner[..tok.start], r, &inner[tok.end..]), 1));
        }
    }
    for t in lex.get("*rewrite*") {
        opts.push((t.replace("{}", inner), 2));
    }
    let leading_upper = inner.chars().next().is_some_and(char::is_uppercase);
    finish(opts, inner, leading_upper)
}

fn mask_options(lex: &Lexicon, before: &str, after: &str) -> Vec<(String, u32)> {
    let prev = text::tokenize(before);
    let next = text::tokenize(after);
    let mut opts = Vec::new();
    if prev.len() >= 2 {
        let key = format!("after:{} {}", prev[prev.len() - 2], prev[prev.len() - 1]);
        opts.extend(lex.get(&key).iter().map(|r| (r.clone(), 0)));
    }
    if let Some(p) = prev.last() {
        opts.extend(lex.get(&format!("after:{p}")).iter().map(|r| (r.clone(), 1)));
    }
    if let Some(n) = next.first() {
        opts.extend(lex.get(&format!("before:{n}")).iter().map(|r| (r.clone(), 2)));
    }
    opts.extend(lex.get("*blank*").iter().map(|r| (r.clone(), 3)));
    let trimmed = before.trim_end();
    let sentence_start = trimmed.is_empty() || trimmed.ends_with(['.', '!', '?']);
    finish(opts, "", sentence_start)
}

/// Drop options equal to the original span, dedup keeping the best tier, cap.
fn finish(opts: Vec<(String, u32)>, original: &str, capitalize: bool) -> Vec<(String, u32)> {
    let mut out: Vec<(String, u32)> = Vec::new();
    for (o, tier) in opts {
        let o = if capitalize { capitalize_first(&o) } else { o };
        if o.trim().is_empty() || o.eq_ignore_ascii_case(original) || out.iter().any(|(x, _)| *x == o) {
            continue;
        }
        out.push((o, tier));
        if out.len() == MAX_OPTIONS_PER_SLOT {
            break;
        }
    }
    out
}

fn match_case(surface: &str, replacement: &str) -> String {
    if surface.chars().next().is_some_and(char::is_uppercase) {
        capitalize_first(replacement)
    } else {
        replacement.to_string()
    }
}

fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_lowercase() => c.to_uppercase().chain(chars).collect(),
        _ => s.to_string(),
    }
}
