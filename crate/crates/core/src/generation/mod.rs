//! Candidate generation and top-k suggestion sampling.
//!
//! Backends return scored full-sentence candidates; [`request_suggestions`]
//! merges duplicates, keeps the `k` best, and draws `n_display` distinct
//! suggestions without replacement from a softmax over the kept scores.

mod http;
mod stub;

pub use http::HttpBackend;
pub use stub::{stub_suggest, Lexicon, StubBackend};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markup::{MarkupError, ModelInput};

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend returned no candidates")]
    NoCandidates,
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    InvalidInput(#[from] MarkupError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub k: usize,
    pub n_display: usize,
    pub seed: u64,
    pub temperature: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig { k: 10, n_display: 3, seed: 0, temperature: 1.0 }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.k == 0 {
            return Err(GenerationError::InvalidConfig("k must be at least 1".into()));
        }
        if self.n_display == 0 || self.n_display > self.k {
            return Err(GenerationError::InvalidConfig(format!(
                "n_display must be in 1..={} (got {})",
                self.k, self.n_display
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(GenerationError::InvalidConfig("temperature must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub score: f64,
}

impl Candidate {
    pub fn new(text: impl Into<String>, score: f64) -> Self {
        Candidate { text: text.into(), score }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionSet {
    pub request_id: String,
    pub model_input: ModelInput,
    pub suggestions: Vec<String>,
    pub backend_id: String,
    pub config: GenerationConfig,
}

pub trait GenerationBackend: Send + Sync {
    fn id(&self) -> &str;
    fn candidates(&self, input: &ModelInput, max_candidates: usize) -> Result<Vec<Candidate>, GenerationError>;
}

/// Ask `backend` for candidates and sample the suggestions to show.
pub fn request_suggestions(
    input: &ModelInput,
    cfg: &GenerationConfig,
    backend: &dyn GenerationBackend,
    request_id: &str,
) -> Result<SuggestionSet, GenerationError> {
    cfg.validate()?;
    let pool = backend.candidates(input, cfg.k * 2)?;
    let seed = mix_seed(cfg.seed, request_id);
    let suggestions = sample_top_k(&pool, cfg, seed)?;
    Ok(SuggestionSet {
        request_id: request_id.to_string(),
        model_input: input.clone(),
        suggestions,
        backend_id: backend.id().to_string(),
        config: *cfg,
    })
}

/// Keep the `k` best distinct candidates and draw up to `n_display` of them
/// without replacement, with probability proportional to `exp(score / T)`.
pub fn sample_top_k(pool: &[Candidate], cfg: &GenerationConfig, seed: u64) -> Result<Vec<String>, GenerationError> {
    let mut top = top_k(pool, cfg.k)?;
    let max = top.iter().map(|c| c.score).fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = top.iter().map(|c| ((c.score - max) / cfg.temperature).exp()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cfg.n_display.min(top.len()));
    while out.len() < cfg.n_display && !top.is_empty() {
        let total: f64 = weights.iter().sum();
        let mut pick = top.len() - 1;
        if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
        } else {
            pick = rng.random_range(0..top.len());
        }
        out.push(top.remove(pick).text);
        weights.remove(pick);
    }
    Ok(out)
}

/// Merge duplicate texts (max score, first position), validate, and keep the
/// `k` highest scores. Ties keep candidate order.
pub fn top_k(pool: &[Candidate], k: usize) -> Result<Vec<Candidate>, GenerationError> {
    if pool.is_empty() {
        return Err(GenerationError::NoCandidates);
    }
    let mut merged: Vec<Candidate> = Vec::with_capacity(pool.len());
    let mut index = std::collections::HashMap::new();
    for c in pool {
        if c.text.is_empty() {
            return Err(GenerationError::MalformedResponse("empty candidate text".into()));
        }
        if !c.score.is_finite() {
            return Err(GenerationError::MalformedResponse(format!("non-finite score for {:?}", c.text)));
        }
        match index.get(c.text.as_str()) {
            Some(&i) => {
                let m: &mut Candidate = &mut merged[i];
                m.score = m.score.max(c.score);
            }
            None => {
                index.insert(c.text.as_str(), merged.len());
                merged.push(c.clone());
            }
        }
    }
    merged.sort_by(|a, b| b.score.total_cmp(&a.score));
    merged.truncate(k);
    Ok(merged)
}

/// Derive the per-request RNG seed from the configured seed and request id.
pub fn mix_seed(seed: u64, request_id: &str) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(request_id.as_bytes())))
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markup::{parse_markup, to_model_input};

    struct Fixed(Vec<Candidate>);

    impl GenerationBackend for Fixed {
        fn id(&self) -> &str {
            "fixed"
        }
        fn candidates(&self, _: &ModelInput, _: usize) -> Result<Vec<Candidate>, GenerationError> {
            Ok(self.0.clone())
        }
    }

    fn input() -> ModelInput {
        to_model_input(&parse_markup("a [ wave ] here").unwrap()).unwrap()
    }

    fn pool(n: usize) -> Vec<Candidate> {
        (0..n).map(|i| Candidate::new(format!("c{i}"), -(i as f64))).collect()
    }

    #[test]
    fn top_k_support_and_distinctness() {
        let cfg = GenerationConfig { seed: 42, ..Default::default() };
        for r in 0..200 {
            let set = request_suggestions(&input(), &cfg, &Fixed(pool(12)), &format!("r{r}")).unwrap();
            assert_eq!(set.suggestions.len(), 3);
            let mut s = set.suggestions.clone();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 3);
            for t in &set.suggestions {
                let i: usize = t[1..].parse().unwrap();
                assert!(i < 10, "{t} outside top 10");
            }
        }
    }

    #[test]
    fn single_and_empty_pools() {
        let cfg = GenerationConfig::default();
        let set = request_suggestions(&input(), &cfg, &Fixed(pool(1)), "r").unwrap();
        assert_eq!(set.suggestions, ["c0"]);
        let err = request_suggestions(&input(), &cfg, &Fixed(vec![]), "r").unwrap_err();
        assert!(matches!(err, GenerationError::NoCandidates));
    }

    #[test]
    fn duplicates_merge_to_max_score() {
        let p = vec![
            Candidate::new("x", -5.0),
            Candidate::new("y", -1.0),
            Candidate::new("x", 0.0),
        ];
        let top = top_k(&p, 10).unwrap();
        assert_eq!(top, vec![Candidate::new("x", 0.0), Candidate::new("y", -1.0)]);
    }

    #[test]
    fn ties_keep_candidate_order() {
        let p: Vec<_> = (0..5).map(|i| Candidate::new(format!("t{i}"), 1.0)).collect();
        let top = top_k(&p, 3).unwrap();
        let names: Vec<_> = top.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(names, ["t0", "t1", "t2"]);
    }

    #[test]
    fn rejects_bad_candidates_and_config() {
        assert!(top_k(&[Candidate::new("", 0.0)], 3).is_err());
        assert!(top_k(&[Candidate::new("a", f64::NAN)], 3).is_err());
        let cfg = GenerationConfig { n_display: 11, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = GenerationConfig { temperature: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn deterministic_per_request_id() {
        let cfg = GenerationConfig { seed: 7, ..Default::default() };
        let a = request_suggestions(&input(), &cfg, &Fixed(pool(12)), "s-1-r1").unwrap();
        let b = request_suggestions(&input(), &cfg, &Fixed(pool(12)), "s-1-r1").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pair_frequencies_are_uniform_for_equal_scores() {
        let p: Vec<_> = ["a", "b", "c"].iter().map(|t| Candidate::new(*t, 0.0)).collect();
        let cfg = GenerationConfig { n_display: 2, k: 10, seed: 1, temperature: 1.0 };
        let mut counts = std::collections::HashMap::new();
        let draws = 10_000;
        for i in 0..draws {
            let mut s = sample_top_k(&p, &cfg, mix_seed(cfg.seed, &i.to_string())).unwrap();
            s.sort();
            *counts.entry(s.join("")).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 3);
        for (pair, n) in counts {
            let f = n as f64 / draws as f64;
            assert!((f - 1.0 / 3.0).abs() <= 0.02, "{pair}: {f}");
        }
    }

    #[test]
    fn temperature_sharpens() {
        let p = vec![Candidate::new("hi", 0.0), Candidate::new("lo", -3.0)];
        let cfg = GenerationConfig { n_display: 1, k: 2, seed: 3, temperature: 0.05 };
        for i in 0..100 {
            assert_eq!(sample_top_k(&p, &cfg, i).unwrap(), ["hi"]);
        }
    }
}
