//! Feedback pairs from synthetic study logs.

use std::collections::BTreeMap;
use std::sync::Arc;

use milrw_core::corpus::{ExampleType, Provenance, Split, TrainingPair};
use milrw_core::feedback::{extract_pairs, mix_with_original, ExtractOptions, FeedbackError};
use milrw_core::generation::{GenerationConfig, StubBackend};
use milrw_core::markup::ModelInputStyle;
use milrw_core::session::{replay, Action, Constraints, EventLog, ManualClock, Study, Task};
use proptest::prelude::*;

/// A log with the given decisions, five rounds per session.
fn log_with(decisions: &[bool]) -> String {
    let pool: Vec<Task> = (0..decisions.len() / 5 + 1)
        .map(|i| Task {
            task_id: format!("img-{i}"),
            image_ref: format!("{i}.jpg"),
            prompt_text: format!("The old harbor {i} glows under a pale moon while the boats sleep"),
            constraints: Constraints::default(),
        })
        .collect();
    let clock = Arc::new(ManualClock::new(0));
    let mut st = Study::new(EventLog::in_memory(clock.clone()), BTreeMap::new(), pool, GenerationConfig::default(), 1);
    st.add_arm("only", Arc::new(StubBackend::new("only", 3)), ModelInputStyle::Markers);
    let words = ["old", "harbor", "glows", "pale", "moon"];
    for chunk in decisions.chunks(5) {
        let id = st.create_session().unwrap();
        for (k, &accept) in chunk.iter().enumerate() {
            clock.advance(1_000);
            let s = st.session(&id).unwrap();
            let base = if s.current_draft.is_empty() { s.task.prompt_text.clone() } else { s.current_draft.clone() };
            let word = words[k];
            let raw = match base.find(word) {
                Some(at) => format!("{}[ {} ]{}", &base[..at], word, &base[at + word.len()..]),
                None => format!("{base} ___"),
            };
            let set = st.suggest(&id, &raw).unwrap();
            let action = if accept { Action::Accept(set.suggestions.len() - 1) } else { Action::Reject };
            st.decide(&id, &set.request_id, action).unwrap();
        }
    }
    st.log_text().unwrap()
}

fn base_pairs(n: usize) -> Vec<TrainingPair> {
    (0..n)
        .map(|i| TrainingPair {
            source: format!("a plain sentence number {i}"),
            target: format!("a luminous sentence number {i}"),
            example_type: ExampleType::Rewrite,
            provenance: Provenance::default(),
            split: Split::Train,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn one_pair_per_decision(decisions in prop::collection::vec(any::<bool>(), 0..100)) {
        let log = log_with(&decisions);
        let opts = ExtractOptions::default();
        let ex = extract_pairs(&log, &opts).unwrap();
        let accepts = decisions.iter().filter(|d| **d).count();
        prop_assert_eq!(ex.pairs.len(), decisions.len());
        prop_assert_eq!(ex.accept_decisions, accepts);
        prop_assert_eq!(ex.reject_decisions, decisions.len() - accepts);

        let sessions = replay(&log).unwrap();
        for p in &ex.pairs {
            let sid = p.provenance.session_id.as_deref().unwrap();
            let rid = p.provenance.request_id.as_deref().unwrap();
            let round = sessions[sid].rounds.iter().find(|r| r.request_id == rid).unwrap();
            let draft = &round.suggestion_set.model_input.origin.plain_text;
            let shown = &round.suggestion_set.suggestions;
            match p.example_type {
                ExampleType::FeedbackAccept => {
                    prop_assert_eq!(&p.source, draft);
                    prop_assert_ne!(&p.target, draft);
                    prop_assert!(shown.contains(&p.target));
                }
                ExampleType::FeedbackReject => {
                    prop_assert_eq!(&p.target, draft);
                    prop_assert_ne!(&p.source, draft);
                    prop_assert_eq!(&p.source, &shown[0]);
                }
                other => prop_assert!(false, "unexpected type {:?}", other),
            }
        }

        if !ex.pairs.is_empty() {
            let n = ex.pairs.len();
            let ds = mix_with_original(ex, &base_pairs(200), 1.0, 9, opts).unwrap();
            prop_assert_eq!(ds.mixed_original.len(), n);
            prop_assert_eq!(ds.all().count(), 2 * n);
        }
    }
}

#[test]
fn reference_scale_mix() {
    // 474 feedback pairs plus 450 sampled originals
    let decisions: Vec<bool> = (0..474).map(|i| i % 3 != 0).collect();
    let log = log_with(&decisions);
    let opts = ExtractOptions::default();
    let ex = extract_pairs(&log, &opts).unwrap();
    assert_eq!(ex.pairs.len(), 474);
    let ds = mix_with_original(ex, &base_pairs(2_000), 450.0 / 474.0, 4, opts).unwrap();
    assert_eq!(ds.mixed_original.len(), 450);
    assert_eq!(ds.manifest.total, 924);
    let distinct: std::collections::HashSet<_> = ds.mixed_original.iter().map(|p| &p.source).collect();
    assert_eq!(distinct.len(), 450);
}

#[test]
fn small_base_is_insufficient() {
    let ex = extract_pairs(&log_with(&[true; 10]), &ExtractOptions::default()).unwrap();
    let err = mix_with_original(ex, &base_pairs(5), 1.0, 0, ExtractOptions::default()).unwrap_err();
    assert!(matches!(err, FeedbackError::InsufficientBase { requested: 10, available: 5 }));
}

#[test]
fn mixing_is_deterministic() {
    let log = log_with(&[true, false, true, true, false, false, true]);
    let run = |seed| {
        let ex = extract_pairs(&log, &ExtractOptions::default()).unwrap();
        mix_with_original(ex, &base_pairs(100), 1.0, seed, ExtractOptions::default()).unwrap().to_jsonl()
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}
