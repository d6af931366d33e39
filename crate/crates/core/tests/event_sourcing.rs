//! Random operation traces: replaying the log always rebuilds the live state.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use milrw_core::analytics::acceptance_stats;
use milrw_core::generation::{GenerationConfig, StubBackend};
use milrw_core::markup::ModelInputStyle;
use milrw_core::session::{
    replay, Action, Constraints, EventLog, JsonlEventStore, ManualClock, SessionState, Study, SurveyResponse, Task,
};

fn pool(n: usize) -> Vec<Task> {
    (0..n)
        .map(|i| Task {
            task_id: format!("img-{i}"),
            image_ref: format!("{i}.jpg"),
            prompt_text: format!("A grey cat number {i} sleeps on a warm wooden porch beside the old garden gate"),
            constraints: Constraints::default(),
        })
        .collect()
}

fn study(log: EventLog, images: usize, seed: u64) -> Study {
    let mut s = Study::new(log, BTreeMap::new(), pool(images), GenerationConfig { seed, ..Default::default() }, seed);
    s.add_arm("alpha", Arc::new(StubBackend::new("alpha", seed)), ModelInputStyle::Markers);
    s.add_arm("beta", Arc::new(StubBackend::new("beta", seed + 1)), ModelInputStyle::MaskAll);
    s
}

fn draft_for(rng: &mut ChaCha8Rng, base: &str) -> String {
    let words: Vec<&str> = base.split_whitespace().collect();
    match rng.random_range(0..10) {
        0 => base.to_string(),
        1 => format!("{base} [ unclosed"),
        2 => format!("{base} ___"),
        _ => {
            let k = rng.random_range(0..words.len());
            let mut w: Vec<String> = words.iter().map(|s| s.to_string()).collect();
            w[k] = format!("[ {} ]", w[k]);
            w.join(" ")
        }
    }
}

/// Run a random trace; errors from invalid steps are expected and ignored.
fn run_trace(seed: u64, log: EventLog, clock: Arc<ManualClock>) -> Study {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = study(log, 3, seed);
    for _ in 0..rng.random_range(5..60) {
        clock.advance(rng.random_range(1..5_000));
        let ids: Vec<String> = st.sessions.keys().cloned().collect();
        let pick = |rng: &mut ChaCha8Rng| ids.get(rng.random_range(0..ids.len().max(1))).cloned();
        match rng.random_range(0..12) {
            0 | 1 => {
                let _ = st.create_session();
            }
            2..=5 => {
                if let Some(id) = pick(&mut rng) {
                    let s = st.session(&id).unwrap();
                    let base = if s.current_draft.is_empty() { s.task.prompt_text.clone() } else { s.current_draft.clone() };
                    let raw = draft_for(&mut rng, &base);
                    let _ = st.suggest(&id, &raw);
                }
            }
            6..=8 => {
                if let Some(id) = pick(&mut rng) {
                    let s = st.session(&id).unwrap();
                    let req = match s.rounds.last() {
                        Some(r) if rng.random_bool(0.9) => r.request_id.clone(),
                        _ => format!("{id}-r99"),
                    };
                    let action = if rng.random_bool(0.5) { Action::Accept(rng.random_range(0..4)) } else { Action::Reject };
                    let _ = st.decide(&id, &req, action);
                }
            }
            9 => {
                if let Some(id) = pick(&mut rng) {
                    let s = st.session(&id).unwrap();
                    let caption = if rng.random_bool(0.7) { format!("{} {}", s.current_draft, "and the light stays warm on the boards".repeat(3)) } else { "short".into() };
                    let _ = st.submit(&id, &caption);
                }
            }
            10 => {
                if let Some(id) = pick(&mut rng) {
                    let v = rng.random_range(0..7u8);
                    let survey = SurveyResponse { helpfulness: v, grammaticality: 3, satisfaction: 4, self_skill: rng.random_range(1..6) };
                    let _ = st.survey(&id, survey);
                }
            }
            _ => {
                if rng.random_bool(0.5) {
                    if let Some(id) = pick(&mut rng) {
                        let _ = st.close(&id, "abandoned");
                    }
                } else {
                    let _ = st.expire_idle(8_000);
                }
            }
        }
    }
    st
}

/// Count requests and accepts per arm straight from the JSON lines.
fn count_oracle(log: &str, arm: &str) -> (usize, usize) {
    let mut arm_of = BTreeMap::new();
    let (mut req, mut acc) = (0, 0);
    for line in log.lines().skip(1) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let sid = v["session_id"].as_str().unwrap().to_string();
        match v["type"].as_str().unwrap() {
            "session_created" => {
                arm_of.insert(sid, v["payload"]["arm"].as_str().unwrap().to_string());
            }
            "suggestion_requested" if arm_of[&sid] == arm => req += 1,
            "decision_made" if arm_of[&sid] == arm && v["payload"]["action"].get("accept").is_some() => acc += 1,
            _ => {}
        }
    }
    (req, acc)
}

#[test]
fn replay_matches_live_state() {
    for seed in 0..300 {
        let clock = Arc::new(ManualClock::new(1_000));
        let st = run_trace(seed, EventLog::in_memory(clock.clone()), clock);
        let text = st.log_text().unwrap();
        assert_eq!(replay(&text).unwrap(), st.sessions, "seed {seed}");
        for arm in ["alpha", "beta"] {
            let stats = acceptance_stats(&text, arm).unwrap();
            assert_eq!((stats.n_requests, stats.n_accepted), count_oracle(&text, arm), "seed {seed}");
        }
    }
}

#[test]
fn every_prefix_replays() {
    for seed in 0..40 {
        let clock = Arc::new(ManualClock::new(1_000));
        let st = run_trace(seed, EventLog::in_memory(clock.clone()), clock);
        let text = st.log_text().unwrap();
        let mut end = 0;
        for line in text.split_inclusive('\n') {
            end += line.len();
            replay(&text[..end]).unwrap_or_else(|e| panic!("seed {seed} prefix {end}: {e}"));
        }
        // a cut inside the last line is reported, not silently dropped
        if text.len() > 40 {
            assert!(replay(&text[..text.len() - 3]).is_err());
        }
    }
}

#[test]
fn file_log_reopens_with_same_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let clock = Arc::new(ManualClock::new(1_000));
    let (log, sessions) = EventLog::open(Box::new(JsonlEventStore::open(&path).unwrap()), clock.clone()).unwrap();
    assert!(sessions.is_empty());
    let live = run_trace(7, log, clock.clone());
    let (_, reopened) = EventLog::open(Box::new(JsonlEventStore::open(&path).unwrap()), clock).unwrap();
    assert_eq!(reopened, live.sessions);
    assert!(live.sessions.values().any(|s| s.state != SessionState::Active || !s.rounds.is_empty()));
}

#[test]
fn traces_exercise_every_step() {
    let mut kinds = std::collections::BTreeSet::new();
    for seed in 0..50 {
        let clock = Arc::new(ManualClock::new(1_000));
        let st = run_trace(seed, EventLog::in_memory(clock.clone()), clock);
        for line in st.log_text().unwrap().lines().skip(1) {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            kinds.insert(v["type"].as_str().unwrap().to_string());
        }
    }
    for k in ["session_created", "suggestion_requested", "decision_made", "draft_edited", "caption_submitted", "survey_submitted", "session_closed"] {
        assert!(kinds.contains(k), "no {k} event in any trace");
    }
}
