//! Regenerates the bundled study fixtures under `data/fixtures/`.
//!
//! The study log has two arms of 50 sessions over 50 images. Request and
//! accept counts, survey answers and vote tallies are fixed by construction
//! so the report reproduces known aggregates.
//!
//!     cargo run -p milrw-core --example make_fixtures

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use milrw_core::analytics::{Side, VoteRecord};
use milrw_core::generation::{GenerationConfig, StubBackend};
use milrw_core::markup::{DemarcatedDraft, Demarcation, ModelInputStyle};
use milrw_core::session::{Action, Constraints, EventLog, ManualClock, Study, SurveyResponse, Task};
use milrw_core::text::{is_content_token, tokenize_with_offsets};

const SUBJECTS: [&str; 10] = [
    "an old fisherman",
    "a small girl",
    "a grey cat",
    "two cyclists",
    "a street musician",
    "a lonely lighthouse",
    "a crowded market",
    "a wooden bridge",
    "a young soldier",
    "a tired baker",
];

const SCENES: [&str; 5] = [
    "waits by the harbor wall",
    "stands under a broken streetlamp",
    "rests beside a frozen river",
    "looks across a field of wheat",
    "sits in the rain near the station",
];

struct ArmPlan {
    name: &'static str,
    seed: u64,
    style: ModelInputStyle,
}

/// Spread `total` over `n` slots, each at least `floor`, in a shuffled order.
fn spread(total: usize, n: usize, floor: usize, cap: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = vec![floor; n];
    let mut left = total - floor * n;
    let mut order: Vec<usize> = (0..n).collect();
    while left > 0 {
        order.shuffle(rng);
        for &i in &order {
            if left == 0 {
                break;
            }
            if out[i] < cap[i] {
                out[i] += 1;
                left -= 1;
            }
        }
    }
    out
}

/// Likert answers from per-level counts, shuffled.
fn answers(counts: [usize; 5], rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut v: Vec<u8> = counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i as u8 + 1, c)).collect();
    v.shuffle(rng);
    v
}

/// Wrap the `k`-th content word (cyclically) of `plain` in a rewrite span.
fn mark_word(plain: &str, k: usize) -> String {
    let words: Vec<_> = tokenize_with_offsets(plain).into_iter().filter(|t| is_content_token(&t.text)).collect();
    let t = &words[k % words.len()];
    let start = plain[..t.start].chars().count();
    let end = start + plain[t.start..t.end].chars().count();
    DemarcatedDraft::from_parts(plain, vec![Demarcation::rewrite(start, end, &plain[t.start..t.end])])
        .expect("valid span")
        .render()
}

/// (users, requests, accepts, helpfulness counts, skill levels)
type SkillGroupPlan = (usize, usize, usize, [usize; 5], [u8; 3]);

fn main() -> anyhow::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixtures");
    std::fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2022);

    let pool: Vec<Task> = (0..50)
        .map(|i| Task {
            task_id: format!("img-{:03}", i + 1),
            image_ref: format!("images/{:03}.jpg", i + 1),
            prompt_text: format!(
                "In this picture {} {}, while the evening light fades slowly over the quiet town around it.",
                SUBJECTS[i % 10],
                SCENES[i / 10]
            ),
            constraints: Constraints::default(),
        })
        .collect();
    let mut tasks = String::new();
    for t in &pool {
        writeln!(tasks, "{}", serde_json::to_string(t)?)?;
    }
    std::fs::write(dir.join("tasks.jsonl"), tasks)?;

    let clock = Arc::new(ManualClock::new(1_650_000_000_000));
    let log = EventLog::in_memory(clock.clone());
    let mut study = Study::new(log, BTreeMap::new(), pool.clone(), GenerationConfig::default(), 7);
    let arms = [
        ArmPlan { name: "cra", seed: 11, style: ModelInputStyle::Markers },
        ArmPlan { name: "baseline", seed: 23, style: ModelInputStyle::MaskAll },
    ];
    for a in &arms {
        study.add_arm(a.name, Arc::new(StubBackend::new(a.name, a.seed)), a.style);
    }
    for _ in 0..100 {
        study.create_session()?;
        clock.advance(1_000);
    }

    // (session id, requests, accepts, helpfulness, grammaticality, satisfaction, self skill)
    let mut plan: Vec<(String, usize, usize, u8, u8, u8, u8)> = Vec::new();
    for arm in ["cra", "baseline"] {
        let mut ids: Vec<String> =
            study.sessions.values().filter(|s| s.arm == arm).map(|s| s.session_id.clone()).collect();
        ids.shuffle(&mut rng);
        assert_eq!(ids.len(), 50);
        let groups: Vec<SkillGroupPlan> = if arm == "cra" {
            vec![(22, 67, 20, [6, 7, 6, 3, 0], [1, 2, 3]), (28, 74, 25, [2, 4, 11, 8, 3], [4, 5, 4])]
        } else {
            vec![(24, 74, 17, [8, 9, 5, 2, 0], [1, 2, 3]), (26, 77, 20, [7, 8, 6, 3, 2], [4, 5, 5])]
        };
        let (gram, sat) = if arm == "cra" {
            ([3, 11, 15, 14, 7], [2, 6, 11, 19, 12])
        } else {
            ([6, 12, 15, 12, 5], [2, 6, 10, 19, 13])
        };
        let (gram, sat) = (answers(gram, &mut rng), answers(sat, &mut rng));
        let mut offset = 0;
        for (users, requests, accepts, help, skills) in groups {
            let req = spread(requests, users, 2, &vec![6; users], &mut rng);
            let acc = spread(accepts, users, 0, &req, &mut rng);
            let help = answers(help, &mut rng);
            for i in 0..users {
                let j = offset + i;
                plan.push((ids[j].clone(), req[i], acc[i], help[i], gram[j], sat[j], skills[i % 3]));
            }
            offset += users;
        }
    }
    plan.sort();

    let mut surveys = String::new();
    for (id, requests, accepts, help, gram, sat, skill) in &plan {
        // accepted rounds are spread through the session
        let mut decisions = vec![false; *requests];
        for k in 0..*accepts {
            decisions[k * requests / accepts] = true;
        }
        for (round, accept) in decisions.into_iter().enumerate() {
            let session = study.session(id).expect("created");
            let current = if session.current_draft.is_empty() {
                session.task.prompt_text.clone()
            } else {
                session.current_draft.clone()
            };
            let raw = mark_word(&current, round * 3 + 1);
            let set = study.suggest(id, &raw)?;
            clock.advance(4_000);
            let action = if accept && !set.suggestions.is_empty() { Action::Accept(0) } else { Action::Reject };
            assert!(accept == matches!(action, Action::Accept(_)), "{id}: empty suggestion set");
            study.decide(id, &set.request_id, action)?;
            clock.advance(6_000);
        }
        let caption = study.session(id).expect("created").current_draft.clone();
        study.submit(id, &caption)?;
        clock.advance(2_000);
        let survey = SurveyResponse { helpfulness: *help, grammaticality: *gram, satisfaction: *sat, self_skill: *skill };
        writeln!(surveys, "{}", serde_json::json!({
            "session_id": id,
            "helpfulness": survey.helpfulness,
            "grammaticality": survey.grammaticality,
            "satisfaction": survey.satisfaction,
            "self_skill": survey.self_skill,
        }))?;
    }
    std::fs::write(dir.join("study_log.jsonl"), study.log_text()?)?;
    std::fs::write(dir.join("surveys.jsonl"), surveys)?;

    let mut votes = String::new();
    let a_win = [[Side::A, Side::A, Side::B], [Side::A, Side::B, Side::A], [Side::B, Side::A, Side::A], [Side::A; 3]];
    let b_win = [[Side::B, Side::B, Side::A], [Side::B, Side::A, Side::B], [Side::A, Side::B, Side::B], [Side::B; 3]];
    for (ca, cb, a_wins) in [("human_only", "human_baseline", 45), ("human_only", "human_cra", 43), ("human_baseline", "human_cra", 48)] {
        let mut outcomes: Vec<bool> = (0..100).map(|i| i < a_wins).collect();
        outcomes.shuffle(&mut rng);
        for (i, a) in outcomes.into_iter().enumerate() {
            let pattern = if a { a_win[i % 4] } else { b_win[i % 4] };
            let rec = VoteRecord {
                image_id: format!("img-{:03}", i % 50 + 1),
                caption_a_id: format!("{ca}-{:03}", i + 1),
                caption_b_id: format!("{cb}-{:03}", i + 1),
                votes: pattern.to_vec(),
                condition_a: Some(ca.to_string()),
                condition_b: Some(cb.to_string()),
            };
            writeln!(votes, "{}", serde_json::to_string(&rec)?)?;
        }
    }
    std::fs::write(dir.join("votes.jsonl"), votes)?;

    // Helpfulness before and after one round of feedback fine-tuning; the
    // rank-sum test on these gives p = 0.402.
    let before = [[1usize, 8], [2, 11], [3, 17], [4, 8], [5, 6]];
    let after = [[1usize, 6], [2, 13], [3, 9], [4, 16], [5, 6]];
    let expand = |c: &[[usize; 2]]| c.iter().flat_map(|&[v, n]| std::iter::repeat_n(v, n)).collect::<Vec<_>>();
    let fb = serde_json::json!({ "initial_model": expand(&before), "updated_model": expand(&after) });
    std::fs::write(dir.join("feedback_helpfulness.json"), serde_json::to_string_pretty(&fb)? + "\n")?;
    println!("wrote fixtures to {}", dir.display());
    Ok(())
}
