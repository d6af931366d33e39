//! The bundled study fixtures reproduce their constructed aggregates.

use std::collections::BTreeMap;
use std::path::PathBuf;

use milrw_core::analytics::{
    build_report, majority_vote, mww_test, read_surveys, read_votes, render_text, MetricsReport, ReportOptions,
};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/fixtures").join(name)
}

fn report() -> MetricsReport {
    let log = std::fs::read_to_string(fixture("study_log.jsonl")).unwrap();
    let surveys = read_surveys(&fixture("surveys.jsonl")).unwrap();
    let votes = read_votes(&fixture("votes.jsonl")).unwrap();
    build_report(&log, &surveys, &votes, &ReportOptions::default()).unwrap()
}

fn close(a: Option<f64>, b: f64, tol: f64) -> bool {
    a.is_some_and(|a| (a - b).abs() <= tol)
}

#[test]
fn acceptance_counts_per_arm() {
    let r = report();
    let cra = r.arm("cra").unwrap();
    assert_eq!((cra.n_requests, cra.n_accepted), (141, 45));
    assert!(close(cra.acceptance_rate, 0.319, 0.0005));
    let base = r.arm("baseline").unwrap();
    assert_eq!((base.n_requests, base.n_accepted), (151, 37));
    assert!(close(base.acceptance_rate, 0.245, 0.0005));
    assert_eq!(cra.sessions + base.sessions, 100);
    assert!(r.missing_surveys.is_empty());
}

#[test]
fn skill_breakdown_matches_construction() {
    let r = report();
    let skill = r.arm("cra").unwrap().skill.as_ref().unwrap();
    let (n, s) = (&skill.novice, &skill.skilled);
    assert_eq!((n.users, s.users), (22, 28));
    assert!(close(n.mean_helpfulness, 50.0 / 22.0, 1e-12));
    assert!(close(n.mean_requests, 67.0 / 22.0, 1e-12));
    assert!(close(n.acceptance_rate, 20.0 / 67.0, 1e-12));
    assert!(close(s.mean_helpfulness, 90.0 / 28.0, 1e-12));
    assert!(close(s.mean_requests, 74.0 / 28.0, 1e-12));
    assert!(close(s.acceptance_rate, 25.0 / 74.0, 1e-12));
}

#[test]
fn survey_means() {
    let r = report();
    let cra = r.arm("cra").unwrap();
    let base = r.arm("baseline").unwrap();
    assert!(close(cra.mean_helpfulness, 2.80, 1e-12));
    assert!(close(cra.mean_grammaticality, 3.22, 1e-12));
    assert!(close(cra.mean_satisfaction, 3.66, 1e-12));
    assert!(close(base.mean_helpfulness, 2.24, 1e-12));
    assert!(close(base.mean_grammaticality, 2.96, 1e-12));
    assert!(close(base.mean_satisfaction, 3.70, 1e-12));
    let help = r.comparisons.iter().find(|c| c.question == "helpfulness").unwrap();
    assert!(help.significant);
}

#[test]
fn vote_tallies() {
    let votes = read_votes(&fixture("votes.jsonl")).unwrap();
    let tallies = majority_vote(&votes).unwrap();
    let get = |a: &str, b: &str| {
        let t = tallies.iter().find(|t| t.condition_a == a && t.condition_b == b).unwrap();
        (t.a_wins, t.b_wins)
    };
    assert_eq!(get("human_only", "human_baseline"), (45, 55));
    assert_eq!(get("human_only", "human_cra"), (43, 57));
    assert_eq!(get("human_baseline", "human_cra"), (48, 52));
}

#[test]
fn feedback_round_not_significant() {
    let raw = std::fs::read_to_string(fixture("feedback_helpfulness.json")).unwrap();
    let v: BTreeMap<String, Vec<f64>> = serde_json::from_str(&raw).unwrap();
    let r = mww_test(&v["initial_model"], &v["updated_model"]).unwrap();
    // scipy.stats.mannwhitneyu(..., use_continuity=True, method="asymptotic")
    assert_eq!(r.u, 1131.0);
    assert!((r.p_two_sided - 0.4020510021081094).abs() < 1e-9, "{}", r.p_two_sided);
    assert!(!r.significant(0.05));
}

#[test]
fn report_is_deterministic_and_renders() {
    let a = report().to_canonical_json();
    let b = report().to_canonical_json();
    assert_eq!(a, b);
    let text = render_text(&report());
    assert!(text.contains("141"));
    assert!(text.contains("31.9"));
    assert!(text.contains("43 / 57"));
}

