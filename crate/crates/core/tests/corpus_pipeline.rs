//! The bundled sample corpus through the full build with the stub infiller.

use std::collections::HashSet;

use milrw_core::corpus::{build_corpus, read_pairs, sample_corpus, write_corpus, CorpusOptions, ExampleType, Split};
use milrw_core::generation::StubBackend;
use milrw_core::markup::{parse_model_text, InputSegment};

fn build(seed: u64) -> milrw_core::corpus::CorpusBuild {
    let infiller = StubBackend::new("stub-infiller", 0);
    let opts = CorpusOptions { seed, ..Default::default() };
    build_corpus(&[sample_corpus()], &infiller, &opts).unwrap()
}

#[test]
fn two_pairs_per_sentence() {
    let b = build(13);
    let input = sample_corpus();
    assert_eq!(input.records.len(), 50);
    assert_eq!(b.manifest.pairs_generated, 100);
    assert_eq!(b.pairs.len() + b.dropped.len(), 100);
    let creative: HashSet<&str> = input.records.iter().map(|(_, a)| a.text.as_str()).collect();
    for p in b.pairs.iter().chain(b.dropped.iter().map(|(p, _)| p)) {
        assert!(creative.contains(p.target.as_str()), "target is not a sample sentence: {}", p.target);
        let segs = parse_model_text(&p.source).unwrap();
        let replaces = segs.iter().filter(|s| matches!(s, InputSegment::Replace(_))).count();
        let masks = segs.iter().filter(|s| matches!(s, InputSegment::Mask)).count();
        match p.example_type {
            ExampleType::Rewrite => assert!(replaces >= 1 && masks == 0, "{}", p.source),
            ExampleType::Infill => assert!(masks >= 1 && replaces == 0, "{}", p.source),
            other => panic!("unexpected example type {other:?}"),
        }
    }
    let rewrites = b.pairs.iter().filter(|p| p.example_type == ExampleType::Rewrite).count();
    let infills = b.pairs.iter().filter(|p| p.example_type == ExampleType::Infill).count();
    assert_eq!(rewrites, infills);
}

#[test]
fn split_keeps_sentence_pairs_together() {
    let b = build(13);
    let train = b.split(Split::Train).count();
    let valid = b.split(Split::Valid).count();
    let test = b.split(Split::Test).count();
    assert_eq!(train + valid + test, b.pairs.len());
    for split in [Split::Train, Split::Valid, Split::Test] {
        let targets: Vec<&str> = b.split(split).map(|p| p.target.as_str()).collect();
        for t in &targets {
            assert_eq!(targets.iter().filter(|x| *x == t).count() % 2, 0, "{t} split across partitions");
        }
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let (d1, d2, d3) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_corpus(&build(5), d1.path()).unwrap();
    write_corpus(&build(5), d2.path()).unwrap();
    write_corpus(&build(6), d3.path()).unwrap();
    for f in ["train.jsonl", "valid.jsonl", "test.jsonl", "manifest.json"] {
        let a = std::fs::read(d1.path().join(f)).unwrap();
        assert_eq!(a, std::fs::read(d2.path().join(f)).unwrap(), "{f} differs between runs");
    }
    let train = read_pairs(&d1.path().join("train.jsonl")).unwrap();
    assert!(train.iter().all(|p| p.split == Split::Train));
    assert_ne!(
        std::fs::read(d1.path().join("train.jsonl")).unwrap(),
        std::fs::read(d3.path().join("train.jsonl")).unwrap()
    );
}
