use std::path::{Path, PathBuf};
use std::sync::Arc;

use nerprobe::backend::{PredictionCache, Predictor};
use nerprobe::config::ConfigFile;
use nerprobe::model::{Sentence, TransformKind};
use nerprobe::oracles::{OracleSuite, ScriptedOracles};
use nerprobe::pipeline::{
    build_backend, build_oracles, effective_config, evaluate_with_ground_truth, load_corpus, run_repair, run_test,
    truth_backend, write_jsonl, read_jsonl,
};
use nerprobe::mr::SuspiciousIssue;

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo")
}

fn setup() -> (ConfigFile, Vec<Sentence>) {
    let file = ConfigFile::load(&demo().join("config.toml")).unwrap();
    let corpus = load_corpus(&demo().join("corpus.jsonl")).unwrap();
    (file, corpus)
}

#[test]
fn serial_oracles_match_parallel() {
    let (file, corpus) = setup();
    let backend = build_backend("mock", &file).unwrap();
    let config = effective_config(backend.as_ref(), &file).unwrap();
    let predictor = Predictor::new(backend, Arc::new(PredictionCache::in_memory()));
    let parallel = build_oracles(&file, config.seed).unwrap();
    let serial = build_oracles(&file, config.seed).unwrap().with_serial_access(true);
    let a = run_test(&corpus, &predictor, &parallel, &config, &TransformKind::ALL).unwrap();
    let b = run_test(&corpus, &predictor, &serial, &config, &TransformKind::ALL).unwrap();
    assert_eq!(a.issues, b.issues);
    assert_eq!(a.audit, b.audit);
    assert_eq!(a.checkpoints, b.checkpoints);
}

#[test]
fn missing_parses_only_skip_tree_schemes() {
    let (file, corpus) = setup();
    let backend = build_backend("mock", &file).unwrap();
    let config = effective_config(backend.as_ref(), &file).unwrap();
    let predictor = Predictor::new(backend, Arc::new(PredictionCache::in_memory()));
    let mut script = ScriptedOracles::new(0);
    script.add_pos_word("*", "NN");
    let oracles = OracleSuite::scripted(script);
    let run = run_test(&corpus, &predictor, &oracles, &config, &TransformKind::ALL).unwrap();
    assert_eq!(run.failures.iter().filter(|f| f.stage == "parse").count(), corpus.len());
    assert!(run.audit.iter().all(|a| a.kind == TransformKind::EntityShuffle));
    assert!(!run.audit.is_empty());
}

#[test]
fn issues_round_trip_and_score_against_truth() {
    let (file, corpus) = setup();
    let backend = build_backend("mock", &file).unwrap();
    let config = effective_config(backend.as_ref(), &file).unwrap();
    let predictor = Predictor::new(backend, Arc::new(PredictionCache::in_memory()));
    let oracles = build_oracles(&file, config.seed).unwrap();
    let run = run_test(&corpus, &predictor, &oracles, &config, &TransformKind::ALL).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("issues.jsonl");
    write_jsonl(&path, &run.issues).unwrap();
    let back: Vec<SuspiciousIssue> = read_jsonl(&path).unwrap();
    assert_eq!(back, run.issues);

    let repairs = run_repair(&back, &predictor, &oracles, &config).unwrap();
    assert!(repairs.failures.is_empty());
    let truth = truth_backend(&demo().join("lexicon.json")).unwrap();
    let metrics = evaluate_with_ground_truth(&repairs.reports, &truth).unwrap();
    // every demo issue comes from a planted fault
    assert_eq!(metrics.precision["overall"].precision, 1.0);
    let c = metrics.confusion.unwrap();
    assert_eq!(c.tf, 0, "repairs never break a correct entity in the demo");
    assert!(c.ft > 0);
}
