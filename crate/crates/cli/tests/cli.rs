use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn demo(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/demo").join(file)
}

fn nerprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nerprobe"))
        .args(args)
        .env("NO_NETWORK", "1")
        .output()
        .expect("spawn nerprobe")
}

fn ok(args: &[&str]) -> String {
    let out = nerprobe(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn run_test(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let config = demo("config.toml");
    let corpus = demo("corpus.jsonl");
    let mut args = vec![
        "test",
        "--corpus",
        p(&corpus),
        "--backend",
        "mock",
        "--config",
        p(&config),
        "--out",
        p(&out),
    ];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn test_repair_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let issues = run_test(dir.path(), "issues.jsonl", &[]);
    let manifest = json(&dir.path().join("issues.manifest.json"));
    assert_eq!(manifest["stage"], "test");
    assert_eq!(manifest["backend"]["name"], "mock");
    assert_eq!(manifest["checkpoints"]["sentences"], 50);
    let c = &manifest["checkpoints"];
    assert!(c["generated"].as_u64() >= c["filtered"].as_u64());
    assert!(c["filtered"].as_u64() >= c["tested"].as_u64());
    let n_issues = std::fs::read_to_string(&issues).unwrap().lines().count();
    assert!(n_issues > 0);
    assert_eq!(c["issues"].as_u64(), Some(n_issues as u64));
    assert!(dir.path().join("issues.audit.jsonl").exists());

    let repairs = dir.path().join("repairs.jsonl");
    let config = demo("config.toml");
    ok(&["repair", "--issues", p(&issues), "--backend", "mock", "--config", p(&config), "--out", p(&repairs)]);
    assert_eq!(std::fs::read_to_string(&repairs).unwrap().lines().count(), n_issues);
    assert_eq!(json(&dir.path().join("repairs.manifest.json"))["stage"], "repair");

    let metrics = dir.path().join("metrics.json");
    let lexicon = demo("lexicon.json");
    let stdout = ok(&["eval", "--repairs", p(&repairs), "--ground-truth", p(&lexicon), "--out", p(&metrics)]);
    assert!(stdout.contains("precision"));
    let m = json(&metrics);
    assert_eq!(m["source"], "ground_truth");
    assert_eq!(m["issues"].as_u64(), Some(n_issues as u64));
    assert!(m["repair"]["err2cor"].as_f64().unwrap() > 0.0);
}

#[test]
fn rerun_is_served_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("shared.cache.jsonl");
    let first = run_test(dir.path(), "a.jsonl", &["--cache", p(&cache)]);
    let second = run_test(dir.path(), "b.jsonl", &["--cache", p(&cache)]);
    assert_eq!(std::fs::read(first).unwrap(), std::fs::read(second).unwrap());
    let m = json(&dir.path().join("b.manifest.json"));
    assert_eq!(m["cache_misses"], 0);
    assert!(m["cache_hits"].as_u64().unwrap() > 0);
    assert_eq!(
        json(&dir.path().join("a.manifest.json"))["run_id"],
        m["run_id"],
        "same inputs give the same run id"
    );
}

#[test]
fn schemes_and_budget() {
    let dir = tempfile::tempdir().unwrap();
    run_test(dir.path(), "s.jsonl", &["--schemes", "shuffle", "--no-cache"]);
    let audit = std::fs::read_to_string(dir.path().join("s.audit.jsonl")).unwrap();
    assert!(audit.lines().count() > 0);
    for line in audit.lines() {
        assert_eq!(serde_json::from_str::<Value>(line).unwrap()["kind"], "ENTITY_SHUFFLE");
    }
    assert_eq!(json(&dir.path().join("s.manifest.json"))["schemes"], serde_json::json!(["shuffle"]));

    run_test(dir.path(), "cap.jsonl", &["--max-mutants-per-sentence", "1", "--no-cache"]);
    let m = json(&dir.path().join("cap.manifest.json"));
    assert!(m["checkpoints"]["generated"].as_u64().unwrap() <= 50);

    let config = demo("config.toml");
    let corpus = demo("corpus.jsonl");
    let out = dir.path().join("x.jsonl");
    let bad = nerprobe(&[
        "test", "--corpus", p(&corpus), "--backend", "mock", "--config", p(&config), "--out", p(&out), "--schemes", "synonym",
    ]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown scheme"));
}

#[test]
fn eval_from_counts() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.json");
    std::fs::write(&counts, r#"{"tt": 286, "tf": 48, "ft": 192, "ff": 164}"#).unwrap();
    let out = dir.path().join("m.json");
    let stdout = ok(&["eval", "--counts", p(&counts), "--out", p(&out)]);
    assert!(stdout.contains("err2cor 53.9%"), "{stdout}");
    let m = json(&out);
    assert!((m["repair"]["error_reduce"].as_f64().unwrap() - 0.404).abs() < 1e-3);
}

#[test]
fn unknown_verdict_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let issues = run_test(dir.path(), "issues.jsonl", &["--no-cache"]);
    let repairs = dir.path().join("repairs.jsonl");
    let config = demo("config.toml");
    ok(&["repair", "--issues", p(&issues), "--backend", "mock", "--config", p(&config), "--out", p(&repairs), "--no-cache"]);

    let first_id = std::fs::read_to_string(&issues).unwrap().lines().next().map(|l| {
        serde_json::from_str::<Value>(l).unwrap()["id"].as_str().unwrap().to_string()
    });
    let first_id = first_id.unwrap();
    let verdicts = dir.path().join("verdicts.csv");
    std::fs::write(
        &verdicts,
        format!("issue_id,is_erroneous,error_category,annotator\n{first_id},true,OMISSION,a1\n"),
    )
    .unwrap();
    let out = dir.path().join("m.json");
    ok(&["eval", "--repairs", p(&repairs), "--verdicts", p(&verdicts), "--out", p(&out)]);
    assert_eq!(json(&out)["precision"]["overall"]["precision"], 1.0);

    std::fs::write(&verdicts, "issue_id,is_erroneous,error_category,annotator\nghost/token0,false,,a1\n").unwrap();
    let bad = nerprobe(&["eval", "--repairs", p(&repairs), "--verdicts", p(&verdicts), "--out", p(&out)]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("ghost/token0"));
}

#[test]
fn remote_backend_needs_credentials() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = demo("corpus.jsonl");
    let config = demo("config.toml");
    let out = dir.path().join("r.jsonl");
    let res = Command::new(env!("CARGO_BIN_EXE_nerprobe"))
        .args(["test", "--corpus", p(&corpus), "--backend", "acme-ner", "--config", p(&config), "--out", p(&out)])
        .env_remove("ACME_NER_API_KEY")
        .env_remove("ACME_NER_ENDPOINT")
        .output()
        .unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("ACME_NER_API_KEY"));
}
