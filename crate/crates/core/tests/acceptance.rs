//! Acceptance suite: one PASS/FAIL line per criterion.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nerprobe::backend::{
    dictionary_mock_backend, DictionaryBackend, FaultEffect, FaultRule, PredictionCache, Predictor, Trigger,
};
use nerprobe::config::{ConfigFile, PipelineConfig};
use nerprobe::eval::{classify_change, precision_of, repair_metrics, ConfusionCounts, ErrorCategory};
use nerprobe::filters::{evaluate_pair, semantic_gate, syntactic_delta, syntactic_gate};
use nerprobe::model::{CharSpan, EntityCategory, NerOutput, NerPrediction, Sentence, TransformKind};
use nerprobe::mr::{check, TestInput};
use nerprobe::mutation::{entity_shuffle_mutants, Edit, MutantPair, Provenance};
use nerprobe::oracles::{cosine_similarity, EmbeddingVector, MaskCandidate, OracleSuite, ScriptedOracles};
use nerprobe::pipeline::{load_corpus, load_faults, load_lexicon, run_repair, run_test, write_jsonl};
use nerprobe::repair::{
    evaluate_f, relabel, repair_issue, resolve_range_conflicts, RepairOutcome, RepairStatus, Side,
    SuspiciousEntity,
};
use nerprobe::syntax::{declarative_to_interrogative, ConstituencyTree, RewriteRule};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn within(started: Instant, limit: Duration) -> Result<(), String> {
    let took = started.elapsed();
    ensure!(took < limit, "took {took:?}, limit {limit:?}");
    Ok(())
}

fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo")
}

fn sentence(id: &str, text: &str) -> Sentence {
    Sentence::new(id, text).unwrap()
}

fn labels(s: &Sentence, entities: &[(&str, &str)]) -> NerOutput {
    let preds = entities
        .iter()
        .map(|(surface, label)| {
            let start = s.text().find(surface).expect("surface in text");
            let start = s.text()[..start].chars().count();
            NerPrediction::new(*surface, CharSpan::new(start, start + surface.chars().count()), *label)
        })
        .collect();
    NerOutput::new(s, preds).unwrap()
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let rows = [
        ((286, 48, 192, 164), (53.9, 14.4, 40.4)),
        ((483, 117, 264, 285), (48.1, 19.5, 26.8)),
        ((456, 63, 275, 223), (55.2, 12.1, 42.6)),
        ((413, 85, 325, 149), (68.6, 17.1, 50.6)),
    ];
    for ((tt, tf, ft, ff), expected) in rows {
        let m = repair_metrics(&ConfusionCounts::new(tt, tf, ft, ff)).map_err(|e| e.to_string())?;
        let got = (m.err2cor * 100.0, m.cor2err * 100.0, m.error_reduce * 100.0);
        ensure!(
            (got.0 - expected.0).abs() <= 0.1 && (got.1 - expected.1).abs() <= 0.1 && (got.2 - expected.2).abs() <= 0.1,
            "counts ({tt},{tf},{ft},{ff}) gave {got:?}, expected {expected:?}"
        );
    }
    for ((hits, total), expected) in [((161, 186), 86.6), ((170, 200), 85.0), ((186, 200), 93.0), ((185, 198), 93.4)] {
        let verdicts: Vec<bool> = (0..total).map(|i| i < hits).collect();
        let p = precision_of(&verdicts).map_err(|e| e.to_string())? * 100.0;
        ensure!((p - expected).abs() <= 0.1, "{hits}/{total} gave {p:.2}%, expected {expected}%");
    }
    within(started, Duration::from_secs(1))?;
    Ok("4 repair rows and 4 precision rows within 0.1 pp".into())
}

fn rewrite(text: &str, tree: &str, entities: &[(&str, &str)]) -> Result<(String, RewriteRule), String> {
    let s = sentence("x", text);
    let t = ConstituencyTree::parse_for(tree, &s).map_err(|e| e.to_string())?;
    let r = declarative_to_interrogative(&s, &t, &labels(&s, entities)).map_err(|e| e.to_string())?;
    Ok((r.mutant_text, r.rule_applied))
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let (twitter, rule) = rewrite(
        "Twitter was the obvious solution.",
        "(ROOT (S (NP (NNP Twitter)) (VP (VBD was) (NP (DT the) (JJ obvious) (NN solution))) (. .)))",
        &[],
    )?;
    ensure!(twitter == "Was twitter the obvious solution?", "got {twitter:?}");
    ensure!(rule == RewriteRule::BeMainVerb, "rule {rule:?}");
    let (floods, rule) = rewrite(
        "He has faced floods.",
        "(ROOT (S (NP (PRP He)) (VP (VBZ has) (VP (VBN faced) (NP (NNS floods)))) (. .)))",
        &[],
    )?;
    ensure!(floods == "Has he faced floods?", "got {floods:?}");
    ensure!(rule == RewriteRule::AuxFronting, "rule {rule:?}");
    let (visit, rule) = rewrite(
        "Merkel visited a new museum in Berlin.",
        "(ROOT (S (NP (NNP Merkel)) (VP (VBD visited) (NP (DT a) (JJ new) (NN museum)) (PP (IN in) (NP (NNP Berlin)))) (. .)))",
        &[("Merkel", "PER"), ("Berlin", "LOC")],
    )?;
    ensure!(rule == RewriteRule::NormalVerbAuxInsert, "rule {rule:?}");
    ensure!(visit == "Did Merkel visit a new museum in Berlin?", "got {visit:?}");
    let (watch, _) = rewrite(
        "She watches films.",
        "(ROOT (S (NP (PRP She)) (VP (VBZ watches) (NP (NNS films))) (. .)))",
        &[],
    )?;
    ensure!(watch == "Does she watch films?", "got {watch:?}");
    within(started, Duration::from_secs(1))?;
    Ok("be-fronting, aux-fronting and do-insertion goldens exact".into())
}

const FILLER: &[&str] = &["the", "report", "said", "that", "and", "met", "with", "in", "after", "talks", "on", "Monday", ","];
const POOLS: &[(&str, &[&str])] = &[
    ("PER", &["Anna Berg", "Tom", "Li Wei", "Rosa", "Kofi Annan"]),
    ("LOC", &["Oslo", "New Delhi", "Quito", "Lagos"]),
    ("ORG", &["Acme Corp", "UNESCO", "Fiat", "Red Cross"]),
];

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let config = PipelineConfig::default();
    let mut mutants = 0usize;
    for n in 0..1000 {
        // Plant 2..6 entities between filler words; at least one category
        // gets two distinct surfaces so a non-identity shuffle exists.
        let count = rng.random_range(2..=6);
        let (forced_label, forced_pool) = POOLS[rng.random_range(0..POOLS.len())];
        let mut forced: Vec<&str> = forced_pool.to_vec();
        forced.shuffle(&mut rng);
        let mut planted: Vec<(&str, &str)> = vec![(forced[0], forced_label), (forced[1], forced_label)];
        while planted.len() < count {
            let (label, pool) = POOLS[rng.random_range(0..POOLS.len())];
            planted.push((pool[rng.random_range(0..pool.len())], label));
        }
        planted.shuffle(&mut rng);
        let mut segments = Vec::new();
        for _ in 0..=planted.len() {
            let len = rng.random_range(1..4);
            let words: Vec<&str> = (0..len).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect();
            segments.push(words.join(" "));
        }
        let mut text = segments[0].clone();
        let mut preds = Vec::new();
        for (i, (surface, label)) in planted.iter().enumerate() {
            text.push(' ');
            let start = text.chars().count();
            text.push_str(surface);
            preds.push(NerPrediction::new(*surface, CharSpan::new(start, start + surface.chars().count()), *label));
            text.push(' ');
            text.push_str(&segments[i + 1]);
        }
        text.push('.');
        let s = sentence(&format!("r{n}"), &text);
        let out = NerOutput::new(&s, preds).map_err(|e| e.to_string())?;
        let pairs = entity_shuffle_mutants(&s, &out, n as u64, &config).map_err(|e| e.to_string())?;
        for pair in pairs {
            mutants += 1;
            let Edit::Shuffle { categories } = &pair.edit else {
                return Err(format!("{}: not a shuffle edit", pair.id()));
            };
            let by_label: BTreeMap<&str, _> = categories.iter().map(|c| (c.label.as_str(), c)).collect();
            let mut cursor: BTreeMap<&str, usize> = BTreeMap::new();
            let mut expected = segments[0].clone();
            let mut changed = false;
            for (i, (surface, label)) in planted.iter().enumerate() {
                let replacement = match by_label.get(label) {
                    Some(c) => {
                        let k = cursor.entry(label).or_default();
                        ensure!(c.original.get(*k).map(String::as_str) == Some(*surface), "{text:?}: category order");
                        let r = c.shuffled[*k].as_str();
                        *k += 1;
                        r
                    }
                    None => surface,
                };
                changed |= replacement != *surface;
                expected.push(' ');
                expected.push_str(replacement);
                expected.push(' ');
                expected.push_str(&segments[i + 1]);
            }
            expected.push('.');
            ensure!(pair.mutant.text() == expected, "{text:?} -> {:?}, expected {expected:?}", pair.mutant.text());
            ensure!(changed, "{text:?}: identity permutation emitted");
            for c in categories {
                let mut a = c.original.clone();
                let mut b = c.shuffled.clone();
                a.sort();
                b.sort();
                ensure!(a == b, "{text:?}: multiset of {} changed", c.label);
            }
        }
    }
    ensure!(mutants > 1000, "only {mutants} shuffles produced");
    within(started, Duration::from_secs(30))?;
    Ok(format!("1000 sentences, {mutants} shuffles, 0 violations"))
}

struct Demo {
    corpus: Vec<Sentence>,
    file: ConfigFile,
    config: PipelineConfig,
    oracles: OracleSuite,
}

fn demo() -> Result<Demo, String> {
    let dir = demo_dir();
    let file = ConfigFile::load(&dir.join("config.toml")).map_err(|e| e.to_string())?;
    let corpus = load_corpus(&dir.join("corpus.jsonl")).map_err(|e| e.to_string())?;
    let mut config = PipelineConfig::for_backend(4);
    file.apply(&mut config);
    let script = file.oracles.script.clone().unwrap();
    let oracles = OracleSuite::scripted(ScriptedOracles::load(&script, config.seed).map_err(|e| e.to_string())?);
    Ok(Demo {
        corpus,
        file,
        config,
        oracles,
    })
}

fn demo_backend(file: &ConfigFile, faults: bool) -> Result<Arc<DictionaryBackend>, String> {
    let lexicon = load_lexicon(file.backend.lexicon.as_deref().unwrap()).map_err(|e| e.to_string())?;
    let faults = if faults {
        load_faults(file.backend.faults.as_deref().unwrap()).map_err(|e| e.to_string())?
    } else {
        Vec::new()
    };
    Ok(Arc::new(dictionary_mock_backend(lexicon, faults).map_err(|e| e.to_string())?))
}

fn criterion_4() -> Outcome {
    let started = Instant::now();
    let d = demo()?;
    ensure!(d.corpus.len() == 50, "corpus has {} sentences", d.corpus.len());

    let clean = demo_backend(&d.file, false)?;
    let predictor = Predictor::new(clean.clone(), Arc::new(PredictionCache::in_memory()));
    let run = run_test(&d.corpus, &predictor, &d.oracles, &d.config, &TransformKind::ALL).map_err(|e| e.to_string())?;
    ensure!(run.failures.is_empty(), "clean run failures: {:?}", run.failures);
    let kinds: BTreeSet<&str> = run.audit.iter().filter(|a| a.verdict.passed).map(|a| a.kind.scheme_name()).collect();
    ensure!(kinds.len() == 4, "only schemes {kinds:?} produced tested mutants");
    ensure!(run.issues.is_empty(), "no-fault backend raised {} issues, first {:?}", run.issues.len(), run.issues[0].id);
    let clean_tested = run.checkpoints.tested;

    let faulty = demo_backend(&d.file, true)?;
    let predictor = Predictor::new(faulty.clone(), Arc::new(PredictionCache::in_memory()));
    let run = run_test(&d.corpus, &predictor, &d.oracles, &d.config, &TransformKind::ALL).map_err(|e| e.to_string())?;
    let rules = faulty.faults().count();
    let categories: BTreeSet<ErrorCategory> = faulty.faults().map(|f| f.effect.error_category()).collect();
    ensure!(rules == 5 && categories.len() == 4, "{rules} rules over {} classes", categories.len());

    let issue_ids: BTreeSet<&str> = run.issues.iter().map(|i| i.id.as_str()).collect();
    let mut fired_any = BTreeSet::new();
    let mut fired_in_issues = BTreeSet::new();
    for s in &d.corpus {
        ensure!(faulty.fired_rules(s.text()).is_empty(), "{}: fault fires on an original", s.id());
    }
    for a in run.audit.iter().filter(|a| a.verdict.passed) {
        let fired = faulty.fired_rules(&a.mutant);
        fired_any.extend(fired.iter().copied());
        ensure!(
            fired.is_empty() || issue_ids.contains(a.mutant_id.as_str()),
            "{}: rules {fired:?} fired without an issue",
            a.mutant_id
        );
    }
    for issue in &run.issues {
        let mut fired = faulty.fired_rules(issue.test_input.pair.original.text());
        fired.extend(faulty.fired_rules(issue.test_input.pair.mutant.text()));
        ensure!(!fired.is_empty(), "{}: issue with no fired fault", issue.id);
        fired_in_issues.extend(fired);
    }
    ensure!(fired_any.len() == rules, "only rules {fired_any:?} fired");
    ensure!(fired_in_issues == fired_any, "issues trace to {fired_in_issues:?}, fired {fired_any:?}");
    within(started, Duration::from_secs(120))?;
    Ok(format!(
        "clean: 0 issues over {clean_tested} tested mutants; faulty: {} issues, all 5 rules fired and traced",
        run.issues.len()
    ))
}

#[derive(Clone)]
struct BruteCandidate {
    entity: String,
    logit: f64,
    consistent: bool,
    subword: bool,
    embedding: Vec<f64>,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn random_word(rng: &mut ChaCha8Rng, capitalized: bool) -> String {
    let len = rng.random_range(3..7);
    let mut w: String = (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
    if capitalized {
        w[..1].make_ascii_uppercase();
    }
    w
}

fn random_vec(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn criterion_5() -> Outcome {
    let started = Instant::now();
    let labels = ["PER", "LOC", "ORG", "MISC"];
    let mut checked = 0;
    let mut relabeled = 0;
    for case in 0..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
        let config = PipelineConfig {
            k_balance: rng.random_range(0.5..4.0),
            alpha: rng.random_range(0.05..0.6),
            lambda: rng.random_range(0.2..0.95),
            p_threshold: rng.random_range(4.0..7.0),
            s_threshold_repair: rng.random_range(-0.2..0.6),
            ..PipelineConfig::default()
        };
        let surface = "Alvarez";
        let text = format!("Yesterday {surface} opened a plant.");
        let start = 10;
        let s = sentence("c", &text);
        let h = random_vec(&mut rng);
        let mut script = ScriptedOracles::new(case);
        script.add_context_embedding(surface, &text, h.clone());

        // Either one whole-word piece or two subword pieces.
        let pieces: Vec<(usize, usize, bool)> = if rng.random_bool(0.35) {
            script.add_pieces(surface, vec!["Alv".into(), "##arez".into()]);
            vec![(0, 3, true), (3, 7, true)]
        } else {
            vec![(0, 7, false)]
        };
        let mut lexicon: HashMap<String, &str> = HashMap::new();
        let mut brute: Vec<BruteCandidate> = Vec::new();
        for &(ps, pe, subword) in &pieces {
            let piece_capitalized = ps == 0;
            let masked = format!("{}[MASK]{}", &text[..start + ps], &text[start + pe..]);
            let mut cands = Vec::new();
            let mut used = BTreeSet::new();
            for _ in 0..rng.random_range(2..8) {
                let consistent = rng.random_bool(0.8);
                let word = random_word(&mut rng, piece_capitalized == consistent);
                if !used.insert(word.clone()) {
                    continue;
                }
                let logit = (rng.random_range(3.0..10.0) * 100.0f64).round() / 100.0;
                cands.push(MaskCandidate::new(word.clone(), logit));
                let entity = format!("{}{}{}", &surface[..ps], word, &surface[pe..]);
                let mutant_text = format!("Yesterday {entity} opened a plant.");
                let embedding = random_vec(&mut rng);
                script.add_context_embedding(&entity, &mutant_text, embedding.clone());
                if consistent && rng.random_bool(0.75) {
                    lexicon.insert(entity.clone(), labels[rng.random_range(0..labels.len())]);
                }
                brute.push(BruteCandidate {
                    entity,
                    logit,
                    consistent,
                    subword,
                    embedding,
                });
            }
            script.add_masked(masked, cands);
        }

        // Independent accumulation: label -> (score, logit sum).
        let mut table: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for c in &brute {
            if !c.consistent || c.logit < config.p_threshold {
                continue;
            }
            let sim = cosine(&h, &c.embedding);
            if sim < config.s_threshold_repair {
                continue;
            }
            let label = lexicon.get(&c.entity).copied().unwrap_or("NULL");
            let mut f = c.logit * (config.k_balance * sim).exp();
            if label == "NULL" {
                f *= config.alpha;
            }
            if c.subword {
                f *= config.lambda;
            }
            let e = table.entry(label.to_string()).or_default();
            e.0 += f;
            e.1 += c.logit;
        }
        let expected = table
            .iter()
            .max_by(|a, b| {
                a.1 .0
                    .total_cmp(&b.1 .0)
                    .then(a.1 .1.total_cmp(&b.1 .1))
                    .then(b.0.cmp(a.0))
            })
            .map(|(l, (score, _))| (l.clone(), *score));

        let backend = dictionary_mock_backend(lexicon.iter().map(|(k, v)| (k.clone(), v.to_string())), vec![])
            .map_err(|e| e.to_string())?;
        let predictor = Predictor::uncached(Arc::new(backend));
        let entity = SuspiciousEntity {
            surface: surface.into(),
            label_in_s: EntityCategory::new("ORG"),
            label_in_s2: EntityCategory::null(),
            occurrences_s: vec![CharSpan::new(start, start + surface.len())],
            occurrences_s2: vec![],
        };
        let got = relabel(&s, &entity, Side::Original, &predictor, &OracleSuite::scripted(script), &config)
            .map_err(|e| format!("case {case}: {e}"))?;
        match expected {
            None => {
                ensure!(got.status == RepairStatus::Abstained, "case {case}: expected abstain, got {:?}", got.status);
                ensure!(got.p_score == 0.0, "case {case}: abstain with p_score {}", got.p_score);
            }
            Some((label, score)) => {
                relabeled += 1;
                ensure!(got.relabeled.label() == label, "case {case}: {} vs brute force {label}", got.relabeled.label());
                let rel = (got.p_score - score).abs() / score.abs().max(f64::MIN_POSITIVE);
                ensure!(rel <= 1e-9, "case {case}: p_score {} vs {score}", got.p_score);
            }
        }
        checked += 1;
    }
    ensure!(relabeled >= 200, "only {relabeled} configurations produced a relabel");
    within(started, Duration::from_secs(60))?;
    Ok(format!("{checked} configurations ({relabeled} relabeled) agree with brute force"))
}

fn criterion_6() -> Outcome {
    let c = PipelineConfig::default();
    let a = evaluate_f(1.0, 0.0, false, false, &c);
    let b = evaluate_f(2.0, 1.0, true, false, &c);
    let d = evaluate_f(5.5, 0.45, true, true, &c);
    ensure!(a == 1.0, "F(1,0) = {a}");
    ensure!((b - 4.8730).abs() <= 1e-3, "F(2,1,null) = {b}");
    ensure!((d - 1.6941).abs() <= 1e-3, "F(5.5,0.45,null,subword) = {d}");
    Ok(format!("F = {a}, {b:.4}, {d:.4}"))
}

fn conflict_outcome(span: (usize, usize), p: f64) -> RepairOutcome {
    let e = SuspiciousEntity {
        surface: format!("e{}_{}", span.0, span.1),
        label_in_s: EntityCategory::null(),
        label_in_s2: EntityCategory::new("ORG"),
        occurrences_s: vec![CharSpan::new(span.0, span.1)],
        occurrences_s2: vec![],
    };
    RepairOutcome {
        relabeled: EntityCategory::new("ORG"),
        p_score: p,
        status: RepairStatus::Relabeled,
        ..RepairOutcome::abstained(&e, Side::Original, vec![CharSpan::new(span.0, span.1)])
    }
}

fn criterion_7() -> Outcome {
    let out = resolve_range_conflicts(vec![conflict_outcome((0, 20), 0.911), conflict_outcome((8, 20), 0.503)]);
    ensure!(
        out[0].status == RepairStatus::Relabeled && out[1].status == RepairStatus::DeprecatedByConflict,
        "Cricket South Africa statuses {:?}",
        out.iter().map(|o| o.status).collect::<Vec<_>>()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..1000 {
        let n = rng.random_range(1..8);
        let outcomes: Vec<RepairOutcome> = (0..n)
            .map(|_| {
                let a = rng.random_range(0..30);
                let len = rng.random_range(1..10);
                let p = if rng.random_bool(0.2) { 0.5 } else { rng.random_range(0.0..1.0) };
                conflict_outcome((a, a + len), p)
            })
            .collect();
        let resolved = resolve_range_conflicts(outcomes);
        ensure!(resolved.len() == n, "case {case}: outcomes dropped");
        let kept: Vec<&RepairOutcome> = resolved.iter().filter(|o| o.status == RepairStatus::Relabeled).collect();
        ensure!(!kept.is_empty(), "case {case}: every outcome deprecated");
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                ensure!(!a.spans[0].overlaps(&b.spans[0]), "case {case}: {:?} overlaps {:?}", a.spans, b.spans);
            }
        }
    }
    Ok("golden deprecates the 0.503 entity; 1000 random sets overlap-free".into())
}

fn bbc() -> Outcome {
    let text = "BBC News is an operational business division of the BBC.";
    let lexicon = [("CNN News", "ORG"), ("Fox News", "ORG"), ("BBC Newspaper", "MISC"), ("BBC", "ORG")]
        .map(|(a, b)| (a.to_string(), b.to_string()));
    let backend = dictionary_mock_backend(lexicon, vec![]).map_err(|e| e.to_string())?;
    let mut o = ScriptedOracles::new(0);
    o.add_masked(
        "[MASK] News is an operational business division of the BBC.",
        vec![MaskCandidate::new("CNN", 9.0), MaskCandidate::new("Fox", 8.0), MaskCandidate::new("ABC", 3.0)],
    );
    o.add_masked(
        "BBC [MASK] is an operational business division of the BBC.",
        vec![MaskCandidate::new("Newspaper", 7.0)],
    );
    o.add_embedding("*", vec![1.0, 0.2]);
    let e = SuspiciousEntity {
        surface: "BBC News".into(),
        label_in_s: EntityCategory::new("MISC"),
        label_in_s2: EntityCategory::new("ORG"),
        occurrences_s: vec![CharSpan::new(0, 8)],
        occurrences_s2: vec![CharSpan::new(0, 8)],
    };
    let out = relabel(
        &sentence("b", text),
        &e,
        Side::Original,
        &Predictor::uncached(Arc::new(backend)),
        &OracleSuite::scripted(o),
        &PipelineConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let org = out.scores.entries.get("ORG").copied().unwrap_or(0.0);
    let misc = out.scores.entries.get("MISC").copied().unwrap_or(0.0);
    ensure!(out.relabeled.label() == "ORG", "relabeled {}", out.relabeled.label());
    ensure!(org > misc, "ORG {org} <= MISC {misc}");
    Ok(format!("BBC News -> ORG ({org:.2} > MISC {misc:.2})"))
}

fn replace_edit(a: &str, b: &str) -> Edit {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let pre = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let suf = a[pre..].iter().rev().zip(b[pre..].iter().rev()).take_while(|(x, y)| x == y).count();
    Edit::Replace {
        span: CharSpan::new(pre, a.len() - suf),
        original: a[pre..a.len() - suf].iter().collect(),
        replacement: b[pre..b.len() - suf].iter().collect(),
        replacement_span: CharSpan::new(pre, b.len() - suf),
    }
}

struct FixCase {
    name: &'static str,
    original: &'static str,
    mutant: &'static str,
    fault: FaultRule,
    lexicon: &'static [(&'static str, &'static str)],
    masks: &'static [(&'static str, &'static [(&'static str, f64)])],
    surface: &'static str,
    category: ErrorCategory,
    fixed: &'static [(&'static str, &'static str)],
}

fn fix_case(c: &FixCase) -> Result<(), String> {
    let backend = dictionary_mock_backend(
        c.lexicon.iter().map(|(a, b)| (a.to_string(), b.to_string())),
        vec![c.fault.clone()],
    )
    .map_err(|e| e.to_string())?;
    let predictor = Predictor::uncached(Arc::new(backend));
    let s = sentence("t", c.original);
    let s2 = sentence("t/token0", c.mutant);
    let input = TestInput {
        output_original: predictor.predict(&s).map_err(|e| e.to_string())?,
        output_mutant: predictor.predict(&s2).map_err(|e| e.to_string())?,
        pair: MutantPair {
            edit: replace_edit(c.original, c.mutant),
            original: s,
            mutant: s2,
            kind: TransformKind::TokenSubst,
            provenance: Provenance::default(),
        },
    };
    let issue = check(&input).ok_or_else(|| format!("{}: no MR violation", c.name))?;
    let mut script = ScriptedOracles::new(0);
    for (masked, cands) in c.masks {
        script.add_masked(*masked, cands.iter().map(|(w, l)| MaskCandidate::new(*w, *l)).collect());
    }
    script.add_embedding("*", vec![1.0, 0.0]);
    let report = repair_issue(&issue, &predictor, &OracleSuite::scripted(script), &PipelineConfig::default())
        .map_err(|e| e.to_string())?;
    let got: Vec<(String, String)> = report
        .after_original
        .predictions
        .iter()
        .map(|p| (p.surface.clone(), p.label.label().to_string()))
        .collect();
    let want: Vec<(String, String)> = c.fixed.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    ensure!(got == want, "{}: fixed prediction {got:?}, expected {want:?}", c.name);
    let category = classify_change(&report.before_original, &report.after_original, c.surface).map_err(|e| e.to_string())?;
    ensure!(category == c.category, "{}: classified {category:?}", c.name);
    Ok(())
}

fn criterion_8() -> Outcome {
    let bbc = bbc()?;
    let cases = [
        FixCase {
            name: "omission",
            original: "The ESA said the launch was delayed.",
            mutant: "The ESA stated the launch was delayed.",
            fault: FaultRule {
                trigger: Trigger::Substring("said".into()),
                effect: FaultEffect::DropEntity { surface: "ESA".into() },
            },
            lexicon: &[("ESA", "ORG"), ("NASA", "ORG"), ("JAXA", "ORG")],
            masks: &[
                ("The [MASK] said the launch was delayed.", &[("NASA", 9.0), ("JAXA", 7.0)]),
                ("The [MASK] stated the launch was delayed.", &[("NASA", 9.0)]),
            ],
            surface: "ESA",
            category: ErrorCategory::Omission,
            fixed: &[("ESA", "ORG")],
        },
        FixCase {
            name: "over-labeling",
            original: "The team was halfway through the season.",
            mutant: "The team is halfway through the season.",
            fault: FaultRule {
                trigger: Trigger::Substring(" was ".into()),
                effect: FaultEffect::AddEntity {
                    surface: "halfway".into(),
                    label: "CARDINAL".into(),
                },
            },
            lexicon: &[("Premier League", "ORG")],
            masks: &[
                ("The team was [MASK] through the season.", &[("midway", 9.0), ("partway", 7.5)]),
                ("The team is [MASK] through the season.", &[("midway", 9.0)]),
            ],
            surface: "halfway",
            category: ErrorCategory::OverLabeling,
            fixed: &[],
        },
        FixCase {
            name: "incorrect category",
            original: "Fighting reached Mekelle on Monday.",
            mutant: "Fighting reached Mekelle on Tuesday.",
            fault: FaultRule {
                trigger: Trigger::Substring("Monday".into()),
                effect: FaultEffect::Relabel {
                    surface: "Mekelle".into(),
                    new_label: "PER".into(),
                },
            },
            lexicon: &[("Mekelle", "LOC"), ("Adigrat", "LOC"), ("Axum", "LOC"), ("Abiy", "PER")],
            masks: &[
                ("Fighting reached [MASK] on Monday.", &[("Adigrat", 9.0), ("Axum", 8.0), ("Abiy", 6.0)]),
                ("Fighting reached [MASK] on Tuesday.", &[("Adigrat", 9.0)]),
            ],
            surface: "Mekelle",
            category: ErrorCategory::IncorrectCategory,
            fixed: &[("Mekelle", "LOC")],
        },
        FixCase {
            name: "range",
            original: "Project Stratum will extend superfast broadband.",
            mutant: "Project Stratum will extend fast broadband.",
            fault: FaultRule {
                trigger: Trigger::Substring("superfast".into()),
                effect: FaultEffect::SplitEntity {
                    surface: "Project Stratum".into(),
                    parts: vec!["Project".into(), "Stratum".into()],
                },
            },
            lexicon: &[("Project Stratum", "MISC"), ("Project Kuiper", "MISC"), ("Operation Stratum", "MISC")],
            masks: &[
                ("[MASK] Stratum will extend superfast broadband.", &[("Operation", 9.0)]),
                ("Project [MASK] will extend superfast broadband.", &[("Kuiper", 8.0)]),
                ("[MASK] Stratum will extend fast broadband.", &[("Operation", 9.0)]),
                ("Project [MASK] will extend fast broadband.", &[("Kuiper", 8.0)]),
            ],
            surface: "Project Stratum",
            category: ErrorCategory::RangeError,
            fixed: &[("Project Stratum", "MISC")],
        },
    ];
    for c in &cases {
        fix_case(c)?;
    }
    Ok(format!("{bbc}; omission, over-labeling, incorrect category and range fixed end to end"))
}

fn full_run(dir: &Path, parallelism: usize) -> Result<(Vec<u8>, Vec<u8>), String> {
    let mut d = demo()?;
    d.config.parallelism = parallelism;
    let backend = demo_backend(&d.file, true)?;
    let predictor = Predictor::new(backend, Arc::new(PredictionCache::in_memory()));
    let test = run_test(&d.corpus, &predictor, &d.oracles, &d.config, &TransformKind::ALL).map_err(|e| e.to_string())?;
    let repair = run_repair(&test.issues, &predictor, &d.oracles, &d.config).map_err(|e| e.to_string())?;
    let issues = dir.join("issues.jsonl");
    let repairs = dir.join("repairs.jsonl");
    write_jsonl(&issues, &test.issues).map_err(|e| e.to_string())?;
    write_jsonl(&repairs, &repair.reports).map_err(|e| e.to_string())?;
    Ok((std::fs::read(issues).unwrap(), std::fs::read(repairs).unwrap()))
}

fn criterion_9() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = full_run(a.path(), 4)?;
    let second = full_run(b.path(), 1)?;
    ensure!(!first.0.is_empty() && !first.1.is_empty(), "empty outputs");
    ensure!(first.0 == second.0, "issue files differ");
    ensure!(first.1 == second.1, "repair files differ");
    Ok(format!(
        "issues ({} bytes) and repairs ({} bytes) byte-identical across runs and thread counts",
        first.0.len(),
        first.1.len()
    ))
}

fn filter_pair() -> MutantPair {
    let original = "They praised the quick response.";
    let mutant = "They praised the rapid response.";
    MutantPair {
        edit: replace_edit(original, mutant),
        original: sentence("f", original),
        mutant: sentence("f/token0", mutant),
        kind: TransformKind::TokenSubst,
        provenance: Provenance::default(),
    }
}

fn criterion_10() -> Outcome {
    let config = PipelineConfig::default();
    let h = EmbeddingVector::new(vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let h2 = EmbeddingVector::new(vec![13.0, 11.0, 10.0, 3.0, 1.0]).unwrap();
    let sim = cosine_similarity(&h, &h2).map_err(|e| e.to_string())?;
    ensure!(sim == 0.65, "constructed similarity {sim}");
    ensure!(semantic_gate(sim, config.s_threshold_testing), "similarity 0.65 rejected");
    let eps = syntactic_delta(0.5, 0.25);
    ensure!(eps == 0.25 && syntactic_gate(eps, 0.25), "epsilon at threshold rejected");

    let pair = filter_pair();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for case in 0..500 {
        let mut script = ScriptedOracles::new(case);
        script.add_context_embedding("quick", pair.original.text(), random_vec(&mut rng));
        script.add_context_embedding("rapid", pair.mutant.text(), random_vec(&mut rng));
        script.add_naturalness(pair.original.text(), rng.random_range(0.0..1.0));
        script.add_naturalness(pair.mutant.text(), rng.random_range(0.0..1.0));
        let oracles = OracleSuite::scripted(script);
        let (t1, t2) = {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            (a.min(b), a.max(b))
        };
        let (e1, e2) = {
            let a: f64 = rng.random_range(-0.5..0.5);
            let b: f64 = rng.random_range(-0.5..0.5);
            (a.min(b), a.max(b))
        };
        let strict = PipelineConfig {
            s_threshold_testing: t2,
            syn_threshold: nerprobe::config::SynThresholds::uniform(e1),
            ..config.clone()
        };
        let loose = PipelineConfig {
            s_threshold_testing: t1,
            syn_threshold: nerprobe::config::SynThresholds::uniform(e2),
            ..config.clone()
        };
        let vs = evaluate_pair(&pair, &oracles, &strict);
        let vl = evaluate_pair(&pair, &oracles, &loose);
        ensure!(!vs.passed || vl.passed, "case {case}: passes strict thresholds but fails loose ones");
    }
    Ok("0.65 and epsilon boundaries pass; monotone over 500 scored pairs".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("metric golden values", criterion_1),
        ("structural transformation goldens", criterion_2),
        ("entity shuffle properties", criterion_3),
        ("MR soundness and completeness", criterion_4),
        ("relabel matches brute force", criterion_5),
        ("score point values", criterion_6),
        ("range conflict resolution", criterion_7),
        ("worked-example repairs", criterion_8),
        ("determinism", criterion_9),
        ("filter boundary semantics", criterion_10),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let n = n + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail} [{took:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {why} [{took:.2}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
