//! Stage runners over corpora: test, repair and evaluation, plus the file
//! formats they hand off to each other.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{
    dictionary_mock_backend, normalize, remote_adapter, DictionaryBackend, EndpointConfig, FaultRule, NerBackend,
    PredictionCache, Predictor,
};
use crate::config::{ConfigFile, PipelineConfig};
use crate::error::{Error, Result};
use crate::eval::{
    category_distribution, classify_change, precision_table, CategoryShare, ConfusionCounts, ErrorCategory,
    HumanVerdict, PrecisionRow, RepairMetrics,
};
use crate::filters::{apply_filters, pair_digest, FilterVerdict};
use crate::model::{CharSpan, NerOutput, Sentence, TransformKind};
use crate::mr::{check, SuspiciousIssue, TestInput};
use crate::mutation::{
    entity_shuffle_mutants, phrase_level_mutants, structural_mutants, token_level_mutants, MutantPair,
};
use crate::oracles::{OracleSuite, ScriptedOracles};
use crate::repair::{repair_issue, RepairReport};

fn input_error(path: &Path, message: impl ToString) -> Error {
    Error::Input {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Read a corpus: JSONL `{"id", "text"}` records, or one sentence per
/// line with ids assigned as `s1`, `s2`, ...
pub fn load_corpus(path: &Path) -> Result<Vec<Sentence>> {
    let file = File::open(path).map_err(|e| input_error(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| input_error(path, e))?;
    let jsonl = lines
        .iter()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with('{'));
    let mut corpus = Vec::new();
    let mut ids = BTreeSet::new();
    for (n, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sentence = if jsonl {
            serde_json::from_str::<Sentence>(line).map_err(|e| input_error(path, format!("line {}: {e}", n + 1)))?
        } else {
            Sentence::new(format!("s{}", corpus.len() + 1), line.trim())?
        };
        if !ids.insert(sentence.id().to_string()) {
            return Err(input_error(path, format!("duplicate sentence id {:?}", sentence.id())));
        }
        corpus.push(sentence);
    }
    Ok(corpus)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| input_error(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| input_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| input_error(path, format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Surface-to-label lexicon stored as a JSON object.
pub fn load_lexicon(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| input_error(path, e))?;
    let map: BTreeMap<String, String> = serde_json::from_str(&text).map_err(|e| input_error(path, e))?;
    Ok(map.into_iter().collect())
}

pub fn load_faults(path: &Path) -> Result<Vec<FaultRule>> {
    let text = std::fs::read_to_string(path).map_err(|e| input_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| input_error(path, e))
}

/// The no-fault dictionary over a lexicon, used as ground truth.
pub fn truth_backend(lexicon_path: &Path) -> Result<DictionaryBackend> {
    DictionaryBackend::new("truth", load_lexicon(lexicon_path)?, Vec::new())
}

/// `mock` builds the dictionary backend from the config's lexicon and
/// faults; any other name is a remote service configured from the
/// environment.
pub fn build_backend(name: &str, file: &ConfigFile) -> Result<Arc<dyn NerBackend>> {
    if name == "mock" {
        let lexicon = file
            .backend
            .lexicon
            .as_deref()
            .ok_or_else(|| Error::Config("backend `mock` needs [backend] lexicon".into()))?;
        let faults = match &file.backend.faults {
            Some(p) => load_faults(p)?,
            None => Vec::new(),
        };
        let mut backend = dictionary_mock_backend(load_lexicon(lexicon)?, faults)?;
        if let Some(v) = &file.backend.version {
            backend = backend.with_version(v.clone());
        }
        return Ok(Arc::new(backend));
    }
    let mut endpoint = EndpointConfig::from_env(name)?;
    if let Some(v) = &file.backend.version {
        endpoint.version = v.clone();
    }
    if let Some(c) = &file.backend.categories {
        endpoint.categories = c.iter().cloned().collect();
    }
    Ok(Arc::new(remote_adapter(endpoint)))
}

pub fn build_oracles(file: &ConfigFile, seed: u64) -> Result<OracleSuite> {
    let script = file.oracles.script.as_deref().ok_or_else(|| {
        Error::Config("no [oracles] script configured; model adapters plug in through OracleSuite::new".into())
    })?;
    Ok(OracleSuite::scripted(ScriptedOracles::load(script, seed)?))
}

pub fn open_cache(file: &ConfigFile) -> Result<Arc<PredictionCache>> {
    Ok(Arc::new(match &file.cache.path {
        Some(p) => PredictionCache::open(p)?,
        None => PredictionCache::in_memory(),
    }))
}

/// Effective config: category-count defaults, then file overrides.
pub fn effective_config(backend: &dyn NerBackend, file: &ConfigFile) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::for_backend(backend.categories().len());
    file.apply(&mut config);
    config.validate()?;
    Ok(config)
}

/// Per-sentence seed, independent of scheduling.
pub fn sentence_seed(root: u64, id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn corpus_digest(corpus: &[Sentence]) -> String {
    let mut hasher = Sha256::new();
    for s in corpus {
        hasher.update(s.id().as_bytes());
        hasher.update([0u8]);
        hasher.update(s.text().as_bytes());
        hasher.update(*b"\n");
    }
    hex(&hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub mutant_id: String,
    pub kind: TransformKind,
    pub digest: String,
    pub original: String,
    pub mutant: String,
    pub verdict: FilterVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub id: String,
    pub stage: String,
    pub message: String,
}

impl Failure {
    fn new(id: &str, stage: &str, e: &Error) -> Self {
        log::warn!("{id}: {stage} failed: {e}");
        Failure {
            id: id.to_string(),
            stage: stage.to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoints {
    pub sentences: usize,
    pub generated: usize,
    pub filtered: usize,
    pub tested: usize,
    pub issues: usize,
    pub repaired: usize,
}

#[derive(Debug, Default)]
pub struct TestRun {
    pub issues: Vec<SuspiciousIssue>,
    pub audit: Vec<AuditRecord>,
    pub failures: Vec<Failure>,
    pub checkpoints: Checkpoints,
}

#[derive(Default)]
struct SentenceResult {
    generated: usize,
    audit: Vec<AuditRecord>,
    tested: usize,
    issues: Vec<SuspiciousIssue>,
    failures: Vec<Failure>,
}

fn generate(
    s: &Sentence,
    n_s: &NerOutput,
    oracles: &OracleSuite,
    config: &PipelineConfig,
    kinds: &[TransformKind],
    failures: &mut Vec<Failure>,
) -> Vec<MutantPair> {
    let needs_tree = kinds
        .iter()
        .any(|k| matches!(k, TransformKind::PhraseSubst | TransformKind::Structural));
    let tree = if needs_tree {
        match oracles.parse(s) {
            Ok(t) => Some(t),
            Err(e) => {
                failures.push(Failure::new(s.id(), "parse", &e));
                None
            }
        }
    } else {
        None
    };
    let mut mutants = Vec::new();
    for &kind in TransformKind::ALL.iter().filter(|k| kinds.contains(k)) {
        let generated = match (kind, &tree) {
            (TransformKind::TokenSubst, _) => token_level_mutants(s, n_s, oracles, config),
            (TransformKind::PhraseSubst, Some(t)) => phrase_level_mutants(s, n_s, t, oracles, config),
            (TransformKind::Structural, Some(t)) => structural_mutants(s, n_s, t),
            (TransformKind::EntityShuffle, _) => {
                entity_shuffle_mutants(s, n_s, sentence_seed(config.seed, s.id()), config)
            }
            _ => continue,
        };
        match generated {
            Ok(m) => mutants.extend(m),
            Err(e) => failures.push(Failure::new(s.id(), kind.scheme_name(), &e)),
        }
    }
    if let Some(cap) = config.max_mutants_per_sentence {
        mutants.truncate(cap);
    }
    mutants
}

fn test_sentence(
    s: &Sentence,
    predictor: &Predictor,
    oracles: &OracleSuite,
    config: &PipelineConfig,
    kinds: &[TransformKind],
) -> SentenceResult {
    let mut result = SentenceResult::default();
    let n_s = match predictor.predict(s) {
        Ok(o) => o,
        Err(e) => {
            result.failures.push(Failure::new(s.id(), "predict", &e));
            return result;
        }
    };
    let mutants = generate(s, &n_s, oracles, config, kinds, &mut result.failures);
    result.generated = mutants.len();
    let filtered = apply_filters(mutants.clone(), oracles, config);
    for (pair, verdict) in mutants.iter().zip(&filtered.verdicts) {
        result.audit.push(AuditRecord {
            mutant_id: pair.id().to_string(),
            kind: pair.kind,
            digest: pair_digest(pair),
            original: pair.original.text().to_string(),
            mutant: pair.mutant.text().to_string(),
            verdict: verdict.clone(),
        });
    }
    for pair in filtered.kept {
        let output_mutant = match predictor.predict(&pair.mutant) {
            Ok(o) => o,
            Err(e) => {
                result.failures.push(Failure::new(pair.id(), "predict", &e));
                continue;
            }
        };
        let input = TestInput {
            pair,
            output_original: n_s.clone(),
            output_mutant,
        };
        result.tested += 1;
        if let Some(issue) = check(&input) {
            result.issues.push(issue);
        }
    }
    result
}

fn pool(config: &PipelineConfig, oracles: &OracleSuite) -> Result<rayon::ThreadPool> {
    let threads = if oracles.requires_serial_access() {
        1
    } else {
        config.parallelism
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Generate, filter, predict and check mutants for every sentence.
/// Results keep corpus order regardless of scheduling.
pub fn run_test(
    corpus: &[Sentence],
    predictor: &Predictor,
    oracles: &OracleSuite,
    config: &PipelineConfig,
    kinds: &[TransformKind],
) -> Result<TestRun> {
    let results: Vec<SentenceResult> = pool(config, oracles)?.install(|| {
        corpus
            .par_iter()
            .map(|s| test_sentence(s, predictor, oracles, config, kinds))
            .collect()
    });
    let mut run = TestRun {
        checkpoints: Checkpoints {
            sentences: corpus.len(),
            ..Checkpoints::default()
        },
        ..TestRun::default()
    };
    for r in results {
        run.checkpoints.generated += r.generated;
        run.checkpoints.filtered += r.audit.iter().filter(|a| a.verdict.passed).count();
        run.checkpoints.tested += r.tested;
        run.issues.extend(r.issues);
        run.audit.extend(r.audit);
        run.failures.extend(r.failures);
    }
    run.checkpoints.issues = run.issues.len();
    Ok(run)
}

#[derive(Debug, Default)]
pub struct RepairRun {
    pub reports: Vec<RepairReport>,
    pub failures: Vec<Failure>,
}

pub fn run_repair(
    issues: &[SuspiciousIssue],
    predictor: &Predictor,
    oracles: &OracleSuite,
    config: &PipelineConfig,
) -> Result<RepairRun> {
    let results: Vec<Result<RepairReport>> = pool(config, oracles)?.install(|| {
        issues
            .par_iter()
            .map(|issue| repair_issue(issue, predictor, oracles, config))
            .collect()
    });
    let mut run = RepairRun::default();
    for (issue, r) in issues.iter().zip(results) {
        match r {
            Ok(report) => run.reports.push(report),
            Err(e) => run.failures.push(Failure::new(&issue.id, "repair", &e)),
        }
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub name: String,
    pub version: String,
}

impl BackendInfo {
    pub fn of(backend: &dyn NerBackend) -> Self {
        BackendInfo {
            name: backend.name().to_string(),
            version: backend.version().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub stage: String,
    pub config: PipelineConfig,
    pub backend: BackendInfo,
    pub input_digest: String,
    pub schemes: Vec<String>,
    pub checkpoints: Checkpoints,
    pub failures: usize,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub started_at: u64,
    pub finished_at: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    /// The run id hashes everything that determines the outputs.
    pub fn new(
        stage: &str,
        config: &PipelineConfig,
        backend: &dyn NerBackend,
        input_digest: String,
        schemes: &[TransformKind],
    ) -> Self {
        let schemes: Vec<String> = schemes.iter().map(|k| k.scheme_name().to_string()).collect();
        let backend = BackendInfo::of(backend);
        let mut hasher = Sha256::new();
        hasher.update(stage.as_bytes());
        hasher.update(serde_json::to_vec(config).unwrap_or_default());
        hasher.update(serde_json::to_vec(&backend).unwrap_or_default());
        hasher.update(input_digest.as_bytes());
        hasher.update(schemes.join(",").as_bytes());
        RunManifest {
            run_id: hex(&hasher.finalize()[..8]),
            stage: stage.to_string(),
            config: config.clone(),
            backend,
            input_digest,
            schemes,
            checkpoints: Checkpoints::default(),
            failures: 0,
            cache_hits: 0,
            cache_misses: 0,
            started_at: unix_now(),
            finished_at: 0,
        }
    }

    pub fn finish(&mut self, checkpoints: Checkpoints, failures: usize, cache: &PredictionCache) {
        self.checkpoints = checkpoints;
        self.failures = failures;
        self.cache_hits = cache.hits();
        self.cache_misses = cache.misses();
        self.finished_at = unix_now();
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

/// Manifest path next to an output file: `out.jsonl` → `out.manifest.json`.
pub fn manifest_path(out: &Path) -> std::path::PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

/// Audit log path next to an output file.
pub fn audit_path(out: &Path) -> std::path::PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.audit.jsonl"))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| input_error(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricsSource {
    /// Human verdicts on sampled issues.
    Verdicts,
    /// Machine ground truth from a lexicon; precision here is oracle
    /// precision, not the human-judged figure.
    GroundTruth,
    Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub source: MetricsSource,
    pub issues: usize,
    pub judged: usize,
    pub changed_reports: usize,
    pub precision: BTreeMap<String, PrecisionRow>,
    pub error_categories: BTreeMap<ErrorCategory, CategoryShare>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repair: Option<RepairMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Metrics straight from transition counts.
pub fn metrics_from_counts(counts: ConfusionCounts) -> Result<MetricsReport> {
    Ok(MetricsReport {
        source: MetricsSource::Counts,
        issues: 0,
        judged: 0,
        changed_reports: 0,
        precision: BTreeMap::new(),
        error_categories: BTreeMap::new(),
        confusion: Some(counts),
        repair: Some(crate::eval::repair_metrics(&counts)?),
        note: None,
    })
}

pub fn evaluate_with_verdicts(reports: &[RepairReport], verdicts: &[HumanVerdict]) -> Result<MetricsReport> {
    let kinds: BTreeMap<&str, TransformKind> = reports.iter().map(|r| (r.issue_id.as_str(), r.kind)).collect();
    let unknown: Vec<String> = verdicts
        .iter()
        .filter(|v| !kinds.contains_key(v.issue_id.as_str()))
        .map(|v| v.issue_id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::IdMismatch(unknown));
    }
    let judged: Vec<(TransformKind, bool)> = verdicts
        .iter()
        .map(|v| (kinds[v.issue_id.as_str()], v.is_erroneous))
        .collect();
    Ok(MetricsReport {
        source: MetricsSource::Verdicts,
        issues: reports.len(),
        judged: verdicts.len(),
        changed_reports: reports.iter().filter(|r| r.changed).count(),
        precision: precision_table(&judged),
        error_categories: category_distribution(verdicts.iter().filter_map(|v| v.error_category)),
        confusion: None,
        repair: None,
        note: None,
    })
}

type Region = BTreeSet<(CharSpan, String)>;

fn region(output: &NerOutput, spans: &[CharSpan]) -> Region {
    output
        .predictions
        .iter()
        .filter(|p| spans.iter().any(|s| s.overlaps(&p.span())))
        .map(|p| (p.span(), p.label.label().to_string()))
        .collect()
}

fn truth_output(truth: &dyn NerBackend, sentence: &Sentence) -> Result<NerOutput> {
    let raw = truth.invoke(sentence)?;
    normalize(truth, sentence, raw)
}

/// Score repairs against a no-fault ground-truth backend.
///
/// Each repaired entity on each side counts once in the transition table:
/// correct means its region matches the ground truth exactly.
pub fn evaluate_with_ground_truth(reports: &[RepairReport], truth: &dyn NerBackend) -> Result<MetricsReport> {
    let mut confusion = ConfusionCounts::default();
    let mut judged = Vec::new();
    let mut categories = Vec::new();
    for r in reports {
        let truth_s = truth_output(truth, &r.original)?;
        let truth_s2 = truth_output(truth, &r.mutant)?;
        let sides = [
            (&r.before_original, &r.after_original, &truth_s, &r.original),
            (&r.before_mutant, &r.after_mutant, &truth_s2, &r.mutant),
        ];
        for o in &r.outcomes {
            let (before, after, t, _) = match o.side {
                crate::repair::Side::Original => sides[0],
                crate::repair::Side::Mutant => sides[1],
            };
            let expected = region(t, &o.spans);
            confusion.record(region(before, &o.spans) == expected, region(after, &o.spans) == expected);
        }
        let mut category = None;
        for d in &r.outcomes {
            let (before, _, t, sentence) = match d.side {
                crate::repair::Side::Original => sides[0],
                crate::repair::Side::Mutant => sides[1],
            };
            let spans = crate::model::word_occurrences(sentence.text(), &d.entity.surface);
            if region(before, &spans) != region(t, &spans) {
                category = classify_change(before, t, &d.entity.surface).ok();
                if category.is_some() {
                    break;
                }
            }
        }
        let erroneous = category.is_some()
            || r.outcomes.is_empty()
                && (r.before_original.predictions != truth_s.predictions
                    || r.before_mutant.predictions != truth_s2.predictions);
        judged.push((r.kind, erroneous));
        categories.extend(category);
    }
    let (repair, note) = match crate::eval::repair_metrics(&confusion) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(MetricsReport {
        source: MetricsSource::GroundTruth,
        issues: reports.len(),
        judged: judged.len(),
        changed_reports: reports.iter().filter(|r| r.changed).count(),
        precision: precision_table(&judged),
        error_categories: category_distribution(categories),
        confusion: Some(confusion),
        repair,
        note,
    })
}
