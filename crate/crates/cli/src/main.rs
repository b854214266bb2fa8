use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use nerprobe::backend::{NerBackend, PredictionCache, Predictor};
use nerprobe::config::{ConfigFile, PipelineConfig};
use nerprobe::eval::{load_verdicts, ConfusionCounts};
use nerprobe::mr::SuspiciousIssue;
use nerprobe::model::TransformKind;
use nerprobe::pipeline::{
    audit_path, build_backend, build_oracles, corpus_digest, effective_config, evaluate_with_ground_truth,
    evaluate_with_verdicts, file_digest, load_corpus, manifest_path, metrics_from_counts, read_jsonl,
    run_repair, run_test, truth_backend, write_jsonl, Checkpoints, MetricsReport, RunManifest,
};
use nerprobe::repair::RepairReport;

#[derive(Parser)]
#[command(name = "nerprobe", version, about = "Metamorphic testing and repair for NER systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate mutants, query the backend and write suspicious issues.
    Test(TestArgs),
    /// Relabel suspicious entities and write repair reports.
    Repair(RepairArgs),
    /// Compute precision, error categories and repair metrics.
    Eval(EvalArgs),
}

#[derive(Args)]
struct Common {
    /// NER backend: `mock` or a remote service name configured via
    /// `<NAME>_API_KEY` and `<NAME>_ENDPOINT`.
    #[arg(long)]
    backend: String,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prediction cache (JSONL). Defaults to `<out>.cache.jsonl`.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, conflicts_with = "cache")]
    no_cache: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated subset of token,phrase,structural,shuffle.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    #[arg(long)]
    max_mutants_per_sentence: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RepairArgs {
    #[arg(long)]
    issues: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "counts")]
    repairs: Option<PathBuf>,
    /// CSV of human verdicts: issue_id,is_erroneous,error_category,annotator.
    #[arg(long, group = "truth")]
    verdicts: Option<PathBuf>,
    /// Lexicon JSON used as a no-fault ground-truth labeler.
    #[arg(long, group = "truth")]
    ground_truth: Option<PathBuf>,
    /// JSON object with tt, tf, ft, ff transition counts.
    #[arg(long, group = "truth")]
    counts: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

struct Stage {
    file: ConfigFile,
    config: PipelineConfig,
    backend: Arc<dyn NerBackend>,
    cache: Arc<PredictionCache>,
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn setup(common: &Common, out: &Path, max_mutants: Option<usize>) -> Result<Stage> {
    let file = match &common.config {
        Some(p) => ConfigFile::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => ConfigFile::default(),
    };
    let backend = build_backend(&common.backend, &file).context("building backend")?;
    let mut config = effective_config(backend.as_ref(), &file)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(n) = common.parallelism {
        config.parallelism = n;
    }
    if max_mutants.is_some() {
        config.max_mutants_per_sentence = max_mutants;
    }
    config.validate()?;
    let cache = if common.no_cache {
        PredictionCache::in_memory()
    } else {
        let path = common
            .cache
            .clone()
            .or_else(|| file.cache.path.clone())
            .unwrap_or_else(|| sidecar(out, "cache.jsonl"));
        PredictionCache::open(&path).with_context(|| format!("opening cache {}", path.display()))?
    };
    Ok(Stage {
        file,
        config,
        backend,
        cache: Arc::new(cache),
    })
}

fn parse_schemes(names: Option<&[String]>) -> Result<Vec<TransformKind>> {
    let Some(names) = names else {
        return Ok(TransformKind::ALL.to_vec());
    };
    let mut kinds = Vec::new();
    for name in names {
        let kind = TransformKind::from_scheme_name(name.trim())
            .with_context(|| format!("unknown scheme {name:?}; expected token, phrase, structural or shuffle"))?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        bail!("no schemes selected");
    }
    Ok(kinds)
}

fn test(args: TestArgs) -> Result<()> {
    let kinds = parse_schemes(args.schemes.as_deref())?;
    let stage = setup(&args.common, &args.out, args.max_mutants_per_sentence)?;
    let corpus = load_corpus(&args.corpus)?;
    let oracles = build_oracles(&stage.file, stage.config.seed)?;
    let predictor = Predictor::new(stage.backend.clone(), stage.cache.clone());
    let mut manifest = RunManifest::new("test", &stage.config, stage.backend.as_ref(), corpus_digest(&corpus), &kinds);
    info!("run {}: {} sentences, schemes {:?}", manifest.run_id, corpus.len(), manifest.schemes);

    let run = run_test(&corpus, &predictor, &oracles, &stage.config, &kinds)?;
    write_jsonl(&args.out, &run.issues)?;
    write_jsonl(&audit_path(&args.out), &run.audit)?;
    manifest.finish(run.checkpoints, run.failures.len(), &stage.cache);
    manifest.write(&manifest_path(&args.out))?;
    let c = run.checkpoints;
    println!(
        "{} sentences, {} mutants generated, {} kept by filters, {} tested, {} suspicious issues",
        c.sentences, c.generated, c.filtered, c.tested, c.issues
    );
    if !run.failures.is_empty() {
        println!("{} sentence-level failures skipped (see log)", run.failures.len());
    }
    Ok(())
}

fn repair(args: RepairArgs) -> Result<()> {
    let stage = setup(&args.common, &args.out, None)?;
    let issues: Vec<SuspiciousIssue> = read_jsonl(&args.issues)?;
    let oracles = build_oracles(&stage.file, stage.config.seed)?;
    let predictor = Predictor::new(stage.backend.clone(), stage.cache.clone());
    let mut manifest = RunManifest::new("repair", &stage.config, stage.backend.as_ref(), file_digest(&args.issues)?, &[]);

    let run = run_repair(&issues, &predictor, &oracles, &stage.config)?;
    write_jsonl(&args.out, &run.reports)?;
    let repaired = run.reports.iter().filter(|r| r.changed).count();
    let checkpoints = Checkpoints {
        issues: issues.len(),
        repaired,
        ..Checkpoints::default()
    };
    manifest.finish(checkpoints, run.failures.len(), &stage.cache);
    manifest.write(&manifest_path(&args.out))?;
    println!("{} issues, {repaired} changed by repair, {} failures", issues.len(), run.failures.len());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let report: MetricsReport = if let Some(path) = &args.counts {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let counts: ConfusionCounts =
            serde_json::from_str(&text).with_context(|| format!("parsing counts {}", path.display()))?;
        metrics_from_counts(counts)?
    } else {
        let repairs = args.repairs.as_deref().expect("clap enforces --repairs");
        let reports: Vec<RepairReport> = read_jsonl(repairs)?;
        if let Some(path) = &args.verdicts {
            evaluate_with_verdicts(&reports, &load_verdicts(path)?)?
        } else if let Some(path) = &args.ground_truth {
            evaluate_with_ground_truth(&reports, &truth_backend(path)?)?
        } else {
            bail!("eval needs one of --verdicts, --ground-truth or --counts");
        }
    };
    std::fs::write(&args.out, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(overall) = report.precision.get("overall") {
        println!(
            "precision {:.1}% ({}/{})",
            overall.precision * 100.0,
            overall.erroneous,
            overall.total
        );
    }
    if let Some(m) = &report.repair {
        println!(
            "err2cor {:.1}%  cor2err {:.1}%  error_reduce {:.1}%",
            m.err2cor * 100.0,
            m.cor2err * 100.0,
            m.error_reduce * 100.0
        );
    }
    if let Some(note) = &report.note {
        println!("note: {note}");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Test(args) => test(args),
        Command::Repair(args) => repair(args),
        Command::Eval(args) => eval(args),
    }
}
