//! Python bindings: scoring helpers, the structural rewrite, and a
//! `Pipeline` wrapping the test and repair stages.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use nerprobe::backend::{NerBackend, PredictionCache, Predictor};
use nerprobe::config::{ConfigFile, PipelineConfig};
use nerprobe::eval::ConfusionCounts;
use nerprobe::model::{CharSpan, NerOutput, NerPrediction, Sentence, TransformKind};
use nerprobe::mr::SuspiciousIssue;
use nerprobe::oracles::OracleSuite;
use nerprobe::pipeline;
use nerprobe::syntax::{declarative_to_interrogative, ConstituencyTree};

create_exception!(nerprobe_py, NerprobeError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    NerprobeError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(py: Python<'_>, value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

/// Err2Cor, Cor2Err and ErrorReduce from repair transition counts.
#[pyfunction]
fn repair_metrics(py: Python<'_>, tt: u64, tf: u64, ft: u64, ff: u64) -> PyResult<Bound<'_, PyAny>> {
    let m = nerprobe::eval::repair_metrics(&ConfusionCounts::new(tt, tf, ft, ff)).map_err(err)?;
    to_py(py, &m)
}

/// Fraction of judged issues that are real errors.
#[pyfunction]
fn precision(verdicts: Vec<bool>) -> PyResult<f64> {
    nerprobe::eval::precision_of(&verdicts).map_err(err)
}

/// Contribution of one masked-LM candidate to a category score.
#[pyfunction]
#[pyo3(signature = (p, sim, is_null, is_subword, k=2.5, alpha=0.2, lambda_=0.5))]
fn evaluate_f(p: f64, sim: f64, is_null: bool, is_subword: bool, k: f64, alpha: f64, lambda_: f64) -> f64 {
    let config = PipelineConfig {
        k_balance: k,
        alpha,
        lambda: lambda_,
        ..PipelineConfig::default()
    };
    nerprobe::repair::evaluate_f(p, sim, is_null, is_subword, &config)
}

/// Tokens as `(surface, start, end)` with character offsets.
#[pyfunction]
fn tokenize(text: &str) -> PyResult<Vec<(String, usize, usize)>> {
    let s = Sentence::new("py", text).map_err(err)?;
    Ok(s.tokens().iter().map(|t| (t.surface.clone(), t.span.start, t.span.end)).collect())
}

/// Question form of a declarative sentence given its bracketed parse.
/// `entities` are `(start, end, label)` spans that keep their casing.
#[pyfunction]
#[pyo3(signature = (text, tree, entities=Vec::new()))]
fn to_question(text: &str, tree: &str, entities: Vec<(usize, usize, String)>) -> PyResult<String> {
    let s = Sentence::new("py", text).map_err(err)?;
    let t = ConstituencyTree::parse_for(tree, &s).map_err(err)?;
    let preds = entities
        .into_iter()
        .map(|(a, b, label)| NerPrediction::at(&s, CharSpan::new(a, b), label))
        .collect::<nerprobe::Result<Vec<_>>>()
        .map_err(err)?;
    let out = NerOutput::new(&s, preds).map_err(err)?;
    Ok(declarative_to_interrogative(&s, &t, &out).map_err(err)?.mutant_text)
}

/// Test and repair stages over one backend, configured from a TOML file.
#[pyclass(module = "nerprobe_py")]
struct Pipeline {
    config: PipelineConfig,
    backend: Arc<dyn NerBackend>,
    predictor: Predictor,
    oracles: OracleSuite,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (config, backend="mock", cache=None, seed=None))]
    fn new(config: PathBuf, backend: &str, cache: Option<PathBuf>, seed: Option<u64>) -> PyResult<Self> {
        let file = ConfigFile::load(&config).map_err(err)?;
        let backend = pipeline::build_backend(backend, &file).map_err(err)?;
        let mut config = pipeline::effective_config(backend.as_ref(), &file).map_err(err)?;
        if let Some(seed) = seed {
            config.seed = seed;
        }
        let cache = match cache.or(file.cache.path.clone()) {
            Some(p) => PredictionCache::open(&p).map_err(err)?,
            None => PredictionCache::in_memory(),
        };
        let oracles = pipeline::build_oracles(&file, config.seed).map_err(err)?;
        let predictor = Predictor::new(backend.clone(), Arc::new(cache));
        Ok(Pipeline {
            config,
            backend,
            predictor,
            oracles,
        })
    }

    #[getter]
    fn backend_name(&self) -> String {
        self.backend.name().to_string()
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.config)
    }

    /// Entities predicted for `text` as `(surface, start, end, label)`.
    fn predict(&self, text: &str) -> PyResult<Vec<(String, usize, usize, String)>> {
        let s = Sentence::new("py", text).map_err(err)?;
        let out = self.predictor.predict(&s).map_err(err)?;
        Ok(out
            .predictions
            .iter()
            .map(|p| (p.surface.clone(), p.span().start, p.span().end, p.label.label().to_string()))
            .collect())
    }

    /// Run the test stage over a corpus file; returns suspicious issues.
    #[pyo3(signature = (corpus, schemes=None))]
    fn test<'py>(
        &self,
        py: Python<'py>,
        corpus: PathBuf,
        schemes: Option<Vec<String>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let kinds = match schemes {
            None => TransformKind::ALL.to_vec(),
            Some(names) => names
                .iter()
                .map(|n| TransformKind::from_scheme_name(n).ok_or_else(|| err(format!("unknown scheme {n:?}"))))
                .collect::<PyResult<_>>()?,
        };
        let corpus = pipeline::load_corpus(&corpus).map_err(err)?;
        let run = py
            .detach(|| pipeline::run_test(&corpus, &self.predictor, &self.oracles, &self.config, &kinds))
            .map_err(err)?;
        to_py(py, &run.issues)
    }

    /// Repair issues as returned by `test`; returns repair reports.
    fn repair<'py>(&self, py: Python<'py>, issues: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        let issues: Vec<SuspiciousIssue> = from_py(py, issues)?;
        let run = py
            .detach(|| pipeline::run_repair(&issues, &self.predictor, &self.oracles, &self.config))
            .map_err(err)?;
        to_py(py, &run.reports)
    }
}

#[pymodule]
fn nerprobe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NerprobeError", m.py().get_type::<NerprobeError>())?;
    m.add_function(wrap_pyfunction!(repair_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(precision, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_f, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(to_question, m)?)?;
    m.add_class::<Pipeline>()?;
    Ok(())
}
