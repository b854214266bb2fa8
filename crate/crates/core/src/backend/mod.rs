//! Black-box access to the NER systems under test.

mod cache;
mod mock;
mod remote;

pub use cache::{CacheEntry, PredictionCache};
pub use mock::{dictionary_mock_backend, DictionaryBackend, FaultEffect, FaultRule, Trigger};
pub use remote::{
    remote_adapter, EndpointConfig, HttpRequest, HttpResponse, HttpTransport, RemoteBackend,
    ReplayTransport, UreqTransport,
};

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{CharSpan, NerOutput, NerPrediction, Sentence};

/// An entity as reported by a backend, before validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEntity {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub label: String,
}

pub trait NerBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Part of the cache key; bump when the model behind the backend changes.
    fn version(&self) -> &str {
        "0"
    }

    /// Declared label set. An empty set accepts any label.
    fn categories(&self) -> &BTreeSet<String>;

    fn invoke(&self, sentence: &Sentence) -> Result<Vec<RawEntity>>;
}

/// Validate raw entities against the sentence and build a [`NerOutput`].
///
/// Offsets that do not reproduce the reported text are surfaced as
/// [`Error::SpanMismatch`]. Overlapping spans are resolved by keeping the
/// earlier, then longer, entity.
pub fn normalize(
    backend: &dyn NerBackend,
    sentence: &Sentence,
    raw: Vec<RawEntity>,
) -> Result<NerOutput> {
    let declared = backend.categories();
    let mut predictions = Vec::with_capacity(raw.len());
    for entity in raw {
        let span = CharSpan::new(entity.start, entity.end);
        if span.is_empty() || sentence.slice(span) != Some(entity.text.as_str()) {
            return Err(Error::SpanMismatch {
                backend: backend.name().to_string(),
                start: entity.start,
                end: entity.end,
            });
        }
        let label = entity.label.trim();
        if label.is_empty() || (!declared.is_empty() && !declared.contains(label)) {
            return Err(Error::UndeclaredCategory {
                backend: backend.name().to_string(),
                label: entity.label.clone(),
            });
        }
        predictions.push(NerPrediction::new(entity.text, span, label));
    }
    predictions.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));
    let mut kept: Vec<NerPrediction> = Vec::with_capacity(predictions.len());
    for p in predictions {
        match kept.last() {
            Some(last) if last.span().overlaps(&p.span()) => {
                log::warn!(
                    "{}: dropping {:?} at {} overlapping {:?}",
                    backend.name(),
                    p.surface,
                    p.span(),
                    last.surface
                );
            }
            _ => kept.push(p),
        }
    }
    NerOutput::new(sentence, kept)
}

/// Cache-first prediction: on a miss the backend is invoked, its answer
/// validated and stored.
pub fn predict(
    backend: &dyn NerBackend,
    sentence: &Sentence,
    cache: &PredictionCache,
) -> Result<NerOutput> {
    let predictions = cache.get_or_fetch(backend.name(), backend.version(), sentence.text(), || {
        let raw = backend.invoke(sentence)?;
        Ok(normalize(backend, sentence, raw)?.predictions)
    })?;
    Ok(NerOutput {
        sentence_id: sentence.id().to_string(),
        predictions,
    })
}

/// A backend paired with its cache.
#[derive(Clone)]
pub struct Predictor {
    backend: Arc<dyn NerBackend>,
    cache: Arc<PredictionCache>,
}

impl Predictor {
    pub fn new(backend: Arc<dyn NerBackend>, cache: Arc<PredictionCache>) -> Self {
        Predictor { backend, cache }
    }

    /// Predictor with a fresh in-memory cache.
    pub fn uncached(backend: Arc<dyn NerBackend>) -> Self {
        Predictor::new(backend, Arc::new(PredictionCache::in_memory()))
    }

    pub fn predict(&self, sentence: &Sentence) -> Result<NerOutput> {
        predict(self.backend.as_ref(), sentence, &self.cache)
    }

    pub fn backend(&self) -> &dyn NerBackend {
        self.backend.as_ref()
    }

    pub fn cache(&self) -> &PredictionCache {
        &self.cache
    }
}
