//! Interfaces to the learned components the pipeline consults, plus a
//! scripted implementation that replays canned answers.
//!
//! Every oracle must answer identically for identical input. Adapters for
//! real models implement these traits outside this crate.

mod scripted;

pub use scripted::{OracleName, ScriptedOracles};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{tokenize, CharSpan, Sentence};
use crate::syntax::ConstituencyTree;

/// The literal placed at a masked position.
pub const MASK: &str = "[MASK]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskCandidate {
    pub word: String,
    /// Raw (pre-softmax) predictive score.
    pub logit: f64,
}

impl MaskCandidate {
    pub fn new(word: impl Into<String>, logit: f64) -> Self {
        MaskCandidate {
            word: word.into(),
            logit,
        }
    }
}

/// A word or subword of some text, as the masked LM segments it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Piece {
    pub text: String,
    /// Character span relative to the segmented text.
    pub span: CharSpan,
    pub is_subword: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding);
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        EmbeddingVector::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

pub trait MaskedLanguageModel: Send + Sync {
    /// Candidates for the `[MASK]` position in `masked`.
    fn fill_mask(&self, masked: &str) -> Result<Vec<MaskCandidate>>;

    /// Segment `text` into the model's words and subwords. The default
    /// treats every alphanumeric token as one whole word.
    fn pieces(&self, text: &str) -> Result<Vec<Piece>> {
        Ok(word_pieces(text))
    }
}

pub trait ContextEmbedder: Send + Sync {
    /// Context-aware embedding of the single word at `span` in `sentence`.
    fn embed(&self, sentence: &Sentence, span: CharSpan) -> Result<EmbeddingVector>;
}

pub trait PhraseSimilarity: Send + Sync {
    fn similar(&self, phrase: &str) -> Result<Vec<String>>;
}

pub trait PosTagger: Send + Sync {
    /// One tag per sentence token.
    fn tag(&self, sentence: &Sentence) -> Result<Vec<String>>;
}

pub trait NaturalnessScorer: Send + Sync {
    fn score(&self, text: &str) -> Result<f64>;
}

pub trait ConstituencyParser: Send + Sync {
    fn parse(&self, sentence: &Sentence) -> Result<ConstituencyTree>;
}

pub(crate) fn word_pieces(text: &str) -> Vec<Piece> {
    match tokenize(text) {
        Ok(s) => s
            .tokens()
            .iter()
            .filter(|t| !t.is_punctuation())
            .map(|t| Piece {
                text: t.surface.clone(),
                span: t.span,
                is_subword: false,
            })
            .collect(),
        Err(_) => Vec::new(),
    }
}

/// The six oracles the pipeline needs, behind shared handles.
#[derive(Clone)]
pub struct OracleSuite {
    masked_lm: Arc<dyn MaskedLanguageModel>,
    embedder: Arc<dyn ContextEmbedder>,
    phrase_sim: Arc<dyn PhraseSimilarity>,
    pos_tagger: Arc<dyn PosTagger>,
    naturalness: Arc<dyn NaturalnessScorer>,
    parser: Arc<dyn ConstituencyParser>,
    serial: bool,
}

impl OracleSuite {
    pub fn new(
        masked_lm: Arc<dyn MaskedLanguageModel>,
        embedder: Arc<dyn ContextEmbedder>,
        phrase_sim: Arc<dyn PhraseSimilarity>,
        pos_tagger: Arc<dyn PosTagger>,
        naturalness: Arc<dyn NaturalnessScorer>,
        parser: Arc<dyn ConstituencyParser>,
    ) -> Self {
        OracleSuite {
            masked_lm,
            embedder,
            phrase_sim,
            pos_tagger,
            naturalness,
            parser,
            serial: false,
        }
    }

    /// One scripted object backing all six roles.
    pub fn scripted(script: ScriptedOracles) -> Self {
        let shared = Arc::new(script);
        OracleSuite::new(
            shared.clone(),
            shared.clone(),
            shared.clone(),
            shared.clone(),
            shared.clone(),
            shared,
        )
    }

    /// Declare that the underlying models cannot serve concurrent queries.
    pub fn with_serial_access(mut self, serial: bool) -> Self {
        self.serial = serial;
        self
    }

    pub fn requires_serial_access(&self) -> bool {
        self.serial
    }

    /// Top-`k` candidates sorted by descending logit, ties by word.
    pub fn fill_mask(&self, masked: &str, top_k: usize) -> Result<Vec<MaskCandidate>> {
        let mut candidates = self.masked_lm.fill_mask(masked)?;
        if let Some(bad) = candidates
            .iter()
            .find(|c| c.word.is_empty() || !c.logit.is_finite())
        {
            return Err(Error::OracleResponse {
                oracle: "masked_lm".into(),
                message: format!("invalid candidate {bad:?}"),
            });
        }
        candidates.sort_by(|a, b| b.logit.total_cmp(&a.logit).then_with(|| a.word.cmp(&b.word)));
        candidates.truncate(top_k);
        Ok(candidates)
    }

    pub fn pieces(&self, text: &str) -> Result<Vec<Piece>> {
        self.masked_lm.pieces(text)
    }

    pub fn embed(&self, sentence: &Sentence, span: CharSpan) -> Result<EmbeddingVector> {
        self.embedder.embed(sentence, span)
    }

    pub fn phrase_embedding(&self, sentence: &Sentence, span: CharSpan) -> Result<EmbeddingVector> {
        phrase_embedding(sentence, span, self.embedder.as_ref())
    }

    pub fn similar_phrases(&self, phrase: &str, top_k: usize) -> Result<Vec<String>> {
        let mut phrases = self.phrase_sim.similar(phrase)?;
        phrases.truncate(top_k);
        Ok(phrases)
    }

    pub fn pos_tags(&self, sentence: &Sentence) -> Result<Vec<String>> {
        let tags = self.pos_tagger.tag(sentence)?;
        if tags.len() != sentence.tokens().len() {
            return Err(Error::OracleResponse {
                oracle: "pos".into(),
                message: format!(
                    "{} tags for {} tokens in {:?}",
                    tags.len(),
                    sentence.tokens().len(),
                    sentence.text()
                ),
            });
        }
        Ok(tags)
    }

    pub fn naturalness(&self, text: &str) -> Result<f64> {
        let score = self.naturalness.score(text)?;
        if !score.is_finite() {
            return Err(Error::OracleResponse {
                oracle: "naturalness".into(),
                message: format!("non-finite score for {text:?}"),
            });
        }
        Ok(score)
    }

    pub fn parse(&self, sentence: &Sentence) -> Result<ConstituencyTree> {
        let tree = self.parser.parse(sentence)?;
        tree.check_yield(sentence)?;
        Ok(tree)
    }
}

/// Cosine similarity of two embeddings.
pub fn cosine_similarity(h: &EmbeddingVector, h2: &EmbeddingVector) -> Result<f64> {
    if h.dim() != h2.dim() {
        return Err(Error::DimensionMismatch {
            left: h.dim(),
            right: h2.dim(),
        });
    }
    let (n1, n2) = (h.norm(), h2.norm());
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = h.0.iter().zip(&h2.0).map(|(a, b)| a * b).sum();
    Ok(dot / (n1 * n2))
}

/// Mean of the per-word embeddings of every token inside `span`.
pub fn phrase_embedding(
    sentence: &Sentence,
    span: CharSpan,
    embedder: &dyn ContextEmbedder,
) -> Result<EmbeddingVector> {
    let inside = sentence.tokens_within(span);
    if inside.is_empty() {
        return Err(Error::EmptySpan {
            start: span.start,
            end: span.end,
        });
    }
    let mut sum: Option<Vec<f64>> = None;
    for &i in &inside {
        let v = embedder.embed(sentence, sentence.tokens()[i].span)?;
        match sum.as_mut() {
            None => sum = Some(v.0),
            Some(acc) => {
                if acc.len() != v.dim() {
                    return Err(Error::DimensionMismatch {
                        left: acc.len(),
                        right: v.dim(),
                    });
                }
                for (a, b) in acc.iter_mut().zip(v.0) {
                    *a += b;
                }
            }
        }
    }
    let n = inside.len() as f64;
    let mean = sum.unwrap_or_default().into_iter().map(|v| v / n).collect();
    EmbeddingVector::new(mean)
}
