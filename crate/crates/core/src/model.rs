//! Domain types shared by every stage: sentences with character-offset
//! tokens, entity categories, NER predictions and per-sentence outputs.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open character range `[start, end)` into a sentence text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        CharSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn overlap_len(&self, other: &CharSpan) -> usize {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        end.saturating_sub(start)
    }

    pub fn contains(&self, other: &CharSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl fmt::Display for CharSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// Number of characters (not bytes) in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

fn byte_offset(text: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (b, _) in text.char_indices() {
        if count == char_idx {
            return Some(b);
        }
        count += 1;
    }
    (count == char_idx).then_some(text.len())
}

/// Slice `text` by character offsets; `None` when out of range.
pub fn char_slice(text: &str, span: CharSpan) -> Option<&str> {
    if span.start > span.end {
        return None;
    }
    let start = byte_offset(text, span.start)?;
    let end = byte_offset(text, span.end)?;
    text.get(start..end)
}

/// Replace the characters in `span` with `replacement`.
pub fn replace_chars(text: &str, span: CharSpan, replacement: &str) -> Option<String> {
    let start = byte_offset(text, span.start)?;
    let end = byte_offset(text, span.end)?;
    if start > end {
        return None;
    }
    let mut out = String::with_capacity(text.len() + replacement.len());
    out.push_str(&text[..start]);
    out.push_str(replacement);
    out.push_str(&text[end..]);
    Some(out)
}

/// All occurrences of `needle` in `text` that are not glued to a
/// neighbouring alphanumeric character ("ESA" does not occur in "MESA").
pub fn word_occurrences(text: &str, needle: &str) -> Vec<CharSpan> {
    if needle.is_empty() {
        return Vec::new();
    }
    let chars: Vec<char> = text.chars().collect();
    let pattern: Vec<char> = needle.chars().collect();
    let mut found = Vec::new();
    if pattern.len() > chars.len() {
        return found;
    }
    for start in 0..=chars.len() - pattern.len() {
        let end = start + pattern.len();
        if chars[start..end] != pattern[..] {
            continue;
        }
        let left_ok = start == 0
            || !chars[start - 1].is_alphanumeric()
            || !pattern[0].is_alphanumeric();
        let right_ok = end == chars.len()
            || !chars[end].is_alphanumeric()
            || !pattern[pattern.len() - 1].is_alphanumeric();
        if left_ok && right_ok {
            found.push(CharSpan::new(start, end));
        }
    }
    found
}

pub fn occurs_as_word(text: &str, needle: &str) -> bool {
    !word_occurrences(text, needle).is_empty()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub span: CharSpan,
}

impl Token {
    pub fn is_punctuation(&self) -> bool {
        self.surface.chars().all(|c| !c.is_alphanumeric())
    }
}

/// A sentence with offset-faithful tokens. Serialized as `{id, text}`;
/// tokens are recomputed on deserialization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SentenceRecord", into = "SentenceRecord")]
pub struct Sentence {
    id: String,
    text: String,
    tokens: Vec<Token>,
}

#[derive(Serialize, Deserialize)]
struct SentenceRecord {
    id: String,
    text: String,
}

impl TryFrom<SentenceRecord> for Sentence {
    type Error = Error;

    fn try_from(record: SentenceRecord) -> Result<Self> {
        Sentence::new(record.id, record.text)
    }
}

impl From<Sentence> for SentenceRecord {
    fn from(sentence: Sentence) -> Self {
        SentenceRecord {
            id: sentence.id,
            text: sentence.text,
        }
    }
}

impl Sentence {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        let tokens = split_tokens(&text)?;
        Ok(Sentence {
            id: id.into(),
            text,
            tokens,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn char_len(&self) -> usize {
        char_len(&self.text)
    }

    pub fn slice(&self, span: CharSpan) -> Option<&str> {
        char_slice(&self.text, span)
    }

    pub fn with_id(&self, id: impl Into<String>) -> Sentence {
        Sentence {
            id: id.into(),
            ..self.clone()
        }
    }

    /// Indices of the tokens lying entirely inside `span`.
    pub fn tokens_within(&self, span: CharSpan) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| span.contains(&t.span))
            .map(|(i, _)| i)
            .collect()
    }

    /// Whitespace (possibly empty) between token `i - 1` and token `i`, or
    /// the leading text before the first token.
    pub fn gap_before(&self, i: usize) -> &str {
        let start = if i == 0 { 0 } else { self.tokens[i - 1].span.end };
        char_slice(&self.text, CharSpan::new(start, self.tokens[i].span.start)).unwrap_or("")
    }
}

/// Split `text` into a [`Sentence`] with an empty id.
pub fn tokenize(text: &str) -> Result<Sentence> {
    Sentence::new("", text)
}

fn split_tokens(text: &str) -> Result<Vec<Token>> {
    if text.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut current_start = 0;
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            flush(&mut tokens, &mut current, current_start, i);
        } else if c.is_alphanumeric() {
            if current.is_empty() {
                current_start = i;
            }
            current.push(c);
        } else {
            flush(&mut tokens, &mut current, current_start, i);
            tokens.push(Token {
                surface: c.to_string(),
                span: CharSpan::new(i, i + 1),
            });
        }
    }
    let len = char_len(text);
    flush(&mut tokens, &mut current, current_start, len);
    Ok(tokens)
}

fn flush(tokens: &mut Vec<Token>, current: &mut String, start: usize, end: usize) {
    if !current.is_empty() {
        tokens.push(Token {
            surface: std::mem::take(current),
            span: CharSpan::new(start, end),
        });
    }
}

/// An NER category label. The synthetic `NULL` category ("not an entity")
/// only exists inside the repair vote.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct EntityCategory {
    label: String,
    is_null: bool,
}

pub const NULL_LABEL: &str = "NULL";

impl EntityCategory {
    pub fn new(label: impl AsRef<str>) -> Self {
        let label = label.as_ref().trim();
        EntityCategory {
            is_null: label == NULL_LABEL,
            label: label.to_string(),
        }
    }

    pub fn null() -> Self {
        EntityCategory {
            label: NULL_LABEL.to_string(),
            is_null: true,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_null(&self) -> bool {
        self.is_null
    }
}

impl From<String> for EntityCategory {
    fn from(label: String) -> Self {
        EntityCategory::new(label)
    }
}

impl From<&str> for EntityCategory {
    fn from(label: &str) -> Self {
        EntityCategory::new(label)
    }
}

impl From<EntityCategory> for String {
    fn from(category: EntityCategory) -> Self {
        category.label
    }
}

impl fmt::Display for EntityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NerPrediction {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    pub label: EntityCategory,
}

impl NerPrediction {
    pub fn new(surface: impl Into<String>, span: CharSpan, label: impl Into<EntityCategory>) -> Self {
        NerPrediction {
            surface: surface.into(),
            start: span.start,
            end: span.end,
            label: label.into(),
        }
    }

    /// Build a prediction by slicing the sentence text.
    pub fn at(sentence: &Sentence, span: CharSpan, label: impl Into<EntityCategory>) -> Result<Self> {
        let surface = sentence.slice(span).ok_or_else(|| {
            Error::InvalidPrediction(format!("span {span} outside sentence {:?}", sentence.id()))
        })?;
        Ok(NerPrediction::new(surface, span, label))
    }

    pub fn span(&self) -> CharSpan {
        CharSpan::new(self.start, self.end)
    }

    fn validate(&self, sentence: &Sentence) -> Result<()> {
        if self.start >= self.end {
            return Err(Error::InvalidPrediction(format!(
                "{:?} has empty span {}",
                self.surface,
                self.span()
            )));
        }
        if sentence.slice(self.span()) != Some(self.surface.as_str()) {
            return Err(Error::InvalidPrediction(format!(
                "{:?} does not match text at {}",
                self.surface,
                self.span()
            )));
        }
        if self.label.is_null() || self.label.label().is_empty() {
            return Err(Error::InvalidPrediction(format!(
                "{:?} carries reserved or empty label {:?}",
                self.surface,
                self.label.label()
            )));
        }
        Ok(())
    }
}

/// All predictions for one sentence, sorted and non-overlapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerOutput {
    pub sentence_id: String,
    pub predictions: Vec<NerPrediction>,
}

impl NerOutput {
    /// Validate against `sentence`, sort by start offset and reject overlaps.
    pub fn new(sentence: &Sentence, mut predictions: Vec<NerPrediction>) -> Result<Self> {
        for p in &predictions {
            p.validate(sentence)?;
        }
        predictions.sort_by_key(|p| (p.start, p.end));
        for pair in predictions.windows(2) {
            if pair[0].span().overlaps(&pair[1].span()) {
                return Err(Error::OverlappingPredictions {
                    first: pair[0].surface.clone(),
                    first_span: pair[0].span().to_string(),
                    second: pair[1].surface.clone(),
                    second_span: pair[1].span().to_string(),
                });
            }
        }
        Ok(NerOutput {
            sentence_id: sentence.id().to_string(),
            predictions,
        })
    }

    pub fn empty(sentence: &Sentence) -> Self {
        NerOutput {
            sentence_id: sentence.id().to_string(),
            predictions: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    /// Whether `span` overlaps any predicted entity.
    pub fn covers(&self, span: CharSpan) -> bool {
        self.predictions.iter().any(|p| p.span().overlaps(&span))
    }

    /// Labels assigned to predictions whose surface equals `surface`.
    pub fn labels_of(&self, surface: &str) -> Vec<String> {
        let mut labels: Vec<String> = self
            .predictions
            .iter()
            .filter(|p| p.surface == surface)
            .map(|p| p.label.label().to_string())
            .collect();
        labels.sort();
        labels
    }
}

/// Position-free view of an output: `(surface, label)` → count.
pub type PredictionMultiset = BTreeMap<(String, String), usize>;

pub fn predictions_multiset(output: &NerOutput) -> PredictionMultiset {
    let mut counts = PredictionMultiset::new();
    for p in &output.predictions {
        *counts
            .entry((p.surface.clone(), p.label.label().to_string()))
            .or_default() += 1;
    }
    counts
}

/// The four mutation schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TransformKind {
    TokenSubst,
    PhraseSubst,
    Structural,
    EntityShuffle,
}

impl TransformKind {
    pub const ALL: [TransformKind; 4] = [
        TransformKind::TokenSubst,
        TransformKind::PhraseSubst,
        TransformKind::Structural,
        TransformKind::EntityShuffle,
    ];

    /// Short scheme name used on the command line and in mutant ids.
    pub fn scheme_name(self) -> &'static str {
        match self {
            TransformKind::TokenSubst => "token",
            TransformKind::PhraseSubst => "phrase",
            TransformKind::Structural => "structural",
            TransformKind::EntityShuffle => "shuffle",
        }
    }

    pub fn from_scheme_name(name: &str) -> Option<Self> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.scheme_name() == name.trim())
    }

    /// Similar-sentence schemes are checked by MR1, the rest by MR2.
    pub fn is_substitution(self) -> bool {
        matches!(self, TransformKind::TokenSubst | TransformKind::PhraseSubst)
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformKind::TokenSubst => "TOKEN_SUBST",
            TransformKind::PhraseSubst => "PHRASE_SUBST",
            TransformKind::Structural => "STRUCTURAL",
            TransformKind::EntityShuffle => "ENTITY_SHUFFLE",
        })
    }
}
