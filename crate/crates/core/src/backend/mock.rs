use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{NerBackend, RawEntity};
use crate::error::{Error, Result};
use crate::eval::ErrorCategory;
use crate::model::{char_slice, tokenize, word_occurrences, CharSpan, Sentence};

/// When a fault rule applies, as a predicate over the sentence text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Substring(String),
    Suffix(String),
    Regex(String),
}

/// What a fault rule does to the dictionary's predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultEffect {
    DropEntity { surface: String },
    AddEntity { surface: String, label: String },
    Relabel { surface: String, new_label: String },
    SplitEntity { surface: String, parts: Vec<String> },
}

impl FaultEffect {
    pub fn surface(&self) -> &str {
        match self {
            FaultEffect::DropEntity { surface }
            | FaultEffect::AddEntity { surface, .. }
            | FaultEffect::Relabel { surface, .. }
            | FaultEffect::SplitEntity { surface, .. } => surface,
        }
    }

    /// The error class this fault plants.
    pub fn error_category(&self) -> ErrorCategory {
        match self {
            FaultEffect::DropEntity { .. } => ErrorCategory::Omission,
            FaultEffect::AddEntity { .. } => ErrorCategory::OverLabeling,
            FaultEffect::Relabel { .. } => ErrorCategory::IncorrectCategory,
            FaultEffect::SplitEntity { .. } => ErrorCategory::RangeError,
        }
    }

    fn new_label(&self) -> Option<&str> {
        match self {
            FaultEffect::AddEntity { label, .. } => Some(label),
            FaultEffect::Relabel { new_label, .. } => Some(new_label),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRule {
    pub trigger: Trigger,
    pub effect: FaultEffect,
}

#[derive(Debug)]
struct CompiledRule {
    rule: FaultRule,
    regex: Option<Regex>,
}

impl CompiledRule {
    fn fires(&self, text: &str) -> bool {
        let triggered = match (&self.rule.trigger, &self.regex) {
            (Trigger::Substring(s), _) => text.contains(s.as_str()),
            (Trigger::Suffix(s), _) => text.ends_with(s.as_str()),
            (Trigger::Regex(_), Some(re)) => re.is_match(text),
            (Trigger::Regex(_), None) => false,
        };
        triggered && !word_occurrences(text, self.rule.effect.surface()).is_empty()
    }
}

#[derive(Debug)]
struct LexiconEntry {
    surface: String,
    label: String,
    tokens: Vec<String>,
}

/// Ground-truth-by-construction backend: labels exact lexicon matches,
/// longest first, left to right, then applies any fault rules that fire.
#[derive(Debug)]
pub struct DictionaryBackend {
    name: String,
    version: String,
    lexicon: Vec<LexiconEntry>,
    categories: BTreeSet<String>,
    faults: Vec<CompiledRule>,
    invocations: AtomicUsize,
}

pub fn dictionary_mock_backend(
    lexicon: impl IntoIterator<Item = (String, String)>,
    faults: Vec<FaultRule>,
) -> Result<DictionaryBackend> {
    DictionaryBackend::new("mock", lexicon, faults)
}

impl DictionaryBackend {
    pub fn new(
        name: impl Into<String>,
        lexicon: impl IntoIterator<Item = (String, String)>,
        faults: Vec<FaultRule>,
    ) -> Result<Self> {
        let mut entries = Vec::new();
        let mut categories = BTreeSet::new();
        for (surface, label) in lexicon {
            let surface = surface.trim().to_string();
            let label = label.trim().to_string();
            if surface.is_empty() || label.is_empty() {
                return Err(Error::Config("lexicon entries need a surface and a label".into()));
            }
            let tokens = tokenize(&surface)?
                .tokens()
                .iter()
                .map(|t| t.surface.clone())
                .collect();
            categories.insert(label.clone());
            entries.push(LexiconEntry {
                surface,
                label,
                tokens,
            });
        }
        entries.sort_by(|a, b| {
            b.tokens
                .len()
                .cmp(&a.tokens.len())
                .then(b.surface.chars().count().cmp(&a.surface.chars().count()))
                .then(a.surface.cmp(&b.surface))
        });
        let mut compiled = Vec::with_capacity(faults.len());
        for rule in faults {
            if let Some(label) = rule.effect.new_label() {
                categories.insert(label.to_string());
            }
            let regex = match &rule.trigger {
                Trigger::Regex(pattern) => Some(
                    Regex::new(pattern)
                        .map_err(|e| Error::Config(format!("fault trigger {pattern:?}: {e}")))?,
                ),
                _ => None,
            };
            compiled.push(CompiledRule { rule, regex });
        }
        Ok(DictionaryBackend {
            name: name.into(),
            version: "1".into(),
            lexicon: entries,
            categories,
            faults: compiled,
            invocations: AtomicUsize::new(0),
        })
    }

    pub fn with_version(mut self, version: impl Into<String>) -> Self {
        self.version = version.into();
        self
    }

    /// Backend calls served so far (cache hits excluded).
    pub fn invocations(&self) -> usize {
        self.invocations.load(Ordering::SeqCst)
    }

    /// Indices of the fault rules that fire on `text`.
    pub fn fired_rules(&self, text: &str) -> Vec<usize> {
        self.faults
            .iter()
            .enumerate()
            .filter(|(_, r)| r.fires(text))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn faults(&self) -> impl Iterator<Item = &FaultRule> {
        self.faults.iter().map(|c| &c.rule)
    }

    /// Lexicon labeling only, ignoring fault rules.
    pub fn label_clean(&self, sentence: &Sentence) -> Vec<RawEntity> {
        let tokens = sentence.tokens();
        let mut out = Vec::new();
        let mut i = 0;
        'scan: while i < tokens.len() {
            for entry in &self.lexicon {
                let n = entry.tokens.len();
                if i + n > tokens.len()
                    || !tokens[i..i + n]
                        .iter()
                        .zip(&entry.tokens)
                        .all(|(t, e)| &t.surface == e)
                {
                    continue;
                }
                let span = CharSpan::new(tokens[i].span.start, tokens[i + n - 1].span.end);
                if sentence.slice(span) == Some(entry.surface.as_str()) {
                    out.push(RawEntity {
                        text: entry.surface.clone(),
                        start: span.start,
                        end: span.end,
                        label: entry.label.clone(),
                    });
                    i += n;
                    continue 'scan;
                }
            }
            i += 1;
        }
        out
    }

    fn apply(&self, rule: &FaultRule, text: &str, entities: &mut Vec<RawEntity>) {
        match &rule.effect {
            FaultEffect::DropEntity { surface } => entities.retain(|e| &e.text != surface),
            FaultEffect::AddEntity { surface, label } => {
                for span in word_occurrences(text, surface) {
                    entities.retain(|e| !CharSpan::new(e.start, e.end).overlaps(&span));
                    entities.push(RawEntity {
                        text: surface.clone(),
                        start: span.start,
                        end: span.end,
                        label: label.clone(),
                    });
                }
            }
            FaultEffect::Relabel { surface, new_label } => {
                for e in entities.iter_mut().filter(|e| &e.text == surface) {
                    e.label = new_label.clone();
                }
            }
            FaultEffect::SplitEntity { surface, parts } => {
                let mut split = Vec::new();
                entities.retain(|e| {
                    if &e.text != surface {
                        return true;
                    }
                    let mut cursor = e.start;
                    for part in parts {
                        let window = CharSpan::new(cursor, e.end);
                        let Some(rest) = char_slice(text, window) else { break };
                        let Some(found) = word_occurrences(rest, part).first().copied() else {
                            break;
                        };
                        let start = cursor + found.start;
                        split.push(RawEntity {
                            text: part.clone(),
                            start,
                            end: start + found.len(),
                            label: e.label.clone(),
                        });
                        cursor = start + found.len();
                    }
                    false
                });
                entities.extend(split);
            }
        }
    }
}

impl NerBackend for DictionaryBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn version(&self) -> &str {
        &self.version
    }

    fn categories(&self) -> &BTreeSet<String> {
        &self.categories
    }

    fn invoke(&self, sentence: &Sentence) -> Result<Vec<RawEntity>> {
        self.invocations.fetch_add(1, Ordering::SeqCst);
        let mut entities = self.label_clean(sentence);
        for compiled in &self.faults {
            if compiled.fires(sentence.text()) {
                self.apply(&compiled.rule, sentence.text(), &mut entities);
            }
        }
        entities.sort_by_key(|e| (e.start, e.end));
        Ok(entities)
    }
}
