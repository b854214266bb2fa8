//! Mutant generation under the four transformation schemes.
//!
//! Every scheme consumes the original prediction so that predicted
//! entities are never edited (except by the shuffle, which only moves them).

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::model::{replace_chars, CharSpan, NerOutput, NerPrediction, Sentence, TransformKind};
use crate::oracles::{OracleSuite, MASK};
use crate::syntax::{declarative_to_interrogative, find_minimal_np_nodes, ConstituencyTree, RewriteRule};

/// One category's entities before and after a shuffle, in slot order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffledCategory {
    pub label: String,
    pub original: Vec<String>,
    pub shuffled: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Edit {
    /// `span` in the original was replaced; `replacement_span` locates the
    /// new text in the mutant.
    Replace {
        span: CharSpan,
        original: String,
        replacement: String,
        replacement_span: CharSpan,
    },
    Rewrite {
        rule: RewriteRule,
        moved_or_inserted: String,
    },
    Shuffle {
        categories: Vec<ShuffledCategory>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logit: Option<f64>,
    /// Position of the replacement in the oracle's answer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutantPair {
    pub original: Sentence,
    pub mutant: Sentence,
    pub kind: TransformKind,
    pub edit: Edit,
    #[serde(default)]
    pub provenance: Provenance,
}

impl MutantPair {
    pub fn id(&self) -> &str {
        self.mutant.id()
    }
}

fn mutant_id(original: &Sentence, kind: TransformKind, n: usize) -> String {
    format!("{}/{}{}", original.id(), kind.scheme_name(), n)
}

fn overlaps_entity(n_s: &NerOutput, span: CharSpan) -> bool {
    n_s.predictions.iter().any(|p| p.span().overlaps(&span))
}

fn coarse_pos(tag: &str) -> Option<&'static str> {
    if tag.starts_with("VB") {
        Some("VB")
    } else if tag.starts_with("JJ") {
        Some("JJ")
    } else {
        None
    }
}

fn replace_mutant(
    s: &Sentence,
    kind: TransformKind,
    n: usize,
    span: CharSpan,
    replacement: &str,
    provenance: Provenance,
) -> Result<Option<MutantPair>> {
    let text = replace_chars(s.text(), span, replacement).ok_or(Error::EmptySpan {
        start: span.start,
        end: span.end,
    })?;
    if text == s.text() || text.trim().is_empty() {
        return Ok(None);
    }
    let original = s.slice(span).unwrap_or_default().to_string();
    let replacement_span = CharSpan::new(span.start, span.start + replacement.chars().count());
    Ok(Some(MutantPair {
        original: s.clone(),
        mutant: Sentence::new(mutant_id(s, kind, n), text)?,
        kind,
        edit: Edit::Replace {
            span,
            original,
            replacement: replacement.to_string(),
            replacement_span,
        },
        provenance,
    }))
}

/// Mask each verb or adjective outside the predicted entities and
/// substitute masked-LM candidates that keep the coarse POS class.
pub fn token_level_mutants(
    s: &Sentence,
    n_s: &NerOutput,
    oracles: &OracleSuite,
    config: &PipelineConfig,
) -> Result<Vec<MutantPair>> {
    let tags = oracles.pos_tags(s)?;
    let mut out = Vec::new();
    for (i, token) in s.tokens().iter().enumerate() {
        let Some(class) = coarse_pos(&tags[i]) else { continue };
        if token.is_punctuation() || overlaps_entity(n_s, token.span) {
            continue;
        }
        let masked = replace_chars(s.text(), token.span, MASK).ok_or(Error::EmptySpan {
            start: token.span.start,
            end: token.span.end,
        })?;
        for candidate in oracles.fill_mask(&masked, config.top_k_testing)? {
            let word = candidate.word.trim();
            if word.is_empty()
                || word.starts_with("##")
                || word.chars().any(char::is_whitespace)
                || word.to_lowercase() == token.surface.to_lowercase()
            {
                continue;
            }
            let provenance = Provenance {
                logit: Some(candidate.logit),
                rank: None,
            };
            let Some(pair) = replace_mutant(s, TransformKind::TokenSubst, out.len(), token.span, word, provenance)?
            else {
                continue;
            };
            // The candidate must stay a single token at the same position.
            let new_span = CharSpan::new(token.span.start, token.span.start + word.chars().count());
            let Some(j) = pair.mutant.tokens().iter().position(|t| t.span == new_span) else {
                continue;
            };
            let mutant_tags = oracles.pos_tags(&pair.mutant)?;
            if coarse_pos(&mutant_tags[j]) == Some(class) {
                out.push(pair);
            }
        }
    }
    Ok(out)
}

/// Replace one minimal noun phrase at a time with similar phrases.
pub fn phrase_level_mutants(
    s: &Sentence,
    n_s: &NerOutput,
    tree: &ConstituencyTree,
    oracles: &OracleSuite,
    config: &PipelineConfig,
) -> Result<Vec<MutantPair>> {
    tree.check_yield(s)?;
    let mut out = Vec::new();
    for np in find_minimal_np_nodes(tree) {
        let span = tree.char_span(np, s);
        if overlaps_entity(n_s, span) {
            continue;
        }
        let phrase = s.slice(span).unwrap_or_default();
        for (rank, replacement) in oracles
            .similar_phrases(phrase, config.top_k_testing)?
            .into_iter()
            .enumerate()
        {
            let replacement = replacement.trim();
            if replacement.is_empty() || replacement == phrase {
                continue;
            }
            let provenance = Provenance {
                logit: None,
                rank: Some(rank),
            };
            if let Some(pair) =
                replace_mutant(s, TransformKind::PhraseSubst, out.len(), span, replacement, provenance)?
            {
                out.push(pair);
            }
        }
    }
    Ok(out)
}

/// The declarative-to-question rewrite as a mutant, if it applies.
pub fn structural_mutants(s: &Sentence, n_s: &NerOutput, tree: &ConstituencyTree) -> Result<Vec<MutantPair>> {
    match declarative_to_interrogative(s, tree, n_s) {
        Ok(rewrite) => {
            if rewrite.mutant_text == s.text() {
                return Ok(Vec::new());
            }
            Ok(vec![MutantPair {
                original: s.clone(),
                mutant: Sentence::new(mutant_id(s, TransformKind::Structural, 0), rewrite.mutant_text)?,
                kind: TransformKind::Structural,
                edit: Edit::Rewrite {
                    rule: rewrite.rule_applied,
                    moved_or_inserted: rewrite.moved_or_inserted,
                },
                provenance: Provenance::default(),
            }])
        }
        Err(Error::NoRewrite(reason)) => {
            log::debug!("{}: no structural rewrite: {reason}", s.id());
            Ok(Vec::new())
        }
        Err(e) => Err(e),
    }
}

/// Permute entities within each category, keeping every other character.
pub fn entity_shuffle_mutants(
    s: &Sentence,
    n_s: &NerOutput,
    rng_seed: u64,
    config: &PipelineConfig,
) -> Result<Vec<MutantPair>> {
    let mut by_label: BTreeMap<&str, Vec<&NerPrediction>> = BTreeMap::new();
    for p in &n_s.predictions {
        by_label.entry(p.label.label()).or_default().push(p);
    }
    if by_label.values().all(|v| v.len() < 2) {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seen: HashSet<String> = HashSet::new();
    seen.insert(s.text().to_string());
    let mut out = Vec::new();
    for _ in 0..config.shuffle_attempts {
        let mut perms: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (label, entities) in &by_label {
            let mut perm: Vec<usize> = (0..entities.len()).collect();
            if entities.len() >= 2 {
                perm.shuffle(&mut rng);
            }
            perms.insert(label, perm);
        }
        let identity = perms.values().all(|p| p.iter().enumerate().all(|(i, &j)| i == j));
        if identity {
            continue;
        }
        // Refill the placeholders left to right.
        let mut slot: BTreeMap<&str, usize> = BTreeMap::new();
        let mut text = String::new();
        let mut cursor = 0;
        for p in &n_s.predictions {
            let label = p.label.label();
            let k = slot.entry(label).or_default();
            let source = by_label[label][perms[label][*k]];
            *k += 1;
            text.push_str(s.slice(CharSpan::new(cursor, p.start)).unwrap_or_default());
            text.push_str(&source.surface);
            cursor = p.end;
        }
        text.push_str(s.slice(CharSpan::new(cursor, s.char_len())).unwrap_or_default());
        if !seen.insert(text.clone()) {
            continue;
        }
        let categories = by_label
            .iter()
            .filter(|(_, v)| v.len() >= 2)
            .map(|(label, entities)| ShuffledCategory {
                label: label.to_string(),
                original: entities.iter().map(|e| e.surface.clone()).collect(),
                shuffled: perms[label].iter().map(|&j| entities[j].surface.clone()).collect(),
            })
            .collect();
        out.push(MutantPair {
            original: s.clone(),
            mutant: Sentence::new(mutant_id(s, TransformKind::EntityShuffle, out.len()), text)?,
            kind: TransformKind::EntityShuffle,
            edit: Edit::Shuffle { categories },
            provenance: Provenance::default(),
        });
    }
    Ok(out)
}
