//! Black-box repair of suspicious issues by a relabeling vote.
//!
//! Each suspicious entity is perturbed word by word with masked-LM
//! candidates; the backend's labels for the perturbed entities vote, each
//! vote weighted by the candidate's logit and its similarity to the
//! original entity.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::Predictor;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::model::{
    occurs_as_word, predictions_multiset, replace_chars, word_occurrences, CharSpan, EntityCategory, NerOutput,
    NerPrediction, Sentence, TransformKind,
};
use crate::mr::{Relation, SuspiciousIssue};
use crate::oracles::{cosine_similarity, OracleSuite, Piece, MASK};

/// Which sentence of the issue is being repaired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Original,
    Mutant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuspiciousEntity {
    pub surface: String,
    /// `NULL` when the surface is not predicted as an entity.
    pub label_in_s: EntityCategory,
    pub label_in_s2: EntityCategory,
    pub occurrences_s: Vec<CharSpan>,
    pub occurrences_s2: Vec<CharSpan>,
}

impl SuspiciousEntity {
    pub fn label(&self, side: Side) -> &EntityCategory {
        match side {
            Side::Original => &self.label_in_s,
            Side::Mutant => &self.label_in_s2,
        }
    }

    pub fn occurrences(&self, side: Side) -> &[CharSpan] {
        match side {
            Side::Original => &self.occurrences_s,
            Side::Mutant => &self.occurrences_s2,
        }
    }
}

/// Surfaces that occur in both sentences but were labeled differently,
/// in order of first disagreement.
pub fn locate_suspicious_entities(issue: &SuspiciousIssue) -> Vec<SuspiciousEntity> {
    let input = &issue.test_input;
    let (s, s2) = (input.pair.original.text(), input.pair.mutant.text());
    let category = |label: &Option<String>| label.as_deref().map(EntityCategory::new).unwrap_or_else(EntityCategory::null);
    let mut out: Vec<SuspiciousEntity> = Vec::new();
    for d in &issue.disagreements {
        if out.iter().any(|e| e.surface == d.surface) {
            continue;
        }
        if !occurs_as_word(s, &d.surface) || !occurs_as_word(s2, &d.surface) {
            continue;
        }
        let (a, b) = (category(&d.label_in_original), category(&d.label_in_mutant));
        if a == b {
            continue;
        }
        out.push(SuspiciousEntity {
            surface: d.surface.clone(),
            label_in_s: a,
            label_in_s2: b,
            occurrences_s: word_occurrences(s, &d.surface),
            occurrences_s2: word_occurrences(s2, &d.surface),
        });
    }
    out
}

/// One vote: `p * exp(k * sim)`, damped by `alpha` for NULL votes and by
/// `lambda` for votes from masked subwords.
pub fn evaluate_f(p: f64, sim: f64, is_null: bool, is_subword: bool, config: &PipelineConfig) -> f64 {
    let mut f = p * (config.k_balance * sim).exp();
    if is_null {
        f *= config.alpha;
    }
    if is_subword {
        f *= config.lambda;
    }
    f
}

/// Accumulated votes per category.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub entries: BTreeMap<String, f64>,
    /// Sum of contributing logits per category, for tie breaks.
    pub logits: BTreeMap<String, f64>,
}

impl ScoreTable {
    pub fn add(&mut self, label: &EntityCategory, f: f64, logit: f64) {
        *self.entries.entry(label.label().to_string()).or_default() += f;
        *self.logits.entry(label.label().to_string()).or_default() += logit;
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Highest score; ties go to the higher logit total, then the
    /// lexicographically smaller label.
    pub fn argmax(&self) -> Option<(EntityCategory, f64)> {
        self.entries
            .iter()
            .max_by(|(la, sa), (lb, sb)| {
                sa.total_cmp(sb)
                    .then_with(|| self.logits[*la].total_cmp(&self.logits[*lb]))
                    .then_with(|| lb.cmp(la))
            })
            .map(|(label, &score)| (EntityCategory::new(label), score))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub mutant_entity: String,
    pub mutant_sentence: String,
    pub label: EntityCategory,
    pub logit: f64,
    pub similarity: f64,
    pub is_subword: bool,
    pub f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RepairStatus {
    Relabeled,
    Abstained,
    DeprecatedByConflict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub entity: SuspiciousEntity,
    pub side: Side,
    /// Occurrences of the entity in the repaired sentence.
    pub spans: Vec<CharSpan>,
    pub relabeled: EntityCategory,
    pub p_score: f64,
    pub scores: ScoreTable,
    pub contributing: Vec<Contribution>,
    pub status: RepairStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RepairOutcome {
    pub fn abstained(entity: &SuspiciousEntity, side: Side, spans: Vec<CharSpan>) -> Self {
        RepairOutcome {
            relabeled: entity.label(side).clone(),
            entity: entity.clone(),
            side,
            spans,
            p_score: 0.0,
            scores: ScoreTable::default(),
            contributing: Vec::new(),
            status: RepairStatus::Abstained,
            error: None,
        }
    }

    fn overlaps(&self, other: &RepairOutcome) -> bool {
        self.spans
            .iter()
            .any(|a| other.spans.iter().any(|b| a.overlaps(b)))
    }

    fn extent(&self) -> usize {
        self.spans.first().map(|s| s.len()).unwrap_or(0)
    }
}

fn is_all_caps(word: &str) -> bool {
    word.chars().filter(|c| c.is_alphabetic()).count() > 1 && !word.chars().any(char::is_lowercase)
}

fn first_is_upper(word: &str) -> Option<bool> {
    word.chars().find(|c| c.is_alphabetic()).map(char::is_uppercase)
}

/// Candidate must keep the first-letter case and all-caps form of the
/// masked piece, stay a single token and differ from it.
pub fn format_consistent(piece: &str, candidate: &str) -> bool {
    !candidate.is_empty()
        && candidate != piece
        && !candidate.chars().any(char::is_whitespace)
        && first_is_upper(candidate) == first_is_upper(piece)
        && is_all_caps(candidate) == is_all_caps(piece)
}

/// Label the backend gives the mutant entity: the prediction covering the
/// largest part of it, if that covers at least half; NULL otherwise.
pub fn label_for_span(output: &NerOutput, span: CharSpan) -> EntityCategory {
    output
        .predictions
        .iter()
        .map(|p| (p.span().overlap_len(&span), p))
        .filter(|(n, _)| *n > 0 && 2 * n >= span.len())
        .max_by(|(a, pa), (b, pb)| a.cmp(b).then(pb.start.cmp(&pa.start)))
        .map(|(_, p)| p.label.clone())
        .unwrap_or_else(EntityCategory::null)
}

/// Run the relabeling vote for one entity in one sentence.
pub fn relabel(
    s: &Sentence,
    e_s: &SuspiciousEntity,
    side: Side,
    predictor: &Predictor,
    oracles: &OracleSuite,
    config: &PipelineConfig,
) -> Result<RepairOutcome> {
    let spans = word_occurrences(s.text(), &e_s.surface);
    let Some(&span) = spans.first() else {
        return Err(Error::EmptySpan { start: 0, end: 0 });
    };
    let h = oracles.phrase_embedding(s, span)?;
    let pieces: Vec<Piece> = oracles.pieces(&e_s.surface)?;
    let mut table = ScoreTable::default();
    let mut contributing = Vec::new();
    for piece in &pieces {
        let absolute = CharSpan::new(span.start + piece.span.start, span.start + piece.span.end);
        let Some(masked) = replace_chars(s.text(), absolute, MASK) else { continue };
        let candidates = match oracles.fill_mask(&masked, config.top_k_repair) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("{}: masked LM failed for {:?}: {e}", s.id(), piece.text);
                continue;
            }
        };
        for (n, candidate) in candidates.into_iter().enumerate() {
            let word = candidate.word.trim();
            let word = if piece.is_subword {
                word.strip_prefix("##").unwrap_or(word)
            } else {
                word
            };
            if !format_consistent(&piece.text, word) || candidate.logit < config.p_threshold {
                continue;
            }
            let Some(mutant_entity) = replace_chars(&e_s.surface, piece.span, word) else { continue };
            let Some(mutant_text) = replace_chars(s.text(), span, &mutant_entity) else { continue };
            let mutant_span = CharSpan::new(span.start, span.start + mutant_entity.chars().count());
            let vote = (|| -> Result<Option<Contribution>> {
                let mutant = Sentence::new(format!("{}/relabel/{}/{n}", s.id(), piece.span.start), &mutant_text)?;
                let h2 = oracles.phrase_embedding(&mutant, mutant_span)?;
                let sim = cosine_similarity(&h, &h2)?;
                if sim < config.s_threshold_repair {
                    return Ok(None);
                }
                let label = label_for_span(&predictor.predict(&mutant)?, mutant_span);
                let f = evaluate_f(candidate.logit, sim, label.is_null(), piece.is_subword, config);
                Ok(Some(Contribution {
                    mutant_entity: mutant_entity.clone(),
                    mutant_sentence: mutant_text.clone(),
                    label,
                    logit: candidate.logit,
                    similarity: sim,
                    is_subword: piece.is_subword,
                    f,
                }))
            })();
            match vote {
                Ok(Some(c)) => {
                    table.add(&c.label, c.f, c.logit);
                    contributing.push(c);
                }
                Ok(None) => {}
                Err(e) => log::warn!("{}: skipping candidate {mutant_entity:?}: {e}", s.id()),
            }
        }
    }
    let Some((relabeled, p_score)) = table.argmax() else {
        return Ok(RepairOutcome::abstained(e_s, side, spans));
    };
    Ok(RepairOutcome {
        entity: e_s.clone(),
        side,
        spans,
        relabeled,
        p_score,
        scores: table,
        contributing,
        status: RepairStatus::Relabeled,
        error: None,
    })
}

/// Deprecate the lower-scored outcome of every overlapping pair of
/// relabeled entities; equal scores deprecate the shorter span.
pub fn resolve_range_conflicts(mut outcomes: Vec<RepairOutcome>) -> Vec<RepairOutcome> {
    let live = |o: &RepairOutcome| o.status == RepairStatus::Relabeled && !o.relabeled.is_null();
    let candidates: Vec<usize> = (0..outcomes.len()).filter(|&i| live(&outcomes[i])).collect();
    let mut deprecated = vec![false; outcomes.len()];
    for (x, &i) in candidates.iter().enumerate() {
        for &j in &candidates[x + 1..] {
            let (a, b) = (&outcomes[i], &outcomes[j]);
            if !a.overlaps(b) {
                continue;
            }
            let loser = match a.p_score.total_cmp(&b.p_score) {
                std::cmp::Ordering::Less => i,
                std::cmp::Ordering::Greater => j,
                std::cmp::Ordering::Equal => match a.extent().cmp(&b.extent()) {
                    std::cmp::Ordering::Less => i,
                    std::cmp::Ordering::Greater => j,
                    std::cmp::Ordering::Equal => j,
                },
            };
            deprecated[loser] = true;
        }
    }
    for (o, d) in outcomes.iter_mut().zip(deprecated) {
        if d {
            o.status = RepairStatus::DeprecatedByConflict;
        }
    }
    outcomes
}

/// Apply surviving outcomes to an output: NULL removes the entity, any
/// other label replaces whatever overlaps the entity.
pub fn merge_outcomes(sentence: &Sentence, before: &NerOutput, outcomes: &[RepairOutcome]) -> Result<NerOutput> {
    let mut predictions = before.predictions.clone();
    let relabeled = outcomes.iter().filter(|o| o.status == RepairStatus::Relabeled);
    for o in relabeled.clone().filter(|o| o.relabeled.is_null()) {
        predictions.retain(|p| !o.spans.contains(&p.span()));
    }
    for o in relabeled.filter(|o| !o.relabeled.is_null()) {
        for span in &o.spans {
            predictions.retain(|p| !p.span().overlaps(span));
            predictions.push(NerPrediction::at(sentence, *span, o.relabeled.clone())?);
        }
    }
    NerOutput::new(sentence, predictions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub issue_id: String,
    pub kind: TransformKind,
    pub violated_mr: Relation,
    pub original: Sentence,
    pub mutant: Sentence,
    pub before_original: NerOutput,
    pub before_mutant: NerOutput,
    pub after_original: NerOutput,
    pub after_mutant: NerOutput,
    pub outcomes: Vec<RepairOutcome>,
    /// Whether either output differs from its prediction (as a multiset).
    pub changed: bool,
}

/// Repair both sentences of an issue.
pub fn repair_issue(
    issue: &SuspiciousIssue,
    predictor: &Predictor,
    oracles: &OracleSuite,
    config: &PipelineConfig,
) -> Result<RepairReport> {
    let input = &issue.test_input;
    let entities = locate_suspicious_entities(issue);
    let jobs: Vec<(Side, &SuspiciousEntity)> = [Side::Original, Side::Mutant]
        .into_iter()
        .flat_map(|side| entities.iter().map(move |e| (side, e)))
        .collect();
    let run = |&(side, e): &(Side, &SuspiciousEntity)| {
        let s = match side {
            Side::Original => &input.pair.original,
            Side::Mutant => &input.pair.mutant,
        };
        relabel(s, e, side, predictor, oracles, config).unwrap_or_else(|err| {
            log::warn!("{}: relabel of {:?} failed: {err}", issue.id, e.surface);
            RepairOutcome {
                error: Some(err.to_string()),
                ..RepairOutcome::abstained(e, side, e.occurrences(side).to_vec())
            }
        })
    };
    let outcomes: Vec<RepairOutcome> = if oracles.requires_serial_access() {
        jobs.iter().map(run).collect()
    } else {
        jobs.par_iter().map(run).collect()
    };

    let (mut original_side, mut mutant_side): (Vec<_>, Vec<_>) =
        outcomes.into_iter().partition(|o| o.side == Side::Original);
    original_side = resolve_range_conflicts(original_side);
    mutant_side = resolve_range_conflicts(mutant_side);
    let after_original = merge_outcomes(&input.pair.original, &input.output_original, &original_side)?;
    let after_mutant = merge_outcomes(&input.pair.mutant, &input.output_mutant, &mutant_side)?;
    let changed = predictions_multiset(&after_original) != predictions_multiset(&input.output_original)
        || predictions_multiset(&after_mutant) != predictions_multiset(&input.output_mutant);
    original_side.extend(mutant_side);
    Ok(RepairReport {
        issue_id: issue.id.clone(),
        kind: input.pair.kind,
        violated_mr: issue.violated_mr,
        original: input.pair.original.clone(),
        mutant: input.pair.mutant.clone(),
        before_original: input.output_original.clone(),
        before_mutant: input.output_mutant.clone(),
        after_original,
        after_mutant,
        outcomes: original_side,
        changed,
    })
}
