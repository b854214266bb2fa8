//! Metamorphic relation checks over (original, mutant) predictions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{occurs_as_word, predictions_multiset, NerOutput};
use crate::mutation::MutantPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestInput {
    pub pair: MutantPair,
    pub output_original: NerOutput,
    pub output_mutant: NerOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    /// Same entity in a similar context keeps its label.
    MR1,
    /// Structure-only edits keep the prediction multiset.
    MR2,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::MR1 => "MR1",
            Relation::MR2 => "MR2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub surface: String,
    pub label_in_original: Option<String>,
    pub label_in_mutant: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspiciousIssue {
    /// Same as the mutant id.
    pub id: String,
    pub test_input: TestInput,
    pub violated_mr: Relation,
    pub disagreements: Vec<Disagreement>,
}

impl SuspiciousIssue {
    fn new(input: &TestInput, violated_mr: Relation, disagreements: Vec<Disagreement>) -> Self {
        SuspiciousIssue {
            id: input.pair.id().to_string(),
            test_input: input.clone(),
            violated_mr,
            disagreements,
        }
    }
}

/// Labels present on one side only, paired up in label order.
fn label_difference(surface: &str, original: &[String], mutant: &[String]) -> Vec<Disagreement> {
    let mut count: BTreeMap<&str, i64> = BTreeMap::new();
    for l in original {
        *count.entry(l).or_default() += 1;
    }
    for l in mutant {
        *count.entry(l).or_default() -= 1;
    }
    let mut only_original = Vec::new();
    let mut only_mutant = Vec::new();
    for (label, n) in count {
        for _ in 0..n.max(0) {
            only_original.push(label.to_string());
        }
        for _ in 0..(-n).max(0) {
            only_mutant.push(label.to_string());
        }
    }
    let n = only_original.len().max(only_mutant.len());
    (0..n)
        .map(|i| Disagreement {
            surface: surface.to_string(),
            label_in_original: only_original.get(i).cloned(),
            label_in_mutant: only_mutant.get(i).cloned(),
        })
        .collect()
}

/// Predicted surfaces of both outputs, first-seen order.
fn surfaces(input: &TestInput) -> Vec<&str> {
    let mut seen = Vec::new();
    for p in input.output_original.predictions.iter().chain(&input.output_mutant.predictions) {
        if !seen.contains(&p.surface.as_str()) {
            seen.push(p.surface.as_str());
        }
    }
    seen
}

/// Every predicted surface that occurs in both texts must carry the same
/// label multiset in both outputs.
pub fn check_mr1(input: &TestInput) -> Result<Option<SuspiciousIssue>> {
    if !input.pair.kind.is_substitution() {
        return Err(Error::WrongKind {
            kind: input.pair.kind,
            relation: "MR1",
        });
    }
    let (s, s2) = (input.pair.original.text(), input.pair.mutant.text());
    let mut disagreements = Vec::new();
    for surface in surfaces(input) {
        if !occurs_as_word(s, surface) || !occurs_as_word(s2, surface) {
            continue;
        }
        disagreements.extend(label_difference(
            surface,
            &input.output_original.labels_of(surface),
            &input.output_mutant.labels_of(surface),
        ));
    }
    Ok((!disagreements.is_empty()).then(|| SuspiciousIssue::new(input, Relation::MR1, disagreements)))
}

/// The (surface, label) multisets of both outputs must be equal.
pub fn check_mr2(input: &TestInput) -> Result<Option<SuspiciousIssue>> {
    if input.pair.kind.is_substitution() {
        return Err(Error::WrongKind {
            kind: input.pair.kind,
            relation: "MR2",
        });
    }
    let a = predictions_multiset(&input.output_original);
    let b = predictions_multiset(&input.output_mutant);
    if a == b {
        return Ok(None);
    }
    let expand = |m: &BTreeMap<(String, String), usize>, surface: &str| -> Vec<String> {
        m.iter()
            .filter(|((s, _), _)| s == surface)
            .flat_map(|((_, l), &n)| std::iter::repeat_n(l.clone(), n))
            .collect()
    };
    let mut disagreements = Vec::new();
    for surface in surfaces(input) {
        disagreements.extend(label_difference(surface, &expand(&a, surface), &expand(&b, surface)));
    }
    Ok(Some(SuspiciousIssue::new(input, Relation::MR2, disagreements)))
}

pub fn check(input: &TestInput) -> Option<SuspiciousIssue> {
    let result = if input.pair.kind.is_substitution() {
        check_mr1(input)
    } else {
        check_mr2(input)
    };
    result.expect("relation chosen by kind")
}

/// Route each input to its relation; violations in input order.
pub fn detect_suspicious_issues(inputs: &[TestInput]) -> Vec<SuspiciousIssue> {
    inputs.iter().filter_map(check).collect()
}
