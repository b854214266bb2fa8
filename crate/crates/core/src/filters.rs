//! Semantic and syntactic quality gates for mutants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::mutation::{Edit, MutantPair};
use crate::oracles::{cosine_similarity, OracleSuite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FilterReason {
    Ok,
    SemanticBelow,
    SyntacticAbove,
    /// The pair could not be scored (oracle failure).
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub passed: bool,
    pub semantic_sim: Option<f64>,
    pub syntactic_delta: Option<f64>,
    pub reason: FilterReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl FilterVerdict {
    fn new(reason: FilterReason, semantic_sim: Option<f64>, syntactic_delta: Option<f64>) -> Self {
        FilterVerdict {
            passed: reason == FilterReason::Ok,
            semantic_sim,
            syntactic_delta,
            reason,
            detail: None,
        }
    }

    fn failed(message: String) -> Self {
        FilterVerdict {
            detail: Some(message),
            ..FilterVerdict::new(FilterReason::NotApplicable, None, None)
        }
    }
}

/// Passes when `sim >= threshold`.
pub fn semantic_gate(sim: f64, threshold: f64) -> bool {
    sim >= threshold
}

/// Naturalness drop from original to mutant.
pub fn syntactic_delta(original_score: f64, mutant_score: f64) -> f64 {
    original_score - mutant_score
}

/// Passes when `delta <= threshold`.
pub fn syntactic_gate(delta: f64, threshold: f64) -> bool {
    delta <= threshold
}

/// Cosine similarity of the replaced span and its replacement, each
/// embedded in its own sentence. Non-substitution pairs pass untested.
pub fn semantic_filter(pair: &MutantPair, oracles: &OracleSuite, config: &PipelineConfig) -> Result<FilterVerdict> {
    let Edit::Replace {
        span, replacement_span, ..
    } = &pair.edit
    else {
        return Ok(FilterVerdict::new(FilterReason::Ok, None, None));
    };
    if !pair.kind.is_substitution() {
        return Ok(FilterVerdict::new(FilterReason::Ok, None, None));
    }
    let h = oracles.phrase_embedding(&pair.original, *span)?;
    let h2 = oracles.phrase_embedding(&pair.mutant, *replacement_span)?;
    let sim = cosine_similarity(&h, &h2)?;
    let reason = if semantic_gate(sim, config.s_threshold_testing) {
        FilterReason::Ok
    } else {
        FilterReason::SemanticBelow
    };
    Ok(FilterVerdict::new(reason, Some(sim), None))
}

pub fn syntactic_filter(pair: &MutantPair, oracles: &OracleSuite, config: &PipelineConfig) -> Result<FilterVerdict> {
    let delta = syntactic_delta(
        oracles.naturalness(pair.original.text())?,
        oracles.naturalness(pair.mutant.text())?,
    );
    let reason = if syntactic_gate(delta, config.syn_threshold.get(pair.kind)) {
        FilterReason::Ok
    } else {
        FilterReason::SyntacticAbove
    };
    Ok(FilterVerdict::new(reason, None, Some(delta)))
}

/// Both filters; the semantic reason wins when both fail.
pub fn evaluate_pair(pair: &MutantPair, oracles: &OracleSuite, config: &PipelineConfig) -> FilterVerdict {
    let scored = semantic_filter(pair, oracles, config)
        .and_then(|sem| Ok((sem, syntactic_filter(pair, oracles, config)?)));
    match scored {
        Ok((sem, syn)) => {
            let reason = if !sem.passed {
                sem.reason
            } else {
                syn.reason
            };
            FilterVerdict::new(reason, sem.semantic_sim, syn.syntactic_delta)
        }
        Err(e) => {
            log::warn!("{}: filter could not score mutant: {e}", pair.id());
            FilterVerdict::failed(e.to_string())
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub kept: Vec<MutantPair>,
    pub rejected: Vec<(MutantPair, FilterVerdict)>,
    /// One verdict per input pair, in input order.
    pub verdicts: Vec<FilterVerdict>,
}

/// Split pairs into kept and rejected, preserving input order.
pub fn apply_filters(pairs: Vec<MutantPair>, oracles: &OracleSuite, config: &PipelineConfig) -> FilterOutcome {
    let verdicts: Vec<FilterVerdict> = if oracles.requires_serial_access() {
        pairs.iter().map(|p| evaluate_pair(p, oracles, config)).collect()
    } else {
        pairs.par_iter().map(|p| evaluate_pair(p, oracles, config)).collect()
    };
    let mut outcome = FilterOutcome::default();
    for (pair, verdict) in pairs.into_iter().zip(&verdicts) {
        if verdict.passed {
            outcome.kept.push(pair);
        } else {
            outcome.rejected.push((pair, verdict.clone()));
        }
    }
    outcome.verdicts = verdicts;
    outcome
}

/// Stable digest of an (original, mutant) text pair for audit logs.
pub fn pair_digest(pair: &MutantPair) -> String {
    let mut hasher = Sha256::new();
    hasher.update(pair.original.text().as_bytes());
    hasher.update([0u8]);
    hasher.update(pair.mutant.text().as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
