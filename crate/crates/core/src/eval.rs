//! Repair metrics, error-category classification and human verdicts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CharSpan, NerOutput, TransformKind};

/// The four NER error classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCategory {
    Omission,
    OverLabeling,
    IncorrectCategory,
    RangeError,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [
        ErrorCategory::Omission,
        ErrorCategory::OverLabeling,
        ErrorCategory::IncorrectCategory,
        ErrorCategory::RangeError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Omission => "OMISSION",
            ErrorCategory::OverLabeling => "OVER_LABELING",
            ErrorCategory::IncorrectCategory => "INCORRECT_CATEGORY",
            ErrorCategory::RangeError => "RANGE_ERROR",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        let t = text.trim().to_ascii_uppercase().replace([' ', '-'], "_");
        ErrorCategory::ALL.into_iter().find(|c| c.as_str() == t)
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome counts of repairs: the first letter is whether the original
/// prediction was correct, the second whether the repaired one is.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tt: u64,
    pub tf: u64,
    pub ft: u64,
    pub ff: u64,
}

impl ConfusionCounts {
    pub fn new(tt: u64, tf: u64, ft: u64, ff: u64) -> Self {
        ConfusionCounts { tt, tf, ft, ff }
    }

    pub fn num_error(&self) -> u64 {
        self.ft + self.ff
    }

    pub fn num_correct(&self) -> u64 {
        self.tt + self.tf
    }

    /// Record one prediction given its correctness before and after repair.
    pub fn record(&mut self, correct_before: bool, correct_after: bool) {
        match (correct_before, correct_after) {
            (true, true) => self.tt += 1,
            (true, false) => self.tf += 1,
            (false, true) => self.ft += 1,
            (false, false) => self.ff += 1,
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.tt += rhs.tt;
        self.tf += rhs.tf;
        self.ft += rhs.ft;
        self.ff += rhs.ff;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepairMetrics {
    pub err2cor: f64,
    pub cor2err: f64,
    pub error_reduce: f64,
}

pub fn repair_metrics(c: &ConfusionCounts) -> Result<RepairMetrics> {
    let errors = c.num_error();
    if errors == 0 {
        return Err(Error::DivisionByZero("FT + FF"));
    }
    let correct = c.num_correct();
    if correct == 0 {
        return Err(Error::DivisionByZero("TT + TF"));
    }
    let errors = errors as f64;
    Ok(RepairMetrics {
        err2cor: c.ft as f64 / errors,
        cor2err: c.tf as f64 / correct as f64,
        error_reduce: (c.ft as f64 - c.tf as f64) / errors,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanVerdict {
    pub issue_id: String,
    pub is_erroneous: bool,
    pub error_category: Option<ErrorCategory>,
    pub annotator: String,
}

impl HumanVerdict {
    pub fn new(
        issue_id: impl Into<String>,
        error_category: Option<ErrorCategory>,
        annotator: impl Into<String>,
    ) -> Self {
        HumanVerdict {
            issue_id: issue_id.into(),
            is_erroneous: error_category.is_some(),
            error_category,
            annotator: annotator.into(),
        }
    }
}

#[derive(Deserialize)]
struct VerdictRow {
    issue_id: String,
    is_erroneous: String,
    #[serde(default)]
    error_category: String,
    #[serde(default)]
    annotator: String,
}

fn parse_bool(text: &str) -> Option<bool> {
    match text.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" => Some(true),
        "false" | "0" | "no" | "n" => Some(false),
        _ => None,
    }
}

/// Read a verdict CSV with header `issue_id,is_erroneous,error_category,annotator`.
pub fn read_verdicts(reader: impl Read, source: &str) -> Result<Vec<HumanVerdict>> {
    let bad = |row: usize, message: String| Error::Input {
        path: source.to_string(),
        message: format!("row {row}: {message}"),
    };
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut verdicts = Vec::new();
    for (i, record) in csv.deserialize::<VerdictRow>().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| bad(row, e.to_string()))?;
        let is_erroneous = parse_bool(&record.is_erroneous)
            .ok_or_else(|| bad(row, format!("is_erroneous {:?} is not a boolean", record.is_erroneous)))?;
        let error_category = if record.error_category.is_empty() {
            None
        } else {
            Some(ErrorCategory::parse(&record.error_category).ok_or_else(|| {
                bad(row, format!("unknown error category {:?}", record.error_category))
            })?)
        };
        if is_erroneous != error_category.is_some() {
            return Err(bad(
                row,
                "error_category must be given exactly when is_erroneous is true".into(),
            ));
        }
        verdicts.push(HumanVerdict {
            issue_id: record.issue_id,
            is_erroneous,
            error_category,
            annotator: record.annotator,
        });
    }
    Ok(verdicts)
}

pub fn load_verdicts(path: &Path) -> Result<Vec<HumanVerdict>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Input {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_verdicts(file, &path.display().to_string())
}

/// Share of issues judged erroneous.
pub fn precision(verdicts: &[HumanVerdict]) -> Result<f64> {
    let flags: Vec<bool> = verdicts.iter().map(|v| v.is_erroneous).collect();
    precision_of(&flags)
}

pub fn precision_of(flags: &[bool]) -> Result<f64> {
    if flags.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRow {
    pub erroneous: usize,
    pub total: usize,
    pub precision: f64,
}

impl PrecisionRow {
    pub fn from_counts(erroneous: usize, total: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::EmptySample);
        }
        Ok(PrecisionRow {
            erroneous,
            total,
            precision: erroneous as f64 / total as f64,
        })
    }
}

/// Per-scheme and overall precision, keyed by scheme name plus "overall".
pub fn precision_table(judged: &[(TransformKind, bool)]) -> BTreeMap<String, PrecisionRow> {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for &(kind, erroneous) in judged {
        for key in [kind.scheme_name(), "overall"] {
            let entry = counts.entry(key.to_string()).or_default();
            entry.0 += erroneous as usize;
            entry.1 += 1;
        }
    }
    counts
        .into_iter()
        .filter_map(|(k, (e, t))| PrecisionRow::from_counts(e, t).ok().map(|row| (k, row)))
        .collect()
}

/// Which error class a change at `surface` between two outputs corrects.
///
/// The compared region is every prediction overlapping a span labeled
/// `surface` on either side.
pub fn classify_change(before: &NerOutput, after: &NerOutput, surface: &str) -> Result<ErrorCategory> {
    let anchors: Vec<CharSpan> = before
        .predictions
        .iter()
        .chain(&after.predictions)
        .filter(|p| p.surface == surface)
        .map(|p| p.span())
        .collect();
    let region = |out: &NerOutput| -> BTreeSet<(CharSpan, String)> {
        out.predictions
            .iter()
            .filter(|p| anchors.iter().any(|a| a.overlaps(&p.span())))
            .map(|p| (p.span(), p.label.label().to_string()))
            .collect()
    };
    let (b, a) = (region(before), region(after));
    if b == a {
        return Err(Error::NoChange(surface.to_string()));
    }
    if b.is_empty() {
        return Ok(ErrorCategory::Omission);
    }
    if a.is_empty() {
        return Ok(ErrorCategory::OverLabeling);
    }
    let spans = |set: &BTreeSet<(CharSpan, String)>| set.iter().map(|(s, _)| *s).collect::<BTreeSet<_>>();
    if spans(&b) == spans(&a) {
        Ok(ErrorCategory::IncorrectCategory)
    } else {
        Ok(ErrorCategory::RangeError)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub count: usize,
    pub percent: f64,
}

/// Counts and percentages of each error class in a sample.
pub fn category_distribution(
    categories: impl IntoIterator<Item = ErrorCategory>,
) -> BTreeMap<ErrorCategory, CategoryShare> {
    let mut counts: BTreeMap<ErrorCategory, usize> =
        ErrorCategory::ALL.into_iter().map(|c| (c, 0)).collect();
    for c in categories {
        *counts.entry(c).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(c, count)| {
            let percent = if total == 0 {
                0.0
            } else {
                100.0 * count as f64 / total as f64
            };
            (c, CategoryShare { count, percent })
        })
        .collect()
}

/// Reporting-only projection of backend labels onto PER / LOC / ORG.
pub fn coarse_category(label: &str) -> Option<&'static str> {
    let upper = label.trim().to_ascii_uppercase();
    let bare = upper
        .strip_prefix("B-")
        .or_else(|| upper.strip_prefix("I-"))
        .unwrap_or(&upper);
    match bare {
        "PER" | "PERSON" | "PERSONTYPE" => Some("PER"),
        "LOC" | "LOCATION" | "GPE" => Some("LOC"),
        "ORG" | "ORGANIZATION" | "ORGANISATION" => Some("ORG"),
        _ => None,
    }
}
