//! Pipeline thresholds and the sectioned `key = value` config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TransformKind;

/// Maximum tolerated naturalness drop per transformation kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynThresholds {
    pub token: f64,
    pub phrase: f64,
    pub structural: f64,
    pub shuffle: f64,
}

impl SynThresholds {
    pub fn uniform(value: f64) -> Self {
        SynThresholds {
            token: value,
            phrase: value,
            structural: value,
            shuffle: value,
        }
    }

    /// Four-category backends tolerate a small naturalness drop; richer
    /// tag sets get strict filtering.
    pub fn for_category_count(count: usize) -> Self {
        if count == 4 {
            SynThresholds {
                token: 0.01,
                phrase: 0.01,
                structural: 0.02,
                shuffle: 0.01,
            }
        } else {
            SynThresholds::uniform(0.0)
        }
    }

    pub fn get(&self, kind: TransformKind) -> f64 {
        match kind {
            TransformKind::TokenSubst => self.token,
            TransformKind::PhraseSubst => self.phrase,
            TransformKind::Structural => self.structural,
            TransformKind::EntityShuffle => self.shuffle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Semantic filter threshold for test generation.
    pub s_threshold_testing: f64,
    pub syn_threshold: SynThresholds,
    /// Minimum masked-LM logit for repair candidates.
    pub p_threshold: f64,
    /// Semantic similarity threshold for repair candidates.
    pub s_threshold_repair: f64,
    /// Weight of similarity against logit in the scoring function.
    pub k_balance: f64,
    /// Damping for votes cast for the NULL category.
    pub alpha: f64,
    /// Damping for votes from masked subwords.
    pub lambda: f64,
    pub top_k_testing: usize,
    pub top_k_repair: usize,
    pub shuffle_attempts: usize,
    pub parallelism: usize,
    pub seed: u64,
    pub max_mutants_per_sentence: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            s_threshold_testing: 0.65,
            syn_threshold: SynThresholds::uniform(0.0),
            p_threshold: 5.5,
            s_threshold_repair: 0.45,
            k_balance: 2.5,
            alpha: 0.2,
            lambda: 0.5,
            top_k_testing: 10,
            top_k_repair: 20,
            shuffle_attempts: 3,
            parallelism: 4,
            seed: 0,
            max_mutants_per_sentence: None,
        }
    }
}

impl PipelineConfig {
    /// Defaults with naturalness thresholds chosen by the backend's
    /// category count.
    pub fn for_backend(category_count: usize) -> Self {
        PipelineConfig {
            syn_threshold: SynThresholds::for_category_count(category_count),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        unit("alpha", self.alpha)?;
        unit("lambda", self.lambda)?;
        let finite = [
            ("s_threshold_testing", self.s_threshold_testing),
            ("p_threshold", self.p_threshold),
            ("s_threshold_repair", self.s_threshold_repair),
            ("k_balance", self.k_balance),
            ("syn_threshold.token", self.syn_threshold.token),
            ("syn_threshold.phrase", self.syn_threshold.phrase),
            ("syn_threshold.structural", self.syn_threshold.structural),
            ("syn_threshold.shuffle", self.syn_threshold.shuffle),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        for (name, v) in [
            ("top_k_testing", self.top_k_testing),
            ("top_k_repair", self.top_k_repair),
            ("shuffle_attempts", self.shuffle_attempts),
            ("parallelism", self.parallelism),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.max_mutants_per_sentence == Some(0) {
            return Err(Error::Config("max_mutants_per_sentence must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub s_threshold: Option<f64>,
    pub syn_threshold_token: Option<f64>,
    pub syn_threshold_phrase: Option<f64>,
    pub syn_threshold_structural: Option<f64>,
    pub syn_threshold_shuffle: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MutationSection {
    pub top_k: Option<usize>,
    pub shuffle_attempts: Option<usize>,
    pub max_mutants_per_sentence: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RepairSection {
    pub p_threshold: Option<f64>,
    pub s_threshold: Option<f64>,
    pub k: Option<f64>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    /// JSON object mapping surface strings to labels (dictionary mock).
    pub lexicon: Option<PathBuf>,
    /// JSON array of fault rules (dictionary mock).
    pub faults: Option<PathBuf>,
    pub version: Option<String>,
    pub categories: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Scripted oracle JSONL file.
    pub script: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CacheSection {
    pub path: Option<PathBuf>,
}

/// Parsed config file. Every value is optional and overrides the
/// backend-dependent defaults.
#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub filters: FilterSection,
    #[serde(default)]
    pub mutation: MutationSection,
    #[serde(default)]
    pub repair: RepairSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub oracles: OracleSection,
    #[serde(default)]
    pub cache: CacheSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Read a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Input {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut file = ConfigFile::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [
            &mut file.backend.lexicon,
            &mut file.backend.faults,
            &mut file.oracles.script,
            &mut file.cache.path,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(file)
    }

    pub fn apply(&self, config: &mut PipelineConfig) {
        fn set<T: Copy>(slot: &mut T, value: Option<T>) {
            if let Some(v) = value {
                *slot = v;
            }
        }
        let f = &self.filters;
        set(&mut config.s_threshold_testing, f.s_threshold);
        set(&mut config.syn_threshold.token, f.syn_threshold_token);
        set(&mut config.syn_threshold.phrase, f.syn_threshold_phrase);
        set(&mut config.syn_threshold.structural, f.syn_threshold_structural);
        set(&mut config.syn_threshold.shuffle, f.syn_threshold_shuffle);
        let m = &self.mutation;
        set(&mut config.top_k_testing, m.top_k);
        set(&mut config.shuffle_attempts, m.shuffle_attempts);
        if m.max_mutants_per_sentence.is_some() {
            config.max_mutants_per_sentence = m.max_mutants_per_sentence;
        }
        let r = &self.repair;
        set(&mut config.p_threshold, r.p_threshold);
        set(&mut config.s_threshold_repair, r.s_threshold);
        set(&mut config.k_balance, r.k);
        set(&mut config.alpha, r.alpha);
        set(&mut config.lambda, r.lambda);
        set(&mut config.top_k_repair, r.top_k);
        set(&mut config.seed, self.pipeline.seed);
        set(&mut config.parallelism, self.pipeline.parallelism);
    }
}
