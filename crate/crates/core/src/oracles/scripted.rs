use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    word_pieces, ConstituencyParser, ContextEmbedder, EmbeddingVector, MaskCandidate,
    MaskedLanguageModel, NaturalnessScorer, Piece, PhraseSimilarity, PosTagger,
};
use crate::error::{Error, Result};
use crate::model::{CharSpan, Sentence};
use crate::syntax::ConstituencyTree;

/// Query that matches anything not scripted explicitly.
pub const WILDCARD: &str = "*";

/// Separator between a word and its sentence in contextual embedding keys.
pub const CONTEXT_SEPARATOR: &str = " || ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleName {
    MaskedLm,
    Tokenize,
    Embedding,
    PhraseSim,
    Pos,
    PosWord,
    Naturalness,
    Parser,
}

impl OracleName {
    fn as_str(self) -> &'static str {
        match self {
            OracleName::MaskedLm => "masked_lm",
            OracleName::Tokenize => "tokenize",
            OracleName::Embedding => "embedding",
            OracleName::PhraseSim => "phrase_sim",
            OracleName::Pos => "pos",
            OracleName::PosWord => "pos_word",
            OracleName::Naturalness => "naturalness",
            OracleName::Parser => "parser",
        }
    }
}

#[derive(Deserialize)]
struct ScriptLine {
    oracle: OracleName,
    query: String,
    response: serde_json::Value,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CandidateRepr {
    Pair(String, f64),
    Object(MaskCandidate),
}

/// Replays canned oracle responses keyed by query text.
///
/// Script files hold one JSON object per line:
/// `{"oracle": "masked_lm", "query": "BBC [MASK] is ...", "response": [["News", 9.1]]}`.
/// Embedding queries are `word || sentence` for a contextual vector or a
/// bare `word`; POS tags fall back from whole sentences to `pos_word`
/// entries. A query of `*` answers anything left unscripted.
#[derive(Debug, Clone, Default)]
pub struct ScriptedOracles {
    seed: u64,
    masked: HashMap<String, Vec<MaskCandidate>>,
    pieces: HashMap<String, Vec<String>>,
    embeddings: HashMap<String, EmbeddingVector>,
    phrases: HashMap<String, Vec<String>>,
    pos: HashMap<String, Vec<String>>,
    pos_words: HashMap<String, String>,
    naturalness: HashMap<String, f64>,
    trees: HashMap<String, String>,
    dim: Option<usize>,
}

fn unscripted(oracle: OracleName, query: &str) -> Error {
    Error::UnscriptedQuery {
        oracle: oracle.as_str().to_string(),
        query: query.to_string(),
    }
}

fn lookup<'a, T>(map: &'a HashMap<String, T>, query: &str) -> Option<&'a T> {
    map.get(query).or_else(|| map.get(WILDCARD))
}

impl ScriptedOracles {
    pub fn new(seed: u64) -> Self {
        ScriptedOracles {
            seed,
            ..Default::default()
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn load(path: &Path, seed: u64) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::Input {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        ScriptedOracles::from_reader(std::io::BufReader::new(file), seed)
    }

    pub fn from_reader(reader: impl BufRead, seed: u64) -> Result<Self> {
        let mut script = ScriptedOracles::new(seed);
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            script
                .add_line(trimmed)
                .map_err(|message| Error::Script { line: n + 1, message })?;
        }
        Ok(script)
    }

    fn add_line(&mut self, line: &str) -> std::result::Result<(), String> {
        let entry: ScriptLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let query = entry.query;
        let value = entry.response;
        fn parse<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> std::result::Result<T, String> {
            serde_json::from_value(v).map_err(|e| e.to_string())
        }
        match entry.oracle {
            OracleName::MaskedLm => {
                let raw: Vec<CandidateRepr> = parse(value)?;
                let candidates = raw
                    .into_iter()
                    .map(|c| match c {
                        CandidateRepr::Pair(word, logit) => MaskCandidate { word, logit },
                        CandidateRepr::Object(c) => c,
                    })
                    .collect();
                self.masked.insert(query, candidates);
            }
            OracleName::Tokenize => {
                self.pieces.insert(query, parse(value)?);
            }
            OracleName::Embedding => {
                let values: Vec<f64> = parse(value)?;
                let v = EmbeddingVector::new(values).map_err(|e| e.to_string())?;
                if let Some(dim) = self.dim {
                    if dim != v.dim() {
                        return Err(format!("embedding dimension {} differs from {dim}", v.dim()));
                    }
                }
                self.dim = Some(v.dim());
                self.embeddings.insert(query, v);
            }
            OracleName::PhraseSim => {
                self.phrases.insert(query, parse(value)?);
            }
            OracleName::Pos => {
                self.pos.insert(query, parse(value)?);
            }
            OracleName::PosWord => {
                self.pos_words.insert(query, parse(value)?);
            }
            OracleName::Naturalness => {
                self.naturalness.insert(query, parse(value)?);
            }
            OracleName::Parser => {
                let tree: String = parse(value)?;
                ConstituencyTree::from_bracketed(&tree).map_err(|e| e.to_string())?;
                self.trees.insert(query, tree);
            }
        }
        Ok(())
    }

    pub fn add_masked(&mut self, masked: impl Into<String>, candidates: Vec<MaskCandidate>) -> &mut Self {
        self.masked.insert(masked.into(), candidates);
        self
    }

    /// Subword segmentation of one word, BERT style (`["Me", "##kelle"]`).
    pub fn add_pieces(&mut self, word: impl Into<String>, pieces: Vec<String>) -> &mut Self {
        self.pieces.insert(word.into(), pieces);
        self
    }

    /// # Panics
    /// If the vector is empty, non-finite, or its dimension differs from
    /// earlier entries.
    pub fn add_embedding(&mut self, query: impl Into<String>, values: Vec<f64>) -> &mut Self {
        let v = EmbeddingVector::new(values).expect("valid embedding");
        if let Some(dim) = self.dim {
            assert_eq!(dim, v.dim(), "embedding dimension mismatch");
        }
        self.dim = Some(v.dim());
        self.embeddings.insert(query.into(), v);
        self
    }

    pub fn add_context_embedding(&mut self, word: &str, sentence: &str, values: Vec<f64>) -> &mut Self {
        self.add_embedding(format!("{word}{CONTEXT_SEPARATOR}{sentence}"), values)
    }

    pub fn add_similar_phrases(&mut self, phrase: impl Into<String>, similar: Vec<String>) -> &mut Self {
        self.phrases.insert(phrase.into(), similar);
        self
    }

    pub fn add_pos(&mut self, sentence: impl Into<String>, tags: Vec<String>) -> &mut Self {
        self.pos.insert(sentence.into(), tags);
        self
    }

    pub fn add_pos_word(&mut self, word: impl Into<String>, tag: impl Into<String>) -> &mut Self {
        self.pos_words.insert(word.into(), tag.into());
        self
    }

    pub fn add_naturalness(&mut self, text: impl Into<String>, score: f64) -> &mut Self {
        self.naturalness.insert(text.into(), score);
        self
    }

    pub fn add_tree(&mut self, sentence: impl Into<String>, bracketed: impl Into<String>) -> &mut Self {
        self.trees.insert(sentence.into(), bracketed.into());
        self
    }
}

impl MaskedLanguageModel for ScriptedOracles {
    fn fill_mask(&self, masked: &str) -> Result<Vec<MaskCandidate>> {
        lookup(&self.masked, masked)
            .cloned()
            .ok_or_else(|| unscripted(OracleName::MaskedLm, masked))
    }

    fn pieces(&self, text: &str) -> Result<Vec<Piece>> {
        let mut out = Vec::new();
        for word in word_pieces(text) {
            let Some(split) = self.pieces.get(&word.text) else {
                out.push(word);
                continue;
            };
            let parts: Vec<&str> = split
                .iter()
                .map(|p| p.strip_prefix("##").unwrap_or(p))
                .collect();
            if parts.concat() != word.text {
                return Err(Error::OracleResponse {
                    oracle: OracleName::Tokenize.as_str().into(),
                    message: format!("pieces {split:?} do not spell {:?}", word.text),
                });
            }
            let is_subword = parts.len() > 1;
            let mut start = word.span.start;
            for part in parts {
                let len = part.chars().count();
                out.push(Piece {
                    text: part.to_string(),
                    span: CharSpan::new(start, start + len),
                    is_subword,
                });
                start += len;
            }
        }
        Ok(out)
    }
}

impl ContextEmbedder for ScriptedOracles {
    fn embed(&self, sentence: &Sentence, span: CharSpan) -> Result<EmbeddingVector> {
        let word = sentence.slice(span).unwrap_or_default();
        let contextual = format!("{word}{CONTEXT_SEPARATOR}{}", sentence.text());
        self.embeddings
            .get(&contextual)
            .or_else(|| self.embeddings.get(word))
            .or_else(|| self.embeddings.get(WILDCARD))
            .cloned()
            .ok_or_else(|| unscripted(OracleName::Embedding, &contextual))
    }
}

impl PhraseSimilarity for ScriptedOracles {
    fn similar(&self, phrase: &str) -> Result<Vec<String>> {
        lookup(&self.phrases, phrase)
            .cloned()
            .ok_or_else(|| unscripted(OracleName::PhraseSim, phrase))
    }
}

impl PosTagger for ScriptedOracles {
    fn tag(&self, sentence: &Sentence) -> Result<Vec<String>> {
        if let Some(tags) = self.pos.get(sentence.text()) {
            return Ok(tags.clone());
        }
        sentence
            .tokens()
            .iter()
            .map(|t| {
                self.pos_words
                    .get(&t.surface)
                    .or_else(|| self.pos_words.get(&t.surface.to_lowercase()))
                    .cloned()
                    .or_else(|| t.is_punctuation().then(|| t.surface.clone()))
                    .or_else(|| self.pos_words.get(WILDCARD).cloned())
                    .ok_or_else(|| unscripted(OracleName::Pos, sentence.text()))
            })
            .collect()
    }
}

impl NaturalnessScorer for ScriptedOracles {
    fn score(&self, text: &str) -> Result<f64> {
        lookup(&self.naturalness, text)
            .copied()
            .ok_or_else(|| unscripted(OracleName::Naturalness, text))
    }
}

impl ConstituencyParser for ScriptedOracles {
    fn parse(&self, sentence: &Sentence) -> Result<ConstituencyTree> {
        let bracketed = self
            .trees
            .get(sentence.text())
            .ok_or_else(|| unscripted(OracleName::Parser, sentence.text()))?;
        ConstituencyTree::parse_for(bracketed, sentence)
    }
}
