//! Document ingestion, tokenization and vocabulary.
//!
//! A [`Corpus`] is immutable once built. Document ids are dense and equal the
//! position of the text in the ingestion order; every other module refers to
//! documents by that id.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Corpora smaller than this still fit, but topic quality and retrieval
/// degrade noticeably, so ingestion records a warning.
pub const RECOMMENDED_MIN_DOCUMENTS: usize = 10_000;

pub const DEFAULT_MIN_TOKEN_LEN: usize = 3;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("corpus contains no texts")]
    EmptyCorpus,
    #[error("document {0} is empty after trimming whitespace")]
    EmptyDocument(usize),
    #[error("min_token_len must be at least 1")]
    InvalidMinTokenLen,
    #[error("failed to read {path}: {message}")]
    Io { path: String, message: String },
    #[error("failed to parse corpus input: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: usize,
    pub text: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub token_id: usize,
    pub corpus_frequency: usize,
    pub document_frequency: usize,
}

/// Token statistics over the whole corpus. Token ids are assigned in
/// lexicographic token order so that they do not depend on document order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    entries: BTreeMap<String, VocabEntry>,
}

impl Vocabulary {
    pub fn get(&self, token: &str) -> Option<&VocabEntry> {
        self.entries.get(token)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &VocabEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn corpus_frequency(&self, token: &str) -> usize {
        self.entries.get(token).map_or(0, |e| e.corpus_frequency)
    }

    pub fn document_frequency(&self, token: &str) -> usize {
        self.entries.get(token).map_or(0, |e| e.document_frequency)
    }

    fn build(documents: &[Document]) -> Self {
        let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for doc in documents {
            let mut seen = BTreeSet::new();
            for tok in &doc.tokens {
                let slot = counts.entry(tok.clone()).or_default();
                slot.0 += 1;
                if seen.insert(tok.as_str()) {
                    slot.1 += 1;
                }
            }
        }
        let entries = counts
            .into_iter()
            .enumerate()
            .map(|(token_id, (tok, (cf, df)))| {
                (
                    tok,
                    VocabEntry {
                        token_id,
                        corpus_frequency: cf,
                        document_frequency: df,
                    },
                )
            })
            .collect();
        Self { entries }
    }
}

/// Tokenizer settings. They are part of the persisted model so that
/// re-tokenizing a stored text reproduces its tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub min_token_len: usize,
    pub stopwords: BTreeSet<String>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            min_token_len: DEFAULT_MIN_TOKEN_LEN,
            stopwords: default_stopwords(),
        }
    }
}

impl TokenizerConfig {
    pub fn new(min_token_len: usize, stopwords: BTreeSet<String>) -> Self {
        Self {
            min_token_len,
            stopwords,
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize(text, self.min_token_len, &self.stopwords)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorpusWarning {
    SmallCorpus {
        documents: usize,
        recommended: usize,
    },
}

impl std::fmt::Display for CorpusWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CorpusWarning::SmallCorpus {
                documents,
                recommended,
            } => write!(
                f,
                "corpus has {documents} documents; more than {recommended} are recommended for reliable topics and retrieval"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    vocabulary: Vocabulary,
    token_counts_per_doc: Vec<usize>,
    tokenizer: TokenizerConfig,
    warnings: Vec<CorpusWarning>,
}

impl Corpus {
    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn document(&self, id: usize) -> Option<&Document> {
        self.documents.get(id)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn token_counts_per_doc(&self) -> &[usize] {
        &self.token_counts_per_doc
    }

    pub fn total_tokens(&self) -> usize {
        self.token_counts_per_doc.iter().sum()
    }

    pub fn tokenizer(&self) -> &TokenizerConfig {
        &self.tokenizer
    }

    pub fn warnings(&self) -> &[CorpusWarning] {
        &self.warnings
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.text.as_str())
    }
}

/// Lowercases `text`, splits it on every non-alphanumeric character and drops
/// tokens shorter than `min_token_len` characters or present in `stopwords`.
pub fn tokenize(text: &str, min_token_len: usize, stopwords: &BTreeSet<String>) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|piece| !piece.is_empty())
        .map(str::to_lowercase)
        .filter(|tok| tok.chars().count() >= min_token_len && !stopwords.contains(tok))
        .collect()
}

pub fn ingest_corpus<S: AsRef<str>>(
    texts: &[S],
    tokenizer: TokenizerConfig,
) -> Result<Corpus, CorpusError> {
    if texts.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if tokenizer.min_token_len == 0 {
        return Err(CorpusError::InvalidMinTokenLen);
    }
    let mut documents = Vec::with_capacity(texts.len());
    for (id, text) in texts.iter().enumerate() {
        let text = text.as_ref();
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyDocument(id));
        }
        documents.push(Document {
            id,
            text: text.to_string(),
            tokens: tokenizer.tokenize(text),
        });
    }
    let token_counts_per_doc = documents.iter().map(|d| d.tokens.len()).collect();
    let vocabulary = Vocabulary::build(&documents);

    let mut warnings = Vec::new();
    if documents.len() < RECOMMENDED_MIN_DOCUMENTS {
        let warning = CorpusWarning::SmallCorpus {
            documents: documents.len(),
            recommended: RECOMMENDED_MIN_DOCUMENTS,
        };
        tracing::warn!("{warning}");
        warnings.push(warning);
    }

    Ok(Corpus {
        documents,
        vocabulary,
        token_counts_per_doc,
        tokenizer,
        warnings,
    })
}

pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

/// One token per line; blank lines and `#` comments are ignored.
pub fn parse_stopwords(contents: &str) -> BTreeSet<String> {
    contents
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>, CorpusError> {
    let contents = fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(parse_stopwords(&contents))
}

/// Reads corpus texts from a file. Accepted layouts: a JSON array of strings,
/// JSON lines with a `text` field, or newline-delimited plain text.
pub fn read_corpus_file(path: &Path) -> Result<Vec<String>, CorpusError> {
    let contents = fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_corpus_text(&contents)
}

pub fn parse_corpus_text(contents: &str) -> Result<Vec<String>, CorpusError> {
    let trimmed = contents.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str::<Vec<String>>(trimmed)
            .map_err(|e| CorpusError::Parse(e.to_string()));
    }
    if trimmed.starts_with('{') {
        #[derive(Deserialize)]
        struct Line {
            text: String,
        }
        return contents
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str::<Line>(l)
                    .map(|line| line.text)
                    .map_err(|e| CorpusError::Parse(format!("line {}: {e}", n + 1)))
            })
            .collect();
    }
    Ok(contents
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect())
}
