//! Evidence retrieval over a local corpus, with a slot for web search.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Corpus,
    WebSearch,
    UserSubmitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidencePassage {
    pub passage_id: String,
    pub document_id: String,
    /// Character offset of the passage within its document.
    pub offset: usize,
    pub text: String,
    pub score: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("duplicate document id `{0}`")]
    DuplicateDocument(String),
    #[error("document `{0}` is empty")]
    EmptyDocument(String),
    #[error("duplicate passage id `{0}`")]
    DuplicatePassage(String),
    #[error("invalid chunk parameters: window {window}, overlap {overlap}")]
    BadChunkParams { window: usize, overlap: usize },
    #[error("corpus: {0}")]
    Corpus(String),
}

/// Fixed-window chunking in characters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub window: usize,
    pub overlap: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams {
            window: 1000,
            overlap: 200,
        }
    }
}

impl ChunkParams {
    fn stride(&self) -> Result<usize, RetrievalError> {
        if self.window == 0 || self.overlap >= self.window {
            return Err(RetrievalError::BadChunkParams {
                window: self.window,
                overlap: self.overlap,
            });
        }
        Ok(self.window - self.overlap)
    }
}

/// Scores a passage against a query. Higher is more relevant; zero means unrelated.
pub trait RelevanceScorer: Send + Sync {
    fn score(&self, query: &str, passage: &str) -> f64;
}

/// Jaccard overlap of lower-cased alphanumeric token sets.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl RelevanceScorer for LexicalScorer {
    fn score(&self, query: &str, passage: &str) -> f64 {
        let q = tokenize(query);
        let p = tokenize(passage);
        let union = q.union(&p).count();
        if union == 0 {
            return 0.0;
        }
        q.intersection(&p).count() as f64 / union as f64
    }
}

/// Source of passages from outside the local corpus.
pub trait WebSearch: Send + Sync {
    fn search(&self, query: &str, k: usize) -> Vec<EvidencePassage>;
}

/// Web search slot that returns nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoWebSearch;

impl WebSearch for NoWebSearch {
    fn search(&self, _query: &str, _k: usize) -> Vec<EvidencePassage> {
        Vec::new()
    }
}

#[derive(Debug, Clone)]
struct Document {
    id: String,
    chars: Vec<char>,
}

/// Immutable chunked corpus.
#[derive(Clone)]
pub struct CorpusIndex {
    params: ChunkParams,
    documents: Vec<Document>,
    passages: Vec<EvidencePassage>,
    scorer: Arc<dyn RelevanceScorer>,
}

impl fmt::Debug for CorpusIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CorpusIndex")
            .field("params", &self.params)
            .field("documents", &self.documents.len())
            .field("passages", &self.passages.len())
            .finish()
    }
}

impl Default for CorpusIndex {
    fn default() -> Self {
        CorpusIndex {
            params: ChunkParams::default(),
            documents: Vec::new(),
            passages: Vec::new(),
            scorer: Arc::new(LexicalScorer),
        }
    }
}

impl CorpusIndex {
    pub fn passages(&self) -> &[EvidencePassage] {
        &self.passages
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn with_scorer(mut self, scorer: Arc<dyn RelevanceScorer>) -> Self {
        self.scorer = scorer;
        self
    }

    /// Text of the document span a passage was cut from.
    pub fn document_span(&self, passage_id: &str) -> Option<String> {
        let p = self.passages.iter().find(|p| p.passage_id == passage_id)?;
        let doc = self.documents.iter().find(|d| d.id == p.document_id)?;
        let len = p.text.chars().count();
        Some(doc.chars[p.offset..p.offset + len].iter().collect())
    }
}

/// Splits documents into overlapping fixed-size windows. Windows start every
/// `window - overlap` characters for as long as the start lies inside the
/// document.
pub fn index_corpus(
    documents: Vec<(String, String)>,
    params: ChunkParams,
) -> Result<CorpusIndex, RetrievalError> {
    let stride = params.stride()?;
    let mut seen = HashSet::new();
    let mut index = CorpusIndex {
        params,
        ..CorpusIndex::default()
    };
    for (id, text) in documents {
        if !seen.insert(id.clone()) {
            return Err(RetrievalError::DuplicateDocument(id));
        }
        if text.trim().is_empty() {
            return Err(RetrievalError::EmptyDocument(id));
        }
        let chars: Vec<char> = text.chars().collect();
        let mut offset = 0;
        let mut k = 0;
        while offset < chars.len() {
            let end = (offset + params.window).min(chars.len());
            index.passages.push(EvidencePassage {
                passage_id: format!("{id}#{k}"),
                document_id: id.clone(),
                offset,
                text: chars[offset..end].iter().collect(),
                score: 0.0,
                provenance: Provenance::Corpus,
            });
            offset += stride;
            k += 1;
        }
        index.documents.push(Document { id, chars });
    }
    Ok(index)
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    id: String,
    path: String,
}

/// Loads a corpus directory: `manifest.json` lists `{"id", "path"}` entries
/// pointing at plain-text files relative to the directory.
pub fn load_corpus_dir(dir: &Path, params: ChunkParams) -> Result<CorpusIndex, RetrievalError> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| RetrievalError::Corpus(format!("{}: {e}", manifest_path.display())))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text)
        .map_err(|e| RetrievalError::Corpus(format!("{}: {e}", manifest_path.display())))?;
    let mut docs = Vec::with_capacity(entries.len());
    for entry in entries {
        let path = dir.join(&entry.path);
        let body = std::fs::read_to_string(&path)
            .map_err(|e| RetrievalError::Corpus(format!("{}: {e}", path.display())))?;
        docs.push((entry.id, body));
    }
    index_corpus(docs, params)
}

fn rank(mut passages: Vec<EvidencePassage>, k: usize) -> Vec<EvidencePassage> {
    passages.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.passage_id.cmp(&b.passage_id))
    });
    passages.truncate(k);
    passages
}

/// Top-`k` passages by descending relevance, ties broken by passage id.
/// Passages with zero relevance are never returned.
pub fn retrieve(index: &CorpusIndex, query: &str, k: usize) -> Vec<EvidencePassage> {
    if k == 0 {
        return Vec::new();
    }
    let scored: Vec<EvidencePassage> = index
        .passages
        .iter()
        .filter_map(|p| {
            let score = index.scorer.score(query, &p.text);
            (score > 0.0).then(|| EvidencePassage {
                score,
                ..p.clone()
            })
        })
        .collect();
    rank(scored, k)
}

/// Corpus results followed by web results, re-ranked together and cut to `k`.
pub fn hybrid_retrieve(
    index: &CorpusIndex,
    web: &dyn WebSearch,
    query: &str,
    k: usize,
) -> Vec<EvidencePassage> {
    if k == 0 {
        return Vec::new();
    }
    let mut merged = retrieve(index, query, k);
    merged.extend(web.search(query, k));
    let mut seen = HashSet::new();
    merged.retain(|p| seen.insert(p.passage_id.clone()));
    rank(merged, k)
}

/// Passages available to agents for one case, in a fixed order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceContext {
    pub passages: Vec<EvidencePassage>,
}

impl EvidenceContext {
    pub fn ids(&self) -> Vec<&str> {
        self.passages.iter().map(|p| p.passage_id.as_str()).collect()
    }

    pub fn passage(&self, id: &str) -> Option<&EvidencePassage> {
        self.passages.iter().find(|p| p.passage_id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    /// Prompt-ready rendering: one `[id] text` block per passage.
    pub fn render(&self) -> String {
        if self.passages.is_empty() {
            return "(no evidence passages retrieved)".to_string();
        }
        self.passages
            .iter()
            .map(|p| format!("[{}] {}", p.passage_id, p.text.trim()))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

pub fn assemble_context(passages: Vec<EvidencePassage>) -> Result<EvidenceContext, RetrievalError> {
    let mut seen = HashSet::new();
    for p in &passages {
        if !seen.insert(p.passage_id.as_str()) {
            return Err(RetrievalError::DuplicatePassage(p.passage_id.clone()));
        }
    }
    Ok(EvidenceContext { passages })
}
