//! Corpus records, byte-level tokenization and JSONL ingestion.
//!
//! The vocabulary is the 256 byte values plus [`BOS`] and [`EOS`], so every
//! valid UTF-8 string tokenizes and detokenizes losslessly.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{Error, Result};

pub const BOS: u32 = 256;
pub const EOS: u32 = 257;
pub const VOCAB_SIZE: usize = 258;

/// `[BOS, bytes..., EOS]`.
pub fn tokenize(text: &str) -> Vec<u32> {
    let mut ids = Vec::with_capacity(text.len() + 2);
    ids.push(BOS);
    ids.extend(text.bytes().map(u32::from));
    ids.push(EOS);
    ids
}

/// Inverse of [`tokenize`]. Special tokens are dropped; invalid UTF-8 (which
/// only arises from hand-built id sequences) is replaced lossily.
pub fn detokenize(ids: &[u32]) -> String {
    let bytes: Vec<u8> = ids.iter().filter(|&&id| id < 256).map(|&id| id as u8).collect();
    match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: u64,
    pub text: String,
    pub token_ids: Vec<u32>,
    pub topic_id: Option<usize>,
}

impl Document {
    pub fn new(doc_id: u64, text: impl Into<String>) -> Self {
        let text = text.into();
        let token_ids = tokenize(&text);
        Self {
            doc_id,
            text,
            token_ids,
            topic_id: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    split: Split,
}

impl Corpus {
    /// Sorts by doc_id and rejects duplicates or an empty train split.
    pub fn new(mut documents: Vec<Document>, split: Split) -> Result<Self> {
        if documents.is_empty() && split == Split::Train {
            return Err(Error::EmptyCorpus("train"));
        }
        documents.sort_by_key(|d| d.doc_id);
        for pair in documents.windows(2) {
            if pair[0].doc_id == pair[1].doc_id {
                return Err(Error::DuplicateDocId(pair[0].doc_id));
            }
        }
        Ok(Self { documents, split })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, doc_id: u64) -> Option<&Document> {
        self.documents
            .binary_search_by_key(&doc_id, |d| d.doc_id)
            .ok()
            .map(|i| &self.documents[i])
    }

    pub fn texts(&self) -> Vec<&str> {
        self.documents.iter().map(|d| d.text.as_str()).collect()
    }

    pub fn total_tokens(&self) -> usize {
        self.documents.iter().map(|d| d.token_ids.len()).sum()
    }

    /// Records the topic assignment on each document.
    pub fn set_topics(&mut self, topic_of: impl Fn(u64) -> Option<usize>) {
        for d in &mut self.documents {
            d.topic_id = topic_of(d.doc_id);
        }
    }

    /// Writes the corpus as `{"id":..,"text":..}` JSONL.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = binio::create(path)?;
        for d in &self.documents {
            let line = serde_json::to_string(&CorpusLine {
                id: d.doc_id,
                text: d.text.clone(),
            })?;
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct CorpusLine {
    id: u64,
    text: String,
}

fn jsonl_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let reader = binio::open(path)?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, line));
    }
    Ok(out)
}

/// Loads a JSONL corpus with `"id"` and `"text"` keys. Unknown keys are ignored.
pub fn load_corpus(path: &Path, split: Split) -> Result<Corpus> {
    let mut documents = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in jsonl_lines(path)? {
        let rec: CorpusLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if !seen.insert(rec.id) {
            return Err(Error::DuplicateDocId(rec.id));
        }
        documents.push(Document::new(rec.id, rec.text));
    }
    Corpus::new(documents, split)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McItem {
    #[serde(rename = "id")]
    pub item_id: u64,
    pub prompt: String,
    pub options: Vec<String>,
    #[serde(rename = "gold")]
    pub gold_index: usize,
}

impl McItem {
    pub fn validate(&self) -> Result<()> {
        if self.options.len() < 2 {
            return Err(Error::Invalid(format!(
                "item {}: needs at least 2 options",
                self.item_id
            )));
        }
        if self.options.iter().any(|o| o.is_empty()) {
            return Err(Error::Invalid(format!("item {}: empty option", self.item_id)));
        }
        if self.gold_index >= self.options.len() {
            return Err(Error::Invalid(format!(
                "item {}: gold index {} out of range",
                self.item_id, self.gold_index
            )));
        }
        Ok(())
    }
}

/// Loads a multiple-choice task file (`id`, `prompt`, `options`, `gold`).
pub fn load_mc_items(path: &Path) -> Result<Vec<McItem>> {
    let mut items = Vec::new();
    for (line_no, line) in jsonl_lines(path)? {
        let item: McItem = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        item.validate().map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

pub fn save_mc_items(items: &[McItem], path: &Path) -> Result<()> {
    let mut w = binio::create(path)?;
    for item in items {
        writeln!(w, "{}", serde_json::to_string(item)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
