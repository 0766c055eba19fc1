use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::embeddings::EmbeddingTable;
use crate::data::labels::{LabelType, LabelVocab};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_MAX_SENTENCES: usize = 30;
pub const DEFAULT_MAX_WORDS: usize = 30;

/// Padding grid extents: at most `max_sentences` sentences of `max_words` words.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLimits {
    pub max_sentences: usize,
    pub max_words: usize,
}

impl Default for GridLimits {
    fn default() -> Self {
        GridLimits {
            max_sentences: DEFAULT_MAX_SENTENCES,
            max_words: DEFAULT_MAX_WORDS,
        }
    }
}

/// One corpus record: pre-split sentences of whitespace tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub lang: String,
    pub sentences: Vec<Vec<String>>,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub general_labels: Option<Vec<String>>,
}

impl RawDocument {
    pub fn labels_of(&self, kind: LabelType) -> Result<&[String]> {
        match kind {
            LabelType::Specific => Ok(&self.labels),
            LabelType::General => self
                .general_labels
                .as_deref()
                .ok_or_else(|| Error::Data(format!("document `{}` has no general labels", self.id))),
        }
    }

    /// Truncates to the grid and drops empty sentences.
    fn truncate(&mut self, limits: GridLimits) {
        self.sentences.retain(|s| !s.is_empty());
        self.sentences.truncate(limits.max_sentences);
        for s in &mut self.sentences {
            s.truncate(limits.max_words);
        }
    }
}

/// Per-language documents keyed by language code.
pub type Corpus = BTreeMap<String, Vec<RawDocument>>;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub accepted: usize,
    pub rejected_no_labels: usize,
    pub rejected_empty: usize,
    pub truncated: usize,
}

/// Reads a JSON-lines corpus. `languages`, when given, is the set of
/// accepted language codes.
pub fn load_corpus(path: &Path, limits: GridLimits, languages: Option<&[String]>) -> Result<(Corpus, LoadReport)> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut corpus = Corpus::new();
    let mut report = LoadReport::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let mut doc: RawDocument = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if doc.lang.is_empty() || doc.lang.contains(char::is_whitespace) {
            return Err(parse_err(format!("invalid language code `{}`", doc.lang)));
        }
        if let Some(allowed) = languages {
            if !allowed.contains(&doc.lang) {
                return Err(Error::UnknownLanguage(doc.lang));
            }
        }
        if doc.labels.is_empty() {
            report.rejected_no_labels += 1;
            continue;
        }
        let before = doc.clone();
        doc.truncate(limits);
        if doc.sentences.is_empty() {
            report.rejected_empty += 1;
            continue;
        }
        if doc != before {
            report.truncated += 1;
        }
        report.accepted += 1;
        corpus.entry(doc.lang.clone()).or_default().push(doc);
    }
    Ok((corpus, report))
}

pub fn write_corpus<'a>(path: &Path, docs: impl IntoIterator<Item = &'a RawDocument>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for doc in docs {
        serde_json::to_writer(&mut w, doc)?;
        writeln!(w).map_err(|e| Error::io("write corpus", e))?;
    }
    w.flush().map_err(|e| Error::io("write corpus", e))
}

/// SHA-256 over the canonical JSON-lines serialization, languages in key order.
pub fn corpus_digest(corpus: &Corpus) -> Result<String> {
    let mut h = Sha256::new();
    for docs in corpus.values() {
        for d in docs {
            h.update(serde_json::to_vec(d)?);
            h.update(b"\n");
        }
    }
    Ok(hex(&h.finalize()))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A document padded to the sentence×word grid, ready for the model.
///
/// `tokens[s * max_words + w]` is the embedding row of word `w` of sentence
/// `s`, `None` for out-of-vocabulary tokens and for padding; `mask`
/// distinguishes the two.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub lang: String,
    pub limits: GridLimits,
    pub tokens: Vec<Option<usize>>,
    pub mask: Vec<bool>,
    /// Valid word count of each valid sentence.
    pub sentence_lengths: Vec<usize>,
    /// Indices into the language's label vocabulary.
    pub labels: Vec<usize>,
    pub num_labels: usize,
}

impl Document {
    pub fn num_sentences(&self) -> usize {
        self.sentence_lengths.len()
    }

    /// Mask over the sentence axis of the grid.
    pub fn sentence_mask(&self) -> Vec<bool> {
        (0..self.limits.max_sentences)
            .map(|s| s < self.num_sentences())
            .collect()
    }

    pub fn word_mask(&self, sentence: usize) -> &[bool] {
        let w = self.limits.max_words;
        &self.mask[sentence * w..(sentence + 1) * w]
    }

    pub fn sentence_tokens(&self, sentence: usize) -> &[Option<usize>] {
        let w = self.limits.max_words;
        &self.tokens[sentence * w..sentence * w + self.sentence_lengths[sentence]]
    }

    pub fn k_hot<S: Scalar>(&self) -> Vec<S> {
        let mut y = vec![S::zero(); self.num_labels];
        for &l in &self.labels {
            y[l] = S::one();
        }
        y
    }
}

/// Pads `raw` into the grid. Labels outside `vocab` are dropped; returns
/// `None` when none remain.
pub fn encode_document<S: Scalar>(
    raw: &RawDocument,
    emb: &EmbeddingTable<S>,
    vocab: &LabelVocab,
    limits: GridLimits,
) -> Result<Option<Document>> {
    if raw.lang != vocab.lang {
        return Err(Error::Contract(format!(
            "document language `{}` does not match label vocabulary `{}`",
            raw.lang, vocab.lang
        )));
    }
    let lang = emb.language(&raw.lang)?;
    let mut labels: Vec<usize> = raw
        .labels_of(vocab.kind)?
        .iter()
        .filter_map(|l| vocab.index_of(l))
        .collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.is_empty() {
        return Ok(None);
    }
    let cells = limits.max_sentences * limits.max_words;
    let mut tokens = vec![None; cells];
    let mut mask = vec![false; cells];
    let mut sentence_lengths = Vec::new();
    for (s, sentence) in raw
        .sentences
        .iter()
        .filter(|s| !s.is_empty())
        .take(limits.max_sentences)
        .enumerate()
    {
        let len = sentence.len().min(limits.max_words);
        for (w, token) in sentence.iter().take(len).enumerate() {
            tokens[s * limits.max_words + w] = lang.index_of(token);
            mask[s * limits.max_words + w] = true;
        }
        sentence_lengths.push(len);
    }
    if sentence_lengths.is_empty() {
        return Err(Error::Data(format!("document `{}` has no words", raw.id)));
    }
    Ok(Some(Document {
        id: raw.id.clone(),
        lang: raw.lang.clone(),
        limits,
        tokens,
        mask,
        sentence_lengths,
        labels,
        num_labels: vocab.len(),
    }))
}

/// Recovers the token grid of a padded document. OOV positions become `unk`.
pub fn unpad<S: Scalar>(doc: &Document, emb: &EmbeddingTable<S>, unk: &str) -> Result<Vec<Vec<String>>> {
    let lang = emb.language(&doc.lang)?;
    Ok((0..doc.num_sentences())
        .map(|s| {
            doc.sentence_tokens(s)
                .iter()
                .map(|t| t.map_or_else(|| unk.to_string(), |i| lang.word(i).to_string()))
                .collect()
        })
        .collect())
}
