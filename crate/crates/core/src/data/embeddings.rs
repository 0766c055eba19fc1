use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::corpus::hex;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Frozen word vectors of one language.
#[derive(Clone, Debug, PartialEq)]
pub struct LanguageVectors<S> {
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<S>,
    dim: usize,
}

impl<S: Scalar> LanguageVectors<S> {
    fn new(dim: usize) -> Self {
        LanguageVectors {
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            dim,
        }
    }

    /// Inserts or replaces a vector; returns true when the word already existed.
    pub fn insert(&mut self, word: &str, vector: &[S]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::dim("embedding insert", &[self.dim], &[vector.len()]));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("embedding for `{word}`")));
        }
        if let Some(&i) = self.index.get(word) {
            self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector);
            return Ok(true);
        }
        self.index.insert(word.to_string(), self.words.len());
        self.words.push(word.to_string());
        self.data.extend_from_slice(vector);
        Ok(false)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Vector for `word`, or zeros when it is out of vocabulary.
    pub fn vector(&self, word: &str) -> Vec<S> {
        self.index_of(word)
            .map_or_else(|| vec![S::zero(); self.dim], |i| self.row(i).to_vec())
    }
}

/// Aligned (or not) word vectors for several languages with a common width.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<S> {
    dim: usize,
    pub aligned: bool,
    langs: BTreeMap<String, LanguageVectors<S>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EmbeddingReport {
    pub rows: usize,
    /// Keys seen more than once; the last occurrence wins.
    pub duplicates: usize,
}

impl<S: Scalar> EmbeddingTable<S> {
    pub fn new(dim: usize, aligned: bool) -> Self {
        EmbeddingTable {
            dim,
            aligned,
            langs: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.langs.keys().map(String::as_str)
    }

    pub fn language(&self, lang: &str) -> Result<&LanguageVectors<S>> {
        self.langs
            .get(lang)
            .ok_or_else(|| Error::UnknownLanguage(lang.to_string()))
    }

    pub fn language_mut(&mut self, lang: &str) -> &mut LanguageVectors<S> {
        let dim = self.dim;
        self.langs
            .entry(lang.to_string())
            .or_insert_with(|| LanguageVectors::new(dim))
    }

    pub fn insert(&mut self, lang: &str, word: &str, vector: &[S]) -> Result<bool> {
        self.language_mut(lang).insert(word, vector)
    }

    /// Total rows over all languages.
    pub fn len(&self) -> usize {
        self.langs.values().map(LanguageVectors::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds every language of `other`, replacing duplicate words.
    pub fn merge(&mut self, other: EmbeddingTable<S>) -> Result<usize> {
        if other.dim != self.dim {
            return Err(Error::dim("embedding merge", &[self.dim], &[other.dim]));
        }
        let mut dups = 0;
        for (lang, vectors) in other.langs {
            for (i, w) in vectors.words.iter().enumerate() {
                dups += usize::from(self.insert(&lang, w, vectors.row(i))?);
            }
        }
        Ok(dups)
    }

    /// `[ids.len() × d]` matrix of the given rows; `None` maps to zeros.
    pub fn sentence_matrix(&self, lang: &str, ids: &[Option<usize>]) -> Result<Tensor<S>> {
        let vectors = self.language(lang)?;
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for id in ids {
            match id {
                Some(i) => data.extend_from_slice(vectors.row(*i)),
                None => data.extend(std::iter::repeat_n(S::zero(), self.dim)),
            }
        }
        Tensor::new(vec![ids.len(), self.dim], data)
    }

    /// SHA-256 over words and vector bytes, languages in key order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (lang, v) in &self.langs {
            h.update(lang.as_bytes());
            for (i, w) in v.words.iter().enumerate() {
                h.update(w.as_bytes());
                for x in v.row(i) {
                    h.update(x.as_f64().to_le_bytes());
                }
            }
        }
        hex(&h.finalize())
    }

    pub fn cast<T: Scalar>(&self) -> EmbeddingTable<T> {
        EmbeddingTable {
            dim: self.dim,
            aligned: self.aligned,
            langs: self
                .langs
                .iter()
                .map(|(l, v)| {
                    (
                        l.clone(),
                        LanguageVectors {
                            words: v.words.clone(),
                            index: v.index.clone(),
                            data: v.data.iter().map(|x| T::of(x.as_f64())).collect(),
                            dim: v.dim,
                        },
                    )
                })
                .collect(),
        }
    }
}

/// Parses a word2vec text file (`vocab_size dim` header, then `token v1 … vd`).
///
/// With `lang = None` every token must be written `lang:word`; otherwise all
/// rows belong to `lang` and tokens are taken verbatim.
pub fn load_embeddings<S: Scalar>(
    path: &Path,
    expected_dim: usize,
    lang: Option<&str>,
) -> Result<(EmbeddingTable<S>, EmbeddingReport)> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| Error::io("read embeddings", e))?,
        None => return Err(perr(1, "missing header".into())),
    };
    let (rows, dim) = match header.split_whitespace().collect::<Vec<_>>()[..] {
        [r, d] => (
            r.parse::<usize>().map_err(|e| perr(1, format!("vocab size: {e}")))?,
            d.parse::<usize>().map_err(|e| perr(1, format!("dimension: {e}")))?,
        ),
        _ => return Err(perr(1, format!("expected `vocab_size dim`, got `{header}`"))),
    };
    if dim != expected_dim {
        return Err(Error::dim("load_embeddings", &[expected_dim], &[dim]));
    }
    let mut table = EmbeddingTable::new(dim, true);
    let mut report = EmbeddingReport::default();
    let mut buf = Vec::with_capacity(dim);
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io("read embeddings", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-empty line has a token");
        buf.clear();
        for p in parts {
            let v: f64 = p.parse().map_err(|e| perr(i + 1, format!("`{p}`: {e}")))?;
            buf.push(S::of(v));
        }
        if buf.len() != dim {
            return Err(perr(i + 1, format!("expected {dim} values, got {}", buf.len())));
        }
        let (l, word) = match lang {
            Some(l) => (l, token),
            None => token
                .split_once(':')
                .ok_or_else(|| perr(i + 1, format!("token `{token}` lacks a `lang:` prefix")))?,
        };
        report.duplicates += usize::from(table.insert(l, word, &buf)?);
        report.rows += 1;
    }
    if report.rows != rows {
        return Err(perr(
            1,
            format!("header declares {rows} rows, body has {}", report.rows),
        ));
    }
    if report.duplicates > 0 {
        log::warn!(
            "{}: {} duplicate keys, last occurrence kept",
            path.display(),
            report.duplicates
        );
    }
    Ok((table, report))
}

/// Writes all languages into one file with `lang:word` keys.
pub fn write_embeddings<S: Scalar>(table: &EmbeddingTable<S>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io("write embeddings", e);
    writeln!(w, "{} {}", table.len(), table.dim).map_err(io)?;
    for (lang, v) in &table.langs {
        for (i, word) in v.words.iter().enumerate() {
            write!(w, "{lang}:{word}").map_err(io)?;
            for x in v.row(i) {
                write!(w, " {}", x.as_f64()).map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn rows(n: usize, d: usize) -> String {
        let mut s = format!("{n} {d}\n");
        for i in 0..n {
            s.push_str(&format!("en:w{i}"));
            for j in 0..d {
                s.push_str(&format!(" {}", (i * d + j) as f64 * 0.01));
            }
            s.push('\n');
        }
        s
    }

    #[test]
    fn loads_three_rows_of_width_40() {
        let f = file(&rows(3, 40));
        let (t, r) = load_embeddings::<f64>(f.path(), 40, None).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(r.rows, 3);
        let en = t.language("en").unwrap();
        assert_eq!(en.vector("w1")[0], 0.4);
        assert_eq!(en.vector("unseen"), vec![0.0; 40]);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let f = file(&rows(2, 4));
        assert!(matches!(
            load_embeddings::<f64>(f.path(), 40, None),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn duplicate_keys_last_wins() {
        let f = file("2 2\nen:a 1 1\nen:a 2 2\n");
        let (t, r) = load_embeddings::<f64>(f.path(), 2, None).unwrap();
        assert_eq!(r.duplicates, 1);
        assert_eq!(t.language("en").unwrap().vector("a"), vec![2.0, 2.0]);
    }

    #[test]
    fn per_language_file_keeps_colons_in_words() {
        let f = file("1 2\nhttp://x 1 2\n");
        let (t, _) = load_embeddings::<f64>(f.path(), 2, Some("de")).unwrap();
        assert_eq!(t.language("de").unwrap().vector("http://x"), vec![1.0, 2.0]);
    }

    #[test]
    fn row_count_must_match_header() {
        let f = file("3 2\nen:a 1 1\n");
        assert!(matches!(
            load_embeddings::<f64>(f.path(), 2, None),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn write_then_load_round_trips() {
        let mut t = EmbeddingTable::<f64>::new(2, true);
        t.insert("en", "a", &[0.1, -1.0 / 3.0]).unwrap();
        t.insert("de", "b", &[1e-12, 5.0]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_embeddings(&t, f.path()).unwrap();
        let (back, _) = load_embeddings::<f64>(f.path(), 2, None).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.digest(), t.digest());
    }
}
