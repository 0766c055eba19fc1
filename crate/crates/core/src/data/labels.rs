use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::corpus::RawDocument;
use crate::error::{Error, Result};

pub const DEFAULT_MIN_COUNT: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelType {
    General,
    Specific,
}

impl std::str::FromStr for LabelType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(LabelType::General),
            "specific" => Ok(LabelType::Specific),
            other => Err(Error::Config(format!("unknown label type `{other}`"))),
        }
    }
}

/// Ordered label set of one language. Languages never share a vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVocab {
    pub lang: String,
    pub kind: LabelType,
    labels: Vec<String>,
    /// Training-split frequency of each label, parallel to `labels`.
    counts: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl LabelVocab {
    pub fn new(lang: impl Into<String>, kind: LabelType, labels: Vec<String>, counts: Vec<usize>) -> Self {
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        LabelVocab {
            lang: lang.into(),
            kind,
            labels,
            counts,
            index,
        }
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindexed(self) -> Self {
        LabelVocab::new(self.lang, self.kind, self.labels, self.counts)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }
}

/// Labels of `train` (all one language) occurring at least `min_count`
/// times, by descending frequency then lexicographically.
pub fn build_label_vocab(train: &[RawDocument], kind: LabelType, min_count: usize) -> Result<LabelVocab> {
    let lang = train
        .first()
        .map(|d| d.lang.clone())
        .ok_or_else(|| Error::Data("cannot build a label vocabulary from an empty split".into()))?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in train {
        if doc.lang != lang {
            return Err(Error::Contract(format!(
                "mixed languages in label vocabulary input: `{lang}` and `{}`",
                doc.lang
            )));
        }
        let mut seen: Vec<&str> = doc.labels_of(kind)?.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for l in seen {
            *counts.entry(l).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    if kept.is_empty() {
        return Err(Error::Data(format!(
            "no `{lang}` label occurs at least {min_count} times in the training split"
        )));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (labels, counts) = kept.into_iter().map(|(l, c)| (l.to_string(), c)).unzip();
    Ok(LabelVocab::new(lang, kind, labels, counts))
}
