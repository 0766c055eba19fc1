//! Synthetic multilingual topic corpus with aligned and rotated embeddings.
//!
//! `k` topic centroids live in a shared `d`-dimensional space. Each topic owns
//! `words_per_topic` concepts scattered around its centroid, and every
//! language realizes each concept as its own word whose vector is the concept
//! vector plus `N(0, sigma²)` noise. Translation-equivalent words are thus
//! near each other in the aligned table. The non-aligned table applies an
//! independent random rotation to each language's vectors, which keeps every
//! monolingual geometry intact but destroys the cross-language
//! correspondence. Documents draw 1–`max_topics` topics and mix topic words
//! with topic-independent background words; their labels are the drawn topics.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::corpus::{write_corpus, RawDocument};
use crate::data::embeddings::{write_embeddings, EmbeddingTable};
use crate::error::{Error, Result};
use crate::rng;

const LANGUAGE_CODES: [&str; 8] = ["en", "de", "es", "pt", "uk", "ru", "ar", "fa"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    #[serde(alias = "M")]
    pub m: usize,
    pub docs_per_lang: usize,
    pub k: usize,
    pub d: usize,
    /// Per-language noise around each shared concept vector.
    pub sigma: f64,
    pub seed: u64,
    /// Which table `write` stores as `embeddings.txt`.
    pub aligned: bool,
    /// Spread of concept vectors around their topic centroid.
    pub topic_spread: f64,
    pub words_per_topic: usize,
    pub background_words: usize,
    /// Probability that a token is drawn from one of the document's topics.
    pub topic_word_prob: f64,
    pub max_topics: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            m: 2,
            docs_per_lang: 200,
            k: 5,
            d: 40,
            sigma: 0.05,
            seed: 0,
            aligned: true,
            topic_spread: 0.6,
            words_per_topic: 20,
            background_words: 60,
            topic_word_prob: 0.4,
            max_topics: 3,
            min_sentences: 2,
            max_sentences: 6,
            min_words: 4,
            max_words: 10,
        }
    }
}

impl SynthConfig {
    pub fn languages(&self) -> Vec<String> {
        (0..self.m)
            .map(|i| LANGUAGE_CODES.get(i).map_or_else(|| format!("l{i}"), |c| c.to_string()))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic corpus: {m}")));
        if self.k < 2 || self.d < 2 {
            return bad("k and d must be at least 2");
        }
        if self.m == 0 || self.docs_per_lang == 0 {
            return bad("need at least one language and one document");
        }
        if self.words_per_topic == 0 || self.max_topics == 0 {
            return bad("words_per_topic and max_topics must be positive");
        }
        if self.min_sentences == 0
            || self.min_words == 0
            || self.min_sentences > self.max_sentences
            || self.min_words > self.max_words
        {
            return bad("sentence/word length ranges must be non-empty and positive");
        }
        if !(0.0..=1.0).contains(&self.topic_word_prob) || self.sigma < 0.0 || self.topic_spread < 0.0 {
            return bad("probabilities in [0,1] and non-negative noise scales required");
        }
        if self.background_words == 0 && self.topic_word_prob < 1.0 {
            return bad("background_words must be positive when topic_word_prob < 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub languages: Vec<String>,
    pub docs: Vec<RawDocument>,
    pub aligned: EmbeddingTable<f64>,
    pub non_aligned: EmbeddingTable<f64>,
    /// Row-major `d×d` rotation applied to each language in `non_aligned`.
    pub rotations: BTreeMap<String, Vec<f64>>,
}

pub fn topic_word(lang: &str, topic: usize, j: usize) -> String {
    format!("{lang}_t{topic}_w{j}")
}

pub fn background_word(lang: &str, j: usize) -> String {
    format!("{lang}_bg{j}")
}

pub fn topic_label(lang: &str, topic: usize) -> String {
    format!("{lang}-topic{topic}")
}

fn gaussian(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            scale * z
        })
        .collect()
}

/// Random orthogonal `d×d` matrix (Gram–Schmidt on a Gaussian matrix, rows orthonormal).
pub fn random_rotation(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let mut m = gaussian(rng, d * d, 1.0);
        let mut ok = true;
        for i in 0..d {
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for j in 0..i {
                    let dot: f64 = (0..d).map(|c| m[i * d + c] * m[j * d + c]).sum();
                    for c in 0..d {
                        m[i * d + c] -= dot * m[j * d + c];
                    }
                }
            }
            let norm = (0..d).map(|c| m[i * d + c].powi(2)).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for c in 0..d {
                m[i * d + c] /= norm;
            }
        }
        if ok {
            return m;
        }
    }
}

fn rotate(r: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d).map(|i| (0..d).map(|j| r[i * d + j] * v[j]).sum()).collect()
}

pub fn synth_corpus(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let d = config.d;
    let languages = config.languages();

    let mut space = rng::stream(config.seed, "synth/space");
    let centroids: Vec<Vec<f64>> = (0..config.k).map(|_| gaussian(&mut space, d, 1.0)).collect();
    let concepts: Vec<Vec<Vec<f64>>> = centroids
        .iter()
        .map(|c| {
            (0..config.words_per_topic)
                .map(|_| {
                    let noise = gaussian(&mut space, d, config.topic_spread);
                    c.iter().zip(noise).map(|(a, b)| a + b).collect()
                })
                .collect()
        })
        .collect();
    let background: Vec<Vec<f64>> = (0..config.background_words)
        .map(|_| gaussian(&mut space, d, 1.0))
        .collect();

    let mut aligned = EmbeddingTable::new(d, true);
    let mut non_aligned = EmbeddingTable::new(d, false);
    let mut rotations = BTreeMap::new();
    for lang in &languages {
        let mut lrng = rng::stream(config.seed, &format!("synth/vectors/{lang}"));
        let rotation = random_rotation(&mut rng::stream(config.seed, &format!("synth/rotation/{lang}")), d);
        let mut add = |word: String, base: &[f64], lrng: &mut rng::Rng| -> Result<()> {
            let noise = gaussian(lrng, d, config.sigma);
            let v: Vec<f64> = base.iter().zip(noise).map(|(a, b)| a + b).collect();
            aligned.insert(lang, &word, &v)?;
            non_aligned.insert(lang, &word, &rotate(&rotation, &v))?;
            Ok(())
        };
        for (t, words) in concepts.iter().enumerate() {
            for (j, base) in words.iter().enumerate() {
                add(topic_word(lang, t, j), base, &mut lrng)?;
            }
        }
        for (j, base) in background.iter().enumerate() {
            add(background_word(lang, j), base, &mut lrng)?;
        }
        rotations.insert(lang.clone(), rotation);
    }

    let mut docs = Vec::with_capacity(config.m * config.docs_per_lang);
    let groups = config.k.min(3);
    for lang in &languages {
        let mut drng = rng::stream(config.seed, &format!("synth/docs/{lang}"));
        for i in 0..config.docs_per_lang {
            let n_topics = drng.gen_range(1..=config.max_topics.min(config.k));
            let mut topics = index::sample(&mut drng, config.k, n_topics).into_vec();
            topics.sort_unstable();
            let n_sent = drng.gen_range(config.min_sentences..=config.max_sentences);
            let lengths: Vec<usize> = (0..n_sent)
                .map(|_| drng.gen_range(config.min_words..=config.max_words))
                .collect();
            let total: usize = lengths.iter().sum();
            // every label is mentioned at least once
            let mut forced = vec![None; total];
            for (slot, &t) in index::sample(&mut drng, total, topics.len().min(total))
                .into_iter()
                .zip(&topics)
            {
                forced[slot] = Some(t);
            }
            let mut slots = forced.into_iter();
            let sentences = lengths
                .iter()
                .map(|&n_words| {
                    (0..n_words)
                        .map(|_| match slots.next().flatten() {
                            Some(t) => topic_word(lang, t, drng.gen_range(0..config.words_per_topic)),
                            None if drng.gen_bool(config.topic_word_prob) => {
                                let t = topics[drng.gen_range(0..topics.len())];
                                topic_word(lang, t, drng.gen_range(0..config.words_per_topic))
                            }
                            None => background_word(lang, drng.gen_range(0..config.background_words)),
                        })
                        .collect()
                })
                .collect();
            let mut general: Vec<String> = topics
                .iter()
                .map(|&t| format!("{lang}-group{}", t * groups / config.k))
                .collect();
            general.dedup();
            docs.push(RawDocument {
                id: format!("{lang}-{i:05}"),
                lang: lang.clone(),
                sentences,
                labels: topics.iter().map(|&t| topic_label(lang, t)).collect(),
                general_labels: Some(general),
            });
        }
    }

    Ok(SynthCorpus {
        config: config.clone(),
        languages,
        docs,
        aligned,
        non_aligned,
        rotations,
    })
}

/// Output file names written by [`SynthCorpus::write`].
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const ALIGNED_FILE: &str = "embeddings.aligned.txt";
pub const NON_ALIGNED_FILE: &str = "embeddings.nonaligned.txt";

impl SynthCorpus {
    /// Writes the corpus, both embedding variants, and `embeddings.txt`
    /// holding the variant selected by `config.aligned`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
        write_corpus(&dir.join(CORPUS_FILE), &self.docs)?;
        write_embeddings(&self.aligned, &dir.join(ALIGNED_FILE))?;
        write_embeddings(&self.non_aligned, &dir.join(NON_ALIGNED_FILE))?;
        let selected = if self.config.aligned {
            &self.aligned
        } else {
            &self.non_aligned
        };
        write_embeddings(selected, &dir.join(EMBEDDINGS_FILE))
    }

    pub fn embeddings(&self, aligned: bool) -> &EmbeddingTable<f64> {
        if aligned {
            &self.aligned
        } else {
            &self.non_aligned
        }
    }

    pub fn docs_of<'a>(&'a self, lang: &'a str) -> impl Iterator<Item = &'a RawDocument> + 'a {
        self.docs.iter().filter(move |d| d.lang == lang)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::corpus::{load_corpus, GridLimits};
    use crate::data::embeddings::load_embeddings;

    fn small() -> SynthConfig {
        SynthConfig {
            m: 2,
            k: 5,
            docs_per_lang: 200,
            d: 8,
            seed: 11,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn files_round_trip_through_loaders() {
        let c = synth_corpus(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        c.write(dir.path()).unwrap();
        let (corpus, report) = load_corpus(&dir.path().join(CORPUS_FILE), GridLimits::default(), None).unwrap();
        assert_eq!(report.accepted, 400);
        assert_eq!(corpus["en"].len(), 200);
        assert_eq!(corpus["de"].len(), 200);
        assert_eq!(corpus["en"][0], c.docs[0]);
        let (emb, _) = load_embeddings::<f64>(&dir.path().join(ALIGNED_FILE), 8, None).unwrap();
        assert_eq!(emb.len(), c.aligned.len());
        assert_eq!(emb.digest(), c.aligned.digest());
    }

    #[test]
    fn aligned_translations_are_close() {
        let cfg = small();
        let c = synth_corpus(&cfg).unwrap();
        let (en, de) = (c.aligned.language("en").unwrap(), c.aligned.language("de").unwrap());
        // difference of two N(0, sigma²) draws; 8 sigma per coordinate bounds it
        let bound = 8.0 * cfg.sigma * (2.0 * cfg.d as f64).sqrt();
        for t in 0..cfg.k {
            for j in 0..cfg.words_per_topic {
                let a = en.vector(&topic_word("en", t, j));
                let b = de.vector(&topic_word("de", t, j));
                let dist = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                assert!(dist < bound, "{dist} >= {bound}");
            }
        }
    }

    #[test]
    fn rotations_are_orthogonal() {
        let c = synth_corpus(&small()).unwrap();
        let d = 8;
        for r in c.rotations.values() {
            for i in 0..d {
                for j in 0..d {
                    let dot: f64 = (0..d).map(|k| r[k * d + i] * r[k * d + j]).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn labels_are_language_specific_topics() {
        let c = synth_corpus(&small()).unwrap();
        for doc in &c.docs {
            assert!(!doc.labels.is_empty() && doc.labels.len() <= 3);
            assert!(doc.labels.iter().all(|l| l.starts_with(&format!("{}-topic", doc.lang))));
        }
    }

    #[test]
    fn every_label_is_mentioned() {
        let cfg = small();
        let c = synth_corpus(&cfg).unwrap();
        for doc in &c.docs {
            for t in 0..cfg.k {
                if doc.labels.contains(&topic_label(&doc.lang, t)) {
                    let prefix = format!("{}_t{t}_", doc.lang);
                    assert!(doc.sentences.iter().flatten().any(|w| w.starts_with(&prefix)));
                }
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = synth_corpus(&small()).unwrap();
        let b = synth_corpus(&small()).unwrap();
        assert_eq!(a.docs, b.docs);
        assert_eq!(a.non_aligned.digest(), b.non_aligned.digest());
    }

    #[test]
    fn rejects_degenerate_dims() {
        assert!(synth_corpus(&SynthConfig { k: 1, ..small() }).is_err());
        assert!(synth_corpus(&SynthConfig { d: 1, ..small() }).is_err());
    }
}
