#![allow(dead_code)]

use mhan::data::{synth_corpus, EmbeddingTable, SynthConfig, SynthCorpus};
use mhan::train::{prepare_language, DataConfig, LanguageData};

pub fn data_config() -> DataConfig {
    DataConfig {
        min_count: 1,
        ..DataConfig::default()
    }
}

pub fn corpus(m: usize, docs: usize, k: usize, seed: u64) -> SynthCorpus {
    synth_corpus(&SynthConfig {
        m,
        docs_per_lang: docs,
        k,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

/// Encoded splits of every synthetic language; `fraction` subsamples the first.
pub fn language_data(
    c: &SynthCorpus,
    emb: &EmbeddingTable<f64>,
    fraction: Option<f64>,
    seed: u64,
) -> Vec<LanguageData> {
    c.languages
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let f = if i == 0 { fraction } else { None };
            prepare_language(l, &c.docs, emb, &data_config(), f, seed).unwrap()
        })
        .collect()
}
