//! Corpus and embedding ingestion, label vocabularies, splits and the
//! synthetic aligned corpus.

pub mod corpus;
pub mod embeddings;
pub mod labels;
pub mod split;
pub mod synth;

pub use corpus::{
    corpus_digest, encode_document, load_corpus, unpad, write_corpus, Corpus, Document, GridLimits, LoadReport,
    RawDocument,
};
pub use embeddings::{load_embeddings, write_embeddings, EmbeddingReport, EmbeddingTable, LanguageVectors};
pub use labels::{build_label_vocab, LabelType, LabelVocab, DEFAULT_MIN_COUNT};
pub use split::{split_corpus, subsample_low_resource, Split, Tier};
pub use synth::{synth_corpus, SynthConfig, SynthCorpus};
