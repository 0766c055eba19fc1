//! Document models: the averaging baseline (NN), hierarchical averaging
//! (HNN), and the hierarchical attention network (HAN).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Document, EmbeddingTable, LabelVocab};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, ParamId, ParamStore};
use crate::layers::{
    attention_pool, average_pool, classify, encode, AttentionParams, ClassifierParams, EncoderKind, EncoderParams,
};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::{Activation, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Average of all word vectors, then the classifier.
    Nn,
    /// Encoders with average pooling at both levels.
    Hnn,
    /// Encoders with attention pooling at both levels.
    Han,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nn" => Ok(Architecture::Nn),
            "hnn" => Ok(Architecture::Hnn),
            "han" => Ok(Architecture::Han),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub encoder: EncoderKind,
    /// Word embedding width.
    pub embed_dim: usize,
    pub word_hidden: usize,
    pub sentence_hidden: usize,
    pub attention_dim: usize,
    pub activation: Activation,
    /// Multiply attention-pooled vectors by `1/T_eff` (and `1/K_eff`).
    pub strict_scaling: bool,
    /// With `strict_scaling`, divide by the padded grid lengths instead of
    /// the effective ones.
    pub constant_lengths: bool,
    pub num_labels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: Architecture::Han,
            encoder: EncoderKind::Dense,
            embed_dim: 40,
            word_hidden: 100,
            sentence_hidden: 100,
            attention_dim: 100,
            activation: Activation::Relu,
            strict_scaling: true,
            constant_lengths: false,
            num_labels: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.embed_dim,
            self.word_hidden,
            self.sentence_hidden,
            self.attention_dim,
            self.num_labels,
        ];
        if dims.contains(&0) {
            return Err(Error::Config(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn word_output_dim(&self) -> usize {
        self.encoder.output_dim(self.word_hidden)
    }

    /// Width of the document vector `u`.
    pub fn doc_dim(&self) -> usize {
        match self.architecture {
            Architecture::Nn => self.embed_dim,
            _ => self.encoder.output_dim(self.sentence_hidden),
        }
    }

    /// Components this architecture instantiates, in build order.
    pub fn components(&self) -> &'static [Component] {
        use Component::*;
        match self.architecture {
            Architecture::Nn => &[Classifier],
            Architecture::Hnn => &[WordEncoder, SentenceEncoder, Classifier],
            Architecture::Han => &[
                WordEncoder,
                WordAttention,
                SentenceEncoder,
                SentenceAttention,
                Classifier,
            ],
        }
    }
}

/// Parameter groups of a hierarchical model; the unit of cross-language sharing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    WordEncoder,
    WordAttention,
    SentenceEncoder,
    SentenceAttention,
    Classifier,
}

impl Component {
    pub fn as_str(self) -> &'static str {
        match self {
            Component::WordEncoder => "word_encoder",
            Component::WordAttention => "word_attention",
            Component::SentenceEncoder => "sentence_encoder",
            Component::SentenceAttention => "sentence_attention",
            Component::Classifier => "classifier",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ComponentParams {
    Encoder(EncoderParams),
    Attention(AttentionParams),
    Classifier(ClassifierParams),
}

impl ComponentParams {
    pub fn param_ids(&self) -> Vec<ParamId> {
        match self {
            ComponentParams::Encoder(p) => p.param_ids(),
            ComponentParams::Attention(p) => p.param_ids(),
            ComponentParams::Classifier(p) => p.param_ids(),
        }
    }
}

/// Creates the tensors of one component under `prefix`.
pub fn build_component<S: Scalar, R: Rng>(
    store: &mut ParamStore<S>,
    rng: &mut R,
    cfg: &ModelConfig,
    component: Component,
    prefix: &str,
) -> Result<ComponentParams> {
    let name = format!("{prefix}{}", component.as_str());
    Ok(match component {
        Component::WordEncoder => ComponentParams::Encoder(EncoderParams::build(
            store,
            rng,
            &name,
            cfg.encoder,
            cfg.embed_dim,
            cfg.word_hidden,
        )?),
        Component::WordAttention => ComponentParams::Attention(AttentionParams::build(
            store,
            rng,
            &name,
            cfg.word_output_dim(),
            cfg.attention_dim,
        )?),
        Component::SentenceEncoder => ComponentParams::Encoder(EncoderParams::build(
            store,
            rng,
            &name,
            cfg.encoder,
            cfg.word_output_dim(),
            cfg.sentence_hidden,
        )?),
        Component::SentenceAttention => ComponentParams::Attention(AttentionParams::build(
            store,
            rng,
            &name,
            cfg.encoder.output_dim(cfg.sentence_hidden),
            cfg.attention_dim,
        )?),
        Component::Classifier => ComponentParams::Classifier(ClassifierParams::build(
            store,
            rng,
            &name,
            cfg.doc_dim(),
            cfg.num_labels,
        )?),
    })
}

/// One language's view of the model parameters. Ids resolve through the
/// [`ParamStore`] the view was built against; several views may share ids.
#[derive(Clone, Debug, PartialEq)]
pub struct HanParams {
    pub config: ModelConfig,
    pub word_encoder: Option<EncoderParams>,
    pub word_attention: Option<AttentionParams>,
    pub sentence_encoder: Option<EncoderParams>,
    pub sentence_attention: Option<AttentionParams>,
    pub classifier: ClassifierParams,
}

impl HanParams {
    /// Builds a view by asking `make` for every component the architecture needs.
    pub fn assemble(config: &ModelConfig, mut make: impl FnMut(Component) -> Result<ComponentParams>) -> Result<Self> {
        config.validate()?;
        let mut view = HanParams {
            config: config.clone(),
            word_encoder: None,
            word_attention: None,
            sentence_encoder: None,
            sentence_attention: None,
            classifier: ClassifierParams {
                w: ParamId(usize::MAX),
                b: ParamId(usize::MAX),
            },
        };
        for &c in config.components() {
            match (c, make(c)?) {
                (Component::WordEncoder, ComponentParams::Encoder(p)) => view.word_encoder = Some(p),
                (Component::SentenceEncoder, ComponentParams::Encoder(p)) => view.sentence_encoder = Some(p),
                (Component::WordAttention, ComponentParams::Attention(p)) => view.word_attention = Some(p),
                (Component::SentenceAttention, ComponentParams::Attention(p)) => view.sentence_attention = Some(p),
                (Component::Classifier, ComponentParams::Classifier(p)) => view.classifier = p,
                (c, p) => {
                    return Err(Error::Contract(format!("component {c:?} built as {p:?}")));
                }
            }
        }
        Ok(view)
    }

    pub fn component(&self, c: Component) -> Option<ComponentParams> {
        match c {
            Component::WordEncoder => self.word_encoder.map(ComponentParams::Encoder),
            Component::WordAttention => self.word_attention.map(ComponentParams::Attention),
            Component::SentenceEncoder => self.sentence_encoder.map(ComponentParams::Encoder),
            Component::SentenceAttention => self.sentence_attention.map(ComponentParams::Attention),
            Component::Classifier => Some(ComponentParams::Classifier(self.classifier)),
        }
    }

    /// Every tensor this view reads, in component order.
    pub fn param_ids(&self) -> Vec<ParamId> {
        self.config
            .components()
            .iter()
            .filter_map(|&c| self.component(c))
            .flat_map(|p| p.param_ids())
            .collect()
    }

    pub fn num_params<S: Scalar>(&self, store: &ParamStore<S>) -> usize {
        self.param_ids().iter().map(|&id| store.get(id).numel()).sum()
    }
}

/// Builds a standalone monolingual model initialized from `seed`.
pub fn build_model<S: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<(ParamStore<S>, HanParams)> {
    let mut store = ParamStore::new();
    let mut rng = rng::stream(seed, "init");
    let view = HanParams::assemble(cfg, |c| build_component(&mut store, &mut rng, cfg, c, ""))?;
    Ok((store, view))
}

/// Nodes produced by one document's forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// `[doc_dim]` document vector.
    pub doc_vector: NodeId,
    /// `[k]` label probabilities.
    pub probs: NodeId,
    /// Per valid sentence, `[T_s]` word attention weights (HAN only).
    pub word_attention: Vec<NodeId>,
    /// `[K]` sentence attention weights (HAN only).
    pub sentence_attention: Option<NodeId>,
}

fn missing(c: Component) -> Error {
    Error::Contract(format!("model view lacks {}", c.as_str()))
}

/// Records the forward pass of `doc` through `p`. Embeddings enter as
/// constants. Only the valid prefix of each padded axis is encoded, which is
/// equivalent to masking because every encoder is prefix-causal or
/// position-independent and pooling ignores masked positions.
pub fn han_forward<S: Scalar>(
    g: &mut Graph<'_, S>,
    doc: &Document,
    p: &HanParams,
    emb: &EmbeddingTable<S>,
) -> Result<Forward> {
    let cfg = &p.config;
    if emb.dim() != cfg.embed_dim {
        return Err(Error::dim("han_forward", &[emb.dim()], &[cfg.embed_dim]));
    }
    if doc.num_labels != cfg.num_labels {
        return Err(Error::dim("han_forward labels", &[doc.num_labels], &[cfg.num_labels]));
    }
    let n_sent = doc.num_sentences();
    if n_sent == 0 {
        return Err(Error::EmptySequence("document has no valid sentences"));
    }
    let act = cfg.activation;
    let strict = cfg.strict_scaling && !cfg.constant_lengths;
    let grid_scale = |g: &mut Graph<'_, S>, v: NodeId, len: usize| -> Result<NodeId> {
        if cfg.strict_scaling && cfg.constant_lengths && len > 1 {
            g.scale(v, S::one() / S::from_usize(len).unwrap())
        } else {
            Ok(v)
        }
    };

    if cfg.architecture == Architecture::Nn {
        let ids: Vec<Option<usize>> = (0..n_sent)
            .flat_map(|s| doc.sentence_tokens(s).iter().copied())
            .collect();
        let x = g.input(emb.sentence_matrix(&doc.lang, &ids)?)?;
        let u = average_pool(g, x, &vec![true; ids.len()])?;
        let probs = classify(g, u, &p.classifier)?;
        return Ok(Forward {
            doc_vector: u,
            probs,
            word_attention: Vec::new(),
            sentence_attention: None,
        });
    }

    let word_enc = p.word_encoder.as_ref().ok_or_else(|| missing(Component::WordEncoder))?;
    let sent_enc = p
        .sentence_encoder
        .as_ref()
        .ok_or_else(|| missing(Component::SentenceEncoder))?;
    let attention = cfg.architecture == Architecture::Han;

    let mut sentence_vectors = Vec::with_capacity(n_sent);
    let mut word_attention = Vec::new();
    for s in 0..n_sent {
        let ids = doc.sentence_tokens(s);
        let mask = vec![true; ids.len()];
        let x = g.input(emb.sentence_matrix(&doc.lang, ids)?)?;
        let h = encode(g, x, word_enc, &mask, act)?;
        let v = if attention {
            let a = p
                .word_attention
                .as_ref()
                .ok_or_else(|| missing(Component::WordAttention))?;
            let pooled = attention_pool(g, h, a, &mask, strict, act)?;
            word_attention.push(pooled.weights);
            grid_scale(g, pooled.output, doc.limits.max_words)?
        } else {
            average_pool(g, h, &mask)?
        };
        sentence_vectors.push(v);
    }
    let sents = g.stack_rows(&sentence_vectors)?;
    let mask = vec![true; n_sent];
    let hs = encode(g, sents, sent_enc, &mask, act)?;
    let (u, sentence_attention) = if attention {
        let a = p
            .sentence_attention
            .as_ref()
            .ok_or_else(|| missing(Component::SentenceAttention))?;
        let pooled = attention_pool(g, hs, a, &mask, strict, act)?;
        (
            grid_scale(g, pooled.output, doc.limits.max_sentences)?,
            Some(pooled.weights),
        )
    } else {
        (average_pool(g, hs, &mask)?, None)
    };
    let probs = classify(g, u, &p.classifier)?;
    Ok(Forward {
        doc_vector: u,
        probs,
        word_attention,
        sentence_attention,
    })
}

/// Materialized outputs of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<S> {
    pub doc_vector: Vec<S>,
    pub probs: Vec<S>,
    /// Word attention over the padded grid: one row of `max_words` weights
    /// per grid sentence, zero at padding.
    pub word_attention: Vec<Vec<S>>,
    /// Sentence attention over the `max_sentences` grid rows.
    pub sentence_attention: Option<Vec<S>>,
}

/// Runs the forward pass without keeping the graph.
pub fn predict<S: Scalar>(
    store: &ParamStore<S>,
    p: &HanParams,
    emb: &EmbeddingTable<S>,
    doc: &Document,
) -> Result<Prediction<S>> {
    let mut g = Graph::new(store);
    let f = han_forward(&mut g, doc, p, emb)?;
    let limits = doc.limits;
    let pad = |values: &[S], len: usize| {
        let mut row = vec![S::zero(); len];
        row[..values.len()].copy_from_slice(values);
        row
    };
    let mut word_attention: Vec<Vec<S>> = f
        .word_attention
        .iter()
        .map(|&n| pad(g.value(n).data(), limits.max_words))
        .collect();
    if !word_attention.is_empty() {
        word_attention.resize(limits.max_sentences, vec![S::zero(); limits.max_words]);
    }
    Ok(Prediction {
        doc_vector: g.value(f.doc_vector).data().to_vec(),
        probs: g.value(f.probs).data().to_vec(),
        word_attention,
        sentence_attention: f
            .sentence_attention
            .map(|n| pad(g.value(n).data(), limits.max_sentences)),
    })
}

/// `%g`-style formatting with six significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    }
}

pub const DOC_VECTOR_HEADER: &str = "id\tlang\tlabels\tvector";

/// Writes one tab-separated record per document: id, language, comma-joined
/// gold labels, and the space-separated document vector.
pub fn export_doc_vectors<'a, S: Scalar>(
    path: &Path,
    store: &ParamStore<S>,
    emb: &EmbeddingTable<S>,
    docs: impl IntoIterator<Item = (&'a Document, &'a HanParams, &'a LabelVocab)>,
) -> Result<usize> {
    let file = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io("write document vectors", e);
    writeln!(w, "{DOC_VECTOR_HEADER}").map_err(io)?;
    let mut n = 0;
    for (doc, view, vocab) in docs {
        let pred = predict(store, view, emb, doc)?;
        let labels: Vec<&str> = doc.labels.iter().map(|&l| vocab.label(l)).collect();
        let vector: Vec<String> = pred.doc_vector.iter().map(|x| format_sig6(x.as_f64())).collect();
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            doc.id,
            doc.lang,
            labels.join(","),
            vector.join(" ")
        )
        .map_err(io)?;
        n += 1;
    }
    w.flush().map_err(io)?;
    Ok(n)
}

/// Overwrites every parameter with zeros.
pub fn zero_params<S: Scalar>(store: &mut ParamStore<S>) {
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let shape = store.get(id).shape().to_vec();
        *store.get_mut(id) = Tensor::zeros(&shape);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode_document, GridLimits, LabelType, RawDocument};

    fn cfg(arch: Architecture, enc: EncoderKind, k: usize) -> ModelConfig {
        ModelConfig {
            architecture: arch,
            encoder: enc,
            num_labels: k,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn dense_han_parameter_count() {
        let (store, view) = build_model::<f64>(&cfg(Architecture::Han, EncoderKind::Dense, 300), 1).unwrap();
        assert_eq!(store.num_scalars(), 64_900);
        assert_eq!(view.num_params(&store), 64_900);
    }

    #[test]
    fn nn_parameter_count() {
        let (store, _) = build_model::<f64>(&cfg(Architecture::Nn, EncoderKind::Dense, 10), 1).unwrap();
        assert_eq!(store.num_scalars(), 410);
    }

    #[test]
    fn same_seed_same_parameters() {
        let c = cfg(Architecture::Han, EncoderKind::Gru, 7);
        let (a, _) = build_model::<f64>(&c, 42).unwrap();
        let (b, _) = build_model::<f64>(&c, 42).unwrap();
        let (d, _) = build_model::<f64>(&c, 43).unwrap();
        let data = |s: &ParamStore<f64>| s.iter().map(|(_, _, t)| t.data().to_vec()).collect::<Vec<_>>();
        assert_eq!(data(&a), data(&b));
        assert_ne!(data(&a), data(&d));
    }

    #[test]
    fn biases_start_at_zero_and_matrices_within_glorot_limit() {
        let (store, _) = build_model::<f64>(&cfg(Architecture::Han, EncoderKind::Dense, 3), 5).unwrap();
        for (_, name, t) in store.iter() {
            if name.ends_with(".b") {
                assert!(t.data().iter().all(|&x| x == 0.0), "{name}");
            } else if t.rank() == 2 {
                let limit = (6.0 / (t.shape()[0] + t.shape()[1]) as f64).sqrt();
                assert!(t.data().iter().all(|x| x.abs() <= limit), "{name}");
            }
        }
    }

    #[test]
    fn zero_dims_rejected() {
        let mut c = cfg(Architecture::Han, EncoderKind::Dense, 3);
        c.attention_dim = 0;
        assert!(build_model::<f64>(&c, 0).is_err());
    }

    fn tiny_doc(sentences: &[&[&str]]) -> (Document, EmbeddingTable<f64>, LabelVocab) {
        let mut emb = EmbeddingTable::new(3, true);
        for (i, w) in ["a", "b", "c", "d"].iter().enumerate() {
            let v = [0.1 * i as f64, -0.3 + 0.2 * i as f64, 0.5 - 0.1 * i as f64];
            emb.insert("en", w, &v).unwrap();
        }
        let vocab = LabelVocab::new("en", LabelType::Specific, vec!["x".into(), "y".into()], vec![1, 1]);
        let raw = RawDocument {
            id: "d".into(),
            lang: "en".into(),
            sentences: sentences
                .iter()
                .map(|s| s.iter().map(|w| w.to_string()).collect())
                .collect(),
            labels: vec!["y".into()],
            general_labels: None,
        };
        let limits = GridLimits {
            max_sentences: 4,
            max_words: 5,
        };
        let doc = encode_document(&raw, &emb, &vocab, limits).unwrap().unwrap();
        (doc, emb, vocab)
    }

    fn small_cfg(enc: EncoderKind) -> ModelConfig {
        ModelConfig {
            encoder: enc,
            embed_dim: 3,
            word_hidden: 4,
            sentence_hidden: 4,
            attention_dim: 3,
            num_labels: 2,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn single_word_document_is_identity_pooled() {
        let (doc, emb, _) = tiny_doc(&[&["b"]]);
        let c = small_cfg(EncoderKind::Dense);
        let (store, view) = build_model::<f64>(&c, 3).unwrap();
        let pred = predict(&store, &view, &emb, &doc).unwrap();
        // attention over one position is the identity at both levels
        let mut g = Graph::new(&store);
        let x = g
            .input(
                emb.sentence_matrix("en", &[emb.language("en").unwrap().index_of("b")])
                    .unwrap(),
            )
            .unwrap();
        let h = encode(
            &mut g,
            x,
            view.word_encoder.as_ref().unwrap(),
            &[true],
            Activation::Relu,
        )
        .unwrap();
        let hs = encode(
            &mut g,
            h,
            view.sentence_encoder.as_ref().unwrap(),
            &[true],
            Activation::Relu,
        )
        .unwrap();
        assert_eq!(pred.doc_vector, g.value(hs).data());
        let u = g.reshape(hs, &[4]).unwrap();
        let y = classify(&mut g, u, &view.classifier).unwrap();
        assert_eq!(pred.probs, g.value(y).data());
    }

    #[test]
    fn zero_parameters_give_one_half() {
        let (doc, emb, _) = tiny_doc(&[&["a", "b"], &["c"]]);
        for enc in [EncoderKind::Dense, EncoderKind::Gru, EncoderKind::BiGru] {
            let (mut store, view) = build_model::<f64>(&small_cfg(enc), 3).unwrap();
            zero_params(&mut store);
            let pred = predict(&store, &view, &emb, &doc).unwrap();
            assert_eq!(pred.probs, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn probs_equal_classifier_of_doc_vector() {
        let (doc, emb, _) = tiny_doc(&[&["a", "b", "d"], &["c", "a"]]);
        let (store, view) = build_model::<f64>(&small_cfg(EncoderKind::BiGru), 9).unwrap();
        let pred = predict(&store, &view, &emb, &doc).unwrap();
        let mut g = Graph::new(&store);
        let u = g.input(Tensor::vector(pred.doc_vector.clone()).unwrap()).unwrap();
        let y = classify(&mut g, u, &view.classifier).unwrap();
        assert_eq!(pred.probs, g.value(y).data());
        assert_eq!(pred.doc_vector.len(), 8);
    }

    #[test]
    fn attention_is_zero_on_padding() {
        let (doc, emb, _) = tiny_doc(&[&["a", "b"], &["c"]]);
        let (store, view) = build_model::<f64>(&small_cfg(EncoderKind::Gru), 2).unwrap();
        let pred = predict(&store, &view, &emb, &doc).unwrap();
        assert_eq!(pred.word_attention.len(), 4);
        assert!(pred.word_attention[0][2..].iter().all(|&a| a == 0.0));
        assert_eq!(pred.word_attention[1][0], 1.0);
        assert!(pred.word_attention[2].iter().all(|&a| a == 0.0));
        let sa = pred.sentence_attention.unwrap();
        assert!((sa.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(&sa[2..], &[0.0, 0.0]);
    }

    #[test]
    fn dense_model_is_sentence_permutation_invariant() {
        let (d1, emb, _) = tiny_doc(&[&["a", "b"], &["c", "d", "a"], &["b"]]);
        let (d2, _, _) = tiny_doc(&[&["b"], &["c", "d", "a"], &["a", "b"]]);
        let (store, view) = build_model::<f64>(&small_cfg(EncoderKind::Dense), 4).unwrap();
        let p1 = predict(&store, &view, &emb, &d1).unwrap();
        let p2 = predict(&store, &view, &emb, &d2).unwrap();
        // only summation order differs
        for (a, b) in p1.doc_vector.iter().zip(&p2.doc_vector) {
            assert!((a - b).abs() < 1e-15);
        }
        let (gs, gv) = build_model::<f64>(&small_cfg(EncoderKind::Gru), 4).unwrap();
        assert_ne!(
            predict(&gs, &gv, &emb, &d1).unwrap().doc_vector,
            predict(&gs, &gv, &emb, &d2).unwrap().doc_vector
        );
    }

    #[test]
    fn constant_lengths_match_effective_lengths_on_a_full_grid() {
        let row: &[&str] = &["a", "b", "c", "d", "a"];
        let (full, emb, _) = tiny_doc(&[row, row, row, row]);
        let (short, _, _) = tiny_doc(&[&["a", "b"], &["c"]]);
        let effective = small_cfg(EncoderKind::Gru);
        let constant = ModelConfig {
            constant_lengths: true,
            ..effective.clone()
        };
        let (store, view) = build_model::<f64>(&effective, 6).unwrap();
        let (_, mut cview) = build_model::<f64>(&constant, 6).unwrap();
        cview.config = constant;
        let vec = |v: &HanParams, d: &Document| predict(&store, v, &emb, d).unwrap().doc_vector;
        assert_eq!(vec(&view, &full), vec(&cview, &full));
        assert_ne!(vec(&view, &short), vec(&cview, &short));
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(1.0), "1");
        assert_eq!(format_sig6(-0.123456789), "-0.123457");
        assert_eq!(format_sig6(123456.7), "123457");
        assert_eq!(format_sig6(1234567.0), "1.23457e+06");
        assert_eq!(format_sig6(0.0000123456), "1.23456e-05");
        assert_eq!(format_sig6(999999.5), "1e+06");
        assert_eq!(format_sig6(0.5), "0.5");
    }

    #[test]
    fn export_writes_header_and_records() {
        let (doc, emb, vocab) = tiny_doc(&[&["a", "b"], &["c"]]);
        let (store, view) = build_model::<f64>(&small_cfg(EncoderKind::BiGru), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.tsv");
        let docs = [doc.clone(), doc.clone(), doc];
        let n = export_doc_vectors(&path, &store, &emb, docs.iter().map(|d| (d, &view, &vocab))).unwrap();
        assert_eq!(n, 3);
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], DOC_VECTOR_HEADER);
        assert_eq!(lines.len(), 4);
        let fields: Vec<&str> = lines[1].split('\t').collect();
        assert_eq!(fields[..3], ["d", "en", "y"]);
        assert_eq!(fields[3].split(' ').count(), 8);

        let again = dir.path().join("w.tsv");
        export_doc_vectors(&again, &store, &emb, docs.iter().map(|d| (d, &view, &vocab))).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());

        let empty = dir.path().join("e.tsv");
        assert_eq!(export_doc_vectors(&empty, &store, &emb, std::iter::empty()).unwrap(), 0);
        assert_eq!(
            std::fs::read_to_string(&empty).unwrap(),
            format!("{DOC_VECTOR_HEADER}\n")
        );
    }
}
