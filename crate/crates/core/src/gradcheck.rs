//! Central finite-difference oracle for analytic gradients.

use rand::Rng;
use serde::Serialize;

use crate::data::{Document, EmbeddingTable, GridLimits};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, ParamStore};
use crate::layers::{bce_loss, EncoderKind};
use crate::model::{build_model, han_forward, Architecture, ModelConfig};
use crate::rng;
use crate::scalar::Scalar;

/// Outcome of a gradient check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    /// max over all scalar parameters of |analytic − numeric| / max(1, |analytic|, |numeric|).
    pub max_rel_error: f64,
    /// Parameter name and element index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares the reverse-mode gradient of `f` against central differences
/// with step `eps`, perturbing every scalar of every parameter in `store`.
///
/// `f` records a scalar loss on the graph it is given.
pub fn grad_check<S, F>(store: &mut ParamStore<S>, eps: f64, f: F) -> Result<GradCheckReport>
where
    S: Scalar,
    F: Fn(&mut Graph<'_, S>) -> Result<NodeId>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("grad_check step must be > 0, got {eps}")));
    }
    let analytic = {
        let mut g = Graph::new(&*store);
        let loss = f(&mut g)?;
        g.backward(loss)?
    };
    let eval = |store: &ParamStore<S>| -> Result<f64> {
        let mut g = Graph::new(store);
        let loss = f(&mut g)?;
        Ok(g.value(loss).item()?.as_f64())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.get(id).numel();
        let grad = analytic.get_or_zeros(id, n);
        for i in 0..n {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + S::of(eps);
            let plus = eval(store);
            store.get_mut(id).data_mut()[i] = orig - S::of(eps);
            let minus = eval(store);
            store.get_mut(id).data_mut()[i] = orig;
            let (plus, minus) = match (plus, minus) {
                (Ok(p), Ok(m)) if p.is_finite() && m.is_finite() => (p, m),
                (Err(e), _) | (_, Err(e)) => {
                    return Err(Error::NonFinite(format!("grad_check at {}[{i}]: {e}", store.name(id))))
                }
                _ => return Err(Error::NonFinite(format!("grad_check at {}[{i}]", store.name(id)))),
            };
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad[i].as_f64();
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((store.name(id).to_string(), i));
            }
        }
    }
    Ok(report)
}

/// A randomly shaped single-document HAN problem for gradient checking.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HanCheckCase {
    pub encoder: EncoderKind,
    pub embed_dim: usize,
    pub word_hidden: usize,
    pub sentence_hidden: usize,
    pub attention_dim: usize,
    pub num_labels: usize,
    /// Valid word count per sentence.
    pub sentence_lengths: Vec<usize>,
    pub seed: u64,
}

impl HanCheckCase {
    /// Widths in `1..=max_dim`; up to `max_len` sentences of up to `max_len` words.
    pub fn random(encoder: EncoderKind, seed: u64, max_dim: usize, max_len: usize) -> Self {
        let mut r = rng::stream(seed, "gradcheck-shape");
        let mut dim = || r.gen_range(1..=max_dim.max(1));
        let (embed_dim, word_hidden, sentence_hidden, attention_dim, num_labels) = (dim(), dim(), dim(), dim(), dim());
        let n = r.gen_range(1..=max_len.max(1));
        HanCheckCase {
            encoder,
            embed_dim,
            word_hidden,
            sentence_hidden,
            attention_dim,
            num_labels,
            sentence_lengths: (0..n).map(|_| r.gen_range(1..=max_len.max(1))).collect(),
            seed,
        }
    }

    fn model_config(&self) -> ModelConfig {
        ModelConfig {
            architecture: Architecture::Han,
            encoder: self.encoder,
            embed_dim: self.embed_dim,
            word_hidden: self.word_hidden,
            sentence_hidden: self.sentence_hidden,
            attention_dim: self.attention_dim,
            num_labels: self.num_labels,
            ..ModelConfig::default()
        }
    }
}

/// Gradient check of the full HAN loss (encoders, attention, classifier and
/// BCE) on one random padded document.
pub fn check_han(case: &HanCheckCase, eps: f64) -> Result<GradCheckReport> {
    let cfg = case.model_config();
    let (mut store, view) = build_model::<f64>(&cfg, case.seed)?;
    let mut r = rng::stream(case.seed, "gradcheck-data");
    // zero biases put ReLU inputs exactly on the kink
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if store.name(id).ends_with(".b") {
            for b in store.get_mut(id).data_mut() {
                *b = r.gen_range(-0.5..0.5);
            }
        }
    }
    let vocab_size = 6;
    let mut emb = EmbeddingTable::new(case.embed_dim, true);
    for w in 0..vocab_size {
        let v: Vec<f64> = (0..case.embed_dim).map(|_| r.gen_range(-1.0..1.0)).collect();
        emb.insert("xx", &format!("w{w}"), &v)?;
    }
    let max_words = case.sentence_lengths.iter().copied().max().unwrap_or(1) + 1;
    let limits = GridLimits {
        max_sentences: case.sentence_lengths.len() + 1,
        max_words,
    };
    let mut tokens = vec![None; limits.max_sentences * max_words];
    let mut mask = vec![false; tokens.len()];
    for (s, &len) in case.sentence_lengths.iter().enumerate() {
        for w in 0..len {
            tokens[s * max_words + w] = Some(r.gen_range(0..vocab_size));
            mask[s * max_words + w] = true;
        }
    }
    let mut labels: Vec<usize> = (0..case.num_labels).filter(|_| r.gen_bool(0.4)).collect();
    if labels.is_empty() {
        labels.push(r.gen_range(0..case.num_labels));
    }
    let doc = Document {
        id: "check".into(),
        lang: "xx".into(),
        limits,
        tokens,
        mask,
        sentence_lengths: case.sentence_lengths.clone(),
        labels,
        num_labels: case.num_labels,
    };
    let y = doc.k_hot::<f64>();
    grad_check(&mut store, eps, |g| {
        let f = han_forward(g, &doc, &view, &emb)?;
        bce_loss(g, &y, f.probs)
    })
}
