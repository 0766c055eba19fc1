use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{
    build_label_vocab, encode_document, split_corpus, subsample_low_resource, Document, EmbeddingTable, GridLimits,
    LabelType, LabelVocab, RawDocument,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, ParamStore};
use crate::layers::bce_loss;
use crate::model::{han_forward, HanParams};
use crate::multitask::{cyclic_batch, joint_step, MultiTaskConfig, SharingRegistry};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::metrics::{micro_f1, predict_labels, EvalReport, ThresholdPolicy};
use crate::train::optim::{OptimConfig, Optimizer};

/// One language's encoded splits.
#[derive(Clone, Debug, PartialEq)]
pub struct LanguageData {
    pub lang: String,
    pub vocab: LabelVocab,
    pub train: Vec<Document>,
    pub valid: Vec<Document>,
    pub test: Vec<Document>,
}

/// How raw documents become [`LanguageData`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub labels: LabelType,
    pub min_count: usize,
    pub limits: GridLimits,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            labels: LabelType::Specific,
            min_count: crate::data::DEFAULT_MIN_COUNT,
            limits: GridLimits::default(),
        }
    }
}

/// Splits one language's documents, builds its label vocabulary on the full
/// training split and encodes every split. With `fraction` the training
/// split is then subsampled; validation and test stay whole.
pub fn prepare_language<S: Scalar>(
    lang: &str,
    raw: &[RawDocument],
    emb: &EmbeddingTable<S>,
    cfg: &DataConfig,
    fraction: Option<f64>,
    seed: u64,
) -> Result<LanguageData> {
    let docs: Vec<RawDocument> = raw.iter().filter(|d| d.lang == lang).cloned().collect();
    let split = split_corpus(&docs, seed)?;
    let vocab = build_label_vocab(&split.train, cfg.labels, cfg.min_count)?;
    let train_raw = match fraction {
        Some(f) => subsample_low_resource(&split.train, f, seed)?,
        None => split.train,
    };
    let encode = |set: &[RawDocument]| -> Result<Vec<Document>> {
        let mut out = Vec::with_capacity(set.len());
        for d in set {
            if let Some(doc) = encode_document(d, emb, &vocab, cfg.limits)? {
                out.push(doc);
            }
        }
        Ok(out)
    };
    let train = encode(&train_raw)?;
    if train.is_empty() {
        return Err(Error::Data(format!(
            "language `{lang}` has no labelled training documents"
        )));
    }
    Ok(LanguageData {
        lang: lang.to_string(),
        train,
        valid: encode(&split.valid)?,
        test: encode(&split.test)?,
        vocab,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimConfig,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    /// Reload the best-validation parameters when training ends.
    pub restore_best: bool,
    /// Select on this language's validation F1 instead of the mean over languages.
    pub select_language: Option<String>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimConfig::default(),
            max_epochs: 50,
            patience: Some(5),
            restore_best: true,
            select_language: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageEpoch {
    pub loss: f64,
    pub valid_f1: f64,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub joint_loss: f64,
    pub per_lang: BTreeMap<String, LanguageEpoch>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_score: f64,
    pub log: Vec<EpochRecord>,
}

/// Predictions and scores of a model view on a document set.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    /// Mean BCE over documents.
    pub loss: f64,
    pub gold: Vec<Vec<usize>>,
    pub predictions: Vec<Vec<usize>>,
}

pub fn evaluate<S: Scalar>(
    store: &ParamStore<S>,
    view: &HanParams,
    emb: &EmbeddingTable<S>,
    docs: &[Document],
    tau: f64,
) -> Result<Evaluation> {
    let mut gold = Vec::with_capacity(docs.len());
    let mut predictions = Vec::with_capacity(docs.len());
    let mut loss = 0.0;
    for doc in docs {
        let mut g = Graph::new(store);
        let f = han_forward(&mut g, doc, view, emb)?;
        let l = bce_loss(&mut g, &doc.k_hot::<S>(), f.probs)?;
        loss += g.value(l).item()?.as_f64();
        predictions.push(predict_labels(g.value(f.probs).data(), tau));
        gold.push(doc.labels.clone());
    }
    let report = micro_f1(&gold, &predictions)?;
    Ok(Evaluation {
        report,
        loss: if docs.is_empty() { 0.0 } else { loss / docs.len() as f64 },
        gold,
        predictions,
    })
}

fn snapshot<S: Scalar>(store: &ParamStore<S>) -> Vec<Tensor<S>> {
    store.iter().map(|(_, _, t)| t.clone()).collect()
}

fn restore<S: Scalar>(store: &mut ParamStore<S>, saved: Vec<Tensor<S>>) {
    let ids: Vec<_> = store.ids().collect();
    for (id, t) in ids.into_iter().zip(saved) {
        *store.get_mut(id) = t;
    }
}

/// Trains all languages jointly. Each epoch draws `epoch_size` documents per
/// language through cyclic batches, then scores validation micro-F1 per
/// language. Every epoch is appended to `log` as one JSON line.
#[allow(clippy::too_many_arguments)]
pub fn train<S: Scalar>(
    store: &mut ParamStore<S>,
    registry: &SharingRegistry,
    emb: &EmbeddingTable<S>,
    data: &[LanguageData],
    mt: &MultiTaskConfig,
    tc: &TrainConfig,
    policy: &ThresholdPolicy,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    mt.validate()?;
    let langs: Vec<&str> = data.iter().map(|d| d.lang.as_str()).collect();
    if langs != mt.languages.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Config(format!(
            "data languages {langs:?} differ from configured {:?}",
            mt.languages
        )));
    }
    if let Some(l) = &tc.select_language {
        if !langs.contains(&l.as_str()) {
            return Err(Error::UnknownLanguage(l.clone()));
        }
    }
    let views = data
        .iter()
        .map(|d| registry.view(&d.lang))
        .collect::<Result<Vec<_>>>()?;
    let gammas = mt.gamma_map();
    let trains: Vec<&[Document]> = data.iter().map(|d| d.train.as_slice()).collect();
    let mut optimizer = Optimizer::new(tc.optimizer.clone())?;
    let mut batch_rng = rng::stream(tc.seed, "batches");

    let mut best = (0, f64::NEG_INFINITY, snapshot(store));
    let mut history = Vec::new();
    let mut stale = 0;
    for epoch in 1..=tc.max_epochs {
        let mut loss_sum = 0.0;
        let mut lang_sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        let n_batches = mt.batches_per_epoch();
        for b in 0..n_batches {
            let batch: Vec<&Document> = cyclic_batch(&trains, mt.batch_size, &mut batch_rng)?
                .into_iter()
                .map(|(_, d)| d)
                .collect();
            let (jl, _) = match joint_step(store, registry, emb, &batch, &gammas, &mut optimizer) {
                Err(Error::NonFinite(_)) => {
                    return Err(Error::Diverged {
                        epoch,
                        batch: b,
                        loss: f64::NAN,
                    })
                }
                other => other?,
            };
            loss_sum += jl.loss;
            for (lang, (s, n)) in jl.per_language {
                let e = lang_sums.entry(lang).or_default();
                e.0 += s;
                e.1 += n;
            }
            if store.iter().any(|(_, _, t)| !t.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: jl.loss,
                });
            }
        }

        let mut per_lang = BTreeMap::new();
        for (d, view) in data.iter().zip(&views) {
            let tau = policy.threshold(d.vocab.len());
            let valid_f1 = evaluate(store, view, emb, &d.valid, tau)?.report.f1;
            let (s, n) = lang_sums.get(&d.lang).copied().unwrap_or((0.0, 0));
            per_lang.insert(
                d.lang.clone(),
                LanguageEpoch {
                    loss: if n == 0 { 0.0 } else { s / n as f64 },
                    valid_f1,
                },
            );
        }
        let record = EpochRecord {
            epoch,
            joint_loss: loss_sum / n_batches as f64,
            per_lang,
        };
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "{}", serde_json::to_string(&record)?).map_err(|e| Error::io("write training log", e))?;
        }
        let score = match &tc.select_language {
            Some(l) => record.per_lang[l].valid_f1,
            None => record.per_lang.values().map(|r| r.valid_f1).sum::<f64>() / data.len() as f64,
        };
        log::debug!("epoch {epoch}: loss {:.5} valid {score:.4}", record.joint_loss);
        history.push(record);
        if score > best.1 {
            best = (epoch, score, snapshot(store));
            stale = 0;
        } else {
            stale += 1;
            if tc.patience.is_some_and(|p| stale >= p) {
                break;
            }
        }
    }
    let epochs_run = history.len();
    let (best_epoch, best_score, saved) = best;
    if tc.restore_best && best_epoch > 0 {
        restore(store, saved);
    }
    Ok(TrainOutcome {
        epochs_run,
        best_epoch,
        best_score,
        log: history,
    })
}
