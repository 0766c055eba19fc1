//! End-to-end runs driven by a serializable [`RunConfig`]: data loading,
//! training, evaluation, prediction and export, with their on-disk artifacts.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{load_corpus, load_embeddings, Corpus, EmbeddingTable, LoadReport, Tier};
use crate::error::{Error, Result};
use crate::model::{export_doc_vectors, predict, ModelConfig};
use crate::multitask::{build_mhan, count_params, MultiTaskConfig, ParamCounts, SharingScheme};
use crate::train::{
    evaluate, low_resource_sweep, prepare_language, train, Checkpoint, DataConfig, EvalReport, LanguageData,
    SweepConfig, SweepTable, ThresholdPolicy, TrainConfig,
};

pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const EVAL_FILE: &str = "eval.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const VECTORS_FILE: &str = "doc_vectors.tsv";
pub const SWEEP_FILE: &str = "sweep.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub target: Option<String>,
    pub auxiliary: Option<String>,
    pub tiers: Vec<Tier>,
    /// Explicit fractions, run in addition to the tiers under their own group.
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            target: None,
            auxiliary: None,
            tiers: Tier::ALL.to_vec(),
            fractions: Vec::new(),
            seeds: vec![0],
        }
    }
}

/// Everything a run needs. Echoed verbatim into every output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    /// Single word2vec file with `lang:word` keys.
    pub embeddings: Option<PathBuf>,
    /// Per-language word2vec files with plain keys.
    pub embeddings_by_lang: BTreeMap<String, PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    /// Languages in model order; empty means every corpus language, sorted.
    pub languages: Vec<String>,
    pub sharing: SharingScheme,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub multitask: MultiTaskConfig,
    pub threshold: ThresholdPolicy,
    /// Subsample the training split of `fraction_language` (default: the first language).
    pub fraction: Option<f64>,
    pub fraction_language: Option<String>,
    pub sweep: SweepSettings,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            embeddings: None,
            embeddings_by_lang: BTreeMap::new(),
            checkpoint: None,
            out: PathBuf::from("out"),
            languages: Vec::new(),
            sharing: SharingScheme::Mono,
            model: ModelConfig::default(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            multitask: MultiTaskConfig::default(),
            threshold: ThresholdPolicy::default(),
            fraction: None,
            fraction_language: None,
            sweep: SweepSettings::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn corpus_path(&self) -> Result<&Path> {
        self.corpus
            .as_deref()
            .ok_or_else(|| Error::Config("a corpus path is required".into()))
    }

    fn checkpoint_path(&self) -> Result<&Path> {
        self.checkpoint
            .as_deref()
            .ok_or_else(|| Error::Config("a checkpoint path is required".into()))
    }
}

/// Machine-readable outcome written as `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    /// Mean test micro-F1 over languages, when the command evaluates.
    pub f1: Option<f64>,
    pub f1_per_lang: BTreeMap<String, f64>,
    pub params_total: Option<usize>,
    /// Average distinct parameters per language.
    pub params_per_lang: Option<f64>,
    pub wall_seconds: f64,
}

impl RunSummary {
    pub fn new(command: &str) -> Self {
        RunSummary {
            command: command.into(),
            f1: None,
            f1_per_lang: BTreeMap::new(),
            params_total: None,
            params_per_lang: None,
            wall_seconds: 0.0,
        }
    }

    fn with_counts(mut self, c: &ParamCounts) -> Self {
        self.params_total = Some(c.total);
        self.params_per_lang = Some(c.average_per_language);
        self
    }

    fn with_f1(mut self, per_lang: BTreeMap<String, f64>) -> Self {
        if !per_lang.is_empty() {
            self.f1 = Some(per_lang.values().sum::<f64>() / per_lang.len() as f64);
        }
        self.f1_per_lang = per_lang;
        self
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(format!("write {}", path.display()), e))
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(format!("create {}", cfg.out.display()), e))?;
    write_json(&cfg.out.join(CONFIG_FILE), cfg)
}

fn finish(cfg: &RunConfig, mut summary: RunSummary, started: Instant) -> Result<RunSummary> {
    summary.wall_seconds = started.elapsed().as_secs_f64();
    write_json(&cfg.out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Loads the corpus restricted to `languages` (all when empty).
pub fn load_run_corpus(cfg: &RunConfig) -> Result<(Corpus, Vec<String>, LoadReport)> {
    let (mut corpus, report) = load_corpus(cfg.corpus_path()?, cfg.data.limits, None)?;
    let langs = if cfg.languages.is_empty() {
        corpus.keys().cloned().collect()
    } else {
        cfg.languages.clone()
    };
    for l in &langs {
        if !corpus.contains_key(l) {
            return Err(Error::UnknownLanguage(l.clone()));
        }
    }
    corpus.retain(|l, _| langs.contains(l));
    log::info!("corpus: {report:?}");
    Ok((corpus, langs, report))
}

pub fn load_run_embeddings(cfg: &RunConfig) -> Result<EmbeddingTable<f64>> {
    let dim = cfg.model.embed_dim;
    let mut table = match &cfg.embeddings {
        Some(p) => load_embeddings(p, dim, None)?.0,
        None => EmbeddingTable::new(dim, true),
    };
    for (lang, p) in &cfg.embeddings_by_lang {
        table.merge(load_embeddings(p, dim, Some(lang))?.0)?;
    }
    if table.is_empty() {
        return Err(Error::Config("no embeddings configured".into()));
    }
    Ok(table)
}

/// Splits and encodes every language, subsampling the fraction language.
pub fn prepare_run_data(
    cfg: &RunConfig,
    corpus: &Corpus,
    langs: &[String],
    emb: &EmbeddingTable<f64>,
) -> Result<Vec<LanguageData>> {
    let fraction_lang = cfg.fraction_language.as_ref().or(langs.first());
    langs
        .iter()
        .map(|l| {
            let fraction = cfg.fraction.filter(|_| Some(l) == fraction_lang);
            prepare_language(l, &corpus[l], emb, &cfg.data, fraction, cfg.seed)
        })
        .collect()
}

fn model_configs(cfg: &RunConfig, data: &[LanguageData]) -> Vec<(String, ModelConfig)> {
    data.iter()
        .map(|d| {
            (
                d.lang.clone(),
                ModelConfig {
                    num_labels: d.vocab.len(),
                    ..cfg.model.clone()
                },
            )
        })
        .collect()
}

fn test_scores(
    store: &crate::graph::ParamStore<f64>,
    registry: &crate::multitask::SharingRegistry,
    emb: &EmbeddingTable<f64>,
    data: &[LanguageData],
    policy: &ThresholdPolicy,
) -> Result<BTreeMap<String, EvalReport>> {
    let mut out = BTreeMap::new();
    for d in data {
        let view = registry.view(&d.lang)?;
        let e = evaluate(store, view, emb, &d.test, policy.threshold(d.vocab.len()))?;
        out.insert(d.lang.clone(), e.report);
    }
    Ok(out)
}

fn f1_map(reports: &BTreeMap<String, EvalReport>) -> BTreeMap<String, f64> {
    reports.iter().map(|(l, r)| (l.clone(), r.f1)).collect()
}

/// Trains a model, writing config, log, checkpoint, test evaluation and summary.
pub fn train_run(cfg: &RunConfig) -> Result<RunSummary> {
    let started = Instant::now();
    prepare_out(cfg)?;
    let (corpus, langs, _) = load_run_corpus(cfg)?;
    let emb = load_run_embeddings(cfg)?;
    let data = prepare_run_data(cfg, &corpus, &langs, &emb)?;
    let (mut store, registry) = build_mhan::<f64>(&model_configs(cfg, &data), cfg.sharing, cfg.seed)?;
    let mt = MultiTaskConfig {
        languages: langs.clone(),
        ..cfg.multitask.clone()
    };
    let tc = TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    let log_path = cfg.out.join(LOG_FILE);
    let file = File::create(&log_path).map_err(|e| Error::io(format!("create {}", log_path.display()), e))?;
    let mut log = BufWriter::new(file);
    let outcome = train(
        &mut store,
        &registry,
        &emb,
        &data,
        &mt,
        &tc,
        &cfg.threshold,
        Some(&mut log),
    )?;
    log.flush().map_err(|e| Error::io("flush training log", e))?;
    log::info!(
        "best epoch {} (validation {:.4})",
        outcome.best_epoch,
        outcome.best_score
    );

    let vocabs: Vec<_> = data.iter().map(|d| d.vocab.clone()).collect();
    let echo = serde_json::to_value(cfg)?;
    Checkpoint::capture(echo, &store, &registry, &vocabs)?.save(&cfg.out.join(CHECKPOINT_FILE))?;

    let reports = test_scores(&store, &registry, &emb, &data, &cfg.threshold)?;
    write_json(&cfg.out.join(EVAL_FILE), &reports)?;
    let counts = count_params(&store, &registry);
    let summary = RunSummary::new("train").with_counts(&counts).with_f1(f1_map(&reports));
    finish(cfg, summary, started)
}

/// Loads a checkpoint and rebuilds the data splits it was trained on.
struct Restored {
    store: crate::graph::ParamStore<f64>,
    registry: crate::multitask::SharingRegistry,
    emb: EmbeddingTable<f64>,
    data: Vec<LanguageData>,
}

fn restore(cfg: &RunConfig) -> Result<Restored> {
    let checkpoint = Checkpoint::load(cfg.checkpoint_path()?)?;
    let mut trained: RunConfig = serde_json::from_value(checkpoint.config.clone())?;
    // data locations may move between training and evaluation
    if cfg.corpus.is_some() {
        trained.corpus = cfg.corpus.clone();
    }
    if cfg.embeddings.is_some() || !cfg.embeddings_by_lang.is_empty() {
        trained.embeddings = cfg.embeddings.clone();
        trained.embeddings_by_lang = cfg.embeddings_by_lang.clone();
    }
    let (store, registry) = checkpoint.restore::<f64>()?;
    let langs = registry.languages().to_vec();
    trained.languages = langs.clone();
    let (corpus, _, _) = load_run_corpus(&trained)?;
    let emb = load_run_embeddings(&trained)?;
    let data = prepare_run_data(&trained, &corpus, &langs, &emb)?;
    for d in &data {
        if checkpoint.vocab(&d.lang)?.labels() != d.vocab.labels() {
            return Err(Error::Data(format!(
                "label vocabulary of `{}` differs from the checkpoint; corpus changed?",
                d.lang
            )));
        }
    }
    Ok(Restored {
        store,
        registry,
        emb,
        data,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Valid,
    #[default]
    Test,
    All,
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "valid" => Ok(SplitName::Valid),
            "test" => Ok(SplitName::Test),
            "all" => Ok(SplitName::All),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

fn pick(d: &LanguageData, split: SplitName) -> Vec<&crate::data::Document> {
    match split {
        SplitName::Train => d.train.iter().collect(),
        SplitName::Valid => d.valid.iter().collect(),
        SplitName::Test => d.test.iter().collect(),
        SplitName::All => d.train.iter().chain(&d.valid).chain(&d.test).collect(),
    }
}

/// Scores a checkpoint on one split. The checkpoint file is only read.
pub fn evaluate_run(cfg: &RunConfig, split: SplitName) -> Result<RunSummary> {
    let started = Instant::now();
    prepare_out(cfg)?;
    let r = restore(cfg)?;
    let mut reports = BTreeMap::new();
    for d in &r.data {
        let docs: Vec<_> = pick(d, split).into_iter().cloned().collect();
        let view = r.registry.view(&d.lang)?;
        let e = evaluate(&r.store, view, &r.emb, &docs, cfg.threshold.threshold(d.vocab.len()))?;
        reports.insert(d.lang.clone(), e.report);
    }
    write_json(&cfg.out.join(EVAL_FILE), &reports)?;
    let counts = count_params(&r.store, &r.registry);
    let summary = RunSummary::new("evaluate")
        .with_counts(&counts)
        .with_f1(f1_map(&reports));
    finish(cfg, summary, started)
}

#[derive(Clone, Debug, Serialize)]
struct PredictionRecord<'a> {
    id: &'a str,
    lang: &'a str,
    predicted: Vec<&'a str>,
    gold: Vec<&'a str>,
    probs: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    word_attention: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sentence_attention: Option<Vec<f64>>,
}

/// Writes label predictions (and optionally attention weights) as JSON lines.
pub fn predict_run(cfg: &RunConfig, split: SplitName, attention: bool) -> Result<RunSummary> {
    let started = Instant::now();
    prepare_out(cfg)?;
    let r = restore(cfg)?;
    let path = cfg.out.join(PREDICTIONS_FILE);
    let file = File::create(&path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io("write predictions", e);
    for d in &r.data {
        let view = r.registry.view(&d.lang)?;
        let tau = cfg.threshold.threshold(d.vocab.len());
        for doc in pick(d, split) {
            let p = predict(&r.store, view, &r.emb, doc)?;
            let record = PredictionRecord {
                id: &doc.id,
                lang: &doc.lang,
                predicted: crate::train::predict_labels(&p.probs, tau)
                    .into_iter()
                    .map(|l| d.vocab.label(l))
                    .collect(),
                gold: doc.labels.iter().map(|&l| d.vocab.label(l)).collect(),
                probs: p.probs.clone(),
                word_attention: attention.then(|| p.word_attention.clone()),
                sentence_attention: if attention { p.sentence_attention.clone() } else { None },
            };
            serde_json::to_writer(&mut w, &record)?;
            writeln!(w).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;
    let counts = count_params(&r.store, &r.registry);
    finish(cfg, RunSummary::new("predict").with_counts(&counts), started)
}

/// Writes document vectors of one split as TSV.
pub fn export_vectors_run(cfg: &RunConfig, split: SplitName) -> Result<RunSummary> {
    let started = Instant::now();
    prepare_out(cfg)?;
    let r = restore(cfg)?;
    let mut items = Vec::new();
    for d in &r.data {
        let view = r.registry.view(&d.lang)?;
        for doc in pick(d, split) {
            items.push((doc, view, &d.vocab));
        }
    }
    let n = export_doc_vectors(&cfg.out.join(VECTORS_FILE), &r.store, &r.emb, items)?;
    log::info!("exported {n} document vectors");
    let counts = count_params(&r.store, &r.registry);
    finish(cfg, RunSummary::new("export-vectors").with_counts(&counts), started)
}

/// Builds the requested models and reports their parameter counts.
pub fn count_params_run(
    cfg: &RunConfig,
    num_labels: &[usize],
    schemes: &[SharingScheme],
) -> Result<(Vec<ParamCounts>, RunSummary)> {
    let started = Instant::now();
    prepare_out(cfg)?;
    let langs: Vec<String> = if cfg.languages.len() == num_labels.len() {
        cfg.languages.clone()
    } else {
        crate::data::SynthConfig {
            m: num_labels.len(),
            ..Default::default()
        }
        .languages()
    };
    let configs: Vec<(String, ModelConfig)> = langs
        .iter()
        .zip(num_labels)
        .map(|(l, &k)| {
            (
                l.clone(),
                ModelConfig {
                    num_labels: k,
                    ..cfg.model.clone()
                },
            )
        })
        .collect();
    let mut all = Vec::new();
    for &scheme in schemes {
        let (store, registry) = build_mhan::<f64>(&configs, scheme, cfg.seed)?;
        all.push(count_params(&store, &registry));
    }
    write_json(&cfg.out.join("params.json"), &all)?;
    let summary = match all.as_slice() {
        [one] => RunSummary::new("count-params").with_counts(one),
        _ => RunSummary::new("count-params"),
    };
    let summary = finish(cfg, summary, started)?;
    Ok((all, summary))
}

/// Low-resource transfer sweep of `sweep.target` with `sweep.auxiliary`.
pub fn sweep_run(cfg: &RunConfig) -> Result<(SweepTable, RunSummary)> {
    let started = Instant::now();
    prepare_out(cfg)?;
    let (corpus, langs, _) = load_run_corpus(cfg)?;
    let target = cfg
        .sweep
        .target
        .clone()
        .or_else(|| langs.get(1).cloned())
        .ok_or_else(|| Error::Config("sweep needs a target language".into()))?;
    let auxiliary = cfg
        .sweep
        .auxiliary
        .clone()
        .or_else(|| langs.iter().find(|l| **l != target).cloned())
        .ok_or_else(|| Error::Config("sweep needs an auxiliary language".into()))?;
    let emb = load_run_embeddings(cfg)?;
    let mut sc = SweepConfig::from_tiers(&target, &auxiliary, &cfg.sweep.tiers, cfg.sweep.seeds.clone());
    for &f in &cfg.sweep.fractions {
        sc.points.push(crate::train::SweepPoint {
            group: format!("{f}"),
            fraction: f,
        });
    }
    let raw: Vec<_> = corpus.values().flatten().cloned().collect();
    let table = low_resource_sweep(
        &raw,
        &emb,
        &cfg.data,
        &cfg.model,
        &cfg.multitask,
        &cfg.train,
        &cfg.threshold,
        &sc,
    )?;
    write_json(&cfg.out.join(SWEEP_FILE), &table)?;
    let mut summary = RunSummary::new("low-resource-sweep");
    let ens: BTreeMap<String, f64> = table
        .groups
        .iter()
        .map(|g| (format!("{target}/{}", g.group), g.ensemble.mean))
        .collect();
    summary = summary.with_f1(ens);
    let summary = finish(cfg, summary, started)?;
    Ok((table, summary))
}
