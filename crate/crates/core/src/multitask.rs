//! Multilingual models: cross-language parameter sharing, the joint
//! objective and cyclic per-language batching.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Document, EmbeddingTable};
use crate::error::{Error, Result};
use crate::graph::{Gradients, Graph, ParamId, ParamStore};
use crate::layers::bce_loss;
use crate::model::{build_component, han_forward, Component, ComponentParams, HanParams, ModelConfig};
use crate::rng;
use crate::scalar::Scalar;
use crate::train::optim::{Optimizer, StepStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SharingScheme {
    /// Nothing shared: independent models trained jointly.
    Mono,
    /// Word and sentence encoders shared.
    Enc,
    /// Word and sentence attention (W, b, u) shared.
    Att,
    /// Encoders and attention shared.
    Both,
}

impl SharingScheme {
    pub const ALL: [SharingScheme; 4] = [
        SharingScheme::Mono,
        SharingScheme::Enc,
        SharingScheme::Att,
        SharingScheme::Both,
    ];
    pub const MULTILINGUAL: [SharingScheme; 3] = [SharingScheme::Enc, SharingScheme::Att, SharingScheme::Both];

    pub fn shares(self, c: Component) -> bool {
        use Component::*;
        match self {
            SharingScheme::Mono => false,
            SharingScheme::Enc => matches!(c, WordEncoder | SentenceEncoder),
            SharingScheme::Att => matches!(c, WordAttention | SentenceAttention),
            SharingScheme::Both => c != Classifier,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SharingScheme::Mono => "mono",
            SharingScheme::Enc => "enc",
            SharingScheme::Att => "att",
            SharingScheme::Both => "both",
        }
    }
}

impl std::str::FromStr for SharingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mono" => Ok(SharingScheme::Mono),
            "enc" => Ok(SharingScheme::Enc),
            "att" => Ok(SharingScheme::Att),
            "both" => Ok(SharingScheme::Both),
            other => Err(Error::Config(format!("unknown sharing scheme `{other}`"))),
        }
    }
}

/// Resolves (component, language) to parameter tensors. Shared components
/// resolve to the same ids for every language.
#[derive(Clone, Debug, PartialEq)]
pub struct SharingRegistry {
    scheme: SharingScheme,
    languages: Vec<String>,
    views: BTreeMap<String, HanParams>,
    shared: BTreeMap<Component, ComponentParams>,
}

impl SharingRegistry {
    pub fn scheme(&self) -> SharingScheme {
        self.scheme
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn view(&self, lang: &str) -> Result<&HanParams> {
        self.views
            .get(lang)
            .ok_or_else(|| Error::UnknownLanguage(lang.to_string()))
    }

    pub fn resolve(&self, component: Component, lang: &str) -> Result<Option<ComponentParams>> {
        Ok(self.view(lang)?.component(component))
    }

    /// Components held as a single instance for all languages.
    pub fn shared_components(&self) -> impl Iterator<Item = Component> + '_ {
        self.shared.keys().copied()
    }

    pub fn shared_ids(&self) -> BTreeSet<ParamId> {
        self.shared.values().flat_map(|p| p.param_ids()).collect()
    }

    /// Ids only `lang` reads.
    pub fn specific_ids(&self, lang: &str) -> Result<BTreeSet<ParamId>> {
        let shared = self.shared_ids();
        Ok(self
            .view(lang)?
            .param_ids()
            .into_iter()
            .filter(|id| !shared.contains(id))
            .collect())
    }

    /// Every distinct tensor id, each once.
    pub fn distinct_ids(&self) -> BTreeSet<ParamId> {
        self.views.values().flat_map(|v| v.param_ids()).collect()
    }
}

fn check_compatible(base: &ModelConfig, other: &ModelConfig, lang: &str) -> Result<()> {
    let same = base.architecture == other.architecture
        && base.encoder == other.encoder
        && base.embed_dim == other.embed_dim
        && base.word_hidden == other.word_hidden
        && base.sentence_hidden == other.sentence_hidden
        && base.attention_dim == other.attention_dim
        && base.activation == other.activation
        && base.strict_scaling == other.strict_scaling
        && base.constant_lengths == other.constant_lengths;
    if same {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "language `{lang}` model dimensions differ from the first language; \
             shared components need identical shapes"
        )))
    }
}

/// Builds every language's view into a fresh store. `configs` is ordered by
/// language and may differ only in `num_labels` unless the scheme is `Mono`.
/// Shared tensors are named `shared.<component>.*`, the rest
/// `<lang>.<component>.*`.
pub fn build_mhan<S: Scalar>(
    configs: &[(String, ModelConfig)],
    scheme: SharingScheme,
    seed: u64,
) -> Result<(ParamStore<S>, SharingRegistry)> {
    let (_, base) = configs
        .first()
        .ok_or_else(|| Error::Config("at least one language is required".into()))?;
    let mut seen = BTreeSet::new();
    for (lang, cfg) in configs {
        if !seen.insert(lang.as_str()) {
            return Err(Error::Config(format!("language `{lang}` listed twice")));
        }
        cfg.validate()?;
        if scheme != SharingScheme::Mono {
            check_compatible(base, cfg, lang)?;
        }
    }

    let mut store = ParamStore::new();
    let mut rng = rng::stream(seed, "init");
    let mut shared = BTreeMap::new();
    let mut parts: Vec<BTreeMap<Component, ComponentParams>> = vec![BTreeMap::new(); configs.len()];
    for &component in base.components() {
        if scheme.shares(component) {
            let p = build_component(&mut store, &mut rng, base, component, "shared.")?;
            shared.insert(component, p);
            continue;
        }
        for ((lang, cfg), built) in configs.iter().zip(parts.iter_mut()) {
            let p = build_component(&mut store, &mut rng, cfg, component, &format!("{lang}."))?;
            built.insert(component, p);
        }
    }

    let mut views = BTreeMap::new();
    for ((lang, cfg), built) in configs.iter().zip(&parts) {
        let view = HanParams::assemble(cfg, |c| {
            shared
                .get(&c)
                .or_else(|| built.get(&c))
                .copied()
                .ok_or_else(|| Error::Contract(format!("component {c:?} was not built")))
        })?;
        views.insert(lang.clone(), view);
    }
    let registry = SharingRegistry {
        scheme,
        languages: configs.iter().map(|(l, _)| l.clone()).collect(),
        views,
        shared,
    };
    Ok((store, registry))
}

/// Distinct-parameter counts of a registry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub scheme: SharingScheme,
    /// Every distinct scalar, shared ones counted once.
    pub total: usize,
    pub shared: usize,
    /// Size of each language's full view, shared tensors included.
    pub per_language: BTreeMap<String, usize>,
    /// `total / M`.
    pub average_per_language: f64,
    /// Attention biases follow the attention weights into the shared set.
    pub attention_biases_shared: bool,
}

pub fn count_params<S: Scalar>(store: &ParamStore<S>, registry: &SharingRegistry) -> ParamCounts {
    let size = |ids: &BTreeSet<ParamId>| ids.iter().map(|&id| store.get(id).numel()).sum::<usize>();
    let total = size(&registry.distinct_ids());
    let per_language = registry
        .views
        .iter()
        .map(|(lang, v)| (lang.clone(), v.num_params(store)))
        .collect();
    ParamCounts {
        scheme: registry.scheme,
        total,
        shared: size(&registry.shared_ids()),
        per_language,
        average_per_language: total as f64 / registry.languages.len() as f64,
        attention_biases_shared: matches!(registry.scheme, SharingScheme::Att | SharingScheme::Both),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiTaskConfig {
    pub languages: Vec<String>,
    /// Samples drawn per language per epoch.
    pub epoch_size: usize,
    pub batch_size: usize,
    /// Per-language objective weights; all 1 when absent.
    pub gammas: Option<Vec<f64>>,
}

impl Default for MultiTaskConfig {
    fn default() -> Self {
        MultiTaskConfig {
            languages: Vec::new(),
            epoch_size: 25_000,
            batch_size: 16,
            gammas: None,
        }
    }
}

impl MultiTaskConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.languages.len();
        if m == 0 {
            return Err(Error::Config("no languages configured".into()));
        }
        if self.batch_size == 0 || !self.batch_size.is_multiple_of(m) {
            return Err(Error::Config(format!(
                "batch size {} is not a positive multiple of {m} languages",
                self.batch_size
            )));
        }
        if self.epoch_size == 0 {
            return Err(Error::Config("epoch size must be positive".into()));
        }
        if let Some(g) = &self.gammas {
            if g.len() != m || g.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::Config(format!(
                    "need {m} non-negative finite weights, got {g:?}"
                )));
            }
        }
        Ok(())
    }

    /// Objective weight per language, in `languages` order.
    pub fn gamma_map(&self) -> BTreeMap<String, f64> {
        self.languages
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), self.gammas.as_ref().map_or(1.0, |g| g[i])))
            .collect()
    }

    /// Batches per epoch so that each language sees `epoch_size` samples.
    pub fn batches_per_epoch(&self) -> usize {
        let per_lang = self.batch_size / self.languages.len();
        self.epoch_size.div_ceil(per_lang)
    }
}

/// Draws `batch_size / M` items uniformly with replacement from each
/// dataset, interleaving languages. Returns `(language index, item)` pairs.
pub fn cyclic_batch<'a, T, R: Rng>(
    datasets: &[&'a [T]],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<(usize, &'a T)>> {
    let m = datasets.len();
    if m == 0 || batch_size == 0 || !batch_size.is_multiple_of(m) {
        return Err(Error::Config(format!(
            "batch size {batch_size} is not a positive multiple of {m} languages"
        )));
    }
    if let Some(i) = datasets.iter().position(|d| d.is_empty()) {
        return Err(Error::Data(format!("dataset {i} has no documents")));
    }
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..batch_size / m {
        for (l, docs) in datasets.iter().enumerate() {
            batch.push((l, &docs[rng.gen_range(0..docs.len())]));
        }
    }
    Ok(batch)
}

/// Loss and gradients of one minibatch, before the optimizer update.
#[derive(Clone, Debug)]
pub struct JointLoss<S> {
    /// `(1/B) Σ γ_l · BCE`.
    pub loss: f64,
    /// Unweighted BCE summed per language, with the document count.
    pub per_language: BTreeMap<String, (f64, usize)>,
    pub grads: Gradients<S>,
}

/// Forward and backward pass of the joint objective over a mixed batch.
/// Each document is routed to its language's view.
pub fn joint_loss<S: Scalar>(
    store: &ParamStore<S>,
    registry: &SharingRegistry,
    emb: &EmbeddingTable<S>,
    batch: &[&Document],
    gammas: &BTreeMap<String, f64>,
) -> Result<JointLoss<S>> {
    if batch.is_empty() {
        return Err(Error::EmptySequence("empty batch"));
    }
    let mut g = Graph::new(store);
    let mut terms = Vec::with_capacity(batch.len());
    let mut per_language: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for doc in batch {
        let view = registry.view(&doc.lang)?;
        let gamma = *gammas
            .get(&doc.lang)
            .ok_or_else(|| Error::UnknownLanguage(doc.lang.clone()))?;
        let f = han_forward(&mut g, doc, view, emb)?;
        let bce = bce_loss(&mut g, &doc.k_hot::<S>(), f.probs)?;
        let entry = per_language.entry(doc.lang.clone()).or_default();
        entry.0 += g.value(bce).item()?.as_f64();
        entry.1 += 1;
        terms.push(g.scale(bce, S::of(gamma))?);
    }
    let total = g.add_n(&terms)?;
    let loss = g.scale(total, S::of(1.0 / batch.len() as f64))?;
    let value = g.value(loss).item()?.as_f64();
    let grads = g.backward(loss)?;
    Ok(JointLoss {
        loss: value,
        per_language,
        grads,
    })
}

/// One optimization step of the joint objective.
pub fn joint_step<S: Scalar>(
    store: &mut ParamStore<S>,
    registry: &SharingRegistry,
    emb: &EmbeddingTable<S>,
    batch: &[&Document],
    gammas: &BTreeMap<String, f64>,
    optimizer: &mut Optimizer<S>,
) -> Result<(JointLoss<S>, StepStats)> {
    let jl = joint_loss(store, registry, emb, batch, gammas)?;
    if !jl.loss.is_finite() {
        return Err(Error::NonFinite(format!("joint loss {}", jl.loss)));
    }
    let stats = optimizer.step(store, &jl.grads)?;
    Ok((jl, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::EncoderKind;
    use crate::model::{build_model, Architecture};

    fn cfg(enc: EncoderKind, k: usize) -> ModelConfig {
        ModelConfig {
            architecture: Architecture::Han,
            encoder: enc,
            num_labels: k,
            ..ModelConfig::default()
        }
    }

    fn langs(enc: EncoderKind, ks: &[usize]) -> Vec<(String, ModelConfig)> {
        ks.iter()
            .enumerate()
            .map(|(i, &k)| (format!("l{i}"), cfg(enc, k)))
            .collect()
    }

    fn total(enc: EncoderKind, ks: &[usize], scheme: SharingScheme) -> usize {
        let (store, reg) = build_mhan::<f64>(&langs(enc, ks), scheme, 0).unwrap();
        count_params(&store, &reg).total
    }

    #[test]
    fn dense_two_language_counts() {
        let ks = [300, 300];
        let got: Vec<usize> = SharingScheme::ALL
            .iter()
            .map(|&s| total(EncoderKind::Dense, &ks, s))
            .collect();
        assert_eq!(got, vec![129_800, 115_600, 109_400, 95_200]);
    }

    #[test]
    fn shared_identity() {
        let (_, reg) = build_mhan::<f64>(&langs(EncoderKind::Gru, &[3, 4]), SharingScheme::Both, 0).unwrap();
        let a = reg.view("l0").unwrap();
        let b = reg.view("l1").unwrap();
        assert_eq!(a.word_encoder, b.word_encoder);
        assert_eq!(a.sentence_attention, b.sentence_attention);
        assert_ne!(a.classifier, b.classifier);

        let (_, reg) = build_mhan::<f64>(&langs(EncoderKind::Gru, &[3, 4]), SharingScheme::Mono, 0).unwrap();
        let a: BTreeSet<_> = reg.view("l0").unwrap().param_ids().into_iter().collect();
        let b: BTreeSet<_> = reg.view("l1").unwrap().param_ids().into_iter().collect();
        assert!(a.is_disjoint(&b));
        assert!(reg.shared_ids().is_empty());
    }

    #[test]
    fn views_list_exactly_their_sets() {
        let (store, reg) = build_mhan::<f64>(&langs(EncoderKind::Dense, &[3, 4]), SharingScheme::Enc, 0).unwrap();
        let names: Vec<&str> = reg
            .view("l1")
            .unwrap()
            .param_ids()
            .into_iter()
            .map(|id| store.name(id))
            .collect();
        assert_eq!(
            names,
            [
                "shared.word_encoder.W",
                "shared.word_encoder.b",
                "l1.word_attention.W",
                "l1.word_attention.b",
                "l1.word_attention.u",
                "shared.sentence_encoder.W",
                "shared.sentence_encoder.b",
                "l1.sentence_attention.W",
                "l1.sentence_attention.b",
                "l1.sentence_attention.u",
                "l1.classifier.W",
                "l1.classifier.b",
            ]
        );
    }

    #[test]
    fn single_language_matches_monolingual() {
        for enc in [EncoderKind::Dense, EncoderKind::Gru, EncoderKind::BiGru] {
            let (mono, _) = build_model::<f64>(&cfg(enc, 17), 0).unwrap();
            for scheme in SharingScheme::ALL {
                assert_eq!(total(enc, &[17], scheme), mono.num_scalars());
            }
        }
    }

    #[test]
    fn mismatched_dims_rejected() {
        let mut configs = langs(EncoderKind::Dense, &[3, 3]);
        configs[1].1.word_hidden = 50;
        assert!(build_mhan::<f64>(&configs, SharingScheme::Enc, 0).is_err());
        assert!(build_mhan::<f64>(&configs, SharingScheme::Mono, 0).is_ok());
        configs[1].1.word_hidden = 100;
        configs[1].1.encoder = EncoderKind::Gru;
        assert!(build_mhan::<f64>(&configs, SharingScheme::Att, 0).is_err());
        configs[1] = configs[0].clone();
        assert!(build_mhan::<f64>(&configs, SharingScheme::Both, 0).is_err());
    }

    #[test]
    fn count_report_fields() {
        let (store, reg) = build_mhan::<f64>(&langs(EncoderKind::Dense, &[300, 300]), SharingScheme::Att, 0).unwrap();
        let c = count_params(&store, &reg);
        assert_eq!(c.shared, 20_400);
        assert_eq!(c.per_language["l0"], 64_900);
        assert_eq!(c.average_per_language, 54_700.0);
        assert!(c.attention_biases_shared);
    }

    #[test]
    fn cyclic_batch_quotas() {
        let a: Vec<u32> = (0..5).collect();
        let b: Vec<u32> = (100..103).collect();
        let mut r = rng::stream(1, "batch");
        let batch = cyclic_batch(&[&a, &b], 16, &mut r).unwrap();
        assert_eq!(batch.len(), 16);
        assert_eq!(batch.iter().filter(|(l, _)| *l == 0).count(), 8);
        assert!(batch.iter().all(|&(l, x)| if l == 0 { *x < 5 } else { *x >= 100 }));
        assert_eq!(batch[0].0, 0);
        assert_eq!(batch[1].0, 1);

        let sets: Vec<Vec<u32>> = (0..8).map(|i| vec![i]).collect();
        let refs: Vec<&[u32]> = sets.iter().map(|s| s.as_slice()).collect();
        let batch = cyclic_batch(&refs, 16, &mut r).unwrap();
        for l in 0..8 {
            assert_eq!(batch.iter().filter(|(x, _)| *x == l).count(), 2);
        }
        let three: Vec<&[u32]> = refs[..3].to_vec();
        assert!(cyclic_batch(&three, 16, &mut r).is_err());
        let empty: [u32; 0] = [];
        assert!(cyclic_batch(&[&a[..], &empty[..]], 16, &mut r).is_err());
    }

    #[test]
    fn multitask_config_checks() {
        let mut c = MultiTaskConfig {
            languages: vec!["en".into(), "de".into(), "es".into()],
            ..MultiTaskConfig::default()
        };
        assert!(c.validate().is_err());
        c.batch_size = 15;
        c.validate().unwrap();
        assert_eq!(c.gamma_map()["de"], 1.0);
        c.gammas = Some(vec![1.0, 0.0]);
        assert!(c.validate().is_err());
        c.gammas = Some(vec![1.0, 0.0, 0.5]);
        c.validate().unwrap();
        assert_eq!(c.gamma_map()["es"], 0.5);
        c.epoch_size = 11;
        assert_eq!(c.batches_per_epoch(), 3);
    }
}
