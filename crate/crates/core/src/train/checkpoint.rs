use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabelVocab;
use crate::error::{Error, Result};
use crate::graph::ParamStore;
use crate::model::ModelConfig;
use crate::multitask::{build_mhan, SharingRegistry, SharingScheme};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "mhan-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    /// Row-major values.
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageModel {
    pub lang: String,
    pub model: ModelConfig,
    pub labels: LabelVocab,
}

/// Serialized trained model: run configuration, sharing layout, label
/// vocabularies and every named tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Verbatim copy of the configuration that produced the model.
    pub config: serde_json::Value,
    pub scheme: SharingScheme,
    pub languages: Vec<LanguageModel>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn capture<S: Scalar>(
        config: serde_json::Value,
        store: &ParamStore<S>,
        registry: &SharingRegistry,
        vocabs: &[LabelVocab],
    ) -> Result<Self> {
        let mut languages = Vec::new();
        for lang in registry.languages() {
            let labels = vocabs
                .iter()
                .find(|v| &v.lang == lang)
                .ok_or_else(|| Error::UnknownLanguage(lang.clone()))?;
            let model = registry.view(lang)?.config.clone();
            if model.num_labels != labels.len() {
                return Err(Error::dim("checkpoint labels", &[model.num_labels], &[labels.len()]));
            }
            languages.push(LanguageModel {
                lang: lang.clone(),
                model,
                labels: labels.clone(),
            });
        }
        let tensors = store
            .iter()
            .map(|(_, name, t)| NamedTensor {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.to_f64_vec(),
            })
            .collect();
        Ok(Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config,
            scheme: registry.scheme(),
            languages,
            tensors,
        })
    }

    /// Rebuilds the store and registry, then loads every tensor by name.
    pub fn restore<S: Scalar>(&self) -> Result<(ParamStore<S>, SharingRegistry)> {
        let configs: Vec<(String, ModelConfig)> = self
            .languages
            .iter()
            .map(|l| (l.lang.clone(), l.model.clone()))
            .collect();
        let (mut store, registry) = build_mhan::<S>(&configs, self.scheme, 0)?;
        if store.len() != self.tensors.len() {
            return Err(Error::Data(format!(
                "checkpoint holds {} tensors, model expects {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for nt in &self.tensors {
            let id = store
                .lookup(&nt.name)
                .ok_or_else(|| Error::Data(format!("unexpected tensor `{}` in checkpoint", nt.name)))?;
            if store.get(id).shape() != nt.shape.as_slice() {
                return Err(Error::dim("checkpoint tensor", store.get(id).shape(), &nt.shape));
            }
            *store.get_mut(id) = Tensor::from_f64(&nt.shape, &nt.data)?;
        }
        Ok((store, registry))
    }

    pub fn vocab(&self, lang: &str) -> Result<&LabelVocab> {
        self.languages
            .iter()
            .find(|l| l.lang == lang)
            .map(|l| &l.labels)
            .ok_or_else(|| Error::UnknownLanguage(lang.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(format!("write {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        let mut ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Data(format!("`{}` is not a checkpoint", path.display())));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        for l in &mut ck.languages {
            l.labels = l.labels.clone().reindexed();
        }
        Ok(ck)
    }
}
