use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingTable, RawDocument, Tier};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::multitask::{build_mhan, MultiTaskConfig, SharingScheme};
use crate::scalar::Scalar;
use crate::train::metrics::ThresholdPolicy;
use crate::train::trainer::{evaluate, prepare_language, train, DataConfig, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Group name the point is averaged under, e.g. a tier.
    pub group: String,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub target: String,
    pub auxiliary: String,
    pub points: Vec<SweepPoint>,
    pub seeds: Vec<u64>,
    pub schemes: Vec<SharingScheme>,
}

impl SweepConfig {
    pub fn from_tiers(target: &str, auxiliary: &str, tiers: &[Tier], seeds: Vec<u64>) -> Self {
        let points = tiers
            .iter()
            .flat_map(|t| {
                t.fractions().into_iter().map(move |fraction| SweepPoint {
                    group: t.as_str().into(),
                    fraction,
                })
            })
            .collect();
        SweepConfig {
            target: target.into(),
            auxiliary: auxiliary.into(),
            points,
            seeds,
            schemes: SharingScheme::MULTILINGUAL.to_vec(),
        }
    }
}

/// Scores of one trained model on the target language.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub group: String,
    pub fraction: f64,
    pub seed: u64,
    pub scheme: SharingScheme,
    pub train_docs: usize,
    pub valid_f1: f64,
    pub test_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    fn of(xs: &[f64]) -> Spread {
        Spread {
            mean: xs.iter().sum::<f64>() / xs.len() as f64,
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Per-group test F1: averaged over the group's fractions for every seed,
/// then summarized across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub mono: Spread,
    pub schemes: BTreeMap<SharingScheme, Spread>,
    /// Multilingual scheme picked per (fraction, seed) by validation F1.
    pub ensemble: Spread,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub runs: Vec<SweepRun>,
    pub groups: Vec<GroupSummary>,
}

impl SweepTable {
    /// Scheme with the best validation F1 at (`fraction`, `seed`); the
    /// first listed wins ties.
    pub fn ensemble_choice(&self, fraction: f64, seed: u64) -> Option<&SweepRun> {
        self.runs
            .iter()
            .filter(|r| r.fraction == fraction && r.seed == seed && r.scheme != SharingScheme::Mono)
            .fold(None, |best: Option<&SweepRun>, r| match best {
                Some(b) if b.valid_f1 >= r.valid_f1 => Some(b),
                _ => Some(r),
            })
    }

    fn summarize(runs: Vec<SweepRun>, cfg: &SweepConfig) -> SweepTable {
        let mut table = SweepTable {
            runs,
            groups: Vec::new(),
        };
        let mut groups: Vec<&str> = Vec::new();
        for p in &cfg.points {
            if !groups.contains(&p.group.as_str()) {
                groups.push(&p.group);
            }
        }
        for group in groups {
            let fractions: Vec<f64> = cfg
                .points
                .iter()
                .filter(|p| p.group == group)
                .map(|p| p.fraction)
                .collect();
            let per_seed = |pick: &dyn Fn(f64, u64) -> f64| -> Spread {
                let scores: Vec<f64> = cfg
                    .seeds
                    .iter()
                    .map(|&s| fractions.iter().map(|&f| pick(f, s)).sum::<f64>() / fractions.len() as f64)
                    .collect();
                Spread::of(&scores)
            };
            let score = |scheme: SharingScheme| {
                let runs = &table.runs;
                move |f: f64, s: u64| {
                    runs.iter()
                        .find(|r| r.fraction == f && r.seed == s && r.scheme == scheme && r.group == group)
                        .map_or(0.0, |r| r.test_f1)
                }
            };
            let mono = per_seed(&score(SharingScheme::Mono));
            let schemes = cfg.schemes.iter().map(|&sc| (sc, per_seed(&score(sc)))).collect();
            let ensemble = per_seed(&|f, s| table.ensemble_choice(f, s).map_or(0.0, |r| r.test_f1));
            table.groups.push(GroupSummary {
                group: group.into(),
                mono,
                schemes,
                ensemble,
            });
        }
        table
    }
}

/// Low-resource transfer experiment: for every point and seed, the target
/// language's training split is subsampled, then a monolingual model and
/// one multilingual model per scheme (auxiliary language at full size) are
/// trained and scored on the target test split.
#[allow(clippy::too_many_arguments)]
pub fn low_resource_sweep<S: Scalar>(
    raw: &[RawDocument],
    emb: &EmbeddingTable<S>,
    data_cfg: &DataConfig,
    model: &ModelConfig,
    mt: &MultiTaskConfig,
    tc: &TrainConfig,
    policy: &ThresholdPolicy,
    cfg: &SweepConfig,
) -> Result<SweepTable> {
    if cfg.target == cfg.auxiliary {
        return Err(Error::Config("target and auxiliary languages must differ".into()));
    }
    if cfg.points.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one fraction and one seed".into()));
    }
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let aux = prepare_language(&cfg.auxiliary, raw, emb, data_cfg, None, seed)?;
        for point in &cfg.points {
            let target = prepare_language(&cfg.target, raw, emb, data_cfg, Some(point.fraction), seed)?;
            let tau = policy.threshold(target.vocab.len());
            let with_k = |k| ModelConfig {
                num_labels: k,
                ..model.clone()
            };
            let train_cfg = TrainConfig {
                select_language: Some(cfg.target.clone()),
                seed,
                ..tc.clone()
            };
            let mut variants = vec![(SharingScheme::Mono, vec![target.clone()])];
            for &scheme in &cfg.schemes {
                variants.push((scheme, vec![target.clone(), aux.clone()]));
            }
            for (scheme, data) in variants {
                let configs: Vec<(String, ModelConfig)> =
                    data.iter().map(|d| (d.lang.clone(), with_k(d.vocab.len()))).collect();
                let (mut store, registry) = build_mhan::<S>(&configs, scheme, seed)?;
                let batch_size = if data.len() == 1 {
                    mt.batch_size
                } else {
                    mt.batch_size - mt.batch_size % data.len()
                };
                let run_mt = MultiTaskConfig {
                    languages: data.iter().map(|d| d.lang.clone()).collect(),
                    batch_size,
                    gammas: None,
                    ..mt.clone()
                };
                let outcome = train(&mut store, &registry, emb, &data, &run_mt, &train_cfg, policy, None)?;
                let view = registry.view(&cfg.target)?;
                let test = evaluate(&store, view, emb, &data[0].test, tau)?;
                log::info!(
                    "{} f={} seed={} {}: valid {:.4} test {:.4}",
                    point.group,
                    point.fraction,
                    seed,
                    scheme.as_str(),
                    outcome.best_score,
                    test.report.f1
                );
                runs.push(SweepRun {
                    group: point.group.clone(),
                    fraction: point.fraction,
                    seed,
                    scheme,
                    train_docs: data[0].train.len(),
                    valid_f1: outcome.best_score,
                    test_f1: test.report.f1,
                });
            }
        }
    }
    Ok(SweepTable::summarize(runs, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(scheme: SharingScheme, seed: u64, fraction: f64, valid: f64, test: f64) -> SweepRun {
        SweepRun {
            group: "g".into(),
            fraction,
            seed,
            scheme,
            train_docs: 1,
            valid_f1: valid,
            test_f1: test,
        }
    }

    #[test]
    fn ensemble_follows_validation() {
        use SharingScheme::*;
        let cfg = SweepConfig {
            target: "a".into(),
            auxiliary: "b".into(),
            points: vec![
                SweepPoint {
                    group: "g".into(),
                    fraction: 0.1,
                },
                SweepPoint {
                    group: "g".into(),
                    fraction: 0.2,
                },
            ],
            seeds: vec![1],
            schemes: vec![Enc, Att, Both],
        };
        let runs = vec![
            run(Mono, 1, 0.1, 0.9, 0.5),
            run(Enc, 1, 0.1, 0.3, 0.9),
            run(Att, 1, 0.1, 0.6, 0.4),
            run(Both, 1, 0.1, 0.6, 0.8),
            run(Mono, 1, 0.2, 0.9, 0.7),
            run(Enc, 1, 0.2, 0.8, 0.6),
            run(Att, 1, 0.2, 0.1, 0.9),
            run(Both, 1, 0.2, 0.2, 0.9),
        ];
        let t = SweepTable::summarize(runs, &cfg);
        assert_eq!(t.ensemble_choice(0.1, 1).unwrap().scheme, Att);
        assert_eq!(t.ensemble_choice(0.2, 1).unwrap().scheme, Enc);
        let g = &t.groups[0];
        assert!((g.ensemble.mean - 0.5).abs() < 1e-12);
        assert!((g.mono.mean - 0.6).abs() < 1e-12);
        assert!((g.schemes[&Both].mean - 0.85).abs() < 1e-12);
        let best_valid = |s| t.runs.iter().filter(|r| r.scheme == s).map(|r| r.valid_f1).sum::<f64>();
        let ens_valid: f64 = [0.1, 0.2]
            .iter()
            .map(|&f| t.ensemble_choice(f, 1).unwrap().valid_f1)
            .sum();
        for s in [Enc, Att, Both] {
            assert!(ens_valid >= best_valid(s));
        }
    }

    #[test]
    fn tier_points() {
        let c = SweepConfig::from_tiers("de", "en", &[Tier::Tiny, Tier::Medium], vec![0]);
        assert_eq!(c.points.len(), 10);
        assert_eq!(c.points[0].group, "tiny");
        assert_eq!(c.points[9].fraction, 0.5);
    }
}
