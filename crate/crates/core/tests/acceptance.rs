//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. `ACCEPTANCE_ONLY=A2,A7` runs a subset.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use mhan::data::{split_corpus, synth_corpus, SynthConfig, Tier};
use mhan::gradcheck::{check_han, HanCheckCase};
use mhan::layers::EncoderKind;
use mhan::model::{Architecture, ModelConfig};
use mhan::multitask::{build_mhan, count_params, cyclic_batch, joint_loss, joint_step, MultiTaskConfig, SharingScheme};
use mhan::pipeline::{train_run, RunConfig, CHECKPOINT_FILE, LOG_FILE};
use mhan::train::{
    evaluate, low_resource_sweep, micro_f1, train, OptimConfig, Optimizer, SweepConfig, SweepPoint, ThresholdPolicy,
    TrainConfig,
};
use mhan::Result;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

// ---------------------------------------------------------------------------

fn gradients() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for encoder in [EncoderKind::Dense, EncoderKind::Gru, EncoderKind::BiGru] {
        for seed in 0..10 {
            let case = HanCheckCase::random(encoder, 1000 + seed, 5, 4);
            let r = check_han(&case, 1e-4)?;
            worst = worst.max(r.max_rel_error);
            cases += 1;
        }
    }
    outcome(
        worst < 1e-4,
        format!("max rel err {worst:.2e} over {cases} cases (limit 1e-4)"),
    )
}

// ---------------------------------------------------------------------------

/// Closed-form parameter counts per component.
struct ShapeOracle {
    encoder: EncoderKind,
    d: usize,
    dw: usize,
    ds: usize,
    da: usize,
}

impl ShapeOracle {
    fn enc(&self, input: usize, h: usize) -> usize {
        let gru = 3 * (input * h + h * h + h);
        match self.encoder {
            EncoderKind::Dense => input * h + h,
            EncoderKind::Gru => gru,
            EncoderKind::BiGru => 2 * gru,
        }
    }

    fn width(&self, h: usize) -> usize {
        if self.encoder == EncoderKind::BiGru {
            2 * h
        } else {
            h
        }
    }

    fn encoders(&self) -> usize {
        self.enc(self.d, self.dw) + self.enc(self.width(self.dw), self.ds)
    }

    fn attention(&self) -> usize {
        let att = |input: usize| input * self.da + 2 * self.da;
        att(self.width(self.dw)) + att(self.width(self.ds))
    }

    fn classifier(&self, k: usize) -> usize {
        self.width(self.ds) * k + k
    }

    fn total(&self, scheme: SharingScheme, ks: &[usize]) -> usize {
        let m = ks.len();
        let cls: usize = ks.iter().map(|&k| self.classifier(k)).sum();
        let (e, a) = (self.encoders(), self.attention());
        match scheme {
            SharingScheme::Mono => m * (e + a) + cls,
            SharingScheme::Enc => e + m * a + cls,
            SharingScheme::Att => a + m * e + cls,
            SharingScheme::Both => e + a + cls,
        }
    }
}

const SPECIFIC_K: [usize; 8] = [1058, 809, 684, 301, 260, 814, 344, 127];
const GENERAL_K: [usize; 8] = [327, 367, 159, 95, 28, 102, 91, 71];

fn parameter_ordering() -> Result<Outcome> {
    let mut failures = Vec::new();
    let mut checked = 0;
    for encoder in [EncoderKind::Dense, EncoderKind::Gru, EncoderKind::BiGru] {
        let oracle = ShapeOracle {
            encoder,
            d: 40,
            dw: 100,
            ds: 100,
            da: 100,
        };
        for m in 2..=8 {
            for ks in [&SPECIFIC_K[..m], &GENERAL_K[..m]] {
                let configs: Vec<(String, ModelConfig)> = ks
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| {
                        (
                            format!("l{i}"),
                            ModelConfig {
                                encoder,
                                num_labels: k,
                                ..ModelConfig::default()
                            },
                        )
                    })
                    .collect();
                let mut totals = BTreeMap::new();
                for scheme in SharingScheme::ALL {
                    let (store, reg) = build_mhan::<f32>(&configs, scheme, 0)?;
                    let got = count_params(&store, &reg).total;
                    let want = oracle.total(scheme, ks);
                    if got != want {
                        failures.push(format!("{encoder:?} M={m} {scheme:?}: {got} != oracle {want}"));
                    }
                    totals.insert(scheme, got);
                }
                use SharingScheme::*;
                let ordered = if encoder == EncoderKind::Dense {
                    totals[&Mono] > totals[&Enc] && totals[&Enc] > totals[&Att] && totals[&Att] > totals[&Both]
                } else {
                    totals[&Mono] > totals[&Att] && totals[&Att] > totals[&Enc] && totals[&Enc] > totals[&Both]
                };
                if !ordered {
                    failures.push(format!("{encoder:?} M={m} ks={ks:?}: ordering violated {totals:?}"));
                }
                checked += 1;
            }
        }
    }
    let configs: Vec<(String, ModelConfig)> = (0..2)
        .map(|i| {
            (
                format!("l{i}"),
                ModelConfig {
                    num_labels: 300,
                    ..ModelConfig::default()
                },
            )
        })
        .collect();
    let mut exact = Vec::new();
    for scheme in SharingScheme::ALL {
        let (store, reg) = build_mhan::<f32>(&configs, scheme, 0)?;
        exact.push(count_params(&store, &reg).total);
    }
    if exact != [129_800, 115_600, 109_400, 95_200] {
        failures.push(format!("M=2 k=300 Dense counts {exact:?}"));
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{checked} configurations ordered and oracle-exact; M=2,k=300 Dense = {exact:?}")
        } else {
            failures.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------

fn optimization_sanity() -> Result<Outcome> {
    let mut lines = Vec::new();
    let mut pass = true;
    for strict in [true, false] {
        for seed in 0..3 {
            let (f1, loss) = overfit(seed, strict)?;
            pass &= f1 >= 0.99 && loss < 0.05;
            lines.push(format!("strict={strict} seed {seed}: F1 {f1:.4} loss {loss:.4}"));
        }
    }
    outcome(pass, format!("{} (need F1>=0.99, loss<0.05)", lines.join(", ")))
}

/// Pooled training micro-F1 and mean loss after fitting the tiny corpus.
fn overfit(seed: u64, strict_scaling: bool) -> Result<(f64, f64)> {
    let c = common::corpus(2, 50, 5, seed);
    let emb = &c.aligned;
    let data = common::language_data(&c, emb, None, seed);
    let configs: Vec<(String, ModelConfig)> = data
        .iter()
        .map(|d| {
            (
                d.lang.clone(),
                ModelConfig {
                    num_labels: d.vocab.len(),
                    strict_scaling,
                    ..ModelConfig::default()
                },
            )
        })
        .collect();
    let (mut store, reg) = build_mhan::<f64>(&configs, SharingScheme::Both, seed)?;
    let mt = MultiTaskConfig {
        languages: c.languages.clone(),
        epoch_size: 50,
        batch_size: 16,
        gammas: None,
    };
    let tc = TrainConfig {
        max_epochs: 200,
        patience: None,
        restore_best: false,
        seed,
        ..TrainConfig::default()
    };
    let policy = ThresholdPolicy::full();
    train(&mut store, &reg, emb, &data, &mt, &tc, &policy, None)?;
    let (mut tp, mut fp, mut fn_, mut loss, mut n) = (0, 0, 0, 0.0, 0);
    for d in &data {
        let e = evaluate(
            &store,
            reg.view(&d.lang)?,
            emb,
            &d.train,
            policy.threshold(d.vocab.len()),
        )?;
        tp += e.report.tp;
        fp += e.report.fp;
        fn_ += e.report.fn_;
        loss += e.loss * d.train.len() as f64;
        n += d.train.len();
    }
    Ok((2.0 * tp as f64 / (2 * tp + fp + fn_) as f64, loss / n as f64))
}

// ---------------------------------------------------------------------------

fn small_model(k: usize) -> ModelConfig {
    ModelConfig {
        encoder: EncoderKind::Gru,
        word_hidden: 8,
        sentence_hidden: 8,
        attention_dim: 6,
        num_labels: k,
        ..ModelConfig::default()
    }
}

fn sharing_semantics() -> Result<Outcome> {
    let c = common::corpus(2, 40, 4, 3);
    let emb = &c.aligned;
    let data = common::language_data(&c, emb, None, 3);
    let (l1, l2) = (data[0].lang.clone(), data[1].lang.clone());
    let configs: Vec<(String, ModelConfig)> = data
        .iter()
        .map(|d| (d.lang.clone(), small_model(d.vocab.len())))
        .collect();
    let trains: Vec<&[mhan::data::Document]> = data.iter().map(|d| d.train.as_slice()).collect();
    let batch: Vec<&mhan::data::Document> = cyclic_batch(&trains, 16, &mut mhan::rng::stream(3, "batch"))?
        .into_iter()
        .map(|(_, d)| d)
        .collect();
    let mut problems = Vec::new();

    let gammas: BTreeMap<String, f64> = [(l1.clone(), 1.0), (l2.clone(), 0.0)].into();
    for scheme in SharingScheme::MULTILINGUAL {
        let (mut store, reg) = build_mhan::<f64>(&configs, scheme, 5)?;
        let before = store.clone();
        let mut opt = Optimizer::new(OptimConfig::default())?;
        let (jl, _) = joint_step(&mut store, &reg, emb, &batch, &gammas, &mut opt)?;
        let changed = |id| store.get(id) != before.get(id);
        for id in reg.shared_ids() {
            if !changed(id) {
                problems.push(format!("{scheme:?}: shared {} unchanged", store.name(id)));
            }
        }
        for id in reg.specific_ids(&l1)? {
            if !changed(id) {
                problems.push(format!("{scheme:?}: {} unchanged", store.name(id)));
            }
        }
        for id in reg.specific_ids(&l2)? {
            if changed(id) {
                problems.push(format!("{scheme:?}: {} modified", store.name(id)));
            }
            if jl.grads.get(id).is_some_and(|g| g.iter().any(|&x| x != 0.0)) {
                problems.push(format!("{scheme:?}: {} has non-zero gradient", store.name(id)));
            }
        }
        if opt.moment_pairs() != reg.distinct_ids().len() {
            problems.push(format!("{scheme:?}: {} moment pairs", opt.moment_pairs()));
        }
    }

    // Both: shared gradient against two separate monolingual models
    let (store, reg) = build_mhan::<f64>(&configs, SharingScheme::Both, 5)?;
    let ones: BTreeMap<String, f64> = [(l1.clone(), 1.0), (l2.clone(), 1.0)].into();
    let joint = joint_loss(&store, &reg, emb, &batch, &ones)?;
    let mut summed: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (lang, cfg) in &configs {
        let (mut mono, mono_reg) = build_mhan::<f64>(&[(lang.clone(), cfg.clone())], SharingScheme::Mono, 99)?;
        let ids: Vec<_> = mono.ids().collect();
        for id in ids {
            let name = mono.name(id).to_string();
            let source = if name.contains(".classifier.") {
                name.clone()
            } else {
                name.replacen(&format!("{lang}."), "shared.", 1)
            };
            let sid = store.lookup(&source).expect("matching tensor");
            *mono.get_mut(id) = store.get(sid).clone();
        }
        let docs: Vec<_> = batch.iter().copied().filter(|d| &d.lang == lang).collect();
        let g = joint_loss(&mono, &mono_reg, emb, &docs, &[(lang.clone(), 1.0)].into())?;
        let share = docs.len() as f64 / batch.len() as f64;
        for id in mono.ids() {
            let name = mono.name(id);
            if name.contains(".classifier.") {
                continue;
            }
            let key = name.replacen(&format!("{lang}."), "shared.", 1);
            let grad = g.grads.get_or_zeros(id, mono.get(id).numel());
            let acc = summed.entry(key).or_insert_with(|| vec![0.0; grad.len()]);
            for (a, x) in acc.iter_mut().zip(grad) {
                *a += share * x;
            }
        }
    }
    let mut max_diff: f64 = 0.0;
    for id in reg.shared_ids() {
        let want = &summed[store.name(id)];
        let got = joint.grads.get_or_zeros(id, want.len());
        for (a, b) in got.iter().zip(want) {
            max_diff = max_diff.max((a - b).abs());
        }
    }
    if max_diff > 1e-10 {
        problems.push(format!("Both shared gradient differs by {max_diff:.2e}"));
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("Enc/Att/Both isolate the zero-weight language; Both gradient sum diff {max_diff:.1e}")
        } else {
            problems.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------

struct TransferResult {
    mono: Vec<f64>,
    ensemble: Vec<f64>,
}

impl TransferResult {
    fn gap(&self) -> f64 {
        mean(&self.ensemble) - mean(&self.mono)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

const TRANSFER_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn transfer_config() -> SynthConfig {
    SynthConfig {
        m: 2,
        docs_per_lang: 2000,
        k: 10,
        seed: 11,
        ..SynthConfig::default()
    }
}

fn transfer(aligned: bool) -> Result<TransferResult> {
    let c = synth_corpus(&transfer_config())?;
    let target = c.languages[1].clone();
    let auxiliary = c.languages[0].clone();
    let sweep = SweepConfig {
        target,
        auxiliary,
        points: vec![SweepPoint {
            group: "5%".into(),
            fraction: 0.05,
        }],
        seeds: TRANSFER_SEEDS.to_vec(),
        schemes: SharingScheme::MULTILINGUAL.to_vec(),
    };
    let model = ModelConfig {
        architecture: Architecture::Han,
        encoder: EncoderKind::Dense,
        ..ModelConfig::default()
    };
    let mt = MultiTaskConfig {
        epoch_size: 400,
        ..MultiTaskConfig::default()
    };
    let tc = TrainConfig {
        max_epochs: 20,
        patience: Some(4),
        ..TrainConfig::default()
    };
    let table = low_resource_sweep(
        &c.docs,
        c.embeddings(aligned),
        &common::data_config(),
        &model,
        &mt,
        &tc,
        &ThresholdPolicy::low(),
        &sweep,
    )?;
    let mut mono = Vec::new();
    let mut ensemble = Vec::new();
    for &seed in &TRANSFER_SEEDS {
        let m = table
            .runs
            .iter()
            .find(|r| r.seed == seed && r.scheme == SharingScheme::Mono)
            .expect("mono run");
        mono.push(m.test_f1);
        ensemble.push(table.ensemble_choice(0.05, seed).expect("ensemble").test_f1);
    }
    Ok(TransferResult { mono, ensemble })
}

fn fmt(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(",")
}

fn transfer_direction(aligned: &TransferResult) -> Result<Outcome> {
    let gap = aligned.gap();
    outcome(
        gap > 0.0,
        format!(
            "mean F1 ensemble {:.4} vs mono {:.4}, gap {gap:+.4} (ensemble [{}], mono [{}])",
            mean(&aligned.ensemble),
            mean(&aligned.mono),
            fmt(&aligned.ensemble),
            fmt(&aligned.mono)
        ),
    )
}

fn alignment_necessity(aligned: &TransferResult, rotated: &TransferResult) -> Result<Outcome> {
    outcome(
        rotated.gap() < aligned.gap(),
        format!(
            "gap non-aligned {:+.4} vs aligned {:+.4} (non-aligned ensemble [{}], mono [{}])",
            rotated.gap(),
            aligned.gap(),
            fmt(&rotated.ensemble),
            fmt(&rotated.mono)
        ),
    )
}

// ---------------------------------------------------------------------------

fn brute_force_f1(gold: &[Vec<usize>], pred: &[Vec<usize>], k: usize) -> (usize, usize, usize, f64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        for label in 0..k {
            match (g.contains(&label), p.contains(&label)) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
    }
    let p = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (tp, fp, fn_, f1)
}

fn evaluation_oracle() -> Result<Outcome> {
    let mut rng = mhan::rng::stream(7, "f1-oracle");
    let mut mismatches = 0;
    for _ in 0..100 {
        let k = rng.gen_range(1..12);
        let docs = rng.gen_range(0..20);
        let draw = |rng: &mut mhan::rng::Rng| -> Vec<usize> {
            let mut s: BTreeSet<usize> = BTreeSet::new();
            for l in 0..k {
                if rng.gen_bool(0.3) {
                    s.insert(l);
                }
            }
            s.into_iter().collect()
        };
        let gold: Vec<Vec<usize>> = (0..docs).map(|_| draw(&mut rng)).collect();
        let pred: Vec<Vec<usize>> = (0..docs).map(|_| draw(&mut rng)).collect();
        let r = micro_f1(&gold, &pred)?;
        if (r.tp, r.fp, r.fn_, r.f1) != brute_force_f1(&gold, &pred, k) {
            mismatches += 1;
        }
    }
    let w = micro_f1(&[vec![1, 2], vec![3]], &[vec![1], vec![3, 2]])?;
    let worked = (w.tp, w.fp, w.fn_) == (2, 1, 1) && (w.f1 - 2.0 / 3.0).abs() < 1e-15;
    outcome(
        mismatches == 0 && worked,
        format!(
            "{mismatches}/100 mismatches vs enumeration; worked example F1 {:.6}",
            w.f1
        ),
    )
}

// ---------------------------------------------------------------------------

fn protocol_fidelity() -> Result<Outcome> {
    let mut problems = Vec::new();
    let mut rng = mhan::rng::stream(1, "protocol");
    let pool: Vec<Vec<u32>> = (0..8).map(|l| (0..5).map(|i| l * 10 + i).collect()).collect();
    for m in [2usize, 8] {
        let sets: Vec<&[u32]> = pool[..m].iter().map(|v| v.as_slice()).collect();
        for _ in 0..50 {
            let batch = cyclic_batch(&sets, 16, &mut rng)?;
            for l in 0..m {
                let n = batch.iter().filter(|(x, _)| *x == l).count();
                if n != 16 / m {
                    problems.push(format!("M={m}: language {l} got {n}"));
                }
            }
        }
    }
    let sets: Vec<&[u32]> = pool[..3].iter().map(|v| v.as_slice()).collect();
    if cyclic_batch(&sets, 16, &mut rng).is_ok() {
        problems.push("16 split over 3 languages accepted".into());
    }
    let thresholds = (
        ThresholdPolicy::full().threshold(344),
        ThresholdPolicy::full().threshold(809),
        ThresholdPolicy::low().threshold(344),
    );
    if thresholds != (0.4, 0.2, 0.3) {
        problems.push(format!("thresholds {thresholds:?}"));
    }
    for n in [100usize, 1000, 57] {
        let s = split_corpus(&(0..n).collect::<Vec<_>>(), 3)?;
        if s.valid.len() != n / 10 || s.test.len() != n / 10 || s.train.len() != n - 2 * (n / 10) {
            problems.push(format!(
                "split of {n}: {}/{}/{}",
                s.train.len(),
                s.valid.len(),
                s.test.len()
            ));
        }
    }
    let grids = [
        (Tier::Tiny, [0.001, 0.002, 0.003, 0.004, 0.005]),
        (Tier::Small, [0.01, 0.02, 0.03, 0.04, 0.05]),
        (Tier::Medium, [0.1, 0.2, 0.3, 0.4, 0.5]),
    ];
    for (tier, want) in grids {
        if tier.fractions() != want {
            problems.push(format!("{tier:?} grid {:?}", tier.fractions()));
        }
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            "quotas 8/lang (M=2) and 2/lang (M=8); thresholds 0.4/0.2/0.3; 80/10/10 splits; tier grids exact".into()
        } else {
            problems.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------

fn determinism() -> Result<Outcome> {
    let dir = tempfile::tempdir().expect("temp dir");
    let c = synth_corpus(&SynthConfig {
        docs_per_lang: 60,
        k: 4,
        ..SynthConfig::default()
    })?;
    c.write(dir.path())?;
    let run = || -> Result<(Vec<u8>, Vec<u8>)> {
        let cfg = RunConfig {
            corpus: Some(dir.path().join(mhan::data::synth::CORPUS_FILE)),
            embeddings: Some(dir.path().join(mhan::data::synth::EMBEDDINGS_FILE)),
            out: dir.path().join("run"),
            sharing: SharingScheme::Both,
            model: ModelConfig {
                encoder: EncoderKind::BiGru,
                word_hidden: 10,
                sentence_hidden: 10,
                attention_dim: 8,
                ..ModelConfig::default()
            },
            data: common::data_config(),
            multitask: MultiTaskConfig {
                epoch_size: 48,
                ..MultiTaskConfig::default()
            },
            train: TrainConfig {
                max_epochs: 3,
                ..TrainConfig::default()
            },
            seed: 21,
            ..RunConfig::default()
        };
        train_run(&cfg)?;
        let read = |f: &str| std::fs::read(cfg.out.join(f)).expect("artifact");
        Ok((read(CHECKPOINT_FILE), read(LOG_FILE)))
    };
    let a = run()?;
    let b = run()?;
    let lines = String::from_utf8_lossy(&a.1).lines().count();
    outcome(
        a == b,
        format!(
            "checkpoint {} bytes, log {lines} epochs; identical: checkpoint {}, log {}",
            a.0.len(),
            a.0 == b.0,
            a.1 == b.1
        ),
    )
}

// ---------------------------------------------------------------------------

fn main() {
    let only: Option<BTreeSet<String>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').map(|x| x.trim().to_uppercase()).collect());
    let wanted = |id: &str| only.as_ref().is_none_or(|s| s.contains(id));
    let mut failed = Vec::new();
    let mut report = |id: &str, title: &str, started: Instant, r: Result<Outcome>| {
        let secs = started.elapsed().as_secs_f64();
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "{id} {} {title}: {detail} [{secs:.1}s]",
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            failed.push(id.to_string());
        }
    };

    let simple: [(&str, &str, fn() -> Result<Outcome>); 6] = [
        ("A1", "gradient correctness", gradients),
        ("A2", "parameter-count ordering", parameter_ordering),
        ("A3", "optimization sanity", optimization_sanity),
        ("A4", "sharing semantics", sharing_semantics),
        ("A7", "evaluation oracle", evaluation_oracle),
        ("A8", "protocol fidelity", protocol_fidelity),
    ];
    for (id, title, f) in &simple[..4] {
        if wanted(id) {
            let t = Instant::now();
            report(id, title, t, f());
        }
    }
    if wanted("A5") || wanted("A6") {
        let t = Instant::now();
        let aligned = transfer(true);
        if wanted("A5") {
            report(
                "A5",
                "transfer direction",
                t,
                aligned.as_ref().map_err(clone_err).and_then(transfer_direction),
            );
        }
        if wanted("A6") {
            let t = Instant::now();
            let r = match (&aligned, transfer(false)) {
                (Ok(a), Ok(b)) => alignment_necessity(a, &b),
                (Err(e), _) => Err(clone_err(e)),
                (_, Err(e)) => Err(e),
            };
            report("A6", "alignment necessity", t, r);
        }
    }
    for (id, title, f) in &simple[4..] {
        if wanted(id) {
            let t = Instant::now();
            report(id, title, t, f());
        }
    }
    if wanted("A9") {
        let t = Instant::now();
        report("A9", "determinism", t, determinism());
    }
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}

fn clone_err(e: &mhan::Error) -> mhan::Error {
    mhan::Error::Data(e.to_string())
}
