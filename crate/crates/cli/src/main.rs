//! `mhan` command-line interface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mhan::data::{synth_corpus, LabelType, SynthConfig, Tier};
use mhan::gradcheck::{check_han, GradCheckReport, HanCheckCase};
use mhan::layers::EncoderKind;
use mhan::model::Architecture;
use mhan::multitask::{ParamCounts, SharingScheme};
use mhan::pipeline::{self, RunConfig, RunSummary, SplitName, SUMMARY_FILE};
use mhan::train::{OptimizerKind, ThresholdMode};
use mhan::Activation;

#[derive(Parser)]
#[command(name = "mhan", version, about = "Multilingual hierarchical attention networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and evaluate it on the test split.
    Train(RunArgs),
    /// Score a checkpoint on one split.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "test")]
        split: SplitName,
    },
    /// Write label predictions of a checkpoint as JSON lines.
    Predict {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "test")]
        split: SplitName,
        /// Include word and sentence attention weights.
        #[arg(long)]
        attention: bool,
    },
    /// Count parameters of every sharing scheme (or the one given).
    CountParams {
        #[command(flatten)]
        run: RunArgs,
        /// Number of languages.
        #[arg(long = "langs", default_value_t = 2)]
        num_langs: usize,
        /// Label counts, one per language or a single value for all.
        #[arg(long, value_delimiter = ',', default_value = "300")]
        k: Vec<usize>,
    },
    /// Compare analytic and numeric gradients on random HAN problems.
    GradCheck {
        #[command(flatten)]
        run: RunArgs,
        /// Number of random cases per encoder.
        #[arg(long, default_value_t = 10)]
        cases: u64,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 5)]
        max_dim: usize,
        #[arg(long, default_value_t = 4)]
        max_len: usize,
    },
    /// Export document vectors of a checkpoint as TSV.
    ExportVectors {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "test")]
        split: SplitName,
    },
    /// Generate a synthetic corpus with aligned and rotated embeddings.
    SynthCorpus {
        #[arg(long, default_value = "synth")]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Documents per language.
        #[arg(long, default_value_t = 200)]
        docs: usize,
        /// Embedding width.
        #[arg(long, default_value_t = 40)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Store the rotated table as `embeddings.txt`.
        #[arg(long)]
        non_aligned: bool,
    },
    /// Low-resource transfer sweep over training fractions of a target language.
    LowResourceSweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        auxiliary: Option<String>,
        #[arg(long, value_delimiter = ',')]
        tiers: Option<Vec<Tier>>,
        /// Extra fractions, each reported as its own group.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

/// Flags shared by every run; each overrides the config file.
#[derive(Args, Clone, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Languages in model order.
    #[arg(long, value_delimiter = ',')]
    languages: Option<Vec<String>>,
    #[arg(long)]
    sharing: Option<SharingScheme>,
    #[arg(long)]
    architecture: Option<Architecture>,
    #[arg(long)]
    encoder: Option<EncoderKind>,
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    strict_scaling: Option<bool>,
    /// Scale by padded grid lengths rather than effective lengths.
    #[arg(long)]
    constant_lengths: Option<bool>,
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Word and sentence encoder width.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    attention_dim: Option<usize>,
    #[arg(long)]
    labels: Option<LabelType>,
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    threshold_mode: Option<ThresholdMode>,
    /// Fixed decision threshold.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    fraction_language: Option<String>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epoch_size: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_json_file(p).with_context(|| format!("config {}", p.display()))?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:tt)+) => {
                if let Some(v) = self.$flag.clone() {
                    $($field)+ = v;
                }
            };
        }
        set!(seed => c.seed);
        set!(out => c.out);
        set!(languages => c.languages);
        set!(sharing => c.sharing);
        set!(architecture => c.model.architecture);
        set!(encoder => c.model.encoder);
        set!(activation => c.model.activation);
        set!(strict_scaling => c.model.strict_scaling);
        set!(constant_lengths => c.model.constant_lengths);
        set!(embed_dim => c.model.embed_dim);
        set!(attention_dim => c.model.attention_dim);
        set!(labels => c.data.labels);
        set!(min_count => c.data.min_count);
        set!(threshold_mode => c.threshold.mode);
        set!(optimizer => c.train.optimizer.kind);
        set!(lr => c.train.optimizer.lr);
        set!(epochs => c.train.max_epochs);
        set!(batch_size => c.multitask.batch_size);
        set!(epoch_size => c.multitask.epoch_size);
        if let Some(h) = self.hidden {
            c.model.word_hidden = h;
            c.model.sentence_hidden = h;
        }
        if self.corpus.is_some() {
            c.corpus = self.corpus.clone();
        }
        if self.embeddings.is_some() {
            c.embeddings = self.embeddings.clone();
        }
        if self.checkpoint.is_some() {
            c.checkpoint = self.checkpoint.clone();
        }
        if self.threshold.is_some() {
            c.threshold.threshold = self.threshold;
        }
        if self.fraction.is_some() {
            c.fraction = self.fraction;
        }
        if self.fraction_language.is_some() {
            c.fraction_language = self.fraction_language.clone();
        }
        if self.clip_norm.is_some() {
            c.train.optimizer.clip_norm = self.clip_norm;
        }
        if self.patience.is_some() {
            c.train.patience = self.patience;
        }
        if let Some(f) = c.fraction {
            if !(f > 0.0 && f <= 1.0) {
                bail!("fraction must lie in (0, 1], got {f}");
            }
        }
        c.model.validate()?;
        c.train.optimizer.validate()?;
        Ok(c)
    }

    /// Without `--checkpoint`, reads the checkpoint in the output directory
    /// and writes into a `command` subdirectory of it.
    fn with_checkpoint(&self, command: &str) -> Result<RunConfig> {
        let mut c = self.config()?;
        if c.checkpoint.is_none() {
            let fallback = c.out.join(pipeline::CHECKPOINT_FILE);
            if !fallback.exists() {
                bail!("no --checkpoint given and {} does not exist", fallback.display());
            }
            c.checkpoint = Some(fallback);
            c.out = c.out.join(command);
        }
        Ok(c)
    }
}

fn thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn print_summary(s: &RunSummary) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(s)?);
    Ok(())
}

fn write_summary(dir: &Path, s: &RunSummary) -> Result<()> {
    pipeline::write_json(&dir.join(SUMMARY_FILE), s)?;
    Ok(())
}

fn count_params(run: &RunArgs, num_langs: usize, k: &[usize]) -> Result<()> {
    let cfg = run.config()?;
    if num_langs == 0 {
        bail!("--langs must be positive");
    }
    let ks = match k {
        [one] => vec![*one; num_langs],
        many if many.len() == num_langs => many.to_vec(),
        _ => bail!("--k needs one value or {num_langs} values, got {}", k.len()),
    };
    let schemes = match run.sharing {
        Some(s) => vec![s],
        None => SharingScheme::ALL.to_vec(),
    };
    let (counts, _) = pipeline::count_params_run(&cfg, &ks, &schemes)?;
    println!(
        "{:<6} {:>12} {:>12} {:>14}",
        "scheme", "total", "shared", "per language"
    );
    for ParamCounts {
        scheme,
        total,
        shared,
        average_per_language,
        ..
    } in &counts
    {
        println!(
            "{:<6} {:>12} {:>12} {:>14.1}",
            scheme.as_str(),
            thousands(*total),
            thousands(*shared),
            average_per_language
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct GradCheckCaseResult {
    case: HanCheckCase,
    report: GradCheckReport,
}

fn grad_check(run: &RunArgs, cases: u64, eps: f64, tolerance: f64, max_dim: usize, max_len: usize) -> Result<()> {
    let started = Instant::now();
    let cfg = run.config()?;
    let encoders = match run.encoder {
        Some(e) => vec![e],
        None => vec![EncoderKind::Dense, EncoderKind::Gru, EncoderKind::BiGru],
    };
    let mut results = Vec::new();
    for &encoder in &encoders {
        let mut worst = 0.0f64;
        for i in 0..cases {
            let case = HanCheckCase::random(encoder, cfg.seed.wrapping_add(i), max_dim, max_len);
            let report = check_han(&case, eps)?;
            worst = worst.max(report.max_rel_error);
            results.push(GradCheckCaseResult { case, report });
        }
        println!(
            "{:<6} max relative error {worst:.3e} over {cases} cases",
            encoder.as_str()
        );
    }
    let max = results.iter().map(|r| r.report.max_rel_error).fold(0.0, f64::max);
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("create {}", cfg.out.display()))?;
    pipeline::write_json(&cfg.out.join("gradcheck.json"), &results)?;
    let mut summary = RunSummary::new("grad-check");
    summary.wall_seconds = started.elapsed().as_secs_f64();
    write_summary(&cfg.out, &summary)?;
    if !(max < tolerance) {
        bail!("max relative error {max:.3e} exceeds {tolerance:.0e}");
    }
    Ok(())
}

/// Starting config for training on a generated corpus.
const RUN_CONFIG_FILE: &str = "run_config.json";

fn synth(config: SynthConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    let corpus = synth_corpus(&config)?;
    corpus.write(out)?;
    pipeline::write_json(&out.join("synth_config.json"), &config)?;
    let mut run = RunConfig {
        corpus: Some(out.join(mhan::data::synth::CORPUS_FILE)),
        embeddings: Some(out.join(mhan::data::synth::EMBEDDINGS_FILE)),
        languages: corpus.languages.clone(),
        ..RunConfig::default()
    };
    run.model.embed_dim = config.d;
    run.data.min_count = 1;
    pipeline::write_json(&out.join(RUN_CONFIG_FILE), &run)?;
    let mut summary = RunSummary::new("synth-corpus");
    summary.wall_seconds = started.elapsed().as_secs_f64();
    write_summary(out, &summary)?;
    println!(
        "wrote {} documents in {} languages to {}",
        corpus.docs.len(),
        corpus.languages.len(),
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(run) => print_summary(&pipeline::train_run(&run.config()?)?),
        Command::Evaluate { run, split } => {
            print_summary(&pipeline::evaluate_run(&run.with_checkpoint("evaluate")?, split)?)
        }
        Command::Predict { run, split, attention } => print_summary(&pipeline::predict_run(
            &run.with_checkpoint("predict")?,
            split,
            attention,
        )?),
        Command::ExportVectors { run, split } => print_summary(&pipeline::export_vectors_run(
            &run.with_checkpoint("export-vectors")?,
            split,
        )?),
        Command::CountParams { run, num_langs, k } => count_params(&run, num_langs, &k),
        Command::GradCheck {
            run,
            cases,
            eps,
            tolerance,
            max_dim,
            max_len,
        } => grad_check(&run, cases, eps, tolerance, max_dim, max_len),
        Command::SynthCorpus {
            out,
            m,
            k,
            docs,
            d,
            seed,
            non_aligned,
        } => synth(
            SynthConfig {
                m,
                k,
                docs_per_lang: docs,
                d,
                seed,
                aligned: !non_aligned,
                ..SynthConfig::default()
            },
            &out,
        ),
        Command::LowResourceSweep {
            run,
            target,
            auxiliary,
            tiers,
            fractions,
            seeds,
        } => {
            let mut cfg = run.config()?;
            if target.is_some() {
                cfg.sweep.target = target;
            }
            if auxiliary.is_some() {
                cfg.sweep.auxiliary = auxiliary;
            }
            if let Some(t) = tiers {
                cfg.sweep.tiers = t;
            }
            if let Some(f) = fractions {
                cfg.sweep.fractions = f;
            }
            if let Some(s) = seeds {
                cfg.sweep.seeds = s;
            }
            let (table, summary) = pipeline::sweep_run(&cfg)?;
            for g in &table.groups {
                println!(
                    "{:<8} mono {:.4} ensemble {:.4} [{:.4}, {:.4}]",
                    g.group, g.mono.mean, g.ensemble.mean, g.ensemble.min, g.ensemble.max
                );
            }
            print_summary(&summary)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
