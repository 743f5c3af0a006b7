//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{read_manifest, synth_generate, write_file, write_manifest, Dataset, EngagementLevel, ModalityTag, SynthConfig, VideoSample, DEFAULT_SEGMENTS};
use crate::error::{Error, Result};
use crate::evalens::{ensemble, evaluate, read_predictions, write_predictions, write_report, PredictionSet, Provenance};
use crate::splits::{bootstrap_resample, make_splits, read_split, write_split, SplitOptions, DEFAULT_SPLITS, OFFICIAL_RATIO};
use crate::training::train_modality;
use crate::verify::{run_suite, Suite};

pub const LOG_ENV: &str = "ENGAGE_MIL_LOG";

#[derive(Debug, Parser)]
#[command(name = "engage-mil", version, about = "Engagement intensity regression from video features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known engagement structure.
    Synth(SynthArgs),
    /// Write subject-disjoint train/validation splits.
    Split(SplitArgs),
    /// Train one modality's model on a split.
    Train(TrainArgs),
    /// Score videos with a trained checkpoint.
    Predict(PredictArgs),
    /// Average prediction files.
    Ensemble(EnsembleArgs),
    /// Score predictions against dataset labels.
    Eval(EvalArgs),
    /// Run built-in correctness checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub subjects: usize,
    #[arg(long, default_value_t = 20)]
    pub videos_per_subject: usize,
    #[arg(long, default_value_t = DEFAULT_SEGMENTS)]
    pub k: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 5.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SPLITS)]
    pub n: usize,
    #[arg(long, default_value_t = OFFICIAL_RATIO)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub modality: ModalityTag,
    /// JSON run configuration; absent keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr0: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub h1: Option<usize>,
    #[arg(long)]
    pub h2: Option<usize>,
    #[arg(long)]
    pub lambda_crl: Option<f64>,
    /// Train on a bootstrap resample of the split's training side.
    #[arg(long)]
    pub bootstrap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Train,
    Val,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Restrict to one side of this split.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "val")]
    pub side: Side,
}

#[derive(Debug, Args, Serialize)]
pub struct EnsembleArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Comma-separated member weights; uniform when absent.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Evaluate only the validation side of this split.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Snap predictions to the nearest engagement level first.
    #[arg(long)]
    pub quantize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum SuiteArg {
    Grad,
    LossOracle,
    Splits,
    Jensen,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub suite: SuiteArg,
}

pub fn init_logging() {
    let level = match std::env::var(LOG_ENV).as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Warn,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
}

fn echo<T: Serialize>(command: &str, resolved: &T) {
    println!(
        "{command} config: {}",
        serde_json::to_string(resolved).expect("config serializes")
    );
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Split(a) => cmd_split(&a).map(|_| ()),
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Ensemble(a) => cmd_ensemble(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Verify(a) => cmd_verify(&a),
    }
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    echo("synth", args);
    let cfg = SynthConfig {
        n_subjects: args.subjects,
        videos_per_subject: args.videos_per_subject,
        k: args.k,
        frame_rate_hint: args.fps,
        noise_scale: args.noise,
    };
    let dataset = synth_generate(&cfg, args.seed)?;
    let manifest = write_manifest(&dataset, &args.out)?;
    let counts = dataset.level_counts();
    for level in EngagementLevel::ALL {
        println!("{:<3} {:>5}", level.short_name(), counts[level.index()]);
    }
    println!("wrote {} videos to {}", dataset.len(), manifest.display());
    Ok(())
}

pub fn cmd_split(args: &SplitArgs) -> Result<Vec<PathBuf>> {
    echo("split", args);
    let dataset = read_manifest(&args.data)?;
    let specs = make_splits(
        &dataset,
        &SplitOptions {
            n_splits: args.n,
            ratio: args.ratio,
            seed: args.seed,
            ..SplitOptions::default()
        },
    )?;
    let mut paths = Vec::with_capacity(specs.len());
    for spec in &specs {
        let path = args.out.join(format!("{}.json", spec.name));
        write_split(spec, &path)?;
        println!(
            "{}: {} train / {} val ({:.4})",
            spec.name,
            spec.train_ids.len(),
            spec.val_ids.len(),
            spec.train_fraction()
        );
        paths.push(path);
    }
    Ok(paths)
}

/// Defaults, then the config file, then flags.
pub fn resolve_train_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    apply!(epochs, seed, lr0, batch_size, hidden_dim, h1, h2, lambda_crl);
    if args.bootstrap {
        cfg.bootstrap = true;
    }
    Ok(cfg)
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let run = resolve_train_config(args)?;
    let cfg = run.train_config()?;
    echo("train", &run);
    let dataset = read_manifest(&args.data)?;
    let split = read_split(&args.split)?;
    split.validate(&dataset)?;
    if let Some(s) = dataset.samples().iter().find(|s| s.k() != run.k) {
        log::warn!("video `{}` has {} segments, config says {}", s.video_id(), s.k(), run.k);
    }

    let mut train_ids: Vec<String> = split.train_ids.iter().cloned().collect();
    if run.bootstrap {
        train_ids = bootstrap_resample(&train_ids, run.seed ^ 0xb007_57a9)?;
    }
    let train = dataset.select(train_ids.iter().map(String::as_str))?;
    let val = dataset.select(split.val_ids.iter().map(String::as_str))?;
    for s in train.iter().chain(&val) {
        s.features(args.modality)?;
    }
    log::info!(
        "training {} on {} videos, validating on {}",
        args.modality,
        train.len(),
        val.len()
    );
    let outcome = train_modality(&train, &val, args.modality, &cfg)?;

    let checkpoint = Checkpoint {
        model: outcome.model,
        center_bank: Some(outcome.bank),
        config: Some(cfg),
    };
    checkpoint.save(&args.out.join("checkpoint.json"))?;
    write_file(&args.out.join("history.csv"), outcome.history.to_csv().as_bytes())?;
    write_file(&args.out.join("config.json"), format!("{}\n", run.to_json()).as_bytes())?;
    if let Some(last) = outcome.history.epochs.last() {
        println!(
            "final epoch {}: train_loss {:.6} val_mse {:.6}",
            last.epoch, last.train_loss, last.val_mse
        );
    }
    Ok(())
}

fn split_side(dataset: &Dataset, split: Option<&Path>, side: Side) -> Result<Vec<String>> {
    match split {
        None => Ok(dataset.samples().iter().map(|s| s.video_id().to_string()).collect()),
        Some(path) => {
            let spec = read_split(path)?;
            spec.validate(dataset)?;
            let ids = match side {
                Side::Train => spec.train_ids,
                Side::Val => spec.val_ids,
            };
            Ok(ids.into_iter().collect())
        }
    }
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    echo("predict", args);
    let dataset = read_manifest(&args.data)?;
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let model = &checkpoint.model;
    let ids = split_side(&dataset, args.split.as_deref(), args.side)?;
    let samples: Vec<&VideoSample> = dataset.select(ids.iter().map(String::as_str))?;
    let predictions = samples
        .iter()
        .map(|s| Ok((s.video_id().to_string(), model.predict_video(s)?)))
        .collect::<Result<_>>()?;
    let set = PredictionSet::new(predictions)?.with_provenance(Provenance {
        modality: Some(model.modality().to_string()),
        split: args.split.as_ref().map(|p| p.display().to_string()),
        checkpoint: Some(args.checkpoint.display().to_string()),
    });
    write_predictions(&set, &args.out)?;
    println!("wrote {} predictions to {}", set.len(), args.out.display());
    Ok(())
}

pub fn cmd_ensemble(args: &EnsembleArgs) -> Result<()> {
    echo("ensemble", args);
    let sets = args
        .inputs
        .iter()
        .map(|p| read_predictions(p))
        .collect::<Result<Vec<_>>>()?;
    let combined = ensemble(&sets, args.weights.as_deref())?;
    write_predictions(&combined, &args.out)?;
    println!(
        "averaged {} members over {} videos into {}",
        sets.len(),
        combined.len(),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    echo("eval", args);
    let dataset = read_manifest(&args.data)?;
    let predictions = read_predictions(&args.predictions)?;
    let scored = match &args.split {
        Some(_) => {
            let ids = split_side(&dataset, args.split.as_deref(), Side::Val)?;
            dataset.subset(ids.iter().map(String::as_str))?
        }
        None => dataset,
    };
    let report = evaluate(&predictions, &scored, args.quantize)?;
    write_report(&report, &args.out)?;
    print!("{}", report.table());
    Ok(())
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    echo("verify", args);
    let suite = match args.suite {
        SuiteArg::Grad => Suite::Grad,
        SuiteArg::LossOracle => Suite::LossOracle,
        SuiteArg::Splits => Suite::Splits,
        SuiteArg::Jensen => Suite::Jensen,
        SuiteArg::All => Suite::All,
    };
    let checks = run_suite(suite)?;
    let mut failed = Vec::new();
    for c in &checks {
        let tag = match (c.passed, c.informational) {
            (true, _) => "PASS",
            (false, true) => "INFO",
            (false, false) => "FAIL",
        };
        println!("{tag} {}: {}", c.name, c.detail);
        if !c.passed && !c.informational {
            failed.push(c.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::VerificationFailed(failed))
    }
}
