//! File-level entry points behind the command-line tool. Each writes its
//! outputs deterministically from its arguments.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::features::{CaptureMode, CaptureSpec, Feature, FeatureError, FeatureMask, SnapshotDataset};
use crate::harness::{
    self, ablate_feature, ablation_sweep, baseline_val_mse, generate_corpus, reduce_and_retrain, run_bgt, run_omt,
    summarize, ConfigGrid, Contender, CorpusOptions, CorpusReport, HarnessError, ScheduleVariation, TestKind,
    TrialOptions, TrialSet,
};
use crate::model::{fit_model, ModelError, TrainedModel};
use crate::neural::{write_history_csv, TrainConfig};
use crate::session::ModelSet;
use crate::traders::StrategyTag;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "DEEPTRADER_WORKERS";

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io { path: path.to_path_buf(), source }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CommandError> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(io_err(path))
}

fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CommandError> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?))
}

fn create_dir(path: &Path) -> Result<(), CommandError> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

/// Worker count from the environment, if set to a positive integer.
pub fn workers_from_env() -> Result<Option<usize>, CommandError> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CommandError::Invalid(format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

#[derive(Debug, Clone)]
pub struct GenDataArgs {
    pub out_dir: PathBuf,
    pub pool: Vec<StrategyTag>,
    pub seeds_per_config: u64,
    pub scale: f64,
    pub seed: u64,
    pub capture_mode: CaptureMode,
    pub filter: Option<StrategyTag>,
    pub variation: ScheduleVariation,
}

impl Default for GenDataArgs {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("corpus"),
            pool: StrategyTag::BASELINES.to_vec(),
            seeds_per_config: harness::PAPER_SEEDS_PER_CONFIG,
            scale: 1.0,
            seed: 0,
            capture_mode: CaptureMode::Trade,
            filter: None,
            variation: ScheduleVariation::Varied,
        }
    }
}

pub fn gen_data(args: &GenDataArgs) -> Result<CorpusReport, CommandError> {
    let options = CorpusOptions {
        grid: ConfigGrid { pool: args.pool.clone(), seeds_per_config: args.seeds_per_config, ..Default::default() },
        scale: args.scale,
        base_seed: args.seed,
        capture: CaptureSpec { mode: args.capture_mode, filter: args.filter },
        variation: args.variation,
    };
    create_dir(&args.out_dir)?;
    let (_, report) = generate_corpus(&options, &args.out_dir)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub dataset: PathBuf,
    pub mask: FeatureMask,
    pub train: TrainConfig,
    pub capture_mode: CaptureMode,
    pub rho: f64,
    pub model_out: PathBuf,
    /// Defaults to the model path with a `.history.csv` suffix.
    pub history_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub rows: usize,
    pub epochs: usize,
    pub first_train_mse: f64,
    pub final_train_mse: f64,
    pub final_val_mse: f64,
    pub degenerate_target: bool,
}

fn load_dataset(path: &Path) -> Result<SnapshotDataset, CommandError> {
    SnapshotDataset::load(path).map_err(|e| match e {
        FeatureError::Io(source) => CommandError::Io { path: path.to_path_buf(), source },
        other => other.into(),
    })
}

pub fn history_path(model_out: &Path) -> PathBuf {
    let mut name = model_out.file_stem().unwrap_or_default().to_os_string();
    name.push(".history.csv");
    model_out.with_file_name(name)
}

pub fn train(args: &TrainArgs) -> Result<TrainSummary, CommandError> {
    let dataset = load_dataset(&args.dataset)?;
    let (model, report) = fit_model(&dataset.rows, &args.mask, args.capture_mode, args.rho, &args.train)?;
    model.save(&args.model_out)?;
    let history_out = args.history_out.clone().unwrap_or_else(|| history_path(&args.model_out));
    let mut out = create_file(&history_out)?;
    write_history_csv(&report.history, &mut out).map_err(io_err(&history_out))?;
    let first = report.history.first().map_or(f64::NAN, |e| e.train_mse);
    let last = report.history.last().map_or(f64::NAN, |e| e.train_mse);
    Ok(TrainSummary {
        rows: dataset.len(),
        epochs: report.history.len(),
        first_train_mse: first,
        final_train_mse: last,
        final_val_mse: report.final_val_mse,
        degenerate_target: report.degenerate_target,
    })
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub model: PathBuf,
    pub kind: TestKind,
    pub opponent: StrategyTag,
    pub trials: usize,
    pub seed: u64,
    pub single_invader: bool,
    pub report_dir: PathBuf,
}

/// Writes `trialset.json`, `samples.csv` and `summary.json`.
fn write_trial_reports(set: &TrialSet, dir: &Path) -> Result<(), CommandError> {
    create_dir(dir)?;
    write_json(&dir.join("trialset.json"), set)?;
    let path = dir.join("samples.csv");
    let mut out = create_file(&path)?;
    set.write_samples_csv(&mut out).map_err(io_err(&path))?;
    write_summary(set, dir)
}

#[derive(Debug, Clone, Serialize)]
struct SummaryFile<'a> {
    kind: TestKind,
    n_trials: usize,
    significant: bool,
    strategies: Vec<(&'a str, &'a harness::SampleSummary)>,
}

fn write_summary(set: &TrialSet, dir: &Path) -> Result<(), CommandError> {
    let summary = SummaryFile {
        kind: set.kind,
        n_trials: set.n_trials,
        significant: set.significant(),
        strategies: vec![(&set.strategy_a, &set.summary_a), (&set.strategy_b, &set.summary_b)],
    };
    write_json(&dir.join("summary.json"), &summary)?;
    let path = dir.join("summary.csv");
    let mut out = create_file(&path)?;
    let write = |out: &mut dyn std::io::Write| -> std::io::Result<()> {
        writeln!(out, "strategy,n,mean,variance,ci90_low,ci90_high,median,q1,q3,iqr,n_outliers")?;
        for (name, s) in &summary.strategies {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                name,
                s.n,
                s.mean,
                s.variance,
                s.ci90_low,
                s.ci90_high,
                s.median,
                s.q1,
                s.q3,
                s.iqr,
                s.outliers.len()
            )?;
        }
        out.flush()
    };
    write(&mut out).map_err(io_err(&path))
}

pub fn evaluate(args: &EvaluateArgs) -> Result<TrialSet, CommandError> {
    let model = TrainedModel::load(&args.model)?;
    let mut models = ModelSet::new();
    models.insert("model", Arc::new(model));
    let dtr = Contender::dtr("model");
    let opponent = Contender::baseline(args.opponent);
    let opponent =
        if args.opponent == StrategyTag::Dtr { opponent.labelled("DTR-B").with_model("model") } else { opponent };
    let options = TrialOptions {
        n_trials: args.trials,
        base_seed: args.seed,
        single_invader: args.single_invader,
        ..Default::default()
    };
    let set = match args.kind {
        TestKind::Bgt => run_bgt(&dtr, &opponent, &options, &models)?,
        TestKind::Omt => run_omt(&dtr, &opponent, &options, &models)?,
    };
    write_trial_reports(&set, &args.report_dir)?;
    Ok(set)
}

#[derive(Debug, Clone)]
pub struct AblateArgs {
    pub dataset: PathBuf,
    pub mask: FeatureMask,
    /// A single feature; `None` sweeps every active feature.
    pub feature: Option<Feature>,
    /// Also retrain on this reduced mask and compare.
    pub keep: Option<FeatureMask>,
    pub train: TrainConfig,
    pub report_dir: PathBuf,
}

pub fn ablate(args: &AblateArgs) -> Result<(), CommandError> {
    let dataset = load_dataset(&args.dataset)?;
    create_dir(&args.report_dir)?;
    match args.feature {
        Some(feature) => {
            let baseline = baseline_val_mse(&dataset.rows, &args.mask, &args.train)?;
            let result = ablate_feature(&dataset.rows, &args.mask, feature, &args.train, baseline)?;
            write_json(&args.report_dir.join("ablation.json"), &(baseline, result))?;
        }
        None => {
            let report = ablation_sweep(&dataset.rows, &args.mask, &args.train)?;
            write_json(&args.report_dir.join("ablation.json"), &report)?;
            let path = args.report_dir.join("ablation.csv");
            let mut out = create_file(&path)?;
            report.write_csv(&mut out).map_err(io_err(&path))?;
        }
    }
    if let Some(keep) = &args.keep {
        let (model, report) = reduce_and_retrain(&dataset.rows, &args.mask, keep, &args.train)?;
        write_json(&args.report_dir.join("reduction.json"), &report)?;
        model.save(&args.report_dir.join("reduced_model.json"))?;
    }
    Ok(())
}

/// Recomputes summary statistics from a saved trial set.
pub fn report(trialset: &Path, out_dir: &Path) -> Result<TrialSet, CommandError> {
    let text = std::fs::read_to_string(trialset).map_err(io_err(trialset))?;
    let mut set: TrialSet = serde_json::from_str(&text)?;
    set.summary_a = summarize(&set.appt_a())?;
    set.summary_b = summarize(&set.appt_b())?;
    create_dir(out_dir)?;
    write_summary(&set, out_dir)?;
    Ok(set)
}
