use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use deeptrader::commands::{self, AblateArgs, EvaluateArgs, GenDataArgs, TrainArgs};
use deeptrader::features::{CaptureMode, Feature, FeatureMask};
use deeptrader::harness::{ScheduleVariation, TestKind};
use deeptrader::neural::TrainConfig;
use deeptrader::traders::StrategyTag;

#[derive(Parser)]
#[command(name = "deeptrader", version, about = "Market simulator and deep-learning trader")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Capture {
    Trade,
    Quote,
}

impl From<Capture> for CaptureMode {
    fn from(c: Capture) -> Self {
        match c {
            Capture::Trade => CaptureMode::Trade,
            Capture::Quote => CaptureMode::Quote,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Variation {
    Fixed,
    Varied,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Bgt,
    Omt,
}

fn parse_tag(s: &str) -> Result<StrategyTag, String> {
    s.to_ascii_uppercase().parse().map_err(|e| format!("{e}"))
}

fn parse_mask(s: &str) -> Result<FeatureMask, String> {
    FeatureMask::parse_list(s).map_err(|e| e.to_string())
}

fn parse_feature(s: &str) -> Result<Feature, String> {
    s.parse().map_err(|e: deeptrader::features::FeatureError| e.to_string())
}

#[derive(clap::Args)]
struct TrainOpts {
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 16384)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    validation_fraction: f64,
    #[arg(long, default_value_t = 1)]
    sequence_length: usize,
}

impl TrainOpts {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            sequence_length: self.sequence_length,
            seed,
            validation_fraction: self.validation_fraction,
            learning_rate: self.learning_rate,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the configuration grid and write a snapshot corpus.
    GenData {
        #[arg(long, default_value = "corpus")]
        out: PathBuf,
        /// Fraction of the planned sessions to run.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 32)]
        seeds_per_config: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "trade")]
        capture: Capture,
        /// Keep only rows initiated by this strategy.
        #[arg(long, value_parser = parse_tag)]
        filter: Option<StrategyTag>,
        #[arg(long, value_enum, default_value = "varied")]
        variation: Variation,
    },
    /// Train a model on a corpus.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// `all`, `reduced` or a list such as `f2,f3,f4`.
        #[arg(long, default_value = "all", value_parser = parse_mask)]
        mask: FeatureMask,
        #[command(flatten)]
        opts: TrainOpts,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "trade")]
        capture: Capture,
        #[arg(long, default_value_t = 0.9)]
        rho: f64,
        #[arg(long, default_value = "model.json")]
        model_out: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Run balanced-group or one-in-many trials against a baseline.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "bgt")]
        mode: Mode,
        #[arg(long, value_parser = parse_tag)]
        opponent: StrategyTag,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// One-in-many only: a single invading buyer.
        #[arg(long)]
        single_invader: bool,
        #[arg(long, default_value = "report")]
        report: PathBuf,
    },
    /// Permutation feature importance on a corpus.
    Ablate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "all", value_parser = parse_mask)]
        mask: FeatureMask,
        /// Ablate one feature instead of sweeping all.
        #[arg(long, value_parser = parse_feature)]
        feature: Option<Feature>,
        /// Retrain on this mask and compare with the baseline.
        #[arg(long, value_parser = parse_mask)]
        keep: Option<FeatureMask>,
        #[command(flatten)]
        opts: TrainOpts,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "ablation")]
        report: PathBuf,
    },
    /// Recompute summary statistics from a saved trial set.
    Report {
        #[arg(long)]
        trialset: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
        /// Accepted for uniformity; reports are not random.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = commands::workers_from_env()? {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("building worker pool")?;
    }
    match cli.command {
        Command::GenData { out, scale, seeds_per_config, seed, capture, filter, variation } => {
            let report = commands::gen_data(&GenDataArgs {
                out_dir: out,
                seeds_per_config,
                scale,
                seed,
                capture_mode: capture.into(),
                filter,
                variation: match variation {
                    Variation::Fixed => ScheduleVariation::Fixed,
                    Variation::Varied => ScheduleVariation::Varied,
                },
                ..Default::default()
            })?;
            println!(
                "planned {} executed {} skipped {} failed {} rows {}",
                report.planned, report.executed, report.skipped, report.failed, report.rows
            );
        }
        Command::Train { dataset, mask, opts, seed, capture, rho, model_out, history } => {
            let s = commands::train(&TrainArgs {
                dataset,
                mask,
                train: opts.config(seed),
                capture_mode: capture.into(),
                rho,
                model_out,
                history_out: history,
            })?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Evaluate { model, mode, opponent, trials, seed, single_invader, report } => {
            let set = commands::evaluate(&EvaluateArgs {
                model,
                kind: match mode {
                    Mode::Bgt => TestKind::Bgt,
                    Mode::Omt => TestKind::Omt,
                },
                opponent,
                trials,
                seed,
                single_invader,
                report_dir: report,
            })?;
            print_trials(&set);
        }
        Command::Ablate { dataset, mask, feature, keep, opts, seed, report } => {
            commands::ablate(&AblateArgs {
                dataset,
                mask,
                feature,
                keep,
                train: opts.config(seed),
                report_dir: report,
            })?;
        }
        Command::Report { trialset, out, seed: _ } => {
            let set = commands::report(&trialset, &out)?;
            print_trials(&set);
        }
    }
    Ok(())
}

fn print_trials(set: &deeptrader::harness::TrialSet) {
    for (name, s) in [(&set.strategy_a, &set.summary_a), (&set.strategy_b, &set.summary_b)] {
        println!("{name}: mean {:.3} ci90 [{:.3}, {:.3}] n {}", s.mean, s.ci90_low, s.ci90_high, s.n);
    }
    println!("significant: {}", set.significant());
}
