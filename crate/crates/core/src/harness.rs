//! Experiment machinery: the configuration grid, corpus generation,
//! balanced-group and one-in-many trials, summary statistics and feature
//! ablation.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    read_rows_csv, write_rows_csv, CaptureSpec, Feature, FeatureError, FeatureMask, MarketSnapshot, SnapshotDataset,
};
use crate::model::{fit_model, ModelError, TrainedModel};
use crate::neural::TrainConfig;
use crate::session::{
    run_session_with, ModelSet, PopulationEntry, ScheduleShape, ScheduleSide, ScheduleSpec, SessionConfig, SessionError,
};
use crate::traders::StrategyTag;

/// Proportion groups: traders per side for each of the four strategies.
pub const PAPER_GROUPS: [[usize; 4]; 5] =
    [[20, 10, 5, 5], [10, 10, 10, 10], [15, 10, 10, 5], [15, 15, 5, 5], [25, 5, 5, 5]];
pub const PAPER_SEEDS_PER_CONFIG: u64 = 32;
/// z for a two-sided 90% normal interval.
pub const Z90: f64 = 1.645;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("grid needs at least 4 distinct strategies, got {0}")]
    PoolTooSmall(usize),
    #[error("proportion group {0:?} does not have 4 entries")]
    Group(Vec<usize>),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("scale must be in (0, 1], got {0}")]
    Scale(f64),
    #[error("{failed} of {total} sessions failed (limit 1%)")]
    TooManyFailures { failed: usize, total: usize },
    #[error("feature {0} is not in the active mask")]
    FeatureNotActive(Feature),
    #[error("keep mask must be a subset of the active mask")]
    MaskNotSubset,
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// SplitMix64 finalizer over a combination of inputs.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Every way of choosing `k` items from `items`, in lexicographic order.
pub fn combinations<T: Copy>(items: &[T], k: usize) -> Vec<Vec<T>> {
    fn go<T: Copy>(items: &[T], k: usize, start: usize, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            go(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(items, k, 0, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Distinct orderings of a multiset, in lexicographic order.
pub fn multiset_permutations(values: &[usize]) -> Vec<Vec<usize>> {
    let mut cur = values.to_vec();
    cur.sort_unstable();
    let mut out = vec![cur.clone()];
    // next lexicographic permutation until exhausted
    while let Some(i) = (0..cur.len().saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) {
        let j = (i + 1..cur.len()).rev().find(|&j| cur[j] > cur[i]).expect("successor exists");
        cur.swap(i, j);
        cur[i + 1..].reverse();
        out.push(cur.clone());
    }
    out
}

/// One cell of the grid: four strategies and their per-side counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridTemplate {
    pub config_id: usize,
    pub strategies: Vec<StrategyTag>,
    pub counts: Vec<usize>,
}

/// How limit-price schedules are chosen for corpus sessions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleVariation {
    /// Symmetric linear schedules over 50..=150 for every session.
    Fixed,
    /// Shapes and ranges drawn per session from the session seed.
    #[default]
    Varied,
}

/// Schedules for one corpus session.
pub fn session_schedules(variation: ScheduleVariation, seed: u64) -> (ScheduleSpec, ScheduleSpec) {
    let supply = ScheduleSpec::new(ScheduleSide::Supply, 50, 150);
    let demand = ScheduleSpec::new(ScheduleSide::Demand, 50, 150);
    match variation {
        ScheduleVariation::Fixed => (supply, demand),
        ScheduleVariation::Varied => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5c4e, 0));
            let shapes = [ScheduleShape::Linear, ScheduleShape::Step, ScheduleShape::RandomOffset];
            let mut draw = |side| {
                let low = rng.gen_range(30..=80);
                let high = rng.gen_range(120..=170);
                let shape = *shapes.choose(&mut rng).expect("non-empty");
                ScheduleSpec::new(side, low, high).with_shape(shape)
            };
            (draw(ScheduleSide::Supply), draw(ScheduleSide::Demand))
        }
    }
}

impl GridTemplate {
    pub fn population(&self) -> Vec<PopulationEntry> {
        self.strategies.iter().zip(&self.counts).map(|(&tag, &n)| PopulationEntry::new(tag, n, n)).collect()
    }

    pub fn session_config(&self, seed: u64, variation: ScheduleVariation, capture: &CaptureSpec) -> SessionConfig {
        let mut config = SessionConfig::new(self.population(), seed);
        let (supply, demand) = session_schedules(variation, seed);
        config.supply = supply;
        config.demand = demand;
        config.capture = capture.clone();
        config
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigGrid {
    pub pool: Vec<StrategyTag>,
    pub groups: Vec<Vec<usize>>,
    pub seeds_per_config: u64,
}

impl Default for ConfigGrid {
    fn default() -> Self {
        Self {
            pool: StrategyTag::BASELINES.to_vec(),
            groups: PAPER_GROUPS.iter().map(|g| g.to_vec()).collect(),
            seeds_per_config: PAPER_SEEDS_PER_CONFIG,
        }
    }
}

impl ConfigGrid {
    pub fn subsets(&self) -> Vec<Vec<StrategyTag>> {
        combinations(&self.pool, 4)
    }

    /// Distinct assignments of each group's counts to four ordered slots.
    pub fn assignments(&self) -> Vec<Vec<usize>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for g in &self.groups {
            for p in multiset_permutations(g) {
                if seen.insert(p.clone()) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Session count before any subsampling.
    pub fn planned_sessions(&self) -> Result<u64, HarnessError> {
        Ok(enumerate_grid(&self.pool, &self.groups)?.len() as u64 * self.seeds_per_config)
    }
}

/// All (subset, assignment) templates, subsets outermost.
pub fn enumerate_grid(pool: &[StrategyTag], groups: &[Vec<usize>]) -> Result<Vec<GridTemplate>, HarnessError> {
    let distinct: BTreeSet<_> = pool.iter().collect();
    if distinct.len() < 4 || distinct.len() != pool.len() {
        return Err(HarnessError::PoolTooSmall(distinct.len()));
    }
    if let Some(g) = groups.iter().find(|g| g.len() != 4) {
        return Err(HarnessError::Group(g.clone()));
    }
    let grid = ConfigGrid { pool: pool.to_vec(), groups: groups.to_vec(), seeds_per_config: 1 };
    let assignments = grid.assignments();
    let mut out = Vec::new();
    for subset in grid.subsets() {
        for counts in &assignments {
            out.push(GridTemplate { config_id: out.len(), strategies: subset.clone(), counts: counts.clone() });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SessionJob {
    pub config_id: usize,
    /// Index of the seed within the config (0..seeds_per_config).
    pub seed_index: u64,
    pub seed: u64,
}

/// Keeps item `k` of `n` when ⌊(k+1)s⌋ > ⌊ks⌋, which selects ⌊ns⌋ or
/// ⌈ns⌉ evenly spread items.
pub fn subsample_indices(n: usize, scale: f64) -> Result<Vec<usize>, HarnessError> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(HarnessError::Scale(scale));
    }
    Ok((0..n).filter(|&k| ((k + 1) as f64 * scale).floor() > (k as f64 * scale).floor()).collect())
}

/// Sessions to run, in canonical (config, seed) order.
pub fn plan_sessions(grid: &ConfigGrid, scale: f64, base_seed: u64) -> Result<Vec<SessionJob>, HarnessError> {
    let templates = enumerate_grid(&grid.pool, &grid.groups)?;
    let all: Vec<SessionJob> = templates
        .iter()
        .flat_map(|t| {
            (0..grid.seeds_per_config).map(move |s| SessionJob {
                config_id: t.config_id,
                seed_index: s,
                seed: derive_seed(base_seed, t.config_id as u64, s),
            })
        })
        .collect();
    Ok(subsample_indices(all.len(), scale)?.into_iter().map(|k| all[k]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub config_id: usize,
    pub seed: u64,
    pub status: JobStatus,
    pub rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Record of completed corpus sessions, kept sorted by (config, seed).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load_or_default(path: &Path) -> Result<Self, HarnessError> {
        if path.exists() {
            Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
        } else {
            Ok(Self::default())
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn is_complete(&self, job: &SessionJob) -> bool {
        self.entries.iter().any(|e| e.config_id == job.config_id && e.seed == job.seed && e.status == JobStatus::Ok)
    }

    fn record(&mut self, entry: ManifestEntry) {
        self.entries.retain(|e| !(e.config_id == entry.config_id && e.seed == entry.seed));
        self.entries.push(entry);
        self.entries.sort_by_key(|e| (e.config_id, e.seed));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusOptions {
    pub grid: ConfigGrid,
    pub scale: f64,
    pub base_seed: u64,
    pub capture: CaptureSpec,
    pub variation: ScheduleVariation,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            grid: ConfigGrid::default(),
            scale: 1.0,
            base_seed: 0,
            capture: CaptureSpec::default(),
            variation: ScheduleVariation::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub planned: usize,
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub rows: usize,
}

fn run_job(
    templates: &[GridTemplate],
    job: &SessionJob,
    options: &CorpusOptions,
) -> Result<Vec<MarketSnapshot>, SessionError> {
    let config = templates[job.config_id].session_config(job.seed, options.variation, &options.capture);
    Ok(run_session_with(&config, &ModelSet::new())?.snapshots)
}

/// Runs the planned sessions in parallel and returns their snapshots merged
/// in canonical order, without touching disk.
pub fn collect_corpus(options: &CorpusOptions) -> Result<SnapshotDataset, HarnessError> {
    let templates = enumerate_grid(&options.grid.pool, &options.grid.groups)?;
    let jobs = plan_sessions(&options.grid, options.scale, options.base_seed)?;
    let results: Vec<_> = jobs.par_iter().map(|job| run_job(&templates, job, options)).collect();
    let mut dataset = SnapshotDataset { filter: options.capture.filter, ..Default::default() };
    let failed = results.iter().filter(|r| r.is_err()).count();
    check_failures(failed, jobs.len())?;
    for (job, rows) in jobs.iter().zip(results) {
        if let Ok(rows) = rows {
            dataset.extend_session(job.config_id, job.seed, rows);
        }
    }
    Ok(dataset)
}

fn check_failures(failed: usize, total: usize) -> Result<(), HarnessError> {
    if failed * 100 > total {
        Err(HarnessError::TooManyFailures { failed, total })
    } else {
        Ok(())
    }
}

fn session_file(dir: &Path, job: &SessionJob) -> PathBuf {
    dir.join("sessions").join(format!("c{:04}_s{:020}.csv", job.config_id, job.seed))
}

/// Disk-backed corpus generation with checkpoint/resume.
///
/// Each session's rows go to `out_dir/sessions/`, the manifest to
/// `out_dir/manifest.json`, and the merged corpus to `out_dir/dataset.csv`.
/// Sessions already marked complete in the manifest are not rerun.
pub fn generate_corpus(
    options: &CorpusOptions,
    out_dir: &Path,
) -> Result<(SnapshotDataset, CorpusReport), HarnessError> {
    std::fs::create_dir_all(out_dir.join("sessions"))?;
    let manifest_path = out_dir.join("manifest.json");
    let mut manifest = Manifest::load_or_default(&manifest_path)?;
    let templates = enumerate_grid(&options.grid.pool, &options.grid.groups)?;
    let jobs = plan_sessions(&options.grid, options.scale, options.base_seed)?;
    let pending: Vec<SessionJob> =
        jobs.iter().filter(|j| !(manifest.is_complete(j) && session_file(out_dir, j).exists())).copied().collect();

    let outcomes: Vec<Result<usize, String>> = pending
        .par_iter()
        .map(|job| {
            let rows = run_job(&templates, job, options).map_err(|e| e.to_string())?;
            let file = std::fs::File::create(session_file(out_dir, job)).map_err(|e| e.to_string())?;
            write_rows_csv(&rows, std::io::BufWriter::new(file)).map_err(|e| e.to_string())?;
            Ok(rows.len())
        })
        .collect();
    for (job, outcome) in pending.iter().zip(&outcomes) {
        let (status, rows, error) = match outcome {
            Ok(n) => (JobStatus::Ok, *n, None),
            Err(e) => (JobStatus::Failed, 0, Some(e.clone())),
        };
        manifest.record(ManifestEntry { config_id: job.config_id, seed: job.seed, status, rows, error });
    }
    manifest.save(&manifest_path)?;

    let failed = jobs.iter().filter(|j| !manifest.is_complete(j)).count();
    check_failures(failed, jobs.len())?;
    let mut dataset = SnapshotDataset { filter: options.capture.filter, ..Default::default() };
    for job in jobs.iter().filter(|j| manifest.is_complete(j)) {
        let file = std::fs::File::open(session_file(out_dir, job))?;
        let rows = read_rows_csv(std::io::BufReader::new(file))?;
        dataset.extend_session(job.config_id, job.seed, rows);
    }
    dataset.save(&out_dir.join("dataset.csv"))?;
    std::fs::write(out_dir.join("provenance.json"), serde_json::to_string_pretty(&dataset.provenance)? + "\n")?;
    let report = CorpusReport {
        planned: jobs.len(),
        executed: pending.len(),
        skipped: jobs.len() - pending.len(),
        failed,
        rows: dataset.len(),
    };
    Ok((dataset, report))
}

/// Mean and 90% half-width, mean ± 1.645·s/√n.
pub fn ci90(samples: &[f64]) -> Result<(f64, f64), HarnessError> {
    let n = samples.len();
    if n < 2 {
        return Err(HarnessError::TooFewSamples(n));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, Z90 * var.sqrt() / (n as f64).sqrt()))
}

pub fn intervals_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    let (a_lo, a_hi) = (a.0 - a.1, a.0 + a.1);
    let (b_lo, b_hi) = (b.0 - b.1, b.0 + b.1);
    a_lo <= b_hi && b_lo <= a_hi
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub ci90_half_width: f64,
    pub ci90_low: f64,
    pub ci90_high: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    /// Samples beyond 1.5 × IQR from the quartiles.
    pub outliers: Vec<f64>,
}

pub fn summarize(samples: &[f64]) -> Result<SampleSummary, HarnessError> {
    let (mean, half) = ci90(samples)?;
    let n = samples.len();
    let variance = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75));
    let iqr = q3 - q1;
    let outliers = sorted.iter().copied().filter(|&x| x < q1 - 1.5 * iqr || x > q3 + 1.5 * iqr).collect();
    Ok(SampleSummary {
        n,
        mean,
        variance,
        ci90_half_width: half,
        ci90_low: mean - half,
        ci90_high: mean + half,
        median,
        q1,
        q3,
        iqr,
        outliers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TestKind {
    Bgt,
    Omt,
}

/// One side of a head-to-head test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contender {
    pub tag: StrategyTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub label: String,
}

impl Contender {
    pub fn baseline(tag: StrategyTag) -> Self {
        Self { tag, model: None, label: tag.to_string() }
    }

    pub fn dtr(model: impl Into<String>) -> Self {
        Self { tag: StrategyTag::Dtr, model: Some(model.into()), label: "DTR".into() }
    }

    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }

    fn entry(&self, buyers: usize, sellers: usize) -> PopulationEntry {
        let mut e = PopulationEntry::new(self.tag, buyers, sellers).with_label(self.label.clone());
        e.model = self.model.clone();
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOptions {
    pub n_trials: usize,
    pub base_seed: u64,
    /// Traders per side in the whole market.
    pub traders_per_side: usize,
    /// OMT only: insert a single DTR buyer instead of one buyer and one seller.
    pub single_invader: bool,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self { n_trials: 100, base_seed: 0, traders_per_side: 40, single_invader: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSample {
    pub trial: usize,
    pub seed: u64,
    pub appt_a: f64,
    pub appt_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSet {
    pub kind: TestKind,
    pub strategy_a: String,
    pub strategy_b: String,
    pub n_trials: usize,
    pub samples: Vec<TrialSample>,
    pub summary_a: SampleSummary,
    pub summary_b: SampleSummary,
}

impl TrialSet {
    pub fn appt_a(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.appt_a).collect()
    }

    pub fn appt_b(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.appt_b).collect()
    }

    /// True when the two CI90s do not intersect.
    pub fn significant(&self) -> bool {
        !intervals_overlap(
            (self.summary_a.mean, self.summary_a.ci90_half_width),
            (self.summary_b.mean, self.summary_b.ci90_half_width),
        )
    }

    pub fn write_samples_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "trial,seed,{},{}", self.strategy_a, self.strategy_b)?;
        for s in &self.samples {
            writeln!(out, "{},{},{},{}", s.trial, s.seed, s.appt_a, s.appt_b)?;
        }
        Ok(())
    }
}

fn run_trials(
    kind: TestKind,
    a: &Contender,
    b: &Contender,
    options: &TrialOptions,
    models: &ModelSet,
    build: impl Fn(u64) -> SessionConfig + Sync,
) -> Result<TrialSet, HarnessError> {
    let samples: Result<Vec<TrialSample>, HarnessError> = (0..options.n_trials)
        .into_par_iter()
        .map(|trial| {
            let seed = derive_seed(options.base_seed, 0x7e57, trial as u64);
            let result = run_session_with(&build(seed), models)?;
            let appt = |label: &str| result.group(label).map_or(0.0, |g| g.appt);
            Ok(TrialSample { trial, seed, appt_a: appt(&a.label), appt_b: appt(&b.label) })
        })
        .collect();
    let samples = samples?;
    let summary_a = summarize(&samples.iter().map(|s| s.appt_a).collect::<Vec<_>>())?;
    let summary_b = summarize(&samples.iter().map(|s| s.appt_b).collect::<Vec<_>>())?;
    Ok(TrialSet {
        kind,
        strategy_a: a.label.clone(),
        strategy_b: b.label.clone(),
        n_trials: options.n_trials,
        samples,
        summary_a,
        summary_b,
    })
}

/// Balanced-group test: half of each side runs `a`, half `b`, and the j-th
/// trader of each group shares a limit price.
pub fn run_bgt(
    a: &Contender,
    b: &Contender,
    options: &TrialOptions,
    models: &ModelSet,
) -> Result<TrialSet, HarnessError> {
    let half = options.traders_per_side / 2;
    run_trials(TestKind::Bgt, a, b, options, models, |seed| {
        let mut config = SessionConfig::new(vec![a.entry(half, half), b.entry(half, half)], seed);
        config.matched_pairs = true;
        config
    })
}

/// One-in-many test: `invader` joins a field of `field`.
pub fn run_omt(
    invader: &Contender,
    field: &Contender,
    options: &TrialOptions,
    models: &ModelSet,
) -> Result<TrialSet, HarnessError> {
    let n = options.traders_per_side;
    let (inv_sellers, field_sellers) = if options.single_invader { (0, n) } else { (1, n - 1) };
    run_trials(TestKind::Omt, invader, field, options, models, |seed| {
        SessionConfig::new(vec![invader.entry(1, inv_sellers), field.entry(n - 1, field_sellers)], seed)
    })
}

/// Copy of `rows` with one feature column permuted by a seeded shuffle.
pub fn shuffle_column(rows: &[MarketSnapshot], feature: Feature, seed: u64) -> Vec<MarketSnapshot> {
    let mut column: Vec<f64> = rows.iter().map(|r| r.get(feature)).collect();
    column.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xab1a, feature.index() as u64)));
    let mut out = rows.to_vec();
    for (row, v) in out.iter_mut().zip(column) {
        row.features[feature.index()] = v;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub feature: Feature,
    pub val_mse: f64,
    /// Increase in validation MSE over the unablated baseline.
    pub hit: f64,
}

fn val_mse(rows: &[MarketSnapshot], mask: &FeatureMask, config: &TrainConfig) -> Result<f64, HarnessError> {
    let (_, report) = fit_model(rows, mask, Default::default(), 0.9, config)?;
    Ok(report.final_val_mse)
}

/// Validation MSE of a model trained on `rows` under `mask`.
pub fn baseline_val_mse(
    rows: &[MarketSnapshot],
    mask: &FeatureMask,
    config: &TrainConfig,
) -> Result<f64, HarnessError> {
    val_mse(rows, mask, config)
}

/// Retrains with one column shuffled and reports the loss increase.
pub fn ablate_feature(
    rows: &[MarketSnapshot],
    mask: &FeatureMask,
    feature: Feature,
    config: &TrainConfig,
    baseline: f64,
) -> Result<AblationResult, HarnessError> {
    if !mask.contains(feature) {
        return Err(HarnessError::FeatureNotActive(feature));
    }
    let ablated = shuffle_column(rows, feature, config.seed);
    let mse = val_mse(&ablated, mask, config)?;
    Ok(AblationResult { feature, val_mse: mse, hit: mse - baseline })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub baseline_val_mse: f64,
    /// Sorted by decreasing hit.
    pub ranked: Vec<AblationResult>,
    /// Features whose removal raised the loss.
    pub keep: Vec<Feature>,
    /// Features whose removal did not raise the loss.
    pub drop: Vec<Feature>,
    pub reference_drop: Vec<Feature>,
}

impl AblationReport {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "rank,feature,val_mse,hit")?;
        for (i, r) in self.ranked.iter().enumerate() {
            writeln!(out, "{},{},{},{}", i + 1, r.feature, r.val_mse, r.hit)?;
        }
        Ok(())
    }
}

/// Drop set found by the original full-scale study, for comparison.
pub fn reference_drop_set() -> Vec<Feature> {
    use Feature::*;
    vec![Time, BestAsk, SinceLastTrade, Imbalance, TotalQuantity, PStar, Alpha]
}

/// Ablates every active feature in turn.
pub fn ablation_sweep(
    rows: &[MarketSnapshot],
    mask: &FeatureMask,
    config: &TrainConfig,
) -> Result<AblationReport, HarnessError> {
    let baseline = baseline_val_mse(rows, mask, config)?;
    let mut ranked = mask
        .features()
        .iter()
        .map(|&f| ablate_feature(rows, mask, f, config, baseline))
        .collect::<Result<Vec<_>, _>>()?;
    ranked.sort_by(|a, b| b.hit.total_cmp(&a.hit).then(a.feature.cmp(&b.feature)));
    let mut keep: Vec<Feature> = ranked.iter().filter(|r| r.hit > 0.0).map(|r| r.feature).collect();
    let mut drop: Vec<Feature> = ranked.iter().filter(|r| r.hit <= 0.0).map(|r| r.feature).collect();
    keep.sort();
    drop.sort();
    Ok(AblationReport { baseline_val_mse: baseline, ranked, keep, drop, reference_drop: reference_drop_set() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub baseline_mask: FeatureMask,
    pub reduced_mask: FeatureMask,
    pub baseline_val_mse: f64,
    pub reduced_val_mse: f64,
}

/// Trains baseline and reduced models on the same data and split.
pub fn reduce_and_retrain(
    rows: &[MarketSnapshot],
    baseline_mask: &FeatureMask,
    keep: &FeatureMask,
    config: &TrainConfig,
) -> Result<(TrainedModel, ReductionReport), HarnessError> {
    if keep.is_empty() {
        return Err(FeatureError::EmptyMask.into());
    }
    if !keep.features().iter().all(|f| baseline_mask.contains(*f)) {
        return Err(HarnessError::MaskNotSubset);
    }
    let baseline = baseline_val_mse(rows, baseline_mask, config)?;
    let (model, report) = fit_model(rows, keep, Default::default(), 0.9, config)?;
    Ok((
        model,
        ReductionReport {
            baseline_mask: baseline_mask.clone(),
            reduced_mask: keep.clone(),
            baseline_val_mse: baseline,
            reduced_val_mse: report.final_val_mse,
        },
    ))
}
