mod common;

use std::sync::Arc;

use deeptrader::features::{CaptureSpec, Feature, FeatureMask, SnapshotDataset};
use deeptrader::harness::{
    ablate_feature, baseline_val_mse, ci90, collect_corpus, generate_corpus, reduce_and_retrain, run_bgt, run_omt,
    shuffle_column, summarize, ConfigGrid, Contender, CorpusOptions, ScheduleVariation, TrialOptions,
};
use deeptrader::neural::TrainConfig;
use deeptrader::session::ModelSet;
use deeptrader::traders::StrategyTag;
use proptest::prelude::*;

use common::{gvwy_corpus, random_model};

fn tiny_options() -> CorpusOptions {
    CorpusOptions {
        grid: ConfigGrid { seeds_per_config: 1, ..Default::default() },
        scale: 0.01,
        base_seed: 5,
        capture: CaptureSpec::default(),
        variation: ScheduleVariation::Varied,
    }
}

#[test]
fn corpus_generation_resumes_without_rework() {
    let dir = tempfile::tempdir().unwrap();
    let options = tiny_options();
    let (first, report) = generate_corpus(&options, dir.path()).unwrap();
    assert_eq!((report.planned, report.executed, report.skipped), (12, 12, 0));
    let bytes = std::fs::read(dir.path().join("dataset.csv")).unwrap();

    let (second, report) = generate_corpus(&options, dir.path()).unwrap();
    assert_eq!((report.executed, report.skipped), (0, 12));
    assert_eq!(first.rows, second.rows);
    assert_eq!(std::fs::read(dir.path().join("dataset.csv")).unwrap(), bytes);

    let loaded = SnapshotDataset::load(&dir.path().join("dataset.csv")).unwrap();
    assert_eq!(loaded.rows, first.rows);
}

#[test]
fn corpus_is_independent_of_worker_count() {
    let options = tiny_options();
    let run = |n| {
        rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| collect_corpus(&options).unwrap())
    };
    assert_eq!(run(1).rows, run(4).rows);
}

#[test]
fn trials_are_reproducible_and_distinctly_seeded() {
    let mut models = ModelSet::new();
    models.insert("m", Arc::new(random_model(1)));
    let opts = TrialOptions { n_trials: 6, base_seed: 3, ..Default::default() };
    let a = run_bgt(&Contender::dtr("m"), &Contender::baseline(StrategyTag::Zic), &opts, &models).unwrap();
    let b = run_bgt(&Contender::dtr("m"), &Contender::baseline(StrategyTag::Zic), &opts, &models).unwrap();
    assert_eq!(a, b);
    let mut seeds: Vec<u64> = a.samples.iter().map(|s| s.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds.len(), 6);

    let strict = TrialOptions { single_invader: true, ..opts };
    let o = run_omt(&Contender::dtr("m"), &Contender::baseline(StrategyTag::Zip), &strict, &models).unwrap();
    assert_eq!(o.samples.len(), 6);
}

#[test]
fn ablation_oracles_on_the_cloning_corpus() {
    let rows = gvwy_corpus(40, 2);
    let config = TrainConfig { batch_size: 64, epochs: 20, seed: 1, ..Default::default() };
    let mask = FeatureMask::all();
    let baseline = baseline_val_mse(&rows, &mask, &config).unwrap();
    let f3 = ablate_feature(&rows, &mask, Feature::CustomerLimit, &config, baseline).unwrap();
    let f1 = ablate_feature(&rows, &mask, Feature::Time, &config, baseline).unwrap();
    assert!(f3.hit > 0.01, "f3 hit {}", f3.hit);
    assert!(f3.hit > 10.0 * f1.hit.abs(), "f3 {} f1 {}", f3.hit, f1.hit);

    let only_f3 = FeatureMask::new(vec![Feature::CustomerLimit]).unwrap();
    let (_, report) = reduce_and_retrain(&rows, &mask, &only_f3, &config).unwrap();
    assert!(report.reduced_val_mse < 1e-3, "{}", report.reduced_val_mse);

    let (_, same) = reduce_and_retrain(&rows, &mask, &mask, &config).unwrap();
    assert_eq!(same.baseline_val_mse, same.reduced_val_mse);
    assert_eq!(same.baseline_val_mse, baseline);
}

#[test]
fn summary_statistics_by_hand() {
    let s = summarize(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
    assert_eq!(s.median, 3.0);
    assert_eq!((s.q1, s.q3), (2.0, 4.0));
    assert_eq!(s.outliers, vec![100.0]);
    assert!(ci90(&[1.0]).is_err());
    assert_eq!(ci90(&[5.0, 5.0, 5.0]).unwrap(), (5.0, 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shuffling_preserves_each_column_multiset(seed in any::<u64>(), which in 0usize..13) {
        let rows = gvwy_corpus(1, seed % 4);
        let f = Feature::ALL[which];
        let shuffled = shuffle_column(&rows, f, seed);
        let mut a: Vec<f64> = rows.iter().map(|r| r.get(f)).collect();
        let mut b: Vec<f64> = shuffled.iter().map(|r| r.get(f)).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
        for (x, y) in rows.iter().zip(&shuffled) {
            prop_assert_eq!(x.target, y.target);
            for g in Feature::ALL.iter().filter(|&&g| g != f) {
                prop_assert_eq!(x.get(*g), y.get(*g));
            }
        }
    }
}
