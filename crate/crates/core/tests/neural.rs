mod common;

use deeptrader::neural::{
    adam_step, split_rows, train, NetworkParams, OptimizerState, TrainConfig, TrainingSet, DENSE1, DENSE2, HIDDEN,
};
use proptest::prelude::*;

use common::gradient_check;

#[test]
fn analytic_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let err = gradient_check(seed, 13, 40);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
    assert!(gradient_check(7, 6, 40) < 1e-4);
}

#[test]
fn parameter_count_matches_architecture() {
    let d = 13;
    let expected = 4 * HIDDEN * (d + HIDDEN + 1) + DENSE1 * (HIDDEN + 1) + DENSE2 * (DENSE1 + 1) + (DENSE2 + 1);
    assert_eq!(NetworkParams::init(d, 0).parameter_count(), expected);
}

fn linear_set(n: usize) -> TrainingSet {
    let width = 3;
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for i in 0..n {
        let x: Vec<f64> = (0..width).map(|j| ((i * 31 + j * 17) % 97) as f64 / 96.0).collect();
        targets.push(0.2 + 0.5 * x[0] + 0.2 * x[1]);
        inputs.extend(x);
    }
    TrainingSet { width, inputs, targets }
}

#[test]
fn training_reduces_loss_on_a_learnable_target() {
    let data = linear_set(2_000);
    let config = TrainConfig { batch_size: 32, epochs: 15, seed: 4, ..Default::default() };
    let out = train(&data, &config).unwrap();
    let first = out.history.first().unwrap().train_mse;
    let last = out.history.last().unwrap().train_mse;
    assert!(last < first / 5.0, "{first} -> {last}");
    assert!(out.final_val_mse() < 0.005, "{}", out.final_val_mse());
}

#[test]
fn training_is_reproducible_across_thread_counts() {
    let data = linear_set(700);
    let config = TrainConfig { batch_size: 200, epochs: 3, seed: 9, ..Default::default() };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| train(&data, &config).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
}

#[test]
fn adam_rejects_non_finite_gradients_without_mutation() {
    let mut params = NetworkParams::init(4, 1);
    let mut opt = OptimizerState::new(&params, 1e-3);
    let mut grads = params.zeros_like();
    grads.output_bias.data[0] = f64::NAN;
    let before = (params.clone(), opt.clone());
    assert!(adam_step(&mut params, &grads, &mut opt).is_err());
    assert_eq!((params, opt), before);
}

proptest! {
    #[test]
    fn split_is_a_partition(n in 2usize..500, frac in 0.0f64..0.9, seed in any::<u64>()) {
        let (train_rows, val_rows) = split_rows(n, frac, seed);
        prop_assert!(!train_rows.is_empty());
        let mut all: Vec<usize> = train_rows.iter().chain(&val_rows).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn forward_output_is_finite(seed in any::<u64>(), len in 1usize..5) {
        let p = NetworkParams::init(5, seed);
        let xs: Vec<Vec<f64>> = (0..len).map(|k| (0..5).map(|j| ((k + j) as f64 * 0.37).sin()).collect()).collect();
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        prop_assert!(p.predict(&refs).unwrap().is_finite());
    }
}
