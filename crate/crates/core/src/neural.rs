//! LSTM(10) → dense(5, ReLU) → dense(3, ReLU) → linear(1) regression network
//! with hand-written backpropagation through time and an Adam optimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HIDDEN: usize = 10;
pub const DENSE1: usize = 5;
pub const DENSE2: usize = 3;
/// Initial bias of the ReLU layers; slightly positive so no unit starts dead.
pub const RELU_BIAS: f64 = 0.1;
const GATES: usize = 4 * HIDDEN;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("{layer}: expected width {expected}, got {got}")]
    Shape { layer: &'static str, expected: usize, got: usize },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("predictions and targets must be non-empty and equal length ({0} vs {1})")]
    LossInput(usize, usize),
    #[error("non-finite gradient in {tensor} at step {step}")]
    NonFinite { tensor: &'static str, step: u64 },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid training config: {0}")]
    Config(String),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
        Self { rows, cols, data }
    }

    /// out += self · x
    fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.rows) {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// out += selfᵀ · d
    fn matvec_t_into(&self, d: &[f64], out: &mut [f64]) {
        for (r, &dr) in d.iter().enumerate().take(self.rows) {
            if dr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * dr;
            }
        }
    }

    /// self += d ⊗ x
    fn add_outer(&mut self, d: &[f64], x: &[f64]) {
        for (r, &dr) in d.iter().enumerate().take(self.rows) {
            if dr == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, v) in row.iter_mut().zip(x) {
                *w += dr * v;
            }
        }
    }
}

/// All weights and biases. Gradients and Adam moments use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub input_dim: usize,
    /// Gate pre-activations from the input, rows ordered input|forget|cell|output.
    pub lstm_input: Matrix,
    pub lstm_recurrent: Matrix,
    pub lstm_bias: Matrix,
    pub dense1_weight: Matrix,
    pub dense1_bias: Matrix,
    pub dense2_weight: Matrix,
    pub dense2_bias: Matrix,
    pub output_weight: Matrix,
    pub output_bias: Matrix,
}

pub const TENSOR_NAMES: [&str; 9] = [
    "lstm_input",
    "lstm_recurrent",
    "lstm_bias",
    "dense1_weight",
    "dense1_bias",
    "dense2_weight",
    "dense2_bias",
    "output_weight",
    "output_bias",
];

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// activated gates, same layout as the pre-activations
    gates: Vec<f64>,
    c_tanh: Vec<f64>,
}

/// Activations retained from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    steps: Vec<StepCache>,
    h: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    pub prediction: f64,
}

impl NetworkParams {
    pub fn zeros(input_dim: usize) -> Self {
        Self {
            input_dim,
            lstm_input: Matrix::zeros(GATES, input_dim),
            lstm_recurrent: Matrix::zeros(GATES, HIDDEN),
            lstm_bias: Matrix::zeros(GATES, 1),
            dense1_weight: Matrix::zeros(DENSE1, HIDDEN),
            dense1_bias: Matrix::zeros(DENSE1, 1),
            dense2_weight: Matrix::zeros(DENSE2, DENSE1),
            dense2_bias: Matrix::zeros(DENSE2, 1),
            output_weight: Matrix::zeros(1, DENSE2),
            output_bias: Matrix::zeros(1, 1),
        }
    }

    /// Weight matrices uniform in ±√(6/(fan_in+fan_out)); ReLU-layer biases
    /// at `RELU_BIAS`, other biases zero.
    pub fn init(input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            input_dim,
            lstm_input: Matrix::glorot(GATES, input_dim, &mut rng),
            lstm_recurrent: Matrix::glorot(GATES, HIDDEN, &mut rng),
            lstm_bias: Matrix::zeros(GATES, 1),
            dense1_weight: Matrix::glorot(DENSE1, HIDDEN, &mut rng),
            dense1_bias: Matrix::filled(DENSE1, 1, RELU_BIAS),
            dense2_weight: Matrix::glorot(DENSE2, DENSE1, &mut rng),
            dense2_bias: Matrix::filled(DENSE2, 1, RELU_BIAS),
            output_weight: Matrix::glorot(1, DENSE2, &mut rng),
            output_bias: Matrix::zeros(1, 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim)
    }

    pub fn tensors(&self) -> [(&'static str, &Matrix); 9] {
        [
            (TENSOR_NAMES[0], &self.lstm_input),
            (TENSOR_NAMES[1], &self.lstm_recurrent),
            (TENSOR_NAMES[2], &self.lstm_bias),
            (TENSOR_NAMES[3], &self.dense1_weight),
            (TENSOR_NAMES[4], &self.dense1_bias),
            (TENSOR_NAMES[5], &self.dense2_weight),
            (TENSOR_NAMES[6], &self.dense2_bias),
            (TENSOR_NAMES[7], &self.output_weight),
            (TENSOR_NAMES[8], &self.output_bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Matrix); 9] {
        [
            (TENSOR_NAMES[0], &mut self.lstm_input),
            (TENSOR_NAMES[1], &mut self.lstm_recurrent),
            (TENSOR_NAMES[2], &mut self.lstm_bias),
            (TENSOR_NAMES[3], &mut self.dense1_weight),
            (TENSOR_NAMES[4], &mut self.dense1_bias),
            (TENSOR_NAMES[5], &mut self.dense2_weight),
            (TENSOR_NAMES[6], &mut self.dense2_bias),
            (TENSOR_NAMES[7], &mut self.output_weight),
            (TENSOR_NAMES[8], &mut self.output_bias),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data.len()).sum()
    }

    /// Checks that every tensor has the shape implied by `input_dim`.
    pub fn validate_shapes(&self) -> Result<(), NeuralError> {
        let reference = Self::zeros(self.input_dim);
        for ((name, m), (_, r)) in self.tensors().iter().zip(reference.tensors().iter()) {
            if m.rows != r.rows || m.cols != r.cols || m.data.len() != r.data.len() {
                return Err(NeuralError::Shape { layer: name, expected: r.data.len(), got: m.data.len() });
            }
        }
        Ok(())
    }

    fn add_assign(&mut self, other: &NetworkParams) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    /// Runs the sequence through the network from a zero LSTM state.
    pub fn forward(&self, sequence: &[&[f64]]) -> Result<ForwardCache, NeuralError> {
        if sequence.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        let mut h = vec![0.0; HIDDEN];
        let mut c = vec![0.0; HIDDEN];
        let mut steps = Vec::with_capacity(sequence.len());
        for x in sequence {
            if x.len() != self.input_dim {
                return Err(NeuralError::Shape { layer: "lstm", expected: self.input_dim, got: x.len() });
            }
            let mut z = self.lstm_bias.data.clone();
            self.lstm_input.matvec_into(x, &mut z);
            self.lstm_recurrent.matvec_into(&h, &mut z);
            let mut gates = vec![0.0; GATES];
            for k in 0..HIDDEN {
                gates[k] = sigmoid(z[k]);
                gates[HIDDEN + k] = sigmoid(z[HIDDEN + k]);
                gates[2 * HIDDEN + k] = z[2 * HIDDEN + k].tanh();
                gates[3 * HIDDEN + k] = sigmoid(z[3 * HIDDEN + k]);
            }
            let mut c_new = vec![0.0; HIDDEN];
            let mut c_tanh = vec![0.0; HIDDEN];
            let mut h_new = vec![0.0; HIDDEN];
            for k in 0..HIDDEN {
                c_new[k] = gates[HIDDEN + k] * c[k] + gates[k] * gates[2 * HIDDEN + k];
                c_tanh[k] = c_new[k].tanh();
                h_new[k] = gates[3 * HIDDEN + k] * c_tanh[k];
            }
            steps.push(StepCache { x: x.to_vec(), h_prev: h, c_prev: c, gates, c_tanh });
            h = h_new;
            c = c_new;
        }
        let mut z1 = self.dense1_bias.data.clone();
        self.dense1_weight.matvec_into(&h, &mut z1);
        let a1: Vec<f64> = z1.iter().map(|&v| relu(v)).collect();
        let mut z2 = self.dense2_bias.data.clone();
        self.dense2_weight.matvec_into(&a1, &mut z2);
        let a2: Vec<f64> = z2.iter().map(|&v| relu(v)).collect();
        let mut y = self.output_bias.data.clone();
        self.output_weight.matvec_into(&a2, &mut y);
        Ok(ForwardCache { steps, h, z1, a1, z2, a2, prediction: y[0] })
    }

    pub fn predict(&self, sequence: &[&[f64]]) -> Result<f64, NeuralError> {
        Ok(self.forward(sequence)?.prediction)
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative with
    /// respect to this prediction is `d_prediction`.
    pub fn backward(&self, cache: &ForwardCache, d_prediction: f64, grads: &mut NetworkParams) {
        let dy = d_prediction;
        grads.output_bias.data[0] += dy;
        grads.output_weight.add_outer(&[dy], &cache.a2);
        let mut dz2 = vec![0.0; DENSE2];
        self.output_weight.matvec_t_into(&[dy], &mut dz2);
        for (d, z) in dz2.iter_mut().zip(&cache.z2) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }
        for (b, d) in grads.dense2_bias.data.iter_mut().zip(&dz2) {
            *b += d;
        }
        grads.dense2_weight.add_outer(&dz2, &cache.a1);
        let mut dz1 = vec![0.0; DENSE1];
        self.dense2_weight.matvec_t_into(&dz2, &mut dz1);
        for (d, z) in dz1.iter_mut().zip(&cache.z1) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }
        for (b, d) in grads.dense1_bias.data.iter_mut().zip(&dz1) {
            *b += d;
        }
        grads.dense1_weight.add_outer(&dz1, &cache.h);
        let mut dh = vec![0.0; HIDDEN];
        self.dense1_weight.matvec_t_into(&dz1, &mut dh);

        let mut dc_next = vec![0.0; HIDDEN];
        let mut dz = vec![0.0; GATES];
        for step in cache.steps.iter().rev() {
            let g = &step.gates;
            let mut dc_prev = vec![0.0; HIDDEN];
            for k in 0..HIDDEN {
                let (i, f, cand, o) = (g[k], g[HIDDEN + k], g[2 * HIDDEN + k], g[3 * HIDDEN + k]);
                let tc = step.c_tanh[k];
                let d_o = dh[k] * tc;
                let dc = dc_next[k] + dh[k] * o * (1.0 - tc * tc);
                let d_i = dc * cand;
                let d_cand = dc * i;
                let d_f = dc * step.c_prev[k];
                dc_prev[k] = dc * f;
                dz[k] = d_i * i * (1.0 - i);
                dz[HIDDEN + k] = d_f * f * (1.0 - f);
                dz[2 * HIDDEN + k] = d_cand * (1.0 - cand * cand);
                dz[3 * HIDDEN + k] = d_o * o * (1.0 - o);
            }
            for (b, d) in grads.lstm_bias.data.iter_mut().zip(&dz) {
                *b += d;
            }
            grads.lstm_input.add_outer(&dz, &step.x);
            grads.lstm_recurrent.add_outer(&dz, &step.h_prev);
            let mut dh_prev = vec![0.0; HIDDEN];
            self.lstm_recurrent.matvec_t_into(&dz, &mut dh_prev);
            dh = dh_prev;
            dc_next = dc_prev;
        }
    }

    /// Mean squared error over a batch of sequences and its gradient.
    /// Chunks are reduced in a fixed order, so the result does not depend on
    /// the number of worker threads.
    pub fn batch_gradient(&self, batch: &[(Vec<&[f64]>, f64)]) -> Result<(f64, NetworkParams), NeuralError> {
        const CHUNK: usize = 64;
        let n = batch.len();
        if n == 0 {
            return Err(NeuralError::LossInput(0, 0));
        }
        let scale = 2.0 / n as f64;
        let partials: Vec<Result<(f64, NetworkParams), NeuralError>> = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut grads = self.zeros_like();
                let mut sse = 0.0;
                for (seq, target) in chunk {
                    let cache = self.forward(seq)?;
                    let residual = cache.prediction - target;
                    sse += residual * residual;
                    self.backward(&cache, scale * residual, &mut grads);
                }
                Ok((sse, grads))
            })
            .collect();
        let mut total = self.zeros_like();
        let mut sse = 0.0;
        for part in partials {
            let (s, g) = part?;
            sse += s;
            total.add_assign(&g);
        }
        Ok((sse / n as f64, total))
    }
}

pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64, NeuralError> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(NeuralError::LossInput(predictions.len(), targets.len()));
    }
    let sse: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sse / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub first_moment: NetworkParams,
    pub second_moment: NetworkParams,
}

impl OptimizerState {
    pub fn new(params: &NetworkParams, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update. Leaves everything untouched when any
/// gradient is not finite.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &NetworkParams,
    state: &mut OptimizerState,
) -> Result<(), NeuralError> {
    if grads.input_dim != params.input_dim {
        return Err(NeuralError::Shape { layer: "gradients", expected: params.input_dim, got: grads.input_dim });
    }
    for (name, g) in grads.tensors() {
        if g.data.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFinite { tensor: name, step: state.step + 1 });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.learning_rate, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let OptimizerState { first_moment, second_moment, .. } = state;
    let iter = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(first_moment.tensors_mut())
        .zip(second_moment.tensors_mut());
    for ((((_, p), (_, g)), (_, m)), (_, v)) in iter {
        for (((p, g), m), v) in p.data.iter_mut().zip(&g.data).zip(m.data.iter_mut()).zip(v.data.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub sequence_length: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16_384,
            epochs: 20,
            sequence_length: 1,
            seed: 0,
            validation_fraction: 0.1,
            learning_rate: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.batch_size == 0 {
            return Err(NeuralError::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(NeuralError::Config("epochs must be at least 1".into()));
        }
        if self.sequence_length == 0 {
            return Err(NeuralError::Config("sequence_length must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(NeuralError::Config("validation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean of the per-batch losses seen while training this epoch.
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub optimizer: OptimizerState,
    pub history: Vec<EpochLoss>,
    pub train_rows: Vec<usize>,
    pub validation_rows: Vec<usize>,
}

impl TrainOutcome {
    pub fn final_val_mse(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |e| e.val_mse)
    }
}

/// Row-major design matrix plus targets, already normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub width: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.width..(i + 1) * self.width]
    }

    /// The window of up to `len` rows ending at `i`, oldest first.
    pub fn sequence(&self, i: usize, len: usize) -> Vec<&[f64]> {
        let start = (i + 1).saturating_sub(len);
        (start..=i).map(|j| self.row(j)).collect()
    }
}

/// Seeded split of row indices into (train, validation).
pub fn split_rows(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT));
    let n_val = ((n as f64 * validation_fraction).round() as usize).min(n.saturating_sub(1));
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

const SPLIT_SALT: u64 = 0x5eed_5917;

pub fn evaluate_mse(
    params: &NetworkParams,
    data: &TrainingSet,
    rows: &[usize],
    seq_len: usize,
) -> Result<f64, NeuralError> {
    if rows.is_empty() {
        return Err(NeuralError::LossInput(0, 0));
    }
    let preds: Result<Vec<f64>, NeuralError> =
        rows.par_iter().map(|&i| params.predict(&data.sequence(i, seq_len))).collect();
    let targets: Vec<f64> = rows.iter().map(|&i| data.targets[i]).collect();
    mse_loss(&preds?, &targets)
}

/// Minibatch Adam on MSE. Batches are drawn from a seeded shuffle each
/// epoch; batch size shrinks to the training-set size when larger. The
/// output bias starts at the mean training target.
pub fn train(data: &TrainingSet, config: &TrainConfig) -> Result<TrainOutcome, NeuralError> {
    use rand::seq::SliceRandom;
    config.validate()?;
    if data.is_empty() {
        return Err(NeuralError::EmptyTrainingSet);
    }
    let (train_rows, validation_rows) = split_rows(data.len(), config.validation_fraction, config.seed);
    let mut params = NetworkParams::init(data.width, config.seed);
    // starting the output at the mean target keeps the early gradient from
    // driving the narrow ReLU layers dead while the offset is learned
    params.output_bias.data[0] = train_rows.iter().map(|&i| data.targets[i]).sum::<f64>() / train_rows.len() as f64;
    let mut optimizer = OptimizerState::new(&params, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let batch_size = config.batch_size.min(train_rows.len());
    let mut history = Vec::with_capacity(config.epochs);
    let mut order = train_rows.clone();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for rows in order.chunks(batch_size) {
            let batch: Vec<(Vec<&[f64]>, f64)> =
                rows.iter().map(|&i| (data.sequence(i, config.sequence_length), data.targets[i])).collect();
            let (loss, grads) = params.batch_gradient(&batch)?;
            adam_step(&mut params, &grads, &mut optimizer)?;
            weighted += loss * rows.len() as f64;
        }
        let train_mse = weighted / order.len() as f64;
        let val_mse = if validation_rows.is_empty() {
            train_mse
        } else {
            evaluate_mse(&params, data, &validation_rows, config.sequence_length)?
        };
        history.push(EpochLoss { epoch, train_mse, val_mse });
    }
    Ok(TrainOutcome { params, optimizer, history, train_rows, validation_rows })
}

/// Loss history as CSV: `epoch,train_mse,val_mse`.
pub fn write_history_csv<W: std::io::Write>(history: &[EpochLoss], mut out: W) -> std::io::Result<()> {
    writeln!(out, "epoch,train_mse,val_mse")?;
    for e in history {
        writeln!(out, "{},{},{}", e.epoch, e.train_mse, e.val_mse)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_predict_zero() {
        let p = NetworkParams::zeros(4);
        let x = [0.3, -1.0, 2.0, 0.5];
        assert_eq!(p.predict(&[&x]).unwrap(), 0.0);
    }

    #[test]
    fn output_bias_passes_through() {
        let mut p = NetworkParams::zeros(3);
        p.output_bias.data[0] = 0.7;
        assert_eq!(p.predict(&[&[1.0, 2.0, 3.0]]).unwrap(), 0.7);
        assert_eq!(p.predict(&[&[-5.0, 0.0, 9.0], &[1.0, 1.0, 1.0]]).unwrap(), 0.7);
    }

    #[test]
    fn forward_is_stateless() {
        let p = NetworkParams::init(3, 11);
        let x = [0.2, 0.4, 0.9];
        assert_eq!(p.predict(&[&x]).unwrap(), p.predict(&[&x]).unwrap());
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let p = NetworkParams::init(3, 1);
        let err = p.predict(&[&[1.0, 2.0]]).unwrap_err();
        assert_eq!(err, NeuralError::Shape { layer: "lstm", expected: 3, got: 2 });
        assert_eq!(p.predict(&[]).unwrap_err(), NeuralError::EmptySequence);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0, 2.0], &[0.0, 0.0]).unwrap(), 2.0);
        let base = mse_loss(&[1.0, -3.0], &[0.5, 0.0]).unwrap();
        let scaled = mse_loss(&[2.0 + 0.0, -6.0], &[1.0, 0.0]).unwrap();
        assert!((scaled - 4.0 * base).abs() < 1e-12);
        assert!(mse_loss(&[], &[]).is_err());
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_residual_gives_zero_gradients() {
        let p = NetworkParams::init(3, 5);
        let x = [0.1, 0.2, 0.3];
        let y = p.predict(&[&x]).unwrap();
        let (loss, g) = p.batch_gradient(&[(vec![&x[..]], y)]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.tensors().iter().all(|(_, m)| m.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn output_bias_gradient_is_mean_residual() {
        let p = NetworkParams::init(2, 9);
        let xs = [[0.1, 0.9], [0.5, 0.5], [0.8, 0.2]];
        let targets = [0.3, -0.4, 1.2];
        let batch: Vec<(Vec<&[f64]>, f64)> = xs.iter().zip(targets).map(|(x, t)| (vec![&x[..]], t)).collect();
        let (_, g) = p.batch_gradient(&batch).unwrap();
        let expected: f64 = xs.iter().zip(targets).map(|(x, t)| 2.0 * (p.predict(&[&x[..]]).unwrap() - t) / 3.0).sum();
        assert!((g.output_bias.data[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = NetworkParams::init(3, 2);
        let before = p.clone();
        let mut state = OptimizerState::new(&p, 1e-3);
        let zero = p.zeros_like();
        adam_step(&mut p, &zero, &mut state).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = NetworkParams::init(2, 3);
        let before = p.clone();
        let mut g = p.zeros_like();
        g.output_bias.data[0] = 0.25;
        g.dense1_weight.data[3] = -4.0;
        let mut state = OptimizerState::new(&p, 1e-3);
        adam_step(&mut p, &g, &mut state).unwrap();
        let d_bias = p.output_bias.data[0] - before.output_bias.data[0];
        let d_w = p.dense1_weight.data[3] - before.dense1_weight.data[3];
        assert!((d_bias + 1e-3).abs() < 1e-9, "{d_bias}");
        assert!((d_w - 1e-3).abs() < 1e-9, "{d_w}");
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut p = NetworkParams::init(2, 3);
        let mut g = p.zeros_like();
        g.lstm_bias.data[0] = f64::NAN;
        let mut state = OptimizerState::new(&p, 1e-3);
        let err = adam_step(&mut p, &g, &mut state).unwrap_err();
        assert_eq!(err, NeuralError::NonFinite { tensor: "lstm_bias", step: 1 });
        assert_eq!(state.step, 0);
    }

    #[test]
    fn adam_is_deterministic() {
        let p0 = NetworkParams::init(2, 3);
        let mut g = p0.zeros_like();
        g.lstm_input.data[1] = 0.5;
        let run = || {
            let mut p = p0.clone();
            let mut s = OptimizerState::new(&p, 1e-3);
            adam_step(&mut p, &g, &mut s).unwrap();
            adam_step(&mut p, &g, &mut s).unwrap();
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = NetworkParams::init(13, 42);
        assert_eq!(a, NetworkParams::init(13, 42));
        assert_ne!(a, NetworkParams::init(13, 43));
        let limit = (6.0 / (40.0 + 13.0_f64)).sqrt();
        assert!(a.lstm_input.data.iter().all(|v| v.abs() <= limit));
        assert_eq!(a.parameter_count(), 40 * 13 + 40 * 10 + 40 + 50 + 5 + 15 + 3 + 3 + 1);
    }

    #[test]
    fn split_is_seeded() {
        let (t, v) = split_rows(100, 0.1, 7);
        assert_eq!((t.len(), v.len()), (90, 10));
        assert_eq!(split_rows(100, 0.1, 7), (t, v));
        let (t, v) = split_rows(1, 0.5, 0);
        assert_eq!((t.len(), v.len()), (1, 0));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
