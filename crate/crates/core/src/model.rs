//! Trained model files: network tensors bundled with the feature mask and
//! normalization they were trained against.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{CaptureMode, FeatureError, FeatureMask, MarketSnapshot, NormalizationSpec, N_FEATURES};
use crate::neural::{self, EpochLoss, NetworkParams, NeuralError, OptimizerState, TrainConfig, TrainingSet};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unsupported model version {0} (expected {MODEL_VERSION})")]
    Version(u32),
    #[error("model mask has {mask} features but the network expects {network}")]
    MaskMismatch { mask: usize, network: usize },
    #[error("normalization mask differs from the model mask")]
    NormalizationMismatch,
    #[error("sequence_length must be at least 1")]
    SequenceLength,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub mask: FeatureMask,
    pub normalization: NormalizationSpec,
    pub sequence_length: usize,
    /// Decay used for the equilibrium-estimate feature.
    pub rho: f64,
    pub capture_mode: CaptureMode,
    pub params: NetworkParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerState>,
}

impl TrainedModel {
    /// Checks every internal consistency requirement. Called on load so that
    /// mismatches surface before any session starts.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.version != MODEL_VERSION {
            return Err(ModelError::Version(self.version));
        }
        if self.sequence_length == 0 {
            return Err(ModelError::SequenceLength);
        }
        self.normalization.validate()?;
        if self.normalization.mask != self.mask {
            return Err(ModelError::NormalizationMismatch);
        }
        if self.mask.len() != self.params.input_dim {
            return Err(ModelError::MaskMismatch { mask: self.mask.len(), network: self.params.input_dim });
        }
        self.params.validate_shapes()?;
        Ok(())
    }

    /// Prediction in ticks for a window of raw 13-feature vectors, oldest
    /// first. Inputs are clipped to the training range.
    pub fn predict_raw(&self, window: &[[f64; N_FEATURES]]) -> Result<f64, ModelError> {
        let normalized: Vec<Vec<f64>> = window.iter().map(|x| self.normalization.apply_clipped(x)).collect();
        let refs: Vec<&[f64]> = normalized.iter().map(|v| v.as_slice()).collect();
        let y = self.params.predict(&refs)?;
        Ok(self.normalization.denormalize_target(y))
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Normalizes rows under `spec` into a design matrix.
pub fn training_set(rows: &[MarketSnapshot], spec: &NormalizationSpec) -> TrainingSet {
    let width = spec.mask.len();
    let mut inputs = Vec::with_capacity(rows.len() * width);
    let mut targets = Vec::with_capacity(rows.len());
    for row in rows {
        inputs.extend(spec.apply(&row.features));
        targets.push(spec.normalize_target(row.target));
    }
    TrainingSet { width, inputs, targets }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub history: Vec<EpochLoss>,
    /// Validation MSE in normalized target units.
    pub final_val_mse: f64,
    pub degenerate_target: bool,
}

/// Fits normalization on `rows`, trains a network and packages the result.
pub fn fit_model(
    rows: &[MarketSnapshot],
    mask: &FeatureMask,
    capture_mode: CaptureMode,
    rho: f64,
    config: &TrainConfig,
) -> Result<(TrainedModel, FitReport), ModelError> {
    let normalization = NormalizationSpec::fit(rows, mask)?;
    let data = training_set(rows, &normalization);
    let outcome = neural::train(&data, config)?;
    let report = FitReport {
        final_val_mse: outcome.final_val_mse(),
        history: outcome.history,
        degenerate_target: normalization.degenerate_target(),
    };
    let model = TrainedModel {
        version: MODEL_VERSION,
        mask: mask.clone(),
        normalization,
        sequence_length: config.sequence_length,
        rho,
        capture_mode,
        params: outcome.params,
        optimizer: Some(outcome.optimizer),
    };
    Ok((model, report))
}
