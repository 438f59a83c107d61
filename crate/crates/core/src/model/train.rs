//! Whole-image training with best-validation retention.

use super::config::{ConfigError, ModelConfig};
use super::loss::masked_cross_entropy;
use super::loss::predict_classes;
use super::net::Model;
use crate::data::HsiScene;
use crate::metrics;
use crate::ssm::ScanMode;
use crate::tensor::{no_grad, Adam};
use std::fmt;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    pub train_loss: f64,
    /// Overall accuracy on the validation pixels after this epoch's step.
    pub val_oa: f64,
}

/// A finished run: the selected model plus everything needed to report it.
pub struct TrainOutcome {
    /// Weights of the best-validation epoch (not necessarily the last).
    pub model: Model,
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were kept; `None` only when `epochs == 0`.
    pub best_epoch: Option<usize>,
    pub best_val_oa: Option<f64>,
}

impl fmt::Debug for TrainOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrainOutcome")
            .field("epochs_run", &self.history.len())
            .field("best_epoch", &self.best_epoch)
            .field("best_val_oa", &self.best_val_oa)
            .finish_non_exhaustive()
    }
}

/// Why a run could not produce a model.
#[derive(Debug)]
pub enum TrainError {
    Config(ConfigError),
    /// Scene and config disagree, or the scene cannot be trained on.
    Invalid(String),
    /// The loss left the finite range; training state is unrecoverable.
    Diverged { epoch: usize },
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Config(e) => write!(f, "{e}"),
            TrainError::Invalid(message) => write!(f, "{message}"),
            TrainError::Diverged { epoch } => {
                write!(f, "training diverged: non-finite loss at epoch {epoch}")
            }
        }
    }
}

impl std::error::Error for TrainError {}

impl From<ConfigError> for TrainError {
    fn from(e: ConfigError) -> TrainError {
        TrainError::Config(e)
    }
}

/// Trains on the scene's train mask and keeps the weights of the epoch with
/// the best validation overall accuracy.
///
/// Each epoch is one full-image forward, the masked loss, one Adam step,
/// then a no-grad forward scored on the validation pixels. A scene without
/// validation pixels falls back to selecting on the training mask (with a
/// warning), so the loop always has a selection signal. `on_epoch` fires
/// after each epoch with the record that also lands in `history`.
///
/// With `epochs == 0` the initialized model comes back untouched and the
/// history is empty. The whole run is deterministic: equal scene, config
/// and seed give a bit-identical loss log and final weights.
pub fn train<F: FnMut(&EpochRecord)>(
    scene: &HsiScene,
    config: &ModelConfig,
    mode: ScanMode,
    mut on_epoch: F,
) -> Result<TrainOutcome, TrainError> {
    scene.validate().map_err(|e| TrainError::Invalid(e.to_string()))?;
    config.validate()?;
    if scene.channels != config.spectral_channels {
        return Err(TrainError::Invalid(format!(
            "scene has {} bands, config expects {}",
            scene.channels, config.spectral_channels
        )));
    }
    if scene.class_count != config.class_count {
        return Err(TrainError::Invalid(format!(
            "scene has {} classes, config expects {}",
            scene.class_count, config.class_count
        )));
    }
    if !scene.train_mask.iter().any(|&m| m) {
        return Err(TrainError::Invalid("train mask selects no pixels".to_string()));
    }
    let val_mask = if scene.val_mask.iter().any(|&m| m) {
        &scene.val_mask
    } else {
        log::warn!("validation mask is empty; selecting the best epoch on training pixels");
        &scene.train_mask
    };

    let model = Model::new(config)?;
    if config.epochs == 0 {
        return Ok(TrainOutcome { model, history: Vec::new(), best_epoch: None, best_val_oa: None });
    }

    let image = scene.to_image_tensor();
    let params = model.named_params();
    let mut optimizer = Adam::new(params.clone(), config.lr);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Vec<Vec<f32>>)> = None;

    for epoch in 1..=config.epochs {
        let logits = model.forward(&image, mode);
        let loss = masked_cross_entropy(&logits, &scene.labels, &scene.train_mask)
            .map_err(|e| TrainError::Invalid(e.to_string()))?;
        let train_loss = loss.item() as f64;
        if !train_loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        optimizer.zero_grads();
        loss.backward();
        optimizer.step();

        let val_logits = no_grad(|| model.forward(&image, mode));
        let pred = predict_classes(&val_logits);
        let report =
            metrics::evaluate(&pred, &scene.labels, val_mask, scene.class_count as u16)
                .map_err(|e| TrainError::Invalid(e.to_string()))?;
        let record = EpochRecord { epoch, train_loss, val_oa: report.oa };
        on_epoch(&record);
        history.push(record);

        if best.as_ref().is_none_or(|(_, oa, _)| report.oa > *oa) {
            let snapshot = params.iter().map(|(_, t)| t.to_vec()).collect();
            best = Some((epoch, report.oa, snapshot));
        }
    }

    let (best_epoch, best_val_oa, snapshot) = best.expect("epochs > 0 always selects an epoch");
    for ((_, param), values) in params.iter().zip(&snapshot) {
        param.set_data(values);
    }
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: Some(best_epoch),
        best_val_oa: Some(best_val_oa),
    })
}
