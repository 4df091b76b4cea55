//! Reference probabilistic classifier: a small backbone, global average
//! pooling for grid inputs, and a two-logit softmax head.

mod model;
mod train;

pub use model::{Architecture, Backbone, Conv2d, Dense, Model};
pub use train::{
    train_on_splits, train_two_stage, Checkpoint, EpochLoss, LossCurves, Stage, TrainConfig, TrainOutcome,
};

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Probability floor applied before taking logarithms in the loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// A single sample's activations, stored channel-major (`[c][i][j]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidInput("feature map dimensions must be positive".into()));
        }
        if values.len() != height * width * channels {
            return Err(Error::ShapeMismatch { expected: height * width * channels, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature map holds a non-finite value".into()));
        }
        Ok(Self { height, width, channels, values })
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let hw = self.height * self.width;
        &self.values[c * hw..(c + 1) * hw]
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
}

/// Per-channel spatial mean.
pub fn gap_pool(map: &FeatureMap) -> Vec<f64> {
    let scale = 1.0 / (map.height * map.width) as f64;
    (0..map.channels).map(|c| map.channel(c).iter().sum::<f64>() * scale).collect()
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Empty("logit vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite logit".into()));
    }
    Ok(softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-ln(max(probs[label], 1e-12))`.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs.get(label).ok_or_else(|| Error::InvalidInput(format!("label index {label} out of range")))?;
    // NaN must propagate so divergence stays visible.
    Ok(if p.is_nan() { f64::NAN } else { -libm::log(p.max(PROB_FLOOR)) })
}
