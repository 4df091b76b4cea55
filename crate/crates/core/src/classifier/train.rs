use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{Architecture, Model};
use crate::dataset::{Dataset, Label, Split, SplitAssignment};
use crate::rng::rng_for;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub batch_size: usize,
    pub stage_a_lr: f64,
    pub stage_b_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub stage_a_epochs: usize,
    pub stage_b_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::default(),
            batch_size: 512,
            stage_a_lr: 1e-3,
            stage_b_lr: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            stage_a_epochs: 30,
            stage_b_epochs: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        let lrs_ok = [self.stage_a_lr, self.stage_b_lr].iter().all(|l| *l > 0.0 && l.is_finite());
        if !lrs_ok || !(self.adam_epsilon > 0.0) {
            return Err(Error::InvalidConfig("learning rates and epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// The seeded initialization, before any update.
    Init,
    /// Backbone frozen, head trained.
    A,
    /// Everything trainable.
    B,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Init => "init",
            Stage::A => "a",
            Stage::B => "b",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: Model,
    pub stage: Stage,
    /// 1-based epoch within `stage`; 0 for the initialization.
    pub epoch: usize,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub stage: Stage,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurves {
    pub stage_a: Vec<EpochLoss>,
    pub stage_b: Vec<EpochLoss>,
}

impl LossCurves {
    pub fn iter(&self) -> impl Iterator<Item = &EpochLoss> {
        self.stage_a.iter().chain(&self.stage_b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters after the last Stage-B epoch.
    pub final_model: Model,
    pub curves: LossCurves,
    /// Global minimum of validation loss, including the initialization.
    pub best: Checkpoint,
    pub init_validation_loss: f64,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(model: &Model, lr: f64, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_epsilon,
        }
    }

    /// Updates tensors from index `first` onward.
    fn step(&mut self, model: &mut Model, grad: &Model, first: usize) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, f64::from(self.t));
        let c2 = 1.0 - libm::pow(self.beta2, f64::from(self.t));
        let grads = grad.tensors();
        for (k, params) in model.tensors_mut().into_iter().enumerate().skip(first) {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], grads[k]);
            for i in 0..params.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                params[i] -= self.lr * mhat / (libm::sqrt(vhat) + self.eps);
            }
        }
    }
}

struct Labeled<'a> {
    xs: Vec<&'a [f64]>,
    ys: Vec<Label>,
}

fn gather<'a>(data: &'a Dataset, ids: &[u64], what: &'static str) -> Result<Labeled<'a>> {
    let recs = data.select(ids)?;
    if recs.is_empty() {
        return Err(Error::Empty(what));
    }
    let ys: Vec<Label> = recs.iter().map(|r| r.label).collect();
    if !ys.contains(&Label::Abnormal) || !ys.contains(&Label::NoFinding) {
        return Err(Error::InvalidInput(alloc::format!("{what} must contain both classes")));
    }
    Ok(Labeled { xs: recs.iter().map(|r| r.features.as_slice()).collect(), ys })
}

/// Two-stage schedule: head-only Adam at `stage_a_lr`, then the full model
/// from the best checkpoint so far at `stage_b_lr`. A checkpoint is taken
/// whenever validation loss strictly improves.
pub fn train_two_stage(data: &Dataset, train_ids: &[u64], val_ids: &[u64], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train = gather(data, train_ids, "training set")?;
    let val = gather(data, val_ids, "validation set")?;

    let init = Model::init(cfg.architecture, data.shape(), cfg.seed)?;
    let init_loss = init.mean_loss(&val.xs, &val.ys)?;
    let mut best = Checkpoint { model: init.clone(), stage: Stage::Init, epoch: 0, validation_loss: init_loss };
    let mut curves = LossCurves::default();

    let frozen = init.backbone_tensor_count();
    let mut model = init;
    let stages =
        [(Stage::A, cfg.stage_a_epochs, cfg.stage_a_lr, frozen), (Stage::B, cfg.stage_b_epochs, cfg.stage_b_lr, 0)];
    for (stage, epochs, lr, first_trainable) in stages {
        if stage == Stage::B {
            model = best.model.clone();
        }
        let mut adam = Adam::new(&model, lr, cfg);
        let mut order: Vec<usize> = (0..train.xs.len()).collect();
        let mut batch_rng = rng_for(cfg.seed, if stage == Stage::A { "batches-a" } else { "batches-b" });
        let record = if stage == Stage::A { &mut curves.stage_a } else { &mut curves.stage_b };
        for epoch in 1..=epochs {
            order.shuffle(&mut batch_rng);
            let mut loss_sum = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let xs: Vec<&[f64]> = chunk.iter().map(|&i| train.xs[i]).collect();
                let ys: Vec<Label> = chunk.iter().map(|&i| train.ys[i]).collect();
                let (loss, grad) = model.loss_and_grad(&xs, &ys, first_trainable > 0)?;
                loss_sum += loss * chunk.len() as f64;
                adam.step(&mut model, &grad, first_trainable);
            }
            let train_loss = loss_sum / train.xs.len() as f64;
            let val_loss = model.mean_loss(&val.xs, &val.ys)?;
            let params_finite = model.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()));
            if !train_loss.is_finite() || !val_loss.is_finite() || !params_finite {
                return Err(Error::Diverged { stage: stage.name(), epoch });
            }
            record.push(EpochLoss { stage, epoch, train_loss, val_loss });
            if val_loss < best.validation_loss {
                best = Checkpoint { model: model.clone(), stage, epoch, validation_loss: val_loss };
            }
        }
    }
    Ok(TrainOutcome { final_model: model, curves, best, init_validation_loss: init_loss })
}

/// Trains on the train split, checkpointing on the validation split.
pub fn train_on_splits(data: &Dataset, splits: &SplitAssignment, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_two_stage(data, &splits.ids(Split::Train), &splits.ids(Split::Validation), cfg)
}
