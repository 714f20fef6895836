use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CandidateMode, LossConfig, MapperKind};

/// Starting point of the few-shot parameters θ in the joint stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaInit {
    /// Copy of the trained many-shot parameters θ*.
    #[default]
    ManyShot,
    /// Fresh random initialization.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    /// Adam step size of base-learner training (θ* and all baselines).
    pub alpha: f64,
    /// Step size of the local updates of θ in the joint stage.
    pub beta: f64,
    /// Step size of the global update of w and θ. Zero freezes both.
    pub gamma: f64,
    pub batch_size: usize,
    pub epochs_per_stage: usize,
    pub local_update_steps: usize,
    pub seed: u64,
    /// Learning-rate multiplier applied when a second stage starts.
    pub decay_between_stages: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Stop a base-learner stage after this many epochs without a lower
    /// overall validation loss, restoring the best parameters.
    pub early_stopping_patience: Option<usize>,
    /// β of the class-balanced weights `(1 − β) / (1 − β^n)`.
    pub class_balance_beta: f64,
    pub theta_init: ThetaInit,
    /// Apply the logQ correction in the joint (few-shot) stage as well.
    pub logq_on_few_shot: bool,
    /// Overwrite θ's final layers with F(θ; w) before every local step.
    pub overwrite_with_mapped: bool,
    pub mapper: MapperKind,
    pub candidates: CandidateMode,
    /// Record full-catalog validation loss after every epoch.
    pub track_validation: bool,
    #[serde(skip)]
    pub loss: LossConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            alpha: 1e-3,
            beta: 1e-3,
            gamma: 1e-3,
            batch_size: 1024,
            epochs_per_stage: 100,
            local_update_steps: 1,
            seed: 42,
            decay_between_stages: 0.1,
            grad_clip: Some(10.0),
            early_stopping_patience: None,
            class_balance_beta: 0.999,
            theta_init: ThetaInit::ManyShot,
            logq_on_few_shot: false,
            overwrite_with_mapped: false,
            mapper: MapperKind::PerUnit,
            candidates: CandidateMode::InBatch,
            track_validation: true,
            loss: LossConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("training.{name} must be a positive finite number, got {v}")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("decay_between_stages", self.decay_between_stages)?;
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::Config(format!("training.gamma must be finite and non-negative, got {}", self.gamma)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("training.batch_size must be at least 1".into()));
        }
        if self.local_update_steps == 0 {
            return Err(Error::Config("training.local_update_steps must be at least 1".into()));
        }
        if let Some(c) = self.grad_clip {
            positive("grad_clip", c)?;
        }
        if !(self.class_balance_beta > 0.0 && self.class_balance_beta < 1.0) {
            return Err(Error::Config(format!(
                "training.class_balance_beta must lie in (0, 1), got {}",
                self.class_balance_beta
            )));
        }
        self.loss.validate()
    }
}
