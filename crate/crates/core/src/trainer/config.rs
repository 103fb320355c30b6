use serde::{Deserialize, Serialize};

use crate::embednet::{HeadDims, MaxNormScope};
use crate::error::{Error, Result};
use crate::sgt::{SgtVariant, SGT_DIM};

/// Hyper-parameters for both training stages.
///
/// Deserialization rejects unknown keys; missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    /// Weight of the reciprocal triplet term in the stage-1 loss.
    pub lambda: f64,
    /// Negative-pair margin of the cosine alignment loss.
    pub margin_m: f64,
    pub weight_decay: f64,
    pub maxnorm_delta: f64,
    pub maxnorm_scope: MaxNormScope,
    /// Weight decay and max-norm during training.
    pub ltr_enabled: bool,
    /// Run the genetic alignment stage after stage 1.
    pub align_enabled: bool,
    pub seed: u64,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    pub kappa: f64,
    pub sgt_variant: SgtVariant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            batch_size: 64,
            epochs_stage1: 20,
            epochs_stage2: 5,
            lambda: 0.01,
            margin_m: 0.5,
            weight_decay: 5e-3,
            maxnorm_delta: 1.0,
            maxnorm_scope: MaxNormScope::Classifier,
            ltr_enabled: true,
            align_enabled: true,
            seed: 0,
            input_dim: 2048,
            hidden_dim: 1000,
            embedding_dim: SGT_DIM,
            kappa: 1.0,
            sgt_variant: SgtVariant::LengthSensitive,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("lambda", self.lambda),
            ("margin_m", self.margin_m),
            ("maxnorm_delta", self.maxnorm_delta),
            ("kappa", self.kappa),
        ];
        for (name, v) in positive {
            // lr = 0 is allowed: it turns training into a dry run
            let ok = if name == "lr" { v >= 0.0 } else { v > 0.0 };
            if !ok || !v.is_finite() {
                return Err(Error::invalid(format!("config {name} must be positive, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid(format!(
                "config weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("embedding_dim", self.embedding_dim),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("config {name} must be >= 1")));
            }
        }
        if self.align_enabled && self.embedding_dim != SGT_DIM {
            return Err(Error::invalid(format!(
                "alignment needs embedding_dim = {SGT_DIM} (the genetic embedding size), got {}",
                self.embedding_dim
            )));
        }
        Ok(())
    }

    pub fn head_dims(&self, classes: usize) -> HeadDims {
        HeadDims {
            input: self.input_dim,
            hidden: self.hidden_dim,
            embedding: self.embedding_dim,
            classes,
        }
    }

    /// Weight decay actually applied (zero unless LTR is enabled).
    pub fn effective_weight_decay(&self) -> f64 {
        if self.ltr_enabled {
            self.weight_decay
        } else {
            0.0
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
