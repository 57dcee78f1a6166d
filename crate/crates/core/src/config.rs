//! Run configuration: one JSON document covering representation, model,
//! training, and loss settings. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::repr::ReprConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Mamba,
    Trans,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_enc: usize,
    pub d_dec: usize,
    /// SSM state size N.
    pub n_state: usize,
    pub n_enc_blocks: usize,
    pub n_dec_blocks: usize,
    pub block_kind: BlockKind,
    pub multimodal: bool,
    /// Attention heads (trans blocks only).
    pub n_heads: usize,
    pub mask_ratio_stride: f64,
    pub mask_ratio_seq: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_enc: 256,
            d_dec: 128,
            n_state: 16,
            n_enc_blocks: 4,
            n_dec_blocks: 2,
            block_kind: BlockKind::Mamba,
            multimodal: true,
            n_heads: 8,
            mask_ratio_stride: 0.9,
            mask_ratio_seq: 0.15,
        }
    }
}

impl ModelConfig {
    /// Inner width E = 2·D (expansion factor 2).
    pub fn e_of(d: usize) -> usize {
        2 * d
    }

    /// Low-rank bottleneck for the step-size projection.
    pub fn dt_rank(d: usize) -> usize {
        d.div_ceil(16)
    }

    /// Token count seen by the full (unmasked) encoder.
    pub fn seq_len(&self, repr: &ReprConfig) -> usize {
        if self.multimodal {
            repr.n_strides() + 2 * repr.m_seq + 1
        } else {
            repr.n_strides() + 1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Linear warmup over the first tenth, then linear decay to zero.
    Linear,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Pre-training steps.
    pub steps: usize,
    /// Fine-tuning epochs.
    pub epochs: usize,
    pub batch_size: usize,
    /// Pre-training learning rate.
    pub pretrain_lr: f64,
    /// Fine-tuning learning rate.
    pub finetune_lr: f64,
    pub schedule: LrSchedule,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2_000,
            epochs: 120,
            batch_size: 64,
            pretrain_lr: 1e-3,
            finetune_lr: 2e-3,
            schedule: LrSchedule::Linear,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LdaConfig {
    /// Class-balanced re-weighting strength, in [0, 1).
    pub beta: f64,
    /// Margin scale C; `None` picks C so the largest margin is 0.5.
    pub margin_c: Option<f64>,
    /// Softmax temperature for the OOD score.
    pub tau: f64,
    /// OOD threshold: scores >= s are in-distribution.
    pub threshold: f64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            beta: 0.999,
            margin_c: None,
            tau: 1.0,
            threshold: -0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub repr: ReprConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss: LdaConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.repr
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let m = &self.model;
        if m.d_enc == 0 || m.d_dec == 0 || m.n_state == 0 {
            return Err(ConfigError::Invalid("zero model dimension".into()));
        }
        if m.block_kind == BlockKind::Trans
            && (m.d_enc % m.n_heads != 0 || m.d_dec % m.n_heads != 0)
        {
            return Err(ConfigError::Invalid(format!(
                "widths {}/{} not divisible by {} heads",
                m.d_enc, m.d_dec, m.n_heads
            )));
        }
        if !(0.0..1.0).contains(&m.mask_ratio_stride) || !(0.0..1.0).contains(&m.mask_ratio_seq) {
            return Err(ConfigError::Invalid("mask ratio outside [0,1)".into()));
        }
        if !(0.0..1.0).contains(&self.loss.beta) {
            return Err(ConfigError::Invalid("beta outside [0,1)".into()));
        }
        if self.loss.tau <= 0.0 {
            return Err(ConfigError::Invalid("tau must be positive".into()));
        }
        if self.train.batch_size == 0 {
            return Err(ConfigError::Invalid("zero batch size".into()));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            serde_json::from_str(json).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("RunConfig serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_stock_architecture() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.repr.byte_array_len(), 1600);
        assert_eq!(cfg.repr.n_strides(), 400);
        assert_eq!(cfg.model.seq_len(&cfg.repr), 441);
        assert_eq!(
            ModelConfig {
                multimodal: false,
                ..cfg.model.clone()
            }
            .seq_len(&cfg.repr),
            401
        );
        assert_eq!(ModelConfig::e_of(cfg.model.d_enc), 512);
        assert_eq!(ModelConfig::e_of(cfg.model.d_dec), 256);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json(r#"{"model": {"d_enc": 64, "mystery": 1}}"#);
        assert!(err.is_err());
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = RunConfig::from_json(r#"{"train": {"steps": 10}}"#).unwrap();
        assert_eq!(cfg.train.steps, 10);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.model.d_enc, 256);
    }
}
