//! Encrypted-traffic classification toolkit: raw-capture parsing, stride
//! based flow representation, selective-state-space and attention sequence
//! models with masked-reconstruction pre-training, label-distribution-aware
//! fine-tuning, OOD scoring, evaluation metrics, and an online flow-table
//! classification engine driven by pcap replay.

pub mod config;
pub mod engine;
pub mod error;
pub mod finetune;
pub mod metrics;
pub mod model;
pub mod packet;
pub mod pcapgen;
pub mod pretrain;
pub mod repr;
pub mod seed;
pub mod synth;

pub use config::{BlockKind, LdaConfig, ModelConfig, RunConfig, TrainConfig};
pub use packet::{FiveTuple, PacketRecord};
pub use repr::{FlowSample, ReprConfig};
pub use seed::SeedTree;
