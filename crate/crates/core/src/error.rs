use thiserror::Error;

#[derive(Debug, Error)]
pub enum PacketError {
    #[error("malformed pcap global header")]
    MalformedGlobalHeader,
    #[error("truncated pcap record at offset {0}")]
    TruncatedRecord(usize),
    #[error("unsupported link type {0}")]
    UnsupportedLinkType(u32),
    #[error("ip header shorter than its length field claims")]
    HeaderTooShort,
}

#[derive(Debug, Error)]
pub enum ReprError {
    #[error("flow has no packets")]
    EmptyFlow,
    #[error("byte array length {len} not divisible by stride {stride}")]
    IndivisibleLength { len: usize, stride: usize },
    #[error("negative inter-arrival interval")]
    NegativeInterval,
    #[error("invalid representation config: {0}")]
    InvalidConfig(String),
    #[error("flow sample io: {0}")]
    Io(#[from] std::io::Error),
    #[error("flow sample record: {0}")]
    Record(String),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("masking ratio {0} outside [0, 1)")]
    RatioOutOfRange(f64),
    #[error("mask plan does not match sequence layout: {0}")]
    PlanMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("split {0} is empty")]
    EmptySplit(&'static str),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u32, classes: usize },
    #[error("size class {0} exceeds the clamp ceiling")]
    ClassOutOfRange(u32),
    #[error("class {class} has {count} samples, need at least 3 to split")]
    TooFewSamples { class: u32, count: usize },
    #[error("unlabeled sample in labeled dataset")]
    MissingLabel,
    #[error(transparent)]
    Tensor(#[from] stridenet_tensor::TensorError),
    #[error(transparent)]
    Repr(#[from] ReprError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("mailbox has no pending batch")]
    EmptyMailbox,
    #[error("no classification result for the requested flow")]
    NotFound,
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error(transparent)]
    Repr(#[from] ReprError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Tensor(#[from] stridenet_tensor::TensorError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}
