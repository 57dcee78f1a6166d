//! Online classification pipeline: a flow table fed by replayed capture
//! traffic under a simulated clock, periodic flush into a single-slot batch
//! mailbox, classification, and an append-only result store.
//!
//! The engine clock is derived from capture timestamps, not wall time;
//! flush and eviction run on the same W_g tick, with eviction age checked
//! against W_r. Flushed entries are removed, so a flow is classified at
//! most once unless its traffic re-creates an entry later.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, TrainError};
use crate::finetune::argmax;
use crate::model::ClassifierModel;
use crate::packet::{FiveTuple, PacketRecord};
use crate::repr::{clamp_size, crop_pad_packet, normalize_interval, FlowSample, ReprConfig};

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub repr: ReprConfig,
    /// Flush period in engine seconds.
    pub w_g_secs: f64,
    /// Eviction age in engine seconds.
    pub w_r_secs: f64,
    /// Replay pacing factor; affects reported durations only, never the
    /// flush/evict schedule or classification outputs.
    pub speed_factor: f64,
}

impl EngineConfig {
    pub fn new(repr: ReprConfig) -> Self {
        EngineConfig {
            repr,
            w_g_secs: 3.0,
            w_r_secs: 10.0,
            speed_factor: 1.0,
        }
    }
}

/// Live state for one flow: byte blocks while under M_b packets, raw
/// size/arrival buffers while under M_seq, and the creation timestamp that
/// drives eviction.
#[derive(Debug, Clone)]
pub struct FlowTableEntry {
    pub key: FiveTuple,
    pub byte_buffer: Vec<u8>,
    pub size_buffer: Vec<u32>,
    pub arrival_buffer: Vec<u64>,
    pub packet_count: usize,
    pub created_at: u64,
    pub wire_bytes: u64,
}

/// Insertion-ordered flow table; traversal order is deterministic.
pub struct FlowTable {
    entries: IndexMap<FiveTuple, FlowTableEntry>,
    repr: ReprConfig,
}

impl FlowTable {
    pub fn new(repr: ReprConfig) -> Self {
        FlowTable {
            entries: IndexMap::new(),
            repr,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Creates the entry on first sight (created_at = now) and appends
    /// cropped/padded bytes while under M_b packets and raw sequence values
    /// while under M_seq.
    pub fn ingest(&mut self, p: &PacketRecord, now_us: u64) {
        let repr = &self.repr;
        let entry = self.entries.entry(p.tuple).or_insert_with(|| FlowTableEntry {
            key: p.tuple,
            byte_buffer: Vec::with_capacity(repr.byte_array_len()),
            size_buffer: Vec::with_capacity(repr.m_seq),
            arrival_buffer: Vec::with_capacity(repr.m_seq),
            packet_count: 0,
            created_at: now_us,
            wire_bytes: 0,
        });
        if entry.packet_count < repr.m_b {
            entry.byte_buffer.extend_from_slice(&crop_pad_packet(p, repr));
        }
        if entry.packet_count < repr.m_seq {
            entry.size_buffer.push(p.wire_length);
            entry.arrival_buffer.push(p.arrival_us);
        }
        entry.packet_count += 1;
        entry.wire_bytes += p.wire_length as u64;
    }

    fn entry_to_sample(entry: &FlowTableEntry, repr: &ReprConfig) -> FlowSample {
        let mut byte_array = entry.byte_buffer.clone();
        byte_array.resize(repr.byte_array_len(), 0);
        let mut size_seq = vec![0u32; repr.m_seq];
        let mut interval_seq = vec![0f64; repr.m_seq];
        for (i, (&size, &arr)) in entry
            .size_buffer
            .iter()
            .zip(&entry.arrival_buffer)
            .enumerate()
        {
            size_seq[i] = clamp_size(size, repr.mtu);
            let gap_us = if i == 0 {
                0
            } else {
                arr.saturating_sub(entry.arrival_buffer[i - 1])
            };
            interval_seq[i] =
                normalize_interval(gap_us as f64 / 1e6).expect("non-negative gap");
        }
        FlowSample {
            key: entry.key,
            byte_array,
            size_seq,
            interval_seq,
            first_ts: entry.created_at,
            label: None,
        }
    }

    /// Removes every entry holding at least M_b packets and converts it to
    /// a FlowSample (normalization happens here). Traversal order is entry
    /// creation order.
    pub fn flush(&mut self, _now_us: u64) -> Vec<(FlowSample, u64)> {
        let repr = self.repr.clone();
        let mut flushed = Vec::new();
        let keys: Vec<FiveTuple> = self
            .entries
            .iter()
            .filter(|(_, e)| e.packet_count >= repr.m_b)
            .map(|(k, _)| *k)
            .collect();
        for k in keys {
            let entry = self.entries.shift_remove(&k).expect("key present");
            let sample = Self::entry_to_sample(&entry, &repr);
            flushed.push((sample, entry.wire_bytes));
        }
        flushed
    }

    /// Drops every entry aged at least W_r, regardless of packet count.
    pub fn evict(&mut self, now_us: u64, w_r_us: u64) -> usize {
        let before = self.entries.len();
        self.entries
            .retain(|_, e| now_us.saturating_sub(e.created_at) < w_r_us);
        before - self.entries.len()
    }

    pub fn get(&self, key: &FiveTuple) -> Option<&FlowTableEntry> {
        self.entries.get(key)
    }
}

/// Single-producer/single-consumer batch slot. The producer appends and
/// sets `status` last; the consumer clears `status` first and then drains.
/// A produce onto an unconsumed batch merges rather than drops.
#[derive(Default)]
pub struct BatchMailbox {
    samples: Vec<(FlowSample, u64)>,
    flush_at_us: u64,
    status: bool,
}

impl BatchMailbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn status(&self) -> bool {
        self.status
    }

    pub fn sample_size(&self) -> usize {
        self.samples.len()
    }

    pub fn produce(&mut self, mut batch: Vec<(FlowSample, u64)>, flush_at_us: u64) {
        if batch.is_empty() {
            return;
        }
        self.samples.append(&mut batch);
        self.flush_at_us = flush_at_us;
        self.status = true;
    }

    pub fn consume(&mut self) -> Result<(Vec<(FlowSample, u64)>, u64), EngineError> {
        if !self.status {
            return Err(EngineError::EmptyMailbox);
        }
        self.status = false;
        Ok((std::mem::take(&mut self.samples), self.flush_at_us))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassifiedFlow {
    pub key: FiveTuple,
    pub label: u32,
    /// Max softmax probability, in (0, 1].
    pub score: f64,
    /// Engine-clock microseconds of the flush that produced the batch.
    pub classified_at: u64,
    pub batch_id: u64,
}

/// Frozen classifier wrapper used by the engine.
pub struct FlowClassifier {
    pub model: ClassifierModel<f32>,
    pub batch_size: usize,
}

impl FlowClassifier {
    /// Rebuilds a classifier from checkpoint parts. The checkpoint meta
    /// must embed the run config and class count it was trained with.
    pub fn from_checkpoint_parts(
        meta: &serde_json::Value,
        tensors: &[stridenet_tensor::checkpoint::NamedTensor<f32>],
    ) -> Result<Self, EngineError> {
        let cfg: crate::config::RunConfig = serde_json::from_value(
            meta.get("config")
                .cloned()
                .ok_or_else(|| EngineError::Io(std::io::Error::other("checkpoint meta lacks config")))?,
        )
        .map_err(|e| EngineError::Io(std::io::Error::other(e)))?;
        let n_classes = meta
            .get("n_classes")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| EngineError::Io(std::io::Error::other("checkpoint meta lacks n_classes")))?
            as usize;
        let mut rng = crate::seed::SeedTree::new(0).rng("init");
        let mut store = stridenet_tensor::optim::ParamStore::<f32>::new();
        let model = ClassifierModel::init(&mut store, &cfg.model, &cfg.repr, n_classes, &mut rng)
            .map_err(TrainError::from)?;
        store.load_all(tensors).map_err(TrainError::from)?;
        Ok(FlowClassifier {
            model,
            batch_size: cfg.train.batch_size,
        })
    }

    pub fn from_checkpoint(path: &std::path::Path) -> Result<Self, EngineError> {
        let (meta, tensors) = stridenet_tensor::checkpoint::load::<f32, _>(path)
            .map_err(TrainError::from)?;
        Self::from_checkpoint_parts(&meta, &tensors)
    }

    pub fn logits(&self, samples: &[FlowSample]) -> Result<Vec<Vec<f64>>, TrainError> {
        crate::finetune::predict_logits(&self.model, samples, self.batch_size)
    }

    pub fn classify(&self, samples: &[FlowSample]) -> Result<Vec<(u32, f64)>, TrainError> {
        Ok(self
            .logits(samples)?
            .iter()
            .map(|row| {
                let y = argmax(row);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let den: f64 = row.iter().map(|&v| (v - m).exp()).sum();
                (y as u32, (row[y] - m).exp() / den)
            })
            .collect())
    }
}

/// Latest-per-flow classification results with optional JSONL persistence
/// (one ClassifiedFlow per line, append-only).
pub struct ResultStore {
    all: Vec<ClassifiedFlow>,
    latest: HashMap<FiveTuple, usize>,
    sink: Option<std::io::BufWriter<std::fs::File>>,
}

impl ResultStore {
    pub fn in_memory() -> Self {
        ResultStore {
            all: Vec::new(),
            latest: HashMap::new(),
            sink: None,
        }
    }

    pub fn with_jsonl(path: &std::path::Path) -> Result<Self, EngineError> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        Ok(ResultStore {
            all: Vec::new(),
            latest: HashMap::new(),
            sink: Some(std::io::BufWriter::new(file)),
        })
    }

    pub fn insert(&mut self, flow: ClassifiedFlow) -> Result<(), EngineError> {
        if let Some(sink) = &mut self.sink {
            let line = serde_json::to_string(&flow)
                .map_err(|e| EngineError::Io(std::io::Error::other(e)))?;
            sink.write_all(line.as_bytes())?;
            sink.write_all(b"\n")?;
        }
        self.latest.insert(flow.key, self.all.len());
        self.all.push(flow);
        Ok(())
    }

    pub fn flush_sink(&mut self) -> Result<(), EngineError> {
        if let Some(sink) = &mut self.sink {
            sink.flush()?;
        }
        Ok(())
    }

    /// Latest result for a flow key.
    pub fn query(&self, key: &FiveTuple) -> Result<&ClassifiedFlow, EngineError> {
        self.latest
            .get(key)
            .map(|&i| &self.all[i])
            .ok_or(EngineError::NotFound)
    }

    /// Paginated view over all results in classification order.
    pub fn page(&self, offset: usize, limit: usize) -> (usize, &[ClassifiedFlow]) {
        let total = self.all.len();
        let start = offset.min(total);
        let end = (start + limit).min(total);
        (total, &self.all[start..end])
    }

    pub fn len(&self) -> usize {
        self.all.len()
    }

    pub fn is_empty(&self) -> bool {
        self.all.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchStats {
    pub batch_id: u64,
    /// Engine-clock seconds since replay start.
    pub flush_at_secs: f64,
    pub n_samples: usize,
    pub wire_bytes: u64,
    /// Wall-clock inference time for the batch.
    pub infer_secs: f64,
    /// Wall-clock flush-to-result latency.
    pub latency_secs: f64,
    /// Wire bits carried by the batch divided by inference wall time.
    pub throughput_mbps: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub batches: Vec<BatchStats>,
    pub n_classified: usize,
    pub n_evicted: usize,
    pub n_packets: usize,
    /// Capture duration divided by the speed factor.
    pub sim_duration_secs: f64,
}

pub struct ReplayOutcome {
    pub results: Vec<ClassifiedFlow>,
    /// Flushed samples in emission order (what the classifier consumed).
    pub samples: Vec<FlowSample>,
    pub report: ReplayReport,
}

/// Destination for classification results; lets the replay loop write into
/// a locally owned store or a shared one behind a lock.
pub trait ResultSink {
    fn insert(&mut self, flow: ClassifiedFlow) -> Result<(), EngineError>;
    fn finish(&mut self) -> Result<(), EngineError> {
        Ok(())
    }
}

impl ResultSink for ResultStore {
    fn insert(&mut self, flow: ClassifiedFlow) -> Result<(), EngineError> {
        ResultStore::insert(self, flow)
    }
    fn finish(&mut self) -> Result<(), EngineError> {
        self.flush_sink()
    }
}

impl ResultSink for std::sync::Arc<std::sync::Mutex<ResultStore>> {
    fn insert(&mut self, flow: ClassifiedFlow) -> Result<(), EngineError> {
        self.lock().expect("result store poisoned").insert(flow)
    }
    fn finish(&mut self) -> Result<(), EngineError> {
        self.lock().expect("result store poisoned").flush_sink()
    }
}

/// Replays a capture through the engine under the simulated clock. Packets
/// are ingested in timestamp order; every W_g seconds the table is flushed
/// into the mailbox, the batch is consumed and classified, and aged entries
/// are evicted. Deterministic for a fixed model and input.
pub fn replay<S: ResultSink>(
    pcap: &[u8],
    classifier: &FlowClassifier,
    cfg: &EngineConfig,
    store: &mut S,
) -> Result<ReplayOutcome, EngineError> {
    let records = crate::packet::parse_capture(pcap)?;
    let records = crate::packet::filter_non_ip(records);
    let records = records
        .into_iter()
        .map(crate::packet::anonymize)
        .collect::<Result<Vec<_>, _>>()?;

    let mut table = FlowTable::new(cfg.repr.clone());
    let mut mailbox = BatchMailbox::new();
    let w_g_us = (cfg.w_g_secs * 1e6) as u64;
    let w_r_us = (cfg.w_r_secs * 1e6) as u64;
    let mut report = ReplayReport {
        batches: Vec::new(),
        n_classified: 0,
        n_evicted: 0,
        n_packets: records.len(),
        sim_duration_secs: 0.0,
    };
    let mut results = Vec::new();
    let mut all_samples = Vec::new();
    if records.is_empty() {
        return Ok(ReplayOutcome {
            results,
            samples: all_samples,
            report,
        });
    }

    let t0 = records[0].arrival_us;
    let last_ts = records.last().map(|r| r.arrival_us).unwrap_or(t0);
    let mut next_batch_id = 0u64;

    let mut run_tick = |tick_us: u64,
                        table: &mut FlowTable,
                        mailbox: &mut BatchMailbox,
                        store: &mut S,
                        report: &mut ReplayReport,
                        results: &mut Vec<ClassifiedFlow>,
                        all_samples: &mut Vec<FlowSample>|
     -> Result<(), EngineError> {
        let flush_started = Instant::now();
        let flushed = table.flush(tick_us);
        mailbox.produce(flushed, tick_us);
        if mailbox.status() {
            let (batch, flush_at) = mailbox.consume()?;
            let wire_bytes: u64 = batch.iter().map(|(_, w)| w).sum();
            let samples: Vec<FlowSample> = batch.into_iter().map(|(s, _)| s).collect();
            let infer_started = Instant::now();
            let classified = classifier.classify(&samples)?;
            let infer_secs = infer_started.elapsed().as_secs_f64();
            let batch_id = next_batch_id;
            next_batch_id += 1;
            for (sample, (label, score)) in samples.iter().zip(&classified) {
                let flow = ClassifiedFlow {
                    key: sample.key,
                    label: *label,
                    score: *score,
                    classified_at: flush_at,
                    batch_id,
                };
                results.push(flow.clone());
                store.insert(flow)?;
            }
            let latency_secs = flush_started.elapsed().as_secs_f64();
            report.n_classified += samples.len();
            report.batches.push(BatchStats {
                batch_id,
                flush_at_secs: (flush_at - t0) as f64 / 1e6 / cfg.speed_factor,
                n_samples: samples.len(),
                wire_bytes,
                infer_secs,
                latency_secs,
                throughput_mbps: if infer_secs > 0.0 {
                    wire_bytes as f64 * 8.0 / infer_secs / 1e6
                } else {
                    0.0
                },
            });
            all_samples.extend(samples);
        }
        report.n_evicted += table.evict(tick_us, w_r_us);
        Ok(())
    };

    let mut next_tick = t0 + w_g_us;
    for p in &records {
        while p.arrival_us >= next_tick {
            run_tick(
                next_tick,
                &mut table,
                &mut mailbox,
                store,
                &mut report,
                &mut results,
                &mut all_samples,
            )?;
            next_tick += w_g_us;
        }
        table.ingest(p, p.arrival_us);
    }
    // drain: keep ticking until every remaining entry has flushed or aged out
    let horizon = last_ts + w_r_us + w_g_us;
    while !table.is_empty() && next_tick <= horizon {
        run_tick(
            next_tick,
            &mut table,
            &mut mailbox,
            store,
            &mut report,
            &mut results,
            &mut all_samples,
        )?;
        next_tick += w_g_us;
    }
    store.finish()?;
    report.sim_duration_secs = (last_ts - t0) as f64 / 1e6 / cfg.speed_factor;
    Ok(ReplayOutcome {
        results,
        samples: all_samples,
        report,
    })
}

/// Empirical CDF points (value, fraction <= value) for plotting.
pub fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n as f64))
        .collect()
}
