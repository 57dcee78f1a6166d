//! Flow representation: packets -> model-ready multimodal samples.
//!
//! Each flow's first M_b packets are cropped/padded to fixed header and
//! payload lengths and concatenated into one byte array, cut into
//! non-overlapping strides; the first M_seq packet sizes (clamped to the
//! MTU) and normalized inter-arrival intervals form the sequence modality.

use std::io::{BufRead, Write};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::ReprError;
use crate::packet::{FiveTuple, PacketRecord};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ReprConfig {
    /// Packets contributing raw bytes.
    pub m_b: usize,
    /// Header bytes kept per packet.
    pub n_h: usize,
    /// Payload bytes kept per packet.
    pub n_p: usize,
    /// Stride length in bytes.
    pub l_s: usize,
    /// Packets contributing size/interval sequences.
    pub m_seq: usize,
    /// Clamp ceiling for packet sizes.
    pub mtu: u32,
}

impl Default for ReprConfig {
    fn default() -> Self {
        ReprConfig {
            m_b: 5,
            n_h: 80,
            n_p: 240,
            l_s: 4,
            m_seq: 20,
            mtu: 1500,
        }
    }
}

impl ReprConfig {
    /// Packet block size N_h + N_p.
    pub fn block_len(&self) -> usize {
        self.n_h + self.n_p
    }

    /// Total byte-array length L_b.
    pub fn byte_array_len(&self) -> usize {
        self.m_b * self.block_len()
    }

    pub fn n_strides(&self) -> usize {
        self.byte_array_len() / self.l_s
    }

    pub fn validate(&self) -> Result<(), ReprError> {
        if self.m_b == 0 || self.block_len() == 0 || self.l_s == 0 || self.m_seq == 0 {
            return Err(ReprError::InvalidConfig("zero-sized dimension".into()));
        }
        if self.byte_array_len() % self.l_s != 0 {
            return Err(ReprError::InvalidConfig(format!(
                "byte array length {} not divisible by stride {}",
                self.byte_array_len(),
                self.l_s
            )));
        }
        if self.m_seq <= self.m_b {
            return Err(ReprError::InvalidConfig(format!(
                "m_seq {} must exceed m_b {}",
                self.m_seq, self.m_b
            )));
        }
        Ok(())
    }
}

/// Model-ready sample. Strides are a derived view of `byte_array`
/// (`cut_strides`), not stored separately.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub key: FiveTuple,
    pub byte_array: Vec<u8>,
    pub size_seq: Vec<u32>,
    pub interval_seq: Vec<f64>,
    pub first_ts: u64,
    pub label: Option<u32>,
}

/// Splits time-ordered records into directed flows keyed by the exact
/// 5-tuple; per-flow arrival order and first-seen flow order are preserved.
pub fn split_flows(records: Vec<PacketRecord>) -> IndexMap<FiveTuple, Vec<PacketRecord>> {
    let mut flows: IndexMap<FiveTuple, Vec<PacketRecord>> = IndexMap::new();
    for r in records {
        flows.entry(r.tuple).or_default().push(r);
    }
    flows
}

/// First N_h header bytes and N_p payload bytes, each zero-padded.
pub fn crop_pad_packet(p: &PacketRecord, cfg: &ReprConfig) -> Vec<u8> {
    let mut out = vec![0u8; cfg.block_len()];
    let h = p.header_bytes.len().min(cfg.n_h);
    out[..h].copy_from_slice(&p.header_bytes[..h]);
    let pl = p.payload_bytes.len().min(cfg.n_p);
    out[cfg.n_h..cfg.n_h + pl].copy_from_slice(&p.payload_bytes[..pl]);
    out
}

/// Concatenation of the first M_b cropped/padded packets; missing packet
/// slots stay all-zero.
pub fn build_byte_array(flow: &[PacketRecord], cfg: &ReprConfig) -> Result<Vec<u8>, ReprError> {
    if flow.is_empty() {
        return Err(ReprError::EmptyFlow);
    }
    let mut out = vec![0u8; cfg.byte_array_len()];
    for (i, p) in flow.iter().take(cfg.m_b).enumerate() {
        let block = crop_pad_packet(p, cfg);
        out[i * cfg.block_len()..(i + 1) * cfg.block_len()].copy_from_slice(&block);
    }
    Ok(out)
}

/// Non-overlapping strides: stride i covers bytes [L_s*i, L_s*(i+1)).
pub fn cut_strides(byte_array: &[u8], l_s: usize) -> Result<Vec<&[u8]>, ReprError> {
    if l_s == 0 || byte_array.len() % l_s != 0 {
        return Err(ReprError::IndivisibleLength {
            len: byte_array.len(),
            stride: l_s,
        });
    }
    Ok(byte_array.chunks_exact(l_s).collect())
}

pub fn clamp_size(x: u32, mtu: u32) -> u32 {
    x.min(mtu)
}

/// Interval normalization (1+x)/(2+x): 0 -> 0.5, monotone, limit 1.
pub fn normalize_interval(x_secs: f64) -> Result<f64, ReprError> {
    if x_secs < 0.0 {
        return Err(ReprError::NegativeInterval);
    }
    Ok((1.0 + x_secs) / (2.0 + x_secs))
}

/// Sizes and normalized intervals of the first M_seq packets. The first
/// interval is defined as 0 seconds (-> 0.5); short flows are padded with
/// the sentinel 0, which sits outside the normalized range [0.5, 1).
pub fn extract_sequences(
    flow: &[PacketRecord],
    cfg: &ReprConfig,
) -> Result<(Vec<u32>, Vec<f64>), ReprError> {
    if flow.is_empty() {
        return Err(ReprError::EmptyFlow);
    }
    let mut sizes = vec![0u32; cfg.m_seq];
    let mut intervals = vec![0f64; cfg.m_seq];
    for (i, p) in flow.iter().take(cfg.m_seq).enumerate() {
        sizes[i] = clamp_size(p.wire_length, cfg.mtu);
        let gap_us = if i == 0 {
            0
        } else {
            p.arrival_us.saturating_sub(flow[i - 1].arrival_us)
        };
        intervals[i] = normalize_interval(gap_us as f64 / 1e6)?;
    }
    Ok((sizes, intervals))
}

/// Full per-flow pipeline: byte array + sequences.
pub fn flow_to_sample(
    key: FiveTuple,
    flow: &[PacketRecord],
    cfg: &ReprConfig,
    label: Option<u32>,
) -> Result<FlowSample, ReprError> {
    let byte_array = build_byte_array(flow, cfg)?;
    let (size_seq, interval_seq) = extract_sequences(flow, cfg)?;
    Ok(FlowSample {
        key,
        byte_array,
        size_seq,
        interval_seq,
        first_ts: flow[0].arrival_us,
        label,
    })
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    key: FiveTuple,
    byte_array: String,
    size_seq: Vec<u32>,
    interval_seq: Vec<f64>,
    first_ts: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<u32>,
}

/// Writes samples as one JSON object per line (byte array base64-encoded).
/// This file is the contract between extraction and training.
pub fn write_samples<W: Write>(out: &mut W, samples: &[FlowSample]) -> Result<(), ReprError> {
    for s in samples {
        let rec = SampleRecord {
            key: s.key,
            byte_array: BASE64.encode(&s.byte_array),
            size_seq: s.size_seq.clone(),
            interval_seq: s.interval_seq.clone(),
            first_ts: s.first_ts,
            label: s.label,
        };
        let line = serde_json::to_string(&rec).map_err(|e| ReprError::Record(e.to_string()))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_samples<R: BufRead>(input: R) -> Result<Vec<FlowSample>, ReprError> {
    let mut samples = Vec::new();
    for (ln, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line)
            .map_err(|e| ReprError::Record(format!("line {}: {e}", ln + 1)))?;
        let byte_array = BASE64
            .decode(rec.byte_array.as_bytes())
            .map_err(|e| ReprError::Record(format!("line {}: {e}", ln + 1)))?;
        samples.push(FlowSample {
            key: rec.key,
            byte_array,
            size_seq: rec.size_seq,
            interval_seq: rec.interval_seq,
            first_ts: rec.first_ts,
            label: rec.label,
        });
    }
    Ok(samples)
}

pub fn write_samples_to_path(path: &std::path::Path, samples: &[FlowSample]) -> Result<(), ReprError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_samples(&mut f, samples)
}

pub fn read_samples_from_path(path: &std::path::Path) -> Result<Vec<FlowSample>, ReprError> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_samples(f)
}

/// pcap bytes -> anonymized flow samples, the offline extraction pipeline.
pub fn extract_from_capture(
    pcap: &[u8],
    cfg: &ReprConfig,
    label: Option<u32>,
) -> Result<Vec<FlowSample>, crate::error::EngineError> {
    cfg.validate()?;
    let records = crate::packet::parse_capture(pcap)?;
    let records = crate::packet::filter_non_ip(records);
    let records = records
        .into_iter()
        .map(crate::packet::anonymize)
        .collect::<Result<Vec<_>, _>>()?;
    let flows = split_flows(records);
    let mut samples = Vec::with_capacity(flows.len());
    for (key, flow) in flows {
        samples.push(flow_to_sample(key, &flow, cfg, label)?);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{anonymize, filter_non_ip, parse_capture, write_capture};
    use crate::pcapgen;

    fn record(tuple_seed: u8, arrival_us: u64, header: Vec<u8>, payload: Vec<u8>, wire: u32) -> PacketRecord {
        PacketRecord {
            arrival_us,
            tuple: FiveTuple::from_v4([10, 0, 0, tuple_seed], [10, 0, 0, 99], 1000, 2000, 17),
            header_bytes: header,
            payload_bytes: payload,
            wire_length: wire,
            ip_version: 4,
        }
    }

    #[test]
    fn split_keeps_directions_separate() {
        let a = pcapgen::udp_packet([10, 0, 0, 1], [10, 0, 0, 2], 1, 2, &[0]);
        let b = pcapgen::udp_packet([10, 0, 0, 2], [10, 0, 0, 1], 2, 1, &[0]);
        let bytes = write_capture(&[
            (0, pcapgen::eth_ipv4(&a)),
            (1, pcapgen::eth_ipv4(&b)),
            (2, pcapgen::eth_ipv4(&a)),
        ]);
        let records = parse_capture(&bytes).unwrap();
        let flows = split_flows(records);
        assert_eq!(flows.len(), 2);
        let lens: Vec<usize> = flows.values().map(|v| v.len()).collect();
        assert_eq!(lens, vec![2, 1]);
    }

    #[test]
    fn split_preserves_order_within_flow() {
        let recs: Vec<PacketRecord> = (0..10).map(|i| record(1, i as u64, vec![], vec![], 60)).collect();
        let flows = split_flows(recs);
        assert_eq!(flows.len(), 1);
        let flow = flows.values().next().unwrap();
        let ts: Vec<u64> = flow.iter().map(|p| p.arrival_us).collect();
        assert_eq!(ts, (0..10).collect::<Vec<u64>>());
    }

    #[test]
    fn crop_pad_pads_short_and_crops_long() {
        let cfg = ReprConfig::default();
        let short = record(1, 0, vec![0xaa; 20], vec![], 60);
        let out = crop_pad_packet(&short, &cfg);
        assert_eq!(out.len(), 320);
        assert!(out[..20].iter().all(|&b| b == 0xaa));
        assert!(out[20..].iter().all(|&b| b == 0));

        let long = record(1, 0, vec![0xbb; 100], vec![0xcc; 300], 400);
        let out = crop_pad_packet(&long, &cfg);
        assert!(out[..80].iter().all(|&b| b == 0xbb));
        assert!(out[80..320].iter().all(|&b| b == 0xcc));
    }

    #[test]
    fn byte_array_is_1600_with_defaults() {
        let cfg = ReprConfig::default();
        let flow: Vec<PacketRecord> = (0..5).map(|i| record(1, i, vec![i as u8; 80], vec![i as u8; 240], 320)).collect();
        let arr = build_byte_array(&flow, &cfg).unwrap();
        assert_eq!(arr.len(), 1600);
        for i in 0..5usize {
            assert!(arr[i * 320..(i + 1) * 320].iter().all(|&b| b == i as u8));
        }
    }

    #[test]
    fn short_flow_pads_with_zero_blocks_and_long_flow_ignores_extras() {
        let cfg = ReprConfig::default();
        let flow3: Vec<PacketRecord> = (0..3).map(|i| record(1, i, vec![1; 80], vec![1; 240], 320)).collect();
        let arr = build_byte_array(&flow3, &cfg).unwrap();
        assert!(arr[960..1600].iter().all(|&b| b == 0));

        let flow7: Vec<PacketRecord> = (0..7).map(|i| record(1, i, vec![(i + 1) as u8; 80], vec![(i + 1) as u8; 240], 320)).collect();
        let arr = build_byte_array(&flow7, &cfg).unwrap();
        assert!(arr[1280..1600].iter().all(|&b| b == 5));
        assert!(build_byte_array(&[], &cfg).is_err());
    }

    #[test]
    fn stride_cutting_examples() {
        let bytes: Vec<u8> = (0..8).collect();
        let strides = cut_strides(&bytes, 4).unwrap();
        assert_eq!(strides, vec![&[0, 1, 2, 3][..], &[4, 5, 6, 7][..]]);

        let arr = vec![0u8; 1600];
        assert_eq!(cut_strides(&arr, 4).unwrap().len(), 400);

        assert!(matches!(
            cut_strides(&[0u8; 6], 4),
            Err(ReprError::IndivisibleLength { len: 6, stride: 4 })
        ));
    }

    #[test]
    fn clamp_and_interval_examples() {
        assert_eq!(clamp_size(2000, 1500), 1500);
        assert_eq!(clamp_size(64, 1500), 64);
        assert_eq!(clamp_size(1500, 1500), 1500);

        assert_eq!(normalize_interval(0.0).unwrap(), 0.5);
        assert!((normalize_interval(1.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(normalize_interval(1e9).unwrap() > 0.999999);
        assert!(normalize_interval(-0.1).is_err());
        // monotone
        assert!(normalize_interval(0.2).unwrap() < normalize_interval(0.3).unwrap());
    }

    #[test]
    fn sequence_extraction_example() {
        let cfg = ReprConfig::default();
        let p0 = record(1, 0, vec![], vec![], 60);
        let p1 = record(1, 100_000, vec![], vec![], 1600);
        let (sizes, intervals) = extract_sequences(&[p0, p1], &cfg).unwrap();
        assert_eq!(sizes.len(), 20);
        assert_eq!(&sizes[..3], &[60, 1500, 0]);
        assert_eq!(intervals[0], 0.5);
        assert!((intervals[1] - 1.1 / 2.1).abs() < 1e-12);
        assert_eq!(intervals[2], 0.0);
    }

    #[test]
    fn one_packet_flow_and_exact_length_flow() {
        let cfg = ReprConfig::default();
        let (sizes, intervals) = extract_sequences(&[record(1, 5, vec![], vec![], 70)], &cfg).unwrap();
        assert_eq!(sizes[0], 70);
        assert_eq!(intervals[0], 0.5);
        assert!(sizes[1..].iter().all(|&s| s == 0));

        let flow: Vec<PacketRecord> = (0..25).map(|i| record(1, i * 1000, vec![], vec![], 100)).collect();
        let (sizes, intervals) = extract_sequences(&flow, &cfg).unwrap();
        assert_eq!(sizes.len(), 20);
        assert!(intervals.iter().all(|&v| (0.5..1.0).contains(&v)));
    }

    #[test]
    fn samples_round_trip_through_jsonl() {
        let cfg = ReprConfig { m_b: 2, n_h: 8, n_p: 8, l_s: 4, m_seq: 4, mtu: 1500 };
        let flow: Vec<PacketRecord> = (0..3).map(|i| record(1, i * 10, vec![i as u8; 8], vec![0xf0; 8], 64)).collect();
        let key = flow[0].tuple;
        let sample = flow_to_sample(key, &flow, &cfg, Some(2)).unwrap();
        let mut buf = Vec::new();
        write_samples(&mut buf, std::slice::from_ref(&sample)).unwrap();
        let parsed = read_samples(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0], sample);
    }

    #[test]
    fn pipeline_is_deterministic_and_headers_stay_in_place() {
        // byte-balance: the first N_h bytes of each block come from headers only
        let cfg = ReprConfig::default();
        let frames: Vec<(u64, Vec<u8>)> = (0..5)
            .map(|i| {
                let pkt = pcapgen::udp_packet([10, 0, 0, 3], [10, 0, 0, 4], 7, 8, &[0xee; 300]);
                (i * 1000, pcapgen::eth_ipv4(&pkt))
            })
            .collect();
        let bytes = write_capture(&frames);
        let run = || {
            let records = filter_non_ip(parse_capture(&bytes).unwrap());
            let records: Vec<_> = records.into_iter().map(|r| anonymize(r).unwrap()).collect();
            let flows = split_flows(records);
            flows
                .into_iter()
                .map(|(k, f)| flow_to_sample(k, &f, &cfg, None).unwrap())
                .collect::<Vec<_>>()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        let sample = &a[0];
        for block in 0..5 {
            let hdr = &sample.byte_array[block * 320..block * 320 + 80];
            // UDP header is 28 bytes; rest of the header region is padding
            assert!(hdr[28..].iter().all(|&v| v == 0));
            // no payload marker byte leaks into the header region
            assert!(!hdr.contains(&0xee));
            let pl = &sample.byte_array[block * 320 + 80..(block + 1) * 320];
            assert!(pl[..240].iter().all(|&v| v == 0xee));
        }
    }
}
