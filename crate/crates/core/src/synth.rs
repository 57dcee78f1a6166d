//! Synthetic corpora: labeled flows with class-distinct byte templates and
//! size/interval signatures, plus pcap captures for exercising the online
//! engine against the offline pipeline.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::packet::FiveTuple;
use crate::pcapgen;
use crate::repr::{normalize_interval, FlowSample, ReprConfig};
use crate::seed::SeedTree;

/// One traffic class. `base` copies another class's byte template and
/// re-randomizes only `distinct_frac` of its positions, which controls how
/// confusable the two classes are.
#[derive(Debug, Clone)]
pub struct ClassSpec {
    pub count: usize,
    pub base: Option<usize>,
    pub distinct_frac: f64,
    /// Per-byte probability of replacing a template byte with noise.
    pub noise: f64,
    pub size_mean: f64,
    pub size_std: f64,
    pub gap_mean_secs: f64,
}

impl ClassSpec {
    pub fn easy(count: usize, class: usize) -> Self {
        ClassSpec {
            count,
            base: None,
            distinct_frac: 1.0,
            noise: 0.1,
            size_mean: 120.0 + 380.0 * class as f64,
            size_std: 15.0 + 10.0 * class as f64,
            gap_mean_secs: 10f64.powi(class as i32 - 3),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub repr: ReprConfig,
    pub classes: Vec<ClassSpec>,
    pub seed: u64,
}

impl SynthSpec {
    /// Three well-separated classes over a compact representation; the
    /// desk-scale learning corpus.
    pub fn three_easy_classes(per_class: usize, seed: u64) -> Self {
        SynthSpec {
            repr: small_repr(),
            classes: (0..3).map(|c| ClassSpec::easy(per_class, c)).collect(),
            seed,
        }
    }
}

/// Compact representation config used by the synthetic corpora: 128-byte
/// arrays in 32 strides of 4, sequences over the first 8 packets.
pub fn small_repr() -> ReprConfig {
    ReprConfig {
        m_b: 2,
        n_h: 16,
        n_p: 48,
        l_s: 4,
        m_seq: 8,
        mtu: 1500,
    }
}

fn normal(rng: &mut ChaCha12Rng, mean: f64, std: f64) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    mean + std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Class byte templates: independent random bytes, or a copy of the base
/// class with a chosen fraction of positions re-randomized.
pub fn class_templates(spec: &SynthSpec) -> Vec<Vec<u8>> {
    let tree = SeedTree::new(spec.seed);
    let len = spec.repr.byte_array_len();
    let mut templates: Vec<Vec<u8>> = Vec::with_capacity(spec.classes.len());
    for (c, cs) in spec.classes.iter().enumerate() {
        let mut rng = tree.rng(&format!("template.{c}"));
        let template = match cs.base {
            Some(b) => {
                let mut t = templates[b].clone();
                for slot in t.iter_mut() {
                    if rng.random::<f64>() < cs.distinct_frac {
                        *slot = rng.random();
                    }
                }
                t
            }
            None => (0..len).map(|_| rng.random()).collect(),
        };
        templates.push(template);
    }
    templates
}

/// Generates the labeled corpus. Classes are interleaved with increasing
/// timestamps so both random and time-ordered splits are exercised.
pub fn gen_corpus(spec: &SynthSpec) -> Vec<FlowSample> {
    let tree = SeedTree::new(spec.seed);
    let templates = class_templates(spec);
    let mut per_class_rngs: Vec<ChaCha12Rng> = (0..spec.classes.len())
        .map(|c| tree.rng(&format!("samples.{c}")))
        .collect();

    let mut order: Vec<usize> = Vec::new();
    for (c, cs) in spec.classes.iter().enumerate() {
        order.extend(std::iter::repeat_n(c, cs.count));
    }
    // deterministic interleave across classes
    let mut order_rng = tree.rng("order");
    use rand::seq::SliceRandom;
    order.shuffle(&mut order_rng);

    let mut out = Vec::with_capacity(order.len());
    let mut ts = 1_000_000u64;
    for (i, &c) in order.iter().enumerate() {
        let cs = &spec.classes[c];
        let rng = &mut per_class_rngs[c];
        let mut bytes = templates[c].clone();
        for slot in bytes.iter_mut() {
            if rng.random::<f64>() < cs.noise {
                *slot = rng.random();
            }
        }
        let mut size_seq = Vec::with_capacity(spec.repr.m_seq);
        let mut interval_seq = Vec::with_capacity(spec.repr.m_seq);
        for p in 0..spec.repr.m_seq {
            let s = normal(rng, cs.size_mean, cs.size_std).max(40.0) as u32;
            size_seq.push(s.min(spec.repr.mtu));
            if p == 0 {
                interval_seq.push(0.5);
            } else {
                let gap = (normal(rng, cs.gap_mean_secs, cs.gap_mean_secs * 0.2)).max(0.0);
                interval_seq.push(normalize_interval(gap).expect("non-negative gap"));
            }
        }
        let key = FiveTuple::from_v4(
            [10, (c + 1) as u8, (i >> 8) as u8, (i & 0xff) as u8],
            [192, 168, 0, 1],
            (10_000 + i % 50_000) as u16,
            443,
            6,
        );
        out.push(FlowSample {
            key,
            byte_array: bytes,
            size_seq,
            interval_seq,
            first_ts: ts,
            label: Some(c as u32),
        });
        ts += 1_000;
    }
    out
}

/// A flow to place in a synthetic capture.
#[derive(Debug, Clone)]
pub struct PcapFlowSpec {
    pub n_packets: usize,
    pub start_us: u64,
    pub gap_us: u64,
    pub src_last_octet: u8,
    pub sport: u16,
}

/// Builds a capture whose packets interleave across flows in timestamp
/// order. Payload bytes are seeded per flow so samples are distinct.
pub fn gen_pcap(flows: &[PcapFlowSpec], payload_len: usize, seed: u64) -> Vec<u8> {
    let tree = SeedTree::new(seed);
    let mut events: Vec<(u64, Vec<u8>)> = Vec::new();
    for (fi, f) in flows.iter().enumerate() {
        let mut rng = tree.rng(&format!("flow.{fi}"));
        for p in 0..f.n_packets {
            let payload: Vec<u8> = (0..payload_len).map(|_| rng.random()).collect();
            let pkt = pcapgen::udp_packet(
                [10, 0, 7, f.src_last_octet],
                [192, 168, 0, 1],
                f.sport,
                4433,
                &payload,
            );
            events.push((f.start_us + p as u64 * f.gap_us, pcapgen::eth_ipv4(&pkt)));
        }
    }
    events.sort_by_key(|(ts, _)| *ts);
    crate::packet::write_capture(&events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic_and_sized() {
        let spec = SynthSpec::three_easy_classes(20, 7);
        let a = gen_corpus(&spec);
        let b = gen_corpus(&spec);
        assert_eq!(a, b);
        assert_eq!(a.len(), 60);
        for c in 0..3u32 {
            assert_eq!(a.iter().filter(|s| s.label == Some(c)).count(), 20);
        }
        assert!(a.iter().all(|s| s.byte_array.len() == spec.repr.byte_array_len()));
        assert!(a
            .iter()
            .all(|s| s.size_seq.iter().all(|&v| v <= spec.repr.mtu)));
    }

    #[test]
    fn templates_with_base_share_most_bytes() {
        let mut spec = SynthSpec::three_easy_classes(1, 3);
        spec.classes[2].base = Some(0);
        spec.classes[2].distinct_frac = 0.1;
        let t = class_templates(&spec);
        let same = t[0]
            .iter()
            .zip(&t[2])
            .filter(|(a, b)| a == b)
            .count();
        assert!(same > t[0].len() * 8 / 10, "{same}/{}", t[0].len());
        let same01 = t[0].iter().zip(&t[1]).filter(|(a, b)| a == b).count();
        assert!(same01 < t[0].len() / 10);
    }

    #[test]
    fn pcap_corpus_parses_into_expected_flows() {
        let flows = vec![
            PcapFlowSpec {
                n_packets: 6,
                start_us: 0,
                gap_us: 50_000,
                src_last_octet: 1,
                sport: 1111,
            },
            PcapFlowSpec {
                n_packets: 2,
                start_us: 10_000,
                gap_us: 30_000,
                src_last_octet: 2,
                sport: 2222,
            },
        ];
        let pcap = gen_pcap(&flows, 64, 9);
        let records = crate::packet::parse_capture(&pcap).unwrap();
        assert_eq!(records.len(), 8);
        let grouped = crate::repr::split_flows(records);
        assert_eq!(grouped.len(), 2);
        let lens: Vec<usize> = grouped.values().map(|v| v.len()).collect();
        assert!(lens.contains(&6) && lens.contains(&2));
    }
}
