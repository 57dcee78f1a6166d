//! Dataset splitting, classification metrics, OOD ranking metrics, and the
//! adjusted-mutual-information stride analysis.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::TrainError;
use crate::repr::FlowSample;
use crate::seed::SeedTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Per-class cap, seeded shuffle, then 8:1:1 within each class.
    Random,
    /// Sort by first-packet timestamp; earliest 80% train, next 10% val,
    /// latest 10% test.
    TimeOrdered,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub seed: u64,
    /// Maximal flows per category, applied before splitting.
    pub per_category_cap: Option<usize>,
    /// Stratified train-set fraction (1.0 = full training set).
    pub few_shot_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            mode: SplitMode::Random,
            seed: 0,
            per_category_cap: Some(2000),
            few_shot_fraction: 1.0,
        }
    }
}

fn split_counts(n: usize) -> (usize, usize, usize) {
    let n_val = ((n as f64 * 0.1).round() as usize).max(1);
    let n_test = ((n as f64 * 0.1).round() as usize).max(1);
    (n - n_val - n_test, n_val, n_test)
}

/// 8:1:1 split with a per-category cap. Random mode is stratified per
/// class; time-ordered mode sorts all flows by `first_ts`.
pub fn split(
    samples: &[FlowSample],
    spec: &SplitSpec,
) -> Result<(Vec<FlowSample>, Vec<FlowSample>, Vec<FlowSample>), TrainError> {
    let mut by_class: BTreeMap<u32, Vec<&FlowSample>> = BTreeMap::new();
    for s in samples {
        let y = s.label.ok_or(TrainError::MissingLabel)?;
        by_class.entry(y).or_default().push(s);
    }
    if by_class.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let tree = SeedTree::new(spec.seed);

    // cap first, then split
    let mut capped: BTreeMap<u32, Vec<&FlowSample>> = BTreeMap::new();
    for (y, mut group) in by_class {
        if let Some(cap) = spec.per_category_cap {
            if group.len() > cap {
                let mut rng = tree.rng(&format!("cap.{y}"));
                group.shuffle(&mut rng);
                group.truncate(cap);
            }
        }
        if group.len() < 3 {
            return Err(TrainError::TooFewSamples {
                class: y,
                count: group.len(),
            });
        }
        capped.insert(y, group);
    }

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    match spec.mode {
        SplitMode::Random => {
            for (y, mut group) in capped {
                let mut rng = tree.rng(&format!("split.{y}"));
                group.shuffle(&mut rng);
                let (n_train, n_val, _) = split_counts(group.len());
                for (i, s) in group.into_iter().enumerate() {
                    if i < n_train {
                        train.push(s.clone());
                    } else if i < n_train + n_val {
                        val.push(s.clone());
                    } else {
                        test.push(s.clone());
                    }
                }
            }
        }
        SplitMode::TimeOrdered => {
            let mut all: Vec<&FlowSample> = capped.into_values().flatten().collect();
            all.sort_by_key(|s| (s.first_ts, s.key));
            let (n_train, n_val, _) = split_counts(all.len());
            for (i, s) in all.into_iter().enumerate() {
                if i < n_train {
                    train.push(s.clone());
                } else if i < n_train + n_val {
                    val.push(s.clone());
                } else {
                    test.push(s.clone());
                }
            }
        }
    }
    Ok((train, val, test))
}

/// Per-class stratified subsampling at `fraction` (minimum one per class).
pub fn few_shot_subsample(
    train: &[FlowSample],
    fraction: f64,
    seed: u64,
) -> Result<Vec<FlowSample>, TrainError> {
    if fraction >= 1.0 {
        return Ok(train.to_vec());
    }
    let mut by_class: BTreeMap<u32, Vec<&FlowSample>> = BTreeMap::new();
    for s in train {
        by_class
            .entry(s.label.ok_or(TrainError::MissingLabel)?)
            .or_default()
            .push(s);
    }
    let tree = SeedTree::new(seed);
    let mut out = Vec::new();
    for (y, mut group) in by_class {
        let keep = ((group.len() as f64 * fraction).round() as usize).max(1);
        let mut rng = tree.rng(&format!("fewshot.{y}"));
        group.shuffle(&mut rng);
        group.truncate(keep);
        out.extend(group.into_iter().cloned());
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub weighted_f1: f64,
    pub support: usize,
}

/// Accuracy, macro precision/recall, and support-weighted F1. Classes with
/// zero predicted positives contribute precision 0.
pub fn classification_metrics(y_true: &[u32], y_pred: &[u32]) -> Metrics {
    assert_eq!(y_true.len(), y_pred.len(), "prediction length mismatch");
    let n = y_true.len();
    let classes: std::collections::BTreeSet<u32> = y_true.iter().copied().collect();
    let mut correct = 0usize;
    for (t, p) in y_true.iter().zip(y_pred) {
        if t == p {
            correct += 1;
        }
    }
    let mut macro_p = 0.0;
    let mut macro_r = 0.0;
    let mut weighted_f1 = 0.0;
    for &c in &classes {
        let tp = y_true
            .iter()
            .zip(y_pred)
            .filter(|(t, p)| **t == c && **p == c)
            .count() as f64;
        let fp = y_true
            .iter()
            .zip(y_pred)
            .filter(|(t, p)| **t != c && **p == c)
            .count() as f64;
        let fn_ = y_true
            .iter()
            .zip(y_pred)
            .filter(|(t, p)| **t == c && **p != c)
            .count() as f64;
        let support = tp + fn_;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if support > 0.0 { tp / support } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        macro_p += precision;
        macro_r += recall;
        weighted_f1 += (support / n as f64) * f1;
    }
    let k = classes.len() as f64;
    Metrics {
        accuracy: correct as f64 / n as f64,
        macro_precision: macro_p / k,
        macro_recall: macro_r / k,
        weighted_f1,
        support: n,
    }
}

/// Per-class recall (used by the long-tail evaluation).
pub fn recall_for_class(y_true: &[u32], y_pred: &[u32], class: u32) -> f64 {
    let support = y_true.iter().filter(|&&t| t == class).count();
    if support == 0 {
        return 0.0;
    }
    let tp = y_true
        .iter()
        .zip(y_pred)
        .filter(|(t, p)| **t == class && **p == class)
        .count();
    tp as f64 / support as f64
}

/// Rank-based AUROC (Mann-Whitney, ties counted 0.5): the probability that
/// an in-distribution score ranks above an out-of-distribution score.
pub fn auroc(scores_id: &[f64], scores_ood: &[f64]) -> f64 {
    if scores_id.is_empty() || scores_ood.is_empty() {
        return 0.5;
    }
    let mut all: Vec<(f64, bool)> = scores_id
        .iter()
        .map(|&s| (s, true))
        .chain(scores_ood.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    // average ranks over tie groups
    let n = all.len();
    let mut rank_sum_id = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for item in &all[i..=j] {
            if item.1 {
                rank_sum_id += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_id = scores_id.len() as f64;
    let n_ood = scores_ood.len() as f64;
    (rank_sum_id - n_id * (n_id + 1.0) / 2.0) / (n_id * n_ood)
}

/// Smallest false-positive rate among thresholds reaching TPR >= 0.95.
/// OOD is the positive class; lower scores are more OOD, and a sample is
/// flagged OOD when its score falls below the threshold.
pub fn fpr_at_95_tpr(scores_id: &[f64], scores_ood: &[f64]) -> f64 {
    if scores_ood.is_empty() {
        return 0.0;
    }
    let mut thresholds: Vec<f64> = scores_id
        .iter()
        .chain(scores_ood.iter())
        .copied()
        .collect();
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    thresholds.dedup();
    let mut best = 1.0f64;
    for &t in &thresholds {
        let tpr = scores_ood.iter().filter(|&&s| s < t).count() as f64 / scores_ood.len() as f64;
        if tpr >= 0.95 {
            let fpr = scores_id.iter().filter(|&&s| s < t).count() as f64
                / scores_id.len().max(1) as f64;
            if fpr < best {
                best = fpr;
            }
        }
    }
    best
}

/// Adjusted mutual information between two discrete labelings, using the
/// expected-MI correction under the hypergeometric permutation model and
/// arithmetic-mean normalization.
pub fn adjusted_mutual_information(u: &[u32], v: &[u32]) -> f64 {
    assert_eq!(u.len(), v.len());
    let n = u.len();
    if n == 0 {
        return 0.0;
    }
    let mut a_counts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut b_counts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut joint: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (&x, &y) in u.iter().zip(v) {
        *a_counts.entry(x).or_default() += 1;
        *b_counts.entry(y).or_default() += 1;
        *joint.entry((x, y)).or_default() += 1;
    }
    let nf = n as f64;
    let entropy = |counts: &BTreeMap<u32, usize>| -> f64 {
        counts
            .values()
            .map(|&c| {
                let p = c as f64 / nf;
                -p * p.ln()
            })
            .sum()
    };
    let h_u = entropy(&a_counts);
    let h_v = entropy(&b_counts);
    if h_u == 0.0 && h_v == 0.0 {
        return 1.0;
    }
    let mut mi = 0.0f64;
    for (&(x, y), &c) in &joint {
        let pij = c as f64 / nf;
        let pi = a_counts[&x] as f64 / nf;
        let pj = b_counts[&y] as f64 / nf;
        mi += pij * (pij / (pi * pj)).ln();
    }

    // E[MI] over the hypergeometric model, via a log-factorial table
    let mut lf = vec![0.0f64; n + 1];
    for i in 1..=n {
        lf[i] = lf[i - 1] + (i as f64).ln();
    }
    let mut emi = 0.0f64;
    for &ai in a_counts.values() {
        for &bj in b_counts.values() {
            let hi = ai.min(bj);
            let start = (ai + bj).saturating_sub(n).max(1);
            for nij in start..=hi {
                let t1 = (nij as f64 / nf) * ((nf * nij as f64) / (ai as f64 * bj as f64)).ln();
                let lp = lf[ai] + lf[bj] + lf[n - ai] + lf[n - bj]
                    - lf[n]
                    - lf[nij]
                    - lf[ai - nij]
                    - lf[bj - nij]
                    - lf[n + nij - ai - bj];
                emi += t1 * lp.exp();
            }
        }
    }
    let denom = 0.5 * (h_u + h_v) - emi;
    if denom.abs() < 1e-12 {
        return 0.0;
    }
    (mi - emi) / denom
}

/// AMI between stride values and class labels at every stride position,
/// arranged as alternating header/payload rows per packet: rows 2i/2i+1
/// hold packet i's header strides and payload strides.
pub struct AmiGrid {
    /// One row per (packet, region): scores[2i] header, scores[2i+1] payload.
    pub rows: Vec<Vec<f64>>,
    pub stride_width: usize,
}

pub fn ami_stride_scores(
    samples: &[FlowSample],
    repr: &crate::repr::ReprConfig,
    stride_width: usize,
) -> Result<AmiGrid, TrainError> {
    let labels: Vec<u32> = samples
        .iter()
        .map(|s| s.label.ok_or(TrainError::MissingLabel))
        .collect::<Result<Vec<_>, _>>()?;
    let block = repr.block_len();
    let mut rows = Vec::with_capacity(2 * repr.m_b);
    for packet in 0..repr.m_b {
        let mut header_row = Vec::new();
        let mut payload_row = Vec::new();
        for off in (0..block).step_by(stride_width) {
            let pos = packet * block + off;
            let values: Vec<u32> = samples
                .iter()
                .map(|s| {
                    s.byte_array[pos..pos + stride_width]
                        .iter()
                        .fold(0u32, |acc, &b| (acc << 8) | b as u32)
                })
                .collect();
            let score = adjusted_mutual_information(&values, &labels);
            if off < repr.n_h {
                header_row.push(score);
            } else {
                payload_row.push(score);
            }
        }
        rows.push(header_row);
        rows.push(payload_row);
    }
    Ok(AmiGrid {
        rows,
        stride_width,
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::FiveTuple;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn sample(label: u32, first_ts: u64, tag: u8) -> FlowSample {
        FlowSample {
            key: FiveTuple::from_v4([10, 0, tag, (first_ts % 251) as u8], [10, 0, 0, 1], 5, 6, 17),
            byte_array: vec![0u8; 16],
            size_seq: vec![64; 4],
            interval_seq: vec![0.5; 4],
            first_ts,
            label: Some(label),
        }
    }

    #[test]
    fn metrics_match_hand_computed_confusion_matrix() {
        let y_true = [0u32, 0, 1, 1];
        let y_pred = [0u32, 1, 1, 1];
        let m = classification_metrics(&y_true, &y_pred);
        assert!((m.accuracy - 0.75).abs() < 1e-12);
        // class 0: P=1, R=0.5, F1=2/3; class 1: P=2/3, R=1, F1=4/5
        assert!((m.weighted_f1 - (0.5 * (2.0 / 3.0) + 0.5 * 0.8)).abs() < 1e-12);
        assert!((m.macro_precision - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((m.macro_recall - 0.75).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_all_wrong_predictions() {
        let m = classification_metrics(&[0, 1, 2], &[0, 1, 2]);
        assert_eq!(m.accuracy, 1.0);
        assert!((m.weighted_f1 - 1.0).abs() < 1e-12);
        let m = classification_metrics(&[0, 0, 1, 1], &[1, 1, 0, 0]);
        assert_eq!(m.accuracy, 0.0);
        assert_eq!(m.weighted_f1, 0.0);
    }

    #[test]
    fn weighted_f1_equals_plain_f1_under_equal_support() {
        let y_true = [0u32, 0, 1, 1];
        let y_pred = [0u32, 1, 1, 0];
        let m = classification_metrics(&y_true, &y_pred);
        // both classes have the same F1 here, so weighting changes nothing
        assert!((m.weighted_f1 - 0.5).abs() < 1e-12);
    }

    fn auroc_bruteforce(id: &[f64], ood: &[f64]) -> f64 {
        let mut total = 0.0;
        for &a in id {
            for &b in ood {
                total += if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
        total / (id.len() * ood.len()) as f64
    }

    #[test]
    fn auroc_examples_and_bruteforce_parity() {
        assert_eq!(auroc(&[1.0, 2.0, 3.0], &[-1.0, -2.0]), 1.0);
        assert_eq!(auroc(&[0.5, 0.5], &[0.5, 0.5, 0.5]), 0.5);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n_id = rng.random_range(1..12);
            let n_ood = rng.random_range(1..12);
            // coarse grid forces plenty of ties
            let id: Vec<f64> = (0..n_id).map(|_| rng.random_range(0..6) as f64 / 2.0).collect();
            let ood: Vec<f64> = (0..n_ood).map(|_| rng.random_range(0..6) as f64 / 2.0).collect();
            let fast = auroc(&id, &ood);
            let slow = auroc_bruteforce(&id, &ood);
            assert!((fast - slow).abs() < 1e-12, "{id:?} vs {ood:?}");
        }
    }

    #[test]
    fn auroc_symmetry_for_tie_free_inputs() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let a: Vec<f64> = (0..9).map(|i| i as f64 + rng.random::<f64>() * 0.4).collect();
        let b: Vec<f64> = (0..7).map(|i| i as f64 * 1.3 + 0.11).collect();
        assert!((auroc(&a, &b) + auroc(&b, &a) - 1.0).abs() < 1e-12);
    }

    fn fpr95_sweep_oracle(id: &[f64], ood: &[f64]) -> f64 {
        let mut best = 1.0f64;
        let mut cands: Vec<f64> = id.iter().chain(ood).copied().collect();
        cands.push(f64::INFINITY);
        for &t in &cands {
            let tpr = ood.iter().filter(|&&s| s < t).count() as f64 / ood.len() as f64;
            if tpr >= 0.95 {
                let fpr = id.iter().filter(|&&s| s < t).count() as f64 / id.len() as f64;
                best = best.min(fpr);
            }
        }
        best
    }

    #[test]
    fn fpr95_examples_and_sweep_parity() {
        // perfect separation: every OOD score below every ID score
        let id: Vec<f64> = (0..10).map(|i| 10.0 + i as f64).collect();
        let ood: Vec<f64> = (0..10).map(|i| -10.0 - i as f64).collect();
        assert_eq!(fpr_at_95_tpr(&id, &ood), 0.0);
        // identical distributions: >= 0.95
        let same = vec![1.0; 20];
        assert!(fpr_at_95_tpr(&same, &same) >= 0.95);
        // 20-point instance vs the exhaustive sweep
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let id: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..1.0)).collect();
        let ood: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..0.5)).collect();
        assert_eq!(fpr_at_95_tpr(&id, &ood), fpr95_sweep_oracle(&id, &ood));
    }

    #[test]
    fn split_ratios_and_cap() {
        let data: Vec<FlowSample> = (0..100).map(|i| sample(0, i, 0)).collect();
        let (tr, va, te) = split(&data, &SplitSpec::default()).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (80, 10, 10));

        let data: Vec<FlowSample> = (0..5000).map(|i| sample(0, i, (i % 3) as u8)).collect();
        let (tr, va, te) = split(&data, &SplitSpec::default()).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (1600, 200, 200));
    }

    #[test]
    fn split_is_deterministic_disjoint_and_complete() {
        let data: Vec<FlowSample> = (0..60)
            .map(|i| sample((i % 3) as u32, i * 7, (i % 5) as u8))
            .collect();
        let spec = SplitSpec {
            seed: 9,
            per_category_cap: None,
            ..SplitSpec::default()
        };
        let (tr1, va1, te1) = split(&data, &spec).unwrap();
        let (tr2, va2, te2) = split(&data, &spec).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(va1, va2);
        assert_eq!(te1, te2);
        assert_eq!(tr1.len() + va1.len() + te1.len(), data.len());
        let mut seen: Vec<u64> = tr1.iter().chain(&va1).chain(&te1).map(|s| s.first_ts).collect();
        seen.sort_unstable();
        let mut expect: Vec<u64> = data.iter().map(|s| s.first_ts).collect();
        expect.sort_unstable();
        assert_eq!(seen, expect);
    }

    #[test]
    fn time_ordered_split_respects_timestamps() {
        let data: Vec<FlowSample> = (0..100).map(|i| sample((i % 2) as u32, 1000 - i, 0)).collect();
        let spec = SplitSpec {
            mode: SplitMode::TimeOrdered,
            per_category_cap: None,
            ..SplitSpec::default()
        };
        let (tr, va, te) = split(&data, &spec).unwrap();
        let max_train = tr.iter().map(|s| s.first_ts).max().unwrap();
        let min_val = va.iter().map(|s| s.first_ts).min().unwrap();
        let min_test = te.iter().map(|s| s.first_ts).min().unwrap();
        assert!(max_train < min_val);
        assert!(va.iter().map(|s| s.first_ts).max().unwrap() < min_test);
    }

    #[test]
    fn too_few_samples_is_rejected() {
        let data: Vec<FlowSample> =
            vec![sample(0, 1, 0), sample(0, 2, 0), sample(0, 4, 1), sample(1, 3, 0)];
        assert!(matches!(
            split(&data, &SplitSpec { per_category_cap: None, ..SplitSpec::default() }),
            Err(TrainError::TooFewSamples { class: 1, count: 1 })
        ));
    }

    #[test]
    fn few_shot_fractions() {
        let data: Vec<FlowSample> = (0..200)
            .map(|i| sample((i % 2) as u32, i, (i % 7) as u8))
            .collect();
        assert_eq!(few_shot_subsample(&data, 1.0, 0).unwrap().len(), 200);
        let ten = few_shot_subsample(&data, 0.1, 0).unwrap();
        assert_eq!(ten.len(), 20);
        let per_class = ten.iter().filter(|s| s.label == Some(0)).count();
        assert_eq!(per_class, 10);
        // deterministic under seed
        assert_eq!(few_shot_subsample(&data, 0.4, 5).unwrap(), few_shot_subsample(&data, 0.4, 5).unwrap());
        // minimum one per class
        let tiny: Vec<FlowSample> = (0..4).map(|i| sample(i, i as u64, 0)).collect();
        assert_eq!(few_shot_subsample(&tiny, 0.1, 0).unwrap().len(), 4);
    }

    #[test]
    fn ami_perfect_constant_and_independent() {
        // stride equals label -> AMI 1
        let labels: Vec<u32> = (0..300).map(|i| i % 3).collect();
        assert!((adjusted_mutual_information(&labels, &labels) - 1.0).abs() < 1e-9);
        // constant stride -> 0
        let constant = vec![7u32; 300];
        assert_eq!(adjusted_mutual_information(&constant, &labels), 0.0);
        // independent values stay near 0 at n=2000
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let labels: Vec<u32> = (0..2000).map(|_| rng.random_range(0..3)).collect();
        let values: Vec<u32> = (0..2000).map(|_| rng.random_range(0..40)).collect();
        let ami = adjusted_mutual_information(&values, &labels);
        assert!(ami.abs() <= 0.05, "ami={ami}");
    }

    #[test]
    fn ami_is_permutation_invariant_in_sample_order() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let labels: Vec<u32> = (0..120).map(|_| rng.random_range(0..3)).collect();
        let values: Vec<u32> = labels.iter().map(|&l| l * 2 + rng.random_range(0..2)).collect();
        let base = adjusted_mutual_information(&values, &labels);
        let mut idx: Vec<usize> = (0..120).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(&mut rng);
        let pv: Vec<u32> = idx.iter().map(|&i| values[i]).collect();
        let pl: Vec<u32> = idx.iter().map(|&i| labels[i]).collect();
        assert!((adjusted_mutual_information(&pv, &pl) - base).abs() < 1e-12);
    }

    #[test]
    fn ami_grid_layout_rows() {
        let repr = crate::repr::ReprConfig {
            m_b: 2,
            n_h: 4,
            n_p: 8,
            l_s: 4,
            m_seq: 4,
            mtu: 1500,
        };
        let samples: Vec<FlowSample> = (0..30)
            .map(|i| {
                let label = i % 3;
                let mut s = sample(label, i as u64, 0);
                s.byte_array = vec![0u8; repr.byte_array_len()];
                // payload byte tracks the label in packet 0
                s.byte_array[5] = label as u8;
                s
            })
            .collect();
        let grid = ami_stride_scores(&samples, &repr, 2).unwrap();
        assert_eq!(grid.rows.len(), 4); // 2 packets x (header, payload)
        assert_eq!(grid.rows[0].len(), 2); // 4 header bytes / width 2
        assert_eq!(grid.rows[1].len(), 4); // 8 payload bytes / width 2
        // the label-carrying stride scores 1, a constant stride scores 0
        assert!((grid.rows[1][0] - 1.0).abs() < 1e-9);
        assert_eq!(grid.rows[0][0], 0.0);
    }
}
