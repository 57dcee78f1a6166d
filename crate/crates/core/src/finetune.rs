//! Supervised fine-tuning with the label-distribution-aware loss family,
//! plus temperature-scaled-entropy OOD scoring.
//!
//! The loss is one code path: CE is LDA with beta = 0 and margin C = 0, so
//! the degenerate case is bitwise identical by construction.

use rand::seq::SliceRandom;
use serde::Serialize;
use stridenet_tensor::checkpoint::NamedTensor;
use stridenet_tensor::optim::{AdamW, ParamStore};
use stridenet_tensor::{no_grad, Real, Tensor};

use crate::config::RunConfig;
use crate::error::TrainError;
use crate::model::{ClassifierModel, ModelInput};
use crate::repr::FlowSample;
use crate::seed::SeedTree;

/// Training sample count per class, computed from the training split only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassHistogram {
    pub counts: Vec<usize>,
}

impl ClassHistogram {
    pub fn from_labels(labels: &[u32], n_classes: usize) -> Result<Self, TrainError> {
        let mut counts = vec![0usize; n_classes];
        for &y in labels {
            if y as usize >= n_classes {
                return Err(TrainError::LabelOutOfRange {
                    label: y,
                    classes: n_classes,
                });
            }
            counts[y as usize] += 1;
        }
        Ok(ClassHistogram { counts })
    }

    pub fn from_samples(samples: &[FlowSample], n_classes: usize) -> Result<Self, TrainError> {
        let labels = samples
            .iter()
            .map(|s| s.label.ok_or(TrainError::MissingLabel))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_labels(&labels, n_classes)
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }
}

/// Class-balanced weight (1-beta)/(1-beta^n): 1 at beta=0, inverse
/// effective-frequency as beta -> 1.
pub fn cb_weight(n_y: usize, beta: f64) -> f64 {
    if beta == 0.0 {
        return 1.0;
    }
    (1.0 - beta) / (1.0 - beta.powi(n_y as i32))
}

/// Margin Delta_j = C / n_j^(1/4).
pub fn ldam_margin(n_j: usize, margin_c: f64) -> f64 {
    margin_c / (n_j as f64).powf(0.25)
}

/// Default margin scale: the largest per-class margin comes out at 0.5.
pub fn default_margin_c(hist: &ClassHistogram) -> f64 {
    let min_n = hist.counts.iter().copied().filter(|&n| n > 0).min().unwrap_or(1);
    0.5 * (min_n as f64).powf(0.25)
}

/// Reference (scalar, f64) forms of the loss family; these are the closed
/// forms the batched tensor path is checked against.
pub fn ce_loss_scalar(z: &[f64], y: usize) -> f64 {
    ldam_loss_scalar(z, y, 0.0)
}

pub fn ldam_loss_scalar(z: &[f64], y: usize, margin: f64) -> f64 {
    let zy = z[y] - margin;
    let m = z
        .iter()
        .enumerate()
        .map(|(j, &v)| if j == y { zy } else { v })
        .fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = z
        .iter()
        .enumerate()
        .map(|(j, &v)| (if j == y { zy } else { v } - m).exp())
        .sum();
    m + denom.ln() - zy
}

pub fn lda_loss_scalar(z: &[f64], y: usize, hist: &ClassHistogram, beta: f64, margin_c: f64) -> f64 {
    cb_weight(hist.counts[y], beta) * ldam_loss_scalar(z, y, ldam_margin(hist.counts[y], margin_c))
}

/// Batched LDA loss: mean over samples of w_y * ldam(z, y).
pub fn lda_loss_batch<T: Real>(
    logits: &Tensor<T>,
    targets: &[usize],
    hist: &ClassHistogram,
    beta: f64,
    margin_c: f64,
) -> stridenet_tensor::Result<Tensor<T>> {
    let weights: Vec<T> = targets
        .iter()
        .map(|&y| T::cast(cb_weight(hist.counts[y], beta)))
        .collect();
    let margins: Vec<T> = targets
        .iter()
        .map(|&y| T::cast(ldam_margin(hist.counts[y], margin_c)))
        .collect();
    logits.weighted_margin_ce(targets, &weights, &margins)
}

/// Negative temperature-scaled entropy: sum_i p_i log p_i with
/// p = softmax(z / tau). Higher means more confident (in-distribution).
pub fn ood_score(logits: &[f64], tau: f64) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| ((z - m) / tau).exp()).collect();
    let den: f64 = exps.iter().sum();
    exps.iter()
        .map(|&e| {
            let p = e / den;
            if p > 0.0 {
                p * p.ln()
            } else {
                0.0
            }
        })
        .sum()
}

/// 0 = in-distribution when score >= threshold, 1 = out-of-distribution.
pub fn ood_decide(score: f64, threshold: f64) -> u8 {
    if score >= threshold {
        0
    } else {
        1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    Lda,
}

impl std::str::FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ce" => Ok(LossKind::Ce),
            "lda" => Ok(LossKind::Lda),
            other => Err(format!("unknown loss kind {other:?} (want ce|lda)")),
        }
    }
}

pub struct FinetuneRun {
    pub store: ParamStore<f32>,
    pub model: ClassifierModel<f32>,
    /// Parameter snapshot with the best validation accuracy.
    pub best: Vec<NamedTensor<f32>>,
    pub best_val_acc: f64,
    pub val_acc_per_epoch: Vec<f64>,
    pub n_classes: usize,
}

fn labels_of(samples: &[FlowSample]) -> Result<Vec<u32>, TrainError> {
    samples
        .iter()
        .map(|s| s.label.ok_or(TrainError::MissingLabel))
        .collect()
}

/// Batched logits for a whole split, forward-only.
pub fn predict_logits(
    model: &ClassifierModel<f32>,
    samples: &[FlowSample],
    batch_size: usize,
) -> Result<Vec<Vec<f64>>, TrainError> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&FlowSample> = chunk.iter().collect();
        let input = ModelInput::from_samples(&refs, &model.repr);
        let logits = no_grad(|| model.logits(&input))?;
        let data = logits.to_vec();
        for row in data.chunks(model.n_classes) {
            out.push(row.iter().map(|&v| v as f64).collect());
        }
    }
    Ok(out)
}

pub fn predict_labels(
    model: &ClassifierModel<f32>,
    samples: &[FlowSample],
    batch_size: usize,
) -> Result<Vec<u32>, TrainError> {
    Ok(predict_logits(model, samples, batch_size)?
        .iter()
        .map(|row| argmax(row) as u32)
        .collect())
}

pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn accuracy(pred: &[u32], truth: &[u32]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Supervised fine-tuning. Encoder parameters are initialized from
/// `init_from` when given (by name); all tokens are visible. Keeps the
/// checkpoint with the best validation accuracy.
pub fn finetune_loop(
    train: &[FlowSample],
    val: &[FlowSample],
    init_from: Option<&[NamedTensor<f32>]>,
    loss_kind: LossKind,
    n_classes: usize,
    cfg: &RunConfig,
) -> Result<FinetuneRun, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySplit("val"));
    }
    let train_labels = labels_of(train)?;
    let val_labels = labels_of(val)?;
    let hist = ClassHistogram::from_labels(&train_labels, n_classes)?;
    let (beta, margin_c) = match loss_kind {
        LossKind::Ce => (0.0, 0.0),
        LossKind::Lda => (
            cfg.loss.beta,
            cfg.loss.margin_c.unwrap_or_else(|| default_margin_c(&hist)),
        ),
    };

    let tree = SeedTree::new(cfg.train.seed);
    let mut rng_init = tree.rng("init");
    let mut rng_epoch = tree.rng("epoch");
    let mut store = ParamStore::<f32>::new();
    let model = ClassifierModel::init(&mut store, &cfg.model, &cfg.repr, n_classes, &mut rng_init)?;
    if let Some(tensors) = init_from {
        store.load_matching(tensors)?;
    }

    let opt_base = AdamW {
        lr: cfg.train.finetune_lr,
        weight_decay: cfg.train.weight_decay,
        ..AdamW::default()
    };
    let steps_per_epoch = train.len().div_ceil(cfg.train.batch_size);
    let total_steps = steps_per_epoch * cfg.train.epochs;

    let mut best: Vec<NamedTensor<f32>> = store.snapshot();
    let mut best_val_acc = -1.0f64;
    let mut val_acc_per_epoch = Vec::with_capacity(cfg.train.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0usize;
    for _epoch in 0..cfg.train.epochs {
        order.shuffle(&mut rng_epoch);
        for chunk in order.chunks(cfg.train.batch_size) {
            let refs: Vec<&FlowSample> = chunk.iter().map(|&i| &train[i]).collect();
            let input = ModelInput::from_samples(&refs, &cfg.repr);
            let targets: Vec<usize> = chunk.iter().map(|&i| train_labels[i] as usize).collect();
            let logits = model.logits(&input)?;
            let loss = lda_loss_batch(&logits, &targets, &hist, beta, margin_c)?;
            loss.backward()?;
            let lr = lr_at_epoch(cfg, step, total_steps);
            store.adamw_step(&AdamW { lr, ..opt_base });
            step += 1;
        }
        let val_pred = predict_labels(&model, val, cfg.train.batch_size)?;
        let acc = accuracy(&val_pred, &val_labels);
        val_acc_per_epoch.push(acc);
        if acc > best_val_acc {
            best_val_acc = acc;
            best = store.snapshot();
        }
    }
    Ok(FinetuneRun {
        store,
        model,
        best,
        best_val_acc,
        val_acc_per_epoch,
        n_classes,
    })
}

fn lr_at_epoch(cfg: &RunConfig, step: usize, total: usize) -> f64 {
    crate::pretrain::lr_at(cfg.train.schedule, cfg.train.finetune_lr, step, total)
}

/// Restores the best-validation parameters into the run's model.
pub fn restore_best(run: &mut FinetuneRun) -> Result<(), TrainError> {
    run.store.load_all(&run.best)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ce_examples() {
        assert!((ce_loss_scalar(&[0.0, 0.0], 0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((ce_loss_scalar(&[0.0, 0.0, 0.0], 2) - 3f64.ln()).abs() < 1e-12);
        // shift invariance
        let z = [0.3, -1.2, 2.0];
        let zs: Vec<f64> = z.iter().map(|v| v + 10.0).collect();
        assert!((ce_loss_scalar(&z, 1) - ce_loss_scalar(&zs, 1)).abs() < 1e-12);
    }

    #[test]
    fn cb_weight_examples() {
        assert_eq!(cb_weight(1, 0.7), 1.0);
        assert_eq!(cb_weight(100, 0.0), 1.0);
        assert!((cb_weight(2, 0.5) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ldam_examples() {
        let z = [0.4, -0.3];
        assert_eq!(ldam_loss_scalar(&z, 0, 0.0), ce_loss_scalar(&z, 0));
        // C=1, n=16 -> margin 0.5
        assert!((ldam_margin(16, 1.0) - 0.5).abs() < 1e-12);
        // loss strictly increases with the margin
        let l1 = ldam_loss_scalar(&z, 0, 0.1);
        let l2 = ldam_loss_scalar(&z, 0, 0.6);
        assert!(l2 > l1);
    }

    #[test]
    fn lda_factorization_and_degenerate_cases() {
        let hist = ClassHistogram {
            counts: vec![2, 1],
        };
        let z = [0.0, 0.0];
        // beta=0, C=0 -> CE
        assert_eq!(lda_loss_scalar(&z, 0, &hist, 0.0, 0.0), ce_loss_scalar(&z, 0));
        // beta=0.5, n=[2,1], C=0 -> (2/3)·ln2
        let v = lda_loss_scalar(&z, 0, &hist, 0.5, 0.0);
        assert!((v - (2.0 / 3.0) * std::f64::consts::LN_2).abs() < 1e-12);
        // factorization
        let full = lda_loss_scalar(&z, 1, &hist, 0.9, 0.7);
        let manual = cb_weight(1, 0.9) * ldam_loss_scalar(&z, 1, ldam_margin(1, 0.7));
        assert_eq!(full, manual);
    }

    #[test]
    fn ood_score_examples() {
        // uniform over 2 classes -> -ln 2
        let s = ood_score(&[0.0, 0.0], 1.0);
        assert!((s + std::f64::consts::LN_2).abs() < 1e-12);
        // near one-hot -> close to 0 from below
        let s = ood_score(&[40.0, 0.0], 1.0);
        assert!(s > -1e-12 && s <= 0.0);
        // large temperature flattens to -ln C
        let s = ood_score(&[3.0, -1.0, 0.5], 1e9);
        assert!((s + 3f64.ln()).abs() < 1e-6);
        // shift invariance
        let a = ood_score(&[1.0, 2.0, 3.0], 2.0);
        let b = ood_score(&[11.0, 12.0, 13.0], 2.0);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn ood_decision_rule() {
        assert_eq!(ood_decide(0.0, -0.5), 0);
        assert_eq!(ood_decide(-0.6931, -0.5), 1);
        // tie resolves to in-distribution per the >= rule
        assert_eq!(ood_decide(-0.5, -0.5), 0);
    }

    #[test]
    fn temperature_does_not_change_argmax() {
        let z = vec![0.1, 2.3, -0.7, 1.9];
        let base = argmax(&z);
        for tau in [0.1, 1.0, 10.0, 1000.0] {
            let scaled: Vec<f64> = z.iter().map(|v| v / tau).collect();
            assert_eq!(argmax(&scaled), base);
        }
    }

    #[test]
    fn default_margin_targets_half() {
        let hist = ClassHistogram {
            counts: vec![1000, 100, 16],
        };
        let c = default_margin_c(&hist);
        assert!((ldam_margin(16, c) - 0.5).abs() < 1e-12);
    }
}
