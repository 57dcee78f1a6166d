//! Masked-reconstruction pre-training. Strides are shuffled and mostly
//! removed before the encoder (the trailing class token always stays
//! visible); the decoder restores the original order with a shared mask
//! token and reconstructs raw stride bytes. Size/interval tokens are
//! zero-corrupted instead of removed and reconstructed by their own heads.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use stridenet_tensor::optim::{AdamW, ParamStore};
use stridenet_tensor::{Real, Tensor};

use crate::config::{LrSchedule, RunConfig};
use crate::error::TrainError;
use crate::model::{ModelInput, PretrainModel, TokenLayout};
use crate::repr::FlowSample;
use crate::seed::SeedTree;

/// Per-sample stride mask: a permutation of the stride indices plus the
/// visible-token count (class token included). The first
/// `n_visible - 1` permuted strides stay visible, the rest are masked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    pub perm: Vec<u32>,
    pub n_visible: usize,
}

impl MaskPlan {
    pub fn new(n_stride: usize, ratio: f64, rng: &mut ChaCha12Rng) -> Result<Self, TrainError> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(TrainError::RatioOutOfRange(ratio));
        }
        let mut perm: Vec<u32> = (0..n_stride as u32).collect();
        perm.shuffle(rng);
        let n_visible = ((1.0 - ratio) * n_stride as f64).round() as usize + 1;
        Ok(MaskPlan { perm, n_visible })
    }

    pub fn visible_strides(&self) -> &[u32] {
        &self.perm[..self.n_visible - 1]
    }

    pub fn masked_strides(&self) -> &[u32] {
        &self.perm[self.n_visible - 1..]
    }

    pub fn n_masked(&self) -> usize {
        self.perm.len() - (self.n_visible - 1)
    }
}

/// Positions zeroed before encoding; count = round(ratio * m_seq). All
/// positions remain visible to the encoder.
pub fn zero_mask_positions(
    m_seq: usize,
    ratio: f64,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<u32>, TrainError> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(TrainError::RatioOutOfRange(ratio));
    }
    let k = (ratio * m_seq as f64).round() as usize;
    let mut all: Vec<u32> = (0..m_seq as u32).collect();
    all.shuffle(rng);
    all.truncate(k);
    Ok(all)
}

/// Original token indices fed to the encoder, in encoder order: visible
/// strides (shuffled order), then all sequence tokens, then the class token.
pub fn encoder_order(plan: &MaskPlan, layout: &TokenLayout) -> Vec<u32> {
    let mut order: Vec<u32> = plan.visible_strides().to_vec();
    if layout.multimodal {
        let s = layout.size_start() as u32;
        order.extend(s..s + 2 * layout.m_seq as u32);
    }
    order.push(layout.class_index() as u32);
    order
}

/// For each original position, its row in Concat(encoder output, mask
/// tokens); the inverse shuffle used to rebuild the decoder input.
pub fn unshuffle_index(plan: &MaskPlan, layout: &TokenLayout) -> Vec<u32> {
    let total = layout.total_len();
    let enc = encoder_order(plan, layout);
    let mut index = vec![u32::MAX; total];
    for (row, &orig) in enc.iter().enumerate() {
        index[orig as usize] = row as u32;
    }
    let mut next_mask = enc.len() as u32;
    for slot in index.iter_mut() {
        if *slot == u32::MAX {
            *slot = next_mask;
            next_mask += 1;
        }
    }
    index
}

/// Decoder input of full length: Unshuffle(Concat(enc_out, mask tokens)) +
/// decoder positional embeddings.
pub fn decode_assemble<T: Real>(
    enc_out: &Tensor<T>,
    plans: &[MaskPlan],
    layout: &TokenLayout,
    mask_token: &Tensor<T>,
    pe_dec: &Tensor<T>,
) -> Result<Tensor<T>, TrainError> {
    let (b, l_enc) = match enc_out.shape() {
        [b, l, _] => (*b, *l),
        s => {
            return Err(TrainError::PlanMismatch(format!(
                "encoder output shape {s:?}"
            )))
        }
    };
    if plans.len() != b {
        return Err(TrainError::PlanMismatch(format!(
            "{} plans for batch {b}",
            plans.len()
        )));
    }
    let expected = encoder_order(&plans[0], layout).len();
    if l_enc != expected {
        return Err(TrainError::PlanMismatch(format!(
            "encoder rows {l_enc}, layout wants {expected}"
        )));
    }
    let n_mask = layout.total_len() - l_enc;
    let stacked = if n_mask > 0 {
        let masks = mask_token.broadcast_rows(b, n_mask)?;
        Tensor::concat_rows(&[enc_out, &masks])?
    } else {
        enc_out.clone()
    };
    let idx: Vec<Vec<u32>> = plans.iter().map(|p| unshuffle_index(p, layout)).collect();
    Ok(stacked.select_rows_per_batch(&idx)?.add(pe_dec)?)
}

pub struct PretrainBatch {
    pub input: ModelInput,
    pub plans: Vec<MaskPlan>,
    pub size_zeroed: Vec<Vec<u32>>,
    pub int_zeroed: Vec<Vec<u32>>,
    /// Uncorrupted normalized stride bytes, reconstruction targets.
    pub raw_strides: Vec<f32>,
    pub true_sizes: Vec<u32>,
    pub true_intervals: Vec<f64>,
}

pub fn make_batch(
    samples: &[&FlowSample],
    model: &PretrainModel<impl Real>,
    rng_mask: &mut ChaCha12Rng,
    rng_zero: &mut ChaCha12Rng,
) -> Result<PretrainBatch, TrainError> {
    let repr = &model.repr;
    let cfg = &model.cfg;
    let layout = model.encoder.embed.layout;
    let mut input = ModelInput::from_samples(samples, repr);
    let raw_strides = input.strides.clone();
    let true_sizes: Vec<u32> = samples.iter().flat_map(|s| s.size_seq.clone()).collect();
    let true_intervals: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.interval_seq.clone())
        .collect();
    let plans = samples
        .iter()
        .map(|_| MaskPlan::new(layout.n_stride, cfg.mask_ratio_stride, rng_mask))
        .collect::<Result<Vec<_>, _>>()?;
    let (size_zeroed, int_zeroed) = if cfg.multimodal {
        let sz = samples
            .iter()
            .map(|_| zero_mask_positions(repr.m_seq, cfg.mask_ratio_seq, rng_zero))
            .collect::<Result<Vec<_>, _>>()?;
        let iv = samples
            .iter()
            .map(|_| zero_mask_positions(repr.m_seq, cfg.mask_ratio_seq, rng_zero))
            .collect::<Result<Vec<_>, _>>()?;
        input.zero_positions(repr.m_seq, &sz, &iv);
        (sz, iv)
    } else {
        (vec![Vec::new(); samples.len()], vec![Vec::new(); samples.len()])
    };
    Ok(PretrainBatch {
        input,
        plans,
        size_zeroed,
        int_zeroed,
        raw_strides,
        true_sizes,
        true_intervals,
    })
}

pub struct PretrainLosses<T: Real> {
    pub total: Tensor<T>,
    pub stride: f64,
    pub size: f64,
    pub interval: f64,
}

/// Full pre-training forward pass: embed, mask, encode, assemble, decode,
/// and the three reconstruction losses (L_rec = stride + size + interval).
pub fn pretrain_forward<T: Real>(
    model: &PretrainModel<T>,
    batch: &PretrainBatch,
) -> Result<PretrainLosses<T>, TrainError> {
    let layout = model.encoder.embed.layout;
    let b = batch.input.batch;
    let x0 = model.encoder.embed.embed(&batch.input)?;
    let enc_idx: Vec<Vec<u32>> = batch
        .plans
        .iter()
        .map(|p| encoder_order(p, &layout))
        .collect();
    let visible = x0.select_rows_per_batch(&enc_idx)?;
    let enc_out = model.encoder.forward(&visible)?;
    let enc_out = model.enc2dec.forward(&enc_out)?;
    let dec_in = decode_assemble(&enc_out, &batch.plans, &layout, &model.mask_token, &model.pe_dec)?;
    let dec_out = crate::model::forward_blocks(&model.dec_blocks, &dec_in)?;

    // stride reconstruction: MSE on raw normalized bytes at masked positions
    let masked_idx: Vec<Vec<u32>> = batch
        .plans
        .iter()
        .map(|p| p.masked_strides().to_vec())
        .collect();
    let n_masked = masked_idx[0].len();
    let l_s = model.repr.l_s;
    let stride_loss = {
        let rows = dec_out.select_rows_per_batch(&masked_idx)?;
        let pred = model.stride_head.forward(&rows)?;
        let mut target = Vec::with_capacity(b * n_masked * l_s);
        for (bi, idx) in masked_idx.iter().enumerate() {
            for &p in idx {
                let start = (bi * layout.n_stride + p as usize) * l_s;
                target.extend(
                    batch.raw_strides[start..start + l_s]
                        .iter()
                        .map(|&v| T::cast(v as f64)),
                );
            }
        }
        let target = Tensor::from_vec(target, &[b, n_masked, l_s])?;
        pred.mse(&target)?
    };

    let (size_loss, int_loss) = if layout.multimodal {
        let m_seq = layout.m_seq;
        let size_head = model.size_head.as_ref().expect("multimodal model");
        let int_head = model.int_head.as_ref().expect("multimodal model");
        let classes = model.repr.mtu as usize + 1;

        // size reconstruction as classification over 0..=MTU
        let k = batch.size_zeroed[0].len();
        let size_rows_idx: Vec<Vec<u32>> = batch
            .size_zeroed
            .iter()
            .map(|idx| idx.iter().map(|&p| layout.size_start() as u32 + p).collect())
            .collect();
        let size_loss = {
            let rows = dec_out.select_rows_per_batch(&size_rows_idx)?;
            let logits = size_head.forward(&rows)?.reshape(&[b * k, classes])?;
            let mut targets = Vec::with_capacity(b * k);
            for (bi, idx) in batch.size_zeroed.iter().enumerate() {
                for &p in idx {
                    let v = batch.true_sizes[bi * m_seq + p as usize];
                    if v as usize >= classes {
                        return Err(TrainError::ClassOutOfRange(v));
                    }
                    targets.push(v as usize);
                }
            }
            logits.cross_entropy_logits(&targets)?
        };

        // interval reconstruction as regression
        let int_rows_idx: Vec<Vec<u32>> = batch
            .int_zeroed
            .iter()
            .map(|idx| {
                idx.iter()
                    .map(|&p| layout.interval_start() as u32 + p)
                    .collect()
            })
            .collect();
        let int_loss = {
            let rows = dec_out.select_rows_per_batch(&int_rows_idx)?;
            let pred = int_head.forward(&rows)?;
            let mut target = Vec::with_capacity(b * k);
            for (bi, idx) in batch.int_zeroed.iter().enumerate() {
                for &p in idx {
                    target.push(T::cast(batch.true_intervals[bi * m_seq + p as usize]));
                }
            }
            let target = Tensor::from_vec(target, &[b, batch.int_zeroed[0].len(), 1])?;
            pred.mse(&target)?
        };
        (Some(size_loss), Some(int_loss))
    } else {
        (None, None)
    };

    let mut total = stride_loss.clone();
    if let Some(s) = &size_loss {
        total = total.add(s)?;
    }
    if let Some(i) = &int_loss {
        total = total.add(i)?;
    }
    Ok(PretrainLosses {
        stride: T::as_f64(stride_loss.item()?),
        size: size_loss.map(|t| T::as_f64(t.item().unwrap())).unwrap_or(0.0),
        interval: int_loss.map(|t| T::as_f64(t.item().unwrap())).unwrap_or(0.0),
        total,
    })
}

/// Linear schedule: warm up over the first tenth of training, then decay
/// linearly toward zero.
pub fn lr_at(schedule: LrSchedule, base: f64, step: usize, total: usize) -> f64 {
    match schedule {
        LrSchedule::Constant => base,
        LrSchedule::Linear => {
            let warmup = (total / 10).max(1);
            if step < warmup {
                base * (step + 1) as f64 / warmup as f64
            } else if total > warmup {
                let frac = (step - warmup) as f64 / (total - warmup) as f64;
                base * (1.0 - frac).max(0.01)
            } else {
                base
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepLoss {
    pub step: usize,
    pub total: f64,
    pub stride: f64,
    pub size: f64,
    pub interval: f64,
    pub lr: f64,
}

pub struct PretrainRun {
    pub store: ParamStore<f32>,
    pub model: PretrainModel<f32>,
    pub trace: Vec<StepLoss>,
}

/// Runs masked-reconstruction pre-training over `samples` for
/// `cfg.train.steps` AdamW steps and returns the trained parameters plus
/// the per-step loss trace.
pub fn pretrain_loop(samples: &[FlowSample], cfg: &RunConfig) -> Result<PretrainRun, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let tree = SeedTree::new(cfg.train.seed);
    let mut rng_init = tree.rng("init");
    let mut rng_mask = tree.rng("mask");
    let mut rng_zero = tree.rng("zero");
    let mut rng_batch = tree.rng("batch");

    let mut store = ParamStore::<f32>::new();
    let model = PretrainModel::init(&mut store, &cfg.model, &cfg.repr, &mut rng_init)?;
    let opt_base = AdamW {
        lr: cfg.train.pretrain_lr,
        weight_decay: cfg.train.weight_decay,
        ..AdamW::default()
    };

    let mut trace = Vec::with_capacity(cfg.train.steps);
    for step in 0..cfg.train.steps {
        let batch_samples: Vec<&FlowSample> = (0..cfg.train.batch_size)
            .map(|_| &samples[rng_batch.random_range(0..samples.len())])
            .collect();
        let batch = make_batch(&batch_samples, &model, &mut rng_mask, &mut rng_zero)?;
        let losses = pretrain_forward(&model, &batch)?;
        losses.total.backward()?;
        let lr = lr_at(cfg.train.schedule, opt_base.lr, step, cfg.train.steps);
        store.adamw_step(&AdamW { lr, ..opt_base });
        trace.push(StepLoss {
            step,
            total: f64::from(losses.total.item()?),
            stride: losses.stride,
            size: losses.size,
            interval: losses.interval,
            lr,
        });
    }
    Ok(PretrainRun {
        store,
        model,
        trace,
    })
}
