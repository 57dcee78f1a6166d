//! Training-loop behavior at desk scale: losses fall, zero learning rate
//! freezes the trace, runs are bit-identical under a fixed seed, and the
//! CE/LDA trajectory identity holds.

use stridenet_core::config::{BlockKind, LrSchedule, ModelConfig, RunConfig, TrainConfig};
use stridenet_core::finetune::{finetune_loop, predict_labels, restore_best, LossKind};
use stridenet_core::metrics::{split, SplitSpec};
use stridenet_core::pretrain::pretrain_loop;
use stridenet_core::synth::{gen_corpus, small_repr, SynthSpec};

fn tiny_cfg(kind: BlockKind, multimodal: bool, seed: u64) -> RunConfig {
    RunConfig {
        repr: small_repr(),
        model: ModelConfig {
            d_enc: 32,
            d_dec: 16,
            n_state: 8,
            n_enc_blocks: 2,
            n_dec_blocks: 1,
            block_kind: kind,
            multimodal,
            n_heads: 4,
            mask_ratio_stride: 0.9,
            mask_ratio_seq: 0.15,
        },
        train: TrainConfig {
            steps: 60,
            epochs: 2,
            batch_size: 16,
            pretrain_lr: 1e-3,
            finetune_lr: 2e-3,
            schedule: LrSchedule::Linear,
            weight_decay: 0.01,
            seed,
        },
        ..RunConfig::default()
    }
}

#[test]
fn pretrain_loss_decreases_on_synthetic_corpus() {
    let samples = gen_corpus(&SynthSpec::three_easy_classes(60, 5));
    let cfg = tiny_cfg(BlockKind::Mamba, true, 1);
    let run = pretrain_loop(&samples, &cfg).unwrap();
    assert_eq!(run.trace.len(), 60);
    let head: f64 = run.trace[..10].iter().map(|s| s.total).sum::<f64>() / 10.0;
    let tail: f64 = run.trace[50..].iter().map(|s| s.total).sum::<f64>() / 10.0;
    assert!(
        tail < head,
        "loss should fall: first10 {head:.4} vs last10 {tail:.4}"
    );
}

#[test]
fn zero_lr_keeps_loss_trace_flat() {
    let samples = gen_corpus(&SynthSpec::three_easy_classes(20, 6));
    let mut cfg = tiny_cfg(BlockKind::Mamba, false, 2);
    cfg.train.steps = 8;
    cfg.train.pretrain_lr = 0.0;
    cfg.train.schedule = LrSchedule::Constant;
    let run = pretrain_loop(&samples, &cfg).unwrap();
    // batches differ per step, but parameters never move; re-running the
    // same schedule must reproduce the identical trace
    let run2 = pretrain_loop(&samples, &cfg).unwrap();
    let a: Vec<f64> = run.trace.iter().map(|s| s.total).collect();
    let b: Vec<f64> = run2.trace.iter().map(|s| s.total).collect();
    assert_eq!(a, b);
}

#[test]
fn fixed_seed_produces_bit_identical_parameters() {
    let samples = gen_corpus(&SynthSpec::three_easy_classes(20, 7));
    let mut cfg = tiny_cfg(BlockKind::Mamba, true, 3);
    cfg.train.steps = 10;
    let a = pretrain_loop(&samples, &cfg).unwrap();
    let b = pretrain_loop(&samples, &cfg).unwrap();
    for (pa, pb) in a.store.iter().zip(b.store.iter()) {
        assert_eq!(pa.name, pb.name);
        let va: Vec<u32> = pa.value.to_vec().iter().map(|v| v.to_bits()).collect();
        let vb: Vec<u32> = pb.value.to_vec().iter().map(|v| v.to_bits()).collect();
        assert_eq!(va, vb, "parameter {} differs across runs", pa.name);
    }
}

#[test]
fn empty_dataset_is_rejected() {
    let cfg = tiny_cfg(BlockKind::Mamba, false, 0);
    assert!(pretrain_loop(&[], &cfg).is_err());
}

#[test]
fn finetune_reaches_high_accuracy_and_tracks_best_checkpoint() {
    let samples = gen_corpus(&SynthSpec::three_easy_classes(60, 8));
    let mut cfg = tiny_cfg(BlockKind::Mamba, true, 4);
    cfg.train.epochs = 5;
    let (train, val, test) = split(
        &samples,
        &SplitSpec {
            seed: cfg.train.seed,
            per_category_cap: None,
            ..SplitSpec::default()
        },
    )
    .unwrap();
    let mut run = finetune_loop(&train, &val, None, LossKind::Ce, 3, &cfg).unwrap();
    // best-val accuracy never undershoots the first epoch
    assert!(run.best_val_acc >= run.val_acc_per_epoch[0]);
    restore_best(&mut run).unwrap();
    let preds = predict_labels(&run.model, &test, cfg.train.batch_size).unwrap();
    let truth: Vec<u32> = test.iter().map(|s| s.label.unwrap()).collect();
    let acc = preds
        .iter()
        .zip(&truth)
        .filter(|(a, b)| a == b)
        .count() as f64
        / truth.len() as f64;
    assert!(acc > 0.8, "tiny-run accuracy {acc}");
}

#[test]
fn lda_with_zero_beta_and_margin_matches_ce_trajectory_exactly() {
    let samples = gen_corpus(&SynthSpec::three_easy_classes(30, 9));
    let mut cfg = tiny_cfg(BlockKind::Mamba, false, 5);
    cfg.train.epochs = 1;
    cfg.loss.beta = 0.0;
    cfg.loss.margin_c = Some(0.0);
    let (train, val, _) = split(
        &samples,
        &SplitSpec {
            seed: 1,
            per_category_cap: None,
            ..SplitSpec::default()
        },
    )
    .unwrap();
    let ce = finetune_loop(&train, &val, None, LossKind::Ce, 3, &cfg).unwrap();
    let lda = finetune_loop(&train, &val, None, LossKind::Lda, 3, &cfg).unwrap();
    for (pa, pb) in ce.store.iter().zip(lda.store.iter()) {
        let va: Vec<u32> = pa.value.to_vec().iter().map(|v| v.to_bits()).collect();
        let vb: Vec<u32> = pb.value.to_vec().iter().map(|v| v.to_bits()).collect();
        assert_eq!(va, vb, "parameter {} differs between ce and lda(0,0)", pa.name);
    }
}
