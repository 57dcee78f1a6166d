use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use stridenet_core::config::RunConfig;
use stridenet_core::engine::{EngineConfig, FlowClassifier, ResultStore};
use stridenet_core::finetune::{self, LossKind};
use stridenet_core::metrics::{self, SplitMode, SplitSpec};
use stridenet_core::pretrain;
use stridenet_core::repr;

use crate::{Command, ConfigArgs};

pub fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Extract {
            pcap,
            out,
            label,
            cfg,
        } => extract(&pcap, &out, label, &cfg),
        Command::Pretrain {
            data,
            out,
            loss_csv,
            cfg,
        } => cmd_pretrain(&data, &out, loss_csv.as_deref(), &cfg),
        Command::Finetune {
            data,
            init,
            loss,
            beta,
            margin_c,
            out,
            metrics,
            time_split,
            cap,
            few_shot,
            cfg,
        } => cmd_finetune(
            &data,
            init.as_deref(),
            loss,
            beta,
            margin_c,
            &out,
            metrics.as_deref(),
            time_split,
            cap,
            few_shot,
            &cfg,
        ),
        Command::Classify { data, model, out } => classify(&data, &model, &out),
        Command::Ood {
            id,
            ood,
            model,
            tau,
            threshold,
            out,
            metrics,
            cfg,
        } => cmd_ood(&id, &ood, &model, tau, threshold, &out, metrics.as_deref(), &cfg),
        Command::Eval {
            data,
            model,
            out,
            ami_out,
        } => eval(&data, &model, &out, ami_out.as_deref()),
        Command::Serve {
            pcap,
            model,
            wg,
            wr,
            speed,
            results,
            stats_csv,
            addr,
            oneshot,
        } => serve(&pcap, &model, wg, wr, speed, results, stats_csv, &addr, oneshot),
        Command::Query {
            addr,
            all,
            offset,
            limit,
            stats,
            src,
            dst,
            sport,
            dport,
            proto,
        } => query(&addr, all, offset, limit, stats, src, dst, sport, dport, proto),
        Command::Plot { cdf, loss, ami, out } => crate::plot::run(cdf, loss, ami, &out),
    }
}

fn load_config(args: &ConfigArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_path(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = args.steps {
        cfg.train.steps = v;
    }
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.batch {
        cfg.train.batch_size = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Every artifact gets a sidecar manifest carrying the resolved config and
/// seed, so any output can be traced back to its run.
fn write_manifest(out: &Path, cfg: &RunConfig, extra: serde_json::Value) -> anyhow::Result<()> {
    let manifest = serde_json::json!({
        "config": cfg,
        "seed": cfg.train.seed,
        "detail": extra,
    });
    let path = manifest_path(out);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut os = out.as_os_str().to_owned();
    os.push(".manifest.json");
    PathBuf::from(os)
}

fn extract(pcap: &Path, out: &Path, label: Option<u32>, cfg_args: &ConfigArgs) -> anyhow::Result<()> {
    let cfg = load_config(cfg_args)?;
    let bytes = std::fs::read(pcap).with_context(|| format!("reading {}", pcap.display()))?;
    let samples = repr::extract_from_capture(&bytes, &cfg.repr, label)?;
    repr::write_samples_to_path(out, &samples)?;
    write_manifest(out, &cfg, serde_json::json!({"kind": "flow_samples", "n": samples.len()}))?;
    eprintln!("extracted {} flows -> {}", samples.len(), out.display());
    Ok(())
}

fn ckpt_meta(cfg: &RunConfig, kind: &str, extra: serde_json::Value) -> serde_json::Value {
    let mut meta = serde_json::json!({
        "kind": kind,
        "config": cfg,
        "seed": cfg.train.seed,
    });
    if let serde_json::Value::Object(extra) = extra {
        meta.as_object_mut().unwrap().extend(extra);
    }
    meta
}

fn cmd_pretrain(
    data: &Path,
    out: &Path,
    loss_csv: Option<&Path>,
    cfg_args: &ConfigArgs,
) -> anyhow::Result<()> {
    let cfg = load_config(cfg_args)?;
    let samples = repr::read_samples_from_path(data)?;
    let run = pretrain::pretrain_loop(&samples, &cfg)?;
    stridenet_tensor::checkpoint::save(
        out,
        &ckpt_meta(&cfg, "pretrain", serde_json::json!({})),
        &run.store.snapshot(),
    )?;
    if let Some(csv) = loss_csv {
        let mut text = String::from("step,total,stride,size,interval,lr\n");
        for s in &run.trace {
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.step, s.total, s.stride, s.size, s.interval, s.lr
            ));
        }
        std::fs::write(csv, text)?;
    }
    let first = run.trace.first().map(|s| s.total).unwrap_or(0.0);
    let last = run.trace.last().map(|s| s.total).unwrap_or(0.0);
    eprintln!(
        "pretrained {} steps on {} samples (loss {first:.4} -> {last:.4}) -> {}",
        run.trace.len(),
        samples.len(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_finetune(
    data: &Path,
    init: Option<&Path>,
    loss: LossKind,
    beta: Option<f64>,
    margin_c: Option<f64>,
    out: &Path,
    metrics_out: Option<&Path>,
    time_split: bool,
    cap: Option<usize>,
    few_shot: Option<f64>,
    cfg_args: &ConfigArgs,
) -> anyhow::Result<()> {
    let mut cfg = load_config(cfg_args)?;
    if let Some(b) = beta {
        cfg.loss.beta = b;
    }
    if let Some(c) = margin_c {
        cfg.loss.margin_c = Some(c);
    }
    let samples = repr::read_samples_from_path(data)?;
    let n_classes = samples
        .iter()
        .filter_map(|s| s.label)
        .max()
        .map(|m| m as usize + 1)
        .context("no labeled samples in the dataset")?;

    let spec = SplitSpec {
        mode: if time_split {
            SplitMode::TimeOrdered
        } else {
            SplitMode::Random
        },
        seed: cfg.train.seed,
        per_category_cap: cap.or(Some(2000)),
        few_shot_fraction: few_shot.unwrap_or(1.0),
    };
    let (train, val, test) = metrics::split(&samples, &spec)?;
    let train = metrics::few_shot_subsample(&train, spec.few_shot_fraction, cfg.train.seed)?;

    let init_tensors = match init {
        Some(p) => Some(stridenet_tensor::checkpoint::load::<f32, _>(p)?.1),
        None => None,
    };
    let mut run = finetune::finetune_loop(
        &train,
        &val,
        init_tensors.as_deref(),
        loss,
        n_classes,
        &cfg,
    )?;
    finetune::restore_best(&mut run)?;

    let preds = finetune::predict_labels(&run.model, &test, cfg.train.batch_size)?;
    let truth: Vec<u32> = test.iter().map(|s| s.label.unwrap()).collect();
    let m = metrics::classification_metrics(&truth, &preds);
    stridenet_tensor::checkpoint::save(
        out,
        &ckpt_meta(
            &cfg,
            "classifier",
            serde_json::json!({"n_classes": n_classes, "loss": loss, "best_val_acc": run.best_val_acc}),
        ),
        &run.best,
    )?;
    let report = serde_json::json!({
        "test": m,
        "best_val_acc": run.best_val_acc,
        "val_acc_per_epoch": run.val_acc_per_epoch,
        "loss": loss,
        "n_classes": n_classes,
        "splits": {"train": train.len(), "val": val.len(), "test": test.len()},
        "config": cfg,
        "seed": cfg.train.seed,
    });
    if let Some(p) = metrics_out {
        std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
    }
    eprintln!(
        "finetuned ({loss:?}) best val acc {:.4}, test acc {:.4} -> {}",
        run.best_val_acc,
        m.accuracy,
        out.display()
    );
    Ok(())
}

fn classify(data: &Path, model: &Path, out: &Path) -> anyhow::Result<()> {
    let classifier = FlowClassifier::from_checkpoint(model)?;
    let samples = repr::read_samples_from_path(data)?;
    let rows = classifier.classify(&samples)?;
    let mut text = String::new();
    for (s, (label, score)) in samples.iter().zip(&rows) {
        let line = serde_json::json!({
            "key": s.key,
            "label": label,
            "score": score,
        });
        text.push_str(&line.to_string());
        text.push('\n');
    }
    std::fs::write(out, text)?;
    eprintln!("classified {} flows -> {}", samples.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ood(
    id: &Path,
    ood: &Path,
    model: &Path,
    tau: Option<f64>,
    threshold: Option<f64>,
    out: &Path,
    metrics_out: Option<&Path>,
    cfg_args: &ConfigArgs,
) -> anyhow::Result<()> {
    let cfg = load_config(cfg_args)?;
    let tau = tau.unwrap_or(cfg.loss.tau);
    let threshold = threshold.unwrap_or(cfg.loss.threshold);
    if tau <= 0.0 {
        bail!("temperature must be positive");
    }
    let classifier = FlowClassifier::from_checkpoint(model)?;
    let id_samples = repr::read_samples_from_path(id)?;
    let ood_samples = repr::read_samples_from_path(ood)?;
    let score = |samples: &[stridenet_core::FlowSample]| -> anyhow::Result<Vec<f64>> {
        Ok(classifier
            .logits(samples)?
            .iter()
            .map(|z| finetune::ood_score(z, tau))
            .collect())
    };
    let id_scores = score(&id_samples)?;
    let ood_scores = score(&ood_samples)?;
    let auroc = metrics::auroc(&id_scores, &ood_scores);
    let fpr95 = metrics::fpr_at_95_tpr(&id_scores, &ood_scores);

    // ROC sweep: a sample is flagged OOD when its score < t
    let mut thresholds: Vec<f64> = id_scores.iter().chain(&ood_scores).copied().collect();
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    let mut csv = String::from("threshold,fpr,tpr\n");
    for t in thresholds {
        let tpr = ood_scores.iter().filter(|&&s| s < t).count() as f64 / ood_scores.len().max(1) as f64;
        let fpr = id_scores.iter().filter(|&&s| s < t).count() as f64 / id_scores.len().max(1) as f64;
        csv.push_str(&format!("{t},{fpr},{tpr}\n"));
    }
    std::fs::write(out, csv)?;

    let id_flagged = id_scores
        .iter()
        .filter(|&&s| finetune::ood_decide(s, threshold) == 1)
        .count();
    let ood_flagged = ood_scores
        .iter()
        .filter(|&&s| finetune::ood_decide(s, threshold) == 1)
        .count();
    let report = serde_json::json!({
        "auroc": auroc,
        "fpr_at_95_tpr": fpr95,
        "tau": tau,
        "threshold": threshold,
        "n_id": id_scores.len(),
        "n_ood": ood_scores.len(),
        "id_flagged_ood": id_flagged,
        "ood_flagged_ood": ood_flagged,
        "config": cfg,
        "seed": cfg.train.seed,
    });
    if let Some(p) = metrics_out {
        std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
    }
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn eval(data: &Path, model: &Path, out: &Path, ami_out: Option<&Path>) -> anyhow::Result<()> {
    let classifier = FlowClassifier::from_checkpoint(model)?;
    let (meta, _) = stridenet_tensor::checkpoint::load::<f32, _>(model)?;
    let samples = repr::read_samples_from_path(data)?;
    let truth: Vec<u32> = samples
        .iter()
        .map(|s| s.label.context("eval needs labeled samples"))
        .collect::<Result<_, _>>()?;
    let preds: Vec<u32> = classifier
        .logits(&samples)?
        .iter()
        .map(|row| finetune::argmax(row) as u32)
        .collect();
    let m = metrics::classification_metrics(&truth, &preds);
    let report = serde_json::json!({
        "metrics": m,
        "n_samples": samples.len(),
        "checkpoint_meta": meta,
    });
    std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
    eprintln!(
        "eval: accuracy {:.4}, weighted f1 {:.4} over {} samples",
        m.accuracy,
        m.weighted_f1,
        samples.len()
    );

    if let Some(p) = ami_out {
        let run_cfg: RunConfig = serde_json::from_value(
            meta.get("config").cloned().context("checkpoint lacks config")?,
        )?;
        let grid = metrics::ami_stride_scores(&samples, &run_cfg.repr, 2)?;
        let mut csv = String::from("packet,region,index,score\n");
        for (r, row) in grid.rows.iter().enumerate() {
            let packet = r / 2;
            let region = if r % 2 == 0 { "header" } else { "payload" };
            for (i, score) in row.iter().enumerate() {
                csv.push_str(&format!("{packet},{region},{i},{score}\n"));
            }
        }
        std::fs::write(p, csv)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn serve(
    pcap: &Path,
    model: &Path,
    wg: f64,
    wr: f64,
    speed: f64,
    results: Option<PathBuf>,
    stats_csv: Option<PathBuf>,
    addr: &str,
    oneshot: bool,
) -> anyhow::Result<()> {
    let pcap_bytes = std::fs::read(pcap)?;
    let (meta, tensors) = stridenet_tensor::checkpoint::load::<f32, _>(model)?;
    let run_cfg: RunConfig =
        serde_json::from_value(meta.get("config").cloned().context("checkpoint lacks config")?)?;
    let engine = EngineConfig {
        repr: run_cfg.repr.clone(),
        w_g_secs: wg,
        w_r_secs: wr,
        speed_factor: speed,
    };

    if oneshot {
        let classifier = FlowClassifier::from_checkpoint_parts(&meta, &tensors)?;
        let mut store = match &results {
            Some(p) => ResultStore::with_jsonl(p)?,
            None => ResultStore::in_memory(),
        };
        let outcome = stridenet_core::engine::replay(&pcap_bytes, &classifier, &engine, &mut store)?;
        if let Some(p) = &stats_csv {
            std::fs::write(p, stridenet_service::stats_csv(&outcome.report.batches))?;
        }
        if let Some(p) = &results {
            write_manifest(
                p,
                &run_cfg,
                serde_json::json!({"kind": "results", "n_classified": outcome.report.n_classified}),
            )?;
        }
        eprintln!(
            "replay done: {} classified in {} batches, {} evicted, {} packets",
            outcome.report.n_classified,
            outcome.report.batches.len(),
            outcome.report.n_evicted,
            outcome.report.n_packets
        );
        return Ok(());
    }

    let addr: std::net::SocketAddr = addr.parse().context("parsing --addr")?;
    let opts = stridenet_service::ServeOptions {
        addr,
        pcap: pcap_bytes,
        ckpt_meta: meta,
        ckpt_tensors: tensors,
        engine,
        results_path: results,
        stats_csv_path: stats_csv,
    };
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(stridenet_service::serve(opts))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn query(
    addr: &str,
    all: bool,
    offset: usize,
    limit: usize,
    stats: bool,
    src: Option<String>,
    dst: Option<String>,
    sport: Option<u16>,
    dport: Option<u16>,
    proto: Option<u8>,
) -> anyhow::Result<()> {
    let client = stridenet_client::QueryClient::new(addr);
    if stats {
        println!("{}", serde_json::to_string_pretty(&client.stats()?)?);
        return Ok(());
    }
    if all {
        let page = client.all_flows(offset, limit)?;
        println!("{}", serde_json::to_string_pretty(&page)?);
        return Ok(());
    }
    match (src, dst, sport, dport, proto) {
        (Some(src), Some(dst), Some(sport), Some(dport), Some(proto)) => {
            let flow = client.flow(&stridenet_client::FlowKey {
                src,
                dst,
                sport,
                dport,
                proto,
            })?;
            println!("{}", serde_json::to_string_pretty(&flow)?);
            Ok(())
        }
        _ => bail!("query needs --all, --stats, or the full 5-tuple (--src --dst --sport --dport --proto)"),
    }
}
