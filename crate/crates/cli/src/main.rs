//! `stridenet`: one binary over the whole pipeline — extraction, training,
//! classification, OOD scoring, evaluation, the replay/query service, and
//! plots. Exit code 2 for usage errors, 1 for runtime errors (with one
//! machine-readable JSON line on stderr).

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "stridenet", version, about = "stride-token traffic classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Run-config JSON; flag overrides > file > defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Pre-training steps override.
    #[arg(long)]
    steps: Option<usize>,
    /// Fine-tuning epochs override.
    #[arg(long)]
    epochs: Option<usize>,
    /// Batch size override.
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a pcap into a flow-sample JSONL file.
    Extract {
        #[arg(long)]
        pcap: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Category index to attach to every extracted flow.
        #[arg(long)]
        label: Option<u32>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Masked-reconstruction pre-training.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-step loss trace CSV.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Supervised fine-tuning from a pre-trained checkpoint.
    Finetune {
        #[arg(long)]
        data: PathBuf,
        /// Pre-trained checkpoint to initialize the encoder from.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value = "ce")]
        loss: stridenet_core::finetune::LossKind,
        /// Class-balanced re-weighting strength.
        #[arg(long)]
        beta: Option<f64>,
        /// LDAM margin scale C.
        #[arg(long)]
        margin_c: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Test metrics JSON.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Split the data by first-packet time instead of randomly.
        #[arg(long)]
        time_split: bool,
        /// Per-class cap before splitting.
        #[arg(long)]
        cap: Option<usize>,
        /// Stratified few-shot fraction of the training split.
        #[arg(long)]
        few_shot: Option<f64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Offline classification of a flow-sample file.
    Classify {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// OOD scoring: in-distribution vs out-of-distribution flow files.
    Ood {
        #[arg(long)]
        id: PathBuf,
        #[arg(long)]
        ood: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Softmax temperature.
        #[arg(long)]
        tau: Option<f64>,
        /// Decision threshold on the score.
        #[arg(long)]
        threshold: Option<f64>,
        /// ROC points CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Classification metrics on a labeled flow-sample file.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-position AMI stride grid CSV.
        #[arg(long)]
        ami_out: Option<PathBuf>,
    },
    /// Replay a pcap through the online engine and serve result queries.
    Serve {
        #[arg(long)]
        pcap: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Flush period W_g in seconds.
        #[arg(long, default_value_t = 3.0)]
        wg: f64,
        /// Eviction age W_r in seconds.
        #[arg(long, default_value_t = 10.0)]
        wr: f64,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Append-only JSONL of classified flows.
        #[arg(long)]
        results: Option<PathBuf>,
        /// Per-batch stats CSV (CDF source data).
        #[arg(long)]
        stats_csv: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Run the replay, write outputs, and exit without serving HTTP.
        #[arg(long)]
        oneshot: bool,
    },
    /// Query a running service.
    Query {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        addr: String,
        /// List all results (paginated).
        #[arg(long)]
        all: bool,
        #[arg(long, default_value_t = 0)]
        offset: usize,
        #[arg(long, default_value_t = 100)]
        limit: usize,
        /// Fetch throughput/latency summaries instead of flows.
        #[arg(long)]
        stats: bool,
        #[arg(long)]
        src: Option<String>,
        #[arg(long)]
        dst: Option<String>,
        #[arg(long)]
        sport: Option<u16>,
        #[arg(long)]
        dport: Option<u16>,
        #[arg(long)]
        proto: Option<u8>,
    },
    /// Render SVG figures from CSV outputs.
    Plot {
        /// Batch stats CSV -> throughput/latency CDF figure.
        #[arg(long)]
        cdf: Option<PathBuf>,
        /// Pre-training loss CSV -> loss curve.
        #[arg(long)]
        loss: Option<PathBuf>,
        /// AMI grid CSV -> per-position heat map.
        #[arg(long)]
        ami: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = format!("{:?}", e)
                .split(['(', ' ', '{'])
                .next()
                .unwrap_or("Error")
                .to_string();
            eprintln!(
                "error: {}",
                serde_json::json!({"kind": kind, "msg": e.to_string()})
            );
            ExitCode::FAILURE
        }
    }
}
