//! HTTP query service over the online classification engine.
//!
//! `GET /flows?src=&dst=&sport=&dport=&proto=` returns the latest result
//! for one flow, `GET /flows/all?offset=&limit=` pages through everything,
//! `GET /stats` summarizes per-batch throughput/latency, and `/healthz`
//! reports liveness. The replay engine runs on a background thread and
//! shares the result store with the handlers.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Json, Response};
use axum::routing::get;
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::json;

use stridenet_core::engine::{BatchStats, ClassifiedFlow, ReplayReport, ResultStore};
use stridenet_core::packet::parse_addr;
use stridenet_core::FiveTuple;

pub struct AppState {
    pub store: Mutex<ResultStore>,
    pub report: RwLock<Option<ReplayReport>>,
    /// Resolved run configuration and seed, echoed for provenance.
    pub meta: serde_json::Value,
}

impl AppState {
    pub fn new(store: ResultStore, meta: serde_json::Value) -> Arc<Self> {
        Arc::new(AppState {
            store: Mutex::new(store),
            report: RwLock::new(None),
            meta,
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/flows", get(get_flow))
        .route("/flows/all", get(get_all_flows))
        .route("/stats", get(get_stats))
        .with_state(state)
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

#[derive(Deserialize)]
struct FlowQuery {
    src: String,
    dst: String,
    sport: u16,
    dport: u16,
    proto: u8,
}

enum ApiError {
    NotFound(&'static str),
    BadRequest(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m.to_string()),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
        };
        (status, Json(json!({"error": msg}))).into_response()
    }
}

async fn get_flow(
    State(state): State<Arc<AppState>>,
    Query(q): Query<FlowQuery>,
) -> Result<Json<ClassifiedFlow>, ApiError> {
    let src = parse_addr(&q.src).ok_or_else(|| ApiError::BadRequest(format!("bad src {}", q.src)))?;
    let dst = parse_addr(&q.dst).ok_or_else(|| ApiError::BadRequest(format!("bad dst {}", q.dst)))?;
    let key = FiveTuple {
        src_ip: src,
        dst_ip: dst,
        src_port: q.sport,
        dst_port: q.dport,
        protocol: q.proto,
    };
    let store = state.store.lock().expect("store poisoned");
    store
        .query(&key)
        .map(|f| Json(f.clone()))
        .map_err(|_| ApiError::NotFound("no classification result for the requested flow"))
}

#[derive(Deserialize)]
struct PageQuery {
    #[serde(default)]
    offset: usize,
    #[serde(default = "default_limit")]
    limit: usize,
}

fn default_limit() -> usize {
    100
}

#[derive(Serialize)]
struct PageResponse {
    total: usize,
    offset: usize,
    items: Vec<ClassifiedFlow>,
}

async fn get_all_flows(
    State(state): State<Arc<AppState>>,
    Query(q): Query<PageQuery>,
) -> Json<PageResponse> {
    let store = state.store.lock().expect("store poisoned");
    let (total, items) = store.page(q.offset, q.limit.min(1000));
    Json(PageResponse {
        total,
        offset: q.offset,
        items: items.to_vec(),
    })
}

#[derive(Serialize)]
struct Summary {
    min: f64,
    mean: f64,
    max: f64,
    p50: f64,
}

fn summarize(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary {
            min: 0.0,
            mean: 0.0,
            max: 0.0,
            p50: 0.0,
        };
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Summary {
        min: sorted[0],
        mean: values.iter().sum::<f64>() / values.len() as f64,
        max: *sorted.last().unwrap(),
        p50: sorted[sorted.len() / 2],
    }
}

async fn get_stats(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let report = state.report.read().expect("report poisoned");
    let body = match report.as_ref() {
        None => json!({"done": false, "meta": state.meta}),
        Some(r) => {
            let throughput: Vec<f64> = r.batches.iter().map(|b| b.throughput_mbps).collect();
            let latency: Vec<f64> = r.batches.iter().map(|b| b.latency_secs).collect();
            json!({
                "done": true,
                "n_batches": r.batches.len(),
                "n_classified": r.n_classified,
                "n_evicted": r.n_evicted,
                "n_packets": r.n_packets,
                "sim_duration_secs": r.sim_duration_secs,
                "throughput_mbps": summarize(&throughput),
                "latency_secs": summarize(&latency),
                "meta": state.meta,
            })
        }
    };
    Json(body)
}

/// Per-batch stats rows as CSV (for the plot command).
pub fn stats_csv(batches: &[BatchStats]) -> String {
    let mut out = String::from(
        "batch_id,flush_at_secs,n_samples,wire_bytes,infer_secs,latency_secs,throughput_mbps\n",
    );
    for b in batches {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            b.batch_id,
            b.flush_at_secs,
            b.n_samples,
            b.wire_bytes,
            b.infer_secs,
            b.latency_secs,
            b.throughput_mbps
        ));
    }
    out
}

pub struct ServeOptions {
    pub addr: SocketAddr,
    pub pcap: Vec<u8>,
    /// Checkpoint parts; the model is rebuilt on the replay thread.
    pub ckpt_meta: serde_json::Value,
    pub ckpt_tensors: Vec<stridenet_tensor::checkpoint::NamedTensor<f32>>,
    pub engine: stridenet_core::engine::EngineConfig,
    pub results_path: Option<std::path::PathBuf>,
    pub stats_csv_path: Option<std::path::PathBuf>,
}

/// Binds the listener, starts the replay on a background thread, and serves
/// queries until shutdown. Returns once the listener stops.
pub async fn serve(opts: ServeOptions) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let store = match &opts.results_path {
        Some(p) => ResultStore::with_jsonl(p)?,
        None => ResultStore::in_memory(),
    };
    let meta = json!({
        "engine": {
            "w_g_secs": opts.engine.w_g_secs,
            "w_r_secs": opts.engine.w_r_secs,
            "speed_factor": opts.engine.speed_factor,
        },
        "model": opts.ckpt_meta,
    });
    let state = AppState::new(store, meta);
    let listener = tokio::net::TcpListener::bind(opts.addr).await?;
    let bound = listener.local_addr()?;
    eprintln!("serving on http://{bound}");

    spawn_replay(state.clone(), opts);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// Runs the replay engine on a dedicated thread, publishing results through
/// the shared store and the final report into the app state.
pub fn spawn_replay(state: Arc<AppState>, opts: ServeOptions) -> std::thread::JoinHandle<()> {
    std::thread::spawn(move || {
        // the model holds non-Send graph handles, so it is built here
        let classifier = match stridenet_core::engine::FlowClassifier::from_checkpoint_parts(
            &opts.ckpt_meta,
            &opts.ckpt_tensors,
        ) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("replay thread: failed to build classifier: {e}");
                return;
            }
        };
        struct SharedSink(Arc<AppState>);
        impl stridenet_core::engine::ResultSink for SharedSink {
            fn insert(
                &mut self,
                flow: ClassifiedFlow,
            ) -> Result<(), stridenet_core::error::EngineError> {
                self.0.store.lock().expect("store poisoned").insert(flow)
            }
            fn finish(&mut self) -> Result<(), stridenet_core::error::EngineError> {
                self.0.store.lock().expect("store poisoned").flush_sink()
            }
        }
        let mut sink = SharedSink(state.clone());
        match stridenet_core::engine::replay(&opts.pcap, &classifier, &opts.engine, &mut sink) {
            Ok(outcome) => {
                if let Some(path) = &opts.stats_csv_path {
                    if let Err(e) = std::fs::write(path, stats_csv(&outcome.report.batches)) {
                        eprintln!("replay thread: failed to write stats csv: {e}");
                    }
                }
                eprintln!(
                    "replay done: {} flows classified in {} batches, {} evicted",
                    outcome.report.n_classified,
                    outcome.report.batches.len(),
                    outcome.report.n_evicted
                );
                *state.report.write().expect("report poisoned") = Some(outcome.report);
            }
            Err(e) => eprintln!("replay thread: {e}"),
        }
    })
}
