//! Thin blocking HTTP client for the query service.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server returned {status}: {message}")]
    Api { status: u16, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FlowResult {
    pub key: FlowKey,
    pub label: u32,
    pub score: f64,
    pub classified_at: u64,
    pub batch_id: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FlowKey {
    pub src: String,
    pub dst: String,
    pub sport: u16,
    pub dport: u16,
    pub proto: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowPage {
    pub total: usize,
    pub offset: usize,
    pub items: Vec<FlowResult>,
}

pub struct QueryClient {
    base: String,
    http: reqwest::blocking::Client,
}

impl QueryClient {
    /// `base` is e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        QueryClient {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::blocking::Client::new(),
        }
    }

    fn get_json<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let resp = self.http.get(format!("{}{path}", self.base)).send()?;
        let status = resp.status();
        if !status.is_success() {
            let message = resp
                .json::<serde_json::Value>()
                .ok()
                .and_then(|v| v.get("error").and_then(|e| e.as_str()).map(String::from))
                .unwrap_or_else(|| status.to_string());
            return Err(ClientError::Api {
                status: status.as_u16(),
                message,
            });
        }
        Ok(resp.json()?)
    }

    pub fn health(&self) -> Result<serde_json::Value, ClientError> {
        self.get_json("/healthz")
    }

    pub fn flow(&self, key: &FlowKey) -> Result<FlowResult, ClientError> {
        self.get_json(&format!(
            "/flows?src={}&dst={}&sport={}&dport={}&proto={}",
            key.src, key.dst, key.sport, key.dport, key.proto
        ))
    }

    pub fn all_flows(&self, offset: usize, limit: usize) -> Result<FlowPage, ClientError> {
        self.get_json(&format!("/flows/all?offset={offset}&limit={limit}"))
    }

    pub fn stats(&self) -> Result<serde_json::Value, ClientError> {
        self.get_json("/stats")
    }
}
