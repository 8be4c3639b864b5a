use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Classifier, Logits};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEndpoint {
    pub base_url: String,
    pub timeout: Duration,
    pub max_batch: usize,
}

impl RemoteEndpoint {
    pub fn new(base_url: impl Into<String>, timeout: Duration, max_batch: usize) -> Result<Self> {
        if max_batch == 0 {
            return Err(Error::invalid("max batch size must be at least 1"));
        }
        Ok(RemoteEndpoint {
            base_url: base_url.into(),
            timeout,
            max_batch,
        })
    }

    pub fn predict_url(&self) -> String {
        format!("{}/v1/predict", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Serialize)]
struct PredictRequest<'a> {
    instances: &'a [Vec<&'a str>],
}

#[derive(Deserialize)]
struct PredictResponse {
    logits: Vec<Vec<f64>>,
}

/// Request body for `POST {base}/v1/predict`.
pub fn encode_request(instances: &[Vec<&str>]) -> String {
    serde_json::to_string(&PredictRequest { instances }).expect("request serializes")
}

/// Parses a response body and checks it has `expected_rows` rows of
/// `num_classes` finite logits.
pub fn decode_response(
    body: &str,
    expected_rows: usize,
    num_classes: usize,
) -> std::result::Result<Vec<Logits>, String> {
    let resp: PredictResponse =
        serde_json::from_str(body).map_err(|e| format!("malformed response: {e}"))?;
    if resp.logits.len() != expected_rows {
        return Err(format!(
            "shape mismatch: sent {expected_rows} instances, got {} rows",
            resp.logits.len()
        ));
    }
    resp.logits
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != num_classes {
                return Err(format!(
                    "shape mismatch: row {i} has {} logits, expected {num_classes}",
                    row.len()
                ));
            }
            Logits::new(row).map_err(|e| format!("row {i}: {e}"))
        })
        .collect()
}

/// HTTP classifier. Responses are memoized by token list for the lifetime
/// of the value, so one run sees one answer per input even if the server
/// is nondeterministic.
pub struct RemoteClassifier {
    endpoint: RemoteEndpoint,
    num_classes: usize,
    agent: ureq::Agent,
    memo: Mutex<HashMap<Vec<String>, Logits>>,
    wire_calls: AtomicUsize,
}

impl RemoteClassifier {
    pub fn new(endpoint: RemoteEndpoint, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid("remote classifier needs at least 2 classes"));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(endpoint.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteClassifier {
            endpoint,
            num_classes,
            agent,
            memo: Mutex::new(HashMap::new()),
            wire_calls: AtomicUsize::new(0),
        })
    }

    pub fn endpoint(&self) -> &RemoteEndpoint {
        &self.endpoint
    }

    /// Number of HTTP requests issued so far.
    pub fn wire_calls(&self) -> usize {
        self.wire_calls.load(Ordering::Relaxed)
    }

    fn call(&self, batch: usize, instances: &[Vec<&str>]) -> Result<Vec<Logits>> {
        let transport = |message: String| Error::Transport {
            endpoint: self.endpoint.base_url.clone(),
            batch,
            message,
        };
        self.wire_calls.fetch_add(1, Ordering::Relaxed);
        let mut resp = self
            .agent
            .post(&self.endpoint.predict_url())
            .header("content-type", "application/json")
            .send(encode_request(instances))
            .map_err(|e| transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| transport(e.to_string()))?;
        if status != 200 {
            return Err(transport(format!("HTTP {status}")));
        }
        decode_response(&body, instances.len(), self.num_classes).map_err(transport)
    }
}

impl Classifier for RemoteClassifier {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn logits_batch(&self, inputs: &[Vec<&str>]) -> Result<Vec<Logits>> {
        let missing: Vec<Vec<&str>> = {
            let memo = self.memo.lock().expect("memo lock");
            let mut seen = std::collections::HashSet::new();
            inputs
                .iter()
                .filter(|toks| {
                    let key: Vec<String> = toks.iter().map(|t| t.to_string()).collect();
                    !memo.contains_key(&key) && seen.insert(key)
                })
                .cloned()
                .collect()
        };

        for (batch, chunk) in missing.chunks(self.endpoint.max_batch).enumerate() {
            let logits = self.call(batch, chunk)?;
            let mut memo = self.memo.lock().expect("memo lock");
            for (toks, l) in chunk.iter().zip(logits) {
                memo.entry(toks.iter().map(|t| t.to_string()).collect())
                    .or_insert(l);
            }
        }

        let memo = self.memo.lock().expect("memo lock");
        inputs
            .iter()
            .map(|toks| {
                let key: Vec<String> = toks.iter().map(|t| t.to_string()).collect();
                memo.get(&key)
                    .cloned()
                    .ok_or_else(|| Error::Model("remote logits missing after fetch".into()))
            })
            .collect()
    }
}
