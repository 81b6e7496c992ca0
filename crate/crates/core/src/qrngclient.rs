//! HTTP client for online quantum random number services, with a raw-byte
//! file cache for offline reuse.
//!
//! The wire format is the ANU-style JSON payload:
//! `{"type":"uint8","length":N,"data":[...],"success":true}`, requested with
//! `GET <base_url>?length=N&type=uint8`.

use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const DEFAULT_QRNG_URL: &str = "https://qrng.anu.edu.au/API/jsonI.php";
pub const MAX_BLOCK_SIZE: usize = 1024;

#[derive(Debug, Error)]
pub enum QrngError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("network failure after {attempts} attempt(s): {message}")]
    NetworkFailure { attempts: u32, message: String },
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("service refused the request (success=false)")]
    ServiceRefused,
    #[error("io error on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cache holds {available} bytes but {requested} were requested")]
    CacheExhausted { requested: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrngEndpointConfig {
    pub base_url: String,
    /// Values requested per HTTP call, 1..=1024.
    pub block_size: usize,
    pub timeout_secs: f64,
    pub retries: u32,
    /// First retry delay; doubles on every further retry.
    #[serde(default = "default_backoff")]
    pub backoff_secs: f64,
}

fn default_backoff() -> f64 {
    0.5
}

impl Default for QrngEndpointConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_QRNG_URL.to_string(),
            block_size: MAX_BLOCK_SIZE,
            timeout_secs: 10.0,
            retries: 3,
            backoff_secs: default_backoff(),
        }
    }
}

impl QrngEndpointConfig {
    pub fn with_url(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), QrngError> {
        if !(1..=MAX_BLOCK_SIZE).contains(&self.block_size) {
            return Err(QrngError::InvalidRequest(format!(
                "block_size must be in 1..={MAX_BLOCK_SIZE}, got {}",
                self.block_size
            )));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(QrngError::InvalidRequest(format!(
                "timeout must be positive, got {}",
                self.timeout_secs
            )));
        }
        if !(self.backoff_secs.is_finite() && self.backoff_secs >= 0.0) {
            return Err(QrngError::InvalidRequest(format!(
                "backoff must be non-negative, got {}",
                self.backoff_secs
            )));
        }
        Ok(())
    }
}

/// A blocking HTTP GET returning the response body.
pub trait Transport {
    fn get(&mut self, url: &str, query: &[(&str, String)], timeout: Duration) -> Result<String, String>;
}

/// [`Transport`] backed by `ureq`.
#[derive(Debug, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn get(&mut self, url: &str, query: &[(&str, String)], timeout: Duration) -> Result<String, String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        let mut req = agent.get(url);
        for (k, v) in query {
            req = req.query(*k, v);
        }
        let mut resp = req.call().map_err(|e| e.to_string())?;
        resp.body_mut().read_to_string().map_err(|e| e.to_string())
    }
}

/// Decodes one JSON payload into its byte values.
pub fn parse_payload(body: &str) -> Result<Vec<u8>, QrngError> {
    let bad = |m: String| QrngError::MalformedPayload(m);
    let value: Value = serde_json::from_str(body).map_err(|e| bad(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| bad("payload is not a JSON object".into()))?;
    match obj.get("success") {
        Some(Value::Bool(true)) => {}
        Some(Value::Bool(false)) => return Err(QrngError::ServiceRefused),
        Some(other) => return Err(bad(format!("success is not a boolean: {other}"))),
        None => return Err(bad("missing field success".into())),
    }
    if let Some(t) = obj.get("type") {
        if t.as_str() != Some("uint8") {
            return Err(bad(format!("unexpected type {t}")));
        }
    }
    let data = obj
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing data array".into()))?;
    let bytes = data
        .iter()
        .map(|v| {
            v.as_u64()
                .and_then(|x| u8::try_from(x).ok())
                .ok_or_else(|| bad(format!("data value {v} is not a uint8")))
        })
        .collect::<Result<Vec<u8>, _>>()?;
    if let Some(len) = obj.get("length") {
        if len.as_u64() != Some(bytes.len() as u64) {
            return Err(bad(format!("length {len} disagrees with {} data values", bytes.len())));
        }
    }
    if bytes.is_empty() {
        return Err(bad("empty data array".into()));
    }
    Ok(bytes)
}

fn request_block<T: Transport + ?Sized>(
    transport: &mut T,
    config: &QrngEndpointConfig,
) -> Result<Vec<u8>, QrngError> {
    let query = [
        ("length", config.block_size.to_string()),
        ("type", "uint8".to_string()),
    ];
    let timeout = Duration::from_secs_f64(config.timeout_secs);
    let mut attempt = 0;
    loop {
        match transport.get(&config.base_url, &query, timeout) {
            Ok(body) => return parse_payload(&body),
            Err(message) => {
                if attempt >= config.retries {
                    return Err(QrngError::NetworkFailure {
                        attempts: attempt + 1,
                        message,
                    });
                }
                let delay = config.backoff_secs * f64::from(1u32 << attempt.min(16));
                std::thread::sleep(Duration::from_secs_f64(delay));
                attempt += 1;
            }
        }
    }
}

/// Fetches exactly `n` bytes in request order, trimming the last block.
pub fn fetch_random_bytes<T: Transport + ?Sized>(
    transport: &mut T,
    config: &QrngEndpointConfig,
    n: usize,
) -> Result<Vec<u8>, QrngError> {
    if n == 0 {
        return Err(QrngError::InvalidRequest("byte count must be >= 1".into()));
    }
    config.validate()?;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let block = request_block(transport, config)?;
        let take = block.len().min(n - out.len());
        out.extend_from_slice(&block[..take]);
    }
    Ok(out)
}

pub fn cache_bytes(bytes: &[u8], path: &Path) -> Result<(), QrngError> {
    fs::write(path, bytes).map_err(|source| QrngError::IoFailure {
        path: path.display().to_string(),
        source,
    })
}

/// The first `n` bytes of a cache file.
pub fn load_cached(path: &Path, n: usize) -> Result<Vec<u8>, QrngError> {
    let mut bytes = fs::read(path).map_err(|source| QrngError::IoFailure {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() < n {
        return Err(QrngError::CacheExhausted {
            requested: n,
            available: bytes.len(),
        });
    }
    bytes.truncate(n);
    Ok(bytes)
}

/// Serves `n` bytes from `cache` when it already holds enough; otherwise
/// fetches them (unless `offline`) and writes them to the cache.
pub fn obtain_bytes<T: Transport + ?Sized>(
    transport: &mut T,
    config: &QrngEndpointConfig,
    n: usize,
    cache: Option<&Path>,
    offline: bool,
) -> Result<Vec<u8>, QrngError> {
    if let Some(path) = cache {
        if offline || path.exists() {
            match load_cached(path, n) {
                Ok(bytes) => return Ok(bytes),
                Err(e) if offline => return Err(e),
                Err(_) => {}
            }
        }
    } else if offline {
        return Err(QrngError::InvalidRequest("offline mode needs a cache file".into()));
    }
    let bytes = fetch_random_bytes(transport, config, n)?;
    if let Some(path) = cache {
        cache_bytes(&bytes, path)?;
    }
    Ok(bytes)
}
