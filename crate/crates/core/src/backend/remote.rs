use std::collections::{BTreeSet, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::Deserialize;

use super::{NerBackend, RawEntity};
use crate::error::{Error, Result};
use crate::model::Sentence;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// The single seam between remote adapters and the network.
pub trait HttpTransport: Send + Sync {
    fn post(&self, request: &HttpRequest) -> Result<HttpResponse>;
}

fn network_disabled() -> bool {
    std::env::var("NO_NETWORK").map(|v| v == "1").unwrap_or(false)
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        UreqTransport::new(Duration::from_secs(30))
    }
}

impl HttpTransport for UreqTransport {
    fn post(&self, request: &HttpRequest) -> Result<HttpResponse> {
        if network_disabled() {
            return Err(Error::NetworkDisabled);
        }
        let mut builder = self.agent.post(&request.url);
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        let unavailable = |e: ureq::Error| Error::BackendUnavailable {
            backend: request.url.clone(),
            message: e.to_string(),
        };
        let mut response = builder.send(request.body.as_str()).map_err(unavailable)?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_vec().map_err(unavailable)?;
        Ok(HttpResponse { status, body })
    }
}

/// Serves recorded responses in order and records every request.
#[derive(Debug, Default)]
pub struct ReplayTransport {
    responses: Mutex<VecDeque<HttpResponse>>,
    requests: Mutex<Vec<HttpRequest>>,
}

impl ReplayTransport {
    pub fn new(responses: impl IntoIterator<Item = HttpResponse>) -> Self {
        ReplayTransport {
            responses: Mutex::new(responses.into_iter().collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// One 200 response per fixture file, bodies replayed byte for byte.
    pub fn from_files<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut responses = Vec::new();
        for p in paths {
            responses.push(HttpResponse {
                status: 200,
                body: std::fs::read(p.as_ref())?,
            });
        }
        Ok(ReplayTransport::new(responses))
    }

    pub fn requests(&self) -> Vec<HttpRequest> {
        self.requests.lock().expect("replay lock").clone()
    }
}

impl HttpTransport for ReplayTransport {
    fn post(&self, request: &HttpRequest) -> Result<HttpResponse> {
        self.requests.lock().expect("replay lock").push(request.clone());
        self.responses
            .lock()
            .expect("replay lock")
            .pop_front()
            .ok_or_else(|| Error::BackendUnavailable {
                backend: request.url.clone(),
                message: "replay exhausted".into(),
            })
    }
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub name: String,
    pub endpoint: String,
    pub api_key: String,
    pub version: String,
    pub categories: BTreeSet<String>,
    pub max_retries: usize,
    pub initial_backoff: Duration,
}

fn env_prefix(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect()
}

impl EndpointConfig {
    /// Read `<NAME>_API_KEY` and `<NAME>_ENDPOINT`.
    pub fn from_env(name: &str) -> Result<Self> {
        let prefix = env_prefix(name);
        let read = |suffix: &str| {
            let var = format!("{prefix}_{suffix}");
            std::env::var(&var)
                .ok()
                .filter(|v| !v.trim().is_empty())
                .ok_or_else(|| Error::Auth(format!("environment variable {var} is not set")))
        };
        let api_key = read("API_KEY")?;
        let endpoint = read("ENDPOINT")?;
        Ok(EndpointConfig {
            name: name.to_string(),
            endpoint,
            api_key,
            version: "0".into(),
            categories: BTreeSet::new(),
            max_retries: 5,
            initial_backoff: Duration::from_millis(500),
        })
    }
}

#[derive(Deserialize)]
struct ProviderResponse {
    entities: Vec<ProviderEntity>,
}

#[derive(Deserialize)]
struct ProviderEntity {
    text: String,
    offset: usize,
    length: usize,
    category: String,
}

/// Parse `{"entities": [{"text", "offset", "length", "category"}]}`;
/// offsets are characters, categories are upper-cased.
pub fn parse_provider_response(body: &[u8]) -> Result<Vec<RawEntity>> {
    let parsed: ProviderResponse =
        serde_json::from_slice(body).map_err(|e| Error::Schema(e.to_string()))?;
    Ok(parsed
        .entities
        .into_iter()
        .map(|e| RawEntity {
            text: e.text,
            start: e.offset,
            end: e.offset + e.length,
            label: e.category.to_uppercase(),
        })
        .collect())
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

/// HTTP NER service with exponential backoff on 429 and 5xx responses.
pub struct RemoteBackend {
    config: EndpointConfig,
    transport: Arc<dyn HttpTransport>,
    sleep: Sleeper,
    retries: AtomicUsize,
}

pub fn remote_adapter(config: EndpointConfig) -> RemoteBackend {
    RemoteBackend::new(config, Arc::new(UreqTransport::default()))
}

impl RemoteBackend {
    pub fn new(config: EndpointConfig, transport: Arc<dyn HttpTransport>) -> Self {
        RemoteBackend {
            config,
            transport,
            sleep: Box::new(std::thread::sleep),
            retries: AtomicUsize::new(0),
        }
    }

    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    /// Total retries performed across all calls.
    pub fn retries(&self) -> usize {
        self.retries.load(Ordering::SeqCst)
    }

    fn request(&self, text: &str) -> HttpRequest {
        HttpRequest {
            url: self.config.endpoint.clone(),
            headers: vec![
                ("content-type".into(), "application/json".into()),
                ("x-api-key".into(), self.config.api_key.clone()),
            ],
            body: serde_json::json!({ "text": text }).to_string(),
        }
    }
}

impl NerBackend for RemoteBackend {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn version(&self) -> &str {
        &self.config.version
    }

    fn categories(&self) -> &BTreeSet<String> {
        &self.config.categories
    }

    fn invoke(&self, sentence: &Sentence) -> Result<Vec<RawEntity>> {
        let request = self.request(sentence.text());
        let mut last_error = None;
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                self.retries.fetch_add(1, Ordering::SeqCst);
                let factor = 1u32 << (attempt - 1).min(16);
                (self.sleep)(self.config.initial_backoff * factor);
            }
            match self.transport.post(&request) {
                Ok(r) if (200..300).contains(&r.status) => return parse_provider_response(&r.body),
                Ok(r) if r.status == 401 || r.status == 403 => {
                    return Err(Error::Auth(format!("{} rejected the credentials", self.config.name)))
                }
                Ok(r) if r.status == 429 => {
                    last_error = Some(Error::RateLimited {
                        retries: self.config.max_retries,
                    })
                }
                Ok(r) if r.status >= 500 => {
                    last_error = Some(Error::BackendUnavailable {
                        backend: self.config.name.clone(),
                        message: format!("HTTP {}", r.status),
                    })
                }
                Ok(r) => {
                    return Err(Error::BackendUnavailable {
                        backend: self.config.name.clone(),
                        message: format!("HTTP {}", r.status),
                    })
                }
                Err(e) if e.is_retryable() => last_error = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_error.unwrap_or(Error::BackendUnavailable {
            backend: self.config.name.clone(),
            message: "no attempt made".into(),
        }))
    }
}
