//! Embedding and generation backends: deterministic local ones and an HTTP client.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use prism_core::embed::{BackendConfig, BackendError, BackendKind, Embedder, EmbeddingVector, Generator, LocalEmbedder, ScriptedGenerator};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

/// Client for a service speaking the JSON embed/generate protocol.
#[derive(Debug)]
pub struct RemoteClient {
    cfg: BackendConfig,
    base: String,
    token: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

enum Failure {
    Transient(String),
    Fatal(BackendError),
}

impl RemoteClient {
    /// Reads the bearer token from the environment variable named in the config.
    pub fn new(cfg: &BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let token = match cfg.api_key_env_var.as_deref() {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::InvalidRequest(format!("environment variable {var} holding the API key is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let base = cfg.endpoint_url.clone().unwrap_or_default().trim_end_matches('/').to_string();
        Ok(RemoteClient { cfg: cfg.clone(), base, token, agent })
    }

    fn attempt<T: DeserializeOwned>(&self, url: &str, body: &serde_json::Value) -> Result<T, Failure> {
        let mut request = self.agent.post(url);
        if let Some(token) = &self.token {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(|e| Failure::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        match status {
            200..=299 => response
                .body_mut()
                .read_json::<T>()
                .map_err(|e| Failure::Fatal(BackendError::BadResponse(format!("malformed body: {e}")))),
            401 | 403 => Err(Failure::Fatal(BackendError::Unauthorized)),
            408 | 429 | 500..=599 => Err(Failure::Transient(format!("HTTP {status}"))),
            _ => Err(Failure::Fatal(BackendError::BadResponse(format!("HTTP {status}")))),
        }
    }

    /// POSTs with up to `max_retries` retries on transient failures, doubling
    /// the delay from `backoff_ms` each time.
    fn post<T: DeserializeOwned>(&self, path: &str, body: serde_json::Value) -> Result<T, BackendError> {
        let url = format!("{}{}", self.base, path);
        let mut delay = Duration::from_millis(self.cfg.backoff_ms);
        let mut last = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(&url, &body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(msg)) => last = msg,
            }
        }
        Err(BackendError::Unreachable(format!("{url} after {} attempts: {last}", self.cfg.max_retries + 1)))
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }
}

impl Embedder for RemoteClient {
    fn model_name(&self) -> &str {
        &self.cfg.model_name
    }

    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        let response: EmbedResponse = self.post(&self.cfg.embed_path, json!({ "model": self.cfg.model_name, "input": text }))?;
        if response.embedding.len() != self.cfg.dim {
            return Err(BackendError::BadResponse(format!(
                "expected {} components, got {}",
                self.cfg.dim,
                response.embedding.len()
            )));
        }
        EmbeddingVector::new(response.embedding).map_err(|e| BackendError::BadResponse(e.to_string()))
    }
}

impl Generator for RemoteClient {
    fn model_name(&self) -> &str {
        &self.cfg.model_name
    }

    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, BackendError> {
        if max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        let body = json!({ "model": self.cfg.model_name, "prompt": prompt, "max_tokens": max_tokens, "temperature": 0 });
        let response: GenerateResponse = self.post(&self.cfg.generate_path, body)?;
        Ok(response.text)
    }
}

#[derive(Debug)]
pub enum EmbedBackend {
    Local(LocalEmbedder),
    Remote(RemoteClient),
}

impl EmbedBackend {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        Ok(match cfg.kind {
            BackendKind::Local => EmbedBackend::Local(LocalEmbedder::new(cfg.dim)),
            BackendKind::Remote => EmbedBackend::Remote(RemoteClient::new(cfg)?),
        })
    }

    pub fn is_local(&self) -> bool {
        matches!(self, EmbedBackend::Local(_))
    }

    fn inner(&self) -> &dyn Embedder {
        match self {
            EmbedBackend::Local(e) => e,
            EmbedBackend::Remote(e) => e,
        }
    }
}

impl Embedder for EmbedBackend {
    fn model_name(&self) -> &str {
        self.inner().model_name()
    }
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        self.inner().embed(text)
    }
}

#[derive(Debug)]
pub enum GenerateBackend {
    Local(ScriptedGenerator),
    Remote(RemoteClient),
}

/// Loads a `{prompt_hash: continuation}` JSON table.
pub fn load_script(path: &Path) -> Result<ScriptedGenerator, BackendError> {
    let text = std::fs::read_to_string(path).map_err(|e| BackendError::InvalidRequest(format!("{}: {e}", path.display())))?;
    let table: BTreeMap<String, String> =
        serde_json::from_str(&text).map_err(|e| BackendError::InvalidRequest(format!("{}: {e}", path.display())))?;
    Ok(ScriptedGenerator::from_table(table))
}

impl GenerateBackend {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        Ok(match cfg.kind {
            BackendKind::Local => match &cfg.script_path {
                Some(path) => GenerateBackend::Local(load_script(Path::new(path))?),
                None => GenerateBackend::Local(ScriptedGenerator::new()),
            },
            BackendKind::Remote => GenerateBackend::Remote(RemoteClient::new(cfg)?),
        })
    }

    pub fn is_local(&self) -> bool {
        matches!(self, GenerateBackend::Local(_))
    }

    fn inner(&self) -> &dyn Generator {
        match self {
            GenerateBackend::Local(g) => g,
            GenerateBackend::Remote(g) => g,
        }
    }
}

impl Generator for GenerateBackend {
    fn model_name(&self) -> &str {
        self.inner().model_name()
    }
    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, BackendError> {
        self.inner().generate(prompt, max_tokens)
    }
}
