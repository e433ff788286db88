//! Completion providers: HTTP, replay file, and a canned echo.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::corpus::TaskSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub endpoint: String,
    /// Model label sent with every request and recorded in reports.
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub samples_per_task: usize,
    pub timeout_secs: f64,
    /// Extra attempts after a transport failure or a 429/5xx answer.
    pub retries: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/completions".into(),
            model: "model".into(),
            temperature: 0.0,
            max_tokens: 512,
            samples_per_task: 1,
            timeout_secs: 120.0,
            retries: 2,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.samples_per_task == 0 {
            return Err(ProviderError::Config("samples_per_task must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(ProviderError::Config("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint answered {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no recorded completion for task {task:?} sample {index}")]
    MissingReplay { task: String, index: usize },
    #[error("provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    fn retryable(&self) -> bool {
        match self {
            Self::Transport(_) => true,
            Self::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Source of raw (untruncated) completions.
pub trait CompletionProvider: Send + Sync {
    /// Short label recorded in reports.
    fn name(&self) -> &str;

    fn fetch(&self, task: &TaskSpec, prompt: &str, stop: &[String], n: usize) -> Result<Vec<String>, ProviderError>;
}

/// Completions-style HTTP endpoint.
///
/// Request: `POST endpoint` with JSON `{model, prompt, max_tokens,
/// temperature, n, stop}`. Response: JSON with `choices: [{text}, ...]`.
pub struct HttpProvider {
    config: ProviderConfig,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent })
    }

    fn attempt(&self, prompt: &str, stop: &[String], n: usize) -> Result<Vec<String>, ProviderError> {
        let body = json!({
            "model": self.config.model,
            "prompt": prompt,
            "max_tokens": self.config.max_tokens,
            "temperature": self.config.temperature,
            "n": n,
            "stop": stop,
        });
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .send_json(&body)
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ProviderError::Status { status, body: text.chars().take(200).collect() });
        }
        parse_choices(&text)
    }
}

/// Extracts `choices[].text` from a completions response.
pub fn parse_choices(body: &str) -> Result<Vec<String>, ProviderError> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| ProviderError::Malformed(e.to_string()))?;
    let choices = v
        .get("choices")
        .and_then(|c| c.as_array())
        .ok_or_else(|| ProviderError::Malformed("no choices array".into()))?;
    choices
        .iter()
        .map(|c| {
            c.get("text")
                .and_then(|t| t.as_str())
                .map(str::to_string)
                .ok_or_else(|| ProviderError::Malformed("choice without text".into()))
        })
        .collect()
}

impl CompletionProvider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn fetch(&self, _task: &TaskSpec, prompt: &str, stop: &[String], n: usize) -> Result<Vec<String>, ProviderError> {
        let mut attempt = 0;
        loop {
            match self.attempt(prompt, stop, n) {
                Err(e) if e.retryable() && attempt < self.config.retries => {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(100 << attempt.min(6)));
                }
                other => return other,
            }
        }
    }
}

/// Recorded completions, keyed by task name; the position in each list is
/// the sample index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplayProvider {
    pub completions: BTreeMap<String, Vec<String>>,
}

impl ReplayProvider {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ProviderError> {
        serde_json::from_slice(bytes).map_err(|e| ProviderError::Malformed(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let bytes = std::fs::read(path).map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }
}

impl CompletionProvider for ReplayProvider {
    fn name(&self) -> &str {
        "replay"
    }

    fn fetch(&self, task: &TaskSpec, _prompt: &str, _stop: &[String], n: usize) -> Result<Vec<String>, ProviderError> {
        let recorded = self.completions.get(&task.name);
        (0..n)
            .map(|index| {
                recorded
                    .and_then(|r| r.get(index))
                    .cloned()
                    .ok_or_else(|| ProviderError::MissingReplay { task: task.name.clone(), index })
            })
            .collect()
    }
}

/// Returns the same text for every request.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoProvider {
    pub text: String,
}

impl Default for EchoProvider {
    fn default() -> Self {
        Self { text: "    pass\n".into() }
    }
}

impl CompletionProvider for EchoProvider {
    fn name(&self) -> &str {
        "echo"
    }

    fn fetch(&self, _task: &TaskSpec, _prompt: &str, _stop: &[String], n: usize) -> Result<Vec<String>, ProviderError> {
        Ok(vec![self.text.clone(); n])
    }
}
