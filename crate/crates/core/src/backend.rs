//! Model backends: candidate generation, label classification and next-label
//! prediction, reachable in-process or over the v1 JSON/HTTP wire protocol.
//!
//! | method | path | request | response |
//! |---|---|---|---|
//! | generate | `POST /v1/generate` | [`GenerateRequest`] | [`GenerateResponse`] |
//! | classify | `POST /v1/classify` | [`ClassifyRequest`] | [`ClassifyResponse`] |
//! | predict-labels | `POST /v1/predict-labels` | [`PredictLabelsRequest`] | [`PredictLabelsResponse`] |

use std::collections::BTreeMap;
use std::time::Duration;

use async_trait::async_trait;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DialogueTurn, Speaker};
use crate::labels::{Label, LabelSequence};
use crate::pipeline::ConditioningMode;
use crate::prompts;

pub const GENERATE_PATH: &str = "/v1/generate";
pub const CLASSIFY_PATH: &str = "/v1/classify";
pub const PREDICT_LABELS_PATH: &str = "/v1/predict-labels";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

impl BackendError {
    fn retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireTurn {
    pub speaker: Speaker,
    pub text: String,
}

impl WireTurn {
    pub fn from_turns(turns: &[DialogueTurn]) -> Vec<WireTurn> {
        turns
            .iter()
            .map(|t| WireTurn {
                speaker: t.speaker,
                text: t.text.clone(),
            })
            .collect()
    }
}

impl prompts::PromptTurn for WireTurn {
    fn utterance(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub context_turns: Vec<WireTurn>,
    pub n: usize,
    pub mode: ConditioningMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

/// An empty string marks a candidate slot that could not be parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub confidences: BTreeMap<Label, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictLabelsRequest {
    pub context_turns: Vec<WireTurn>,
}

/// `labels: null` means the predictor produced nothing usable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictLabelsResponse {
    pub labels: Option<Vec<String>>,
}

#[async_trait]
pub trait Generator: Send + Sync {
    async fn generate(&self, request: &GenerateRequest) -> Result<Vec<String>, BackendError>;
}

#[async_trait]
pub trait Classifier: Send + Sync {
    /// Per-label confidences in `[0, 1]`.
    async fn classify(&self, text: &str) -> Result<BTreeMap<Label, f64>, BackendError>;
}

#[async_trait]
pub trait LabelPredictor: Send + Sync {
    async fn predict_labels(&self, context: &[WireTurn]) -> Result<Option<Vec<String>>, BackendError>;
}

/// Raw prompt-in, text-out language model.
#[async_trait]
pub trait Completion: Send + Sync {
    async fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub timeout_ms: u64,
    /// Extra attempts after the first, on transport errors and 5xx.
    pub retries: u32,
    pub retry_backoff_ms: u64,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            base_url: "http://127.0.0.1:8081".into(),
            timeout_ms: 30_000,
            retries: 2,
            retry_backoff_ms: 200,
        }
    }
}

/// Client for a remote backend speaking the v1 wire protocol.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::Client,
    config: HttpBackendConfig,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(HttpBackend { client, config })
    }

    pub fn from_url(base_url: impl Into<String>) -> Result<Self, BackendError> {
        Self::new(HttpBackendConfig {
            base_url: base_url.into(),
            ..Default::default()
        })
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }

    async fn post<Req: Serialize + Sync, Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, BackendError> {
        let url = format!("{}{}", self.config.base_url.trim_end_matches('/'), path);
        let mut attempt = 0;
        loop {
            let result = self.post_once(&url, body).await;
            match result {
                Err(e) if e.retryable() && attempt < self.config.retries => {
                    attempt += 1;
                    tracing::debug!(%url, attempt, error = %e, "retrying backend call");
                    tokio::time::sleep(Duration::from_millis(self.config.retry_backoff_ms * attempt as u64))
                        .await;
                }
                other => return other,
            }
        }
    }

    async fn post_once<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        url: &str,
        body: &Req,
    ) -> Result<Resp, BackendError> {
        let response = self
            .client
            .post(url)
            .json(body)
            .send()
            .await
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        let bytes = response
            .bytes()
            .await
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: String::from_utf8_lossy(&bytes).into_owned(),
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| BackendError::Protocol(e.to_string()))
    }
}

#[async_trait]
impl Generator for HttpBackend {
    async fn generate(&self, request: &GenerateRequest) -> Result<Vec<String>, BackendError> {
        let resp: GenerateResponse = self.post(GENERATE_PATH, request).await?;
        Ok(resp.candidates)
    }
}

#[async_trait]
impl Classifier for HttpBackend {
    async fn classify(&self, text: &str) -> Result<BTreeMap<Label, f64>, BackendError> {
        let resp: ClassifyResponse = self
            .post(CLASSIFY_PATH, &ClassifyRequest { text: text.to_string() })
            .await?;
        if let Some((label, v)) = resp.confidences.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(BackendError::Protocol(format!("confidence {v} for `{label}` outside [0, 1]")));
        }
        Ok(resp.confidences)
    }
}

#[async_trait]
impl LabelPredictor for HttpBackend {
    async fn predict_labels(&self, context: &[WireTurn]) -> Result<Option<Vec<String>>, BackendError> {
        let resp: PredictLabelsResponse = self
            .post(
                PREDICT_LABELS_PATH,
                &PredictLabelsRequest {
                    context_turns: context.to_vec(),
                },
            )
            .await?;
        Ok(resp.labels)
    }
}

/// Generator driven by a raw completion model through the few-shot prompts:
/// a single no-conditioning response, a label-conditioned response when
/// labels are supplied, or `n` numbered candidates.
pub struct PromptedGenerator<C> {
    model: C,
}

impl<C: Completion> PromptedGenerator<C> {
    pub fn new(model: C) -> Self {
        PromptedGenerator { model }
    }
}

#[async_trait]
impl<C: Completion> Generator for PromptedGenerator<C> {
    async fn generate(&self, request: &GenerateRequest) -> Result<Vec<String>, BackendError> {
        let ctx = &request.context_turns;
        if let Some(labels) = &request.labels {
            let seq: LabelSequence = labels.iter().filter_map(|l| l.parse().ok()).collect();
            let raw = self.model.complete(&prompts::build_pb_prompt(ctx, &seq)).await?;
            return Ok(vec![raw.trim().to_string()]);
        }
        if request.n <= 1 && request.mode == ConditioningMode::NoCd {
            let raw = self.model.complete(&prompts::build_nocd_prompt(ctx)).await?;
            return Ok(vec![raw.trim().to_string()]);
        }
        let raw = self
            .model
            .complete(&prompts::build_multi_prompt(ctx, request.n))
            .await?;
        // the prompt ends with the `1: ` cue, so the completion continues it
        let completed = format!("1: {raw}");
        Ok(prompts::parse_multi_response(&completed, request.n).into_texts())
    }
}

/// Label predictor driven by a raw completion model; the raw answer is passed
/// through for lenient parsing by the planner.
pub struct PromptedLabelPredictor<C> {
    model: C,
}

impl<C: Completion> PromptedLabelPredictor<C> {
    pub fn new(model: C) -> Self {
        PromptedLabelPredictor { model }
    }
}

#[async_trait]
impl<C: Completion> LabelPredictor for PromptedLabelPredictor<C> {
    async fn predict_labels(&self, context: &[WireTurn]) -> Result<Option<Vec<String>>, BackendError> {
        let raw = self.model.complete(&prompts::build_label_prompt(context)).await?;
        Ok(Some(vec![raw]))
    }
}
