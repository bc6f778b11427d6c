//! v1 HTTP endpoints.
//!
//! | method | path | auth |
//! |---|---|---|
//! | POST | `/v1/campaigns` | admin |
//! | POST | `/v1/sessions` | annotator |
//! | GET | `/v1/sessions/{id}/next` | annotator |
//! | POST | `/v1/sessions/{id}/submit` | annotator |
//! | GET | `/v1/campaigns/{id}/scores` | admin |
//! | GET | `/v1/campaigns/{id}/export` | admin |
//!
//! Auth is `Authorization: Bearer <token>`. Admin routes are open when no
//! admin token is configured.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::campaign::{build_definition, CampaignConfig};
use super::config::ServiceConfig;
use super::engine::CampaignHandle;
use super::log::EventLog;
use super::state::Submission;
use super::ServiceError;
use crate::backend::{Classifier, HttpBackend, HttpBackendConfig};
use crate::pipeline::PipelineRunRecord;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateCampaignRequest {
    #[serde(default)]
    pub config: CampaignConfig,
    pub records: Vec<PipelineRunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateCampaignResponse {
    pub campaign_id: String,
    /// annotator → bearer token
    pub tokens: BTreeMap<String, String>,
    pub contexts: usize,
    /// annotator → step-1/2 contexts
    pub assignments: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpenSessionRequest {
    pub campaign_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenSessionResponse {
    pub session_id: String,
    pub campaign_id: String,
    pub annotator: String,
}

/// Registry of campaigns served by one process.
pub struct Service {
    config: ServiceConfig,
    persist: bool,
    campaigns: RwLock<BTreeMap<String, Arc<CampaignHandle>>>,
    classifier: Option<Arc<dyn Classifier>>,
}

impl Service {
    /// Nothing is written to disk.
    pub fn in_memory(config: ServiceConfig, classifier: Option<Arc<dyn Classifier>>) -> Self {
        Service {
            config,
            persist: false,
            campaigns: RwLock::new(BTreeMap::new()),
            classifier,
        }
    }

    /// Loads every campaign found under `<data_dir>/campaigns`.
    pub fn open(config: ServiceConfig, classifier: Option<Arc<dyn Classifier>>) -> Result<Self, ServiceError> {
        let root = campaigns_dir(&config);
        std::fs::create_dir_all(&root)?;
        let mut campaigns = BTreeMap::new();
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(&root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(super::log::DEFINITION_FILE).exists())
            .collect();
        dirs.sort();
        for dir in dirs {
            let (def, state, log) = EventLog::open(&dir, config.snapshot_every)?;
            tracing::info!(campaign = %def.id, seq = state.seq, "loaded campaign");
            campaigns.insert(
                def.id.clone(),
                Arc::new(CampaignHandle::new(def, state, log, classifier.clone())),
            );
        }
        Ok(Service {
            config,
            persist: true,
            campaigns: RwLock::new(campaigns),
            classifier,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn create_campaign(&self, req: CreateCampaignRequest) -> Result<CreateCampaignResponse, ServiceError> {
        let id = format!("c-{}", uuid::Uuid::new_v4().simple());
        let def = build_definition(id.clone(), &req.records, &req.config, |_| {
            uuid::Uuid::new_v4().simple().to_string()
        })?;
        let log = if self.persist {
            EventLog::create(&campaigns_dir(&self.config).join(&id), &def, self.config.snapshot_every)?
        } else {
            EventLog::in_memory()
        };
        let response = CreateCampaignResponse {
            campaign_id: id.clone(),
            tokens: def.tokens.clone(),
            contexts: def.contexts.len(),
            assignments: def.step12_load(),
        };
        let handle = CampaignHandle::new(def, Default::default(), log, self.classifier.clone());
        self.campaigns
            .write()
            .expect("registry lock poisoned")
            .insert(id, Arc::new(handle));
        Ok(response)
    }

    pub fn campaign(&self, id: &str) -> Result<Arc<CampaignHandle>, ServiceError> {
        self.campaigns
            .read()
            .expect("registry lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownCampaign(id.to_string()))
    }

    pub fn campaign_for_session(&self, session_id: &str) -> Result<Arc<CampaignHandle>, ServiceError> {
        self.campaigns
            .read()
            .expect("registry lock poisoned")
            .values()
            .find(|c| c.session_annotator(session_id).is_some())
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))
    }

    fn check_admin(&self, headers: &HeaderMap) -> Result<(), ServiceError> {
        match &self.config.admin_token {
            Some(t) if bearer(headers) != Some(t.as_str()) => Err(ServiceError::Unauthorized),
            _ => Ok(()),
        }
    }
}

fn campaigns_dir(config: &ServiceConfig) -> PathBuf {
    config.data_dir.join("campaigns")
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let mut error = json!({"code": self.code(), "message": self.to_string()});
        if let ServiceError::ValidationFailed(v) = &self {
            error["field"] = json!(v.field);
        }
        (self.status(), Json(json!({ "error": error }))).into_response()
    }
}

type AppState = Arc<Service>;

async fn create_campaign(
    State(svc): State<AppState>,
    headers: HeaderMap,
    Json(req): Json<CreateCampaignRequest>,
) -> Result<(StatusCode, Json<CreateCampaignResponse>), ServiceError> {
    svc.check_admin(&headers)?;
    let resp = svc.create_campaign(req)?;
    Ok((StatusCode::CREATED, Json(resp)))
}

async fn open_session(
    State(svc): State<AppState>,
    headers: HeaderMap,
    Json(req): Json<OpenSessionRequest>,
) -> Result<(StatusCode, Json<OpenSessionResponse>), ServiceError> {
    let campaign = svc.campaign(&req.campaign_id)?;
    let token = bearer(&headers).ok_or(ServiceError::Unauthorized)?;
    let annotator = campaign
        .definition()
        .annotator_for_token(token)
        .ok_or(ServiceError::Unauthorized)?
        .to_string();
    let session_id = campaign.open_session(&annotator).await?;
    Ok((
        StatusCode::CREATED,
        Json(OpenSessionResponse {
            session_id,
            campaign_id: req.campaign_id,
            annotator,
        }),
    ))
}

fn authorize_session(
    svc: &Service,
    headers: &HeaderMap,
    session_id: &str,
) -> Result<Arc<CampaignHandle>, ServiceError> {
    let campaign = svc.campaign_for_session(session_id)?;
    let annotator = campaign
        .session_annotator(session_id)
        .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))?;
    let token = bearer(headers).ok_or(ServiceError::Unauthorized)?;
    if campaign.definition().tokens.get(&annotator).map(String::as_str) != Some(token) {
        return Err(ServiceError::Unauthorized);
    }
    Ok(campaign)
}

async fn next_task(
    State(svc): State<AppState>,
    headers: HeaderMap,
    Path(session_id): Path<String>,
) -> Result<Response, ServiceError> {
    let campaign = authorize_session(&svc, &headers, &session_id)?;
    let task = campaign.next_task(&session_id).await?;
    Ok(Json(task).into_response())
}

async fn submit(
    State(svc): State<AppState>,
    headers: HeaderMap,
    Path(session_id): Path<String>,
    Json(submission): Json<Submission>,
) -> Result<Response, ServiceError> {
    let campaign = authorize_session(&svc, &headers, &session_id)?;
    let outcome = campaign.submit(&session_id, submission).await?;
    Ok(Json(outcome).into_response())
}

async fn scores(
    State(svc): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Response, ServiceError> {
    svc.check_admin(&headers)?;
    let report = svc.campaign(&id)?.scores()?;
    Ok(Json(report).into_response())
}

async fn export(
    State(svc): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Response, ServiceError> {
    svc.check_admin(&headers)?;
    let body = svc.campaign(&id)?.export();
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/v1/campaigns", post(create_campaign))
        .route("/v1/sessions", post(open_session))
        .route("/v1/sessions/{id}/next", get(next_task))
        .route("/v1/sessions/{id}/submit", post(submit))
        .route("/v1/campaigns/{id}/scores", get(scores))
        .route("/v1/campaigns/{id}/export", get(export))
        .with_state(service)
}

/// Classifier for pre-tagging, from the configured backend URL.
pub fn classifier_from_config(config: &ServiceConfig) -> Result<Option<Arc<dyn Classifier>>, ServiceError> {
    let Some(url) = &config.backends.classifier_url else {
        return Ok(None);
    };
    let mut http = HttpBackendConfig {
        base_url: url.clone(),
        ..Default::default()
    };
    if let Some(t) = config.backends.timeout_ms {
        http.timeout_ms = t;
    }
    if let Some(r) = config.backends.retries {
        http.retries = r;
    }
    let backend = HttpBackend::new(http).map_err(|e| ServiceError::InvalidConfig(e.to_string()))?;
    Ok(Some(Arc::new(backend)))
}

/// Runs the service until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let classifier = classifier_from_config(&config)?;
    let addr = format!("{}:{}", config.bind, config.port);
    let service = Arc::new(Service::open(config, classifier)?);
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    tracing::info!(%addr, "annotation service listening");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
