mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use reqwest::StatusCode;
use serde_json::{json, Value};
use socemo::mock::spawn_router;
use socemo::service::campaign::CampaignConfig;
use socemo::service::http::CreateCampaignRequest;
use socemo::service::sim::SyntheticAnnotators;
use socemo::service::state::{next_task_ref, TaskRef};
use socemo::service::{router, Bundle, Service, ServiceConfig};

const ADMIN: &str = "admin-secret";

struct Harness {
    base: String,
    http: reqwest::Client,
    service: Arc<Service>,
}

impl Harness {
    async fn start() -> Harness {
        let config = ServiceConfig {
            admin_token: Some(ADMIN.into()),
            ..Default::default()
        };
        let service = Arc::new(Service::in_memory(config, None));
        let (addr, _) = spawn_router(router(service.clone())).await.unwrap();
        Harness {
            base: format!("http://{addr}"),
            http: reqwest::Client::new(),
            service,
        }
    }

    async fn send(&self, method: reqwest::Method, path: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        let text = resp.text().await.unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    async fn post(&self, path: &str, token: Option<&str>, body: Value) -> (StatusCode, Value) {
        self.send(reqwest::Method::POST, path, token, Some(body)).await
    }

    async fn get(&self, path: &str, token: Option<&str>) -> (StatusCode, Value) {
        self.send(reqwest::Method::GET, path, token, None).await
    }

    async fn create(&self) -> (String, BTreeMap<String, String>) {
        let req = CreateCampaignRequest {
            config: CampaignConfig {
                seed: 2,
                step3_contexts: 2,
                ..Default::default()
            },
            records: common::campaign_records(4),
        };
        let (status, body) = self.post("/v1/campaigns", Some(ADMIN), serde_json::to_value(req).unwrap()).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        let tokens = serde_json::from_value(body["tokens"].clone()).unwrap();
        (body["campaign_id"].as_str().unwrap().to_string(), tokens)
    }

    async fn session(&self, campaign: &str, token: &str) -> String {
        let (status, body) = self.post("/v1/sessions", Some(token), json!({ "campaign_id": campaign })).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        body["session_id"].as_str().unwrap().to_string()
    }
}

#[tokio::test]
async fn auth_is_enforced() {
    let h = Harness::start().await;
    let req = json!({ "records": [] });
    assert_eq!(h.post("/v1/campaigns", None, req.clone()).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(h.post("/v1/campaigns", Some("nope"), req).await.0, StatusCode::UNAUTHORIZED);

    let (id, tokens) = h.create().await;
    let (status, body) = h.post("/v1/sessions", Some("forged"), json!({ "campaign_id": id })).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["error"]["code"], "unauthorized");
    assert_eq!(
        h.post("/v1/sessions", Some(&tokens["a1"]), json!({ "campaign_id": "c-missing" })).await.0,
        StatusCode::NOT_FOUND
    );

    let session = h.session(&id, &tokens["a1"]).await;
    let next = format!("/v1/sessions/{session}/next");
    assert_eq!(h.get(&next, Some(&tokens["a2"])).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(h.get(&next, Some(&tokens["a1"])).await.0, StatusCode::OK);
    assert_eq!(h.get("/v1/sessions/unknown/next", Some(&tokens["a1"])).await.0, StatusCode::NOT_FOUND);
    assert_eq!(h.get(&format!("/v1/campaigns/{id}/scores"), Some(&tokens["a1"])).await.0, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn tasks_are_anonymous_and_validated() {
    let h = Harness::start().await;
    let (id, tokens) = h.create().await;
    let session = h.session(&id, &tokens["a1"]).await;
    let (status, task) = h.get(&format!("/v1/sessions/{session}/next"), Some(&tokens["a1"])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(task["status"], "task");
    assert_eq!(task["step"], "step1");
    let raw = task.to_string();
    for leak in ["producers", "CD_GT", "NO_CD", "reranking", "\"model\""] {
        assert!(!raw.contains(leak), "task leaks `{leak}`: {raw}");
    }

    let ctx = task["context_id"].as_str().unwrap();
    let submit = format!("/v1/sessions/{session}/submit");
    let bogus = json!({ "step": "step1", "context_id": ctx, "kept": { "r-unknown": true } });
    let (status, body) = h.post(&submit, Some(&tokens["a1"]), bogus).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    assert_eq!(body["error"]["code"], "validation_failed");
    assert!(body["error"]["field"].is_string());

    // step 2 before step 1
    let early = json!({ "step": "step2", "context_id": ctx, "top3": [] });
    assert_eq!(h.post(&submit, Some(&tokens["a1"]), early).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn full_campaign_over_http() {
    let h = Harness::start().await;
    let (id, tokens) = h.create().await;
    let handle = h.service.campaign(&id).unwrap();
    let def = handle.definition().clone();
    let sim = SyntheticAnnotators::new(1);
    let mut sessions = BTreeMap::new();
    for (a, t) in &tokens {
        sessions.insert(a.clone(), (h.session(&id, t).await, t.clone()));
    }

    let mut first_step1: Option<(String, Value)> = None;
    loop {
        let mut progressed = false;
        for (a, (session, token)) in &sessions {
            let state = handle.state();
            let task = next_task_ref(&def, &state, a);
            if matches!(task, TaskRef::Done | TaskRef::Waiting) {
                continue;
            }
            let (status, shown) = h.get(&format!("/v1/sessions/{session}/next"), Some(token)).await;
            assert_eq!(status, StatusCode::OK, "{shown}");
            let sub = sim.submission(&def, &state, a, &task).unwrap();
            let body = serde_json::to_value(&sub).unwrap();
            if first_step1.is_none() && body["step"] == "step1" {
                first_step1 = Some((a.clone(), body.clone()));
            }
            let (status, outcome) = h.post(&format!("/v1/sessions/{session}/submit"), Some(token), body).await;
            assert_eq!(status, StatusCode::OK, "{outcome}");
            assert_eq!(outcome["accepted"], true);
            progressed = true;
        }
        if !progressed {
            break;
        }
    }

    for (session, token) in sessions.values() {
        let (status, body) = h.get(&format!("/v1/sessions/{session}/next"), Some(token)).await;
        assert_eq!(status, StatusCode::GONE, "{body}");
    }

    // step 1 is locked once step 2 exists
    let (a, body) = first_step1.unwrap();
    let mut changed = body.clone();
    for v in changed["kept"].as_object_mut().unwrap().values_mut() {
        *v = json!(true);
    }
    let (session, token) = &sessions[&a];
    let submit = format!("/v1/sessions/{session}/submit");
    let (status, err) = h.post(&submit, Some(token), changed).await;
    assert_eq!(status, StatusCode::CONFLICT, "{err}");
    assert_eq!(err["error"]["code"], "stale_task");
    let (status, same) = h.post(&submit, Some(token), body).await;
    assert_eq!((status, same["accepted"].clone()), (StatusCode::OK, json!(false)));

    let (status, scores) = h.get(&format!("/v1/campaigns/{id}/scores"), Some(ADMIN)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(scores["rows"].as_array().unwrap().len(), 4);

    let resp = h
        .http
        .get(format!("{}/v1/campaigns/{id}/export", h.base))
        .bearer_auth(ADMIN)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let text = resp.text().await.unwrap();
    let bundle = Bundle::from_jsonl(text.as_bytes()).unwrap();
    let rescored = serde_json::to_value(bundle.compute_scores().unwrap()).unwrap();
    assert_eq!(rescored, scores);
    assert_eq!(bundle.to_jsonl(), text);
}
