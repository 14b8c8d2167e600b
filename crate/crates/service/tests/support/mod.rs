//! Drives the router in-process.

#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use loopsift_core::eval::{generate_synthetic_corpus, SyntheticCorpus, SyntheticCorpusSpec};
use loopsift_service::{router, AppState, ServiceConfig};
use serde_json::Value;
use tower::ServiceExt;

pub const TOKEN: &str = "test-token";

#[derive(Clone)]
pub struct Api {
    pub state: Arc<AppState>,
    pub router: Router,
}

pub struct Reply {
    pub status: StatusCode,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or(Value::Null)
    }

    pub fn code(&self) -> String {
        self.json()["error"]["code"].as_str().unwrap_or_default().to_string()
    }
}

impl Api {
    pub fn new(config: ServiceConfig) -> Self {
        let state = AppState::open(config).unwrap();
        Api { router: router(state.clone()), state }
    }

    pub fn in_memory() -> Self {
        Self::new(ServiceConfig::new(TOKEN))
    }

    pub async fn send(&self, method: Method, uri: &str, body: impl Into<Body>, token: Option<&str>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let resp = self.router.clone().oneshot(req.body(body.into()).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply { status, bytes }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.send(Method::GET, uri, Body::empty(), Some(TOKEN)).await
    }

    pub async fn post(&self, uri: &str, body: &Value) -> Reply {
        self.send(Method::POST, uri, body.to_string(), Some(TOKEN)).await
    }

    /// Waits for the background retrain without blocking the runtime.
    pub async fn settle(&self) {
        let state = self.state.clone();
        let done = tokio::task::spawn_blocking(move || state.wait_for_retrain(std::time::Duration::from_secs(120)))
            .await
            .unwrap();
        assert!(done, "retrain did not finish");
    }
}

pub fn corpus(n: usize) -> SyntheticCorpus {
    let spec = SyntheticCorpusSpec { n_examples: n, drift: None, ..SyntheticCorpusSpec::shipped() };
    generate_synthetic_corpus(&spec).unwrap()
}

/// Ingests the corpus and reviews its first `reviewed` items with gold labels.
pub async fn bootstrap(api: &Api, corpus: &SyntheticCorpus, reviewed: usize) {
    let body = serde_json::to_value(corpus.new_examples()).unwrap();
    let r = api.post("/api/v1/ingest", &body).await;
    assert_eq!(r.status, StatusCode::OK, "{:?}", r.json());
    for e in corpus.examples.iter().take(reviewed) {
        review_gold(api, corpus, &e.id, "team").await;
    }
}

pub async fn review_gold(api: &Api, corpus: &SyntheticCorpus, id: &str, annotator: &str) -> Reply {
    let g = &corpus.gold[id];
    let body = serde_json::json!({ "label": g.label, "toxic": g.toxic, "targets": g.targets, "annotator_id": annotator });
    let r = api.post(&format!("/api/v1/items/{id}/review"), &body).await;
    assert_eq!(r.status, StatusCode::OK, "{:?}", r.json());
    r
}
