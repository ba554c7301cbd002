#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::Value;
use topiclens_core::embedding::Embedder;
use topiclens_core::llm::{Llm, LlmProviderKind, MockProvider};
use topiclens_core::pipeline::{fit, FitReport, ModelServices};
use topiclens_core::reduction::ReducerConfig;
use topiclens_core::synthetic::{grouped_corpus, SyntheticSpec};
use topiclens_core::topicstore::TopicModelState;
use topiclens_service::{App, ServiceConfig};
use tower::ServiceExt;

pub const MOON: &str = "Which information related to the keyword 'moon landing' does topic 1 have?";
pub const SUBTOPICS: &str = "What are 5 potential subtopics of topic 2";

pub fn mock_script() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/chat_trace.mock.json")
}

pub fn config(dir: &Path, n_topics: Option<usize>) -> ServiceConfig {
    let mut cfg = ServiceConfig {
        state_path: dir.join("state.json"),
        n_topics,
        reducer: ReducerConfig::pca(5),
        ..ServiceConfig::default()
    };
    cfg.llm.kind = LlmProviderKind::Mock;
    cfg.llm.mock_script_path = Some(mock_script());
    cfg
}

pub fn services(delay: Option<Duration>) -> ModelServices {
    let mut mock = MockProvider::from_file(&mock_script()).unwrap();
    if let Some(d) = delay {
        mock = mock.with_delay(d);
    }
    let dim = ServiceConfig::default().embedding.local_dim;
    ModelServices::new(Embedder::local(dim), Llm::new(Arc::new(mock)))
}

pub fn corpus(groups: usize, per_group: usize) -> (Vec<String>, Vec<usize>) {
    grouped_corpus(&SyntheticSpec {
        groups,
        docs_per_group: per_group,
        ..SyntheticSpec::default()
    })
}

pub fn fitted(
    cfg: &ServiceConfig,
    svc: &ModelServices,
    groups: usize,
    per_group: usize,
) -> (TopicModelState, FitReport) {
    let (texts, _) = corpus(groups, per_group);
    fit(&texts, &cfg.fit_config().unwrap(), svc).unwrap()
}

/// The 20-group model scripted with the scripted chat-trace mock.
pub fn trace_app(dir: &Path) -> Arc<App> {
    let mut cfg = config(dir, Some(20));
    cfg.reducer = ReducerConfig::pca(20);
    let svc = services(None);
    let (state, _) = fitted(&cfg, &svc, 20, 30);
    App::new(cfg, svc, Some(state))
}

pub async fn call(
    app: &Arc<App>,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = topiclens_service::router(app.clone())
        .oneshot(req.body(body).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes)
            .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}
