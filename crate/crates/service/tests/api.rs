mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::{call, config, fitted, trace_app, services, MOON, SUBTOPICS};
use serde_json::{json, Value};
use topiclens_service::persist::load_state;
use topiclens_service::App;
use tower::ServiceExt;

fn small_app(dir: &std::path::Path, delay: Option<Duration>) -> Arc<App> {
    let cfg = config(dir, Some(4));
    let svc = services(delay);
    let (state, _) = fitted(&cfg, &services(None), 4, 30);
    App::new(cfg, svc, Some(state))
}

#[tokio::test(flavor = "multi_thread")]
async fn topic_listing_and_detail() {
    let dir = tempfile::tempdir().unwrap();
    let app = trace_app(dir.path());
    let (status, topics) = call(&app, "GET", "/topics", None).await;
    assert_eq!(status, StatusCode::OK);
    let topics = topics.as_array().unwrap();
    assert_eq!(topics.len(), 20);
    assert_eq!(topics[1]["title"], "Space Exploration");
    assert_eq!(topics[0]["title"], "Synthetic Group");
    assert_eq!(topics[1]["topwords"][0], "kalokaka");
    assert!(topics
        .iter()
        .all(|t| t["topwords"].as_array().unwrap().len() == 20));
    let total: u64 = topics.iter().map(|t| t["size"].as_u64().unwrap()).sum();
    assert_eq!(total, 600);

    let (status, detail) = call(&app, "GET", "/topics/1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(detail["index"], 1);
    assert_eq!(detail["title_is_placeholder"], false);
    assert_eq!(detail["doc_ids"].as_array().unwrap().len(), 30);
    assert!(detail["doc_ids"]
        .as_array()
        .unwrap()
        .iter()
        .all(|d| d.as_u64().unwrap() % 20 == 1));

    let (status, err) = call(&app, "GET", "/topics/20", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"]["code"], "InvalidTopicIndex");

    let (status, v) = call(&app, "GET", "/state/version", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, json!({"version": 0, "topics": 20}));
}

#[tokio::test(flavor = "multi_thread")]
async fn chat_knn_trace() {
    let dir = tempfile::tempdir().unwrap();
    let app = trace_app(dir.path());
    let (status, turn) = call(&app, "POST", "/chat", Some(json!({"prompt": MOON}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        turn["function_call"],
        json!({"name": "knn_search", "arguments": {"topic_index": 1, "query": "moon landing", "k": 5}})
    );
    let docs = turn["result_summary"]["documents"].as_array().unwrap();
    assert_eq!(docs.len(), 5);
    let members = app.snapshot().unwrap().topics()[1].doc_ids.clone();
    assert!(docs
        .iter()
        .all(|d| members.contains(&(d["doc_id"].as_u64().unwrap() as usize))));
    assert_eq!(
        turn["response"],
        "Here is what the topic model returned for your request."
    );
    assert_eq!(turn["version_before"], turn["version_after"]);
    assert!(!dir.path().join("state.json").exists());

    let (_, transcript) = call(&app, "GET", "/chat/transcript", None).await;
    assert_eq!(transcript.as_array().unwrap().len(), 1);
    assert_eq!(transcript[0], turn);
}

#[tokio::test(flavor = "multi_thread")]
async fn chat_split_trace_persists() {
    let dir = tempfile::tempdir().unwrap();
    let app = trace_app(dir.path());
    let before = app.snapshot().unwrap();
    let (status, turn) = call(&app, "POST", "/chat", Some(json!({"prompt": SUBTOPICS}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(turn["function_call"]["name"], "split_topic_kmeans");
    assert_eq!(
        turn["version_after"].as_u64().unwrap(),
        turn["version_before"].as_u64().unwrap() + 1
    );
    assert_eq!(turn["result_summary"]["topic_count"], 24);

    let after = app.snapshot().unwrap();
    assert_eq!(after.len(), 24);
    after.check_invariants().unwrap();
    let old: std::collections::BTreeSet<usize> =
        before.topics()[2].doc_ids.iter().copied().collect();
    let new_union = [2, 20, 21, 22, 23]
        .iter()
        .map(|&i| &after.topics()[i])
        .flat_map(|t| t.doc_ids.iter().copied())
        .collect::<std::collections::BTreeSet<_>>();
    assert_eq!(old, new_union);

    let loaded = load_state(&dir.path().join("state.json")).unwrap();
    assert_eq!(loaded.state.version(), after.version());
    assert_eq!(loaded.state.partition(), after.partition());
    let (_, v) = call(&app, "GET", "/state/version", None).await;
    assert_eq!(v, json!({"version": 1, "topics": 24}));
}

#[tokio::test(flavor = "multi_thread")]
async fn direct_mutations() {
    let dir = tempfile::tempdir().unwrap();
    let app = small_app(dir.path(), None);
    let n = app.snapshot().unwrap().len();
    assert_eq!(n, 4);

    let (status, r) = call(
        &app,
        "POST",
        "/topics/0/split",
        Some(json!({"method": "kmeans", "params": {"n_clusters": 2}})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["version"], 1);
    assert_eq!(r["summary"]["kind"], "split_kmeans");
    assert_eq!(r["topics"].as_array().unwrap().len(), 5);

    let (status, r) = call(
        &app,
        "POST",
        "/topics/merge",
        Some(json!({"indices": [0, 1]})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["topics"].as_array().unwrap().len(), 4);

    let (status, r) = call(
        &app,
        "POST",
        "/topics/2/split",
        Some(json!({"method": "hdbscan"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{r}");
    assert_eq!(r["summary"]["kind"], "split_hdbscan");

    let word = topiclens_core::synthetic::group_word(2, 0);
    let (status, r) = call(
        &app,
        "POST",
        "/topics/from-keyword",
        Some(json!({"keyword": word})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{r}");
    assert_eq!(r["summary"]["kind"], "create_keyword");

    let (status, r) = call(&app, "DELETE", "/topics/0", None).await;
    assert_eq!(status, StatusCode::OK);
    let version = r["version"].as_u64().unwrap();
    assert_eq!(version, 5);
    let loaded = load_state(&dir.path().join("state.json")).unwrap();
    assert_eq!(loaded.state.version(), version);
    app.snapshot().unwrap().check_invariants().unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn mutation_errors_leave_state_alone() {
    let dir = tempfile::tempdir().unwrap();
    let app = small_app(dir.path(), None);
    let cases = [
        (
            "POST",
            "/topics/0/split",
            json!({"method": "kmeans"}),
            StatusCode::BAD_REQUEST,
            "InvalidRequest",
        ),
        (
            "POST",
            "/topics/0/split",
            json!({"method": "kmeans", "params": {"n_clusters": 1}}),
            StatusCode::BAD_REQUEST,
            "InvalidParameter",
        ),
        (
            "POST",
            "/topics/9/split",
            json!({"method": "kmeans", "params": {"n_clusters": 2}}),
            StatusCode::NOT_FOUND,
            "InvalidTopicIndex",
        ),
        (
            "POST",
            "/topics/0/split",
            json!({"method": "magic"}),
            StatusCode::BAD_REQUEST,
            "InvalidRequest",
        ),
        (
            "POST",
            "/topics/merge",
            json!({"indices": [1]}),
            StatusCode::BAD_REQUEST,
            "NeedAtLeastTwo",
        ),
        (
            "POST",
            "/topics/merge",
            json!({"indices": [1, 7]}),
            StatusCode::NOT_FOUND,
            "InvalidTopicIndex",
        ),
        (
            "POST",
            "/topics/from-keyword",
            json!({"keyword": "  "}),
            StatusCode::BAD_REQUEST,
            "EmptyKeyword",
        ),
        (
            "POST",
            "/topics/0/split",
            json!({"method": "kmeans", "params": {"n_clusters": 1000}}),
            StatusCode::BAD_REQUEST,
            "TooFewDocuments",
        ),
        (
            "POST",
            "/chat",
            json!({"prompt": "   "}),
            StatusCode::BAD_REQUEST,
            "InvalidRequest",
        ),
        (
            "POST",
            "/chat",
            json!({"text": "hi"}),
            StatusCode::BAD_REQUEST,
            "InvalidRequest",
        ),
    ];
    for (method, uri, body, status, code) in cases {
        let (s, v) = call(&app, method, uri, Some(body.clone())).await;
        assert_eq!(
            (s, v["error"]["code"].as_str()),
            (status, Some(code)),
            "{uri} {body}"
        );
    }
    let (s, v) = call(&app, "DELETE", "/topics/4", None).await;
    assert_eq!(
        (s, v["error"]["code"].as_str()),
        (StatusCode::NOT_FOUND, Some("InvalidTopicIndex"))
    );
    assert_eq!(app.snapshot().unwrap().version(), 0);
    assert!(!dir.path().join("state.json").exists());
}

#[tokio::test(flavor = "multi_thread")]
async fn last_topic_cannot_be_deleted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Some(1));
    let (state, _) = fitted(&cfg, &services(None), 2, 30);
    assert_eq!(state.len(), 1);
    let app = App::new(cfg, services(None), Some(state));
    let (s, v) = call(&app, "DELETE", "/topics/0", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "LastTopic");
}

#[tokio::test(flavor = "multi_thread")]
async fn invalid_json_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = small_app(dir.path(), None);
    let req = Request::post("/topics/merge")
        .header("content-type", "application/json")
        .body(Body::from("{\"indices\": [0,"))
        .unwrap();
    let resp = topiclens_service::router(app).oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_mutations_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let app = small_app(dir.path(), Some(Duration::from_millis(150)));
    let initial = app.snapshot().unwrap();
    let split = json!({"method": "kmeans", "params": {"n_clusters": 2}});
    let merge = json!({"indices": [1, 2]});
    let (a, b) = tokio::join!(
        call(&app, "POST", "/topics/0/split", Some(split)),
        call(&app, "POST", "/topics/merge", Some(merge)),
    );
    let statuses = [a.0, b.0];
    assert_eq!(
        statuses.iter().filter(|s| **s == StatusCode::OK).count(),
        1,
        "{statuses:?}"
    );
    assert_eq!(
        statuses
            .iter()
            .filter(|s| **s == StatusCode::CONFLICT)
            .count(),
        1
    );
    let loser = if a.0 == StatusCode::CONFLICT {
        &a.1
    } else {
        &b.1
    };
    assert_eq!(loser["error"]["code"], "Conflict");

    let mut serial = initial.as_ref().clone();
    let svc = services(None);
    if a.0 == StatusCode::OK {
        serial.split_topic_kmeans(0, 2, &svc).unwrap();
    } else {
        serial.merge_topics(&[1, 2], &svc).unwrap();
    }
    let now = app.snapshot().unwrap();
    assert_eq!(now.version(), 1);
    assert_eq!(now.partition(), serial.partition());
    let titles = |s: &topiclens_core::topicstore::TopicModelState| {
        s.topics()
            .iter()
            .map(|t| t.title.clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(titles(&now), titles(&serial));
}

#[tokio::test(flavor = "multi_thread")]
async fn chat_conflicts_with_running_mutation() {
    let dir = tempfile::tempdir().unwrap();
    let app = small_app(dir.path(), Some(Duration::from_millis(150)));
    let (a, b) = tokio::join!(
        call(&app, "DELETE", "/topics/3", None),
        call(
            &app,
            "POST",
            "/chat",
            Some(json!({"prompt": "list the topics"}))
        ),
    );
    assert_eq!(a.0, StatusCode::OK);
    assert_eq!(b.0, StatusCode::CONFLICT);
    assert!(app.transcript().is_empty());
}

async fn wait_for_job(app: &Arc<App>, id: u64) -> Value {
    for _ in 0..600 {
        let (s, job) = call(app, "GET", &format!("/jobs/{id}"), None).await;
        assert_eq!(s, StatusCode::OK);
        if job["status"] != "running" {
            return job;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {id} did not finish");
}

#[tokio::test(flavor = "multi_thread")]
async fn fit_job_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let app = App::new(
        config(dir.path(), None),
        services(Some(Duration::from_millis(20))),
        None,
    );

    let (s, v) = call(&app, "GET", "/topics", None).await;
    assert_eq!(
        (s, v["error"]["code"].as_str()),
        (StatusCode::NOT_FOUND, Some("NoModel"))
    );
    let (s, _) = call(&app, "POST", "/chat", Some(json!({"prompt": "hello"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (_, v) = call(&app, "GET", "/state/version", None).await;
    assert_eq!(v, json!({"version": null, "topics": null}));

    let (texts, _) = common::corpus(3, 40);
    let body = json!({"corpus": {"texts": texts}, "params": {"n_topics": 3}});
    let (s, started) = call(&app, "POST", "/fit", Some(body.clone())).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(started["status"], "running");
    let (s2, busy) = call(&app, "POST", "/fit", Some(body)).await;
    assert_eq!(s2, StatusCode::CONFLICT, "{busy}");

    let id = started["job_id"].as_u64().unwrap();
    let job = wait_for_job(&app, id).await;
    assert_eq!(job["status"], "succeeded", "{job}");
    assert_eq!(job["report"]["documents"], 120);
    assert_eq!(job["report"]["topics"], 3);
    assert_eq!(job["report"]["warnings"][0]["kind"], "small_corpus");

    let (_, topics) = call(&app, "GET", "/topics", None).await;
    assert_eq!(topics.as_array().unwrap().len(), 3);
    assert!(dir.path().join("state.json").is_file());

    let (s, v) = call(&app, "GET", "/jobs/99", None).await;
    assert_eq!(
        (s, v["error"]["code"].as_str()),
        (StatusCode::NOT_FOUND, Some("UnknownJob"))
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn failed_fit_reports_stage() {
    let dir = tempfile::tempdir().unwrap();
    let app = App::new(config(dir.path(), None), services(None), None);
    let (s, started) = call(
        &app,
        "POST",
        "/fit",
        Some(json!({"corpus": {"texts": ["", "  "]}})),
    )
    .await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let job = wait_for_job(&app, started["job_id"].as_u64().unwrap()).await;
    assert_eq!(job["status"], "failed");
    assert_eq!(job["stage"], "corpus");
    assert!(app.snapshot().is_none());

    let (s, _) = call(
        &app,
        "POST",
        "/fit",
        Some(json!({"corpus": {"path": "/nonexistent/file.txt"}})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(
        &app,
        "POST",
        "/fit",
        Some(json!({"corpus": {"texts": ["a"]}, "params": {"n_topics": 0}})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn cors_preflight() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), None);
    cfg.cors_allowed_origins = vec!["http://localhost:3000".into()];
    let app = App::new(cfg, services(None), None);
    let preflight = |origin: &str| {
        Request::builder()
            .method("OPTIONS")
            .uri("/chat")
            .header("origin", origin)
            .header("access-control-request-method", "POST")
            .header("access-control-request-headers", "content-type")
            .body(Body::empty())
            .unwrap()
    };
    let resp = topiclens_service::router(app.clone())
        .oneshot(preflight("http://localhost:3000"))
        .await
        .unwrap();
    assert!(resp.status().is_success());
    assert_eq!(
        resp.headers()["access-control-allow-origin"],
        "http://localhost:3000"
    );
    let resp = topiclens_service::router(app)
        .oneshot(preflight("http://evil.example"))
        .await
        .unwrap();
    assert!(resp.headers().get("access-control-allow-origin").is_none());
}

#[tokio::test(flavor = "multi_thread")]
async fn health() {
    let dir = tempfile::tempdir().unwrap();
    let app = App::new(config(dir.path(), None), services(None), None);
    let (s, v) = call(&app, "GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
}
