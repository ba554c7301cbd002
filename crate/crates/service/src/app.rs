//! The HTTP API.
//!
//! Reads are served from the last committed snapshot. Every mutation takes
//! the single writer slot without waiting; a request that finds it taken is
//! answered with 409. A mutation works on a copy of the state, persists it,
//! and only then publishes it.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use topiclens_core::chatrouter::{ChatRouter, ChatTurn, RouterConfig};
use topiclens_core::corpus::read_corpus_file;
use topiclens_core::embedding::Embedder;
use topiclens_core::llm::Llm;
use topiclens_core::pipeline::{fit, FitConfig, FitReport, FitStage, ModelServices};
use topiclens_core::topicstore::{ModificationSummary, Topic, TopicModelState};
use topiclens_core::topwords::TopwordList;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::persist::{load_state, save_state};

/// Top-words listed per topic in `GET /topics`.
pub const LIST_TOPWORDS: usize = 20;
const MAX_BODY_BYTES: usize = 512 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicListItem {
    pub index: usize,
    pub title: String,
    pub description: String,
    pub size: usize,
    pub topwords: Vec<String>,
}

impl From<&Topic> for TopicListItem {
    fn from(t: &Topic) -> Self {
        Self {
            index: t.index,
            title: t.title.clone(),
            description: t.description.clone(),
            size: t.size(),
            topwords: t
                .topwords_tfidf
                .prefix(LIST_TOPWORDS)
                .words()
                .map(str::to_string)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDetail {
    pub index: usize,
    pub title: String,
    pub description: String,
    pub title_is_placeholder: bool,
    pub size: usize,
    pub doc_ids: Vec<usize>,
    pub topwords_tfidf: TopwordList,
    pub topwords_cosine: Option<TopwordList>,
}

impl From<&Topic> for TopicDetail {
    fn from(t: &Topic) -> Self {
        Self {
            index: t.index,
            title: t.title.clone(),
            description: t.description.clone(),
            title_is_placeholder: t.title_is_placeholder,
            size: t.size(),
            doc_ids: t.doc_ids.clone(),
            topwords_tfidf: t.topwords_tfidf.clone(),
            topwords_cosine: t.topwords_cosine.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MutationResponse {
    pub version: u64,
    pub summary: ModificationSummary,
    pub topics: Vec<TopicListItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Job {
    pub id: u64,
    pub status: JobStatus,
    pub started_ms: u64,
    pub finished_ms: Option<u64>,
    pub report: Option<FitReport>,
    pub version: Option<u64>,
    pub error: Option<String>,
    pub stage: Option<FitStage>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Shared service state.
pub struct App {
    config: ServiceConfig,
    services: Arc<ModelServices>,
    router: ChatRouter,
    snapshot: RwLock<Option<Arc<TopicModelState>>>,
    writer: Arc<tokio::sync::Mutex<()>>,
    fitting: AtomicBool,
    jobs: Mutex<BTreeMap<u64, Job>>,
    next_job: AtomicU64,
    transcript: Mutex<Vec<ChatTurn>>,
}

impl App {
    pub fn new(
        config: ServiceConfig,
        services: ModelServices,
        state: Option<TopicModelState>,
    ) -> Arc<Self> {
        let router = ChatRouter::standard(
            services.llm.clone(),
            RouterConfig {
                allow_mutations_via_chat: config.allow_mutations_via_chat,
                ..RouterConfig::default()
            },
        );
        Arc::new(Self {
            config,
            services: Arc::new(services),
            router,
            snapshot: RwLock::new(state.map(Arc::new)),
            writer: Arc::new(tokio::sync::Mutex::new(())),
            fitting: AtomicBool::new(false),
            jobs: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
            transcript: Mutex::new(Vec::new()),
        })
    }

    /// Builds providers from the config and loads the saved state, if any.
    pub fn from_config(config: ServiceConfig) -> anyhow::Result<Arc<Self>> {
        config.ensure_state_dir()?;
        let services = build_services(&config)?;
        let state = if config.state_path.is_file() {
            let loaded = load_state(&config.state_path)?;
            if loaded.embedding_model != services.embedder.model_name() {
                tracing::warn!(
                    stored = %loaded.embedding_model,
                    configured = %services.embedder.model_name(),
                    "state was built with a different embedding model"
                );
            }
            tracing::info!(
                topics = loaded.state.len(),
                version = loaded.state.version(),
                "state loaded"
            );
            Some(loaded.state)
        } else {
            None
        };
        Ok(Self::new(config, services, state))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn snapshot(&self) -> Option<Arc<TopicModelState>> {
        self.snapshot
            .read()
            .expect("snapshot lock poisoned")
            .clone()
    }

    fn require(&self) -> Result<Arc<TopicModelState>, ApiError> {
        self.snapshot().ok_or_else(ApiError::no_model)
    }

    fn publish(&self, state: TopicModelState) {
        *self.snapshot.write().expect("snapshot lock poisoned") = Some(Arc::new(state));
    }

    fn persist(&self, state: &TopicModelState) -> Result<(), ApiError> {
        save_state(
            state,
            self.services.embedder.model_name(),
            &self.config.state_path,
        )?;
        Ok(())
    }

    pub fn job(&self, id: u64) -> Option<Job> {
        self.jobs
            .lock()
            .expect("jobs lock poisoned")
            .get(&id)
            .cloned()
    }

    pub fn transcript(&self) -> Vec<ChatTurn> {
        self.transcript
            .lock()
            .expect("transcript lock poisoned")
            .clone()
    }

    /// Runs `f` on a copy of the state while holding the writer slot, then
    /// persists and publishes the copy if its version moved.
    async fn mutate<T, F>(self: &Arc<Self>, f: F) -> Result<(T, Arc<TopicModelState>), ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&mut TopicModelState, &ModelServices, &ChatRouter) -> Result<T, ApiError>
            + Send
            + 'static,
    {
        let guard = self
            .writer
            .clone()
            .try_lock_owned()
            .map_err(|_| ApiError::conflict())?;
        let current = self.require()?;
        let app = self.clone();
        tokio::task::spawn_blocking(move || {
            let _guard = guard;
            let mut state = current.as_ref().clone();
            let out = f(&mut state, &app.services, &app.router)?;
            if state.version() != current.version() {
                app.persist(&state)?;
                app.publish(state);
            }
            Ok((out, app.require()?))
        })
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
    }

    fn start_fit(
        self: &Arc<Self>,
        texts: Vec<String>,
        fit_config: FitConfig,
    ) -> Result<u64, ApiError> {
        if self
            .fitting
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .is_err()
        {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "Conflict",
                "a fit job is already running",
            ));
        }
        let id = self.next_job.fetch_add(1, Ordering::SeqCst);
        self.jobs.lock().expect("jobs lock poisoned").insert(
            id,
            Job {
                id,
                status: JobStatus::Running,
                started_ms: now_ms(),
                finished_ms: None,
                report: None,
                version: None,
                error: None,
                stage: None,
            },
        );
        let app = self.clone();
        tokio::task::spawn_blocking(move || {
            let outcome = app.run_fit(&texts, &fit_config);
            let mut jobs = app.jobs.lock().expect("jobs lock poisoned");
            let job = jobs.get_mut(&id).expect("job registered");
            job.finished_ms = Some(now_ms());
            match outcome {
                Ok((report, version)) => {
                    job.status = JobStatus::Succeeded;
                    job.report = Some(report);
                    job.version = Some(version);
                }
                Err((stage, message)) => {
                    tracing::error!(job = id, ?stage, %message, "fit failed");
                    job.status = JobStatus::Failed;
                    job.stage = stage;
                    job.error = Some(message);
                }
            }
            app.fitting.store(false, Ordering::SeqCst);
        });
        Ok(id)
    }

    fn run_fit(
        &self,
        texts: &[String],
        cfg: &FitConfig,
    ) -> Result<(FitReport, u64), (Option<FitStage>, String)> {
        let (state, report) = fit(texts, cfg, self.services.as_ref())
            .map_err(|e| (Some(e.stage()), e.to_string()))?;
        let _guard = self.writer.blocking_lock();
        self.persist(&state).map_err(|e| (None, e.message))?;
        let version = state.version();
        self.publish(state);
        self.transcript
            .lock()
            .expect("transcript lock poisoned")
            .clear();
        Ok((report, version))
    }
}

pub fn build_services(config: &ServiceConfig) -> anyhow::Result<ModelServices> {
    let embedder = Embedder::from_config(&config.embedding)?;
    let llm = Llm::from_config(&config.llm)?;
    Ok(ModelServices::new(embedder, llm))
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request("InvalidRequest", e.body_text()))
}

fn list(state: &TopicModelState) -> Vec<TopicListItem> {
    state.topics().iter().map(TopicListItem::from).collect()
}

fn mutation_response(summary: ModificationSummary, state: &TopicModelState) -> MutationResponse {
    MutationResponse {
        version: state.version(),
        summary,
        topics: list(state),
    }
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn version(State(app): State<Arc<App>>) -> Json<Value> {
    let s = app.snapshot();
    Json(json!({
        "version": s.as_ref().map(|s| s.version()),
        "topics": s.as_ref().map(|s| s.len()),
    }))
}

async fn topics(State(app): State<Arc<App>>) -> ApiResult<Vec<TopicListItem>> {
    let s = app.require()?;
    Ok(Json(list(&s)))
}

async fn topic(State(app): State<Arc<App>>, Path(index): Path<usize>) -> ApiResult<TopicDetail> {
    let s = app.require()?;
    Ok(Json(TopicDetail::from(s.topic(index)?)))
}

type SplitJob = Box<
    dyn FnOnce(&mut TopicModelState, &ModelServices) -> Result<ModificationSummary, ApiError>
        + Send,
>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMethod {
    Kmeans,
    Hdbscan,
    Keyword,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitParams {
    pub n_clusters: Option<usize>,
    pub min_cluster_size: Option<usize>,
    pub keyword: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRequest {
    pub method: SplitMethod,
    #[serde(default)]
    pub params: SplitParams,
}

async fn split(
    State(app): State<Arc<App>>,
    Path(index): Path<usize>,
    payload: Result<Json<SplitRequest>, JsonRejection>,
) -> ApiResult<MutationResponse> {
    let req = body(payload)?;
    let missing =
        |name: &str| ApiError::bad_request("InvalidRequest", format!("params.{name} is required"));
    let run: SplitJob = match req.method {
        SplitMethod::Kmeans => {
            let k = req.params.n_clusters.ok_or_else(|| missing("n_clusters"))?;
            Box::new(move |s, svc| Ok(s.split_topic_kmeans(index, k, svc)?))
        }
        SplitMethod::Hdbscan => {
            let mcs = req.params.min_cluster_size;
            Box::new(move |s, svc| {
                let mcs = match mcs {
                    Some(m) => m,
                    None => {
                        topiclens_core::clustering::default_min_cluster_size(s.topic(index)?.size())
                    }
                };
                Ok(s.split_topic_hdbscan(index, mcs, svc)?)
            })
        }
        SplitMethod::Keyword => {
            let kw = req.params.keyword.ok_or_else(|| missing("keyword"))?;
            Box::new(move |s, svc| Ok(s.split_topic_keyword(index, &kw, svc)?))
        }
    };
    let (summary, state) = app.mutate(move |s, svc, _| run(s, svc)).await?;
    Ok(Json(mutation_response(summary, &state)))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeRequest {
    pub indices: Vec<usize>,
}

async fn merge(
    State(app): State<Arc<App>>,
    payload: Result<Json<MergeRequest>, JsonRejection>,
) -> ApiResult<MutationResponse> {
    let req = body(payload)?;
    let (summary, state) = app
        .mutate(move |s, svc, _| Ok(s.merge_topics(&req.indices, svc)?))
        .await?;
    Ok(Json(mutation_response(summary, &state)))
}

async fn delete(
    State(app): State<Arc<App>>,
    Path(index): Path<usize>,
) -> ApiResult<MutationResponse> {
    let (summary, state) = app
        .mutate(move |s, svc, _| Ok(s.delete_topic(index, svc)?))
        .await?;
    Ok(Json(mutation_response(summary, &state)))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeywordRequest {
    pub keyword: String,
}

async fn from_keyword(
    State(app): State<Arc<App>>,
    payload: Result<Json<KeywordRequest>, JsonRejection>,
) -> ApiResult<MutationResponse> {
    let req = body(payload)?;
    let (summary, state) = app
        .mutate(move |s, svc, _| Ok(s.create_topic_keyword(&req.keyword, svc)?))
        .await?;
    Ok(Json(mutation_response(summary, &state)))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRequestBody {
    pub prompt: String,
}

async fn chat(
    State(app): State<Arc<App>>,
    payload: Result<Json<ChatRequestBody>, JsonRejection>,
) -> ApiResult<ChatTurn> {
    let req = body(payload)?;
    if req.prompt.trim().is_empty() {
        return Err(ApiError::bad_request(
            "InvalidRequest",
            "prompt must not be empty",
        ));
    }
    let (turn, _) = app
        .mutate(move |s, svc, router| Ok(router.route(s, svc, &req.prompt)))
        .await?;
    app.transcript
        .lock()
        .expect("transcript lock poisoned")
        .push(turn.clone());
    Ok(Json(turn))
}

async fn transcript(State(app): State<Arc<App>>) -> Json<Vec<ChatTurn>> {
    Json(app.transcript())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum CorpusSource {
    Texts(Vec<String>),
    /// A file on the server: JSON array, JSON lines or plain lines.
    Path(PathBuf),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitParams {
    pub n_topics: Option<usize>,
    pub min_cluster_size: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    pub corpus: CorpusSource,
    #[serde(default)]
    pub params: FitParams,
}

async fn start_fit(
    State(app): State<Arc<App>>,
    payload: Result<Json<FitRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let req = body(payload)?;
    let texts = match req.corpus {
        CorpusSource::Texts(t) => t,
        CorpusSource::Path(p) => read_corpus_file(&p)
            .map_err(|e| ApiError::bad_request("InvalidCorpus", e.to_string()))?,
    };
    let mut cfg = app
        .config
        .fit_config()
        .map_err(|e| ApiError::internal(e.to_string()))?;
    if req.params.n_topics.is_some() {
        cfg.n_topics = req.params.n_topics;
    }
    if req.params.min_cluster_size.is_some() {
        cfg.min_cluster_size = req.params.min_cluster_size;
    }
    cfg.validate()
        .map_err(|e| ApiError::bad_request("InvalidRequest", e.to_string()))?;
    let id = app.start_fit(texts, cfg)?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({"job_id": id, "status": JobStatus::Running})),
    ))
}

async fn job(State(app): State<Arc<App>>, Path(id): Path<u64>) -> ApiResult<Job> {
    app.job(id)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownJob", format!("no job {id}")))
}

fn cors(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST, Method::DELETE, Method::OPTIONS])
        .allow_headers(Any);
    if origins.iter().any(|o| o == "*") {
        return Some(layer.allow_origin(Any));
    }
    let values: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
    Some(layer.allow_origin(AllowOrigin::list(values)))
}

pub fn router(app: Arc<App>) -> Router {
    let cors = cors(&app.config.cors_allowed_origins);
    let r = Router::new()
        .route("/health", get(health))
        .route("/state/version", get(version))
        .route("/topics", get(topics))
        .route("/topics/merge", post(merge))
        .route("/topics/from-keyword", post(from_keyword))
        .route("/topics/{index}", get(topic).delete(delete))
        .route("/topics/{index}/split", post(split))
        .route("/chat", post(chat))
        .route("/chat/transcript", get(transcript))
        .route("/fit", post(start_fit))
        .route("/jobs/{id}", get(job))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(app);
    match cors {
        Some(c) => r.layer(c),
        None => r,
    }
}

pub async fn serve(app: Arc<App>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    tracing::info!(address = %listener.local_addr()?, "listening");
    axum::serve(listener, router(app)).await
}
