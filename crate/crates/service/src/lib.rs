//! HTTP service over a loaded corpus.
//!
//! | Method | Path                | Body                                   |
//! |--------|---------------------|----------------------------------------|
//! | GET    | `/screens`          |                                        |
//! | GET    | `/screens/{id}`     |                                        |
//! | POST   | `/tasks/{task}`     | `{screen_id, shots, seed, mode, question?, instruction?}` |
//!
//! `{task}` is one of `summarize`, `qa`, `generate-questions`, `act`.
//! Requests are independent; no session state is kept.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use screenllm::backend::{prompt_hash, BackendError, CompletionBackend, CompletionRequest};
use screenllm::dataset::{sample_exemplars, Corpus, DatasetError, SampleMode};
use screenllm::html::Tag;
use screenllm::ingest::ScreenDims;
use screenllm::parse::{parse_cot, parse_output, ParseError, ParsedValue};
use screenllm::prompt::{build_prompt, input_field_indexes, OverflowPolicy, PromptError, PromptSpec, TaskKind};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub budget_tokens: usize,
    pub on_overflow: OverflowPolicy,
    pub shot_cap: usize,
    /// Allowed CORS origins; `None` allows any origin.
    pub cors_origins: Option<Vec<String>>,
    /// Directory served for paths that match no route.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            budget_tokens: screenllm::prompt::DEFAULT_BUDGET_TOKENS,
            on_overflow: OverflowPolicy::Fail,
            shot_cap: screenllm::prompt::DEFAULT_SHOT_CAP,
            cors_origins: None,
            static_dir: None,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    corpus: Arc<Corpus>,
    backend: Arc<dyn CompletionBackend>,
    config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(corpus: Corpus, backend: Arc<dyn CompletionBackend>, config: ServiceConfig) -> Self {
        Self { corpus: Arc::new(corpus), backend, config: Arc::new(config) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenSummary {
    pub screen_id: String,
    pub app_package: Option<String>,
    pub element_count: usize,
}

/// Bounds scaled to `[0, 1]` by the screen size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementView {
    pub index: usize,
    pub tag: Tag,
    pub text: Option<String>,
    pub class_words: Option<String>,
    pub alt_text: Option<String>,
    pub bounds: NormBounds,
    pub html: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenDetail {
    pub screen_id: String,
    pub app_package: Option<String>,
    pub html_text: String,
    pub elements: Vec<ElementView>,
    pub screen_dims: ScreenDims,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRequest {
    pub screen_id: String,
    #[serde(default)]
    pub shots: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: SampleMode,
    pub question: Option<String>,
    pub instruction: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResponse {
    pub task: TaskKind,
    pub result: Value,
    pub prompt_hash: String,
    pub raw_output: String,
    pub shots_used: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<PromptError> for ApiError {
    fn from(e: PromptError) -> Self {
        let status = match e {
            PromptError::BudgetExceeded { .. } => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.to_string())
    }
}

impl From<DatasetError> for ApiError {
    fn from(e: DatasetError) -> Self {
        let status = match e {
            DatasetError::UnknownScreen(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.to_string())
    }
}

impl From<BackendError> for ApiError {
    fn from(e: BackendError) -> Self {
        Self::new(StatusCode::BAD_GATEWAY, e.to_string())
    }
}

pub fn router(state: AppState) -> Router {
    let cors = match &state.config.cors_origins {
        None => CorsLayer::permissive(),
        Some(origins) => {
            let list: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
            CorsLayer::new()
                .allow_origin(AllowOrigin::list(list))
                .allow_methods(tower_http::cors::Any)
                .allow_headers(tower_http::cors::Any)
        }
    };
    let mut app = Router::new()
        .route("/screens", get(list_screens))
        .route("/screens/{id}", get(get_screen))
        .route("/tasks/{task}", post(run_task));
    if let Some(dir) = &state.config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.layer(cors).with_state(state)
}

pub fn screen_summaries(corpus: &Corpus) -> Vec<ScreenSummary> {
    corpus
        .screens()
        .map(|(id, s)| ScreenSummary {
            screen_id: id.to_owned(),
            app_package: corpus.app_package(id).map(str::to_owned),
            element_count: s.html.len(),
        })
        .collect()
}

async fn list_screens(State(state): State<AppState>) -> Json<Vec<ScreenSummary>> {
    Json(screen_summaries(&state.corpus))
}

fn unit(x: i64, extent: i64) -> f64 {
    (x as f64 / extent as f64).clamp(0.0, 1.0)
}

pub fn screen_detail(corpus: &Corpus, id: &str) -> Result<ScreenDetail, DatasetError> {
    let screen = corpus.screen(id)?;
    let dims = screen.html.extent(screen.source.screen_dims);
    let elements = screen
        .html
        .elements
        .iter()
        .map(|e| {
            let b = e.bounds();
            ElementView {
                index: e.index,
                tag: e.tag,
                text: e.inner_text.clone(),
                class_words: e.class_words.clone(),
                alt_text: e.alt_text.clone(),
                bounds: NormBounds {
                    left: unit(b.left, dims.width),
                    top: unit(b.top, dims.height),
                    right: unit(b.right, dims.width),
                    bottom: unit(b.bottom, dims.height),
                },
                html: e.render_line(),
            }
        })
        .collect();
    Ok(ScreenDetail {
        screen_id: id.to_owned(),
        app_package: corpus.app_package(id).map(str::to_owned),
        html_text: screen.html.html_text.clone(),
        elements,
        screen_dims: dims,
    })
}

async fn get_screen(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<ScreenDetail>, ApiError> {
    Ok(Json(screen_detail(&state.corpus, &id)?))
}

fn task_result(task: TaskKind, screen: &screenllm::html::ScreenHtml, raw: &str, warnings: &mut Vec<String>) -> Value {
    let parsed = parse_output(task, raw);
    match parsed {
        Err(ParseError::NoActionFound) => {
            warnings.push(ParseError::NoActionFound.to_string());
            json!({ "element_index": null, "valid": false })
        }
        Ok(out) => {
            warnings.extend(out.warnings);
            match out.value {
                ParsedValue::Summary(s) => json!({ "summary": s }),
                ParsedValue::Answer(a) => json!({ "answer": a }),
                ParsedValue::Action(i) => {
                    let valid = screen.lookup_element(i as i64).is_ok();
                    if !valid {
                        warnings.push(format!("element id={i} does not exist on this screen"));
                    }
                    json!({ "element_index": i, "valid": valid })
                }
                ParsedValue::Questions(questions) => {
                    let enumerated: BTreeSet<usize> = parse_cot(raw).enumerated_indexes.into_iter().collect();
                    json!({
                        "questions": questions,
                        "coverage_preview": {
                            "gt_indexes": input_field_indexes(screen),
                            "predicted_indexes": enumerated,
                        }
                    })
                }
            }
        }
    }
}

/// Runs one task request synchronously. Used by the HTTP handler and tests.
pub fn handle_task(state: &AppState, task: TaskKind, req: &TaskRequest) -> Result<TaskResponse, ApiError> {
    let corpus = &state.corpus;
    let screen = &corpus.screen(&req.screen_id)?.html;
    let input = match task {
        TaskKind::QuestionAnswering => {
            Some(req.question.as_deref().ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "question is required"))?)
        }
        TaskKind::InstructionToAction => Some(
            req.instruction
                .as_deref()
                .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "instruction is required"))?,
        ),
        _ => None,
    };
    let exemplars = sample_exemplars(corpus, task, req.shots, req.seed, req.mode, &req.screen_id)?;
    let spec = PromptSpec::new(task, exemplars)
        .with_budget(state.config.budget_tokens, state.config.on_overflow)
        .with_shot_cap(state.config.shot_cap);
    let prompt = build_prompt(&spec, screen, input)?;
    let hash = prompt_hash(&prompt.text);
    let completion = state.backend.complete(&CompletionRequest::for_task(task, prompt.text))?;
    let mut warnings = Vec::new();
    let result = task_result(task, screen, &completion.text, &mut warnings);
    Ok(TaskResponse {
        task,
        result,
        prompt_hash: hash,
        raw_output: completion.text,
        shots_used: prompt.shots_used,
        warnings,
    })
}

async fn run_task(
    State(state): State<AppState>,
    Path(task): Path<String>,
    body: Result<Json<TaskRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<TaskResponse>, ApiError> {
    let task: TaskKind = task.parse().map_err(|e: String| ApiError::new(StatusCode::NOT_FOUND, e))?;
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    let response = tokio::task::spawn_blocking(move || handle_task(&state, task, &req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(response))
}

/// Binds and serves until the process is stopped.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
