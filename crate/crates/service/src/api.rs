//! HTTP API.

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use groupsense_core::chart::{generate_random_chart, ChartError};
use groupsense_core::diagnose::{
    DiagnoseError, DEFAULT_EPSILON_LINE, DEFAULT_THRESHOLD, MAX_DIAGNOSE_POINTS,
};
use groupsense_core::model::{load_model, ModelError};
use groupsense_core::redesign::{
    search, LandscapeMatrix, RedesignError, SearchConfig, SearchOutcome, DEFAULT_PERMUTATION_BUDGET,
};
use groupsense_core::{
    diagnose, Chart, DiagnoseConfig, Group, GroupingModel, PermutationScore, DEFAULT_MODEL_ID,
};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

use crate::store::{ModelDeletion, SessionDraft, Store, StoreError};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/charts", get(list_charts).post(create_chart))
        .route("/api/charts/random", post(random_chart))
        .route("/api/charts/{id}", get(get_chart).delete(delete_chart))
        .route("/api/models", get(list_models).post(create_model))
        .route("/api/models/{id}", get(get_model).delete(delete_model))
        .route("/api/diagnose", post(diagnose_handler))
        .route("/api/redesign", post(redesign_handler))
        .route(
            "/api/redesign/landscape",
            get(landscape_get).post(landscape_post),
        )
        .route("/api/sessions", get(list_sessions).post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .with_state(AppState { store })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub field: Option<String>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    code: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    fn at(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn invalid(message: impl Into<String>, field: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message).at(field)
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("{what} {id:?} not found"),
        )
    }

    fn body(&self) -> String {
        serde_json::to_string(&ErrorBody {
            error: ErrorDetail {
                code: self.code,
                message: &self.message,
                field: self.field.as_deref(),
            },
        })
        .expect("error body serializes")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            [(header::CONTENT_TYPE, "application/json")],
            self.body(),
        )
            .into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::InvalidId(id) => Self::new(
                StatusCode::NOT_FOUND,
                "not_found",
                format!("no document with id {id:?}"),
            ),
            StoreError::Model(m) => model_error(m),
            other => Self::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "storage",
                other.to_string(),
            ),
        }
    }
}

fn chart_error(e: ChartError) -> ApiError {
    ApiError::invalid(e.to_string(), format!("chart.{}", e.path()))
}

fn model_error(e: ModelError) -> ApiError {
    let status = match e {
        ModelError::Malformed(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    };
    ApiError::new(status, e.code(), e.to_string())
}

fn diagnose_error(e: DiagnoseError) -> ApiError {
    match e {
        DiagnoseError::Chart(c) => chart_error(c),
        DiagnoseError::TooFewPoints(_) | DiagnoseError::TooManyPoints(_) => {
            ApiError::invalid(e.to_string(), "chart.points")
        }
        DiagnoseError::DesiredGroup { index, .. } => {
            ApiError::invalid(e.to_string(), format!("desired[{index}]"))
        }
        DiagnoseError::InvalidThreshold(_) => ApiError::invalid(e.to_string(), "threshold"),
        other => ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "prediction_failed",
            other.to_string(),
        ),
    }
}

fn redesign_error(e: RedesignError) -> ApiError {
    match e {
        RedesignError::Chart(c) => chart_error(c),
        RedesignError::Diagnose(d) => diagnose_error(d),
        RedesignError::InvalidAlpha(_) => ApiError::invalid(e.to_string(), "alpha"),
        RedesignError::InvalidK => ApiError::invalid(e.to_string(), "k"),
        RedesignError::InvalidOrder(_) => ApiError::invalid(e.to_string(), "allow_list"),
        RedesignError::TooManyPermutations { .. } => ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "too_many_permutations",
            e.to_string(),
        ),
    }
}

fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

fn json<T: Serialize>(status: StatusCode, value: &T) -> Response {
    let body = serde_json::to_string(value).expect("response serializes");
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

type ApiResult = Result<Response, ApiError>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> T + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
}

async fn health() -> Response {
    json(
        StatusCode::OK,
        &serde_json::json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")}),
    )
}

// Charts

async fn list_charts(State(s): State<AppState>) -> ApiResult {
    Ok(json(StatusCode::OK, &s.store.list_charts()?))
}

async fn create_chart(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let chart: Chart = parse(&body)?;
    chart.validate().map_err(chart_error)?;
    Ok(json(StatusCode::CREATED, &s.store.put_chart(&chart)?))
}

#[derive(Deserialize)]
struct RandomQuery {
    n: Option<usize>,
    seed: Option<u64>,
}

async fn random_chart(
    State(s): State<AppState>,
    q: Result<Query<RandomQuery>, QueryRejection>,
) -> ApiResult {
    let q = query(q)?;
    let n = q.n.unwrap_or(groupsense_core::chart::DEFAULT_CHART_SIZE);
    if !(3..=MAX_DIAGNOSE_POINTS).contains(&n) {
        return Err(ApiError::invalid(
            format!("n must be in 3..={MAX_DIAGNOSE_POINTS}, got {n}"),
            "n",
        ));
    }
    let chart = generate_random_chart(n, q.seed.unwrap_or(0)).map_err(chart_error)?;
    Ok(json(StatusCode::CREATED, &s.store.put_chart(&chart)?))
}

async fn get_chart(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    match s.store.get_chart(&id)? {
        Some(c) => Ok(json(StatusCode::OK, &c)),
        None => Err(ApiError::not_found("chart", &id)),
    }
}

async fn delete_chart(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    if s.store.delete_chart(&id)? {
        Ok(StatusCode::NO_CONTENT.into_response())
    } else {
        Err(ApiError::not_found("chart", &id))
    }
}

// Models

async fn list_models(State(s): State<AppState>) -> ApiResult {
    Ok(json(StatusCode::OK, &s.store.list_models()?))
}

async fn create_model(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let text =
        std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    let _: serde_json::Value = parse(&body)?;
    let model = load_model(text).map_err(model_error)?;
    Ok(json(StatusCode::CREATED, &s.store.put_model(&model)?))
}

async fn get_model(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    match s.store.model_document(&id)? {
        Some(doc) => Ok((
            StatusCode::OK,
            [(header::CONTENT_TYPE, "application/json")],
            doc,
        )
            .into_response()),
        None => Err(ApiError::not_found("model", &id)),
    }
}

async fn delete_model(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    match s.store.delete_model(&id)? {
        ModelDeletion::Deleted => Ok(StatusCode::NO_CONTENT.into_response()),
        ModelDeletion::NotFound => Err(ApiError::not_found("model", &id)),
        ModelDeletion::BuiltIn => Err(ApiError::new(
            StatusCode::CONFLICT,
            "conflict",
            format!("model {id:?} is built in"),
        )),
        ModelDeletion::Referenced(sessions) => Err(ApiError::new(
            StatusCode::CONFLICT,
            "conflict",
            format!("model {id:?} is used by sessions {}", sessions.join(", ")),
        )),
    }
}

fn resolve_model(store: &Store, id: Option<&str>) -> Result<(String, GroupingModel), ApiError> {
    let id = id.unwrap_or(DEFAULT_MODEL_ID).to_string();
    match store.get_model(&id)? {
        Some(m) => Ok((id, m)),
        None => Err(ApiError::not_found("model", &id)),
    }
}

// Diagnosis and redesign

/// A chart given inline or by store id.
#[derive(Debug, Default, Deserialize)]
struct ChartRef {
    chart: Option<Chart>,
    chart_id: Option<String>,
}

impl ChartRef {
    fn resolve(self, store: &Store) -> Result<(Option<String>, Chart), ApiError> {
        match (self.chart, self.chart_id) {
            (Some(chart), id) => Ok((id, chart)),
            (None, Some(id)) => match store.get_chart(&id)? {
                Some(c) => Ok((Some(id), c.chart)),
                None => Err(ApiError::not_found("chart", &id)),
            },
            (None, None) => Err(ApiError::invalid(
                "either chart or chart_id is required",
                "chart",
            )),
        }
    }
}

#[derive(Debug, Deserialize)]
struct DiagnoseRequest {
    #[serde(flatten)]
    chart: ChartRef,
    #[serde(default)]
    desired: Vec<Group>,
    model_id: Option<String>,
    threshold: Option<f64>,
    epsilon_line: Option<f64>,
}

async fn diagnose_handler(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let req: DiagnoseRequest = parse(&body)?;
    let (chart_id, chart) = req.chart.resolve(&s.store)?;
    let (_, model) = resolve_model(&s.store, req.model_id.as_deref())?;
    let config = DiagnoseConfig {
        threshold: req.threshold.unwrap_or(DEFAULT_THRESHOLD),
        epsilon_line: req.epsilon_line.unwrap_or(DEFAULT_EPSILON_LINE),
    };
    let mut report = blocking(move || diagnose(&chart, &req.desired, &model, &config))
        .await?
        .map_err(diagnose_error)?;
    report.chart_id = chart_id;
    Ok(json(StatusCode::OK, &report))
}

#[derive(Debug, Deserialize)]
struct RedesignRequest {
    #[serde(flatten)]
    chart: ChartRef,
    session_id: Option<String>,
    #[serde(default)]
    desired: Vec<Group>,
    model_id: Option<String>,
    alpha: Option<f64>,
    k: Option<usize>,
    threshold: Option<f64>,
    epsilon_line: Option<f64>,
    budget: Option<u64>,
    allow_list: Option<Vec<Vec<String>>>,
}

struct SearchJob {
    chart: Chart,
    desired: Vec<Group>,
    model: GroupingModel,
    config: SearchConfig,
}

impl RedesignRequest {
    fn into_job(self, store: &Store) -> Result<SearchJob, ApiError> {
        let defaults = SearchConfig::default();
        if let Some(id) = self.session_id {
            let session = store
                .get_session(&id)?
                .ok_or_else(|| ApiError::not_found("session", &id))?;
            let d = session.draft;
            let (_, model) = resolve_model(store, Some(&d.model_id))?;
            let config = SearchConfig {
                alpha: self.alpha.unwrap_or(d.alpha),
                k: self.k.unwrap_or(defaults.k),
                threshold: self.threshold.unwrap_or(d.threshold),
                epsilon_line: self.epsilon_line.unwrap_or(defaults.epsilon_line),
                budget: self.budget.map_or(DEFAULT_PERMUTATION_BUDGET, u128::from),
                allow_list: self.allow_list,
            };
            return Ok(SearchJob {
                chart: d.chart,
                desired: d.desired,
                model,
                config,
            });
        }
        let (_, chart) = self.chart.resolve(store)?;
        let (_, model) = resolve_model(store, self.model_id.as_deref())?;
        let config = SearchConfig {
            alpha: self.alpha.unwrap_or(defaults.alpha),
            k: self.k.unwrap_or(defaults.k),
            threshold: self.threshold.unwrap_or(defaults.threshold),
            epsilon_line: self.epsilon_line.unwrap_or(defaults.epsilon_line),
            budget: self.budget.map_or(DEFAULT_PERMUTATION_BUDGET, u128::from),
            allow_list: self.allow_list,
        };
        Ok(SearchJob {
            chart,
            desired: self.desired,
            model,
            config,
        })
    }
}

fn run_search(
    job: &SearchJob,
    landscape: bool,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<SearchOutcome, RedesignError> {
    search(
        &job.chart,
        &job.desired,
        &job.model,
        &job.config,
        landscape,
        progress,
    )
}

#[derive(Debug, Serialize)]
pub struct RedesignResponse {
    pub examined: usize,
    pub model_version: String,
    pub results: Vec<PermutationScore>,
}

fn redesign_response(job: &SearchJob, outcome: SearchOutcome) -> RedesignResponse {
    RedesignResponse {
        examined: outcome.examined,
        model_version: job.model.version_label(),
        results: outcome.results,
    }
}

enum SearchMessage {
    Progress { examined: usize, total: usize },
    Done(Result<RedesignResponse, RedesignError>),
}

fn wants_event_stream(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("text/event-stream"))
}

async fn redesign_handler(State(s): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let req: RedesignRequest = parse(&body)?;
    let job = req.into_job(&s.store)?;
    if !wants_event_stream(&headers) {
        let (job, outcome) = blocking(move || {
            let outcome = run_search(&job, false, None);
            (job, outcome)
        })
        .await?;
        let outcome = outcome.map_err(redesign_error)?;
        return Ok(json(StatusCode::OK, &redesign_response(&job, outcome)));
    }

    let (tx, mut rx) = mpsc::unbounded_channel();
    tokio::task::spawn_blocking(move || {
        let progress_tx = tx.clone();
        let report = move |examined: usize, total: usize| {
            let _ = progress_tx.send(SearchMessage::Progress { examined, total });
        };
        let result = run_search(&job, false, Some(&report)).map(|o| redesign_response(&job, o));
        let _ = tx.send(SearchMessage::Done(result));
    });
    // Failures that happen before any progress still get a plain error status.
    let first = rx.recv().await.ok_or_else(|| {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            "search task ended",
        )
    })?;
    if let SearchMessage::Done(Err(e)) = first {
        return Err(redesign_error(e));
    }
    let head = futures::stream::iter([first]);
    let rest =
        futures::stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|m| (m, rx)) });
    let events = futures::StreamExt::map(futures::StreamExt::chain(head, rest), |m| {
        Ok::<_, Infallible>(match m {
            SearchMessage::Progress { examined, total } => Event::default()
                .event("progress")
                .data(serde_json::json!({"examined": examined, "total": total}).to_string()),
            SearchMessage::Done(Ok(r)) => Event::default()
                .event("result")
                .data(serde_json::to_string(&r).expect("serializes")),
            SearchMessage::Done(Err(e)) => Event::default()
                .event("error")
                .data(redesign_error(e).body()),
        })
    });
    Ok(Sse::new(events)
        .keep_alive(KeepAlive::default())
        .into_response())
}

async fn landscape_for(store: Arc<Store>, req: RedesignRequest) -> ApiResult {
    let job = req.into_job(&store)?;
    let job = SearchJob {
        config: SearchConfig { k: 1, ..job.config },
        ..job
    };
    let outcome = blocking(move || run_search(&job, true, None))
        .await?
        .map_err(redesign_error)?;
    let matrix: LandscapeMatrix = outcome.landscape.expect("landscape requested");
    Ok(json(StatusCode::OK, &matrix))
}

#[derive(Deserialize)]
struct LandscapeQuery {
    session_id: Option<String>,
}

async fn landscape_get(
    State(s): State<AppState>,
    q: Result<Query<LandscapeQuery>, QueryRejection>,
) -> ApiResult {
    let Some(session_id) = query(q)?.session_id else {
        return Err(
            ApiError::bad_request("session_id query parameter is required").at("session_id"),
        );
    };
    let req = RedesignRequest {
        chart: ChartRef::default(),
        session_id: Some(session_id),
        desired: Vec::new(),
        model_id: None,
        alpha: None,
        k: None,
        threshold: None,
        epsilon_line: None,
        budget: None,
        allow_list: None,
    };
    landscape_for(s.store, req).await
}

async fn landscape_post(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let req: RedesignRequest = parse(&body)?;
    landscape_for(s.store, req).await
}

// Sessions

#[derive(Debug, Deserialize)]
struct SessionRequest {
    #[serde(flatten)]
    chart: ChartRef,
    #[serde(default)]
    desired: Vec<Group>,
    model_id: Option<String>,
    alpha: Option<f64>,
    threshold: Option<f64>,
}

async fn create_session(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let req: SessionRequest = parse(&body)?;
    let (_, chart) = req.chart.resolve(&s.store)?;
    chart.validate().map_err(chart_error)?;
    for (i, g) in req.desired.iter().enumerate() {
        g.validate(&chart)
            .map_err(|e| ApiError::invalid(e.to_string(), format!("desired[{i}]")))?;
    }
    let alpha = req.alpha.unwrap_or(0.5);
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ApiError::invalid(
            format!("alpha {alpha} outside [0, 1]"),
            "alpha",
        ));
    }
    let threshold = req.threshold.unwrap_or(DEFAULT_THRESHOLD);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(ApiError::invalid(
            format!("threshold {threshold} outside [0, 1]"),
            "threshold",
        ));
    }
    let (model_id, _) = resolve_model(&s.store, req.model_id.as_deref())?;
    let session = s.store.put_session(SessionDraft {
        chart,
        desired: req.desired,
        alpha,
        threshold,
        model_id,
    })?;
    Ok(json(StatusCode::CREATED, &session))
}

async fn list_sessions(State(s): State<AppState>) -> ApiResult {
    Ok(json(StatusCode::OK, &s.store.list_sessions()?))
}

async fn get_session(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    match s.store.get_session(&id)? {
        Some(session) => Ok(json(StatusCode::OK, &session)),
        None => Err(ApiError::not_found("session", &id)),
    }
}
