//! JSON-over-HTTP service.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{FromRequest, FromRequestParts, Path, Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dosecomb::simulator::{metrics_csv, simulate};
use dosecomb::{BoundaryStatus, CohortOutcome, DesignKind, DesignParams, GridStep};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::error::ApiError;
use crate::store::Store;
use crate::wire::*;

/// Simulation jobs allowed to run at once.
pub const JOB_WORKERS: usize = 2;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    jobs: Arc<Mutex<HashMap<String, JobView>>>,
    workers: Arc<Semaphore>,
    token: Option<Arc<str>>,
}

impl AppState {
    pub fn new(store: Store, token: Option<String>) -> Self {
        AppState {
            store: Arc::new(store),
            jobs: Arc::new(Mutex::new(HashMap::new())),
            workers: Arc::new(Semaphore::new(JOB_WORKERS)),
            token: token.filter(|t| !t.is_empty()).map(Arc::from),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/trials", post(create_trial))
        .route("/trials/{id}", get(get_trial))
        .route("/trials/{id}/cohorts", post(post_cohort))
        .route("/trials/{id}/mtd", get(get_mtd))
        .route("/trials/{id}/what-if", get(what_if))
        .route("/tables/retainment", get(retainment))
        .route("/tables/early-completion", get(early_completion))
        .route("/drp", get(drp))
        .route("/simulate", post(start_simulation))
        .route("/jobs/{id}", get(get_job))
        .fallback(|| async { ApiError::NotFound("route".into()) })
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

async fn require_token(State(app): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.token {
        let ok = req
            .headers()
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == &**token);
        if !ok {
            return ApiError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

/// JSON body whose deserialization errors carry the offending field path.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        if let Some(ct) = req.headers().get(CONTENT_TYPE) {
            let ct = ct.to_str().unwrap_or_default();
            if !ct.starts_with("application/json") {
                return Err(ApiError::UnsupportedMedia);
            }
        }
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::Validation {
                field: None,
                message: e.body_text(),
            })?;
        let de = &mut serde_json::Deserializer::from_slice(&bytes);
        serde_path_to_error::deserialize(de).map(Body).map_err(|e| {
            let path = e.path().to_string();
            ApiError::Validation {
                field: (path != ".").then_some(path),
                message: e.into_inner().to_string(),
            }
        })
    }
}

/// Query string with field-path errors.
pub struct Params<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for Params<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, ApiError> {
        let query = parts.uri.query().unwrap_or_default();
        let de = serde_urlencoded::Deserializer::new(form_urlencoded::parse(query.as_bytes()));
        serde_path_to_error::deserialize(de).map(Params).map_err(|e| {
            let path = e.path().to_string();
            ApiError::Validation {
                field: (path != ".").then_some(path),
                message: e.into_inner().to_string(),
            }
        })
    }
}

type Reply<T> = Result<Json<Envelope<T>>, ApiError>;

fn reply<T>(body: T) -> Reply<T> {
    Ok(Json(Envelope::new(body)))
}

async fn create_trial(State(app): State<AppState>, Body(req): Body<TrialRequest>) -> Result<impl IntoResponse, ApiError> {
    let config = req.into_config(rand_seed())?;
    let view = app.store.create(config)?;
    tracing::info!(id = %view.id, "trial created");
    Ok((StatusCode::CREATED, Json(Envelope::new(view))))
}

fn rand_seed() -> u64 {
    let bytes = uuid::Uuid::new_v4().into_bytes();
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}

async fn get_trial(State(app): State<AppState>, Path(id): Path<String>) -> Reply<TrialView> {
    reply(app.store.view(&id).await?)
}

async fn post_cohort(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Body(req): Body<CohortRequest>,
) -> Reply<CohortResponse> {
    let out = app.store.apply(&id, req.dlt_count, req.revision).await?;
    tracing::info!(id = %id, revision = out.revision, status = %out.report.status, "cohort recorded");
    reply(out)
}

async fn get_mtd(State(app): State<AppState>, Path(id): Path<String>) -> Reply<MtdView> {
    let shared = app.store.get(&id)?;
    let rec = shared.lock().await;
    reply(MtdView::of(&id, &rec.state)?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WhatIfRow {
    pub dlt_count: usize,
    pub n: usize,
    pub m: usize,
    pub drp: Option<f64>,
    pub drp_i: Option<f64>,
    pub early_completion: bool,
    pub decision: Option<dosecomb::Decision>,
    pub next_dose: Option<dosecomb::Dose>,
    pub status: dosecomb::TrialStatus,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WhatIfView {
    pub id: String,
    pub revision: u64,
    pub dose: dosecomb::Dose,
    pub outcomes: Vec<WhatIfRow>,
}

/// Engine outcome for every possible DLT count of the next cohort; nothing is stored.
async fn what_if(State(app): State<AppState>, Path(id): Path<String>) -> Reply<WhatIfView> {
    let shared = app.store.get(&id)?;
    let rec = shared.lock().await;
    if rec.state.status.is_terminal() {
        return Err(ApiError::State(format!("trial is not ongoing (status: {})", rec.state.status)));
    }
    let mut outcomes = Vec::new();
    for dlt_count in 0..=rec.engine.config().cohort_size {
        let r = rec.engine.apply_cohort(&rec.state, CohortOutcome { dlt_count })?.report;
        outcomes.push(WhatIfRow {
            dlt_count,
            n: r.n,
            m: r.m,
            drp: r.drp,
            drp_i: r.drp_i,
            early_completion: r.early_completion,
            decision: r.decision,
            next_dose: r.next_dose,
            status: r.status,
        });
    }
    reply(WhatIfView {
        id,
        revision: rec.revision,
        dose: rec.state.current,
        outcomes,
    })
}

fn default_design() -> DesignKind {
    DesignKind::Boin
}

fn default_phi() -> f64 {
    0.3
}

fn parse_list(field: &str, text: &str) -> Result<Vec<usize>, ApiError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| ApiError::validation(field, format!("`{s}` is not a patient count")))
        })
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RetainmentQuery {
    #[serde(default = "default_design")]
    design: DesignKind,
    #[serde(default = "default_phi")]
    phi: f64,
    /// Comma-separated patient counts; defaults to 3, 6, …, 18.
    n: Option<String>,
}

async fn retainment(Params(q): Params<RetainmentQuery>) -> Reply<RetainmentTable> {
    let params = DesignParams::new(q.design, q.phi);
    params.validate()?;
    let ns = match &q.n {
        Some(text) => parse_list("n", text)?,
        None => cohort_multiples(3, 18),
    };
    if ns.contains(&0) {
        return Err(ApiError::validation("n", "patient counts must be positive"));
    }
    reply(retainment_table(&params, &ns)?)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompletionQuery {
    #[serde(rename = "N", alias = "sample_size")]
    sample_size: usize,
    #[serde(default = "default_design")]
    design: DesignKind,
    #[serde(default = "default_phi")]
    phi: f64,
    #[serde(default = "wire_tau")]
    tau: f64,
    #[serde(default = "wire_cohort")]
    cohort: usize,
    #[serde(default)]
    step: GridStep,
    /// Comma-separated patient counts; defaults to cohort multiples up to N/3.
    n: Option<String>,
}

fn wire_tau() -> f64 {
    0.4
}

fn wire_cohort() -> usize {
    3
}

async fn early_completion(Params(q): Params<CompletionQuery>) -> Reply<CompletionTableView> {
    let params = DesignParams::new(q.design, q.phi);
    params.validate()?;
    let ns = match &q.n {
        Some(text) => parse_list("n", text)?,
        None => cohort_multiples(q.cohort, q.sample_size / 3),
    };
    let (view, _) = completion_table_view(&params, q.sample_size, q.cohort, q.tau, q.step, &ns)?;
    reply(view)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DrpQuery {
    #[serde(default = "default_design")]
    design: DesignKind,
    #[serde(default = "default_phi")]
    phi: f64,
    n: usize,
    m: usize,
    l: usize,
    isotonic_rate: Option<f64>,
    boundary: Option<BoundaryStatus>,
}

async fn drp(Params(q): Params<DrpQuery>) -> Reply<DrpView> {
    let params = DesignParams::new(q.design, q.phi);
    params.validate()?;
    reply(drp_view(
        &params,
        q.n,
        q.m,
        q.l,
        q.isotonic_rate,
        q.boundary.unwrap_or(BoundaryStatus::Interior),
    )?)
}

async fn start_simulation(
    State(app): State<AppState>,
    Body(req): Body<SimulateRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let (scenarios, config) = req.build()?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let job = JobView {
        id: id.clone(),
        status: JobStatus::Queued,
        metrics: None,
        csv: None,
        error: None,
    };
    app.jobs.lock().expect("jobs lock").insert(id.clone(), job.clone());
    let (jobs, workers, job_id) = (app.jobs.clone(), app.workers.clone(), id.clone());
    tokio::spawn(async move {
        let _permit = workers.acquire_owned().await.expect("semaphore open");
        set_status(&jobs, &job_id, |j| j.status = JobStatus::Running);
        let result = tokio::task::spawn_blocking(move || simulate(&scenarios, &config)).await;
        set_status(&jobs, &job_id, |j| match result {
            Ok(Ok(metrics)) => {
                j.csv = Some(metrics_csv(&metrics));
                j.metrics = Some(metrics);
                j.status = JobStatus::Done;
            }
            Ok(Err(e)) => {
                j.error = Some(e.to_string());
                j.status = JobStatus::Failed;
            }
            Err(e) => {
                j.error = Some(format!("worker failed: {e}"));
                j.status = JobStatus::Failed;
            }
        });
    });
    Ok((StatusCode::ACCEPTED, Json(Envelope::new(job))))
}

fn set_status(jobs: &Mutex<HashMap<String, JobView>>, id: &str, f: impl FnOnce(&mut JobView)) {
    if let Some(j) = jobs.lock().expect("jobs lock").get_mut(id) {
        f(j);
    }
}

async fn get_job(State(app): State<AppState>, Path(id): Path<String>) -> Reply<JobView> {
    let job = app.jobs.lock().expect("jobs lock").get(&id).cloned();
    reply(job.ok_or_else(|| ApiError::NotFound(format!("job `{id}`")))?)
}

/// Binds and serves until interrupted.
pub async fn serve(state: AppState, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, trials = state.store.len(), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
