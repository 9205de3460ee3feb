//! `/v1` endpoints. Handlers are pure functions of the loaded state and the
//! request, so identical requests get identical responses.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tabaug_core::catalog::PartId;
use tabaug_core::pipeline::RetrievalMode;
use tabaug_core::table::{AugmentationQuery, Table, Task};
use tabaug_core::Error;

use crate::state::AppState;
use crate::wire::{AnswerOut, PartOut};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed_request", message)
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "precondition_failed", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::InvalidTable { .. } | Error::Json(_) => ApiError::bad_request(message),
            Error::InsufficientTable { .. }
            | Error::InvalidTargetCell { .. }
            | Error::EmptyTargetCell { .. }
            | Error::MissingTargetCell
            | Error::EmptyGold
            | Error::InvalidArgument(_) => ApiError::unprocessable(message),
            Error::NotLoaded(_) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "not_loaded", message),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn check_k(state: &AppState, k: Option<usize>) -> ApiResult<usize> {
    let k = k.unwrap_or(state.default_k);
    if k == 0 || k > state.limits.max_k {
        return Err(ApiError::unprocessable(format!("k must be in 1..={}, got {k}", state.limits.max_k)));
    }
    Ok(k)
}

fn check_size(state: &AppState, t: &Table) -> ApiResult<()> {
    let l = &state.limits;
    if t.n_rows() > l.max_rows || t.n_cols() > l.max_cols {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "table_too_large",
            format!("table is {}×{}, limit is {}×{}", t.n_rows(), t.n_cols(), l.max_rows, l.max_cols),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentRequest {
    pub task: Task,
    pub table: Table,
    /// Keep only the first `n_seed` rows (row population) or columns
    /// (column population) of `table`.
    #[serde(default)]
    pub n_seed: Option<usize>,
    /// 0-based (row, col); required for cell filling.
    #[serde(default)]
    pub target_cell: Option<(usize, usize)>,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AugmentResponse {
    pub task: Task,
    pub k: usize,
    pub answers: Vec<AnswerOut>,
    /// The retrieved parts that some answer cites, in rank order.
    pub provenance_tables: Vec<PartOut>,
    pub unanswerable: bool,
}

/// Truncate `table` to its seed prefix and wrap it as a serving query.
pub fn serving_query(
    table: Table,
    task: Task,
    n_seed: Option<usize>,
    target_cell: Option<(usize, usize)>,
) -> Result<AugmentationQuery, Error> {
    if task != Task::CellFilling && target_cell.is_some() {
        return Err(Error::InvalidArgument(format!("target_cell does not apply to {task}")));
    }
    let table = match (task, n_seed) {
        (Task::CellFilling, _) | (_, None) => table,
        (Task::RowPopulation, Some(n)) => {
            if n == 0 || n > table.n_rows() {
                return Err(Error::InsufficientTable { task: task.name(), n_seed: n });
            }
            Table::new(
                table.id(),
                table.caption(),
                table.headers().to_vec(),
                table.rows()[..n].to_vec(),
                table.key_col(),
            )?
            .with_url(table.url().map(str::to_string))
        }
        (Task::ColumnPopulation, Some(n)) => {
            if n == 0 || n > table.n_cols() {
                return Err(Error::InsufficientTable { task: task.name(), n_seed: n });
            }
            let rows = table.rows().iter().map(|r| r[..n].to_vec()).collect();
            let key = if table.key_col() <= n { table.key_col() } else { 1 };
            Table::new(table.id(), table.caption(), table.headers()[..n].to_vec(), rows, key)?
                .with_url(table.url().map(str::to_string))
        }
    };
    AugmentationQuery::for_serving(table, task, target_cell)
}

async fn augment(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<AugmentResponse>> {
    let req: AugmentRequest = parse(&body)?;
    check_size(&state, &req.table)?;
    let k = check_k(&state, req.k)?;
    let query = serving_query(req.table, req.task, req.n_seed, req.target_cell)?;
    let sys = &state.system;
    let out = sys.augment(&query, k)?;
    let cited: BTreeMap<PartId, ()> =
        out.answers.iter().flat_map(|a| a.provenance.iter().map(|p| (p.part, ()))).collect();
    let provenance_tables = out
        .retrieved
        .iter()
        .enumerate()
        .filter(|(_, (id, _))| cited.contains_key(id))
        .map(|(rank, &(id, score))| PartOut::new(rank + 1, id, score, &sys.catalog))
        .collect();
    Ok(Json(AugmentResponse {
        task: req.task,
        k,
        answers: out.answers.iter().map(|a| AnswerOut::new(a, &sys.catalog)).collect(),
        provenance_tables,
        unanswerable: out.unanswerable,
    }))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    pub query_table: Table,
    #[serde(default)]
    pub k: Option<usize>,
    pub mode: RetrievalMode,
    /// Selects the query tower for dense search and the query
    /// linearization. Defaults to row population.
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub target_cell: Option<(usize, usize)>,
    /// Parts of this table are excluded from the results.
    #[serde(default)]
    pub source_table_id: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResponse {
    pub mode: RetrievalMode,
    pub k: usize,
    pub results: Vec<PartOut>,
}

async fn search(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<SearchResponse>> {
    let req: SearchRequest = parse(&body)?;
    check_size(&state, &req.query_table)?;
    let k = check_k(&state, req.k)?;
    let task = req.task.unwrap_or(Task::RowPopulation);
    let mut query = serving_query(req.query_table, task, None, req.target_cell)?;
    query.source_table_id = req.source_table_id;
    let sys = &state.system;
    let hits = sys.retrieval(req.mode, req.task)?.search(&query, k, &sys.catalog)?;
    let results =
        hits.iter().enumerate().map(|(rank, &(id, score))| PartOut::new(rank + 1, id, score, &sys.catalog)).collect();
    Ok(Json(SearchResponse { mode: req.mode, k, results }))
}

async fn table(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let raw = state
        .store
        .raw_record(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no table {id:?}")))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], raw.to_string()).into_response())
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

/// One JSON line per request on stderr.
async fn access_log(req: Request, next: Next) -> Response {
    let start = Instant::now();
    let method = req.method().to_string();
    let path = req.uri().path().to_string();
    let resp = next.run(req).await;
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
    let line = serde_json::json!({
        "ts_ms": ts as u64,
        "method": method,
        "path": path,
        "status": resp.status().as_u16(),
        "latency_ms": crate::wire::round6(start.elapsed().as_secs_f64() * 1e3),
    });
    eprintln!("{line}");
    resp
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.limits.max_body_bytes;
    Router::new()
        .route("/v1/augment", post(augment))
        .route("/v1/search", post(search))
        .route("/v1/tables/{id}", get(table))
        .fallback(fallback)
        .layer(DefaultBodyLimit::max(limit))
        .layer(middleware::from_fn(access_log))
        .with_state(state)
}
