//! HTTP JSON API of the monitoring service.
//!
//! Every response body carries `bundle_version`. Reads run concurrently;
//! ingestion and record writes go through the store's write lock.

use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;

use srmon_core::monitor::{
    diagram, evaluate_date, fill_smoothed, marginal_attribution, sensitivity_grid, whatif, CalibrationBundle,
    MonitoringRecord, RowRejection, Store, Validity,
};
use srmon_core::par::ExecMode;
use srmon_core::transitions::HistoryRow;
use srmon_core::{Error, ErrorClass};

struct Inner {
    bundle: Arc<CalibrationBundle>,
    store: RwLock<Store>,
    window: usize,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Evaluates any stored dates that have no record yet.
    pub fn new(bundle: CalibrationBundle, mut store: Store, window: usize) -> srmon_core::Result<Self> {
        bundle.validate()?;
        if window == 0 {
            return Err(Error::Config("smoothing window must be at least 1".into()));
        }
        let pending: Vec<NaiveDate> = store
            .history()
            .dates()
            .filter(|d| *d > bundle.calibration_date && !store.records().any(|r| r.date == *d))
            .collect();
        let recs = evaluate_dates(&bundle, &store, &pending).0;
        store.upsert_records(recs)?;
        Ok(AppState(Arc::new(Inner { bundle: Arc::new(bundle), store: RwLock::new(store), window })))
    }

    pub fn bundle(&self) -> &CalibrationBundle {
        &self.0.bundle
    }

    fn version(&self) -> &str {
        &self.0.bundle.version_id
    }
}

fn evaluate_dates(bundle: &CalibrationBundle, store: &Store, dates: &[NaiveDate]) -> (Vec<MonitoringRecord>, Vec<Value>) {
    let mut recs = Vec::new();
    let mut skipped = Vec::new();
    for d in dates {
        match evaluate_date(bundle, store.history(), *d) {
            Ok(r) => recs.push(r),
            Err(e) => skipped.push(json!({ "date": d, "message": e.to_string() })),
        }
    }
    (recs, skipped)
}

pub struct ApiError {
    status: StatusCode,
    message: String,
    version: String,
}

impl ApiError {
    fn new(state: &AppState, status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into(), version: state.version().to_string() }
    }

    fn from_core(state: &AppState, e: Error) -> Self {
        let status = match e.class() {
            ErrorClass::Config | ErrorClass::Data => StatusCode::BAD_REQUEST,
            ErrorClass::Numerical => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(state, status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message, "bundle_version": self.version }))).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn ok(state: &AppState, mut body: Value) -> ApiResult {
    body["bundle_version"] = Value::String(state.version().to_string());
    Ok(Json(body))
}

fn to_value<T: Serialize>(state: &AppState, v: &T) -> Result<Value, ApiError> {
    serde_json::to_value(v).map_err(|e| ApiError::new(state, StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/bundle", get(bundle_meta))
        .route("/v1/solvency/latest", get(latest))
        .route("/v1/solvency/history", get(history))
        .route("/v1/whatif", post(whatif_handler))
        .route("/v1/sensitivity", get(sensitivity))
        .route("/v1/attribution", post(attribution))
        .route("/v1/ingest", post(ingest))
        .route("/v1/diagram", get(diagram_handler))
        .with_state(state)
}

async fn health(State(s): State<AppState>) -> ApiResult {
    ok(&s, json!({ "status": "ok" }))
}

async fn bundle_meta(State(s): State<AppState>) -> ApiResult {
    let b = s.bundle();
    let proxy = |m: &srmon_core::proxy::ProxyModel| {
        json!({ "method": m.method, "regressors": m.labels(), "r_squared": m.r_squared, "n_primary": m.n_primary, "p_secondary": m.p_secondary })
    };
    let shocked: BTreeMap<&String, Value> = b.shocked.iter().map(|(k, m)| (k, proxy(m))).collect();
    ok(
        &s,
        json!({
            "calibration_date": b.calibration_date,
            "config_hash": b.config_hash,
            "factors": b.factors,
            "space": b.space,
            "basis": b.basis,
            "frozen": b.frozen,
            "attribution_order": b.attribution_order,
            "full_calc": b.full_calc,
            "central": proxy(&b.central),
            "shocked": shocked,
            "smoothing_window": s.0.window,
        }),
    )
}

async fn latest(State(s): State<AppState>) -> ApiResult {
    let store = s.0.store.read().expect("store lock");
    let mut recs: Vec<MonitoringRecord> = store.records().cloned().collect();
    drop(store);
    if recs.is_empty() {
        return Err(ApiError::new(&s, StatusCode::NOT_FOUND, "no monitoring record yet"));
    }
    fill_smoothed(&mut recs, s.0.window).map_err(|e| ApiError::from_core(&s, e))?;
    let last = recs.pop().expect("non-empty");
    let record = to_value(&s, &last)?;
    ok(&s, json!({ "record": record }))
}

#[derive(Debug, Deserialize)]
pub struct HistoryQuery {
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    #[serde(default)]
    pub smoothed: bool,
}

#[derive(Debug, Serialize)]
struct HistoryPoint {
    date: NaiveDate,
    sr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    smoothed_sr: Option<f64>,
    validity: Validity,
}

async fn history(State(s): State<AppState>, Query(q): Query<HistoryQuery>) -> ApiResult {
    let mut recs: Vec<MonitoringRecord> = s.0.store.read().expect("store lock").records().cloned().collect();
    // smoothing runs over the whole series so a range never truncates the window
    fill_smoothed(&mut recs, s.0.window).map_err(|e| ApiError::from_core(&s, e))?;
    let points: Vec<HistoryPoint> = recs
        .iter()
        .filter(|r| q.from.is_none_or(|f| r.date >= f) && q.to.is_none_or(|t| r.date <= t))
        .map(|r| HistoryPoint {
            date: r.date,
            sr: r.snapshot.sr,
            smoothed_sr: if q.smoothed { r.smoothed_sr } else { None },
            validity: r.validity,
        })
        .collect();
    let points = to_value(&s, &points)?;
    ok(&s, json!({ "smoothed": q.smoothed, "window": s.0.window, "points": points }))
}

fn transition(s: &AppState, body: &BTreeMap<String, f64>) -> Result<srmon_core::transitions::RiskFactorVector, ApiError> {
    s.bundle().transition_from_map(body).map_err(|e| ApiError::from_core(s, e))
}

async fn whatif_handler(State(s): State<AppState>, Json(body): Json<BTreeMap<String, f64>>) -> ApiResult {
    let eps = transition(&s, &body)?;
    let e = whatif(s.bundle(), &eps).map_err(|e| ApiError::from_core(&s, e))?;
    let v = to_value(&s, &e)?;
    ok(&s, json!({ "evaluation": v }))
}

async fn attribution(State(s): State<AppState>, Json(body): Json<BTreeMap<String, f64>>) -> ApiResult {
    let eps = transition(&s, &body)?;
    let a = marginal_attribution(s.bundle(), &eps).map_err(|e| ApiError::from_core(&s, e))?;
    let v = to_value(&s, &a)?;
    ok(&s, json!({ "attribution": v }))
}

#[derive(Debug, Deserialize)]
pub struct SensitivityQuery {
    pub f1: String,
    pub f2: Option<String>,
    /// Points per axis spanning the probable-space interval.
    pub grid: Option<usize>,
    /// Explicit comma-separated breakpoints, overriding `grid`.
    pub values1: Option<String>,
    pub values2: Option<String>,
}

fn axis(s: &AppState, id: &str, n: Option<usize>, explicit: Option<&str>) -> Result<Vec<f64>, ApiError> {
    if let Some(list) = explicit {
        return list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| ApiError::new(s, StatusCode::BAD_REQUEST, format!("bad breakpoint {v:?}"))))
            .collect();
    }
    let n = n.unwrap_or(11);
    if n == 0 || n > 201 {
        return Err(ApiError::new(s, StatusCode::BAD_REQUEST, "grid must lie in 1..=201"));
    }
    let space = &s.bundle().space;
    let j = space
        .factor_ids
        .iter()
        .position(|f| f == id)
        .ok_or_else(|| ApiError::new(s, StatusCode::BAD_REQUEST, format!("unknown risk factor {id:?}")))?;
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let (lo, hi) = (space.lo[j], space.hi[j]);
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

async fn sensitivity(State(s): State<AppState>, Query(q): Query<SensitivityQuery>) -> ApiResult {
    let mut factors = vec![q.f1.clone()];
    let mut axes = vec![axis(&s, &q.f1, q.grid, q.values1.as_deref())?];
    if let Some(f2) = &q.f2 {
        factors.push(f2.clone());
        axes.push(axis(&s, f2, q.grid, q.values2.as_deref())?);
    }
    let st = s.clone();
    let grid = tokio::task::spawn_blocking(move || sensitivity_grid(st.bundle(), &factors, &axes, ExecMode::Parallel))
        .await
        .map_err(|e| ApiError::new(&s, StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError::from_core(&s, e))?;
    let v = to_value(&s, &grid)?;
    ok(&s, json!({ "grid": v }))
}

#[derive(Debug, Deserialize)]
pub struct IngestBody {
    pub rows: Vec<Value>,
    #[serde(default)]
    pub received_at: Option<String>,
}

async fn ingest(State(s): State<AppState>, Json(body): Json<IngestBody>) -> ApiResult {
    let mut rows = Vec::new();
    let mut positions = Vec::new();
    let mut malformed = Vec::new();
    for (i, v) in body.rows.into_iter().enumerate() {
        match serde_json::from_value::<HistoryRow>(v) {
            Ok(r) => {
                rows.push(r);
                positions.push(i);
            }
            Err(e) => malformed.push(RowRejection { index: i, message: format!("malformed row: {e}") }),
        }
    }
    let mut store = s.0.store.write().expect("store lock");
    let mut report = store.ingest(&rows, body.received_at).map_err(|e| ApiError::from_core(&s, e))?;
    for r in &mut report.rejected {
        r.index = positions[r.index];
    }
    report.rejected.extend(malformed);
    report.rejected.sort_by_key(|r| r.index);
    let cal = s.bundle().calibration_date;
    let dates: Vec<NaiveDate> = report.touched_dates.iter().copied().filter(|d| *d > cal).collect();
    let (recs, skipped) = evaluate_dates(s.bundle(), &store, &dates);
    let evaluated = recs.len();
    store.upsert_records(recs).map_err(|e| ApiError::from_core(&s, e))?;
    let total = store.records().count();
    drop(store);
    let report = to_value(&s, &report)?;
    ok(&s, json!({ "report": report, "evaluated": evaluated, "skipped": skipped, "records": total }))
}

async fn diagram_handler(State(s): State<AppState>) -> ApiResult {
    let latest = s.0.store.read().expect("store lock").latest().map(|r| (r.date, r.transition.clone()));
    let (date, eps) = latest.unwrap_or_else(|| (s.bundle().calibration_date, s.bundle().zero()));
    let d = diagram(s.bundle(), &eps).map_err(|e| ApiError::from_core(&s, e))?;
    let v = to_value(&s, &d)?;
    ok(&s, json!({ "date": date, "factors": v }))
}

/// Binds the listener; an address in use is a configuration error.
pub async fn bind(addr: SocketAddr) -> srmon_core::Result<TcpListener> {
    TcpListener::bind(addr).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            Error::Config(format!("address {addr} is already in use"))
        } else {
            Error::io(addr.to_string(), e)
        }
    })
}

pub async fn serve(listener: TcpListener, state: AppState, shutdown: impl Future<Output = ()> + Send + 'static) -> srmon_core::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| Error::io("http server", e))
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
}
