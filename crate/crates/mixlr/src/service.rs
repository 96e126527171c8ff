//! HTTP facade over a model store: case evaluation, variant listing and
//! panel reflection.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use mixlr::augmentation::{BackgroundLevels, HypothesisPair};
use mixlr::casework::{
    evaluate_case_with, CaseObservation, CaseOptions, CaseReport, MarkerFluidMap, ModelStore, VariantQuery,
    VariantSummary,
};
use mixlr::profiles::{BodyFluid, LabelSet, MarkerPanel};
use mixlr::system::Strategy;
use mixlr::Error;

pub const SERVER_VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct AppState {
    pub store: ModelStore,
    pub panel: MarkerPanel,
    pub map: MarkerFluidMap,
    pub options: CaseOptions,
}

impl AppState {
    pub fn new(store: ModelStore) -> Self {
        AppState {
            store,
            panel: MarkerPanel::default(),
            map: MarkerFluidMap::default(),
            options: CaseOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateRequest {
    /// Fluid names; entries may also be `+`-joined.
    pub interest: Vec<String>,
    #[serde(default)]
    pub fixed_present: Vec<String>,
    #[serde(default)]
    pub fixed_absent: Vec<String>,
    pub case: CaseObservation,
    /// Levels that differ from the defaults, by fluid name.
    #[serde(default)]
    pub background: BTreeMap<String, f64>,
    #[serde(default)]
    pub variant_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluateResponse {
    pub report: CaseReport,
    pub variant: VariantSummary,
    pub server_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelInfo {
    pub markers: Vec<String>,
    pub housekeeping: Vec<String>,
    pub threshold_rfu: f64,
    pub fluids: Vec<BodyFluid>,
    pub default_background: BackgroundLevels,
    pub marker_fluid_map: MarkerFluidMap,
    pub cap: f64,
}

/// An error with its HTTP status and machine-readable code.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
            },
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::UnknownMarker(_) => (StatusCode::BAD_REQUEST, "unknown_marker"),
            Error::UnknownFluid(_) => (StatusCode::BAD_REQUEST, "unknown_fluid"),
            Error::Parse { .. } | Error::Data(_) | Error::Json(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            Error::Config(_) => (StatusCode::BAD_REQUEST, "invalid_hypothesis"),
            Error::UnknownVariant(_) => (StatusCode::NOT_FOUND, "unknown_variant"),
            Error::NoModel(_) => (StatusCode::CONFLICT, "no_model"),
            Error::NotConverged { .. } | Error::Numeric(_) => (StatusCode::INTERNAL_SERVER_ERROR, "numeric_failure"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn labels(names: &[String]) -> Result<LabelSet, Error> {
    names.iter().map(|n| n.parse::<LabelSet>()).try_fold(LabelSet::empty(), |acc, s| Ok(acc.union(s?)))
}

/// Evaluates a request against a store; the service handler and direct
/// callers share this path.
pub fn evaluate(state: &AppState, req: &EvaluateRequest) -> Result<EvaluateResponse, Error> {
    let hp = HypothesisPair::with_fixed(labels(&req.interest)?, labels(&req.fixed_present)?, labels(&req.fixed_absent)?)?;
    let mut bg = BackgroundLevels::default();
    for (name, level) in &req.background {
        bg.set(name.parse()?, *level);
    }
    bg.validate()?;
    let sys = match &req.variant_id {
        Some(id) => state.store.get(id)?,
        None => state.store.resolve(&VariantQuery {
            interest: hp.interest,
            background: hp.effective_background(&bg),
            mode: None,
            strategy: Strategy::OneVsRest,
        })?,
    };
    let report = evaluate_case_with(&sys, &req.case, &hp, &state.map, state.options)?;
    Ok(EvaluateResponse {
        report,
        variant: VariantSummary::of(&sys),
        server_version: SERVER_VERSION.to_string(),
    })
}

async fn evaluate_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<EvaluateResponse>, ApiError> {
    let req: EvaluateRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.to_string()))?;
    let state2 = state.clone();
    let out = tokio::task::spawn_blocking(move || evaluate(&state2, &req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(out))
}

async fn models_handler(State(state): State<Arc<AppState>>) -> Json<Vec<VariantSummary>> {
    Json(state.store.list())
}

async fn panel_handler(State(state): State<Arc<AppState>>) -> Json<PanelInfo> {
    Json(PanelInfo {
        markers: state.panel.markers.clone(),
        housekeeping: state.panel.housekeeping.clone(),
        threshold_rfu: state.panel.threshold_rfu,
        fluids: BodyFluid::ALL.to_vec(),
        default_background: BackgroundLevels::default(),
        marker_fluid_map: state.map.clone(),
        cap: state.options.cap,
    })
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/evaluate", post(evaluate_handler))
        .route("/api/v1/models", get(models_handler))
        .route("/api/v1/panel", get(panel_handler))
        .fallback(not_found)
        .with_state(state)
}

/// Serves `router` on `addr` until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("mixlr listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
