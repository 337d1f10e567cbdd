//! HTTP session service for stepwise reporting over a learned participatory system.
//!
//! | Method | Path | Success |
//! |---|---|---|
//! | `POST` | `/sessions` `{features}` | 201 `{session_id, prediction, node, options}` |
//! | `GET` | `/sessions/{id}/options` | 200 session state |
//! | `POST` | `/sessions/{id}/report` `{attribute, level}` or `{reports: [...]}` | 200 session state |
//! | `POST` | `/sessions/{id}/finalize` | 200 prediction with provenance |
//! | `GET` | `/system` | 200 public tree with gains, no model parameters |
//! | `GET` | `/health` | 200 `{"status": "ok"}` |
//!
//! Errors are `{"error": "..."}` with 400 (malformed body or feature width),
//! 404 (unknown or expired session), 409 (already finalized) or 422 (report
//! that is not an available option).

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::info;
use partsys::assembly::GainCertificate;
use partsys::models::Metric;
use partsys::{ParticipatorySystem, ReportingGroup};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Debug, Clone, Copy)]
pub struct ServiceConfig {
    /// Sessions untouched for this long are discarded with their features.
    pub idle_expiry: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            idle_expiry: Duration::from_secs(15 * 60),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryEntry {
    pub reports: Vec<LevelRef>,
    pub node: usize,
    /// Milliseconds since the Unix epoch.
    pub at_ms: u128,
}

#[derive(Debug)]
struct Session {
    node: usize,
    features: Vec<f64>,
    history: Vec<HistoryEntry>,
    finalized: bool,
    last_seen: Instant,
}

/// Shared state: the immutable system and the live sessions.
#[derive(Clone)]
pub struct AppState {
    system: Arc<ParticipatorySystem>,
    sessions: Arc<Mutex<HashMap<String, Arc<Mutex<Session>>>>>,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(system: ParticipatorySystem, config: ServiceConfig) -> Self {
        Self {
            system: Arc::new(system),
            sessions: Arc::new(Mutex::new(HashMap::new())),
            config,
        }
    }

    /// Drop sessions idle for longer than the expiry; returns how many were removed.
    pub fn sweep(&self) -> usize {
        let mut sessions = self.sessions.lock().expect("session map");
        let before = sessions.len();
        let expiry = self.config.idle_expiry;
        sessions.retain(|_, s| s.lock().map(|s| s.last_seen.elapsed() <= expiry).unwrap_or(false));
        before - sessions.len()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        let mut sessions = self.sessions.lock().expect("session map");
        let Some(session) = sessions.get(id).cloned() else {
            return Err(ApiError::not_found(id));
        };
        let expired = session.lock().expect("session").last_seen.elapsed() > self.config.idle_expiry;
        if expired {
            sessions.remove(id);
            return Err(ApiError::not_found(id));
        }
        Ok(session)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("session `{id}` not found"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRef {
    pub attribute: String,
    pub level: String,
}

/// Certified gain of a reporting option, in risk units.
#[derive(Debug, Clone, Serialize)]
pub struct GainView {
    pub metric: Metric,
    pub gain: Option<f64>,
    pub p_value: f64,
    pub n_validation: usize,
    /// Gain in percentage points with one decimal, e.g. `+21.5%`.
    pub display: Option<String>,
}

impl From<&GainCertificate> for GainView {
    fn from(c: &GainCertificate) -> Self {
        Self {
            metric: c.metric,
            gain: c.gain,
            p_value: c.p_value,
            n_validation: c.n_validation,
            display: c.gain.map(format_gain),
        }
    }
}

/// `0.215` → `+21.5%`.
pub fn format_gain(gain: f64) -> String {
    let points = (gain * 1000.0).round() / 10.0;
    let points = if points == 0.0 { 0.0 } else { points };
    format!("{}{points:.1}%", if points >= 0.0 { "+" } else { "" })
}

#[derive(Debug, Clone, Serialize)]
pub struct OptionView {
    pub node: usize,
    /// Set when the option discloses a single attribute.
    pub attribute: Option<String>,
    pub level: Option<String>,
    /// Everything this option discloses beyond the current node.
    pub reports: Vec<LevelRef>,
    pub label: String,
    pub gain: Option<GainView>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictionView {
    pub score: f64,
    pub label: u8,
    pub node: usize,
    pub model_id: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub node: usize,
    pub reported: Vec<LevelRef>,
    pub prediction: PredictionView,
    pub options: Vec<OptionView>,
    /// Opting out and finalizing is always possible.
    pub can_finalize: bool,
    pub finalized: bool,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalView {
    pub session_id: String,
    pub prediction: PredictionView,
    pub reported: Vec<LevelRef>,
    /// Certificates from the first reporting step down to the serving node.
    pub certificates: Vec<CertificateStep>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateStep {
    pub node: usize,
    pub model_id: String,
    pub gain: GainView,
    pub test: String,
    pub parent_model: String,
}

fn level_refs(system: &ParticipatorySystem, from: &ReportingGroup, to: &ReportingGroup) -> Vec<LevelRef> {
    let attributes = system.schema.attributes();
    to.entries()
        .iter()
        .zip(from.entries())
        .enumerate()
        .filter_map(|(a, (t, f))| match (t, f) {
            (Some(l), None) => Some(LevelRef {
                attribute: attributes[a].name.clone(),
                level: attributes[a].levels[*l].clone(),
            }),
            _ => None,
        })
        .collect()
}

fn options_view(system: &ParticipatorySystem, node: usize) -> Vec<OptionView> {
    let here = &system.tree.nodes[node].report;
    system
        .options(node)
        .into_iter()
        .map(|c| {
            let child = &system.tree.nodes[c];
            let reports = level_refs(system, here, &child.report);
            let (attribute, level) = match reports.as_slice() {
                [one] => (Some(one.attribute.clone()), Some(one.level.clone())),
                _ => (None, None),
            };
            OptionView {
                node: c,
                attribute,
                level,
                label: system.schema.describe(&child.report),
                reports,
                gain: child.certificate.as_ref().map(GainView::from),
            }
        })
        .collect()
}

fn predict(system: &ParticipatorySystem, features: &[f64], node: usize) -> Result<PredictionView, ApiError> {
    let p = system
        .predict_at(features, node)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    Ok(PredictionView {
        score: p.score,
        label: p.label,
        node: p.node,
        model_id: p.model_id,
    })
}

fn session_view(state: &AppState, id: &str, s: &Session) -> Result<SessionView, ApiError> {
    let system = &state.system;
    Ok(SessionView {
        session_id: id.to_string(),
        node: s.node,
        reported: level_refs(system, &ReportingGroup::root(system.schema.k()), &system.tree.nodes[s.node].report),
        prediction: predict(system, &s.features, s.node)?,
        options: if s.finalized { Vec::new() } else { options_view(system, s.node) },
        can_finalize: !s.finalized,
        finalized: s.finalized,
        history: s.history.clone(),
    })
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

fn parse<T: for<'de> Deserialize<'de>>(body: &str) -> Result<T, ApiError> {
    serde_json::from_str(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))
}

#[derive(Deserialize)]
struct CreateBody {
    features: Vec<f64>,
}

async fn create_session(State(state): State<AppState>, body: String) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let body: CreateBody = parse(&body)?;
    let expected = state.system.feature_names.len();
    if body.features.len() != expected {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("expected {expected} features, found {}", body.features.len()),
        ));
    }
    if body.features.iter().any(|v| !v.is_finite()) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "features must be finite numbers"));
    }
    let id = format!("{:032x}", rand::random::<u128>());
    let session = Session {
        node: 0,
        features: body.features,
        history: Vec::new(),
        finalized: false,
        last_seen: Instant::now(),
    };
    let view = session_view(&state, &id, &session)?;
    state
        .sessions
        .lock()
        .expect("session map")
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    info!("session {id} created");
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_options(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let session = state.session(&id)?;
    let mut s = session.lock().expect("session");
    s.last_seen = Instant::now();
    Ok(Json(session_view(&state, &id, &s)?))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ReportBody {
    Many { reports: Vec<LevelRef> },
    One(LevelRef),
}

async fn report(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: String,
) -> Result<Json<SessionView>, ApiError> {
    let session = state.session(&id)?;
    let body: ReportBody = parse(&body)?;
    let reports = match body {
        ReportBody::Many { reports } => reports,
        ReportBody::One(r) => vec![r],
    };
    let system = &state.system;
    let mut s = session.lock().expect("session");
    s.last_seen = Instant::now();
    if s.finalized {
        return Err(ApiError::new(StatusCode::CONFLICT, "session already finalized"));
    }
    let unavailable = |msg: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg);
    if reports.is_empty() {
        return Err(unavailable("no attribute reported".into()));
    }
    let mut target = system.tree.nodes[s.node].report.clone();
    for r in &reports {
        let a = system
            .schema
            .attribute_index(&r.attribute)
            .ok_or_else(|| unavailable(format!("unknown attribute `{}`", r.attribute)))?;
        let l = system
            .schema
            .level_index(a, &r.level)
            .ok_or_else(|| unavailable(format!("unknown level `{}` of `{}`", r.level, r.attribute)))?;
        if target.0[a].is_some() {
            return Err(unavailable(format!("`{}` is already reported", r.attribute)));
        }
        target = target.with(a, l);
    }
    let Some(next) = system.options(s.node).into_iter().find(|&c| system.tree.nodes[c].report == target) else {
        return Err(unavailable(format!(
            "{} is not an available option",
            system.schema.describe(&target)
        )));
    };
    s.node = next;
    s.history.push(HistoryEntry {
        reports,
        node: next,
        at_ms: now_ms(),
    });
    Ok(Json(session_view(&state, &id, &s)?))
}

async fn finalize(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<FinalView>, ApiError> {
    let session = state.session(&id)?;
    let system = &state.system;
    let mut s = session.lock().expect("session");
    s.last_seen = Instant::now();
    if s.finalized {
        return Err(ApiError::new(StatusCode::CONFLICT, "session already finalized"));
    }
    let prediction = predict(system, &s.features, s.node)?;
    let mut chain = Vec::new();
    let mut v = s.node;
    while let Some(p) = system.tree.nodes[v].parent {
        let node = &system.tree.nodes[v];
        if let Some(c) = &node.certificate {
            chain.push(CertificateStep {
                node: v,
                model_id: node.model_id.clone().unwrap_or_default(),
                gain: GainView::from(c),
                test: c.test.clone(),
                parent_model: c.parent_model.clone(),
            });
        }
        v = p;
    }
    chain.reverse();
    s.finalized = true;
    // Features are no longer needed once the prediction is issued.
    let view = FinalView {
        session_id: id.clone(),
        prediction,
        reported: level_refs(system, &ReportingGroup::root(system.schema.k()), &system.tree.nodes[s.node].report),
        certificates: chain,
    };
    s.features.iter_mut().for_each(|x| *x = 0.0);
    Ok(Json(view))
}

#[derive(Serialize)]
struct PublicNode {
    id: usize,
    parent: Option<usize>,
    children: Vec<usize>,
    label: String,
    report: Vec<Option<LevelRef>>,
    pruned: bool,
    model_id: Option<String>,
    gain: Option<GainView>,
}

async fn public_system(State(state): State<AppState>) -> Json<serde_json::Value> {
    let system = &state.system;
    let attributes = system.schema.attributes();
    let nodes: Vec<PublicNode> = system
        .tree
        .nodes
        .iter()
        .enumerate()
        .map(|(id, n)| PublicNode {
            id,
            parent: n.parent,
            children: n.children.clone(),
            label: system.schema.describe(&n.report),
            report: n
                .report
                .entries()
                .iter()
                .enumerate()
                .map(|(a, e)| {
                    e.map(|l| LevelRef {
                        attribute: attributes[a].name.clone(),
                        level: attributes[a].levels[l].clone(),
                    })
                })
                .collect(),
            pruned: n.pruned,
            model_id: n.model_id.clone(),
            gain: n.certificate.as_ref().map(GainView::from),
        })
        .collect();
    Json(json!({
        "kind": system.kind,
        "metric": system.metric,
        "alpha": system.alpha,
        "groups": system.schema.attributes(),
        "features": system.feature_names,
        "nodes": nodes,
        "provenance": system.provenance,
    }))
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/system", get(public_system))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/options", get(get_options))
        .route("/sessions/{id}/report", post(report))
        .route("/sessions/{id}/finalize", post(finalize))
        .with_state(state)
}

/// Serve until the process is interrupted, sweeping idle sessions once a minute.
pub async fn serve(listener: tokio::net::TcpListener, system: ParticipatorySystem, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(system, config);
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            let removed = sweeper.sweep();
            if removed > 0 {
                info!("expired {removed} idle sessions");
            }
        }
    });
    axum::serve(listener, router(state)).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gain_display_rounds_to_a_tenth() {
        assert_eq!(format_gain(0.215), "+21.5%");
        assert_eq!(format_gain(1.0), "+100.0%");
        assert_eq!(format_gain(-0.0123), "-1.2%");
        assert_eq!(format_gain(0.00004), "+0.0%");
    }
}
