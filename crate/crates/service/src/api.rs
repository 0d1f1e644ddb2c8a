//! HTTP surface over [`Engine`]. Every response body is a JSON object that
//! carries `schema_version`; errors are `{"schema_version", "error": {"code",
//! "message"}}`.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use reflect_core::counterfactual::CounterfactualError;
use reflect_core::schema::{FeatureKind, FeatureSchema};
use reflect_core::session::{Engine, SessionError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

pub const API_VERSION: &str = "reflect-api/1";

#[derive(Debug, Serialize)]
pub struct Envelope<T> {
    pub schema_version: &'static str,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Envelope<T> {
    fn new(body: T) -> Self {
        Envelope {
            schema_version: API_VERSION,
            body,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        use SessionError::*;
        let (status, code) = match &e {
            UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown-session"),
            InvalidCase(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid-case"),
            UnknownTreatment(_) | Counterfactual(CounterfactualError::UnknownTreatment(_)) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "unknown-treatment")
            }
            Counterfactual(CounterfactualError::InvalidDirection(_)) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid-direction")
            }
            Counterfactual(CounterfactualError::InvalidMaxChanges | CounterfactualError::TooManyCandidates(_)) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid-query")
            }
            AlreadyDecided => (StatusCode::CONFLICT, "already-decided"),
            SurveyBeforeDecision => (StatusCode::CONFLICT, "survey-before-decision"),
            AlreadySurveyed => (StatusCode::CONFLICT, "already-surveyed"),
            Scale(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid-survey"),
            Prompt(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid-prompt"),
            NoGenerator => (StatusCode::SERVICE_UNAVAILABLE, "no-generator"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "request failed");
        }
        ApiError::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid-body", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "schema_version": API_VERSION,
            "error": { "code": self.code, "message": self.message },
        });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<Envelope<T>>, ApiError>;

/// Runs a synchronous engine call off the async workers: explanations and
/// LLM requests can take a while and must not stall other sessions.
async fn blocking<T, F>(engine: Arc<Engine>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> Result<T, SessionError> + Send + 'static,
{
    let out = tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(Envelope::new(out)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub case: Map<String, Value>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterfactualRequest {
    pub treatment: String,
    pub direction: String,
    #[serde(default)]
    pub max_changes: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub taxonomy_id: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub treatment: String,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyRequest {
    pub values: Vec<u8>,
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    sessions: usize,
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/schema", get(schema))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/counterfactual", post(counterfactual))
        .route("/sessions/{id}/questions", post(generate_question))
        .route("/sessions/{id}/decision", post(decision))
        .route("/sessions/{id}/survey", post(survey))
        .with_state(engine)
}

async fn health(State(engine): State<Arc<Engine>>) -> Json<Envelope<Health>> {
    Json(Envelope::new(Health {
        status: "ok",
        sessions: engine.session_ids().len(),
    }))
}

async fn schema(State(engine): State<Arc<Engine>>) -> Json<Envelope<Value>> {
    let c = engine.components();
    let mut body = schema_view(c.model.schema());
    body["survey_items"] = json!(c.scale.items);
    body["survey_reverse_scored"] = json!(c.scale.reverse_scored);
    Json(Envelope::new(body))
}

/// JSON description of the features and treatments, for form building.
pub fn schema_view(schema: &FeatureSchema) -> Value {
    let features: Vec<Value> = schema
        .features()
        .iter()
        .map(|f| {
            let mut v = json!({
                "name": f.name,
                "label": f.label,
                "mutable": f.mutable,
            });
            match &f.kind {
                FeatureKind::Numeric { min, max, bins } => {
                    v["kind"] = json!("numeric");
                    v["min"] = json!(min);
                    v["max"] = json!(max);
                    v["bins"] = json!(bins);
                }
                FeatureKind::Categorical { values } => {
                    v["kind"] = json!("categorical");
                    v["values"] = json!(values);
                }
                FeatureKind::Boolean => {
                    v["kind"] = json!("boolean");
                    v["values"] = json!(["no", "yes"]);
                }
            }
            if let Some(t) = f.red_flag_threshold {
                v["red_flag_threshold"] = json!(t);
            }
            v
        })
        .collect();
    json!({ "features": features, "treatments": schema.treatments() })
}

async fn create_session(
    State(engine): State<Arc<Engine>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<Envelope<reflect_core::session::Session>>), ApiError> {
    let Json(req) = body?;
    let created = blocking(engine, move |e| {
        let case = e.parse_case(&req.case)?;
        e.create_session(case, req.seed)
    })
    .await?;
    Ok((StatusCode::CREATED, created))
}

async fn get_session(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
) -> ApiResult<reflect_core::session::Session> {
    blocking(engine, move |e| e.get_session(&id)).await
}

async fn counterfactual(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    body: Result<Json<CounterfactualRequest>, JsonRejection>,
) -> ApiResult<reflect_core::session::CounterfactualOutcome> {
    let Json(req) = body?;
    blocking(engine, move |e| {
        e.query_counterfactual(&id, &req.treatment, &req.direction, req.max_changes)
    })
    .await
}

#[derive(Serialize)]
struct Generated {
    question: reflect_core::questions::Question,
}

async fn generate_question(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    body: Result<Json<GenerateRequest>, JsonRejection>,
) -> ApiResult<Generated> {
    let Json(req) = body?;
    blocking(engine, move |e| {
        e.generate_question(&id, &req.taxonomy_id).map(|question| Generated { question })
    })
    .await
}

async fn decision(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    body: Result<Json<DecisionRequest>, JsonRejection>,
) -> ApiResult<reflect_core::session::Decision> {
    let Json(req) = body?;
    blocking(engine, move |e| e.record_decision(&id, &req.treatment, &req.rationale)).await
}

async fn survey(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    body: Result<Json<SurveyRequest>, JsonRejection>,
) -> ApiResult<reflect_core::engagement::EngagementScore> {
    let Json(req) = body?;
    blocking(engine, move |e| e.submit_survey(&id, req.values)).await
}
