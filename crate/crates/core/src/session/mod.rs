//! Decision sessions: a patient case with its prediction, explanation and
//! questions, the counterfactual queries made against it, the decision and
//! the engagement survey. Every step is appended to an [`EventLog`].

pub mod events;
pub mod replay;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counterfactual::{search_with, CounterfactualError, CounterfactualQuery, Direction, SearchConfig};
use crate::engagement::{default_scale, score, EngagementResponse, EngagementScore, ScaleDefinition, ScaleError};
use crate::explainer::{explain_with, ExplainError, ExplainerConfig, Explanation};
use crate::model::{predict, ModelError, Prediction, Predictor, ReferenceModel};
use crate::questions::{
    build_prompt, question_set, resolve_completion, CounterfactualSlot, FallbackReason, GenerationError, Grounding,
    Lexicon, LlmError, PromptError, Question, QuestionCatalog, QuestionSetError, TextGenerator,
};
use crate::schema::{CaseError, PatientCase};
pub use events::{parse_log, EventKind, EventLog, EventRecord, LogError, LOG_VERSION};
pub use replay::{replay, Mismatch, ReplayReport};

pub const DEFAULT_N_SAMPLES: usize = 5000;
pub const DEFAULT_SEED: u64 = 42;

/// Everything needed to recompute a session's payloads.
#[derive(Clone)]
pub struct Components {
    pub model: Arc<dyn Predictor>,
    pub catalog: QuestionCatalog,
    pub lexicon: Lexicon,
    pub scale: ScaleDefinition,
}

impl Components {
    pub fn new(model: Arc<dyn Predictor>, catalog: QuestionCatalog, scale: ScaleDefinition) -> Self {
        let lexicon = Lexicon::new(model.schema(), &catalog.grounding);
        Components {
            model,
            catalog,
            lexicon,
            scale,
        }
    }

    /// Reference model, built-in question catalog and default scale.
    pub fn reference() -> Self {
        Self::new(Arc::new(ReferenceModel::reference()), QuestionCatalog::builtin(), default_scale())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub n_samples: usize,
    /// Seed for sessions created without one.
    pub seed: u64,
    pub explainer: ExplainerConfig,
    pub search: SearchConfig,
    /// Direction of the counterfactual behind the initial Q9 question.
    pub default_direction: Direction,
    pub max_changes: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            n_samples: DEFAULT_N_SAMPLES,
            seed: DEFAULT_SEED,
            explainer: ExplainerConfig::default(),
            search: SearchConfig::default(),
            default_direction: Direction::Increase,
            max_changes: crate::counterfactual::DEFAULT_MAX_CHANGES,
        }
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session '{0}'")]
    UnknownSession(String),
    #[error("invalid case: {0}")]
    InvalidCase(#[from] CaseError),
    #[error("unknown treatment '{0}'")]
    UnknownTreatment(String),
    #[error("a decision was already recorded for this session")]
    AlreadyDecided,
    #[error("the survey can only be submitted after a decision")]
    SurveyBeforeDecision,
    #[error("a survey was already submitted for this session")]
    AlreadySurveyed,
    #[error("no text generator is configured")]
    NoGenerator,
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Counterfactual(#[from] CounterfactualError),
    #[error(transparent)]
    Questions(#[from] QuestionSetError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Log(#[from] LogError),
}

// Event payloads. Replay deserializes the input kinds and compares the
// computed kinds as JSON values.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseCreated {
    pub case: serde_json::Map<String, serde_json::Value>,
    pub seed: u64,
    pub n_samples: usize,
    pub explainer: ExplainerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfQueryPayload {
    pub query: CounterfactualQuery,
    pub min_effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfResultPayload {
    pub result: Option<crate::counterfactual::CounterfactualResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionsPayload {
    pub questions: Vec<Question>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRawPayload {
    pub completion: Option<String>,
    pub error: Option<LlmError>,
}

impl LlmRawPayload {
    pub fn as_result(&self) -> Result<String, LlmError> {
        match (&self.completion, &self.error) {
            (_, Some(e)) => Err(e.clone()),
            (Some(text), None) => Ok(text.clone()),
            (None, None) => Ok(String::new()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictPayload {
    pub verdict: Option<Grounding>,
    pub fallback: Option<FallbackReason>,
    pub question: Question,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub treatment: String,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyPayload {
    pub values: Vec<u8>,
    pub score: EngagementScore,
}

/// Current state of one session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Session {
    pub id: String,
    pub case: serde_json::Map<String, serde_json::Value>,
    pub seed: u64,
    /// Number of records this session has appended so far.
    pub log_offset: u64,
    pub prediction: Prediction,
    pub explanation: Explanation,
    pub counterfactual: CounterfactualSlot,
    pub questions: Vec<Question>,
    pub generated: Vec<Question>,
    pub decision: Option<Decision>,
    pub survey: Option<EngagementResponse>,
    pub survey_score: Option<EngagementScore>,
    #[serde(skip)]
    patient: PatientCase,
}

/// Outcome of a counterfactual query: the slot and the re-rendered Q9.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualOutcome {
    pub counterfactual: CounterfactualSlot,
    pub question: Question,
}

pub struct Engine {
    components: Components,
    config: EngineConfig,
    generator: Option<Arc<dyn TextGenerator>>,
    log: EventLog,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl Engine {
    pub fn new(components: Components, config: EngineConfig, log: EventLog) -> Self {
        Engine {
            components,
            config,
            generator: None,
            log,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn with_generator(mut self, generator: Arc<dyn TextGenerator>) -> Self {
        self.generator = Some(generator);
        self
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    /// Builds a case from a name → value object against the model schema.
    pub fn parse_case(&self, named: &serde_json::Map<String, serde_json::Value>) -> Result<PatientCase, CaseError> {
        self.components.model.schema().case_from_named(named)
    }

    fn append<T: Serialize>(&self, session: &mut Session, kind: EventKind, payload: &T) -> Result<(), SessionError> {
        let record = EventRecord {
            v: LOG_VERSION,
            session: session.id.clone(),
            seq: session.log_offset,
            kind,
            ts: Utc::now(),
            payload: serde_json::to_value(payload).map_err(LogError::from)?,
        };
        self.log.append(&record)?;
        session.log_offset += 1;
        Ok(())
    }

    pub fn create_session(&self, case: PatientCase, seed: Option<u64>) -> Result<Session, SessionError> {
        let c = &self.components;
        let schema = c.model.schema();
        schema.validate_case(&case)?;
        let seed = seed.unwrap_or(self.config.seed);
        let prediction = predict(c.model.as_ref(), &case)?;
        let explanation = explain_with(
            c.model.as_ref(),
            &case,
            &prediction.top_treatment,
            self.config.n_samples,
            seed,
            &self.config.explainer,
        )?;
        let query = CounterfactualQuery {
            treatment: prediction.top_treatment.clone(),
            direction: self.config.default_direction,
            max_changes: self.config.max_changes,
        };
        let slot = CounterfactualSlot {
            result: search_with(c.model.as_ref(), &case, &query, &self.config.search)?,
            min_effect: self.config.search.min_effect,
            query,
        };
        let questions = question_set(&c.catalog, c.model.as_ref(), &case, &prediction, &explanation, &slot)?;

        let mut session = Session {
            id: uuid::Uuid::new_v4().simple().to_string(),
            case: schema.case_to_named(&case),
            seed,
            log_offset: 0,
            prediction,
            explanation,
            counterfactual: slot,
            questions,
            generated: Vec::new(),
            decision: None,
            survey: None,
            survey_score: None,
            patient: case,
        };
        let created = CaseCreated {
            case: session.case.clone(),
            seed,
            n_samples: self.config.n_samples,
            explainer: self.config.explainer,
        };
        self.append(&mut session, EventKind::CaseCreated, &created)?;
        let (prediction, explanation) = (session.prediction.clone(), session.explanation.clone());
        self.append(&mut session, EventKind::Prediction, &prediction)?;
        self.append(&mut session, EventKind::Explanation, &explanation)?;
        self.log_counterfactual(&mut session)?;

        self.sessions
            .write()
            .expect("session map lock")
            .insert(session.id.clone(), Arc::new(Mutex::new(session.clone())));
        tracing::info!(session = %session.id, top = %session.prediction.top_treatment, "session created");
        Ok(session)
    }

    fn log_counterfactual(&self, session: &mut Session) -> Result<(), SessionError> {
        let query = CfQueryPayload {
            query: session.counterfactual.query.clone(),
            min_effect: session.counterfactual.min_effect,
        };
        self.append(session, EventKind::CfQuery, &query)?;
        let result = CfResultPayload {
            result: session.counterfactual.result.clone(),
        };
        self.append(session, EventKind::CfResult, &result)?;
        let questions = QuestionsPayload {
            questions: session.questions.clone(),
        };
        self.append(session, EventKind::Questions, &questions)
    }

    fn handle(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn get_session(&self, id: &str) -> Result<Session, SessionError> {
        Ok(self.handle(id)?.lock().expect("session lock").clone())
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("session map lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Runs a counterfactual search, logs it and re-renders the question set.
    pub fn query_counterfactual(
        &self,
        id: &str,
        treatment: &str,
        direction: &str,
        max_changes: Option<usize>,
    ) -> Result<CounterfactualOutcome, SessionError> {
        let handle = self.handle(id)?;
        let mut session = handle.lock().expect("session lock");
        let direction: Direction = direction.parse()?;
        let c = &self.components;
        if c.model.schema().treatment_index(treatment).is_none() {
            return Err(SessionError::UnknownTreatment(treatment.to_string()));
        }
        let query = CounterfactualQuery {
            treatment: treatment.to_string(),
            direction,
            max_changes: max_changes.unwrap_or(self.config.max_changes),
        };
        let result = search_with(c.model.as_ref(), &session.patient, &query, &self.config.search)?;
        let slot = CounterfactualSlot {
            query,
            min_effect: self.config.search.min_effect,
            result,
        };
        let questions = question_set(
            &c.catalog,
            c.model.as_ref(),
            &session.patient,
            &session.prediction,
            &session.explanation,
            &slot,
        )?;
        session.counterfactual = slot;
        session.questions = questions;
        self.log_counterfactual(&mut session)?;
        let question = session
            .questions
            .iter()
            .find(|q| q.taxonomy_id == "Q9")
            .cloned()
            .expect("question set has a Q9 slot");
        Ok(CounterfactualOutcome {
            counterfactual: session.counterfactual.clone(),
            question,
        })
    }

    /// Asks the text generator for a question of `taxonomy_id`, falling back
    /// to the template question when the completion is unusable.
    pub fn generate_question(&self, id: &str, taxonomy_id: &str) -> Result<Question, SessionError> {
        let generator = self.generator.clone().ok_or(SessionError::NoGenerator)?;
        let handle = self.handle(id)?;
        let mut session = handle.lock().expect("session lock");
        let c = &self.components;
        let prompt = build_prompt(
            &c.catalog,
            c.model.schema(),
            &session.prediction,
            &session.explanation,
            taxonomy_id,
        )?;
        self.append(&mut session, EventKind::LlmPrompt, &prompt)?;
        let completion = generator.complete(&prompt.text);
        let raw = match &completion {
            Ok(text) => LlmRawPayload {
                completion: Some(text.clone()),
                error: None,
            },
            Err(e) => LlmRawPayload {
                completion: None,
                error: Some(e.clone()),
            },
        };
        self.append(&mut session, EventKind::LlmRaw, &raw)?;
        let outcome = resolve_completion(&prompt, completion, &c.catalog, &c.lexicon)?;
        let verdict = VerdictPayload {
            verdict: outcome.verdict,
            fallback: outcome.fallback,
            question: outcome.question,
        };
        self.append(&mut session, EventKind::GroundingVerdict, &verdict)?;
        session.generated.push(verdict.question.clone());
        Ok(verdict.question)
    }

    pub fn record_decision(&self, id: &str, treatment: &str, rationale: &str) -> Result<Decision, SessionError> {
        let handle = self.handle(id)?;
        let mut session = handle.lock().expect("session lock");
        if session.decision.is_some() {
            return Err(SessionError::AlreadyDecided);
        }
        if self.components.model.schema().treatment_index(treatment).is_none() {
            return Err(SessionError::UnknownTreatment(treatment.to_string()));
        }
        let decision = Decision {
            treatment: treatment.to_string(),
            rationale: rationale.to_string(),
        };
        self.append(&mut session, EventKind::Decision, &decision)?;
        session.decision = Some(decision.clone());
        Ok(decision)
    }

    pub fn submit_survey(&self, id: &str, values: Vec<u8>) -> Result<EngagementScore, SessionError> {
        let handle = self.handle(id)?;
        let mut session = handle.lock().expect("session lock");
        if session.decision.is_none() {
            return Err(SessionError::SurveyBeforeDecision);
        }
        if session.survey.is_some() {
            return Err(SessionError::AlreadySurveyed);
        }
        let result = score(&self.components.scale, &values)?;
        let payload = SurveyPayload {
            values: values.clone(),
            score: result.clone(),
        };
        self.append(&mut session, EventKind::Survey, &payload)?;
        let timestamp: DateTime<Utc> = Utc::now();
        session.survey = Some(EngagementResponse {
            session_id: session.id.clone(),
            values,
            timestamp,
        });
        session.survey_score = Some(result.clone());
        Ok(result)
    }
}
