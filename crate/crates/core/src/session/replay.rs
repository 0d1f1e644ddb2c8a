//! Log verification: recomputes every derived payload from the logged
//! inputs and seeds and compares it with what was logged.
//!
//! Input records (`case_created`, `cf_query`, `llm_raw`, `decision`) are
//! taken as given. Derived records are recomputed; LLM completions come from
//! the `llm_raw` records, never from an endpoint.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use super::events::{parse_log, EventKind, EventRecord, LogError};
use super::{
    CaseCreated, CfQueryPayload, CfResultPayload, Components, LlmRawPayload, QuestionsPayload, SurveyPayload,
    VerdictPayload,
};
use crate::counterfactual::{search_with, SearchConfig};
use crate::engagement::score;
use crate::explainer::{explain_with, Explanation};
use crate::model::{predict, Prediction};
use crate::questions::{build_prompt, question_set, resolve_completion, CounterfactualSlot, PromptSpec};
use crate::schema::PatientCase;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub session: String,
    pub seq: u64,
    pub kind: EventKind,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReplayReport {
    pub records: usize,
    pub sessions: usize,
    /// Derived records whose payload was recomputed.
    pub verified: usize,
    pub matched: usize,
    pub mismatches: Vec<Mismatch>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

#[derive(Default)]
struct State {
    next_seq: u64,
    case: Option<PatientCase>,
    created: Option<CaseCreated>,
    prediction: Option<Prediction>,
    explanation: Option<Explanation>,
    slot: Option<CounterfactualSlot>,
    prompt: Option<PromptSpec>,
    raw: Option<LlmRawPayload>,
}

/// Path of the first difference between two JSON values, or `None`.
fn first_difference(expected: &Value, actual: &Value, path: String) -> Option<String> {
    match (expected, actual) {
        (Value::Object(a), Value::Object(b)) => {
            for key in a.keys().chain(b.keys().filter(|k| !a.contains_key(*k))) {
                match (a.get(key), b.get(key)) {
                    (Some(x), Some(y)) => {
                        if let Some(p) = first_difference(x, y, format!("{path}/{key}")) {
                            return Some(p);
                        }
                    }
                    _ => return Some(format!("{path}/{key}")),
                }
            }
            None
        }
        (Value::Array(a), Value::Array(b)) => {
            if a.len() != b.len() {
                return Some(format!("{path} (length {} vs {})", a.len(), b.len()));
            }
            a.iter()
                .zip(b)
                .enumerate()
                .find_map(|(i, (x, y))| first_difference(x, y, format!("{path}/{i}")))
        }
        _ => (expected != actual).then(|| {
            let at = if path.is_empty() { "/".to_string() } else { path };
            format!("{at}: logged {actual}, recomputed {expected}")
        }),
    }
}

struct Replayer<'a> {
    components: &'a Components,
    report: ReplayReport,
}

impl Replayer<'_> {
    fn fail(&mut self, record: &EventRecord, detail: impl Into<String>) {
        self.report.mismatches.push(Mismatch {
            session: record.session.clone(),
            seq: record.seq,
            kind: record.kind,
            detail: detail.into(),
        });
    }

    fn compare<T: Serialize>(&mut self, record: &EventRecord, recomputed: &T) {
        self.report.verified += 1;
        let expected = match serde_json::to_value(recomputed) {
            Ok(v) => v,
            Err(e) => return self.fail(record, format!("cannot encode recomputed payload: {e}")),
        };
        match first_difference(&expected, &record.payload, String::new()) {
            None => self.report.matched += 1,
            Some(path) => self.fail(record, format!("payload differs at {path}")),
        }
    }

    fn input<T: serde::de::DeserializeOwned>(&mut self, record: &EventRecord) -> Option<T> {
        match serde_json::from_value(record.payload.clone()) {
            Ok(v) => Some(v),
            Err(e) => {
                self.fail(record, format!("unreadable payload: {e}"));
                None
            }
        }
    }

    fn step(&mut self, state: &mut State, record: &EventRecord) -> Result<(), String> {
        let c = self.components;
        let model = c.model.as_ref();
        let need = |what: &str| format!("no {what} logged before this record");
        match record.kind {
            EventKind::CaseCreated => {
                let Some(created) = self.input::<CaseCreated>(record) else {
                    return Ok(());
                };
                let case = model.schema().case_from_named(&created.case).map_err(|e| e.to_string())?;
                state.case = Some(case);
                state.created = Some(created);
            }
            EventKind::Prediction => {
                let case = state.case.as_ref().ok_or_else(|| need("case"))?;
                let p = predict(model, case).map_err(|e| e.to_string())?;
                self.compare(record, &p);
                state.prediction = Some(p);
            }
            EventKind::Explanation => {
                let case = state.case.as_ref().ok_or_else(|| need("case"))?;
                let created = state.created.as_ref().ok_or_else(|| need("case"))?;
                let top = &state.prediction.as_ref().ok_or_else(|| need("prediction"))?.top_treatment;
                let e = explain_with(model, case, top, created.n_samples, created.seed, &created.explainer)
                    .map_err(|e| e.to_string())?;
                self.compare(record, &e);
                state.explanation = Some(e);
            }
            EventKind::CfQuery => {
                if let Some(q) = self.input::<CfQueryPayload>(record) {
                    state.slot = Some(CounterfactualSlot {
                        query: q.query,
                        min_effect: q.min_effect,
                        result: None,
                    });
                }
            }
            EventKind::CfResult => {
                let case = state.case.as_ref().ok_or_else(|| need("case"))?;
                let slot = state.slot.as_mut().ok_or_else(|| need("counterfactual query"))?;
                let config = SearchConfig {
                    min_effect: slot.min_effect,
                    parallel: false,
                };
                slot.result = search_with(model, case, &slot.query, &config).map_err(|e| e.to_string())?;
                let payload = CfResultPayload {
                    result: slot.result.clone(),
                };
                self.compare(record, &payload);
            }
            EventKind::Questions => {
                let case = state.case.as_ref().ok_or_else(|| need("case"))?;
                let prediction = state.prediction.as_ref().ok_or_else(|| need("prediction"))?;
                let explanation = state.explanation.as_ref().ok_or_else(|| need("explanation"))?;
                let slot = state.slot.as_ref().ok_or_else(|| need("counterfactual result"))?;
                let questions = question_set(&c.catalog, model, case, prediction, explanation, slot)
                    .map_err(|e| e.to_string())?;
                self.compare(record, &QuestionsPayload { questions });
            }
            EventKind::LlmPrompt => {
                let prediction = state.prediction.as_ref().ok_or_else(|| need("prediction"))?;
                let explanation = state.explanation.as_ref().ok_or_else(|| need("explanation"))?;
                let taxonomy_id = record
                    .payload
                    .get("taxonomy_id")
                    .and_then(Value::as_str)
                    .ok_or("prompt record has no taxonomy_id")?;
                let prompt = build_prompt(&c.catalog, model.schema(), prediction, explanation, taxonomy_id)
                    .map_err(|e| e.to_string())?;
                self.compare(record, &prompt);
                state.prompt = Some(prompt);
                state.raw = None;
            }
            EventKind::LlmRaw => {
                state.raw = self.input::<LlmRawPayload>(record);
            }
            EventKind::GroundingVerdict => {
                let prompt = state.prompt.as_ref().ok_or_else(|| need("prompt"))?;
                let raw = state.raw.take().ok_or_else(|| need("completion"))?;
                let outcome = resolve_completion(prompt, raw.as_result(), &c.catalog, &c.lexicon)
                    .map_err(|e| e.to_string())?;
                self.compare(
                    record,
                    &VerdictPayload {
                        verdict: outcome.verdict,
                        fallback: outcome.fallback,
                        question: outcome.question,
                    },
                );
            }
            EventKind::Decision => {}
            EventKind::Survey => {
                let values = record
                    .payload
                    .get("values")
                    .cloned()
                    .and_then(|v| serde_json::from_value::<Vec<u8>>(v).ok())
                    .ok_or("survey record has no readable values")?;
                let result = score(&c.scale, &values).map_err(|e| e.to_string())?;
                self.compare(record, &SurveyPayload { values, score: result });
            }
        }
        Ok(())
    }
}

/// Replays a log text against `components`.
pub fn replay(text: &str, components: &Components) -> Result<ReplayReport, LogError> {
    let records = parse_log(text)?;
    let mut states: BTreeMap<String, State> = BTreeMap::new();
    let mut replayer = Replayer {
        components,
        report: ReplayReport {
            records: records.len(),
            ..ReplayReport::default()
        },
    };
    for record in &records {
        let state = states.entry(record.session.clone()).or_default();
        if record.seq != state.next_seq {
            let detail = format!("sequence gap: expected {}, found {}", state.next_seq, record.seq);
            replayer.fail(record, detail);
        }
        state.next_seq = record.seq + 1;
        if record.seq == 0 && record.kind != EventKind::CaseCreated {
            replayer.fail(record, "session does not start with case_created");
        }
        if let Err(detail) = replayer.step(state, record) {
            replayer.fail(record, detail);
        }
    }
    replayer.report.sessions = states.len();
    Ok(replayer.report)
}
