//! The five questions shown alongside a prediction, rendered from live
//! values: data-point relevance (Q10), data clarification (Q1), confidence
//! (Q6), initial judgement (Q6) and the counterfactual what-if (Q9).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::template::{render_template, TemplateError};
use super::{Question, QuestionCatalog};
use crate::counterfactual::{CounterfactualQuery, CounterfactualResult, Direction};
use crate::explainer::Explanation;
use crate::format::{join_list, number, percent};
use crate::model::{ModelError, Prediction, Predictor};
use crate::schema::{FeatureKind, FeatureSchema, FeatureValue, PatientCase};

pub const SET_SIZE: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuestionSetError {
    #[error("explanation is for '{explained}' but the prediction's top treatment is '{top}'")]
    Inconsistent { explained: String, top: String },
    #[error("question-set slot refers to '{0}', which is missing or of the wrong kind in the schema")]
    Slot(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The counterfactual query behind the Q9 slot and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualSlot {
    pub query: CounterfactualQuery,
    pub min_effect: f64,
    pub result: Option<CounterfactualResult>,
}

type Inputs = BTreeMap<String, String>;

fn inputs<const N: usize>(pairs: [(&str, String); N]) -> Inputs {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn treatment_label(schema: &FeatureSchema, id: &str) -> String {
    schema.treatment_label(id).unwrap_or(id).to_string()
}

fn display_value(value: &FeatureValue) -> String {
    match value {
        FeatureValue::Number(x) => number(*x),
        other => other.to_string(),
    }
}

pub fn question_set(
    catalog: &QuestionCatalog,
    model: &dyn Predictor,
    case: &PatientCase,
    prediction: &Prediction,
    explanation: &Explanation,
    counterfactual: &CounterfactualSlot,
) -> Result<Vec<Question>, QuestionSetError> {
    if explanation.treatment != prediction.top_treatment {
        return Err(QuestionSetError::Inconsistent {
            explained: explanation.treatment.clone(),
            top: prediction.top_treatment.clone(),
        });
    }
    let schema = model.schema();
    schema.validate_case(case).map_err(ModelError::from)?;
    let render = |id: &str, inputs: Inputs| -> Result<Question, QuestionSetError> {
        Ok(render_template(catalog.template(id)?, &inputs)?)
    };

    Ok(vec![
        {
            let (id, inputs) = data_point_inputs(catalog, model, case)?;
            render(id, inputs)?
        },
        {
            let (id, inputs) = clarification_inputs(catalog, model, case)?;
            render(id, inputs)?
        },
        render(
            "q6_confidence",
            inputs([
                ("treatment", treatment_label(schema, &prediction.top_treatment)),
                ("p", percent(prediction.top_probability())),
                ("conf", percent(prediction.confidence)),
            ]),
        )?,
        render("q6_judgement", Inputs::new())?,
        {
            let (id, inputs) = counterfactual_inputs(schema, counterfactual)?;
            render(id, inputs)?
        },
    ])
}

// Q10: the red-flag feature, its threshold and the treatment whose
// probability moves most across that feature's range.
fn data_point_inputs(
    catalog: &QuestionCatalog,
    model: &dyn Predictor,
    case: &PatientCase,
) -> Result<(&'static str, Inputs), QuestionSetError> {
    let schema = model.schema();
    let name = &catalog.slots.red_flag_feature;
    let slot_err = || QuestionSetError::Slot(name.clone());
    let idx = schema.feature_index(name).ok_or_else(slot_err)?;
    let spec = &schema.features()[idx];
    let (FeatureKind::Numeric { min, max, .. }, Some(threshold)) = (&spec.kind, spec.red_flag_threshold) else {
        return Err(slot_err());
    };
    let value = case.values[idx].as_number().ok_or_else(slot_err)?;

    let low = model.responder_probabilities(&case.with_value(idx, FeatureValue::Number(*min)))?;
    let high = model.responder_probabilities(&case.with_value(idx, FeatureValue::Number(*max)))?;
    let mut best = 0;
    for t in 1..low.len() {
        if (high[t] - low[t]).abs() > (high[best] - low[best]).abs() {
            best = t;
        }
    }
    let template = if value < threshold {
        "q10_approaching_threshold"
    } else {
        "q10_past_threshold"
    };
    Ok((
        template,
        inputs([
            ("age", number(value)),
            ("threshold", number(threshold)),
            ("corr_feature", spec.label.clone()),
            ("effect", schema.treatments()[best].label.clone()),
        ]),
    ))
}

// Q1: how much each non-baseline surgery-history level lowers the
// configured treatment's probability for this case, in percentage points.
fn clarification_inputs(
    catalog: &QuestionCatalog,
    model: &dyn Predictor,
    case: &PatientCase,
) -> Result<(&'static str, Inputs), QuestionSetError> {
    let schema = model.schema();
    let slots = &catalog.slots;
    let idx = schema
        .feature_index(&slots.surgery_feature)
        .ok_or_else(|| QuestionSetError::Slot(slots.surgery_feature.clone()))?;
    let spec = &schema.features()[idx];
    let FeatureKind::Categorical { values } = &spec.kind else {
        return Err(QuestionSetError::Slot(slots.surgery_feature.clone()));
    };
    if !values.contains(&slots.surgery_baseline) {
        return Err(QuestionSetError::Slot(slots.surgery_baseline.clone()));
    }
    let t_idx = schema
        .treatment_index(&slots.surgery_treatment)
        .ok_or_else(|| QuestionSetError::Slot(slots.surgery_treatment.clone()))?;

    let p_at = |level: &str| model.responder_probability(&case.with_value(idx, FeatureValue::Level(level.to_string())), t_idx);
    let baseline = p_at(&slots.surgery_baseline)?;
    let mut reductions = values
        .iter()
        .filter(|v| **v != slots.surgery_baseline)
        .map(|v| p_at(v).map(|p| baseline - p))
        .collect::<Result<Vec<f64>, _>>()?;
    reductions.sort_by(f64::total_cmp);

    let template = if case.values[idx] == FeatureValue::Level(slots.surgery_baseline.clone()) {
        "q1_no_previous_surgery"
    } else {
        "q1_previous_surgery"
    };
    Ok((
        template,
        inputs([
            ("treatment", schema.treatments()[t_idx].label.clone()),
            ("low", percent(reductions.first().copied().unwrap_or(0.0))),
            ("high", percent(reductions.last().copied().unwrap_or(0.0))),
        ]),
    ))
}

fn counterfactual_inputs(
    schema: &FeatureSchema,
    slot: &CounterfactualSlot,
) -> Result<(&'static str, Inputs), QuestionSetError> {
    let Some(result) = &slot.result else {
        return Ok((
            "q9_none",
            inputs([
                ("max_changes", slot.query.max_changes.to_string()),
                ("direction", slot.query.direction.to_string()),
                ("treatment", treatment_label(schema, &slot.query.treatment)),
                ("min_effect", percent(slot.min_effect)),
            ]),
        ));
    };
    let label = |name: &str| {
        schema
            .feature(name)
            .map(|f| f.label.clone())
            .ok_or_else(|| QuestionSetError::Slot(name.to_string()))
    };
    let mut base = inputs([
        ("treatment", treatment_label(schema, &result.treatment)),
        ("delta", percent(result.delta.abs())),
        ("old", percent(result.old_p)),
        ("new", percent(result.new_p)),
    ]);
    let increase = result.direction == Direction::Increase;
    if let [change] = result.changed.as_slice() {
        base.insert("feature".into(), label(&change.feature)?);
        base.insert("from".into(), display_value(&change.old));
        base.insert("to".into(), display_value(&change.new));
        Ok((if increase { "q9_single_increase" } else { "q9_single_decrease" }, base))
    } else {
        let phrases = result
            .changed
            .iter()
            .map(|c| {
                Ok(format!(
                    "{} from '{}' (current) to '{}'",
                    label(&c.feature)?,
                    display_value(&c.old),
                    display_value(&c.new)
                ))
            })
            .collect::<Result<Vec<_>, QuestionSetError>>()?;
        base.insert("changes".into(), join_list(&phrases));
        Ok((if increase { "q9_multi_increase" } else { "q9_multi_decrease" }, base))
    }
}
