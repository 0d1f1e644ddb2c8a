//! Prompt construction for LLM-generated questions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::catalog::{QuestionCatalog, Requirement};
use super::template::{QuestionTemplate, TemplateError, TemplateSpec};
use crate::explainer::{negative_features, positive_features, Explanation};
use crate::format::join_list;
use crate::model::Prediction;
use crate::schema::FeatureSchema;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("no prompt pattern configured for taxonomy id '{0}'")]
    NoPattern(String),
    #[error("explanation is for '{explained}' but the prediction's top treatment is '{top}'")]
    ExplanationMismatch { explained: String, top: String },
    #[error("taxonomy id '{taxonomy_id}' needs {requirement:?} feature contributions, none available")]
    MissingEvidence {
        taxonomy_id: String,
        requirement: Requirement,
    },
    #[error("feature '{0}' is not part of the schema")]
    UnknownFeature(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub taxonomy_id: String,
    /// Top treatment id and its display label.
    pub prediction: String,
    pub prediction_label: String,
    /// Schema feature names, strongest first.
    pub positive_features: Vec<String>,
    pub negative_features: Vec<String>,
    pub instruction: String,
    pub length_constraint: String,
    pub text: String,
    pub fallback_template: String,
    pub fallback_inputs: BTreeMap<String, String>,
}

fn labels(schema: &FeatureSchema, names: &[String]) -> Result<Vec<String>, PromptError> {
    names
        .iter()
        .map(|n| {
            schema
                .feature(n)
                .map(|f| f.label.clone())
                .ok_or_else(|| PromptError::UnknownFeature(n.clone()))
        })
        .collect()
}

pub fn build_prompt(
    catalog: &QuestionCatalog,
    schema: &FeatureSchema,
    prediction: &Prediction,
    explanation: &Explanation,
    taxonomy_id: &str,
) -> Result<PromptSpec, PromptError> {
    let cfg = &catalog.prompt;
    let entry = cfg
        .instructions
        .get(taxonomy_id)
        .ok_or_else(|| PromptError::NoPattern(taxonomy_id.to_string()))?;
    if explanation.treatment != prediction.top_treatment {
        return Err(PromptError::ExplanationMismatch {
            explained: explanation.treatment.clone(),
            top: prediction.top_treatment.clone(),
        });
    }

    let take = |cs: Vec<&crate::explainer::FeatureContribution>| -> Vec<String> {
        cs.into_iter()
            .take(cfg.max_features_per_side)
            .map(|c| c.feature.clone())
            .collect()
    };
    let positive = take(positive_features(explanation));
    let negative = take(negative_features(explanation));
    let satisfied = match entry.requires {
        Requirement::Any => !positive.is_empty() || !negative.is_empty(),
        Requirement::Negative => !negative.is_empty(),
        Requirement::Positive => !positive.is_empty(),
    };
    if !satisfied {
        return Err(PromptError::MissingEvidence {
            taxonomy_id: taxonomy_id.to_string(),
            requirement: entry.requires,
        });
    }

    let positive_labels = labels(schema, &positive)?;
    let negative_labels = labels(schema, &negative)?;
    let list = |ls: &[String]| {
        if ls.is_empty() {
            cfg.empty_list.clone()
        } else {
            join_list(ls)
        }
    };
    let prediction_label = schema
        .treatment_label(&prediction.top_treatment)
        .unwrap_or(&prediction.top_treatment)
        .to_string();
    let top_label = explanation
        .contributions
        .iter()
        .find(|c| c.weight != 0.0)
        .and_then(|c| schema.feature(&c.feature))
        .map(|f| f.label.clone())
        .unwrap_or_default();
    let instruction = entry.instruction.replace("{top_feature}", &top_label);

    let pattern = QuestionTemplate::new(TemplateSpec {
        id: format!("prompt-{taxonomy_id}"),
        taxonomy_id: taxonomy_id.to_string(),
        pattern: cfg.pattern.clone(),
        required_inputs: [
            "prediction",
            "positive_features",
            "negative_features",
            "instruction",
            "length_constraint",
        ]
        .map(String::from)
        .to_vec(),
    })?;
    let text = pattern.substitute(&BTreeMap::from([
        ("prediction".to_string(), prediction_label.clone()),
        ("positive_features".to_string(), list(&positive_labels)),
        ("negative_features".to_string(), list(&negative_labels)),
        ("instruction".to_string(), instruction.clone()),
        ("length_constraint".to_string(), cfg.length_constraint.clone()),
    ]))?;

    let fallback = catalog.template(&entry.fallback_template)?;
    let mut fallback_inputs = BTreeMap::new();
    for input in fallback.required_inputs() {
        let value = match input.as_str() {
            "treatment" => prediction_label.clone(),
            "feature" => top_label.clone(),
            "features" => list(&negative_labels),
            "positive_features" => list(&positive_labels),
            other => {
                return Err(TemplateError::MissingInput {
                    template: fallback.id().to_string(),
                    input: other.to_string(),
                }
                .into())
            }
        };
        fallback_inputs.insert(input.clone(), value);
    }

    Ok(PromptSpec {
        taxonomy_id: taxonomy_id.to_string(),
        prediction: prediction.top_treatment.clone(),
        prediction_label,
        positive_features: positive,
        negative_features: negative,
        instruction,
        length_constraint: cfg.length_constraint.clone(),
        text,
        fallback_template: entry.fallback_template.clone(),
        fallback_inputs,
    })
}
