//! Question catalog loading (`reflect-questions/1`, TOML).

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::template::{QuestionTemplate, TemplateError, TemplateSpec};
use super::QuestionError;

pub const CATALOG_FORMAT: &str = "reflect-questions/1";
pub const DEFAULT_CATALOG: &str = include_str!("../../config/questions.toml");
pub const TAXONOMY_SIZE: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("parse failure: {0}")]
    Parse(String),
    #[error("unsupported format '{0}'")]
    Format(String),
    #[error("taxonomy must have exactly {TAXONOMY_SIZE} entries Q1..Q10, found {0:?}")]
    Taxonomy(Vec<String>),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("duplicate template id '{0}'")]
    DuplicateTemplate(String),
    #[error("template '{template}' refers to unknown taxonomy id '{taxonomy_id}'")]
    TemplateTaxonomy { template: String, taxonomy_id: String },
    #[error("'{0}' refers to a template that does not exist")]
    MissingTemplate(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyEntry {
    pub id: String,
    pub dimension: String,
    pub description: String,
    #[serde(default, rename = "templates")]
    pub template_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Requirement {
    /// At least one non-zero contribution.
    Any,
    /// At least one negative contribution.
    Negative,
    /// At least one positive contribution.
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptInstruction {
    pub instruction: String,
    pub requires: Requirement,
    pub fallback_template: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptConfig {
    pub pattern: String,
    pub length_constraint: String,
    pub max_features_per_side: usize,
    pub empty_list: String,
    #[serde(default)]
    pub instructions: BTreeMap<String, PromptInstruction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundingConfig {
    pub max_chars: usize,
    #[serde(default)]
    pub blocklist: Vec<String>,
    /// Extra lexicon terms keyed by feature name or treatment id.
    #[serde(default)]
    pub synonyms: BTreeMap<String, Vec<String>>,
    /// Terms that refer to the model output rather than to a feature, such
    /// as "prediction". They ground a question on their own.
    #[serde(default)]
    pub vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotConfig {
    pub red_flag_feature: String,
    pub surgery_feature: String,
    pub surgery_baseline: String,
    pub surgery_treatment: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogDoc {
    format: String,
    taxonomy: Vec<TaxonomyEntry>,
    #[serde(default)]
    templates: Vec<TemplateSpec>,
    prompt: PromptConfig,
    grounding: GroundingConfig,
    question_set: SlotConfig,
}

#[derive(Debug, Clone)]
pub struct QuestionCatalog {
    taxonomy: Vec<TaxonomyEntry>,
    templates: BTreeMap<String, QuestionTemplate>,
    pub prompt: PromptConfig,
    pub grounding: GroundingConfig,
    pub slots: SlotConfig,
}

/// Templates the five-question set renders from.
const SET_TEMPLATES: &[&str] = &[
    "q10_approaching_threshold",
    "q10_past_threshold",
    "q1_previous_surgery",
    "q1_no_previous_surgery",
    "q6_confidence",
    "q6_judgement",
    "q9_single_increase",
    "q9_single_decrease",
    "q9_multi_increase",
    "q9_multi_decrease",
    "q9_none",
];

impl QuestionCatalog {
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let doc: CatalogDoc = toml::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
        if doc.format != CATALOG_FORMAT {
            return Err(CatalogError::Format(doc.format));
        }

        let ids: Vec<String> = doc.taxonomy.iter().map(|e| e.id.clone()).collect();
        let expected: HashSet<String> = (1..=TAXONOMY_SIZE).map(|i| format!("Q{i}")).collect();
        let found: HashSet<String> = ids.iter().cloned().collect();
        if ids.len() != TAXONOMY_SIZE || found != expected {
            return Err(CatalogError::Taxonomy(ids));
        }

        let mut templates = BTreeMap::new();
        for spec in doc.templates {
            if !found.contains(&spec.taxonomy_id) {
                return Err(CatalogError::TemplateTaxonomy {
                    template: spec.id.clone(),
                    taxonomy_id: spec.taxonomy_id.clone(),
                });
            }
            let id = spec.id.clone();
            if templates.insert(id.clone(), QuestionTemplate::new(spec)?).is_some() {
                return Err(CatalogError::DuplicateTemplate(id));
            }
        }
        let referenced = doc
            .taxonomy
            .iter()
            .flat_map(|e| e.template_ids.iter())
            .chain(doc.prompt.instructions.values().map(|p| &p.fallback_template))
            .map(String::as_str)
            .chain(SET_TEMPLATES.iter().copied());
        for id in referenced {
            if !templates.contains_key(id) {
                return Err(CatalogError::MissingTemplate(id.to_string()));
            }
        }

        Ok(QuestionCatalog {
            taxonomy: doc.taxonomy,
            templates,
            prompt: doc.prompt,
            grounding: doc.grounding,
            slots: doc.question_set,
        })
    }

    /// The shipped catalog.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CATALOG).expect("shipped question catalog is valid")
    }

    /// The ten taxonomy entries, in registry order.
    pub fn registry(&self) -> &[TaxonomyEntry] {
        &self.taxonomy
    }

    pub fn taxonomy(&self, id: &str) -> Result<&TaxonomyEntry, QuestionError> {
        self.taxonomy
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| QuestionError::UnknownTaxonomy(id.to_string()))
    }

    pub fn template(&self, id: &str) -> Result<&QuestionTemplate, TemplateError> {
        self.templates
            .get(id)
            .ok_or_else(|| TemplateError::UnknownTemplate(id.to_string()))
    }

    pub fn templates(&self) -> impl Iterator<Item = &QuestionTemplate> {
        self.templates.values()
    }
}
