//! Reflective questions: taxonomy registry, templates, LLM prompts,
//! grounding validation and the five-question set shown with a prediction.

mod catalog;
pub mod grounding;
pub mod llm;
pub mod prompt;
pub mod set;
pub mod template;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{
    CatalogError, GroundingConfig, PromptConfig, PromptInstruction, QuestionCatalog, Requirement, SlotConfig,
    TaxonomyEntry, DEFAULT_CATALOG,
};
pub use grounding::{validate_grounding, Lexicon, RejectionReason};
pub use llm::{
    generate_llm_question, prompt_hash, resolve_completion, FallbackReason, GenerationError, GenerationOutcome,
    HttpGenerator, LlmError, LlmSettings, StubGenerator, TextGenerator,
};
pub use prompt::{build_prompt, PromptError, PromptSpec};
pub use set::{question_set, CounterfactualSlot, QuestionSetError};
pub use template::{render_template, QuestionTemplate, TemplateError, TemplateSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionSource {
    Template,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reasons", rename_all = "lowercase")]
pub enum Grounding {
    Accepted,
    Rejected(Vec<RejectionReason>),
}

impl Grounding {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Grounding::Accepted)
    }
}

impl fmt::Display for Grounding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grounding::Accepted => f.write_str("accepted"),
            Grounding::Rejected(reasons) => {
                let parts: Vec<String> = reasons.iter().map(ToString::to_string).collect();
                write!(f, "rejected({})", parts.join("; "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub taxonomy_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub source: QuestionSource,
    pub grounding: Grounding,
    pub inputs_used: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuestionError {
    #[error("unknown taxonomy id '{0}'")]
    UnknownTaxonomy(String),
}
