//! Lexicon-based grounding check for generated questions.
//!
//! A question is accepted when it names at least one lexicon term (schema
//! feature names and labels, treatment ids and labels, configured synonyms),
//! names no blocklisted off-schema variable, and fits the length limit.
//! Matching is on whole lower-cased word sequences; a text word also matches
//! a term word that differs only by a plural suffix.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GroundingConfig, Grounding};
use crate::schema::FeatureSchema;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroundingError {
    #[error("question text is empty")]
    EmptyText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RejectionReason {
    Blocklist { term: String },
    NoGroundedTerm,
    TooLong { chars: usize, max: usize },
}

impl fmt::Display for RejectionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectionReason::Blocklist { term } => write!(f, "blocklist: {term}"),
            RejectionReason::NoGroundedTerm => f.write_str("no-grounded-term"),
            RejectionReason::TooLong { chars, max } => write!(f, "too-long: {chars} > {max}"),
        }
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn word_matches(text_word: &str, term_word: &str) -> bool {
    if text_word == term_word {
        return true;
    }
    let plural_of = |plural: &str, singular: &str| {
        plural.strip_suffix('s') == Some(singular)
            || plural.strip_suffix("es") == Some(singular)
            || (singular.ends_with('y')
                && plural.strip_suffix("ies") == Some(&singular[..singular.len() - 1]))
    };
    plural_of(text_word, term_word) || plural_of(term_word, text_word)
}

#[derive(Debug, Clone, PartialEq)]
struct Term {
    text: String,
    words: Vec<String>,
}

impl Term {
    fn new(text: &str) -> Option<Self> {
        let words = tokenize(&text.replace('_', " "));
        (!words.is_empty()).then(|| Term {
            text: text.to_lowercase(),
            words,
        })
    }

    fn occurs_in(&self, tokens: &[String]) -> bool {
        tokens.windows(self.words.len()).any(|w| {
            w.iter().zip(&self.words).all(|(a, b)| word_matches(a, b))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    grounded: Vec<Term>,
    blocked: Vec<Term>,
    max_chars: usize,
}

impl Lexicon {
    pub fn new(schema: &FeatureSchema, config: &GroundingConfig) -> Self {
        let mut grounded = Vec::new();
        for f in schema.features() {
            grounded.extend(Term::new(&f.name));
            grounded.extend(Term::new(&f.label));
        }
        for t in schema.treatments() {
            grounded.extend(Term::new(&t.id));
            grounded.extend(Term::new(&t.label));
        }
        for synonyms in config.synonyms.values() {
            grounded.extend(synonyms.iter().filter_map(|s| Term::new(s)));
        }
        grounded.extend(config.vocabulary.iter().filter_map(|s| Term::new(s)));
        grounded.dedup_by(|a, b| a.words == b.words);
        let blocked = config.blocklist.iter().filter_map(|s| Term::new(s)).collect();
        Lexicon {
            grounded,
            blocked,
            max_chars: config.max_chars,
        }
    }

    pub fn max_chars(&self) -> usize {
        self.max_chars
    }

    /// Lexicon terms that occur in `text`.
    pub fn grounded_terms(&self, text: &str) -> Vec<String> {
        let tokens = tokenize(text);
        self.grounded
            .iter()
            .filter(|t| t.occurs_in(&tokens))
            .map(|t| t.text.clone())
            .collect()
    }

    /// Blocklisted terms that occur in `text`.
    pub fn blocked_terms(&self, text: &str) -> Vec<String> {
        let tokens = tokenize(text);
        self.blocked
            .iter()
            .filter(|t| t.occurs_in(&tokens))
            .map(|t| t.text.clone())
            .collect()
    }
}

pub fn validate_grounding(text: &str, lexicon: &Lexicon) -> Result<Grounding, GroundingError> {
    if text.trim().is_empty() {
        return Err(GroundingError::EmptyText);
    }
    let mut reasons: Vec<RejectionReason> = lexicon
        .blocked_terms(text)
        .into_iter()
        .map(|term| RejectionReason::Blocklist { term })
        .collect();
    if lexicon.grounded_terms(text).is_empty() {
        reasons.push(RejectionReason::NoGroundedTerm);
    }
    let chars = text.chars().count();
    if chars > lexicon.max_chars {
        reasons.push(RejectionReason::TooLong {
            chars,
            max: lexicon.max_chars,
        });
    }
    Ok(if reasons.is_empty() {
        Grounding::Accepted
    } else {
        Grounding::Rejected(reasons)
    })
}
