//! Cognitive-engagement self-report scale.
//!
//! Five-point Likert responses (1 = strongly disagree, 5 = strongly agree).
//! Reverse-scored items map `v -> 6 - v`; the score is the item mean,
//! reported to two decimals. This scoring is provisional until a validated
//! instrument exists.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LIKERT_MIN: u8 = 1;
pub const LIKERT_MAX: u8 = 5;

/// Extension file shipped with the crate (comments only by default).
pub const DEFAULT_EXTENSION: &str = include_str!("../config/scale_items.txt");

const CORE_ITEMS: [&str; 2] = [
    "The system (TfT) helped me to be aware of my preferences/assumptions",
    "The system (TfT) helped me to compare and contrast different options",
];

const REVERSE_MARKER: &str = "[R]";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScaleError {
    #[error("a scale needs at least two items")]
    TooFewItems,
    #[error("reverse-scored index {0} is not an item index")]
    ReverseIndex(usize),
    #[error("item {item}: response {value} is outside 1..=5")]
    OutOfRange { item: usize, value: u8 },
    #[error("expected {expected} responses, got {got}")]
    MissingItem { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleDefinition {
    pub items: Vec<String>,
    /// Zero-based indices of reverse-scored items.
    pub reverse_scored: BTreeSet<usize>,
}

impl ScaleDefinition {
    pub fn new(items: Vec<String>, reverse_scored: BTreeSet<usize>) -> Result<Self, ScaleError> {
        if items.len() < 2 {
            return Err(ScaleError::TooFewItems);
        }
        if let Some(bad) = reverse_scored.iter().find(|i| **i >= items.len()) {
            return Err(ScaleError::ReverseIndex(*bad));
        }
        Ok(ScaleDefinition { items, reverse_scored })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// The two core items followed by the items of an extension file.
///
/// Extension format: one item per line; blank lines and lines starting with
/// `#` are skipped; a leading `[R]` marks the item reverse-scored.
pub fn scale_with_extension(extension: &str) -> ScaleDefinition {
    let mut items: Vec<String> = CORE_ITEMS.iter().map(|s| s.to_string()).collect();
    let mut reverse = BTreeSet::new();
    for line in extension.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.strip_prefix(REVERSE_MARKER) {
            Some(rest) => {
                reverse.insert(items.len());
                items.push(rest.trim().to_string());
            }
            None => items.push(line.to_string()),
        }
    }
    ScaleDefinition {
        items,
        reverse_scored: reverse,
    }
}

pub fn default_scale() -> ScaleDefinition {
    scale_with_extension(DEFAULT_EXTENSION)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementResponse {
    pub session_id: String,
    pub values: Vec<u8>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementScore {
    /// Item mean rounded to two decimals.
    pub mean: f64,
    /// Item scores after reverse-scoring.
    pub per_item: Vec<u8>,
}

impl EngagementScore {
    pub fn display(&self) -> String {
        format!("{:.2}", self.mean)
    }
}

pub fn score(scale: &ScaleDefinition, values: &[u8]) -> Result<EngagementScore, ScaleError> {
    if values.len() != scale.len() {
        return Err(ScaleError::MissingItem {
            expected: scale.len(),
            got: values.len(),
        });
    }
    let per_item = values
        .iter()
        .enumerate()
        .map(|(item, &value)| {
            if !(LIKERT_MIN..=LIKERT_MAX).contains(&value) {
                return Err(ScaleError::OutOfRange { item, value });
            }
            Ok(if scale.reverse_scored.contains(&item) {
                LIKERT_MIN + LIKERT_MAX - value
            } else {
                value
            })
        })
        .collect::<Result<Vec<u8>, _>>()?;
    let sum: u32 = per_item.iter().map(|v| u32::from(*v)).sum();
    let mean = f64::from(sum) / per_item.len() as f64;
    Ok(EngagementScore {
        mean: (mean * 100.0).round() / 100.0,
        per_item,
    })
}
