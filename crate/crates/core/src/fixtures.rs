//! Shipped patient-case fixtures (`config/fixtures.jsonl`).

use rand::Rng;
use serde::Deserialize;

use crate::schema::{CaseError, FeatureKind, FeatureSchema, FeatureValue, PatientCase};

pub const FIXTURE_CASES: &str = include_str!("../config/fixtures.jsonl");

/// One line of a cases file: `{"id": ..., "case": {name: value, ...}, "seed": optional}`.
#[derive(Debug, Clone, Deserialize)]
pub struct CaseLine {
    pub id: String,
    pub case: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("case '{id}': {source}")]
    Case { id: String, source: CaseError },
}

pub fn parse_case_lines(text: &str) -> Result<Vec<CaseLine>, FixtureError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| FixtureError::Json { line: i + 1, source }))
        .collect()
}

/// Parses a cases file and validates every case against `schema`.
pub fn load_cases(schema: &FeatureSchema, text: &str) -> Result<Vec<(String, PatientCase, Option<u64>)>, FixtureError> {
    parse_case_lines(text)?
        .into_iter()
        .map(|line| {
            let case = schema
                .case_from_named(&line.case)
                .map_err(|source| FixtureError::Case { id: line.id.clone(), source })?;
            Ok((line.id, case, line.seed))
        })
        .collect()
}

/// The shipped fixtures, validated against the reference schema.
pub fn reference_cases() -> Vec<(String, PatientCase)> {
    let schema = crate::config::load_schema(crate::config::REFERENCE_MODEL).expect("reference schema");
    load_cases(&schema, FIXTURE_CASES)
        .expect("shipped fixtures are valid")
        .into_iter()
        .map(|(id, case, _)| (id, case))
        .collect()
}

/// Fixture case R1: 47 years old, one previous surgery, no expected recovery.
pub fn case_r1() -> PatientCase {
    reference_cases()
        .into_iter()
        .find(|(id, _)| id == "R1")
        .map(|(_, case)| case)
        .expect("fixture R1")
}

/// A case drawn uniformly from each feature's domain. Numeric values are
/// whole numbers within `[min, max]`.
pub fn random_case<R: Rng + ?Sized>(schema: &FeatureSchema, rng: &mut R) -> PatientCase {
    let values = schema
        .features()
        .iter()
        .map(|spec| match &spec.kind {
            FeatureKind::Numeric { min, max, .. } => {
                FeatureValue::Number(rng.random_range(min.ceil() as i64..=max.floor() as i64) as f64)
            }
            FeatureKind::Categorical { values } => FeatureValue::Level(values[rng.random_range(0..values.len())].clone()),
            FeatureKind::Boolean => FeatureValue::Flag(rng.random_bool(0.5)),
        })
        .collect();
    PatientCase::new(values)
}
