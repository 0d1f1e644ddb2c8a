//! Loader for the schema + coefficient document (`reflect-model/1`, TOML).
//!
//! See `docs/model-config.md` for the grammar.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::model::{FeatureTerm, ReferenceModel, TreatmentCoefficients};
use crate::schema::{FeatureKind, FeatureSchema, FeatureSpec, SchemaError, Treatment};

pub const MODEL_FORMAT: &str = "reflect-model/1";

/// The shipped reference configuration.
pub const REFERENCE_MODEL: &str = include_str!("../config/reference_model.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    #[serde(default)]
    treatments: Vec<TreatmentDoc>,
    #[serde(default)]
    features: Vec<FeatureDoc>,
    #[serde(default)]
    standardization: BTreeMap<String, StandardizationDoc>,
    #[serde(default)]
    model: BTreeMap<String, CoefficientsDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreatmentDoc {
    id: String,
    label: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureDoc {
    name: String,
    label: Option<String>,
    kind: KindDoc,
    min: Option<f64>,
    max: Option<f64>,
    #[serde(default)]
    bins: Vec<f64>,
    #[serde(default)]
    values: Vec<String>,
    #[serde(default)]
    mutable: bool,
    red_flag_threshold: Option<f64>,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum KindDoc {
    Numeric,
    Categorical,
    Boolean,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(deny_unknown_fields)]
struct StandardizationDoc {
    mean: f64,
    scale: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefficientsDoc {
    intercept: f64,
    #[serde(default)]
    weights: BTreeMap<String, WeightDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum WeightDoc {
    Scalar(f64),
    Levels(BTreeMap<String, f64>),
}

fn parse(text: &str) -> Result<Document, SchemaError> {
    let doc: Document = toml::from_str(text).map_err(|e| SchemaError::Parse(e.to_string()))?;
    if doc.format != MODEL_FORMAT {
        return Err(SchemaError::Format(doc.format));
    }
    Ok(doc)
}

/// Parses and validates the schema part of a configuration document.
pub fn load_schema(text: &str) -> Result<FeatureSchema, SchemaError> {
    schema_from(&parse(text)?)
}

/// Parses schema and coefficients from one document.
pub fn load_model(text: &str) -> Result<ReferenceModel, SchemaError> {
    let doc = parse(text)?;
    let schema = schema_from(&doc)?;
    model_from(schema, &doc)
}

/// Schema from one document, coefficients (and standardization) from another.
pub fn load_model_split(schema_text: &str, coefficients_text: &str) -> Result<ReferenceModel, SchemaError> {
    let schema = load_schema(schema_text)?;
    model_from(schema, &parse(coefficients_text)?)
}

fn schema_from(doc: &Document) -> Result<FeatureSchema, SchemaError> {
    let features = doc
        .features
        .iter()
        .map(|f| {
            let kind = match f.kind {
                KindDoc::Numeric => {
                    let (min, max) = match (f.min, f.max) {
                        (Some(min), Some(max)) => (min, max),
                        _ => return Err(SchemaError::InvalidRange(f.name.clone())),
                    };
                    FeatureKind::Numeric {
                        min,
                        max,
                        bins: f.bins.clone(),
                    }
                }
                KindDoc::Categorical => FeatureKind::Categorical {
                    values: f.values.clone(),
                },
                KindDoc::Boolean => FeatureKind::Boolean,
            };
            Ok(FeatureSpec {
                name: f.name.clone(),
                label: f.label.clone().unwrap_or_else(|| f.name.replace('_', " ")),
                kind,
                mutable: f.mutable,
                red_flag_threshold: f.red_flag_threshold,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let treatments = doc
        .treatments
        .iter()
        .map(|t| Treatment {
            id: t.id.clone(),
            label: t.label.clone().unwrap_or_else(|| t.id.replace('_', " ")),
        })
        .collect();
    FeatureSchema::new(features, treatments)
}

fn model_from(schema: FeatureSchema, doc: &Document) -> Result<ReferenceModel, SchemaError> {
    for name in doc.standardization.keys() {
        if schema.feature(name).is_none() {
            return Err(SchemaError::UnknownFeature(name.clone()));
        }
    }
    for id in doc.model.keys() {
        if schema.treatment_index(id).is_none() {
            return Err(SchemaError::UnknownTreatment(id.clone()));
        }
    }
    let mut coefficients = Vec::with_capacity(schema.treatments().len());
    for treatment in schema.treatments() {
        let entry = doc.model.get(&treatment.id).ok_or_else(|| SchemaError::MissingWeight {
            treatment: treatment.id.clone(),
            feature: "intercept".into(),
            level: None,
        })?;
        if let Some(name) = entry.weights.keys().find(|k| schema.feature(k).is_none()) {
            return Err(SchemaError::UnknownFeature(name.clone()));
        }
        let mut terms = Vec::with_capacity(schema.len());
        for spec in schema.features() {
            let missing = |level: Option<String>| SchemaError::MissingWeight {
                treatment: treatment.id.clone(),
                feature: spec.name.clone(),
                level,
            };
            let weight = entry.weights.get(&spec.name).ok_or_else(|| missing(None))?;
            let term = match (&spec.kind, weight) {
                (FeatureKind::Numeric { .. }, WeightDoc::Scalar(w)) => {
                    let st = doc
                        .standardization
                        .get(&spec.name)
                        .filter(|s| s.scale > 0.0 && s.scale.is_finite() && s.mean.is_finite())
                        .ok_or_else(|| SchemaError::Standardization(spec.name.clone()))?;
                    FeatureTerm::Standardized {
                        mean: st.mean,
                        scale: st.scale,
                        weight: *w,
                    }
                }
                (FeatureKind::Categorical { .. } | FeatureKind::Boolean, WeightDoc::Levels(levels)) => {
                    let names = spec.level_names();
                    if levels.keys().any(|k| !names.contains(k)) {
                        return Err(SchemaError::WeightShape(spec.name.clone()));
                    }
                    let ws = names
                        .iter()
                        .map(|n| levels.get(n).copied().ok_or_else(|| missing(Some(n.clone()))))
                        .collect::<Result<Vec<_>, _>>()?;
                    FeatureTerm::Levels(ws)
                }
                _ => return Err(SchemaError::WeightShape(spec.name.clone())),
            };
            terms.push(term);
        }
        coefficients.push(TreatmentCoefficients {
            intercept: entry.intercept,
            terms,
        });
    }
    ReferenceModel::new(schema, coefficients)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_document_loads() {
        let schema = load_schema(REFERENCE_MODEL).unwrap();
        assert_eq!(schema.len(), 8);
        assert_eq!(schema.treatments().len(), 3);
        assert_eq!(schema.treatment_label("conservative_care"), Some("conservative care"));
        let mutable: Vec<&str> = schema
            .mutable_features()
            .into_iter()
            .map(|i| schema.features()[i].name.as_str())
            .collect();
        assert_eq!(
            mutable,
            ["expected_recovery", "pain_duration_months", "smoker", "physical_job_load"]
        );
        assert_eq!(schema.feature("age").unwrap().red_flag_threshold, Some(50.0));
        load_model(REFERENCE_MODEL).unwrap();
    }

    const SMALL: &str = r#"
format = "reflect-model/1"
treatments = [{ id = "a" }]
[[features]]
name = "age"
kind = "numeric"
min = 18.0
max = 90.0
bins = [30.0]
[standardization]
age = { mean = 50.0, scale = 15.0 }
[model.a]
intercept = 0.0
weights = { age = 0.0 }
"#;

    #[test]
    fn small_document_loads() {
        let m = load_model(SMALL).unwrap();
        assert_eq!(crate::model::Predictor::schema(&m).len(), 1);
    }

    #[test]
    fn duplicate_feature_rejected() {
        let text = SMALL.replace(
            "[standardization]",
            "[[features]]\nname = \"age\"\nkind = \"boolean\"\n[standardization]",
        );
        assert_eq!(load_schema(&text).unwrap_err(), SchemaError::DuplicateName("age".into()));
    }

    #[test]
    fn non_monotone_bins_rejected() {
        let text = SMALL.replace("bins = [30.0]", "bins = [50.0, 30.0]");
        assert_eq!(load_schema(&text).unwrap_err(), SchemaError::NonMonotoneBins("age".into()));
    }

    #[test]
    fn empty_domain_rejected() {
        let text = SMALL.replace(
            "[standardization]",
            "[[features]]\nname = \"load\"\nkind = \"categorical\"\nvalues = []\n[standardization]",
        );
        assert_eq!(load_schema(&text).unwrap_err(), SchemaError::EmptyDomain("load".into()));
    }

    #[test]
    fn parse_failure_and_format() {
        assert!(matches!(load_schema("format = "), Err(SchemaError::Parse(_))));
        let text = SMALL.replace("reflect-model/1", "reflect-model/9");
        assert!(matches!(load_schema(&text), Err(SchemaError::Format(_))));
    }

    #[test]
    fn missing_weights_rejected() {
        let text = SMALL.replace("weights = { age = 0.0 }", "weights = {}");
        assert!(matches!(load_model(&text), Err(SchemaError::MissingWeight { .. })));
        let text = SMALL.replace("age = { mean = 50.0, scale = 15.0 }", "age = { mean = 50.0, scale = 0.0 }");
        assert_eq!(load_model(&text).unwrap_err(), SchemaError::Standardization("age".into()));
    }
}
