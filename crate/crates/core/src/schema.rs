//! Feature schema, treatment options and patient cases.
//!
//! A [`FeatureSchema`] fixes the order of features and treatments. Every
//! [`PatientCase`] carries exactly one [`FeatureValue`] per feature in that
//! order. Numeric features are discretized by their cut-points into bins;
//! the bins are shared by the explainer (same-bin indicators) and the
//! counterfactual search (bin midpoints).

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("parse failure: {0}")]
    Parse(String),
    #[error("unsupported format '{0}'")]
    Format(String),
    #[error("feature name must be non-empty")]
    EmptyName,
    #[error("duplicate feature name '{0}'")]
    DuplicateName(String),
    #[error("feature '{0}' has an empty domain")]
    EmptyDomain(String),
    #[error("feature '{0}' needs min < max")]
    InvalidRange(String),
    #[error("feature '{0}' has non-monotone bins")]
    NonMonotoneBins(String),
    #[error("feature '{0}' has a bin cut-point outside its domain")]
    BinOutsideDomain(String),
    #[error("feature '{0}' needs at least two bins")]
    TooFewBins(String),
    #[error("feature '{0}' has a red-flag threshold outside its domain")]
    ThresholdOutsideDomain(String),
    #[error("schema declares no treatments")]
    NoTreatments,
    #[error("duplicate treatment '{0}'")]
    DuplicateTreatment(String),
    #[error("feature '{0}' is not part of the schema")]
    UnknownFeature(String),
    #[error("treatment '{0}' is not part of the schema")]
    UnknownTreatment(String),
    #[error("missing weight for treatment '{treatment}', feature '{feature}'{}", level.as_ref().map(|l| format!(", level '{l}'")).unwrap_or_default())]
    MissingWeight {
        treatment: String,
        feature: String,
        level: Option<String>,
    },
    #[error("feature '{0}' has a weight of the wrong shape")]
    WeightShape(String),
    #[error("numeric feature '{0}' needs a standardization with scale > 0")]
    Standardization(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("case has {got} values, schema has {expected} features")]
    LengthMismatch { expected: usize, got: usize },
    #[error("value {value} for feature '{feature}' is out of domain")]
    OutOfDomain { feature: String, value: String },
    #[error("value for feature '{0}' has the wrong kind")]
    WrongKind(String),
    #[error("missing value for feature '{0}'")]
    MissingFeature(String),
    #[error("unknown feature '{0}'")]
    UnknownFeature(String),
}

/// One value of a patient case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Flag(bool),
    Number(f64),
    Level(String),
}

impl FeatureValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            FeatureValue::Number(x) => Some(*x),
            _ => None,
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Flag(true) => f.write_str("yes"),
            FeatureValue::Flag(false) => f.write_str("no"),
            FeatureValue::Number(x) => write!(f, "{x}"),
            FeatureValue::Level(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    /// `bins` are the interior cut-points; `k` cut-points give `k + 1` bins.
    Numeric { min: f64, max: f64, bins: Vec<f64> },
    Categorical { values: Vec<String> },
    Boolean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub label: String,
    pub kind: FeatureKind,
    pub mutable: bool,
    pub red_flag_threshold: Option<f64>,
}

impl FeatureSpec {
    pub fn numeric(name: &str, min: f64, max: f64, bins: Vec<f64>) -> Self {
        Self::new(name, FeatureKind::Numeric { min, max, bins })
    }

    pub fn categorical(name: &str, values: &[&str]) -> Self {
        let values = values.iter().map(|v| v.to_string()).collect();
        Self::new(name, FeatureKind::Categorical { values })
    }

    pub fn boolean(name: &str) -> Self {
        Self::new(name, FeatureKind::Boolean)
    }

    fn new(name: &str, kind: FeatureKind) -> Self {
        FeatureSpec {
            name: name.to_string(),
            label: name.replace('_', " "),
            kind,
            mutable: false,
            red_flag_threshold: None,
        }
    }

    pub fn with_mutable(mut self, mutable: bool) -> Self {
        self.mutable = mutable;
        self
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    pub fn with_red_flag(mut self, threshold: f64) -> Self {
        self.red_flag_threshold = Some(threshold);
        self
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.name.trim().is_empty() {
            return Err(SchemaError::EmptyName);
        }
        match &self.kind {
            FeatureKind::Numeric { min, max, bins } => {
                if !(min.is_finite() && max.is_finite() && min < max) {
                    return Err(SchemaError::InvalidRange(self.name.clone()));
                }
                if bins.is_empty() {
                    return Err(SchemaError::TooFewBins(self.name.clone()));
                }
                if bins.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(SchemaError::NonMonotoneBins(self.name.clone()));
                }
                if bins.iter().any(|c| !(c > min && c < max)) {
                    return Err(SchemaError::BinOutsideDomain(self.name.clone()));
                }
                if let Some(t) = self.red_flag_threshold {
                    if !(t >= *min && t <= *max) {
                        return Err(SchemaError::ThresholdOutsideDomain(self.name.clone()));
                    }
                }
            }
            FeatureKind::Categorical { values } => {
                let distinct: HashSet<&String> = values.iter().collect();
                if values.len() < 2 || distinct.len() != values.len() {
                    return Err(SchemaError::EmptyDomain(self.name.clone()));
                }
                if self.red_flag_threshold.is_some() {
                    return Err(SchemaError::ThresholdOutsideDomain(self.name.clone()));
                }
            }
            FeatureKind::Boolean => {
                if self.red_flag_threshold.is_some() {
                    return Err(SchemaError::ThresholdOutsideDomain(self.name.clone()));
                }
            }
        }
        Ok(())
    }

    /// Number of distinct levels: bins for numeric features, values otherwise.
    pub fn domain_size(&self) -> usize {
        match &self.kind {
            FeatureKind::Numeric { bins, .. } => bins.len() + 1,
            FeatureKind::Categorical { values } => values.len(),
            FeatureKind::Boolean => 2,
        }
    }

    /// Level names used for one-of-k weights. Numeric features have none.
    pub fn level_names(&self) -> Vec<String> {
        match &self.kind {
            FeatureKind::Numeric { .. } => Vec::new(),
            FeatureKind::Categorical { values } => values.clone(),
            FeatureKind::Boolean => vec!["no".into(), "yes".into()],
        }
    }

    pub fn contains(&self, value: &FeatureValue) -> bool {
        self.level_of(value).is_ok()
    }

    /// Bin index (numeric) or value index (categorical/boolean) of `value`.
    pub fn level_of(&self, value: &FeatureValue) -> Result<usize, CaseError> {
        match (&self.kind, value) {
            (FeatureKind::Numeric { min, max, bins }, FeatureValue::Number(x)) => {
                if !(x.is_finite() && *x >= *min && *x <= *max) {
                    return Err(self.out_of_domain(value));
                }
                Ok(bins.partition_point(|c| c <= x))
            }
            (FeatureKind::Categorical { values }, FeatureValue::Level(s)) => values
                .iter()
                .position(|v| v == s)
                .ok_or_else(|| self.out_of_domain(value)),
            (FeatureKind::Boolean, FeatureValue::Flag(b)) => Ok(usize::from(*b)),
            _ => Err(CaseError::WrongKind(self.name.clone())),
        }
    }

    /// `[lo, hi)` bounds of numeric bin `idx` (the last bin is closed).
    pub fn bin_bounds(&self, idx: usize) -> Option<(f64, f64)> {
        match &self.kind {
            FeatureKind::Numeric { min, max, bins } if idx <= bins.len() => {
                let lo = if idx == 0 { *min } else { bins[idx - 1] };
                let hi = if idx == bins.len() { *max } else { bins[idx] };
                Some((lo, hi))
            }
            _ => None,
        }
    }

    /// Representative value of a level: the bin midpoint for numeric features.
    pub fn level_value(&self, idx: usize) -> Option<FeatureValue> {
        match &self.kind {
            FeatureKind::Numeric { .. } => self
                .bin_bounds(idx)
                .map(|(lo, hi)| FeatureValue::Number((lo + hi) / 2.0)),
            FeatureKind::Categorical { values } => {
                values.get(idx).map(|v| FeatureValue::Level(v.clone()))
            }
            FeatureKind::Boolean => (idx < 2).then_some(FeatureValue::Flag(idx == 1)),
        }
    }

    fn out_of_domain(&self, value: &FeatureValue) -> CaseError {
        CaseError::OutOfDomain {
            feature: self.name.clone(),
            value: value.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Treatment {
    pub id: String,
    pub label: String,
}

impl Treatment {
    pub fn new(id: &str) -> Self {
        Treatment {
            id: id.to_string(),
            label: id.replace('_', " "),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    features: Vec<FeatureSpec>,
    treatments: Vec<Treatment>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>, treatments: Vec<Treatment>) -> Result<Self, SchemaError> {
        let mut seen = HashSet::new();
        for f in &features {
            f.validate()?;
            if !seen.insert(f.name.as_str()) {
                return Err(SchemaError::DuplicateName(f.name.clone()));
            }
        }
        if treatments.is_empty() {
            return Err(SchemaError::NoTreatments);
        }
        let mut seen = HashSet::new();
        for t in &treatments {
            if t.id.trim().is_empty() || !seen.insert(t.id.as_str()) {
                return Err(SchemaError::DuplicateTreatment(t.id.clone()));
            }
        }
        Ok(FeatureSchema {
            features,
            treatments,
        })
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn treatments(&self) -> &[Treatment] {
        &self.treatments
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn treatment_index(&self, id: &str) -> Option<usize> {
        self.treatments.iter().position(|t| t.id == id)
    }

    pub fn treatment_label(&self, id: &str) -> Option<&str> {
        self.treatments
            .iter()
            .find(|t| t.id == id)
            .map(|t| t.label.as_str())
    }

    pub fn mutable_features(&self) -> Vec<usize> {
        (0..self.features.len())
            .filter(|&i| self.features[i].mutable)
            .collect()
    }

    /// Checks length and per-feature domain membership.
    pub fn validate_case(&self, case: &PatientCase) -> Result<(), CaseError> {
        if case.values.len() != self.features.len() {
            return Err(CaseError::LengthMismatch {
                expected: self.features.len(),
                got: case.values.len(),
            });
        }
        for (spec, value) in self.features.iter().zip(&case.values) {
            spec.level_of(value)?;
        }
        Ok(())
    }

    /// Level index of every feature of a (valid) case.
    pub fn levels(&self, case: &PatientCase) -> Result<Vec<usize>, CaseError> {
        self.validate_case(case)?;
        self.features
            .iter()
            .zip(&case.values)
            .map(|(spec, value)| spec.level_of(value))
            .collect()
    }

    /// Builds a case from a name → value object. Booleans also accept
    /// `"yes"`/`"no"`; every feature must be present exactly once.
    pub fn case_from_named(
        &self,
        named: &serde_json::Map<String, serde_json::Value>,
    ) -> Result<PatientCase, CaseError> {
        if let Some(unknown) = named.keys().find(|k| self.feature_index(k).is_none()) {
            return Err(CaseError::UnknownFeature(unknown.clone()));
        }
        let mut values = Vec::with_capacity(self.features.len());
        for spec in &self.features {
            let raw = named
                .get(&spec.name)
                .ok_or_else(|| CaseError::MissingFeature(spec.name.clone()))?;
            let value = match (&spec.kind, raw) {
                (FeatureKind::Numeric { .. }, serde_json::Value::Number(n)) => {
                    FeatureValue::Number(n.as_f64().ok_or_else(|| CaseError::WrongKind(spec.name.clone()))?)
                }
                (FeatureKind::Categorical { .. }, serde_json::Value::String(s)) => {
                    FeatureValue::Level(s.clone())
                }
                (FeatureKind::Boolean, serde_json::Value::Bool(b)) => FeatureValue::Flag(*b),
                (FeatureKind::Boolean, serde_json::Value::String(s)) => match s.as_str() {
                    "yes" => FeatureValue::Flag(true),
                    "no" => FeatureValue::Flag(false),
                    _ => return Err(spec.out_of_domain(&FeatureValue::Level(s.clone()))),
                },
                _ => return Err(CaseError::WrongKind(spec.name.clone())),
            };
            spec.level_of(&value)?;
            values.push(value);
        }
        Ok(PatientCase { values })
    }

    /// Inverse of [`FeatureSchema::case_from_named`].
    pub fn case_to_named(&self, case: &PatientCase) -> serde_json::Map<String, serde_json::Value> {
        self.features
            .iter()
            .zip(&case.values)
            .map(|(spec, value)| {
                let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
                (spec.name.clone(), v)
            })
            .collect()
    }
}

/// One patient's feature vector, in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatientCase {
    pub values: Vec<FeatureValue>,
}

impl PatientCase {
    pub fn new(values: Vec<FeatureValue>) -> Self {
        PatientCase { values }
    }

    pub fn with_value(&self, idx: usize, value: FeatureValue) -> Self {
        let mut next = self.clone();
        next.values[idx] = value;
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![
                FeatureSpec::numeric("age", 18.0, 90.0, vec![30.0, 50.0]).with_red_flag(50.0),
                FeatureSpec::categorical("load", &["low", "high"]),
                FeatureSpec::boolean("smoker").with_mutable(true),
            ],
            vec![Treatment::new("a"), Treatment::new("b")],
        )
        .unwrap()
    }

    #[test]
    fn bins_are_half_open() {
        let s = schema();
        let age = &s.features()[0];
        assert_eq!(age.level_of(&FeatureValue::Number(18.0)).unwrap(), 0);
        assert_eq!(age.level_of(&FeatureValue::Number(29.99)).unwrap(), 0);
        assert_eq!(age.level_of(&FeatureValue::Number(30.0)).unwrap(), 1);
        assert_eq!(age.level_of(&FeatureValue::Number(90.0)).unwrap(), 2);
        assert_eq!(age.level_value(1), Some(FeatureValue::Number(40.0)));
        assert_eq!(age.domain_size(), 3);
    }

    #[test]
    fn rejects_bad_specs() {
        let dup = FeatureSchema::new(
            vec![FeatureSpec::boolean("age"), FeatureSpec::boolean("age")],
            vec![Treatment::new("a")],
        );
        assert_eq!(dup.unwrap_err(), SchemaError::DuplicateName("age".into()));

        let bins = FeatureSpec::numeric("age", 18.0, 90.0, vec![50.0, 30.0]).validate();
        assert_eq!(bins.unwrap_err(), SchemaError::NonMonotoneBins("age".into()));

        let outside = FeatureSpec::numeric("age", 18.0, 90.0, vec![95.0]).validate();
        assert_eq!(outside.unwrap_err(), SchemaError::BinOutsideDomain("age".into()));

        let nobins = FeatureSpec::numeric("age", 18.0, 90.0, vec![]).validate();
        assert_eq!(nobins.unwrap_err(), SchemaError::TooFewBins("age".into()));

        let cat = FeatureSpec::categorical("x", &["only"]).validate();
        assert_eq!(cat.unwrap_err(), SchemaError::EmptyDomain("x".into()));

        let red = FeatureSpec::numeric("age", 18.0, 90.0, vec![30.0]).with_red_flag(99.0).validate();
        assert_eq!(red.unwrap_err(), SchemaError::ThresholdOutsideDomain("age".into()));

        assert_eq!(FeatureSpec::boolean(" ").validate().unwrap_err(), SchemaError::EmptyName);
    }

    #[test]
    fn validates_cases() {
        let s = schema();
        let ok = PatientCase::new(vec![
            FeatureValue::Number(47.0),
            FeatureValue::Level("low".into()),
            FeatureValue::Flag(false),
        ]);
        assert!(s.validate_case(&ok).is_ok());

        let young = ok.with_value(0, FeatureValue::Number(17.0));
        assert!(matches!(s.validate_case(&young), Err(CaseError::OutOfDomain { .. })));

        let kind = ok.with_value(2, FeatureValue::Number(1.0));
        assert_eq!(s.validate_case(&kind), Err(CaseError::WrongKind("smoker".into())));

        let short = PatientCase::new(ok.values[..2].to_vec());
        assert!(matches!(s.validate_case(&short), Err(CaseError::LengthMismatch { .. })));
    }

    #[test]
    fn named_round_trip() {
        let s = schema();
        let named: serde_json::Map<_, _> = serde_json::from_str(
            r#"{"age": 47, "load": "high", "smoker": "yes"}"#,
        )
        .unwrap();
        let case = s.case_from_named(&named).unwrap();
        assert_eq!(case.values[2], FeatureValue::Flag(true));
        let back = s.case_from_named(&s.case_to_named(&case)).unwrap();
        assert_eq!(back, case);

        let mut extra = named.clone();
        extra.insert("hemoglobin".into(), 12.into());
        assert_eq!(
            s.case_from_named(&extra),
            Err(CaseError::UnknownFeature("hemoglobin".into()))
        );
    }
}
