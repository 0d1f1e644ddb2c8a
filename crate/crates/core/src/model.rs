//! Treatment-effectiveness prediction.
//!
//! The [`ReferenceModel`] is a per-treatment logistic model over the schema
//! features. Anything implementing [`Predictor`] can be explained and
//! searched for counterfactuals, which is how the tests plug in oracle
//! models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{CaseError, FeatureKind, FeatureSchema, PatientCase, SchemaError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("no probabilities given")]
    Empty,
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("unknown treatment '{0}'")]
    UnknownTreatment(String),
}

/// Something that maps a patient case to one responder probability per
/// schema treatment, in schema order.
pub trait Predictor: Send + Sync {
    fn schema(&self) -> &FeatureSchema;

    fn responder_probabilities(&self, case: &PatientCase) -> Result<Vec<f64>, ModelError>;

    fn responder_probability(&self, case: &PatientCase, treatment: usize) -> Result<f64, ModelError> {
        let probs = self.responder_probabilities(case)?;
        probs
            .get(treatment)
            .copied()
            .ok_or_else(|| ModelError::UnknownTreatment(treatment.to_string()))
    }
}

/// Contribution of one feature to one treatment's logit.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureTerm {
    /// `weight * (x - mean) / scale`
    Standardized { mean: f64, scale: f64, weight: f64 },
    /// One weight per categorical level (booleans: `[no, yes]`).
    Levels(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentCoefficients {
    pub intercept: f64,
    pub terms: Vec<FeatureTerm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    schema: FeatureSchema,
    coefficients: Vec<TreatmentCoefficients>,
}

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ReferenceModel {
    pub fn new(schema: FeatureSchema, coefficients: Vec<TreatmentCoefficients>) -> Result<Self, SchemaError> {
        if coefficients.len() != schema.treatments().len() {
            return Err(SchemaError::WeightShape("intercept".into()));
        }
        for (t, coef) in schema.treatments().iter().zip(&coefficients) {
            if coef.terms.len() != schema.len() {
                return Err(SchemaError::MissingWeight {
                    treatment: t.id.clone(),
                    feature: "*".into(),
                    level: None,
                });
            }
            for (spec, term) in schema.features().iter().zip(&coef.terms) {
                let ok = match (&spec.kind, term) {
                    (FeatureKind::Numeric { .. }, FeatureTerm::Standardized { scale, .. }) => *scale > 0.0,
                    (_, FeatureTerm::Levels(ws)) => {
                        !matches!(spec.kind, FeatureKind::Numeric { .. }) && ws.len() == spec.domain_size()
                    }
                    _ => false,
                };
                if !ok {
                    return Err(SchemaError::WeightShape(spec.name.clone()));
                }
            }
        }
        Ok(ReferenceModel { schema, coefficients })
    }

    /// The shipped reference model.
    pub fn reference() -> Self {
        crate::config::load_model(crate::config::REFERENCE_MODEL).expect("shipped reference model is valid")
    }

    pub fn coefficients(&self) -> &[TreatmentCoefficients] {
        &self.coefficients
    }

    /// Per-treatment linear predictors (before the logistic link).
    pub fn logits(&self, case: &PatientCase) -> Result<Vec<f64>, ModelError> {
        let levels = self.schema.levels(case)?;
        Ok(self
            .coefficients
            .iter()
            .map(|coef| {
                let mut z = coef.intercept;
                for ((term, value), level) in coef.terms.iter().zip(&case.values).zip(&levels) {
                    z += match term {
                        FeatureTerm::Standardized { mean, scale, weight } => {
                            let x = value.as_number().unwrap_or(*mean);
                            weight * (x - mean) / scale
                        }
                        FeatureTerm::Levels(ws) => ws[*level],
                    };
                }
                z
            })
            .collect())
    }
}

impl Predictor for ReferenceModel {
    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn responder_probabilities(&self, case: &PatientCase) -> Result<Vec<f64>, ModelError> {
        Ok(self.logits(case)?.into_iter().map(logistic).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentProbability {
    pub treatment: String,
    pub responder: f64,
    pub non_responder: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub per_treatment: Vec<TreatmentProbability>,
    pub confidence: f64,
    pub top_treatment: String,
}

impl Prediction {
    pub fn responder(&self, treatment: &str) -> Option<f64> {
        self.per_treatment
            .iter()
            .find(|t| t.treatment == treatment)
            .map(|t| t.responder)
    }

    pub fn top_probability(&self) -> f64 {
        self.responder(&self.top_treatment).unwrap_or(0.0)
    }
}

/// Index of the maximal probability; the earliest index wins ties.
pub fn top_index(probabilities: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in probabilities.iter().enumerate() {
        match best {
            Some(b) if probabilities[b] >= *p => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Margin confidence `2 * |p_top - 0.5|`.
pub fn confidence(probabilities: &[f64]) -> Result<f64, ModelError> {
    if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(ModelError::InvalidProbability(*p));
    }
    let top = top_index(probabilities).ok_or(ModelError::Empty)?;
    Ok(2.0 * (probabilities[top] - 0.5).abs())
}

pub fn predict(model: &dyn Predictor, case: &PatientCase) -> Result<Prediction, ModelError> {
    let probs = model.responder_probabilities(case)?;
    let top = top_index(&probs).ok_or(ModelError::Empty)?;
    let confidence = confidence(&probs)?;
    let treatments = model.schema().treatments();
    Ok(Prediction {
        per_treatment: treatments
            .iter()
            .zip(&probs)
            .map(|(t, p)| TreatmentProbability {
                treatment: t.id.clone(),
                responder: *p,
                non_responder: 1.0 - p,
            })
            .collect(),
        confidence,
        top_treatment: treatments[top].id.clone(),
    })
}
