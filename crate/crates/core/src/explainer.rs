//! Local surrogate explanations.
//!
//! Around one case, features are perturbed independently, each perturbed
//! sample is encoded as binary "same bin / same value as the original"
//! indicators, samples are weighted by an exponential kernel on their
//! Hamming distance to the original, and a weighted ridge regression of the
//! model's responder probability on the indicators gives the signed
//! per-feature contributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Cholesky, SquareMatrix};
use crate::model::{ModelError, Predictor};
use crate::schema::{FeatureKind, PatientCase};

pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("n_samples must be at least {MIN_SAMPLES}, got {0}")]
    TooFewSamples(usize),
    #[error("unknown treatment '{0}'")]
    UnknownTreatment(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("surrogate normal equations are not positive definite")]
    Singular,
    #[error("explanation has no contributions")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainerConfig {
    /// Kernel width is `kernel_width_factor * sqrt(#features)`.
    pub kernel_width_factor: f64,
    pub ridge_lambda: f64,
    pub perturb_probability: f64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        ExplainerConfig {
            kernel_width_factor: 0.75,
            ridge_lambda: 1e-3,
            perturb_probability: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureContribution {
    pub feature: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub treatment: String,
    /// Sorted by descending `|weight|`, ties in schema order.
    pub contributions: Vec<FeatureContribution>,
    pub intercept: f64,
    pub fidelity_r2: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// `exp(-d² / width²)`
pub fn kernel_weight(distance: f64, width: f64) -> f64 {
    (-(distance * distance) / (width * width)).exp()
}

/// Perturbed neighbourhood of a case: indicator rows plus the perturbed cases.
#[derive(Debug, Clone)]
pub struct Neighbourhood {
    pub indicators: Vec<Vec<f64>>,
    pub cases: Vec<PatientCase>,
}

/// Draws `n_samples` perturbations; the first sample is the case itself.
pub fn sample_neighbourhood(
    model: &dyn Predictor,
    case: &PatientCase,
    n_samples: usize,
    seed: u64,
    perturb_probability: f64,
) -> Result<Neighbourhood, ExplainError> {
    let schema = model.schema();
    let original = schema.levels(case).map_err(ModelError::from)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indicators = Vec::with_capacity(n_samples);
    let mut cases = Vec::with_capacity(n_samples);
    indicators.push(vec![1.0; schema.len()]);
    cases.push(case.clone());
    for _ in 1..n_samples {
        let mut values = case.values.clone();
        let mut row = vec![1.0; schema.len()];
        for (j, spec) in schema.features().iter().enumerate() {
            if !rng.random_bool(perturb_probability) {
                continue;
            }
            let level = rng.random_range(0..spec.domain_size());
            values[j] = match &spec.kind {
                FeatureKind::Numeric { .. } => {
                    let (lo, hi) = spec.bin_bounds(level).expect("bin in range");
                    crate::schema::FeatureValue::Number(lo + rng.random::<f64>() * (hi - lo))
                }
                _ => spec.level_value(level).expect("level in range"),
            };
            if level != original[j] {
                row[j] = 0.0;
            }
        }
        indicators.push(row);
        cases.push(PatientCase::new(values));
    }
    Ok(Neighbourhood { indicators, cases })
}

/// Result of a weighted ridge fit with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub r2: f64,
}

/// Minimizes `Σ wᵢ (yᵢ - b - xᵢ·β)² + λ‖β‖²`.
pub fn weighted_ridge(x: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64) -> Result<RidgeFit, ExplainError> {
    let p = x.first().map_or(0, Vec::len);
    let sw: f64 = w.iter().sum();
    let mut x_mean = vec![0.0; p];
    let mut y_mean = 0.0;
    for ((row, yi), wi) in x.iter().zip(y).zip(w) {
        for (m, v) in x_mean.iter_mut().zip(row) {
            *m += wi * v;
        }
        y_mean += wi * yi;
    }
    x_mean.iter_mut().for_each(|m| *m /= sw);
    y_mean /= sw;

    let mut a = SquareMatrix::zeros(p);
    let mut b = vec![0.0; p];
    let mut centered = vec![0.0; p];
    for ((row, yi), wi) in x.iter().zip(y).zip(w) {
        for k in 0..p {
            centered[k] = row[k] - x_mean[k];
        }
        let yc = yi - y_mean;
        for i in 0..p {
            b[i] += wi * centered[i] * yc;
            for j in 0..=i {
                a.add(i, j, wi * centered[i] * centered[j]);
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            a.set(j, i, a.get(i, j));
        }
        a.add(i, i, lambda);
    }
    let beta = Cholesky::factor(&a).ok_or(ExplainError::Singular)?.solve(&b);
    let intercept = y_mean - x_mean.iter().zip(&beta).map(|(m, c)| m * c).sum::<f64>();

    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for ((row, yi), wi) in x.iter().zip(y).zip(w) {
        let fit = intercept + row.iter().zip(&beta).map(|(v, c)| v * c).sum::<f64>();
        ss_res += wi * (yi - fit).powi(2);
        ss_tot += wi * (yi - y_mean).powi(2);
    }
    let r2 = if ss_tot <= 1e-20 * sw {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(RidgeFit {
        coefficients: beta,
        intercept,
        r2,
    })
}

pub fn explain(
    model: &dyn Predictor,
    case: &PatientCase,
    treatment: &str,
    n_samples: usize,
    seed: u64,
) -> Result<Explanation, ExplainError> {
    explain_with(model, case, treatment, n_samples, seed, &ExplainerConfig::default())
}

pub fn explain_with(
    model: &dyn Predictor,
    case: &PatientCase,
    treatment: &str,
    n_samples: usize,
    seed: u64,
    config: &ExplainerConfig,
) -> Result<Explanation, ExplainError> {
    if n_samples < MIN_SAMPLES {
        return Err(ExplainError::TooFewSamples(n_samples));
    }
    let schema = model.schema();
    let t_idx = schema
        .treatment_index(treatment)
        .ok_or_else(|| ExplainError::UnknownTreatment(treatment.to_string()))?;
    let hood = sample_neighbourhood(model, case, n_samples, seed, config.perturb_probability)?;

    let width = config.kernel_width_factor * (schema.len() as f64).sqrt();
    let weights: Vec<f64> = hood
        .indicators
        .iter()
        .map(|row| {
            let d = row.iter().filter(|v| **v == 0.0).count() as f64;
            kernel_weight(d, width)
        })
        .collect();
    let targets = hood
        .cases
        .iter()
        .map(|c| model.responder_probability(c, t_idx))
        .collect::<Result<Vec<_>, _>>()?;

    let fit = weighted_ridge(&hood.indicators, &targets, &weights, config.ridge_lambda)?;
    let mut contributions: Vec<FeatureContribution> = schema
        .features()
        .iter()
        .zip(&fit.coefficients)
        .map(|(spec, w)| FeatureContribution {
            feature: spec.name.clone(),
            weight: *w,
        })
        .collect();
    // stable sort keeps schema order among equal magnitudes
    contributions.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()));

    Ok(Explanation {
        treatment: treatment.to_string(),
        contributions,
        intercept: fit.intercept,
        fidelity_r2: fit.r2,
        n_samples,
        seed,
    })
}

pub fn top_feature(explanation: &Explanation) -> Result<&FeatureContribution, ExplainError> {
    explanation.contributions.first().ok_or(ExplainError::Empty)
}

pub fn negative_features(explanation: &Explanation) -> Vec<&FeatureContribution> {
    explanation.contributions.iter().filter(|c| c.weight < 0.0).collect()
}

pub fn positive_features(explanation: &Explanation) -> Vec<&FeatureContribution> {
    explanation.contributions.iter().filter(|c| c.weight > 0.0).collect()
}
