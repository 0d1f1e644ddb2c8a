//! Treatment-effectiveness predictions for low-back-pain cases, paired with
//! feature-importance explanations, counterfactual what-if searches and
//! data-driven reflective questions.

pub mod config;
pub mod counterfactual;
pub mod engagement;
pub mod explainer;
pub mod fixtures;
pub mod format;
mod linalg;
pub mod model;
pub mod questions;
pub mod schema;
pub mod session;

pub use counterfactual::{search, CounterfactualQuery, CounterfactualResult, Direction, SearchConfig};
pub use explainer::{explain, ExplainerConfig, Explanation};
pub use model::{predict, Prediction, Predictor, ReferenceModel};
pub use schema::{FeatureSchema, FeatureValue, PatientCase};
