//! Minimal-change counterfactual search.
//!
//! Every alternative case that changes between 1 and `max_changes` mutable
//! features is enumerated (numeric features move to bin midpoints). The
//! selected candidate is the lexicographic optimum of
//! (fewest changed features, largest |delta|, earliest enumeration index)
//! among candidates whose delta has the requested sign and clears
//! `min_effect`.

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, Predictor};
use crate::schema::{FeatureSchema, FeatureValue, PatientCase};

pub const DEFAULT_MAX_CHANGES: usize = 3;
pub const DEFAULT_MIN_EFFECT: f64 = 0.01;
pub const MAX_CANDIDATES: u128 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CounterfactualError {
    #[error("unknown treatment '{0}'")]
    UnknownTreatment(String),
    #[error("invalid direction '{0}' (expected 'increase' or 'decrease')")]
    InvalidDirection(String),
    #[error("max_changes must be at least 1")]
    InvalidMaxChanges,
    #[error("{0} candidates exceed the enumeration limit of {MAX_CANDIDATES}")]
    TooManyCandidates(u128),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
}

impl Direction {
    fn admits(self, delta: f64, min_effect: f64) -> bool {
        match self {
            Direction::Increase => delta > 0.0 && delta >= min_effect,
            Direction::Decrease => delta < 0.0 && -delta >= min_effect,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Increase => "increase",
            Direction::Decrease => "decrease",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = CounterfactualError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "increase" => Ok(Direction::Increase),
            "decrease" => Ok(Direction::Decrease),
            other => Err(CounterfactualError::InvalidDirection(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualQuery {
    pub treatment: String,
    pub direction: Direction,
    pub max_changes: usize,
}

impl CounterfactualQuery {
    pub fn new(treatment: &str, direction: Direction) -> Self {
        CounterfactualQuery {
            treatment: treatment.to_string(),
            direction,
            max_changes: DEFAULT_MAX_CHANGES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub min_effect: f64,
    pub parallel: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            min_effect: DEFAULT_MIN_EFFECT,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureChange {
    pub feature: String,
    pub old: FeatureValue,
    pub new: FeatureValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub treatment: String,
    pub direction: Direction,
    pub changed: Vec<FeatureChange>,
    pub old_p: f64,
    pub new_p: f64,
    pub delta: f64,
}

/// One alternative case. `changes` holds `(feature index, level index)` in
/// ascending feature order.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub changes: Vec<(usize, usize)>,
    pub case: PatientCase,
}

/// Closed-form number of candidates: the sum over non-empty subsets of at
/// most `max_changes` mutable features of the product of (domain size - 1).
pub fn candidate_count(schema: &FeatureSchema, max_changes: usize) -> u128 {
    // elementary symmetric sums e_0..e_k of the alternative counts
    let mut e = vec![0u128; max_changes + 1];
    e[0] = 1;
    for i in schema.mutable_features() {
        let alts = (schema.features()[i].domain_size() - 1) as u128;
        for k in (1..=max_changes).rev() {
            e[k] = e[k].saturating_add(e[k - 1].saturating_mul(alts));
        }
    }
    e[1..].iter().fold(0u128, |acc, v| acc.saturating_add(*v))
}

/// Enumerates candidates in deterministic order: by number of changes, then
/// feature combination (lexicographic), then alternative levels with the
/// last feature varying fastest.
pub fn enumerate_candidates<'a>(
    schema: &'a FeatureSchema,
    case: &'a PatientCase,
    max_changes: usize,
) -> Result<impl Iterator<Item = Candidate> + 'a, ModelError> {
    let levels = schema.levels(case)?;
    let mutable = schema.mutable_features();
    let iter = (1..=max_changes)
        .flat_map(move |k| mutable.clone().into_iter().combinations(k))
        .flat_map(move |combo| {
            let alternatives: Vec<Vec<(usize, usize)>> = combo
                .iter()
                .map(|&f| {
                    (0..schema.features()[f].domain_size())
                        .filter(|&l| l != levels[f])
                        .map(|l| (f, l))
                        .collect()
                })
                .collect();
            alternatives.into_iter().multi_cartesian_product()
        })
        .enumerate()
        .map(move |(index, changes)| {
            let mut values = case.values.clone();
            for &(f, l) in &changes {
                values[f] = schema.features()[f].level_value(l).expect("level in range");
            }
            Candidate {
                index,
                changes,
                case: PatientCase::new(values),
            }
        });
    Ok(iter)
}

pub fn search(
    model: &dyn Predictor,
    case: &PatientCase,
    query: &CounterfactualQuery,
) -> Result<Option<CounterfactualResult>, CounterfactualError> {
    search_with(model, case, query, &SearchConfig::default())
}

#[derive(Clone, Copy)]
struct Scored {
    index: usize,
    n_changes: usize,
    delta: f64,
}

impl Scored {
    // true when self is strictly preferred to other at equal change count
    fn beats(&self, other: &Scored) -> bool {
        let (a, b) = (self.delta.abs(), other.delta.abs());
        a > b || (a == b && self.index < other.index)
    }
}

pub fn search_with(
    model: &dyn Predictor,
    case: &PatientCase,
    query: &CounterfactualQuery,
    config: &SearchConfig,
) -> Result<Option<CounterfactualResult>, CounterfactualError> {
    let schema = model.schema();
    let t_idx = schema
        .treatment_index(&query.treatment)
        .ok_or_else(|| CounterfactualError::UnknownTreatment(query.treatment.clone()))?;
    if query.max_changes == 0 {
        return Err(CounterfactualError::InvalidMaxChanges);
    }
    let count = candidate_count(schema, query.max_changes);
    if count > MAX_CANDIDATES {
        return Err(CounterfactualError::TooManyCandidates(count));
    }
    let old_p = model.responder_probability(case, t_idx)?;

    let candidates: Vec<Candidate> = enumerate_candidates(schema, case, query.max_changes)?.collect();
    let score = |c: &Candidate| -> Result<Option<Scored>, ModelError> {
        let delta = model.responder_probability(&c.case, t_idx)? - old_p;
        Ok(query.direction.admits(delta, config.min_effect).then_some(Scored {
            index: c.index,
            n_changes: c.changes.len(),
            delta,
        }))
    };

    let mut best: Option<Scored> = None;
    // candidates are grouped by change count in ascending order
    for (_, group) in &candidates.iter().chunk_by(|c| c.changes.len()) {
        let group: Vec<&Candidate> = group.collect();
        let scored: Vec<Scored> = if config.parallel {
            group
                .par_iter()
                .map(|c| score(c))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .flatten()
                .collect()
        } else {
            group
                .iter()
                .map(|c| score(c))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .flatten()
                .collect()
        };
        for s in scored {
            if best.as_ref().is_none_or(|b| s.beats(b)) {
                best = Some(s);
            }
        }
        if best.is_some() {
            break;
        }
    }

    let Some(best) = best else {
        return Ok(None);
    };
    let winner = &candidates[best.index];
    debug_assert_eq!(winner.changes.len(), best.n_changes);
    let new_p = model.responder_probability(&winner.case, t_idx)?;
    let changed = winner
        .changes
        .iter()
        .map(|&(f, _)| FeatureChange {
            feature: schema.features()[f].name.clone(),
            old: case.values[f].clone(),
            new: winner.case.values[f].clone(),
        })
        .collect();
    Ok(Some(CounterfactualResult {
        treatment: query.treatment.clone(),
        direction: query.direction,
        changed,
        old_p,
        new_p,
        delta: new_p - old_p,
    }))
}
