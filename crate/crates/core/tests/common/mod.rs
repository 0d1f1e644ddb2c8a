//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reflect_core::counterfactual::Direction;
use reflect_core::model::{FeatureTerm, ModelError, Predictor, TreatmentCoefficients};
use reflect_core::questions::{LlmError, TextGenerator};
use reflect_core::schema::{FeatureKind, FeatureSchema, FeatureSpec, FeatureValue, PatientCase, Treatment};
use reflect_core::session::{Components, Engine, EngineConfig, EventLog};
use reflect_core::ReferenceModel;

pub fn inputs(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// The five reference questions with the values they were written for, as
/// `(template id, inputs, expected text)`. Single quotes around the Q9 values
/// are straight; the Q10 possessive keeps its typographic apostrophe.
pub fn reference_questions() -> Vec<(&'static str, BTreeMap<String, String>, &'static str)> {
    vec![
        (
            "q10_approaching_threshold",
            inputs(&[("age", "47"), ("threshold", "50"), ("corr_feature", "age"), ("effect", "surgery")]),
            "Is the patient\u{2019}s age of 47 years relevant to consider in this case? The patient of 47 years is \
             approaching the red-flag threshold which is 50 years. Age correlates with the effect of surgery.",
        ),
        (
            "q1_previous_surgery",
            inputs(&[("treatment", "surgery"), ("low", "15%"), ("high", "25%")]),
            "When was the specified surgery performed and at which location of the spine? Previous surgeries \
             reduce the effect of surgery by 15% - 25%.",
        ),
        (
            "q6_confidence",
            inputs(&[("treatment", "surgery"), ("p", "59.92%"), ("conf", "42.58%")]),
            "How confident are you about your decision? The confidence of the prediction for the most effective \
             treatment (surgery 59.92%) is at 42.58%.",
        ),
        (
            "q6_judgement",
            inputs(&[]),
            "Does the prediction change your initial judgement? If so, why?",
        ),
        (
            "q9_single_increase",
            inputs(&[
                ("feature", "expected recovery"),
                ("from", "no"),
                ("to", "yes"),
                ("treatment", "surgery"),
                ("delta", "22.92%"),
                ("old", "23.40%"),
                ("new", "46.32%"),
            ]),
            "Is it possible to change the patient's expected recovery from 'no' (current) to 'yes'? It would \
             increase the expected effectiveness of surgery by 22.92%, from 23.40% to 46.32%.",
        ),
    ]
}

/// A well-grounded question for the conservative-care prompt context.
pub const EXAMPLE_GENERATED_QUESTION: &str =
    "Why would you prioritize conservative care despite concerns about recovery expectation, prior surgery, and \
     neuromuscular conditions?";

/// Ten generated-looking questions that each name an off-schema variable.
pub fn injected_questions() -> Vec<String> {
    [
        "hemoglobin levels",
        "haemoglobin",
        "blood pressure",
        "cholesterol",
        "glucose",
        "hematocrit",
        "creatinine",
        "vitamin d",
        "bmi",
        "ferritin",
    ]
    .iter()
    .map(|term| format!("Has the patient's {term} been considered before choosing surgery over conservative care?"))
    .collect()
}

// ---------------------------------------------------------------------------
// Counterfactual oracle

/// Four mutable features (two booleans with equal weights, a three-level
/// categorical and a three-bin numeric) and one immutable boolean. Every
/// weight is a multiple of 0.25 so equal-effect changes tie exactly.
pub fn toy_model(rng: &mut ChaCha8Rng) -> ReferenceModel {
    let schema = FeatureSchema::new(
        vec![
            FeatureSpec::boolean("a").with_mutable(true),
            FeatureSpec::categorical("b", &["low", "mid", "high"]).with_mutable(true),
            FeatureSpec::boolean("c"),
            FeatureSpec::numeric("d", 0.0, 4.0, vec![1.0, 2.0]).with_mutable(true),
            FeatureSpec::boolean("e").with_mutable(true),
        ],
        vec![Treatment::new("t1"), Treatment::new("t2")],
    )
    .unwrap();
    let mut q = |lo: i32, hi: i32| f64::from(rng.random_range(lo..=hi)) * 0.25;
    let coefficients = (0..2)
        .map(|_| {
            let shared = q(-4, 4);
            TreatmentCoefficients {
                intercept: q(-2, 2),
                terms: vec![
                    FeatureTerm::Levels(vec![0.0, shared]),
                    FeatureTerm::Levels(vec![0.0, q(-4, 4), q(-4, 4)]),
                    FeatureTerm::Levels(vec![0.0, q(-4, 4)]),
                    FeatureTerm::Standardized {
                        mean: 0.0,
                        scale: 1.0,
                        weight: q(-2, 2),
                    },
                    FeatureTerm::Levels(vec![0.0, shared]),
                ],
            }
        })
        .collect();
    ReferenceModel::new(schema, coefficients).unwrap()
}

pub fn random_toy_case(schema: &FeatureSchema, rng: &mut ChaCha8Rng) -> PatientCase {
    reflect_core::fixtures::random_case(schema, rng)
}

pub type OracleBest = (Vec<(String, FeatureValue)>, f64, usize);

/// Best qualifying change found by enumerating the full cartesian product of
/// mutable-feature levels. Returns `(changed (feature, new value) pairs,
/// delta, number of candidates tied with the best)`.
pub fn brute_force(
    model: &dyn Predictor,
    case: &PatientCase,
    treatment: usize,
    direction: Direction,
    max_changes: usize,
    min_effect: f64,
) -> Option<OracleBest> {
    let schema = model.schema();
    let levels = schema.levels(case).unwrap();
    let mutable: Vec<usize> = (0..schema.len()).filter(|&i| schema.features()[i].mutable).collect();
    let base = model.responder_probabilities(case).unwrap()[treatment];

    // key: (changes, -|delta|, feature tuple, level tuple); smaller is better
    type Key = (usize, f64, Vec<usize>, Vec<usize>);
    let mut best: Option<(Key, PatientCase, f64)> = None;
    let mut ties = 0;
    let sizes: Vec<usize> = mutable.iter().map(|&i| schema.features()[i].domain_size()).collect();
    let total: usize = sizes.iter().product();
    for mut code in 0..total {
        let mut assignment = Vec::with_capacity(mutable.len());
        for s in sizes.iter().rev() {
            assignment.push(code % s);
            code /= s;
        }
        assignment.reverse();
        let mut values = case.values.clone();
        let mut feats = Vec::new();
        let mut lvls = Vec::new();
        for (&f, &l) in mutable.iter().zip(&assignment) {
            if l != levels[f] {
                let spec = &schema.features()[f];
                values[f] = match &spec.kind {
                    FeatureKind::Numeric { min, max, bins } => {
                        let lo = if l == 0 { *min } else { bins[l - 1] };
                        let hi = if l == bins.len() { *max } else { bins[l] };
                        FeatureValue::Number((lo + hi) / 2.0)
                    }
                    FeatureKind::Categorical { values } => FeatureValue::Level(values[l].clone()),
                    FeatureKind::Boolean => FeatureValue::Flag(l == 1),
                };
                feats.push(f);
                lvls.push(l);
            }
        }
        if feats.is_empty() || feats.len() > max_changes {
            continue;
        }
        let alt = PatientCase::new(values);
        let delta = model.responder_probabilities(&alt).unwrap()[treatment] - base;
        let qualifies = match direction {
            Direction::Increase => delta >= min_effect,
            Direction::Decrease => delta <= -min_effect,
        };
        if !qualifies {
            continue;
        }
        let key: Key = (feats.len(), -delta.abs(), feats, lvls);
        match &best {
            Some((b, _, _)) if (b.0, b.1) == (key.0, key.1) => {
                ties += 1;
                if (&key.2, &key.3) < (&b.2, &b.3) {
                    best = Some((key, alt, delta));
                }
            }
            Some((b, _, _)) if (key.0, key.1) > (b.0, b.1) => {}
            _ => {
                ties = 1;
                best = Some((key, alt, delta));
            }
        }
    }
    best.map(|(key, alt, delta)| {
        let changed = key.2.iter().map(|&f| (schema.features()[f].name.clone(), alt.values[f].clone())).collect();
        (changed, delta, ties)
    })
}

// ---------------------------------------------------------------------------
// Explainer oracle

/// Responder probability that is exactly linear in the explainer's
/// same-level indicators: `intercept + sum_j coef_j * [level_j == original_j]`.
pub struct IndicatorLinearModel {
    pub schema: FeatureSchema,
    pub original: Vec<usize>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl Predictor for IndicatorLinearModel {
    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn responder_probabilities(&self, case: &PatientCase) -> Result<Vec<f64>, ModelError> {
        let levels = self.schema.levels(case)?;
        let p = levels
            .iter()
            .zip(&self.original)
            .zip(&self.coefficients)
            .filter(|((l, o), _)| l == o)
            .fold(self.intercept, |acc, (_, c)| acc + c);
        Ok(vec![p; self.schema.treatments().len()])
    }
}

pub fn reference_model() -> ReferenceModel {
    ReferenceModel::reference()
}

pub fn random_cases(schema: &FeatureSchema, n: usize, seed: u64) -> Vec<PatientCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| reflect_core::fixtures::random_case(schema, &mut rng)).collect()
}

// ---------------------------------------------------------------------------
// Session log fixture

pub const STUB_ACCEPTED: &str = "Is the patient's expected recovery relevant to focus on before choosing surgery?";
pub const STUB_REJECTED: &str = "Have the patient's hemoglobin levels been checked before surgery?";

/// Cycles through an accepted completion, an off-schema completion, a
/// transport failure and an empty completion.
pub struct CyclingGenerator {
    calls: AtomicUsize,
}

impl CyclingGenerator {
    pub fn new() -> Self {
        CyclingGenerator {
            calls: AtomicUsize::new(0),
        }
    }
}

impl TextGenerator for CyclingGenerator {
    fn complete(&self, _prompt: &str) -> Result<String, LlmError> {
        match self.calls.fetch_add(1, Ordering::SeqCst) % 4 {
            0 => Ok(STUB_ACCEPTED.to_string()),
            1 => Ok(STUB_REJECTED.to_string()),
            2 => Err(LlmError::Transport("connection refused".into())),
            _ => Ok("   ".to_string()),
        }
    }
}

/// Twenty sessions exercising every event kind.
pub fn session_fixture_log(n_samples: usize) -> String {
    let components = Components::reference();
    let schema = components.model.schema().clone();
    let engine = Engine::new(
        components,
        EngineConfig {
            n_samples,
            ..EngineConfig::default()
        },
        EventLog::in_memory(),
    )
    .with_generator(Arc::new(CyclingGenerator::new()));
    let mut cases: Vec<PatientCase> = reflect_core::fixtures::reference_cases().into_iter().map(|(_, c)| c).collect();
    cases.extend(random_cases(&schema, 15, 2024));
    let treatments: Vec<String> = schema.treatments().iter().map(|t| t.id.clone()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for (i, case) in cases.into_iter().enumerate() {
        let id = engine.create_session(case, Some(i as u64)).unwrap().id;
        let t = &treatments[i % treatments.len()];
        let direction = if i % 2 == 0 { "increase" } else { "decrease" };
        engine.query_counterfactual(&id, t, direction, None).unwrap();
        if i % 5 == 0 {
            // repeated identical query
            engine.query_counterfactual(&id, t, direction, None).unwrap();
        }
        if i % 3 == 0 {
            engine.query_counterfactual(&id, t, direction, Some(1)).unwrap();
        }
        engine.generate_question(&id, "Q2").unwrap();
        // Q4 needs contrary evidence, which not every case has
        let _ = engine.generate_question(&id, "Q4");
        if i % 4 == 0 {
            engine.record_decision(&id, t, "fixture").unwrap();
            let values = vec![rng.random_range(1..=5), rng.random_range(1..=5)];
            engine.submit_survey(&id, values).unwrap();
        }
    }
    engine.log().contents().unwrap()
}
