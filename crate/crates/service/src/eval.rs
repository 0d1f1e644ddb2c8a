//! Grounding evaluation: append each blocklisted term to each template
//! question of a set of cases and count how many the validator rejects for
//! that term.

use reflect_core::questions::{validate_grounding, Grounding, RejectionReason};
use reflect_core::schema::PatientCase;
use reflect_core::session::{Engine, SessionError};
use serde::Serialize;

#[derive(Debug, Clone, Default, Serialize)]
pub struct GroundingReport {
    pub cases: usize,
    pub templates: usize,
    pub templates_accepted: usize,
    pub injected: usize,
    pub rejected: usize,
    /// Injected questions that slipped through, for inspection.
    pub missed: Vec<String>,
    pub template_failures: Vec<String>,
}

impl GroundingReport {
    pub fn rejection_rate(&self) -> f64 {
        ratio(self.rejected, self.injected)
    }

    pub fn acceptance_rate(&self) -> f64 {
        ratio(self.templates_accepted, self.templates)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        1.0
    } else {
        a as f64 / b as f64
    }
}

pub fn inject(question: &str, term: &str) -> String {
    format!("{question} Have the patient's {term} results been checked?")
}

pub fn evaluate_grounding(engine: &Engine, cases: &[PatientCase]) -> Result<GroundingReport, SessionError> {
    let c = engine.components();
    let blocklist = &c.catalog.grounding.blocklist;
    let mut report = GroundingReport {
        cases: cases.len(),
        ..GroundingReport::default()
    };
    for case in cases {
        let session = engine.create_session(case.clone(), None)?;
        for q in &session.questions {
            report.templates += 1;
            match validate_grounding(&q.text, &c.lexicon) {
                Ok(Grounding::Accepted) => report.templates_accepted += 1,
                _ => report.template_failures.push(q.text.clone()),
            }
            for term in blocklist {
                let text = inject(&q.text, term);
                report.injected += 1;
                let caught = match validate_grounding(&text, &c.lexicon) {
                    Ok(Grounding::Rejected(reasons)) => reasons
                        .iter()
                        .any(|r| matches!(r, RejectionReason::Blocklist { term: t } if t == &term.to_lowercase())),
                    _ => false,
                };
                if caught {
                    report.rejected += 1;
                } else {
                    report.missed.push(text);
                }
            }
        }
    }
    Ok(report)
}
