//! Offline runs: a cases file in, one line of questions per case out.

use anyhow::Context;
use reflect_core::fixtures::parse_case_lines;
use reflect_core::questions::Question;
use reflect_core::session::Engine;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct BatchLine {
    pub id: String,
    pub session: String,
    pub top_treatment: String,
    pub confidence: f64,
    pub questions: Vec<Question>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub generated: Vec<Question>,
}

/// Creates one session per case and collects its question set, plus one
/// generated question per entry of `generate` (taxonomy ids).
pub fn run_batch(engine: &Engine, cases: &str, generate: &[String]) -> anyhow::Result<Vec<BatchLine>> {
    let mut out = Vec::new();
    for line in parse_case_lines(cases)? {
        let case = engine.parse_case(&line.case).with_context(|| format!("case '{}'", line.id))?;
        let session = engine.create_session(case, line.seed).with_context(|| format!("case '{}'", line.id))?;
        let mut generated = Vec::new();
        for taxonomy_id in generate {
            let q = engine
                .generate_question(&session.id, taxonomy_id)
                .with_context(|| format!("case '{}', {taxonomy_id}", line.id))?;
            generated.push(q);
        }
        out.push(BatchLine {
            id: line.id,
            session: session.id,
            top_treatment: session.prediction.top_treatment,
            confidence: session.prediction.confidence,
            questions: session.questions,
            generated,
        });
    }
    Ok(out)
}

pub fn to_json_lines(lines: &[BatchLine]) -> anyhow::Result<String> {
    let mut text = String::new();
    for line in lines {
        text.push_str(&serde_json::to_string(line)?);
        text.push('\n');
    }
    Ok(text)
}
