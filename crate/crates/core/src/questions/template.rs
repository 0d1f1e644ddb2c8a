//! Placeholder templates.
//!
//! Patterns use `{name}` placeholders. `{name:cap}` upper-cases the first
//! character of the substituted value. `{{` and `}}` are literal braces.
//! Rendering performs substitution only.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Grounding, Question, QuestionSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("template '{template}': unbalanced brace at byte {at}")]
    Syntax { template: String, at: usize },
    #[error("template '{template}': unknown filter '{filter}'")]
    Filter { template: String, filter: String },
    #[error("template '{template}': placeholders {placeholders:?} do not match required inputs {required:?}")]
    Declaration {
        template: String,
        placeholders: Vec<String>,
        required: Vec<String>,
    },
    #[error("template '{template}': missing input '{input}'")]
    MissingInput { template: String, input: String },
    #[error("template '{template}': unknown placeholder '{input}'")]
    UnknownPlaceholder { template: String, input: String },
    #[error("unknown template '{0}'")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Literal(String),
    Slot { name: String, capitalize: bool },
}

fn parse_pattern(id: &str, pattern: &str) -> Result<Vec<Segment>, TemplateError> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut chars = pattern.char_indices().peekable();
    while let Some((at, c)) = chars.next() {
        match c {
            '{' if chars.peek().map(|(_, n)| *n) == Some('{') => {
                chars.next();
                literal.push('{');
            }
            '}' if chars.peek().map(|(_, n)| *n) == Some('}') => {
                chars.next();
                literal.push('}');
            }
            '{' => {
                let mut body = String::new();
                loop {
                    match chars.next() {
                        Some((_, '}')) => break,
                        Some((_, '{')) | None => {
                            return Err(TemplateError::Syntax {
                                template: id.to_string(),
                                at,
                            })
                        }
                        Some((_, ch)) => body.push(ch),
                    }
                }
                let (name, filter) = match body.split_once(':') {
                    Some((n, f)) => (n, Some(f)),
                    None => (body.as_str(), None),
                };
                let capitalize = match filter {
                    None => false,
                    Some("cap") => true,
                    Some(other) => {
                        return Err(TemplateError::Filter {
                            template: id.to_string(),
                            filter: other.to_string(),
                        })
                    }
                };
                if name.is_empty() {
                    return Err(TemplateError::Syntax {
                        template: id.to_string(),
                        at,
                    });
                }
                if !literal.is_empty() {
                    segments.push(Segment::Literal(std::mem::take(&mut literal)));
                }
                segments.push(Segment::Slot {
                    name: name.to_string(),
                    capitalize,
                });
            }
            '}' => {
                return Err(TemplateError::Syntax {
                    template: id.to_string(),
                    at,
                })
            }
            _ => literal.push(c),
        }
    }
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    Ok(segments)
}

/// Raw catalog entry before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub id: String,
    pub taxonomy_id: String,
    pub pattern: String,
    pub required_inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionTemplate {
    spec: TemplateSpec,
    segments: Vec<Segment>,
}

impl QuestionTemplate {
    /// Parses the pattern and checks that its placeholders and the declared
    /// inputs are the same set.
    pub fn new(spec: TemplateSpec) -> Result<Self, TemplateError> {
        let segments = parse_pattern(&spec.id, &spec.pattern)?;
        let placeholders: BTreeSet<&str> = segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot { name, .. } => Some(name.as_str()),
                Segment::Literal(_) => None,
            })
            .collect();
        let required: BTreeSet<&str> = spec.required_inputs.iter().map(String::as_str).collect();
        if placeholders != required || required.len() != spec.required_inputs.len() {
            return Err(TemplateError::Declaration {
                template: spec.id.clone(),
                placeholders: placeholders.iter().map(|s| s.to_string()).collect(),
                required: spec.required_inputs.clone(),
            });
        }
        Ok(QuestionTemplate { spec, segments })
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn taxonomy_id(&self) -> &str {
        &self.spec.taxonomy_id
    }

    pub fn pattern(&self) -> &str {
        &self.spec.pattern
    }

    pub fn required_inputs(&self) -> &[String] {
        &self.spec.required_inputs
    }

    pub fn substitute(&self, inputs: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        if let Some(extra) = inputs.keys().find(|k| !self.spec.required_inputs.contains(k)) {
            return Err(TemplateError::UnknownPlaceholder {
                template: self.spec.id.clone(),
                input: extra.clone(),
            });
        }
        let mut out = String::new();
        for segment in &self.segments {
            match segment {
                Segment::Literal(s) => out.push_str(s),
                Segment::Slot { name, capitalize } => {
                    let value = inputs.get(name).ok_or_else(|| TemplateError::MissingInput {
                        template: self.spec.id.clone(),
                        input: name.clone(),
                    })?;
                    if *capitalize {
                        let mut cs = value.chars();
                        if let Some(first) = cs.next() {
                            out.extend(first.to_uppercase());
                            out.push_str(cs.as_str());
                        }
                    } else {
                        out.push_str(value);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Renders a template question. Template questions only interpolate schema
/// terms, so they are accepted without running the grounding validator.
pub fn render_template(
    template: &QuestionTemplate,
    inputs: &BTreeMap<String, String>,
) -> Result<Question, TemplateError> {
    let text = template.substitute(inputs)?;
    Ok(Question {
        text,
        taxonomy_id: template.taxonomy_id().to_string(),
        template_id: Some(template.id().to_string()),
        source: QuestionSource::Template,
        grounding: Grounding::Accepted,
        inputs_used: inputs.clone(),
        fallback_reason: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn template(pattern: &str, inputs: &[&str]) -> Result<QuestionTemplate, TemplateError> {
        QuestionTemplate::new(TemplateSpec {
            id: "t".into(),
            taxonomy_id: "Q1".into(),
            pattern: pattern.into(),
            required_inputs: inputs.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn inputs(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn substitutes_and_capitalizes() {
        let t = template("{x:cap} and {x}, {{literal}}", &["x"]).unwrap();
        assert_eq!(t.substitute(&inputs(&[("x", "age")])).unwrap(), "Age and age, {literal}");
    }

    #[test]
    fn declaration_must_match() {
        assert!(matches!(template("{a} {b}", &["a"]), Err(TemplateError::Declaration { .. })));
        assert!(matches!(template("{a}", &["a", "b"]), Err(TemplateError::Declaration { .. })));
        assert!(matches!(template("{a}", &["a", "a"]), Err(TemplateError::Declaration { .. })));
        assert!(matches!(template("{a", &["a"]), Err(TemplateError::Syntax { .. })));
        assert!(matches!(template("a}", &[]), Err(TemplateError::Syntax { .. })));
        assert!(matches!(template("{a:upper}", &["a"]), Err(TemplateError::Filter { .. })));
    }

    #[test]
    fn missing_and_unknown_inputs() {
        let t = template("{a} {b}", &["a", "b"]).unwrap();
        assert!(matches!(
            render_template(&t, &inputs(&[("a", "1")])),
            Err(TemplateError::MissingInput { .. })
        ));
        assert!(matches!(
            render_template(&t, &inputs(&[("a", "1"), ("b", "2"), ("c", "3")])),
            Err(TemplateError::UnknownPlaceholder { .. })
        ));
        let q = render_template(&t, &inputs(&[("a", "1"), ("b", "2")])).unwrap();
        assert_eq!(q.text, "1 2");
        assert_eq!(q.source, QuestionSource::Template);
        assert_eq!(q.grounding, Grounding::Accepted);
    }
}
