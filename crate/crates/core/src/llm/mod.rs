//! Prompt rendering, completion backends and structured-response parsing.

mod backend;
mod parse;
mod prompt;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{Backend, HttpBackend, HttpConfig, MockBackend, API_KEY_ENV};
pub use parse::{
    extract_json, parse_generate_response, parse_resolve_response, parse_source_response,
    parse_table_response, RowRejection, SuccessorProposal, TableParse,
};
pub use prompt::{
    render_data_gen_iso_prompt, render_data_gen_prompt, render_generate_prompt,
    render_resolve_prompt, render_source_prompt, REPAIR_SUFFIX,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("completion truncated at the token limit")]
    Truncated,
    #[error("mock script exhausted for `{0}`")]
    ScriptExhausted(String),
    #[error("no recognizable payload: {0}")]
    Unparseable(String),
    #[error("table columns {found:?} do not match expected {expected:?}")]
    WrongColumns {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("a cycle needs at least 2 edges, got {0}")]
    DegenerateCycle(usize),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl LlmError {
    /// Errors that a single re-ask with a format reminder may fix.
    pub fn is_format_error(&self) -> bool {
        matches!(self, LlmError::Unparseable(_) | LlmError::WrongColumns { .. })
    }
}

/// Sampling parameters sent with every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmParams {
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
}

impl Default for LlmParams {
    fn default() -> Self {
        Self {
            model: "gpt-4o-mini".to_string(),
            temperature: 0.9,
            top_p: 0.95,
            max_tokens: 8000,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
        }
    }
}

impl LlmParams {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0) {
            return Err(LlmError::Config(format!("temperature {} < 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LlmError::Config(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Source,
    Generate,
    Resolve,
    DataGen,
    DataGenIso,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Source => "source",
            PromptKind::Generate => "generate",
            PromptKind::Resolve => "resolve",
            PromptKind::DataGen => "data_gen",
            PromptKind::DataGenIso => "data_gen_iso",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub kind: PromptKind,
    /// Attribute, cycle label or comma-joined column list; drives mock dispatch.
    pub subject: Option<String>,
    pub text: String,
}

impl Prompt {
    /// `kind:subject`, the key format used by mock scripts.
    pub fn script_key(&self) -> String {
        format!("{}:{}", self.kind, self.subject.as_deref().unwrap_or(""))
    }

    pub fn with_repair_suffix(&self) -> Prompt {
        Prompt {
            text: format!("{}{}", self.text, REPAIR_SUFFIX),
            ..self.clone()
        }
    }
}

/// One prompt/response exchange, kept for audit and for building mock scripts
/// from live runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub kind: PromptKind,
    pub subject: Option<String>,
    pub prompt: String,
    pub response: String,
    pub parsed: serde_json::Value,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub exchanges: Vec<Exchange>,
}

impl Transcript {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.exchanges {
            out.push_str(&serde_json::to_string(e).expect("exchange serializes"));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.exchanges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exchanges.is_empty()
    }

    pub fn of_kind(&self, kind: PromptKind) -> impl Iterator<Item = &Exchange> {
        self.exchanges.iter().filter(move |e| e.kind == kind)
    }
}

/// Sends `prompt`, parses the reply, and on a format error re-asks once with
/// a reminder appended. Every exchange lands in `transcript`.
pub fn ask<T, F>(
    backend: &dyn Backend,
    prompt: &Prompt,
    transcript: &mut Transcript,
    parse: F,
) -> Result<T, LlmError>
where
    T: Serialize,
    F: Fn(&str) -> Result<T, LlmError>,
{
    let first = exchange(backend, prompt, transcript, &parse)?;
    match first {
        Err(e) if e.is_format_error() => {
            log::warn!("{}: {e}; re-asking once", prompt.script_key());
            exchange(backend, &prompt.with_repair_suffix(), transcript, &parse)?
        }
        other => other,
    }
}

fn exchange<T, F>(
    backend: &dyn Backend,
    prompt: &Prompt,
    transcript: &mut Transcript,
    parse: &F,
) -> Result<Result<T, LlmError>, LlmError>
where
    T: Serialize,
    F: Fn(&str) -> Result<T, LlmError>,
{
    let response = backend.complete(prompt)?;
    let parsed = parse(&response);
    let record = match &parsed {
        Ok(v) => serde_json::to_value(v).unwrap_or(serde_json::Value::Null),
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    };
    transcript.exchanges.push(Exchange {
        kind: prompt.kind,
        subject: prompt.subject.clone(),
        prompt: prompt.text.clone(),
        response,
        parsed: record,
    });
    Ok(parsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params() {
        let p = LlmParams::default();
        assert_eq!(p.temperature, 0.9);
        assert_eq!(p.top_p, 0.95);
        assert_eq!(p.max_tokens, 8000);
        assert_eq!((p.frequency_penalty, p.presence_penalty), (0.0, 0.0));
        assert!(p.validate().is_ok());
        assert!(LlmParams { top_p: 0.0, ..p.clone() }.validate().is_err());
        assert!(LlmParams { temperature: -1.0, ..p }.validate().is_err());
    }

    #[test]
    fn ask_repairs_once() {
        let mock = MockBackend::from_pairs([("source:", vec!["I think Age.", "[\"Age\"]"])]);
        let prompt = Prompt {
            kind: PromptKind::Source,
            subject: None,
            text: "find sources".into(),
        };
        let mut t = Transcript::default();
        let names = ask(&mock, &prompt, &mut t, parse_source_response).unwrap();
        assert_eq!(names, vec!["Age".to_string()]);
        assert_eq!(t.len(), 2);
        assert!(t.exchanges[1].prompt.ends_with(REPAIR_SUFFIX));

        let mock = MockBackend::from_pairs([("source:", vec!["nope", "still nope"])]);
        let mut t = Transcript::default();
        let err = ask(&mock, &prompt, &mut t, parse_source_response).unwrap_err();
        assert!(matches!(err, LlmError::Unparseable(_)));
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn transcript_jsonl_has_one_line_per_exchange() {
        let mock = MockBackend::from_pairs([("source:", vec!["[\"A\"]"])]);
        let prompt = Prompt {
            kind: PromptKind::Source,
            subject: None,
            text: "x".into(),
        };
        let mut t = Transcript::default();
        ask(&mock, &prompt, &mut t, parse_source_response).unwrap();
        let jsonl = t.to_jsonl();
        assert_eq!(jsonl.lines().count(), 1);
        let v: serde_json::Value = serde_json::from_str(jsonl.trim()).unwrap();
        assert_eq!(v["kind"], "source");
        assert_eq!(v["parsed"], serde_json::json!(["A"]));
    }
}
