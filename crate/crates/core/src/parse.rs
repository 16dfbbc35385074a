//! Structured task outputs from raw model text.
//!
//! Parsers never fail on malformed text; they return what they could
//! recover plus warnings. The only hard failure is an action prediction
//! that contains no element id at all.

use serde::{Deserialize, Serialize};

use crate::prompt::{Question, TaskKind, QG_ASK_MARKER, QG_ENUM_MARKER};

pub const SOQ: &str = "<SOQ>";
pub const EOQ: &str = "<EOQ>";
pub const SOS: &str = "<SOS>";
pub const EOS: &str = "<EOS>";
pub const SOA: &str = "<SOA>";
pub const EOA: &str = "<EOA>";
pub const SOI: &str = "<SOI>";
pub const EOI: &str = "<EOI>";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tagged {
    pub spans: Vec<String>,
    pub warnings: Vec<String>,
}

/// Every span between an open tag and the next close tag, in order. A final
/// unterminated span runs to end of text and is reported as a warning.
pub fn parse_tagged(raw: &str, open_tag: &str, close_tag: &str) -> Tagged {
    let mut out = Tagged::default();
    if open_tag.is_empty() || close_tag.is_empty() {
        out.warnings.push("empty delimiter".into());
        return out;
    }
    let mut rest = raw;
    while let Some(start) = rest.find(open_tag) {
        let body = &rest[start + open_tag.len()..];
        match body.find(close_tag) {
            Some(end) => {
                out.spans.push(body[..end].to_owned());
                rest = &body[end + close_tag.len()..];
            }
            None => {
                out.spans.push(body.to_owned());
                out.warnings.push(format!("unterminated {open_tag} span"));
                break;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ParsedValue {
    Questions(Vec<Question>),
    Summary(String),
    Answer(String),
    Action(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutput {
    pub value: ParsedValue,
    pub raw_text: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no element id found in model output")]
    NoActionFound,
}

/// Splits a trailing `(id=K, id=J)` annotation off a question.
fn split_annotation(span: &str, warnings: &mut Vec<String>) -> Question {
    let text = span.trim();
    if let Some(open) = text.strip_suffix(')').and_then(|t| t.rfind('(')) {
        let inner = &text[open + 1..text.len() - 1];
        if inner.trim_start().starts_with("id=") {
            let question = text[..open].trim().to_owned();
            let parsed: Option<Vec<usize>> = inner
                .split(',')
                .map(|item| item.trim().strip_prefix("id=").and_then(|n| n.trim().parse().ok()))
                .collect();
            return match parsed {
                Some(element_indexes) => Question { text: question, element_indexes },
                None => {
                    warnings.push(format!("malformed id annotation ({inner})"));
                    Question { text: question, element_indexes: Vec::new() }
                }
            };
        }
    }
    Question { text: text.to_owned(), element_indexes: Vec::new() }
}

pub fn parse_questions(raw: &str) -> TaskOutput {
    let Tagged { spans, mut warnings } = parse_tagged(raw, SOQ, EOQ);
    let questions = spans.iter().map(|s| split_annotation(s, &mut warnings)).collect();
    TaskOutput { value: ParsedValue::Questions(questions), raw_text: raw.to_owned(), warnings }
}

fn first_span(raw: &str, open: &str, close: &str) -> (String, Vec<String>) {
    let Tagged { spans, mut warnings } = parse_tagged(raw, open, close);
    match spans.into_iter().next() {
        Some(span) => (span.trim().to_owned(), warnings),
        None => {
            // Some backends drop the opening delimiter; keep the first line.
            warnings.push(format!("no {open} span; using first line"));
            let line = raw.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or_default();
            (line.replace(close, "").trim().to_owned(), warnings)
        }
    }
}

pub fn parse_summary(raw: &str) -> TaskOutput {
    let (s, warnings) = first_span(raw, SOS, EOS);
    TaskOutput { value: ParsedValue::Summary(s), raw_text: raw.to_owned(), warnings }
}

pub fn parse_answer(raw: &str) -> TaskOutput {
    let (s, warnings) = first_span(raw, SOA, EOA);
    TaskOutput { value: ParsedValue::Answer(s), raw_text: raw.to_owned(), warnings }
}

fn leading_integer(s: &str) -> Option<usize> {
    let digits: String = s.trim_start().chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

/// The first `<SOI>N<EOI>` span, falling back to the first `id=N` in the text.
pub fn parse_action(raw: &str) -> Result<TaskOutput, ParseError> {
    let Tagged { spans, mut warnings } = parse_tagged(raw, SOI, EOI);
    if let Some(span) = spans.first() {
        match span.trim().parse::<usize>() {
            Ok(index) => {
                return Ok(TaskOutput { value: ParsedValue::Action(index), raw_text: raw.to_owned(), warnings });
            }
            Err(_) => warnings.push(format!("non-numeric {SOI} span `{}`", span.trim())),
        }
    }
    // A continuation of "Prediction: id=" may also be just "29<EOI>".
    let candidates = raw.find(EOI).map(|end| &raw[..end]).into_iter().filter(|head| !head.contains(SOI));
    for head in candidates {
        if let Ok(index) = head.trim().parse::<usize>() {
            warnings.push(format!("missing {SOI} tag"));
            return Ok(TaskOutput { value: ParsedValue::Action(index), raw_text: raw.to_owned(), warnings });
        }
    }
    for (pos, _) in raw.match_indices("id=") {
        if let Some(index) = leading_integer(&raw[pos + 3..]) {
            warnings.push("no tagged id; used first id= mention".into());
            return Ok(TaskOutput { value: ParsedValue::Action(index), raw_text: raw.to_owned(), warnings });
        }
    }
    Err(ParseError::NoActionFound)
}

/// Reasoning recovered from a question-generation continuation.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CotParse {
    pub declared_count: Option<usize>,
    pub summary: Option<String>,
    /// Deduplicated, first-occurrence order.
    pub enumerated_indexes: Vec<usize>,
    pub warnings: Vec<String>,
}

fn ids_in(s: &str) -> Vec<usize> {
    let mut out = Vec::new();
    for (pos, _) in s.match_indices("id=") {
        let tail = &s[pos + 3..];
        if !tail.starts_with(|c: char| c.is_ascii_digit()) {
            continue;
        }
        if let Some(i) = leading_integer(tail) {
            if !out.contains(&i) {
                out.push(i);
            }
        }
    }
    out
}

const PURPOSE_Q: &str = "What is the purpose of the screen?";
const COUNT_Q: &str = "How many input tags are there on the screen?";

pub fn parse_cot(raw: &str) -> CotParse {
    let mut out = CotParse::default();

    if let Some(pos) = raw.find(COUNT_Q) {
        let after = &raw[pos + COUNT_Q.len()..];
        if let Some(a) = after.find("A:") {
            out.declared_count = leading_integer(&after[a + 2..]);
        }
    }

    // The prompt normally stops right after the purpose question's "A:", so
    // the continuation starts with the summary itself.
    let summary_region = match raw.find(PURPOSE_Q) {
        Some(pos) => {
            let after = &raw[pos + PURPOSE_Q.len()..];
            after.find("A:").map_or(after, |a| &after[a + 2..])
        }
        None => raw,
    };
    out.summary = summary_region
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .filter(|l| !l.starts_with(SOQ) && !l.contains(QG_ENUM_MARKER))
        .map(str::to_owned);

    let section = match raw.find(QG_ENUM_MARKER) {
        Some(start) => {
            let body = &raw[start + QG_ENUM_MARKER.len()..];
            match body.find(QG_ASK_MARKER) {
                Some(end) => &body[..end],
                None => {
                    out.warnings.push(format!("missing `{QG_ASK_MARKER}` marker"));
                    body
                }
            }
        }
        None => {
            out.warnings.push(format!("missing `{QG_ENUM_MARKER}` marker; scanning whole output"));
            raw
        }
    };
    out.enumerated_indexes = ids_in(section);
    out
}

/// Parses raw model text for the given task.
pub fn parse_output(task: TaskKind, raw: &str) -> Result<TaskOutput, ParseError> {
    Ok(match task {
        TaskKind::QuestionGeneration => parse_questions(raw),
        TaskKind::Summarization => parse_summary(raw),
        TaskKind::QuestionAnswering => parse_answer(raw),
        TaskKind::InstructionToAction => parse_action(raw)?,
    })
}
