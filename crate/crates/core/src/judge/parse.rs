//! Extraction of verdicts from free-form judge responses.

use std::sync::LazyLock;

use log::warn;
use regex::Regex;
use serde_json::{Map, Value};

use super::{JudgeError, JudgeKind, JudgeVerdict};

static BARE_DIFFICULTY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(yes|no)\b[\s,:;=]*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)")
        .expect("valid regex")
});

/// First JSON object embedded anywhere in `text`. Trailing prose after the
/// object is ignored.
fn first_json_object(text: &str) -> Option<Map<String, Value>> {
    text.match_indices('{').find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => Some(map),
            _ => None,
        }
    })
}

fn number(value: &Value) -> Option<f64> {
    match value {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn yes_no(value: &Value) -> Option<f64> {
    match value.as_str()?.trim().to_ascii_uppercase().as_str() {
        "YES" => Some(1.0),
        "NO" => Some(0.0),
        _ => None,
    }
}

/// Clamps a finite confidence into `[0, 1]`, warning when it had to move.
fn clamp_confidence(value: f64, raw: &str) -> Result<f64, JudgeError> {
    if !value.is_finite() {
        return Err(JudgeError::Confidence {
            value,
            raw: raw.to_owned(),
        });
    }
    let clamped = value.clamp(0.0, 1.0);
    if clamped != value {
        warn!("difficulty confidence {value} clamped to {clamped}");
    }
    Ok(clamped)
}

/// Parses a judge response for `kind`.
///
/// The first JSON object in the text is used; consistency kinds read its
/// `score` field and difficulty reads `answer` (YES/NO) plus `confidence`.
/// Difficulty also accepts the bare `YES 0.8` form. Finite difficulty
/// confidences outside `[0, 1]` are clamped with a warning.
pub fn parse_verdict(kind: JudgeKind, text: &str) -> Result<JudgeVerdict, JudgeError> {
    let no_verdict = || JudgeError::NoVerdict {
        raw: text.to_owned(),
    };
    let object = first_json_object(text);
    match kind {
        JudgeKind::AnswerConsistency | JudgeKind::ReasoningConsistency => {
            let score = object
                .as_ref()
                .and_then(|o| o.get("score"))
                .and_then(number)
                .ok_or_else(no_verdict)?;
            JudgeVerdict::new(kind, score, None, text)
        }
        JudgeKind::Difficulty => {
            let from_json = object.as_ref().and_then(|o| {
                let answer = o.get("answer").and_then(yes_no)?;
                let confidence = o.get("confidence").and_then(number)?;
                Some((answer, confidence))
            });
            let (answer, confidence) = match from_json {
                Some(pair) => pair,
                None => {
                    let caps = BARE_DIFFICULTY.captures(text).ok_or_else(no_verdict)?;
                    let answer = if caps[1].eq_ignore_ascii_case("yes") { 1.0 } else { 0.0 };
                    let confidence: f64 = caps[2].parse().map_err(|_| no_verdict())?;
                    (answer, confidence)
                }
            };
            let confidence = clamp_confidence(confidence, text)?;
            JudgeVerdict::new(kind, answer, Some(confidence), text)
        }
    }
}
