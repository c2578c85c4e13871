//! Parsing of `<think>...</think><answer>...</answer>` outputs and answer
//! normalization.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

static FORMAT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?s)\A\s*<think>(.*)</think>\s*<answer>(.*)</answer>\s*\z").expect("valid regex")
});

static OPTION_LETTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\A\s*\(?([A-Za-z])\s*(?:[).:]|\z)").expect("valid regex"));

const TAGS: [&str; 4] = ["<think>", "</think>", "<answer>", "</answer>"];

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StructuredOutput {
    pub raw: String,
    pub think: String,
    pub answer: String,
    pub format_ok: bool,
}

/// Parses a rollout. The output is well formed when it consists of one
/// `<think>` block followed by one `<answer>` block, separated and
/// surrounded only by whitespace, with each tag appearing exactly once.
/// Extracted contents are trimmed.
pub fn extract_output(raw: &str) -> StructuredOutput {
    let once = TAGS.iter().all(|tag| raw.matches(tag).count() == 1);
    match FORMAT.captures(raw).filter(|_| once) {
        Some(caps) => StructuredOutput {
            raw: raw.to_owned(),
            think: caps[1].trim().to_owned(),
            answer: caps[2].trim().to_owned(),
            format_ok: true,
        },
        None => StructuredOutput {
            raw: raw.to_owned(),
            ..StructuredOutput::default()
        },
    }
}

/// Lowercase alphanumeric characters only.
pub fn normalize_answer(text: &str) -> String {
    text.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Leading option letter such as `B`, `(b)`, `B.` or `B) red car`.
pub fn option_letter(text: &str) -> Option<char> {
    OPTION_LETTER
        .captures(text)
        .and_then(|c| c[1].chars().next())
        .map(|c| c.to_ascii_lowercase())
}

/// 1.0 when the output is well formed and its answer matches `truth` after
/// normalization. When the truth is a single option letter, an answer that
/// starts with that letter as an option label also matches.
pub fn accuracy_reward(out: &StructuredOutput, truth: &str) -> f64 {
    if !out.format_ok {
        return 0.0;
    }
    let truth_norm = normalize_answer(truth);
    if normalize_answer(&out.answer) == truth_norm && !truth_norm.is_empty() {
        return 1.0;
    }
    let mut truth_chars = truth_norm.chars();
    match (truth_chars.next(), truth_chars.next()) {
        (Some(letter), None) if letter.is_ascii_alphabetic() => {
            f64::from(u8::from(option_letter(&out.answer) == Some(letter)))
        }
        _ => 0.0,
    }
}
