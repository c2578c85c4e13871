//! Plain-text prompt templates for the three judge kinds.

use super::{JudgeError, JudgeInputs, JudgeKind};

const ANSWER_TEMPLATE: &str = r#"[Task]
You are a strict evaluator responsible for assessing whether the candidate answer matches the reference answer. Score consistency only based on whether the CANDIDATE <answer> is semantically identical to the REFERENCE <answer>. Do not consider reasoning quality, explanation depth, or stylistic differences.

[Evaluation Criteria]
Rate the answer on a binary scale:
- Score 1.0: The candidate answer is exactly the same as, or clearly equivalent to, the reference answer (e.g., "0" vs. "zero", "NYC" vs. "New York City").
- Score 0.0: The candidate answer differs from the reference answer in any substantive way.
Do not reward partial credit. Minor formatting or punctuation differences should be tolerated, but semantic mismatches must receive a score of 0.0.

[Input]
- Reference Answer: {reference_answer}
- Candidate Answer: {candidate_answer}

[Output Format]
Return a JSON object with the following fields. Only output the JSON object - no explanations, no justifications, and no extra text of any kind.
{"score": 0.0 or 1.0,
 "match_type": "exact" or "equivalent" or "mismatch"}"#;

const REASONING_TEMPLATE: &str = r#"[Task]
You are a strict evaluator responsible for assessing whether the candidate reasoning is consistent with the reference reasoning. Score consistency only based on whether the CANDIDATE <think> matches the REFERENCE <think> in key evidence and logical steps. Do not evaluate the correctness of the final answer.

[Evaluation Criteria]
Rate the reasoning on a three-tier scale:
- Score 1.0: The candidate reasoning is consistent with the reference up to paraphrasing and minor omissions. All key observations and logical steps are preserved.
- Score 0.5: The candidate reasoning is mostly consistent but contains unsupported additions, missing key intermediate steps, or minor logical deviations.
- Score 0.0: The candidate reasoning contradicts core observations from the reference or hallucinates key facts not present in the reference.

[Evaluation Guidelines]
- Focus exclusively on the reasoning process --- ignore the final answer.
- Tolerate stylistic and structural differences if the underlying logic is equivalent.
- Penalize fabricated evidence or contradictions to reference observations.

[Input]
- Reference Reasoning: {reference_think}
- Candidate Reasoning: {candidate_think}

[Output Format]
Return a JSON object with the following fields. Only output the JSON object --- no explanations, no justifications, and no extra text of any kind.
{"score": 0.0 or 0.5 or 1.0,
 "justification": "<explanation>"}"#;

const DIFFICULTY_TEMPLATE: &str = r#"[Task]
You may ONLY use the MASKED video to judge.

[Evaluation Criteria]
- If the masked video DOES give enough information to reliably answer, respond: YES.
- If the masked video does NOT give enough information, respond: NO.
- Additionally, provide a confidence score in [0.0, 1.0] (one decimal place) reflecting how certain you are in your judgment.
Reply with ONE WORD and ONE NUMBER only.

[Input]
- Question: {question_text}

[Output Format]
{
  "answer": "YES or NO",
  "confidence": 0.0
}"#;

fn template(kind: JudgeKind) -> &'static str {
    match kind {
        JudgeKind::AnswerConsistency => ANSWER_TEMPLATE,
        JudgeKind::ReasoningConsistency => REASONING_TEMPLATE,
        JudgeKind::Difficulty => DIFFICULTY_TEMPLATE,
    }
}

fn required<'a>(
    kind: JudgeKind,
    field: &'static str,
    value: &'a Option<String>,
) -> Result<(&'static str, &'a str), JudgeError> {
    value
        .as_deref()
        .map(|v| (field, v))
        .ok_or(JudgeError::MissingInput { kind, field })
}

/// Renders the template for `kind` with its placeholders substituted.
/// Placeholders are replaced in a single pass, so input text that itself
/// contains `{...}` is never re-expanded.
pub fn build_prompt(kind: JudgeKind, inputs: &JudgeInputs) -> Result<String, JudgeError> {
    let fields = match kind {
        JudgeKind::AnswerConsistency => vec![
            required(kind, "reference_answer", &inputs.reference_answer)?,
            required(kind, "candidate_answer", &inputs.candidate_answer)?,
        ],
        JudgeKind::ReasoningConsistency => vec![
            required(kind, "reference_think", &inputs.reference_think)?,
            required(kind, "candidate_think", &inputs.candidate_think)?,
        ],
        JudgeKind::Difficulty => vec![required(kind, "question_text", &inputs.question_text)?],
    };
    let mut out = String::new();
    let mut rest = template(kind);
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        let hit = fields.iter().find(|(name, _)| {
            tail.starts_with(name) && tail[name.len()..].starts_with('}')
        });
        match hit {
            Some((name, value)) => {
                out.push_str(value);
                rest = &tail[name.len() + 1..];
            }
            None => {
                out.push('{');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}
