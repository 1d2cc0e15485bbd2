//! Structural parsing of policy outputs.
//!
//! Both roles answer with one `<think>…</think>` block followed by one
//! `<answer>…</answer>` block. Tags are matched case-sensitively; whitespace
//! around the blocks is tolerated, any other text outside them is not.

use serde::{Deserialize, Serialize};

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub raw: String,
    pub think: Option<String>,
    pub answer: Option<String>,
    pub well_formed: bool,
}

impl ParsedResponse {
    /// The answer segment, or the empty string when absent.
    pub fn answer_text(&self) -> &str {
        self.answer.as_deref().unwrap_or("")
    }
}

/// Section flags of a teacher-written problem statement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemStructure {
    pub has_description: bool,
    pub has_input_format: bool,
    pub has_output_format: bool,
    pub has_examples: bool,
    pub has_constraints: bool,
}

impl ProblemStructure {
    pub fn complete(&self) -> bool {
        self.has_description
            && self.has_input_format
            && self.has_output_format
            && self.has_examples
            && self.has_constraints
    }
}

fn single(text: &str, tag: &str) -> Option<usize> {
    let mut found = text.match_indices(tag).map(|(i, _)| i);
    let first = found.next()?;
    found.next().is_none().then_some(first)
}

/// Extracts the segment between `open` and `close` when each occurs exactly
/// once and in that order.
fn segment(text: &str, open: &str, close: &str) -> Option<(usize, usize)> {
    let start = single(text, open)?;
    let end = single(text, close)?;
    (start + open.len() <= end).then_some((start, end))
}

pub fn parse_tagged_response(text: &str) -> ParsedResponse {
    let think = segment(text, THINK_OPEN, THINK_CLOSE);
    let answer = segment(text, ANSWER_OPEN, ANSWER_CLOSE);

    let well_formed = match (think, answer) {
        (Some((ts, te)), Some((as_, ae))) => {
            let think_end = te + THINK_CLOSE.len();
            let answer_end = ae + ANSWER_CLOSE.len();
            think_end <= as_
                && text[..ts].trim().is_empty()
                && text[think_end..as_].trim().is_empty()
                && text[answer_end..].trim().is_empty()
        }
        _ => false,
    };

    ParsedResponse {
        raw: text.to_string(),
        think: think.map(|(s, e)| text[s + THINK_OPEN.len()..e].to_string()),
        answer: answer.map(|(s, e)| text[s + ANSWER_OPEN.len()..e].to_string()),
        well_formed,
    }
}

/// Inverse of [`parse_tagged_response`] for tag-free segments.
pub fn render_tagged_response(think: &str, answer: &str) -> String {
    format!("{THINK_OPEN}{think}{THINK_CLOSE}\n{ANSWER_OPEN}{answer}{ANSWER_CLOSE}")
}

/// Detects the five required sections by case-insensitive heading match at
/// line starts. Leading markdown decoration (`#`, `*`, `-`, `_`, `>`) is
/// ignored.
pub fn validate_problem_structure(answer_text: &str) -> ProblemStructure {
    let mut s = ProblemStructure::default();
    for line in answer_text.lines() {
        let heading = line
            .trim_start_matches(|c: char| c.is_whitespace() || "#*-_>".contains(c))
            .to_lowercase();
        if heading.starts_with("description") {
            s.has_description = true;
        } else if heading.starts_with("input") {
            s.has_input_format = true;
        } else if heading.starts_with("output") {
            s.has_output_format = true;
        } else if heading.starts_with("example") {
            s.has_examples = true;
        } else if heading.starts_with("constraint") {
            s.has_constraints = true;
        }
    }
    s
}

/// Returns the body of the first fenced code block, or the whole answer when
/// there is none. An unterminated fence extends to the end of the text.
pub fn extract_code(answer_text: &str) -> String {
    let Some(open) = answer_text.find("```") else {
        return answer_text.to_string();
    };
    let after_fence = &answer_text[open + 3..];
    // The rest of the opening line is an info string (language tag).
    let body = match after_fence.find('\n') {
        Some(nl) => &after_fence[nl + 1..],
        None => "",
    };
    let code = match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    };
    code.strip_suffix('\n').unwrap_or(code).to_string()
}

/// Bodies of every closed fenced code block, in order.
pub fn fenced_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let Some(nl) = after.find('\n') else { break };
        let body = &after[nl + 1..];
        let Some(close) = body.find("```") else { break };
        let code = &body[..close];
        blocks.push(code.strip_suffix('\n').unwrap_or(code).to_string());
        rest = &body[close + 3..];
    }
    blocks
}
