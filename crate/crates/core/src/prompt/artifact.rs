//! Extraction of a candidate module from an LLM response.

use serde::{Deserialize, Serialize};

use crate::lint::{parse_candidate, SyntaxError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResponseError {
    #[error("response contains no fenced code block")]
    NoCodeBlock,
    #[error("response contains {0} fenced code blocks; expected a single module")]
    MultipleModules(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateArtifact {
    pub raw_response: String,
    pub module_source: String,
    /// `Some("wrapper")` when a top-level wrapper is defined.
    pub wrapper: Option<String>,
    /// Top-level functions whose names start with the kernel prefix.
    pub kernels: Vec<String>,
    /// Set when `module_source` does not parse; the lint stage reports it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syntax_error: Option<SyntaxError>,
}

pub const WRAPPER_NAME: &str = "wrapper";
pub const KERNEL_PREFIX: &str = "kernel";

impl CandidateArtifact {
    /// Builds an artifact straight from module source (stored or hand-written).
    pub fn from_source(source: &str) -> Self {
        Self::build(source.to_string(), source.to_string())
    }

    fn build(raw_response: String, module_source: String) -> Self {
        match parse_candidate(&module_source) {
            Ok(tree) => {
                let names = tree.function_names();
                Self {
                    wrapper: names
                        .iter()
                        .find(|n| **n == WRAPPER_NAME)
                        .map(|n| n.to_string()),
                    kernels: names
                        .iter()
                        .filter(|n| n.starts_with(KERNEL_PREFIX))
                        .map(|n| n.to_string())
                        .collect(),
                    syntax_error: None,
                    raw_response,
                    module_source,
                }
            }
            Err(e) => Self {
                raw_response,
                module_source,
                wrapper: None,
                kernels: Vec::new(),
                syntax_error: Some(e),
            },
        }
    }

    /// The module inside a `python` fence, as it would appear in a response.
    pub fn render_fenced(&self) -> String {
        format!("```python\n{}\n```", self.module_source.trim_end_matches('\n'))
    }
}

/// Code blocks in order of appearance. An unterminated final fence runs to
/// the end of the text.
pub fn fenced_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<(usize, usize, Vec<&str>)> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        let indent = line.len() - trimmed.len();
        let ticks = trimmed.chars().take_while(|c| *c == '`').count();
        match &mut current {
            None => {
                if ticks >= 3 {
                    current = Some((ticks, indent, Vec::new()));
                }
            }
            Some((open_ticks, open_indent, lines)) => {
                if ticks >= *open_ticks && trimmed[ticks..].trim().is_empty() {
                    blocks.push(lines.join("\n"));
                    current = None;
                } else {
                    let strip = line
                        .char_indices()
                        .take_while(|(i, c)| *i < *open_indent && *c == ' ')
                        .count();
                    lines.push(&line[strip..]);
                }
            }
        }
    }
    if let Some((_, _, lines)) = current {
        blocks.push(lines.join("\n"));
    }
    blocks
}

/// Lenient parsing: the last fenced block wins.
pub fn parse_response(text: &str) -> Result<CandidateArtifact, ResponseError> {
    let blocks = fenced_blocks(text);
    let last = blocks.into_iter().last().ok_or(ResponseError::NoCodeBlock)?;
    Ok(CandidateArtifact::build(text.to_string(), last))
}

/// Strict parsing: exactly one fenced block.
pub fn parse_response_strict(text: &str) -> Result<CandidateArtifact, ResponseError> {
    match fenced_blocks(text).len() {
        0 => Err(ResponseError::NoCodeBlock),
        1 => parse_response(text),
        n => Err(ResponseError::MultipleModules(n)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MODULE: &str = "@triton.jit\ndef kernel(p):\n    pass\n\ndef wrapper(x):\n    return x";

    #[test]
    fn single_block() {
        let text = format!("Here you go:\n```python\n{MODULE}\n```\nDone.");
        let a = parse_response(&text).unwrap();
        assert_eq!(a.kernels, vec!["kernel"]);
        assert_eq!(a.wrapper.as_deref(), Some("wrapper"));
        assert_eq!(a.module_source, MODULE);
        assert_eq!(a.raw_response, text);
    }

    #[test]
    fn last_block_wins_and_strict_rejects() {
        let text = format!("scratch:\n```python\ndef kernel_old():\n    pass\n```\nfinal:\n```\n{MODULE}\n```\n");
        let a = parse_response(&text).unwrap();
        assert_eq!(a.kernels, vec!["kernel"]);
        assert_eq!(parse_response_strict(&text).unwrap_err(), ResponseError::MultipleModules(2));
    }

    #[test]
    fn no_block() {
        assert_eq!(parse_response("just prose").unwrap_err(), ResponseError::NoCodeBlock);
        assert_eq!(parse_response_strict("").unwrap_err(), ResponseError::NoCodeBlock);
    }

    #[test]
    fn unterminated_and_indented_fences() {
        let a = parse_response(&format!("```python\n{MODULE}")).unwrap();
        assert_eq!(a.module_source, MODULE);
        let indented = "  ```python\n  def wrapper(x):\n      return x\n  ```";
        let b = parse_response(indented).unwrap();
        assert_eq!(b.module_source, "def wrapper(x):\n    return x");
    }

    #[test]
    fn syntax_error_is_recorded_not_raised() {
        let a = parse_response("```python\ndef wrapper(:\n```").unwrap();
        assert_eq!(a.syntax_error.as_ref().unwrap().line, 1);
        assert!(a.kernels.is_empty());
    }

    proptest! {
        #[test]
        fn fenced_round_trip(kernels in prop::collection::btree_set("[a-z_]{0,6}", 1..4), prose in "[a-zA-Z .,]{0,40}") {
            let mut src = String::new();
            for k in &kernels {
                src.push_str(&format!("@triton.jit\ndef kernel{k}(p):\n    pass\n\n"));
            }
            src.push_str("def wrapper(x):\n    return x\n");
            let canonical = CandidateArtifact::from_source(&src);
            let text = format!("{prose}\n{}\n{prose}", canonical.render_fenced());
            let parsed = parse_response(&text).unwrap();
            prop_assert_eq!(&parsed.kernels, &canonical.kernels);
            prop_assert_eq!(&parsed.wrapper, &canonical.wrapper);
            prop_assert_eq!(parsed.kernels.len(), kernels.len());
        }
    }
}
