//! Rendering of the fixed line-structured translation template and parsing
//! of backend completions.
//!
//! The template alternates labelled source/target lines for each example and
//! ends with an open target line:
//!
//! ```text
//! English: Hello
//! German: Hallo
//! English: Good morning
//! German:
//! ```

use serde::{Deserialize, Serialize};

use crate::corpus::SegmentPair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub source_label: String,
    pub target_label: String,
}

impl PromptTemplate {
    pub fn new(source_label: impl Into<String>, target_label: impl Into<String>) -> Result<Self> {
        let source_label = source_label.into();
        let target_label = target_label.into();
        for label in [&source_label, &target_label] {
            if label.is_empty() {
                return Err(Error::Config("template label must be non-empty".into()));
            }
            if label.contains('\n') || label.contains(':') {
                return Err(Error::Config(format!(
                    "template label {label:?} must not contain newlines or colons"
                )));
            }
        }
        Ok(PromptTemplate {
            source_label,
            target_label,
        })
    }

    fn source_line(&self, text: &str) -> String {
        format!("{}: {}\n", self.source_label, text)
    }

    fn target_line(&self, text: &str) -> String {
        format!("{}: {}\n", self.target_label, text)
    }

    /// The final open line, with no text and no trailing newline.
    pub fn terminator(&self) -> String {
        format!("{}: ", self.target_label)
    }
}

/// How to treat newlines inside example or source text. The template is
/// newline-delimited, and paragraph pairs may contain internal breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewlinePolicy {
    /// Replace each run of line breaks with a single space.
    #[default]
    SpaceJoin,
    /// Reject text containing line breaks.
    Reject,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub text: String,
    pub shot_count: usize,
    pub source_text: String,
}

fn normalize(text: &str, policy: NewlinePolicy, what: &str) -> Result<String> {
    if !text.contains(['\n', '\r']) {
        return Ok(text.to_string());
    }
    match policy {
        NewlinePolicy::Reject => Err(Error::Config(format!(
            "{what} contains a newline and the template is line-structured"
        ))),
        NewlinePolicy::SpaceJoin => {
            let mut out = String::with_capacity(text.len());
            let mut in_break = false;
            for c in text.chars() {
                if c == '\n' || c == '\r' {
                    in_break = true;
                } else {
                    if in_break {
                        out.push(' ');
                        in_break = false;
                    }
                    out.push(c);
                }
            }
            Ok(out)
        }
    }
}

/// Plug the example pairs and the current source into the template.
/// Examples may be empty (0-shot).
pub fn render_prompt(
    template: &PromptTemplate,
    examples: &[SegmentPair],
    source: &str,
    policy: NewlinePolicy,
) -> Result<RenderedPrompt> {
    if source.trim().is_empty() {
        return Err(Error::EmptyInput("prompt source text is empty".into()));
    }
    let mut text = String::new();
    for pair in examples {
        let x = normalize(&pair.source_text, policy, &format!("example {:?} source", pair.id))?;
        let y = normalize(&pair.target_text, policy, &format!("example {:?} target", pair.id))?;
        text.push_str(&template.source_line(&x));
        text.push_str(&template.target_line(&y));
    }
    let x = normalize(source, policy, "source")?;
    text.push_str(&template.source_line(&x));
    text.push_str(&template.terminator());
    Ok(RenderedPrompt {
        text,
        shot_count: examples.len(),
        source_text: source.to_string(),
    })
}

/// Truncate a raw completion at the first newline; otherwise return it
/// verbatim. No detokenization, no trimming. An empty result is a valid
/// (flagged-empty) translation, not an error.
pub fn parse_completion(raw: &str) -> &str {
    match raw.find('\n') {
        Some(pos) => &raw[..pos],
        None => raw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_pair;

    fn en_de() -> PromptTemplate {
        PromptTemplate::new("English", "German").unwrap()
    }

    #[test]
    fn one_shot_render() {
        let rendered = render_prompt(
            &en_de(),
            &[test_pair("e1", "Hello", "Hallo")],
            "Good morning",
            NewlinePolicy::SpaceJoin,
        )
        .unwrap();
        assert_eq!(
            rendered.text,
            "English: Hello\nGerman: Hallo\nEnglish: Good morning\nGerman: "
        );
        assert_eq!(rendered.shot_count, 1);
    }

    #[test]
    fn zero_shot_render() {
        let rendered =
            render_prompt(&en_de(), &[], "Hi", NewlinePolicy::SpaceJoin).unwrap();
        assert_eq!(rendered.text, "English: Hi\nGerman: ");
        assert_eq!(rendered.shot_count, 0);
    }

    #[test]
    fn five_shot_line_count() {
        let examples: Vec<_> = (0..5)
            .map(|i| test_pair(&format!("e{i}"), &format!("src {i}"), &format!("tgt {i}")))
            .collect();
        let rendered =
            render_prompt(&en_de(), &examples, "query", NewlinePolicy::SpaceJoin).unwrap();
        // 2n+1 complete lines, then the open line.
        let lines: Vec<&str> = rendered.text.split('\n').collect();
        assert_eq!(lines.len(), 12);
        assert_eq!(lines[11], "German: ");
        let source_lines = lines.iter().filter(|l| l.starts_with("English: ")).count();
        let target_lines = lines.iter().filter(|l| l.starts_with("German: ")).count();
        assert_eq!(source_lines, 6);
        assert_eq!(target_lines, 6);
    }

    #[test]
    fn render_ends_with_open_target_label() {
        let rendered =
            render_prompt(&en_de(), &[], "x", NewlinePolicy::SpaceJoin).unwrap();
        assert!(rendered.text.ends_with("German: "));
    }

    #[test]
    fn newline_in_example_rejected_under_reject_policy() {
        let err = render_prompt(
            &en_de(),
            &[test_pair("e1", "line one\nline two", "y")],
            "q",
            NewlinePolicy::Reject,
        )
        .unwrap_err();
        assert!(err.to_string().contains("newline"));
    }

    #[test]
    fn newlines_space_joined_for_paragraphs() {
        let rendered = render_prompt(
            &en_de(),
            &[test_pair("e1", "para one\npara two", "ziel eins\r\nziel zwei")],
            "q",
            NewlinePolicy::SpaceJoin,
        )
        .unwrap();
        assert_eq!(
            rendered.text,
            "English: para one para two\nGerman: ziel eins ziel zwei\nEnglish: q\nGerman: "
        );
    }

    #[test]
    fn label_validation() {
        assert!(PromptTemplate::new("", "German").is_err());
        assert!(PromptTemplate::new("Eng:lish", "German").is_err());
        assert!(PromptTemplate::new("Eng\nlish", "German").is_err());
    }

    #[test]
    fn empty_source_rejected() {
        assert!(render_prompt(&en_de(), &[], "  ", NewlinePolicy::SpaceJoin).is_err());
    }

    #[test]
    fn parse_cuts_at_first_newline() {
        assert_eq!(parse_completion("Guten Morgen\nEnglish: ..."), "Guten Morgen");
        assert_eq!(parse_completion("Guten Morgen"), "Guten Morgen");
        assert_eq!(parse_completion("  spaced  \nrest"), "  spaced  ");
        assert_eq!(parse_completion(""), "");
    }

    #[test]
    fn parse_is_idempotent() {
        for raw in ["a\nb\nc", "plain", "\nleading", "  ws  \n"] {
            let once = parse_completion(raw);
            assert_eq!(parse_completion(once), once);
        }
    }
}
