//! Single-pass `{name}` placeholder rendering over bundled template files.
//!
//! Substituted values are never re-scanned, so generated code containing
//! braces is embedded untouched.

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("template `{template}` has no value for placeholder `{placeholder}`")]
pub struct TemplateError {
    pub template: &'static str,
    pub placeholder: String,
}

#[derive(Debug, Clone, Copy)]
pub struct Template {
    pub name: &'static str,
    text: &'static str,
}

macro_rules! bundled {
    ($name:literal) => {
        Template {
            name: $name,
            text: include_str!(concat!("../../data/templates/", $name, ".txt")),
        }
    };
}

pub const SYSTEM: Template = bundled!("system");
pub const INIT: Template = bundled!("init");
pub const INIT_RESUME: Template = bundled!("init_resume");
pub const LINT_FEEDBACK: Template = bundled!("lint_feedback");
pub const COMPILE_FEEDBACK: Template = bundled!("compile_feedback");
pub const ACCURACY_FEEDBACK: Template = bundled!("accuracy_feedback");
pub const CRASH_FEEDBACK: Template = bundled!("crash_feedback");
pub const SUMMARIZATION: Template = bundled!("summarization");

pub const ALL: [Template; 8] = [
    SYSTEM,
    INIT,
    INIT_RESUME,
    LINT_FEEDBACK,
    COMPILE_FEEDBACK,
    ACCURACY_FEEDBACK,
    CRASH_FEEDBACK,
    SUMMARIZATION,
];

impl Template {
    /// Raw template text without the file's trailing newline.
    pub fn text(&self) -> &'static str {
        self.text.strip_suffix('\n').unwrap_or(self.text)
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for (_, name) in scan(self.text()) {
            if let Some(name) = name {
                if !out.contains(&name) {
                    out.push(name);
                }
            }
        }
        out
    }

    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.text.len());
        for (literal, name) in scan(self.text()) {
            out.push_str(literal);
            if let Some(name) = name {
                let value = vars
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| TemplateError {
                        template: self.name,
                        placeholder: name.to_string(),
                    })?;
                out.push_str(value);
            }
        }
        Ok(out)
    }
}

/// Splits text into (literal, following placeholder) pieces. A placeholder
/// is `{` + identifier + `}`; any other brace is literal.
fn scan(text: &'static str) -> Vec<(&'static str, Option<&'static str>)> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut lit_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'}' && !bytes[i + 1].is_ascii_digit() {
                out.push((&text[lit_start..i], Some(&text[i + 1..j])));
                i = j + 1;
                lit_start = i;
                continue;
            }
        }
        i += 1;
    }
    out.push((&text[lit_start..], None));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_are_discovered() {
        assert_eq!(SYSTEM.placeholders(), vec!["device"]);
        assert_eq!(
            INIT.placeholders(),
            vec!["op_name", "device", "dtypes", "docstring", "supplemental_docstrings", "reference_kernels"]
        );
        assert!(INIT_RESUME.placeholders().contains(&"current_implementation"));
        assert_eq!(SUMMARIZATION.placeholders(), vec!["log"]);
    }

    #[test]
    fn values_are_not_rescanned() {
        let s = SYSTEM.render(&[("device", "{device}")]).unwrap();
        assert_eq!(s, "You are an expert in generating Triton {device} kernels.");
    }

    #[test]
    fn missing_value_is_an_error() {
        let e = SYSTEM.render(&[]).unwrap_err();
        assert_eq!(e.placeholder, "device");
    }

    #[test]
    fn every_template_is_nonempty() {
        for t in ALL {
            assert!(!t.text().trim().is_empty(), "{}", t.name);
        }
    }
}
