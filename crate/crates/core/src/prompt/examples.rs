//! Bundled reference implementations shown in every initial prompt.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceExample {
    pub operator: String,
    pub kernel_source: String,
    pub wrapper_source: String,
}

const BUNDLED: [(&str, &str); 3] = [
    ("exp", include_str!("../../data/reference/exp.py")),
    ("argmax", include_str!("../../data/reference/argmax.py")),
    ("diag", include_str!("../../data/reference/diag.py")),
];

impl ReferenceExample {
    /// Splits a module into its kernel part and its `def wrapper` part.
    pub fn from_module(operator: &str, module: &str) -> Option<Self> {
        let idx = module
            .match_indices("def wrapper(")
            .map(|(i, _)| i)
            .find(|&i| i == 0 || module.as_bytes()[i - 1] == b'\n')?;
        Some(Self {
            operator: operator.to_string(),
            kernel_source: module[..idx].trim_end().to_string(),
            wrapper_source: module[idx..].trim_end().to_string(),
        })
    }

    pub fn module_source(&self) -> String {
        format!("{}\n\n{}\n", self.kernel_source, self.wrapper_source)
    }

    pub fn render(&self) -> String {
        format!(
            "Operator: {}\nKernel(s):\n```python\n{}\n```\nWrapper:\n```python\n{}\n```",
            self.operator, self.kernel_source, self.wrapper_source
        )
    }
}

/// exp, argmax and diag, in that order.
pub fn bundled_examples() -> Vec<ReferenceExample> {
    BUNDLED
        .iter()
        .map(|(op, src)| ReferenceExample::from_module(op, src).expect("bundled example has a wrapper"))
        .collect()
}
