//! Lint violations and their textual rendering for feedback prompts.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    OutputFormat,
    SyntaxError,
    WrapperFunction,
    KernelFunction,
    JitDecorator,
    ForbiddenImports,
    ModuleRestrictions,
    ModuleScopeRestrictions,
    ForbiddenTensorMethods,
    ForbiddenFunctionArguments,
    ForbiddenFunctions,
}

impl RuleId {
    pub const ALL: [RuleId; 11] = [
        RuleId::OutputFormat,
        RuleId::SyntaxError,
        RuleId::WrapperFunction,
        RuleId::KernelFunction,
        RuleId::JitDecorator,
        RuleId::ForbiddenImports,
        RuleId::ModuleRestrictions,
        RuleId::ModuleScopeRestrictions,
        RuleId::ForbiddenTensorMethods,
        RuleId::ForbiddenFunctionArguments,
        RuleId::ForbiddenFunctions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::OutputFormat => "output_format",
            RuleId::SyntaxError => "syntax_error",
            RuleId::WrapperFunction => "wrapper_function",
            RuleId::KernelFunction => "kernel_function",
            RuleId::JitDecorator => "jit_decorator",
            RuleId::ForbiddenImports => "forbidden_imports",
            RuleId::ModuleRestrictions => "module_restrictions",
            RuleId::ModuleScopeRestrictions => "module_scope_restrictions",
            RuleId::ForbiddenTensorMethods => "forbidden_tensor_methods",
            RuleId::ForbiddenFunctionArguments => "forbidden_function_arguments",
            RuleId::ForbiddenFunctions => "forbidden_functions",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule_id: RuleId,
    pub message: String,
    pub line: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintReport {
    pub violations: Vec<Violation>,
    pub pass: bool,
}

impl LintReport {
    pub fn from_violations(violations: Vec<Violation>) -> Self {
        let pass = violations.is_empty();
        Self { violations, pass }
    }

    /// A single-violation report for source that never reached the rules.
    pub fn single(rule_id: RuleId, message: impl Into<String>, line: usize, details: Option<String>) -> Self {
        Self::from_violations(vec![Violation {
            rule_id,
            message: message.into(),
            line,
            details,
        }])
    }

    pub fn rule_ids(&self) -> Vec<RuleId> {
        self.violations.iter().map(|v| v.rule_id).collect()
    }

    /// The text embedded in lint feedback prompts.
    pub fn render(&self) -> String {
        if self.violations.is_empty() {
            return "No linting violations found.".to_string();
        }
        let mut out = format!("Found {} linting violation(s):", self.violations.len());
        for v in &self.violations {
            out.push('\n');
            out.push_str(&format!("[{}] {} (line {})", v.rule_id, v.message, v.line));
            if let Some(d) = &v.details {
                out.push_str("\nDetails: ");
                out.push_str(d);
            }
        }
        out
    }
}

impl fmt::Display for LintReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
