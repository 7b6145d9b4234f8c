//! Static analysis of candidate modules.
//!
//! [`parse_candidate`] turns source text into a [`SyntaxTree`]; [`lint`]
//! applies a [`LintConfig`] to it and returns a [`LintReport`]. Violations are
//! data, never errors.

pub mod ast;
mod config;
mod lexer;
mod parser;
mod report;
mod rules;

pub use config::{
    default_config, load_lint_config, ForbiddenArgsRestriction, LintConfig, LintConfigError,
    ModuleAllowlist, ScopeRestriction, StructuralConfig,
};
pub use report::{LintReport, RuleId, Violation};
pub use rules::lint;

use ast::{walk_expr, walk_stmts, Expr, ExprKind, Stmt, StmtKind, Walk};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("line {line}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub message: String,
}

/// A top-level function definition.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionNode {
    pub name: String,
    pub line: usize,
    pub params: Vec<String>,
    /// Dotted decorator names; undotted expressions are recorded as `None`.
    pub decorators: Vec<Option<String>>,
    pub def: ast::FunctionDef,
}

/// A literal-or-not view of one call argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArgValue {
    Str(String),
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSite {
    pub line: usize,
    /// Full dotted callee (`tl.load`, `torch.device`, `eval`) when the callee
    /// is a plain name/attribute chain.
    pub callee: Option<String>,
    /// Final attribute when the callee is an attribute access on any receiver.
    pub method: Option<String>,
    /// Enclosing top-level function, `None` at module level.
    pub scope: Option<String>,
    pub args: Vec<ArgValue>,
    pub kwargs: Vec<(String, ArgValue)>,
}

impl CallSite {
    pub fn string_args(&self) -> impl Iterator<Item = &str> {
        self.args
            .iter()
            .chain(self.kwargs.iter().map(|(_, v)| v))
            .filter_map(|a| match a {
                ArgValue::Str(s) => Some(s.as_str()),
                ArgValue::Other => None,
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntaxTree {
    pub module: Vec<Stmt>,
    pub functions: Vec<FunctionNode>,
    /// Module-level statements other than function definitions.
    pub top_level_statements: Vec<Stmt>,
    pub call_sites: Vec<CallSite>,
}

impl SyntaxTree {
    pub fn function(&self, name: &str) -> Option<&FunctionNode> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_names(&self) -> Vec<&str> {
        self.functions.iter().map(|f| f.name.as_str()).collect()
    }

    /// Visits every expression with the name of its enclosing top-level
    /// function. Decorators, annotations and defaults belong to the function.
    pub fn visit_scoped_exprs<'a>(
        &'a self,
        visit: &mut dyn FnMut(Option<&'a str>, &'a Expr) -> Walk,
    ) {
        for stmt in &self.module {
            let scope = match &stmt.kind {
                StmtKind::FunctionDef(f) => Some(f.name.as_str()),
                _ => None,
            };
            walk_stmts(std::slice::from_ref(stmt), &mut |s| {
                for e in s.own_exprs() {
                    walk_expr(e, &mut |x| visit(scope, x));
                }
            });
        }
    }
}

pub fn parse_candidate(source: &str) -> Result<SyntaxTree, SyntaxError> {
    let module = parser::parse_module(source)?;
    let mut functions = Vec::new();
    let mut top_level_statements = Vec::new();
    for stmt in &module {
        match &stmt.kind {
            StmtKind::FunctionDef(f) => functions.push(FunctionNode {
                name: f.name.clone(),
                line: f.line,
                params: f.params.iter().map(|p| p.name.clone()).collect(),
                decorators: f.decorators.iter().map(|d| d.name.clone()).collect(),
                def: f.clone(),
            }),
            _ => top_level_statements.push(stmt.clone()),
        }
    }
    let mut tree = SyntaxTree {
        module,
        functions,
        top_level_statements,
        call_sites: Vec::new(),
    };
    let mut calls = Vec::new();
    tree.visit_scoped_exprs(&mut |scope, e| {
        if let ExprKind::Call {
            func,
            args,
            keywords,
        } = &e.kind
        {
            let method = match &func.kind {
                ExprKind::Attribute { attr, .. } => Some(attr.clone()),
                _ => None,
            };
            calls.push(CallSite {
                line: e.line,
                callee: func.dotted_path(),
                method,
                scope: scope.map(str::to_string),
                args: args.iter().map(arg_value).collect(),
                kwargs: keywords
                    .iter()
                    .filter_map(|k| k.arg.clone().map(|a| (a, arg_value(&k.value))))
                    .collect(),
            });
        }
        Walk::Descend
    });
    tree.call_sites = calls;
    Ok(tree)
}

fn arg_value(e: &Expr) -> ArgValue {
    match e.as_str_literal() {
        Some(s) => ArgValue::Str(s.to_string()),
        None => ArgValue::Other,
    }
}


/// Parses and lints in one step; a syntax error becomes a single
/// `syntax_error` violation.
pub fn lint_source(source: &str, config: &LintConfig) -> LintReport {
    match parse_candidate(source) {
        Ok(tree) => lint(&tree, config),
        Err(e) => LintReport::single(RuleId::SyntaxError, e.message, e.line, None),
    }
}
