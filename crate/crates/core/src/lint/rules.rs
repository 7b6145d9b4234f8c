//! Rule evaluation. Rules run in a fixed order; within a rule, violations
//! are ordered by line.

use std::collections::BTreeSet;

use super::ast::{walk_stmts, Expr, ExprKind, StmtKind, Walk};
use super::config::LintConfig;
use super::report::{LintReport, RuleId, Violation};
use super::SyntaxTree;

pub fn lint(tree: &SyntaxTree, config: &LintConfig) -> LintReport {
    let mut out = Vec::new();
    structural(tree, config, &mut out);
    imports(tree, config, &mut out);
    module_refs(tree, config, &mut out);
    tensor_methods(tree, config, &mut out);
    function_args(tree, config, &mut out);
    forbidden_functions(tree, config, &mut out);
    LintReport::from_violations(out)
}

fn push_sorted(out: &mut Vec<Violation>, mut found: Vec<Violation>) {
    found.sort_by(|a, b| a.line.cmp(&b.line).then_with(|| a.message.cmp(&b.message)));
    found.dedup();
    out.extend(found);
}

fn v(rule_id: RuleId, message: String, line: usize, details: Option<String>) -> Violation {
    Violation {
        rule_id,
        message,
        line,
        details,
    }
}

fn structural(tree: &SyntaxTree, config: &LintConfig, out: &mut Vec<Violation>) {
    let s = &config.structural;
    if !s.enabled {
        return;
    }
    if s.require_wrapper {
        let wrappers: Vec<_> = tree.functions.iter().filter(|f| f.name == s.wrapper_name).collect();
        match wrappers.len() {
            0 => out.push(v(
                RuleId::WrapperFunction,
                format!("Missing wrapper function named \"{}\"", s.wrapper_name),
                1,
                Some(format!(
                    "Define exactly one host-side function named \"{}\" that matches the operator signature",
                    s.wrapper_name
                )),
            )),
            1 => {}
            _ => push_sorted(
                out,
                wrappers[1..]
                    .iter()
                    .map(|f| {
                        v(
                            RuleId::WrapperFunction,
                            format!("Duplicate wrapper function \"{}\"", s.wrapper_name),
                            f.line,
                            None,
                        )
                    })
                    .collect(),
            ),
        }
    }
    let kernels: Vec<_> = tree
        .functions
        .iter()
        .filter(|f| f.name.starts_with(&s.kernel_name_prefix))
        .collect();
    if kernels.is_empty() {
        out.push(v(
            RuleId::KernelFunction,
            format!("No kernel function found (names must start with \"{}\")", s.kernel_name_prefix),
            1,
            Some(format!(
                "Every jitted kernel's name must start with \"{}\"",
                s.kernel_name_prefix
            )),
        ));
    }
    if s.require_jit_decorator {
        let missing = kernels
            .iter()
            .filter(|f| !s.jit_decorators.iter().any(|d| f.def.has_decorator(d)))
            .map(|f| {
                v(
                    RuleId::JitDecorator,
                    format!("Kernel function \"{}\" is missing a JIT decorator", f.name),
                    f.line,
                    Some(format!("Allowed decorators: @{}", s.jit_decorators.join(", @"))),
                )
            })
            .collect();
        push_sorted(out, missing);
    }
}

fn imports(tree: &SyntaxTree, config: &LintConfig, out: &mut Vec<Violation>) {
    if !(config.structural.enabled && config.structural.forbid_imports) {
        return;
    }
    let mut found = Vec::new();
    walk_stmts(&tree.module, &mut |s| {
        if let StmtKind::Import { module, names } = &s.kind {
            let text = match module {
                Some(m) => format!("from {m} import {}", names.join(", ")),
                None => format!("import {}", names.join(", ")),
            };
            found.push(v(
                RuleId::ForbiddenImports,
                format!("Import statements are not allowed: {text}"),
                s.line,
                Some("Required modules (triton, tl, torch) are provided at load time".into()),
            ));
        }
    });
    push_sorted(out, found);
}

/// Checks every maximal dotted reference rooted at a restricted module
/// against its allowlist and its scope restriction.
fn module_refs(tree: &SyntaxTree, config: &LintConfig, out: &mut Vec<Violation>) {
    let restricted = config.restricted_modules();
    if restricted.is_empty() {
        return;
    }
    let mut refs: Vec<(Option<&str>, String, usize, String)> = Vec::new();
    tree.visit_scoped_exprs(&mut |scope, e: &Expr| {
        if !matches!(e.kind, ExprKind::Name(_) | ExprKind::Attribute { .. }) {
            return Walk::Descend;
        }
        match e.dotted_path() {
            Some(path) => {
                let root = path.split('.').next().unwrap_or_default().to_string();
                if restricted.contains(root.as_str()) {
                    refs.push((scope, path, e.line, root));
                }
                Walk::Skip
            }
            None => Walk::Descend,
        }
    });

    let mr = &config.module_restrictions;
    if mr.enabled {
        let mut found = Vec::new();
        for (_, path, line, root) in &refs {
            if let Some(allowed) = config.allowlist(root) {
                if !allowed.contains(path) {
                    found.push(v(
                        RuleId::ModuleRestrictions,
                        format!("Forbidden {root} module usage: {path}"),
                        *line,
                        Some(format!(
                            "Allowed {root} functions: {}",
                            allowed.iter().cloned().collect::<Vec<_>>().join(", ")
                        )),
                    ));
                }
            }
        }
        push_sorted(out, found);
    }

    if config.module_scope_restrictions.enabled {
        let mut found = Vec::new();
        for (scope, path, line, root) in &refs {
            let Some(patterns) = config.scope_regexes.get(root) else {
                continue;
            };
            let scope_name = scope.unwrap_or("<module>");
            if !patterns.iter().any(|p| p.is_match(scope_name)) {
                let where_ = match scope {
                    Some(f) => format!("function \"{f}\""),
                    None => "module level".to_string(),
                };
                found.push(v(
                    RuleId::ModuleScopeRestrictions,
                    format!("{root} usage not allowed in {where_}: {path}"),
                    *line,
                    Some(format!(
                        "{root}.* may only be used in functions matching: {}",
                        patterns.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(", ")
                    )),
                ));
            }
        }
        push_sorted(out, found);
    }
}

fn tensor_methods(tree: &SyntaxTree, config: &LintConfig, out: &mut Vec<Violation>) {
    let rule = &config.forbidden_tensor_methods;
    if !rule.enabled {
        return;
    }
    let restricted = config.restricted_modules();
    let mut found = Vec::new();
    tree.visit_scoped_exprs(&mut |_, e| {
        if let ExprKind::Attribute { attr, .. } = &e.kind {
            let module_rooted = e
                .dotted_path()
                .map(|p| restricted.contains(p.split('.').next().unwrap_or_default()))
                .unwrap_or(false);
            if rule.forbidden_methods.contains(attr) && !module_rooted {
                found.push(v(
                    RuleId::ForbiddenTensorMethods,
                    format!("Forbidden tensor method: .{attr}()"),
                    e.line,
                    Some(format!(
                        "Tensors must stay on the device they were given on; forbidden methods: {}",
                        rule.forbidden_methods
                            .iter()
                            .map(|m| format!(".{m}()"))
                            .collect::<Vec<_>>()
                            .join(", ")
                    )),
                ));
            }
        }
        Walk::Descend
    });
    push_sorted(out, found);
}

fn function_args(tree: &SyntaxTree, config: &LintConfig, out: &mut Vec<Violation>) {
    let rule = &config.forbidden_function_arguments;
    if !rule.enabled {
        return;
    }
    let mut found = Vec::new();
    for call in &tree.call_sites {
        for r in &rule.restrictions {
            let matches = match r.function.strip_prefix('.') {
                Some(method) => call.method.as_deref() == Some(method),
                None => call.callee.as_deref() == Some(r.function.as_str()),
            };
            if !matches {
                continue;
            }
            let hits: BTreeSet<&str> = call
                .string_args()
                .filter(|s| r.forbidden_string_args.contains(*s))
                .collect();
            for hit in hits {
                found.push(v(
                    RuleId::ForbiddenFunctionArguments,
                    format!("Forbidden argument \"{hit}\" in call to {}", r.function),
                    call.line,
                    Some(format!(
                        "Forbidden string arguments for {}: {}",
                        r.function,
                        r.forbidden_string_args
                            .iter()
                            .map(|s| format!("\"{s}\""))
                            .collect::<Vec<_>>()
                            .join(", ")
                    )),
                ));
            }
            if call.callee.as_deref() == Some("torch.device")
                && call.args.first().is_some_and(|a| matches!(a, super::ArgValue::Other))
            {
                tracing::warn!(line = call.line, "torch.device called with a non-literal argument");
            }
        }
    }
    push_sorted(out, found);
}

fn forbidden_functions(tree: &SyntaxTree, config: &LintConfig, out: &mut Vec<Violation>) {
    let rule = &config.forbidden_functions;
    if !rule.enabled {
        return;
    }
    let mut found = Vec::new();
    tree.visit_scoped_exprs(&mut |_, e| {
        if let ExprKind::Name(n) = &e.kind {
            if rule.forbidden_functions.contains(n) {
                found.push(v(
                    RuleId::ForbiddenFunctions,
                    format!("Forbidden function: {n}"),
                    e.line,
                    Some(format!(
                        "Dynamic code execution is not allowed; forbidden functions: {}",
                        rule.forbidden_functions.iter().cloned().collect::<Vec<_>>().join(", ")
                    )),
                ));
            }
        }
        Walk::Descend
    });
    push_sorted(out, found);
}
