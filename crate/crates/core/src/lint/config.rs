//! Lint rule configuration, loaded from YAML.

use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use serde::{Deserialize, Serialize};

const DEFAULT_CONFIG: &str = include_str!("../../data/lint_default.yaml");

const RULE_BLOCKS: &[&str] = &[
    "structural",
    "module_restrictions",
    "module_scope_restrictions",
    "forbidden_tensor_methods",
    "forbidden_function_arguments",
    "forbidden_functions",
];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LintConfigError {
    #[error("lint config parse error: {0}")]
    Parse(String),
    #[error("unknown lint rule `{0}`")]
    UnknownRule(String),
}

fn enabled_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuralConfig {
    #[serde(default = "enabled_default")]
    pub enabled: bool,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default = "enabled_default")]
    pub require_wrapper: bool,
    #[serde(default = "default_wrapper_name")]
    pub wrapper_name: String,
    #[serde(default = "default_kernel_prefix")]
    pub kernel_name_prefix: String,
    #[serde(default = "enabled_default")]
    pub require_jit_decorator: bool,
    #[serde(default)]
    pub jit_decorators: Vec<String>,
    #[serde(default = "enabled_default")]
    pub forbid_imports: bool,
}

fn default_wrapper_name() -> String {
    "wrapper".into()
}

fn default_kernel_prefix() -> String {
    "kernel".into()
}

impl Default for StructuralConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            description: None,
            require_wrapper: true,
            wrapper_name: default_wrapper_name(),
            kernel_name_prefix: default_kernel_prefix(),
            require_jit_decorator: false,
            jit_decorators: Vec::new(),
            forbid_imports: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleAllowlist {
    pub module_name: String,
    pub allowed_functions: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleRestrictions {
    #[serde(default = "enabled_default")]
    pub enabled: bool,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub modules: Vec<ModuleAllowlist>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScopeRestriction {
    pub module: String,
    pub allowed_scope_patterns: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScopeRestrictions {
    #[serde(default = "enabled_default")]
    pub enabled: bool,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub restrictions: Vec<ScopeRestriction>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForbiddenMethods {
    #[serde(default = "enabled_default")]
    pub enabled: bool,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub forbidden_methods: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForbiddenArgsRestriction {
    /// Dotted callee, or `.name` for a method on any receiver.
    pub function: String,
    pub forbidden_string_args: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForbiddenArgs {
    #[serde(default = "enabled_default")]
    pub enabled: bool,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub restrictions: Vec<ForbiddenArgsRestriction>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForbiddenFunctions {
    #[serde(default = "enabled_default")]
    pub enabled: bool,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub forbidden_functions: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    structural: Option<StructuralConfig>,
    #[serde(default)]
    module_restrictions: Option<ModuleRestrictions>,
    #[serde(default)]
    module_scope_restrictions: Option<ScopeRestrictions>,
    #[serde(default)]
    forbidden_tensor_methods: Option<ForbiddenMethods>,
    #[serde(default)]
    forbidden_function_arguments: Option<ForbiddenArgs>,
    #[serde(default)]
    forbidden_functions: Option<ForbiddenFunctions>,
}

/// A validated rule set. Blocks absent from the document are disabled.
#[derive(Debug, Clone)]
pub struct LintConfig {
    pub structural: StructuralConfig,
    pub module_restrictions: ModuleRestrictions,
    pub module_scope_restrictions: ScopeRestrictions,
    pub forbidden_tensor_methods: ForbiddenMethods,
    pub forbidden_function_arguments: ForbiddenArgs,
    pub forbidden_functions: ForbiddenFunctions,
    pub(crate) scope_regexes: BTreeMap<String, Vec<Regex>>,
}

impl LintConfig {
    /// A config with every rule switched off.
    pub fn disabled() -> Self {
        Self {
            structural: StructuralConfig::default(),
            module_restrictions: ModuleRestrictions::default(),
            module_scope_restrictions: ScopeRestrictions::default(),
            forbidden_tensor_methods: ForbiddenMethods::default(),
            forbidden_function_arguments: ForbiddenArgs::default(),
            forbidden_functions: ForbiddenFunctions::default(),
            scope_regexes: BTreeMap::new(),
        }
    }

    pub fn allowlist(&self, module: &str) -> Option<&BTreeSet<String>> {
        self.module_restrictions
            .modules
            .iter()
            .find(|m| m.module_name == module)
            .map(|m| &m.allowed_functions)
    }

    /// Names of every module that is restricted by an allowlist or a scope rule.
    pub fn restricted_modules(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        if self.module_restrictions.enabled {
            out.extend(self.module_restrictions.modules.iter().map(|m| m.module_name.as_str()));
        }
        if self.module_scope_restrictions.enabled {
            out.extend(
                self.module_scope_restrictions
                    .restrictions
                    .iter()
                    .map(|r| r.module.as_str()),
            );
        }
        out
    }

    /// Serializes back into the document format accepted by [`load_lint_config`].
    pub fn to_yaml(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            structural: &'a StructuralConfig,
            module_restrictions: &'a ModuleRestrictions,
            module_scope_restrictions: &'a ScopeRestrictions,
            forbidden_tensor_methods: &'a ForbiddenMethods,
            forbidden_function_arguments: &'a ForbiddenArgs,
            forbidden_functions: &'a ForbiddenFunctions,
        }
        serde_yaml::to_string(&Out {
            structural: &self.structural,
            module_restrictions: &self.module_restrictions,
            module_scope_restrictions: &self.module_scope_restrictions,
            forbidden_tensor_methods: &self.forbidden_tensor_methods,
            forbidden_function_arguments: &self.forbidden_function_arguments,
            forbidden_functions: &self.forbidden_functions,
        })
        .expect("lint config serializes")
    }
}

pub fn load_lint_config(source: &str) -> Result<LintConfig, LintConfigError> {
    let value: serde_yaml::Value =
        serde_yaml::from_str(source).map_err(|e| LintConfigError::Parse(e.to_string()))?;
    match &value {
        serde_yaml::Value::Mapping(map) => {
            for key in map.keys() {
                let key = key
                    .as_str()
                    .ok_or_else(|| LintConfigError::Parse("rule keys must be strings".into()))?;
                if !RULE_BLOCKS.contains(&key) {
                    return Err(LintConfigError::UnknownRule(key.to_string()));
                }
            }
        }
        serde_yaml::Value::Null => {}
        _ => return Err(LintConfigError::Parse("top level must be a mapping".into())),
    }
    let raw: RawConfig = if value.is_null() {
        RawConfig::default()
    } else {
        serde_yaml::from_value(value).map_err(|e| LintConfigError::Parse(e.to_string()))?
    };
    let mut cfg = LintConfig {
        structural: raw.structural.unwrap_or_default(),
        module_restrictions: raw.module_restrictions.unwrap_or_default(),
        module_scope_restrictions: raw.module_scope_restrictions.unwrap_or_default(),
        forbidden_tensor_methods: raw.forbidden_tensor_methods.unwrap_or_default(),
        forbidden_function_arguments: raw.forbidden_function_arguments.unwrap_or_default(),
        forbidden_functions: raw.forbidden_functions.unwrap_or_default(),
        scope_regexes: BTreeMap::new(),
    };
    validate(&mut cfg)?;
    Ok(cfg)
}

fn empty(rule: &str, what: &str) -> LintConfigError {
    LintConfigError::Parse(format!("rule `{rule}` is enabled but {what} is empty"))
}

fn validate(cfg: &mut LintConfig) -> Result<(), LintConfigError> {
    let s = &cfg.structural;
    if s.enabled {
        if s.kernel_name_prefix.is_empty() || s.wrapper_name.is_empty() {
            return Err(empty("structural", "a function name"));
        }
        if s.require_jit_decorator && s.jit_decorators.is_empty() {
            return Err(empty("structural", "jit_decorators"));
        }
    }
    let m = &cfg.module_restrictions;
    if m.enabled {
        if m.modules.is_empty() {
            return Err(empty("module_restrictions", "modules"));
        }
        let mut seen = BTreeSet::new();
        for module in &m.modules {
            if !seen.insert(&module.module_name) {
                return Err(LintConfigError::Parse(format!(
                    "module `{}` listed twice",
                    module.module_name
                )));
            }
            if module.allowed_functions.is_empty() {
                return Err(empty(
                    "module_restrictions",
                    &format!("allowed_functions for `{}`", module.module_name),
                ));
            }
            let prefix = format!("{}.", module.module_name);
            if let Some(bad) = module
                .allowed_functions
                .iter()
                .find(|f| !f.starts_with(&prefix))
            {
                return Err(LintConfigError::Parse(format!(
                    "allowed function `{bad}` is not qualified by `{prefix}`"
                )));
            }
        }
    }
    if cfg.module_scope_restrictions.enabled {
        if cfg.module_scope_restrictions.restrictions.is_empty() {
            return Err(empty("module_scope_restrictions", "restrictions"));
        }
        for r in &cfg.module_scope_restrictions.restrictions {
            if r.allowed_scope_patterns.is_empty() {
                return Err(empty(
                    "module_scope_restrictions",
                    &format!("allowed_scope_patterns for `{}`", r.module),
                ));
            }
            let mut compiled = Vec::new();
            for p in &r.allowed_scope_patterns {
                if !p.starts_with('^') {
                    return Err(LintConfigError::Parse(format!(
                        "scope pattern `{p}` must be anchored with `^`"
                    )));
                }
                compiled.push(
                    Regex::new(p).map_err(|e| LintConfigError::Parse(format!("{p}: {e}")))?,
                );
            }
            cfg.scope_regexes
                .entry(r.module.clone())
                .or_default()
                .extend(compiled);
        }
    }
    if cfg.forbidden_tensor_methods.enabled && cfg.forbidden_tensor_methods.forbidden_methods.is_empty() {
        return Err(empty("forbidden_tensor_methods", "forbidden_methods"));
    }
    let a = &cfg.forbidden_function_arguments;
    if a.enabled {
        if a.restrictions.is_empty() {
            return Err(empty("forbidden_function_arguments", "restrictions"));
        }
        for r in &a.restrictions {
            if r.function.is_empty() || r.function == "." {
                return Err(LintConfigError::Parse("empty function in restriction".into()));
            }
            if r.forbidden_string_args.is_empty() {
                return Err(empty(
                    "forbidden_function_arguments",
                    &format!("forbidden_string_args for `{}`", r.function),
                ));
            }
        }
    }
    if cfg.forbidden_functions.enabled && cfg.forbidden_functions.forbidden_functions.is_empty() {
        return Err(empty("forbidden_functions", "forbidden_functions"));
    }
    Ok(())
}

/// The bundled default rule set.
pub fn default_config() -> LintConfig {
    load_lint_config(DEFAULT_CONFIG).expect("bundled lint config is valid")
}
