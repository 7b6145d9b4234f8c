//! Syntax tree for candidate modules. Every node keeps its source line.

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub line: usize,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    FunctionDef(FunctionDef),
    If {
        test: Expr,
        body: Vec<Stmt>,
        orelse: Vec<Stmt>,
    },
    For {
        target: Expr,
        iter: Expr,
        body: Vec<Stmt>,
        orelse: Vec<Stmt>,
    },
    While {
        test: Expr,
        body: Vec<Stmt>,
        orelse: Vec<Stmt>,
    },
    Return(Option<Expr>),
    Raise {
        exc: Option<Expr>,
        cause: Option<Expr>,
    },
    Assign {
        targets: Vec<Expr>,
        value: Expr,
    },
    AugAssign {
        target: Expr,
        op: &'static str,
        value: Expr,
    },
    AnnAssign {
        target: Expr,
        annotation: Expr,
        value: Option<Expr>,
    },
    Assert {
        test: Expr,
        msg: Option<Expr>,
    },
    Delete(Vec<Expr>),
    /// `import a.b` / `from a import b`; module paths as written.
    Import {
        module: Option<String>,
        names: Vec<String>,
    },
    Expr(Expr),
    Pass,
    Break,
    Continue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub line: usize,
    pub params: Vec<Param>,
    pub decorators: Vec<Decorator>,
    pub returns: Option<Expr>,
    pub body: Vec<Stmt>,
}

impl FunctionDef {
    pub fn has_decorator(&self, dotted: &str) -> bool {
        self.decorators.iter().any(|d| d.name.as_deref() == Some(dotted))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Positional,
    VarArgs,
    KeywordOnly,
    VarKeywords,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub annotation: Option<Expr>,
    pub default: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decorator {
    pub line: usize,
    /// Dotted callee, e.g. `triton.jit` for both `@triton.jit` and `@triton.jit(...)`.
    pub name: Option<String>,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub line: usize,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constant {
    None,
    Bool(bool),
    Int(String),
    Float(String),
    Str(String),
    Bytes(String),
    Ellipsis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompKind {
    List,
    Set,
    Dict,
    Generator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompFor {
    pub target: Expr,
    pub iter: Expr,
    pub ifs: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyword {
    /// `None` for `**mapping`.
    pub arg: Option<String>,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Name(String),
    Constant(Constant),
    /// Replacement fields of an f-string, parsed as expressions.
    FString(Vec<Expr>),
    Attribute {
        value: Box<Expr>,
        attr: String,
    },
    Call {
        func: Box<Expr>,
        args: Vec<Expr>,
        keywords: Vec<Keyword>,
    },
    Subscript {
        value: Box<Expr>,
        index: Box<Expr>,
    },
    Slice {
        lower: Option<Box<Expr>>,
        upper: Option<Box<Expr>>,
        step: Option<Box<Expr>>,
    },
    BinOp {
        left: Box<Expr>,
        op: &'static str,
        right: Box<Expr>,
    },
    UnaryOp {
        op: &'static str,
        operand: Box<Expr>,
    },
    BoolOp {
        op: &'static str,
        values: Vec<Expr>,
    },
    Compare {
        left: Box<Expr>,
        ops: Vec<&'static str>,
        comparators: Vec<Expr>,
    },
    IfExp {
        test: Box<Expr>,
        body: Box<Expr>,
        orelse: Box<Expr>,
    },
    Tuple(Vec<Expr>),
    List(Vec<Expr>),
    Set(Vec<Expr>),
    /// `None` key marks `**mapping` unpacking.
    Dict(Vec<(Option<Expr>, Expr)>),
    Comprehension {
        kind: CompKind,
        elt: Box<Expr>,
        value: Option<Box<Expr>>,
        generators: Vec<CompFor>,
    },
    Starred(Box<Expr>),
}

impl Expr {
    pub fn new(line: usize, kind: ExprKind) -> Self {
        Self { line, kind }
    }

    /// `a.b.c` for a pure name/attribute chain, `None` otherwise.
    pub fn dotted_path(&self) -> Option<String> {
        match &self.kind {
            ExprKind::Name(n) => Some(n.clone()),
            ExprKind::Attribute { value, attr } => {
                value.dotted_path().map(|base| format!("{base}.{attr}"))
            }
            _ => None,
        }
    }

    pub fn as_str_literal(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Constant(Constant::Str(s)) => Some(s),
            _ => None,
        }
    }

    /// Direct child expressions in source order.
    pub fn children(&self) -> Vec<&Expr> {
        match &self.kind {
            ExprKind::Name(_) | ExprKind::Constant(_) => vec![],
            ExprKind::FString(parts) => parts.iter().collect(),
            ExprKind::Attribute { value, .. } => vec![value],
            ExprKind::Call {
                func,
                args,
                keywords,
            } => {
                let mut v: Vec<&Expr> = vec![func];
                v.extend(args.iter());
                v.extend(keywords.iter().map(|k| &k.value));
                v
            }
            ExprKind::Subscript { value, index } => vec![value, index],
            ExprKind::Slice { lower, upper, step } => [lower, upper, step]
                .into_iter()
                .flatten()
                .map(|b| b.as_ref())
                .collect(),
            ExprKind::BinOp { left, right, .. } => vec![left, right],
            ExprKind::UnaryOp { operand, .. } => vec![operand],
            ExprKind::BoolOp { values, .. } => values.iter().collect(),
            ExprKind::Compare {
                left, comparators, ..
            } => {
                let mut v: Vec<&Expr> = vec![left];
                v.extend(comparators.iter());
                v
            }
            ExprKind::IfExp { test, body, orelse } => vec![body, test, orelse],
            ExprKind::Tuple(items) | ExprKind::List(items) | ExprKind::Set(items) => {
                items.iter().collect()
            }
            ExprKind::Dict(pairs) => pairs
                .iter()
                .flat_map(|(k, v)| k.iter().chain(std::iter::once(v)))
                .collect(),
            ExprKind::Comprehension {
                elt,
                value,
                generators,
                ..
            } => {
                let mut v: Vec<&Expr> = vec![elt];
                if let Some(val) = value {
                    v.push(val);
                }
                for g in generators {
                    v.push(&g.target);
                    v.push(&g.iter);
                    v.extend(g.ifs.iter());
                }
                v
            }
            ExprKind::Starred(inner) => vec![inner],
        }
    }
}

/// Whether a walk should descend into the children of the current node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Walk {
    Descend,
    Skip,
}

pub fn walk_expr<'a>(expr: &'a Expr, visit: &mut dyn FnMut(&'a Expr) -> Walk) {
    if visit(expr) == Walk::Descend {
        for child in expr.children() {
            walk_expr(child, visit);
        }
    }
}

impl Stmt {
    /// Expressions owned directly by this statement (not by nested bodies).
    /// For function definitions this includes decorators, annotations and defaults.
    pub fn own_exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::FunctionDef(f) => {
                let mut v: Vec<&Expr> = f.decorators.iter().map(|d| &d.expr).collect();
                for p in &f.params {
                    v.extend(p.annotation.iter());
                    v.extend(p.default.iter());
                }
                v.extend(f.returns.iter());
                v
            }
            StmtKind::If { test, .. } | StmtKind::While { test, .. } => vec![test],
            StmtKind::For { target, iter, .. } => vec![target, iter],
            StmtKind::Return(e) => e.iter().collect(),
            StmtKind::Raise { exc, cause } => exc.iter().chain(cause.iter()).collect(),
            StmtKind::Assign { targets, value } => {
                targets.iter().chain(std::iter::once(value)).collect()
            }
            StmtKind::AugAssign { target, value, .. } => vec![target, value],
            StmtKind::AnnAssign {
                target,
                annotation,
                value,
            } => {
                let mut v = vec![target, annotation];
                v.extend(value.iter());
                v
            }
            StmtKind::Assert { test, msg } => std::iter::once(test).chain(msg.iter()).collect(),
            StmtKind::Delete(targets) => targets.iter().collect(),
            StmtKind::Expr(e) => vec![e],
            StmtKind::Import { .. } | StmtKind::Pass | StmtKind::Break | StmtKind::Continue => {
                vec![]
            }
        }
    }

    /// Nested statement bodies in source order.
    pub fn bodies(&self) -> Vec<&[Stmt]> {
        match &self.kind {
            StmtKind::FunctionDef(f) => vec![&f.body],
            StmtKind::If { body, orelse, .. }
            | StmtKind::For { body, orelse, .. }
            | StmtKind::While { body, orelse, .. } => vec![body, orelse],
            _ => vec![],
        }
    }
}

/// Visits every statement depth-first, in source order.
pub fn walk_stmts<'a>(stmts: &'a [Stmt], visit: &mut dyn FnMut(&'a Stmt)) {
    for s in stmts {
        visit(s);
        for body in s.bodies() {
            walk_stmts(body, visit);
        }
    }
}
