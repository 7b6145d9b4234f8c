//! Recursive-descent parser for the accepted Python subset.
//!
//! Supported: function definitions with decorators, `if`/`for`/`while`,
//! assignments (plain, augmented, annotated), `return`/`raise`/`assert`/
//! `del`/`pass`/`break`/`continue`, imports (parsed so the linter can flag
//! them), and the usual expression grammar including comprehensions, slices
//! and f-strings. Everything else (classes, `try`, `with`, `lambda`, `async`,
//! `yield`, `global`, walrus, ...) is a syntax error.

use super::ast::*;
use super::lexer::{tokenize, StrToken, Token, TokenKind};
use super::SyntaxError;

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if",
    "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try",
    "while", "with", "yield",
];

const UNSUPPORTED: &[&str] = &[
    "class", "try", "except", "finally", "with", "async", "await", "lambda", "yield", "global",
    "nonlocal",
];

const AUG_OPS: &[&str] = &[
    "+=", "-=", "*=", "/=", "//=", "%=", "**=", ">>=", "<<=", "&=", "|=", "^=", "@=",
];

pub fn parse_module(source: &str) -> Result<Vec<Stmt>, SyntaxError> {
    let tokens = tokenize(source, 1)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut body = Vec::new();
    while !p.at_eof() {
        if p.eat_kind(&TokenKind::Newline) {
            continue;
        }
        if matches!(p.peek().kind, TokenKind::Indent) {
            return Err(p.err("unexpected indent"));
        }
        body.extend(p.statement()?);
    }
    Ok(body)
}

fn parse_embedded_expr(text: &str, line: usize) -> Result<Expr, SyntaxError> {
    let tokens = tokenize(text.trim(), line)?;
    let mut p = Parser { tokens, pos: 0 };
    let e = p.testlist_star_expr()?;
    p.eat_kind(&TokenKind::Newline);
    if !p.at_eof() {
        return Err(p.err("invalid expression in f-string"));
    }
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn peek_at(&self, offset: usize) -> &Token {
        &self.tokens[(self.pos + offset).min(self.tokens.len() - 1)]
    }

    fn line(&self) -> usize {
        self.peek().line
    }

    fn advance(&mut self) -> Token {
        let t = self.peek().clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek().kind, TokenKind::Eof)
    }

    fn err(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            line: self.line(),
            message: message.into(),
        }
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Op(o) if *o == op)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Name(n) if n == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kind(&mut self, kind: &TokenKind) -> bool {
        if &self.peek().kind == kind {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<(), SyntaxError> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{op}', found {}", describe(&self.peek().kind))))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{kw}', found {}", describe(&self.peek().kind))))
        }
    }

    fn identifier(&mut self) -> Result<String, SyntaxError> {
        match &self.peek().kind {
            TokenKind::Name(n) if !KEYWORDS.contains(&n.as_str()) => {
                let n = n.clone();
                self.advance();
                Ok(n)
            }
            other => Err(self.err(format!("expected identifier, found {}", describe(other)))),
        }
    }

    fn end_of_simple(&mut self) -> Result<(), SyntaxError> {
        if self.eat_kind(&TokenKind::Newline) || self.at_eof() {
            Ok(())
        } else {
            Err(self.err(format!(
                "expected end of statement, found {}",
                describe(&self.peek().kind)
            )))
        }
    }

    // ---- statements -------------------------------------------------------

    fn statement(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        if let TokenKind::Name(n) = &self.peek().kind {
            if UNSUPPORTED.contains(&n.as_str()) {
                return Err(self.err(format!("unsupported construct `{n}`")));
            }
            match n.as_str() {
                "def" => return Ok(vec![self.funcdef(Vec::new())?]),
                "if" => return Ok(vec![self.if_stmt()?]),
                "for" => return Ok(vec![self.for_stmt()?]),
                "while" => return Ok(vec![self.while_stmt()?]),
                _ => {}
            }
        }
        if self.is_op("@") {
            let decorators = self.decorators()?;
            if !self.is_kw("def") {
                return Err(self.err("decorators must precede a function definition"));
            }
            return Ok(vec![self.funcdef(decorators)?]);
        }
        let mut out = vec![self.simple_stmt()?];
        while self.eat_op(";") {
            if matches!(self.peek().kind, TokenKind::Newline | TokenKind::Eof) {
                break;
            }
            out.push(self.simple_stmt()?);
        }
        self.end_of_simple()?;
        Ok(out)
    }

    fn decorators(&mut self) -> Result<Vec<Decorator>, SyntaxError> {
        let mut out = Vec::new();
        while self.is_op("@") {
            let line = self.line();
            self.advance();
            let expr = self.test()?;
            let name = match &expr.kind {
                ExprKind::Call { func, .. } => func.dotted_path(),
                _ => expr.dotted_path(),
            };
            out.push(Decorator { line, name, expr });
            if !self.eat_kind(&TokenKind::Newline) {
                return Err(self.err("expected newline after decorator"));
            }
        }
        Ok(out)
    }

    fn funcdef(&mut self, decorators: Vec<Decorator>) -> Result<Stmt, SyntaxError> {
        let line = self.line();
        self.expect_kw("def")?;
        let name = self.identifier()?;
        self.expect_op("(")?;
        let params = self.parameters()?;
        self.expect_op(")")?;
        let returns = if self.eat_op("->") {
            Some(self.test()?)
        } else {
            None
        };
        self.expect_op(":")?;
        let body = self.suite()?;
        Ok(Stmt {
            line,
            kind: StmtKind::FunctionDef(FunctionDef {
                name,
                line,
                params,
                decorators,
                returns,
                body,
            }),
        })
    }

    fn parameters(&mut self) -> Result<Vec<Param>, SyntaxError> {
        let mut params: Vec<Param> = Vec::new();
        let mut keyword_only = false;
        while !self.is_op(")") {
            if self.eat_op("/") {
                // positional-only marker
            } else if self.eat_op("**") {
                let name = self.identifier()?;
                let annotation = self.param_annotation()?;
                params.push(Param {
                    name,
                    kind: ParamKind::VarKeywords,
                    annotation,
                    default: None,
                });
            } else if self.eat_op("*") {
                keyword_only = true;
                if !self.is_op(",") && !self.is_op(")") {
                    let name = self.identifier()?;
                    let annotation = self.param_annotation()?;
                    params.push(Param {
                        name,
                        kind: ParamKind::VarArgs,
                        annotation,
                        default: None,
                    });
                }
            } else {
                let name = self.identifier()?;
                if params.iter().any(|p| p.name == name) {
                    return Err(self.err(format!("duplicate argument `{name}`")));
                }
                let annotation = self.param_annotation()?;
                let default = if self.eat_op("=") {
                    Some(self.test()?)
                } else {
                    None
                };
                params.push(Param {
                    name,
                    kind: if keyword_only {
                        ParamKind::KeywordOnly
                    } else {
                        ParamKind::Positional
                    },
                    annotation,
                    default,
                });
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(params)
    }

    fn param_annotation(&mut self) -> Result<Option<Expr>, SyntaxError> {
        if self.eat_op(":") {
            Ok(Some(self.test()?))
        } else {
            Ok(None)
        }
    }

    fn suite(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        if !self.eat_kind(&TokenKind::Newline) {
            let mut out = vec![self.simple_stmt()?];
            while self.eat_op(";") {
                if matches!(self.peek().kind, TokenKind::Newline | TokenKind::Eof) {
                    break;
                }
                out.push(self.simple_stmt()?);
            }
            self.end_of_simple()?;
            return Ok(out);
        }
        if !self.eat_kind(&TokenKind::Indent) {
            return Err(self.err("expected an indented block"));
        }
        let mut body = Vec::new();
        while !self.eat_kind(&TokenKind::Dedent) {
            if self.at_eof() {
                break;
            }
            if self.eat_kind(&TokenKind::Newline) {
                continue;
            }
            body.extend(self.statement()?);
        }
        Ok(body)
    }

    fn if_stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let line = self.line();
        self.advance(); // `if` or `elif`
        let test = self.namedexpr_test()?;
        self.expect_op(":")?;
        let body = self.suite()?;
        let orelse = if self.is_kw("elif") {
            vec![self.if_stmt()?]
        } else if self.eat_kw("else") {
            self.expect_op(":")?;
            self.suite()?
        } else {
            Vec::new()
        };
        Ok(Stmt {
            line,
            kind: StmtKind::If { test, body, orelse },
        })
    }

    fn for_stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let line = self.line();
        self.expect_kw("for")?;
        let target = self.target_list()?;
        check_target(&target)?;
        self.expect_kw("in")?;
        let iter = self.testlist()?;
        self.expect_op(":")?;
        let body = self.suite()?;
        let orelse = self.else_suite()?;
        Ok(Stmt {
            line,
            kind: StmtKind::For {
                target,
                iter,
                body,
                orelse,
            },
        })
    }

    fn while_stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let line = self.line();
        self.expect_kw("while")?;
        let test = self.namedexpr_test()?;
        self.expect_op(":")?;
        let body = self.suite()?;
        let orelse = self.else_suite()?;
        Ok(Stmt {
            line,
            kind: StmtKind::While { test, body, orelse },
        })
    }

    fn else_suite(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        if self.eat_kw("else") {
            self.expect_op(":")?;
            self.suite()
        } else {
            Ok(Vec::new())
        }
    }

    fn simple_stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let line = self.line();
        if let TokenKind::Name(n) = &self.peek().kind {
            if UNSUPPORTED.contains(&n.as_str()) {
                return Err(self.err(format!("unsupported construct `{n}`")));
            }
            let kind = match n.as_str() {
                "pass" => {
                    self.advance();
                    Some(StmtKind::Pass)
                }
                "break" => {
                    self.advance();
                    Some(StmtKind::Break)
                }
                "continue" => {
                    self.advance();
                    Some(StmtKind::Continue)
                }
                "return" => {
                    self.advance();
                    let value = if self.at_simple_end() {
                        None
                    } else {
                        Some(self.testlist_star_expr()?)
                    };
                    Some(StmtKind::Return(value))
                }
                "raise" => {
                    self.advance();
                    let (exc, cause) = if self.at_simple_end() {
                        (None, None)
                    } else {
                        let exc = self.test()?;
                        let cause = if self.eat_kw("from") {
                            Some(self.test()?)
                        } else {
                            None
                        };
                        (Some(exc), cause)
                    };
                    Some(StmtKind::Raise { exc, cause })
                }
                "assert" => {
                    self.advance();
                    let test = self.test()?;
                    let msg = if self.eat_op(",") {
                        Some(self.test()?)
                    } else {
                        None
                    };
                    Some(StmtKind::Assert { test, msg })
                }
                "del" => {
                    self.advance();
                    let target = self.target_list()?;
                    check_target(&target)?;
                    let targets = match target.kind {
                        ExprKind::Tuple(items) => items,
                        _ => vec![target],
                    };
                    Some(StmtKind::Delete(targets))
                }
                "import" => {
                    self.advance();
                    let mut names = vec![self.dotted_as_name()?];
                    while self.eat_op(",") {
                        names.push(self.dotted_as_name()?);
                    }
                    Some(StmtKind::Import {
                        module: None,
                        names,
                    })
                }
                "from" => Some(self.parse_from_import()?),
                _ => None,
            };
            if let Some(kind) = kind {
                return Ok(Stmt { line, kind });
            }
        }
        self.expr_stmt(line)
    }

    fn at_simple_end(&self) -> bool {
        matches!(self.peek().kind, TokenKind::Newline | TokenKind::Eof) || self.is_op(";")
    }

    fn dotted_name(&mut self) -> Result<String, SyntaxError> {
        let mut name = self.identifier()?;
        while self.eat_op(".") {
            name.push('.');
            name.push_str(&self.identifier()?);
        }
        Ok(name)
    }

    fn dotted_as_name(&mut self) -> Result<String, SyntaxError> {
        let name = self.dotted_name()?;
        if self.eat_kw("as") {
            self.identifier()?;
        }
        Ok(name)
    }

    fn parse_from_import(&mut self) -> Result<StmtKind, SyntaxError> {
        self.expect_kw("from")?;
        let mut module = String::new();
        loop {
            if self.eat_op(".") {
                module.push('.');
            } else if self.eat_op("...") {
                module.push_str("...");
            } else {
                break;
            }
        }
        if !self.is_kw("import") {
            module.push_str(&self.dotted_name()?);
        }
        self.expect_kw("import")?;
        let mut names = Vec::new();
        if self.eat_op("*") {
            names.push("*".to_string());
        } else {
            let parens = self.eat_op("(");
            loop {
                let n = self.identifier()?;
                if self.eat_kw("as") {
                    self.identifier()?;
                }
                names.push(n);
                if !self.eat_op(",") {
                    break;
                }
                if parens && self.is_op(")") {
                    break;
                }
            }
            if parens {
                self.expect_op(")")?;
            }
        }
        Ok(StmtKind::Import {
            module: Some(module),
            names,
        })
    }

    fn expr_stmt(&mut self, line: usize) -> Result<Stmt, SyntaxError> {
        let first = self.testlist_star_expr()?;
        if self.is_op("=") {
            let mut exprs = vec![first];
            while self.eat_op("=") {
                exprs.push(self.testlist_star_expr()?);
            }
            let value = exprs.pop().expect("at least two expressions");
            for t in &exprs {
                check_target(t)?;
            }
            return Ok(Stmt {
                line,
                kind: StmtKind::Assign {
                    targets: exprs,
                    value,
                },
            });
        }
        if let TokenKind::Op(op) = self.peek().kind {
            if AUG_OPS.contains(&op) {
                self.advance();
                if !matches!(
                    first.kind,
                    ExprKind::Name(_) | ExprKind::Attribute { .. } | ExprKind::Subscript { .. }
                ) {
                    return Err(SyntaxError {
                        line,
                        message: "illegal expression for augmented assignment".into(),
                    });
                }
                let value = self.testlist()?;
                return Ok(Stmt {
                    line,
                    kind: StmtKind::AugAssign {
                        target: first,
                        op,
                        value,
                    },
                });
            }
        }
        if self.eat_op(":") {
            check_target(&first)?;
            let annotation = self.test()?;
            let value = if self.eat_op("=") {
                Some(self.testlist_star_expr()?)
            } else {
                None
            };
            return Ok(Stmt {
                line,
                kind: StmtKind::AnnAssign {
                    target: first,
                    annotation,
                    value,
                },
            });
        }
        Ok(Stmt {
            line,
            kind: StmtKind::Expr(first),
        })
    }

    // ---- expressions ------------------------------------------------------

    fn namedexpr_test(&mut self) -> Result<Expr, SyntaxError> {
        let e = self.test()?;
        if self.is_op(":=") {
            return Err(self.err("unsupported construct `:=`"));
        }
        Ok(e)
    }

    /// Comma-separated expressions; a tuple when a comma is present.
    fn testlist(&mut self) -> Result<Expr, SyntaxError> {
        self.sequence(|p| p.test())
    }

    fn testlist_star_expr(&mut self) -> Result<Expr, SyntaxError> {
        self.sequence(|p| p.star_or_test())
    }

    /// Assignment/loop targets, parsed below comparison level so `in` is
    /// left for the enclosing `for`.
    fn target_list(&mut self) -> Result<Expr, SyntaxError> {
        self.sequence(|p| {
            if p.is_op("*") {
                let line = p.line();
                p.advance();
                Ok(Expr::new(line, ExprKind::Starred(Box::new(p.bitor()?))))
            } else {
                p.bitor()
            }
        })
    }

    fn sequence(
        &mut self,
        mut item: impl FnMut(&mut Self) -> Result<Expr, SyntaxError>,
    ) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let first = item(self)?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.starts_expression() {
                items.push(item(self)?);
            } else {
                break;
            }
        }
        Ok(Expr::new(line, ExprKind::Tuple(items)))
    }

    fn starts_expression(&self) -> bool {
        match &self.peek().kind {
            TokenKind::Name(n) => {
                !KEYWORDS.contains(&n.as_str())
                    || matches!(n.as_str(), "None" | "True" | "False" | "not" | "lambda" | "await")
            }
            TokenKind::Int(_) | TokenKind::Float(_) | TokenKind::Str(_) => true,
            TokenKind::Op(o) => matches!(*o, "(" | "[" | "{" | "-" | "+" | "~" | "*" | "..."),
            _ => false,
        }
    }

    fn star_or_test(&mut self) -> Result<Expr, SyntaxError> {
        if self.is_op("*") {
            let line = self.line();
            self.advance();
            return Ok(Expr::new(line, ExprKind::Starred(Box::new(self.bitor()?))));
        }
        self.test()
    }

    fn test(&mut self) -> Result<Expr, SyntaxError> {
        if self.is_kw("lambda") {
            return Err(self.err("unsupported construct `lambda`"));
        }
        let line = self.line();
        let body = self.or_test()?;
        if self.eat_kw("if") {
            let test = self.or_test()?;
            self.expect_kw("else")?;
            let orelse = self.test()?;
            return Ok(Expr::new(
                line,
                ExprKind::IfExp {
                    test: Box::new(test),
                    body: Box::new(body),
                    orelse: Box::new(orelse),
                },
            ));
        }
        Ok(body)
    }

    fn or_test(&mut self) -> Result<Expr, SyntaxError> {
        self.bool_chain("or", Self::and_test)
    }

    fn and_test(&mut self) -> Result<Expr, SyntaxError> {
        self.bool_chain("and", Self::not_test)
    }

    fn bool_chain(
        &mut self,
        kw: &'static str,
        next: fn(&mut Self) -> Result<Expr, SyntaxError>,
    ) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let first = next(self)?;
        if !self.is_kw(kw) {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat_kw(kw) {
            values.push(next(self)?);
        }
        Ok(Expr::new(line, ExprKind::BoolOp { op: kw, values }))
    }

    fn not_test(&mut self) -> Result<Expr, SyntaxError> {
        if self.is_kw("not") {
            let line = self.line();
            self.advance();
            let operand = self.not_test()?;
            return Ok(Expr::new(
                line,
                ExprKind::UnaryOp {
                    op: "not",
                    operand: Box::new(operand),
                },
            ));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let left = self.bitor()?;
        let mut ops = Vec::new();
        let mut comparators = Vec::new();
        loop {
            let op: &'static str = match &self.peek().kind {
                TokenKind::Op(o) if matches!(*o, "<" | ">" | "==" | ">=" | "<=" | "!=") => {
                    let o = *o;
                    self.advance();
                    o
                }
                TokenKind::Name(n) if n == "in" => {
                    self.advance();
                    "in"
                }
                TokenKind::Name(n)
                    if n == "not"
                        && matches!(&self.peek_at(1).kind, TokenKind::Name(m) if m == "in") =>
                {
                    self.advance();
                    self.advance();
                    "not in"
                }
                TokenKind::Name(n) if n == "is" => {
                    self.advance();
                    if self.eat_kw("not") {
                        "is not"
                    } else {
                        "is"
                    }
                }
                _ => break,
            };
            ops.push(op);
            comparators.push(self.bitor()?);
        }
        if ops.is_empty() {
            return Ok(left);
        }
        Ok(Expr::new(
            line,
            ExprKind::Compare {
                left: Box::new(left),
                ops,
                comparators,
            },
        ))
    }

    fn binary(
        &mut self,
        ops: &[&'static str],
        next: fn(&mut Self) -> Result<Expr, SyntaxError>,
    ) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let mut left = next(self)?;
        loop {
            let op = match &self.peek().kind {
                TokenKind::Op(o) if ops.contains(o) => *o,
                _ => break,
            };
            self.advance();
            let right = next(self)?;
            left = Expr::new(
                line,
                ExprKind::BinOp {
                    left: Box::new(left),
                    op,
                    right: Box::new(right),
                },
            );
        }
        Ok(left)
    }

    fn bitor(&mut self) -> Result<Expr, SyntaxError> {
        self.binary(&["|"], Self::bitxor)
    }

    fn bitxor(&mut self) -> Result<Expr, SyntaxError> {
        self.binary(&["^"], Self::bitand)
    }

    fn bitand(&mut self) -> Result<Expr, SyntaxError> {
        self.binary(&["&"], Self::shift)
    }

    fn shift(&mut self) -> Result<Expr, SyntaxError> {
        self.binary(&["<<", ">>"], Self::arith)
    }

    fn arith(&mut self) -> Result<Expr, SyntaxError> {
        self.binary(&["+", "-"], Self::term)
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        self.binary(&["*", "/", "//", "%", "@"], Self::factor)
    }

    fn factor(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let op = match &self.peek().kind {
            TokenKind::Op(o) if matches!(*o, "+" | "-" | "~") => *o,
            _ => return self.power(),
        };
        self.advance();
        let operand = self.factor()?;
        Ok(Expr::new(
            line,
            ExprKind::UnaryOp {
                op,
                operand: Box::new(operand),
            },
        ))
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let base = self.primary()?;
        if self.eat_op("**") {
            let exp = self.factor()?;
            return Ok(Expr::new(
                line,
                ExprKind::BinOp {
                    left: Box::new(base),
                    op: "**",
                    right: Box::new(exp),
                },
            ));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let mut expr = self.atom()?;
        loop {
            let line = self.line();
            if self.eat_op(".") {
                let attr = self.identifier()?;
                expr = Expr::new(
                    line,
                    ExprKind::Attribute {
                        value: Box::new(expr),
                        attr,
                    },
                );
            } else if self.eat_op("(") {
                let (args, keywords) = self.call_args()?;
                self.expect_op(")")?;
                expr = Expr::new(
                    expr.line,
                    ExprKind::Call {
                        func: Box::new(expr),
                        args,
                        keywords,
                    },
                );
            } else if self.eat_op("[") {
                let index = self.subscript_list()?;
                self.expect_op("]")?;
                expr = Expr::new(
                    expr.line,
                    ExprKind::Subscript {
                        value: Box::new(expr),
                        index: Box::new(index),
                    },
                );
            } else {
                return Ok(expr);
            }
        }
    }

    fn call_args(&mut self) -> Result<(Vec<Expr>, Vec<Keyword>), SyntaxError> {
        let mut args = Vec::new();
        let mut keywords = Vec::new();
        while !self.is_op(")") {
            let line = self.line();
            if self.eat_op("**") {
                keywords.push(Keyword {
                    arg: None,
                    value: self.test()?,
                });
            } else if self.eat_op("*") {
                args.push(Expr::new(line, ExprKind::Starred(Box::new(self.test()?))));
            } else if matches!(&self.peek().kind, TokenKind::Name(_))
                && matches!(&self.peek_at(1).kind, TokenKind::Op("="))
            {
                let arg = self.identifier()?;
                self.advance();
                keywords.push(Keyword {
                    arg: Some(arg),
                    value: self.test()?,
                });
            } else {
                let value = self.test()?;
                if self.is_kw("for") {
                    let generators = self.comp_for()?;
                    args.push(Expr::new(
                        line,
                        ExprKind::Comprehension {
                            kind: CompKind::Generator,
                            elt: Box::new(value),
                            value: None,
                            generators,
                        },
                    ));
                } else {
                    if !keywords.is_empty() {
                        return Err(SyntaxError {
                            line,
                            message: "positional argument follows keyword argument".into(),
                        });
                    }
                    args.push(value);
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok((args, keywords))
    }

    fn subscript_list(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let first = self.subscript()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_op("]") {
                break;
            }
            items.push(self.subscript()?);
        }
        Ok(Expr::new(line, ExprKind::Tuple(items)))
    }

    fn subscript(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let lower = if self.is_op(":") {
            None
        } else {
            let e = self.star_or_test()?;
            if !self.is_op(":") {
                return Ok(e);
            }
            Some(Box::new(e))
        };
        self.expect_op(":")?;
        let upper = if self.is_op(":") || self.is_op("]") || self.is_op(",") {
            None
        } else {
            Some(Box::new(self.test()?))
        };
        let step = if self.eat_op(":") {
            if self.is_op("]") || self.is_op(",") {
                None
            } else {
                Some(Box::new(self.test()?))
            }
        } else {
            None
        };
        Ok(Expr::new(line, ExprKind::Slice { lower, upper, step }))
    }

    fn comp_for(&mut self) -> Result<Vec<CompFor>, SyntaxError> {
        let mut out = Vec::new();
        while self.eat_kw("for") {
            let target = self.target_list()?;
            check_target(&target)?;
            self.expect_kw("in")?;
            let iter = self.or_test()?;
            let mut ifs = Vec::new();
            while self.eat_kw("if") {
                ifs.push(self.or_test()?);
            }
            out.push(CompFor { target, iter, ifs });
        }
        Ok(out)
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let tok = self.peek().clone();
        let line = tok.line;
        match tok.kind {
            TokenKind::Name(n) => {
                self.advance();
                let kind = match n.as_str() {
                    "None" => ExprKind::Constant(Constant::None),
                    "True" => ExprKind::Constant(Constant::Bool(true)),
                    "False" => ExprKind::Constant(Constant::Bool(false)),
                    kw if UNSUPPORTED.contains(&kw) => {
                        return Err(SyntaxError {
                            line,
                            message: format!("unsupported construct `{kw}`"),
                        })
                    }
                    kw if KEYWORDS.contains(&kw) => {
                        return Err(SyntaxError {
                            line,
                            message: format!("unexpected keyword `{kw}`"),
                        })
                    }
                    _ => ExprKind::Name(n),
                };
                Ok(Expr::new(line, kind))
            }
            TokenKind::Int(s) => {
                self.advance();
                Ok(Expr::new(line, ExprKind::Constant(Constant::Int(s))))
            }
            TokenKind::Float(s) => {
                self.advance();
                Ok(Expr::new(line, ExprKind::Constant(Constant::Float(s))))
            }
            TokenKind::Str(_) => self.strings(),
            TokenKind::Op("...") => {
                self.advance();
                Ok(Expr::new(line, ExprKind::Constant(Constant::Ellipsis)))
            }
            TokenKind::Op("(") => {
                self.advance();
                if self.eat_op(")") {
                    return Ok(Expr::new(line, ExprKind::Tuple(Vec::new())));
                }
                let first = self.star_or_test()?;
                if self.is_kw("for") {
                    let generators = self.comp_for()?;
                    self.expect_op(")")?;
                    return Ok(Expr::new(
                        line,
                        ExprKind::Comprehension {
                            kind: CompKind::Generator,
                            elt: Box::new(first),
                            value: None,
                            generators,
                        },
                    ));
                }
                if self.is_op(":=") {
                    return Err(self.err("unsupported construct `:=`"));
                }
                if !self.is_op(",") {
                    self.expect_op(")")?;
                    return Ok(first);
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.is_op(")") {
                        break;
                    }
                    items.push(self.star_or_test()?);
                }
                self.expect_op(")")?;
                Ok(Expr::new(line, ExprKind::Tuple(items)))
            }
            TokenKind::Op("[") => {
                self.advance();
                if self.eat_op("]") {
                    return Ok(Expr::new(line, ExprKind::List(Vec::new())));
                }
                let first = self.star_or_test()?;
                if self.is_kw("for") {
                    let generators = self.comp_for()?;
                    self.expect_op("]")?;
                    return Ok(Expr::new(
                        line,
                        ExprKind::Comprehension {
                            kind: CompKind::List,
                            elt: Box::new(first),
                            value: None,
                            generators,
                        },
                    ));
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.is_op("]") {
                        break;
                    }
                    items.push(self.star_or_test()?);
                }
                self.expect_op("]")?;
                Ok(Expr::new(line, ExprKind::List(items)))
            }
            TokenKind::Op("{") => {
                self.advance();
                self.brace_display(line)
            }
            other => Err(SyntaxError {
                line,
                message: format!("invalid syntax near {}", describe(&other)),
            }),
        }
    }

    fn brace_display(&mut self, line: usize) -> Result<Expr, SyntaxError> {
        if self.eat_op("}") {
            return Ok(Expr::new(line, ExprKind::Dict(Vec::new())));
        }
        if self.eat_op("**") {
            let first = self.bitor()?;
            return self.dict_rest(line, vec![(None, first)]);
        }
        let first = self.star_or_test()?;
        if self.eat_op(":") {
            let value = self.test()?;
            if self.is_kw("for") {
                let generators = self.comp_for()?;
                self.expect_op("}")?;
                return Ok(Expr::new(
                    line,
                    ExprKind::Comprehension {
                        kind: CompKind::Dict,
                        elt: Box::new(first),
                        value: Some(Box::new(value)),
                        generators,
                    },
                ));
            }
            return self.dict_rest(line, vec![(Some(first), value)]);
        }
        if self.is_kw("for") {
            let generators = self.comp_for()?;
            self.expect_op("}")?;
            return Ok(Expr::new(
                line,
                ExprKind::Comprehension {
                    kind: CompKind::Set,
                    elt: Box::new(first),
                    value: None,
                    generators,
                },
            ));
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_op("}") {
                break;
            }
            items.push(self.star_or_test()?);
        }
        self.expect_op("}")?;
        Ok(Expr::new(line, ExprKind::Set(items)))
    }

    fn dict_rest(
        &mut self,
        line: usize,
        mut pairs: Vec<(Option<Expr>, Expr)>,
    ) -> Result<Expr, SyntaxError> {
        while self.eat_op(",") {
            if self.is_op("}") {
                break;
            }
            if self.eat_op("**") {
                let v = self.bitor()?;
                pairs.push((None, v));
            } else {
                let k = self.test()?;
                self.expect_op(":")?;
                let v = self.test()?;
                pairs.push((Some(k), v));
            }
        }
        self.expect_op("}")?;
        Ok(Expr::new(line, ExprKind::Dict(pairs)))
    }

    /// Adjacent string literals concatenate; any f-string part makes the
    /// whole literal an f-string whose fields are parsed as expressions.
    fn strings(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let mut parts: Vec<StrToken> = Vec::new();
        while let TokenKind::Str(s) = &self.peek().kind {
            parts.push(s.clone());
            self.advance();
        }
        let bytes = parts.iter().any(|p| p.bytes);
        if bytes && !parts.iter().all(|p| p.bytes) {
            return Err(SyntaxError {
                line,
                message: "cannot mix bytes and nonbytes literals".into(),
            });
        }
        if parts.iter().any(|p| p.fstring) {
            let mut fields = Vec::new();
            for p in parts.iter().filter(|p| p.fstring) {
                fields.extend(fstring_fields(&p.value, line)?);
            }
            return Ok(Expr::new(line, ExprKind::FString(fields)));
        }
        let value: String = parts.into_iter().map(|p| p.value).collect();
        Ok(Expr::new(
            line,
            ExprKind::Constant(if bytes {
                Constant::Bytes(value)
            } else {
                Constant::Str(value)
            }),
        ))
    }
}

fn fstring_fields(body: &str, line: usize) -> Result<Vec<Expr>, SyntaxError> {
    let chars: Vec<char> = body.chars().collect();
    let mut fields = Vec::new();
    let mut i = 0;
    let bad = |m: &str| SyntaxError {
        line,
        message: format!("f-string: {m}"),
    };
    while i < chars.len() {
        match chars[i] {
            '{' if chars.get(i + 1) == Some(&'{') => i += 2,
            '}' if chars.get(i + 1) == Some(&'}') => i += 2,
            '}' => return Err(bad("single '}' is not allowed")),
            '{' => {
                i += 1;
                let start = i;
                let mut depth = 0usize;
                let mut quote: Option<char> = None;
                let mut end = None;
                while i < chars.len() {
                    let c = chars[i];
                    if let Some(q) = quote {
                        if c == q {
                            quote = None;
                        }
                    } else {
                        match c {
                            '\'' | '"' => quote = Some(c),
                            '(' | '[' | '{' => depth += 1,
                            ')' | ']' => depth = depth.saturating_sub(1),
                            '}' if depth > 0 => depth -= 1,
                            '}' => {
                                end.get_or_insert(i);
                                break;
                            }
                            '!' if depth == 0 && chars.get(i + 1) != Some(&'=') => {
                                end.get_or_insert(i);
                            }
                            ':' if depth == 0 => {
                                end.get_or_insert(i);
                            }
                            _ => {}
                        }
                    }
                    i += 1;
                }
                if i >= chars.len() {
                    return Err(bad("expecting '}'"));
                }
                let expr_end = end.unwrap_or(i);
                let text: String = chars[start..expr_end].iter().collect();
                if text.trim().is_empty() {
                    return Err(bad("empty expression not allowed"));
                }
                fields.push(parse_embedded_expr(&text, line)?);
                i += 1;
            }
            _ => i += 1,
        }
    }
    Ok(fields)
}

fn check_target(e: &Expr) -> Result<(), SyntaxError> {
    match &e.kind {
        ExprKind::Name(_) | ExprKind::Attribute { .. } | ExprKind::Subscript { .. } => Ok(()),
        ExprKind::Tuple(items) | ExprKind::List(items) => items.iter().try_for_each(check_target),
        ExprKind::Starred(inner) => check_target(inner),
        _ => Err(SyntaxError {
            line: e.line,
            message: "cannot assign to expression".into(),
        }),
    }
}

fn describe(kind: &TokenKind) -> String {
    match kind {
        TokenKind::Name(n) => format!("'{n}'"),
        TokenKind::Int(s) | TokenKind::Float(s) => format!("number {s}"),
        TokenKind::Str(_) => "string literal".into(),
        TokenKind::Op(o) => format!("'{o}'"),
        TokenKind::Newline => "end of line".into(),
        TokenKind::Indent => "indent".into(),
        TokenKind::Dedent => "dedent".into(),
        TokenKind::Eof => "end of input".into(),
    }
}
