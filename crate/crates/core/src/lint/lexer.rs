//! Tokenizer for the Python-syntax subset accepted in candidate modules.
//!
//! Comments are dropped here, so they never reach the rules.

use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Name(String),
    Int(String),
    Float(String),
    Str(StrToken),
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrToken {
    /// Escape-processed contents (raw contents for raw strings).
    pub value: String,
    pub fstring: bool,
    pub bytes: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
}

const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "==", "!=", "<=", ">=", "**", "//", "<<", ">>",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", "+", "-", "*", "/", "%", "@", "&", "|",
    "^", "~", "<", ">", "(", ")", "[", "]", "{", "}", ",", ":", ".", ";", "=",
];

pub fn tokenize(source: &str, first_line: usize) -> Result<Vec<Token>, SyntaxError> {
    Lexer {
        chars: source.chars().collect(),
        pos: 0,
        line: first_line,
        depth: 0,
        open_lines: Vec::new(),
        indents: vec![0],
        at_line_start: true,
        tokens: Vec::new(),
    }
    .run()
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    depth: usize,
    /// Line of each currently open bracket.
    open_lines: Vec<usize>,
    indents: Vec<usize>,
    at_line_start: bool,
    tokens: Vec<Token>,
}

impl Lexer {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn push(&mut self, kind: TokenKind) {
        self.tokens.push(Token {
            kind,
            line: self.line,
        });
    }

    fn err(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            line: self.line,
            message: message.into(),
        }
    }

    fn run(mut self) -> Result<Vec<Token>, SyntaxError> {
        loop {
            if self.at_line_start && self.depth == 0 {
                if !self.indentation()? {
                    break;
                }
                continue;
            }
            let Some(c) = self.peek() else { break };
            match c {
                ' ' | '\t' | '\x0c' | '\r' => self.pos += 1,
                '\\' if self.peek_at(1) == Some('\n') => {
                    self.pos += 2;
                    self.line += 1;
                }
                '\\' if self.peek_at(1) == Some('\r') && self.peek_at(2) == Some('\n') => {
                    self.pos += 3;
                    self.line += 1;
                }
                '#' => self.skip_comment(),
                '\n' => {
                    if self.depth == 0 {
                        self.push(TokenKind::Newline);
                        self.at_line_start = true;
                    }
                    self.pos += 1;
                    self.line += 1;
                }
                '"' | '\'' => self.string(String::new())?,
                c if c.is_ascii_digit() => self.number()?,
                '.' if self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) => self.number()?,
                c if c == '_' || c.is_alphabetic() => self.name()?,
                _ => self.operator()?,
            }
        }
        if let Some(&line) = self.open_lines.last() {
            return Err(SyntaxError {
                line,
                message: "bracket was never closed".into(),
            });
        }
        if !matches!(
            self.tokens.last().map(|t| &t.kind),
            None | Some(TokenKind::Newline) | Some(TokenKind::Dedent)
        ) {
            self.push(TokenKind::Newline);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(TokenKind::Dedent);
        }
        self.push(TokenKind::Eof);
        Ok(self.tokens)
    }

    fn skip_comment(&mut self) {
        while let Some(c) = self.peek() {
            if c == '\n' {
                break;
            }
            self.pos += 1;
        }
    }

    /// Handles leading whitespace of a logical line. Returns `false` at EOF.
    fn indentation(&mut self) -> Result<bool, SyntaxError> {
        let mut width = 0usize;
        loop {
            match self.peek() {
                Some(' ') => width += 1,
                Some('\t') => width = (width / 8 + 1) * 8,
                Some('\x0c') | Some('\r') => {}
                _ => break,
            }
            self.pos += 1;
        }
        match self.peek() {
            None => return Ok(false),
            Some('\n') => {
                self.pos += 1;
                self.line += 1;
                return Ok(true);
            }
            Some('#') => {
                self.skip_comment();
                return Ok(true);
            }
            _ => {}
        }
        self.at_line_start = false;
        let current = *self.indents.last().expect("indent stack never empty");
        if width > current {
            self.indents.push(width);
            self.push(TokenKind::Indent);
        } else {
            while width < *self.indents.last().expect("indent stack never empty") {
                self.indents.pop();
                self.push(TokenKind::Dedent);
            }
            if width != *self.indents.last().expect("indent stack never empty") {
                return Err(self.err("unindent does not match any outer indentation level"));
            }
        }
        Ok(true)
    }

    fn name(&mut self) -> Result<(), SyntaxError> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c == '_' || c.is_alphanumeric() {
                self.pos += 1;
            } else {
                break;
            }
        }
        let word: String = self.chars[start..self.pos].iter().collect();
        if matches!(self.peek(), Some('"') | Some('\''))
            && word.len() <= 2
            && word
                .chars()
                .all(|c| matches!(c.to_ascii_lowercase(), 'r' | 'b' | 'f' | 'u'))
        {
            return self.string(word.to_ascii_lowercase());
        }
        self.push(TokenKind::Name(word));
        Ok(())
    }

    fn number(&mut self) -> Result<(), SyntaxError> {
        let start = self.pos;
        let mut is_float = false;
        if self.peek() == Some('0')
            && matches!(self.peek_at(1), Some('x' | 'X' | 'o' | 'O' | 'b' | 'B'))
        {
            self.pos += 2;
            while self.peek().is_some_and(|c| c.is_ascii_hexdigit() || c == '_') {
                self.pos += 1;
            }
        } else {
            while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '_') {
                self.pos += 1;
            }
            if self.peek() == Some('.') {
                is_float = true;
                self.pos += 1;
                while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '_') {
                    self.pos += 1;
                }
            }
            if matches!(self.peek(), Some('e' | 'E')) {
                let sign = usize::from(matches!(self.peek_at(1), Some('+' | '-')));
                if self.peek_at(1 + sign).is_some_and(|c| c.is_ascii_digit()) {
                    is_float = true;
                    self.pos += 1 + sign;
                    while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '_') {
                        self.pos += 1;
                    }
                }
            }
            if matches!(self.peek(), Some('j' | 'J')) {
                self.pos += 1;
                is_float = true;
            }
        }
        if self.peek().is_some_and(|c| c == '_' || c.is_alphanumeric()) {
            return Err(self.err("invalid numeric literal"));
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        self.push(if is_float {
            TokenKind::Float(text)
        } else {
            TokenKind::Int(text)
        });
        Ok(())
    }

    fn string(&mut self, prefix: String) -> Result<(), SyntaxError> {
        let start_line = self.line;
        let raw = prefix.contains('r');
        let fstring = prefix.contains('f');
        let bytes = prefix.contains('b');
        if fstring && bytes {
            return Err(self.err("invalid string prefix"));
        }
        let quote = self.peek().expect("caller checked quote");
        let triple = self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote);
        self.pos += if triple { 3 } else { 1 };
        let mut value = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(SyntaxError {
                    line: start_line,
                    message: "unterminated string literal".into(),
                });
            };
            if c == quote {
                if !triple {
                    self.pos += 1;
                    break;
                }
                if self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote) {
                    self.pos += 3;
                    break;
                }
            }
            if c == '\n' {
                if !triple {
                    return Err(SyntaxError {
                        line: start_line,
                        message: "unterminated string literal".into(),
                    });
                }
                self.line += 1;
            }
            if c == '\\' {
                let Some(next) = self.peek_at(1) else {
                    return Err(self.err("unterminated string literal"));
                };
                if next == '\n' {
                    self.line += 1;
                }
                if raw {
                    value.push('\\');
                    value.push(next);
                    self.pos += 2;
                    continue;
                }
                self.pos += 2;
                match next {
                    '\n' => {}
                    'n' => value.push('\n'),
                    't' => value.push('\t'),
                    'r' => value.push('\r'),
                    '0' => value.push('\0'),
                    '\\' => value.push('\\'),
                    '\'' => value.push('\''),
                    '"' => value.push('"'),
                    'x' => {
                        let hex: String = self.chars[self.pos..].iter().take(2).collect();
                        let code = u32::from_str_radix(&hex, 16)
                            .map_err(|_| self.err("invalid \\x escape"))?;
                        value.push(char::from_u32(code).unwrap_or('\u{fffd}'));
                        self.pos += 2;
                    }
                    'u' => {
                        let hex: String = self.chars[self.pos..].iter().take(4).collect();
                        let code = u32::from_str_radix(&hex, 16)
                            .map_err(|_| self.err("invalid \\u escape"))?;
                        value.push(char::from_u32(code).unwrap_or('\u{fffd}'));
                        self.pos += 4;
                    }
                    other => {
                        value.push('\\');
                        value.push(other);
                    }
                }
                continue;
            }
            value.push(c);
            self.pos += 1;
        }
        self.tokens.push(Token {
            kind: TokenKind::Str(StrToken {
                value,
                fstring,
                bytes,
            }),
            line: start_line,
        });
        Ok(())
    }

    fn operator(&mut self) -> Result<(), SyntaxError> {
        for op in OPERATORS {
            let len = op.len();
            if self.pos + len <= self.chars.len()
                && self.chars[self.pos..self.pos + len]
                    .iter()
                    .copied()
                    .eq(op.chars())
            {
                match *op {
                    "(" | "[" | "{" => {
                        self.depth += 1;
                        self.open_lines.push(self.line);
                    }
                    ")" | "]" | "}" => {
                        if self.depth == 0 {
                            return Err(self.err(format!("unmatched '{op}'")));
                        }
                        self.depth -= 1;
                        self.open_lines.pop();
                    }
                    _ => {}
                }
                self.pos += len;
                self.push(TokenKind::Op(op));
                return Ok(());
            }
        }
        let c = self.peek().unwrap_or(' ');
        Err(self.err(format!("invalid character {c:?}")))
    }
}
