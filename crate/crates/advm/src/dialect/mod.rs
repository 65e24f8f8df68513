//! The MTE-ASM dialect: a small directed-test assembler language with one
//! statement per line.
//!
//! A line is blank, a comment (`;` to end of line), a preprocessor directive
//! (`#define`, `#include`, `#ifdef`, `#ifndef`, `#if`, `#else`, `#endif`), a
//! label (`name:`), a procedure delimiter (`proc name` / `endp`) or an
//! instruction. Sixteen data registers `d0..d15` are available. Define names
//! are `UPPER_CASE`; opcodes and registers are lower-case, which keeps
//! define-reference analysis unambiguous.
//!
//! Parsing is strict: every malformed line is an error with a
//! `path:line:col` location, and a unit either parses completely or returns
//! the full error list. Nothing is silently skipped.

mod expr;

pub use expr::{apply_binop, eval_expr, BinOp, DefineLookup, EvalError, Expr};

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

/// Internal parse problem before it is stamped with a file and line.
#[derive(Debug, Clone)]
pub(crate) struct ParseIssue {
    pub col: u32,
    pub message: String,
}

impl ParseIssue {
    fn new(col: u32, message: String) -> Self {
        ParseIssue { col, message }
    }
}

/// What went wrong on a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    /// First word of the line is not an opcode, directive, label or `proc`.
    UnknownOpcode,
    /// A `#` directive is missing parts or malformed.
    MalformedDirective,
    /// An operand has the wrong shape (bad expression, missing comma, junk).
    MalformedOperand,
    /// A register operand is not one of `d0..d15`.
    BadRegisterName,
    /// `proc`/`endp` nesting is wrong within the unit.
    UnbalancedProc,
    /// `#include` paths must be relative.
    AbsoluteIncludePath,
}

/// A parse error with its exact source location.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}:{line}:{col}: {message}", path = .path.display())]
pub struct ParseError {
    pub path: PathBuf,
    pub line: u32,
    pub col: u32,
    pub kind: ParseErrorKind,
    pub message: String,
}

/// One of the sixteen data registers, `d0` through `d15`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Reg(u8);

impl Reg {
    pub fn new(index: u8) -> Option<Reg> {
        (index < 16).then_some(Reg(index))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.0)
    }
}

/// Instruction mnemonics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Opcode {
    Mov,
    Shl,
    Shr,
    Or,
    And,
    Add,
    Sub,
    Ld,
    St,
    Call,
    Ret,
    Jmp,
    Jz,
    Jnz,
    Expect,
    Pass,
    Fail,
}

impl Opcode {
    /// Opcodes are lower-case; anything else is not an opcode.
    fn from_word(word: &str) -> Option<Opcode> {
        Some(match word {
            "mov" => Opcode::Mov,
            "shl" => Opcode::Shl,
            "shr" => Opcode::Shr,
            "or" => Opcode::Or,
            "and" => Opcode::And,
            "add" => Opcode::Add,
            "sub" => Opcode::Sub,
            "ld" => Opcode::Ld,
            "st" => Opcode::St,
            "call" => Opcode::Call,
            "ret" => Opcode::Ret,
            "jmp" => Opcode::Jmp,
            "jz" => Opcode::Jz,
            "jnz" => Opcode::Jnz,
            "expect" => Opcode::Expect,
            "pass" => Opcode::Pass,
            "fail" => Opcode::Fail,
            _ => return None,
        })
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Mov => "mov",
            Opcode::Shl => "shl",
            Opcode::Shr => "shr",
            Opcode::Or => "or",
            Opcode::And => "and",
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Ld => "ld",
            Opcode::St => "st",
            Opcode::Call => "call",
            Opcode::Ret => "ret",
            Opcode::Jmp => "jmp",
            Opcode::Jz => "jz",
            Opcode::Jnz => "jnz",
            Opcode::Expect => "expect",
            Opcode::Pass => "pass",
            Opcode::Fail => "fail",
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// One operand with the column where it starts (used by diagnostics).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operand {
    pub kind: OperandKind,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OperandKind {
    Register(Reg),
    /// An immediate expression (`mov`, `shl`, `shr`, `expect`).
    Imm(Expr),
    /// A memory reference `[expr]` (`ld`, `st`).
    Mem(Expr),
    /// A procedure or label name (`call`, `jmp`, `jz`, `jnz`).
    Name(String),
}

impl fmt::Display for OperandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperandKind::Register(reg) => write!(f, "{reg}"),
            OperandKind::Imm(expr) => write!(f, "{expr}"),
            OperandKind::Mem(expr) => write!(f, "[{expr}]"),
            OperandKind::Name(name) => write!(f, "{name}"),
        }
    }
}

/// A parsed instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub opcode: Opcode,
    /// Column of the mnemonic.
    pub col: u32,
    pub operands: Vec<Operand>,
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.opcode)?;
        for (i, operand) in self.operands.iter().enumerate() {
            if i == 0 {
                write!(f, " {}", operand.kind)?;
            } else {
                write!(f, ", {}", operand.kind)?;
            }
        }
        Ok(())
    }
}

/// A preprocessor directive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    Define {
        name: String,
        /// Column of the define name.
        name_col: u32,
        value: Expr,
    },
    Include {
        /// Relative path exactly as written between the quotes.
        path: String,
        /// Column of the opening quote.
        path_col: u32,
    },
    Ifdef {
        name: String,
        name_col: u32,
    },
    Ifndef {
        name: String,
        name_col: u32,
    },
    If {
        guard: Expr,
        guard_col: u32,
    },
    Else,
    Endif,
}

impl Directive {
    /// Is this one of the conditional-control directives?
    pub fn is_conditional(&self) -> bool {
        matches!(
            self,
            Directive::Ifdef { .. }
                | Directive::Ifndef { .. }
                | Directive::If { .. }
                | Directive::Else
                | Directive::Endif
        )
    }
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Directive::Define { name, value, .. } => write!(f, "#define {name} {value}"),
            Directive::Include { path, .. } => write!(f, "#include \"{path}\""),
            Directive::Ifdef { name, .. } => write!(f, "#ifdef {name}"),
            Directive::Ifndef { name, .. } => write!(f, "#ifndef {name}"),
            Directive::If { guard, .. } => write!(f, "#if {guard}"),
            Directive::Else => write!(f, "#else"),
            Directive::Endif => write!(f, "#endif"),
        }
    }
}

/// Parsed content of one source line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LineContent {
    /// Blank or comment-only line.
    Blank,
    Directive(Directive),
    Label(String),
    ProcStart(String),
    ProcEnd,
    Instr(Instruction),
}

/// One line: its 1-based number and what it parsed to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    pub number: u32,
    pub content: LineContent,
}

/// A fully parsed source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    pub path: PathBuf,
    pub lines: Vec<Line>,
}

/// A procedure declaration site within a unit (name and the `proc` line).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcedureDecl<'u> {
    pub name: &'u str,
    pub line: u32,
}

/// The exact symbol sets of one unit, computed conservatively over *all*
/// conditional branches (nothing is evaluated).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolInfo {
    /// Names introduced by `#define`.
    pub defined: BTreeSet<String>,
    /// Define names referenced by any expression or conditional guard.
    pub referenced: BTreeSet<String>,
    /// Procedure names targeted by `call`.
    pub called: BTreeSet<String>,
    /// Include paths exactly as written.
    pub included: BTreeSet<String>,
}

// --- lexer ---

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum TokenKind {
    Ident(String),
    Number { value: u32, hex: bool },
    StringLit(String),
    Hash,
    Comma,
    Colon,
    OpenBracket,
    CloseBracket,
    OpenParen,
    CloseParen,
    Plus,
    Minus,
    Star,
    Pipe,
    Ampersand,
    ShiftLeft,
    ShiftRight,
    EqEq,
    NotEq,
    Less,
    Greater,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Ident(name) => format!("'{name}'"),
            TokenKind::Number { value, .. } => format!("number {value}"),
            TokenKind::StringLit(_) => "string".to_string(),
            TokenKind::Hash => "'#'".to_string(),
            TokenKind::Comma => "','".to_string(),
            TokenKind::Colon => "':'".to_string(),
            TokenKind::OpenBracket => "'['".to_string(),
            TokenKind::CloseBracket => "']'".to_string(),
            TokenKind::OpenParen => "'('".to_string(),
            TokenKind::CloseParen => "')'".to_string(),
            TokenKind::Plus => "'+'".to_string(),
            TokenKind::Minus => "'-'".to_string(),
            TokenKind::Star => "'*'".to_string(),
            TokenKind::Pipe => "'|'".to_string(),
            TokenKind::Ampersand => "'&'".to_string(),
            TokenKind::ShiftLeft => "'<<'".to_string(),
            TokenKind::ShiftRight => "'>>'".to_string(),
            TokenKind::EqEq => "'=='".to_string(),
            TokenKind::NotEq => "'!='".to_string(),
            TokenKind::Less => "'<'".to_string(),
            TokenKind::Greater => "'>'".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub kind: TokenKind,
    /// 1-based column of the token's first character.
    pub col: u32,
}

/// Tokenize one line. Comments (`;` to end of line) are stripped here.
pub(crate) fn lex_line(text: &str) -> Result<Vec<Token>, ParseIssue> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0usize;
    while i < bytes.len() {
        let col = (i + 1) as u32;
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\r' => i += 1,
            b';' => break,
            b'"' => {
                let start = i + 1;
                let mut end = start;
                while end < bytes.len() && bytes[end] != b'"' {
                    end += 1;
                }
                if end == bytes.len() {
                    return Err(ParseIssue::new(col, "unterminated string".to_string()));
                }
                tokens.push(Token {
                    kind: TokenKind::StringLit(text[start..end].to_string()),
                    col,
                });
                i = end + 1;
            }
            b'#' => {
                tokens.push(Token {
                    kind: TokenKind::Hash,
                    col,
                });
                i += 1;
            }
            b',' => {
                tokens.push(Token {
                    kind: TokenKind::Comma,
                    col,
                });
                i += 1;
            }
            b':' => {
                tokens.push(Token {
                    kind: TokenKind::Colon,
                    col,
                });
                i += 1;
            }
            b'[' => {
                tokens.push(Token {
                    kind: TokenKind::OpenBracket,
                    col,
                });
                i += 1;
            }
            b']' => {
                tokens.push(Token {
                    kind: TokenKind::CloseBracket,
                    col,
                });
                i += 1;
            }
            b'(' => {
                tokens.push(Token {
                    kind: TokenKind::OpenParen,
                    col,
                });
                i += 1;
            }
            b')' => {
                tokens.push(Token {
                    kind: TokenKind::CloseParen,
                    col,
                });
                i += 1;
            }
            b'+' => {
                tokens.push(Token {
                    kind: TokenKind::Plus,
                    col,
                });
                i += 1;
            }
            b'-' => {
                tokens.push(Token {
                    kind: TokenKind::Minus,
                    col,
                });
                i += 1;
            }
            b'*' => {
                tokens.push(Token {
                    kind: TokenKind::Star,
                    col,
                });
                i += 1;
            }
            b'|' => {
                tokens.push(Token {
                    kind: TokenKind::Pipe,
                    col,
                });
                i += 1;
            }
            b'&' => {
                tokens.push(Token {
                    kind: TokenKind::Ampersand,
                    col,
                });
                i += 1;
            }
            b'<' => {
                if bytes.get(i + 1) == Some(&b'<') {
                    tokens.push(Token {
                        kind: TokenKind::ShiftLeft,
                        col,
                    });
                    i += 2;
                } else {
                    tokens.push(Token {
                        kind: TokenKind::Less,
                        col,
                    });
                    i += 1;
                }
            }
            b'>' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    tokens.push(Token {
                        kind: TokenKind::ShiftRight,
                        col,
                    });
                    i += 2;
                } else {
                    tokens.push(Token {
                        kind: TokenKind::Greater,
                        col,
                    });
                    i += 1;
                }
            }
            b'=' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(Token {
                        kind: TokenKind::EqEq,
                        col,
                    });
                    i += 2;
                } else {
                    return Err(ParseIssue::new(
                        col,
                        "'=' is not an operator (did you mean '==')".to_string(),
                    ));
                }
            }
            b'!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(Token {
                        kind: TokenKind::NotEq,
                        col,
                    });
                    i += 2;
                } else {
                    return Err(ParseIssue::new(
                        col,
                        "'!' is not an operator (did you mean '!=')".to_string(),
                    ));
                }
            }
            b'0'..=b'9' => {
                let start = i;
                let (value, hex) = if c == b'0'
                    && matches!(bytes.get(i + 1), Some(b'x') | Some(b'X'))
                {
                    i += 2;
                    let digits_start = i;
                    while i < bytes.len() && bytes[i].is_ascii_hexdigit() {
                        i += 1;
                    }
                    if i == digits_start {
                        return Err(ParseIssue::new(
                            col,
                            "hex literal needs digits after 0x".to_string(),
                        ));
                    }
                    let value = u32::from_str_radix(&text[digits_start..i], 16).map_err(|_| {
                        ParseIssue::new(col, "literal does not fit in 32 bits".to_string())
                    })?;
                    (value, true)
                } else {
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    let value = text[start..i].parse::<u32>().map_err(|_| {
                        ParseIssue::new(col, "literal does not fit in 32 bits".to_string())
                    })?;
                    (value, false)
                };
                if i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    return Err(ParseIssue::new(col, "malformed number".to_string()));
                }
                tokens.push(Token {
                    kind: TokenKind::Number { value, hex },
                    col,
                });
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(text[start..i].to_string()),
                    col,
                });
            }
            other => {
                return Err(ParseIssue::new(
                    col,
                    format!("unexpected character '{}'", other as char),
                ));
            }
        }
    }
    Ok(tokens)
}

// --- line parser ---

use expr::Cursor;

struct LineParser<'p> {
    path: &'p Path,
    number: u32,
    end_col: u32,
}

impl<'p> LineParser<'p> {
    fn error(&self, kind: ParseErrorKind, issue: ParseIssue) -> ParseError {
        ParseError {
            path: self.path.to_path_buf(),
            line: self.number,
            col: issue.col,
            kind,
            message: issue.message,
        }
    }

    fn err(&self, kind: ParseErrorKind, col: u32, message: impl Into<String>) -> ParseError {
        self.error(kind, ParseIssue::new(col, message.into()))
    }

    fn parse(&self, tokens: &[Token]) -> Result<LineContent, ParseError> {
        if tokens.is_empty() {
            return Ok(LineContent::Blank);
        }
        let first = &tokens[0];
        match &first.kind {
            TokenKind::Hash => self.parse_directive(tokens),
            TokenKind::Ident(word) => {
                if tokens.get(1).map(|t| &t.kind) == Some(&TokenKind::Colon) {
                    if tokens.len() > 2 {
                        return Err(self.err(
                            ParseErrorKind::MalformedOperand,
                            tokens[2].col,
                            "unexpected tokens after label",
                        ));
                    }
                    return Ok(LineContent::Label(word.clone()));
                }
                match word.as_str() {
                    "proc" => self.parse_proc(tokens),
                    "endp" => {
                        if tokens.len() > 1 {
                            return Err(self.err(
                                ParseErrorKind::MalformedOperand,
                                tokens[1].col,
                                "unexpected tokens after endp",
                            ));
                        }
                        Ok(LineContent::ProcEnd)
                    }
                    _ => match Opcode::from_word(word) {
                        Some(opcode) => self.parse_instruction(opcode, first.col, &tokens[1..]),
                        None => Err(self.err(
                            ParseErrorKind::UnknownOpcode,
                            first.col,
                            format!("unknown opcode '{word}'"),
                        )),
                    },
                }
            }
            other => Err(self.err(
                ParseErrorKind::UnknownOpcode,
                first.col,
                format!(
                    "line must start with an opcode, directive, label or proc, found {}",
                    other.describe()
                ),
            )),
        }
    }

    fn parse_proc(&self, tokens: &[Token]) -> Result<LineContent, ParseError> {
        match tokens.get(1).map(|t| (&t.kind, t.col)) {
            Some((TokenKind::Ident(name), _)) => {
                if tokens.len() > 2 {
                    return Err(self.err(
                        ParseErrorKind::MalformedOperand,
                        tokens[2].col,
                        "unexpected tokens after proc name",
                    ));
                }
                Ok(LineContent::ProcStart(name.clone()))
            }
            Some((other, col)) => Err(self.err(
                ParseErrorKind::MalformedOperand,
                col,
                format!("expected procedure name, found {}", other.describe()),
            )),
            None => Err(self.err(
                ParseErrorKind::MalformedOperand,
                self.end_col,
                "proc needs a name",
            )),
        }
    }

    fn parse_directive(&self, tokens: &[Token]) -> Result<LineContent, ParseError> {
        let hash_col = tokens[0].col;
        let Some(Token {
            kind: TokenKind::Ident(keyword),
            ..
        }) = tokens.get(1)
        else {
            return Err(self.err(
                ParseErrorKind::MalformedDirective,
                hash_col,
                "expected directive keyword after '#'",
            ));
        };
        let rest = &tokens[2..];
        let mut cursor = Cursor::new(rest, self.end_col);
        let directive = match keyword.as_str() {
            "define" => {
                let (name, name_col) = self.expect_define_name(&mut cursor)?;
                let value = expr::parse_expr(&mut cursor, false)
                    .map_err(|issue| self.error(ParseErrorKind::MalformedDirective, issue))?;
                Directive::Define {
                    name,
                    name_col,
                    value,
                }
            }
            "include" => match cursor.next() {
                Some(Token {
                    kind: TokenKind::StringLit(path),
                    col,
                }) => {
                    if path.is_empty() {
                        return Err(self.err(
                            ParseErrorKind::MalformedDirective,
                            *col,
                            "include path is empty",
                        ));
                    }
                    if Path::new(path).is_absolute() {
                        return Err(self.err(
                            ParseErrorKind::AbsoluteIncludePath,
                            *col,
                            "include paths must be relative",
                        ));
                    }
                    Directive::Include {
                        path: path.clone(),
                        path_col: *col,
                    }
                }
                other => {
                    return Err(self.err(
                        ParseErrorKind::MalformedDirective,
                        other.map_or(self.end_col, |t| t.col),
                        "#include needs a quoted path",
                    ));
                }
            },
            "ifdef" | "ifndef" => {
                let (name, name_col) = self.expect_define_name(&mut cursor)?;
                if keyword == "ifdef" {
                    Directive::Ifdef { name, name_col }
                } else {
                    Directive::Ifndef { name, name_col }
                }
            }
            "if" => {
                let guard_col = cursor.here();
                let guard = expr::parse_expr(&mut cursor, true)
                    .map_err(|issue| self.error(ParseErrorKind::MalformedDirective, issue))?;
                Directive::If { guard, guard_col }
            }
            "else" => Directive::Else,
            "endif" => Directive::Endif,
            other => {
                return Err(self.err(
                    ParseErrorKind::MalformedDirective,
                    tokens[1].col,
                    format!("unknown directive '#{other}'"),
                ));
            }
        };
        if let Some(extra) = cursor.peek() {
            return Err(self.err(
                ParseErrorKind::MalformedDirective,
                extra.col,
                format!("unexpected {} after directive", extra.kind.describe()),
            ));
        }
        Ok(LineContent::Directive(directive))
    }

    fn expect_define_name(&self, cursor: &mut Cursor<'_>) -> Result<(String, u32), ParseError> {
        match cursor.next() {
            Some(Token {
                kind: TokenKind::Ident(name),
                col,
            }) => {
                if expr::is_define_name(name) {
                    Ok((name.clone(), *col))
                } else {
                    Err(self.err(
                        ParseErrorKind::MalformedDirective,
                        *col,
                        format!("'{name}' is not a valid define name (defines are UPPER_CASE)"),
                    ))
                }
            }
            other => Err(self.err(
                ParseErrorKind::MalformedDirective,
                other.map_or(self.end_col, |t| t.col),
                "expected define name",
            )),
        }
    }

    fn parse_instruction(
        &self,
        opcode: Opcode,
        opcode_col: u32,
        rest: &[Token],
    ) -> Result<LineContent, ParseError> {
        use OperandSpec::*;
        let signature: &[OperandSpec] = match opcode {
            Opcode::Mov => &[Register, RegisterOrExpr],
            Opcode::Shl | Opcode::Shr => &[Register, Expr],
            Opcode::Or | Opcode::And | Opcode::Add | Opcode::Sub => &[Register, Register],
            Opcode::Ld => &[Register, Mem],
            Opcode::St => &[Mem, Register],
            Opcode::Call | Opcode::Jmp => &[Name],
            Opcode::Jz | Opcode::Jnz => &[Register, Name],
            Opcode::Expect => &[Register, Expr],
            Opcode::Ret | Opcode::Pass | Opcode::Fail => &[],
        };
        let mut cursor = Cursor::new(rest, self.end_col);
        let mut operands = Vec::with_capacity(signature.len());
        for (i, spec) in signature.iter().enumerate() {
            if i > 0 {
                match cursor.next() {
                    Some(Token {
                        kind: TokenKind::Comma,
                        ..
                    }) => {}
                    other => {
                        return Err(self.err(
                            ParseErrorKind::MalformedOperand,
                            other.map_or(self.end_col, |t| t.col),
                            "expected ',' between operands",
                        ));
                    }
                }
            }
            operands.push(self.parse_operand(&mut cursor, *spec)?);
        }
        if let Some(extra) = cursor.peek() {
            return Err(self.err(
                ParseErrorKind::MalformedOperand,
                extra.col,
                format!("unexpected {} after operands", extra.kind.describe()),
            ));
        }
        Ok(LineContent::Instr(Instruction {
            opcode,
            col: opcode_col,
            operands,
        }))
    }

    fn parse_operand(
        &self,
        cursor: &mut Cursor<'_>,
        spec: OperandSpec,
    ) -> Result<Operand, ParseError> {
        let col = cursor.here();
        let kind = match spec {
            OperandSpec::Register => OperandKind::Register(self.parse_register(cursor)?),
            OperandSpec::Expr => {
                let expr = expr::parse_expr(cursor, false)
                    .map_err(|issue| self.error(ParseErrorKind::MalformedOperand, issue))?;
                OperandKind::Imm(expr)
            }
            OperandSpec::RegisterOrExpr => {
                if let Some(Token {
                    kind: TokenKind::Ident(word),
                    ..
                }) = cursor.peek()
                {
                    if looks_like_register(word) {
                        OperandKind::Register(self.parse_register(cursor)?)
                    } else {
                        let expr = expr::parse_expr(cursor, false)
                            .map_err(|issue| self.error(ParseErrorKind::MalformedOperand, issue))?;
                        OperandKind::Imm(expr)
                    }
                } else {
                    let expr = expr::parse_expr(cursor, false)
                        .map_err(|issue| self.error(ParseErrorKind::MalformedOperand, issue))?;
                    OperandKind::Imm(expr)
                }
            }
            OperandSpec::Mem => {
                match cursor.next() {
                    Some(Token {
                        kind: TokenKind::OpenBracket,
                        ..
                    }) => {}
                    other => {
                        return Err(self.err(
                            ParseErrorKind::MalformedOperand,
                            other.map_or(self.end_col, |t| t.col),
                            "expected '[' for memory operand",
                        ));
                    }
                }
                let addr_col = cursor.here();
                let expr = expr::parse_expr(cursor, false)
                    .map_err(|issue| self.error(ParseErrorKind::MalformedOperand, issue))?;
                match cursor.next() {
                    Some(Token {
                        kind: TokenKind::CloseBracket,
                        ..
                    }) => {}
                    other => {
                        return Err(self.err(
                            ParseErrorKind::MalformedOperand,
                            other.map_or(self.end_col, |t| t.col),
                            "expected ']' after memory address",
                        ));
                    }
                }
                return Ok(Operand {
                    kind: OperandKind::Mem(expr),
                    col: addr_col,
                });
            }
            OperandSpec::Name => match cursor.next() {
                Some(Token {
                    kind: TokenKind::Ident(name),
                    ..
                }) => OperandKind::Name(name.clone()),
                other => {
                    return Err(self.err(
                        ParseErrorKind::MalformedOperand,
                        other.map_or(self.end_col, |t| t.col),
                        "expected a label or procedure name",
                    ));
                }
            },
        };
        Ok(Operand { kind, col })
    }

    fn parse_register(&self, cursor: &mut Cursor<'_>) -> Result<Reg, ParseError> {
        match cursor.next() {
            Some(Token {
                kind: TokenKind::Ident(word),
                col,
            }) => {
                if !looks_like_register(word) {
                    return Err(self.err(
                        ParseErrorKind::MalformedOperand,
                        *col,
                        format!("expected register d0..d15, found '{word}'"),
                    ));
                }
                let index: u32 = word[1..].parse().map_err(|_| {
                    self.err(
                        ParseErrorKind::BadRegisterName,
                        *col,
                        format!("bad register name '{word}'"),
                    )
                })?;
                if index > 15 {
                    return Err(self.err(
                        ParseErrorKind::BadRegisterName,
                        *col,
                        format!("register {word} out of range (d0..d15)"),
                    ));
                }
                Ok(Reg(index as u8))
            }
            other => Err(self.err(
                ParseErrorKind::MalformedOperand,
                other.map_or(self.end_col, |t| t.col),
                "expected register d0..d15",
            )),
        }
    }
}

/// `d` followed only by digits — the register namespace.
fn looks_like_register(word: &str) -> bool {
    word.len() > 1 && word.starts_with('d') && word[1..].bytes().all(|b| b.is_ascii_digit())
}

#[derive(Debug, Clone, Copy)]
enum OperandSpec {
    Register,
    Expr,
    RegisterOrExpr,
    Mem,
    Name,
}

// --- unit parsing ---

/// Parse one line in isolation (mainly for tools and tests; [`parse_unit`]
/// is the real entry point and additionally checks `proc` balance).
pub fn parse_line(path: &Path, number: u32, text: &str) -> Result<LineContent, ParseError> {
    let parser = LineParser {
        path,
        number,
        end_col: text.len() as u32 + 1,
    };
    let tokens =
        lex_line(text).map_err(|issue| parser.error(ParseErrorKind::MalformedOperand, issue))?;
    parser.parse(&tokens)
}

/// Parse a whole source file. Either every line parses and `proc`/`endp`
/// pairing is sound, or the complete list of errors is returned — a
/// malformed line is never silently accepted.
pub fn parse_unit(path: &Path, source: &str) -> Result<SourceUnit, Vec<ParseError>> {
    let mut lines = Vec::new();
    let mut errors = Vec::new();
    for (index, text) in source.lines().enumerate() {
        let number = index as u32 + 1;
        match parse_line(path, number, text) {
            Ok(content) => lines.push(Line { number, content }),
            Err(error) => errors.push(error),
        }
    }

    // proc/endp must pair up within the unit and may not nest.
    let mut open_proc: Option<u32> = None;
    for line in &lines {
        match &line.content {
            LineContent::ProcStart(name) => {
                if open_proc.is_some() {
                    errors.push(ParseError {
                        path: path.to_path_buf(),
                        line: line.number,
                        col: 1,
                        kind: ParseErrorKind::UnbalancedProc,
                        message: format!("proc {name} starts inside another procedure"),
                    });
                } else {
                    open_proc = Some(line.number);
                }
            }
            LineContent::ProcEnd => {
                let was_open = open_proc.take().is_some();
                if !was_open {
                    errors.push(ParseError {
                        path: path.to_path_buf(),
                        line: line.number,
                        col: 1,
                        kind: ParseErrorKind::UnbalancedProc,
                        message: "endp without a matching proc".to_string(),
                    });
                }
            }
            _ => {}
        }
    }
    if let Some(opened_at) = open_proc {
        errors.push(ParseError {
            path: path.to_path_buf(),
            line: opened_at,
            col: 1,
            kind: ParseErrorKind::UnbalancedProc,
            message: "proc without a matching endp".to_string(),
        });
    }

    if errors.is_empty() {
        Ok(SourceUnit {
            path: path.to_path_buf(),
            lines,
        })
    } else {
        errors.sort_by_key(|e| (e.line, e.col));
        Err(errors)
    }
}

impl SourceUnit {
    /// Read and parse a file from disk.
    pub fn load(path: &Path) -> Result<SourceUnit, Vec<ParseError>> {
        let source = std::fs::read_to_string(path).map_err(|e| {
            vec![ParseError {
                path: path.to_path_buf(),
                line: 0,
                col: 0,
                kind: ParseErrorKind::MalformedOperand,
                message: format!("cannot read file: {e}"),
            }]
        })?;
        parse_unit(path, &source)
    }

    /// Canonical text form. Parsing the result yields a structurally
    /// identical unit (comment text is not part of the structure).
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            match &line.content {
                LineContent::Blank => {}
                LineContent::Directive(d) => out.push_str(&d.to_string()),
                LineContent::Label(name) => {
                    out.push_str(name);
                    out.push(':');
                }
                LineContent::ProcStart(name) => {
                    out.push_str("proc ");
                    out.push_str(name);
                }
                LineContent::ProcEnd => out.push_str("endp"),
                LineContent::Instr(instr) => {
                    out.push_str("    ");
                    out.push_str(&instr.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    /// Procedure declaration sites in this unit.
    pub fn procedures(&self) -> Vec<ProcedureDecl<'_>> {
        self.lines
            .iter()
            .filter_map(|line| match &line.content {
                LineContent::ProcStart(name) => Some(ProcedureDecl {
                    name,
                    line: line.number,
                }),
                _ => None,
            })
            .collect()
    }
}

/// Compute the unit's symbol sets. All conditional branches contribute —
/// this is the conservative view the lint rules build on.
pub fn list_symbols(unit: &SourceUnit) -> SymbolInfo {
    let mut info = SymbolInfo::default();
    let mut refs = Vec::new();
    for line in &unit.lines {
        match &line.content {
            LineContent::Directive(directive) => match directive {
                Directive::Define { name, value, .. } => {
                    info.defined.insert(name.clone());
                    value.collect_defines(&mut refs);
                }
                Directive::Include { path, .. } => {
                    info.included.insert(path.clone());
                }
                Directive::Ifdef { name, .. } | Directive::Ifndef { name, .. } => {
                    refs.push(name.clone());
                }
                Directive::If { guard, .. } => guard.collect_defines(&mut refs),
                Directive::Else | Directive::Endif => {}
            },
            LineContent::Instr(instr) => {
                for operand in &instr.operands {
                    match &operand.kind {
                        OperandKind::Imm(expr) | OperandKind::Mem(expr) => {
                            expr.collect_defines(&mut refs)
                        }
                        OperandKind::Name(name) => {
                            if instr.opcode == Opcode::Call {
                                info.called.insert(name.clone());
                            }
                        }
                        OperandKind::Register(_) => {}
                    }
                }
            }
            _ => {}
        }
    }
    info.referenced.extend(refs);
    info
}
