//! Constant expressions: the value language of `#define`, `#if` and
//! instruction operands.
//!
//! All arithmetic is unsigned 32-bit with wraparound. Comparisons yield
//! `0`/`1` and are only legal inside `#if` guards; the parser enforces that
//! restriction so operand expressions stay pure value computations. Shifting
//! by 32 or more produces 0 rather than whatever the host CPU would do.

use std::collections::BTreeMap;
use std::fmt;

use super::{ParseIssue, Token, TokenKind};

/// A parsed constant expression. Literals remember whether they were written
/// in hex so that printing a parsed unit reproduces the author's radix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    /// Integer literal, decimal or `0x` hex.
    Literal { value: u32, hex: bool },
    /// Reference to a define (`[A-Z_][A-Z0-9_]*`).
    Define(String),
    /// Unary minus, wrapping.
    Neg(Box<Expr>),
    /// Binary operation.
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

/// Binary operators, including the comparison forms that are only valid in
/// `#if` guards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Shl,
    Shr,
    BitOr,
    BitAnd,
    Eq,
    Ne,
    Lt,
    Gt,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::BitOr => "|",
            BinOp::BitAnd => "&",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
        }
    }

    fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Gt)
    }

    /// Binding power; higher binds tighter. Comparisons sit at the bottom,
    /// mirroring C so that `A << B == C` means `(A << B) == C`.
    fn precedence(self) -> u8 {
        match self {
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Gt => 1,
            BinOp::BitOr => 2,
            BinOp::BitAnd => 3,
            BinOp::Shl | BinOp::Shr => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul => 6,
        }
    }
}

const UNARY_PRECEDENCE: u8 = 7;

impl Expr {
    /// The precedence of this node when printed, used to decide where
    /// parentheses are required.
    fn precedence(&self) -> u8 {
        match self {
            Expr::Literal { .. } | Expr::Define(_) => u8::MAX,
            Expr::Neg(_) => UNARY_PRECEDENCE,
            Expr::Binary { op, .. } => op.precedence(),
        }
    }

    /// Does any leaf of this expression reference a define?
    pub fn references_define(&self) -> bool {
        match self {
            Expr::Literal { .. } => false,
            Expr::Define(_) => true,
            Expr::Neg(inner) => inner.references_define(),
            Expr::Binary { lhs, rhs, .. } => lhs.references_define() || rhs.references_define(),
        }
    }

    /// Collect every referenced define name into `out`.
    pub fn collect_defines(&self, out: &mut Vec<String>) {
        match self {
            Expr::Literal { .. } => {}
            Expr::Define(name) => out.push(name.clone()),
            Expr::Neg(inner) => inner.collect_defines(out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_defines(out);
                rhs.collect_defines(out);
            }
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let needs_parens = self.precedence() < min;
        if needs_parens {
            write!(f, "(")?;
        }
        match self {
            Expr::Literal { value, hex } => {
                if *hex {
                    write!(f, "0x{value:X}")?;
                } else {
                    write!(f, "{value}")?;
                }
            }
            Expr::Define(name) => write!(f, "{name}")?,
            Expr::Neg(inner) => {
                write!(f, "-")?;
                inner.fmt_prec(f, UNARY_PRECEDENCE)?;
            }
            Expr::Binary { op, lhs, rhs } => {
                let prec = op.precedence();
                lhs.fmt_prec(f, prec)?;
                write!(f, " {} ", op.symbol())?;
                // Operators are left-associative, so the right child needs
                // parentheses when it sits at the same level.
                rhs.fmt_prec(f, prec + 1)?;
            }
        }
        if needs_parens {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// Name-to-value lookup used by [`eval_expr`]. The preprocessor's define
/// table implements this; plain maps work for tests and tools.
pub trait DefineLookup {
    fn lookup(&self, name: &str) -> Option<u32>;
}

impl DefineLookup for BTreeMap<String, u32> {
    fn lookup(&self, name: &str) -> Option<u32> {
        self.get(name).copied()
    }
}

impl<T: DefineLookup + ?Sized> DefineLookup for &T {
    fn lookup(&self, name: &str) -> Option<u32> {
        (**self).lookup(name)
    }
}

/// Evaluation failure: the only way a well-formed expression can fail is by
/// naming a define that was never provided.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("undefined symbol {0}")]
    UndefinedSymbol(String),
}

/// Evaluate an expression over a define table.
///
/// Semantics: u32 wraparound for `+ - *` and unary minus; `<<`/`>>` produce 0
/// for shift counts of 32 or more; comparisons are unsigned and yield 0 or 1.
pub fn eval_expr(expr: &Expr, defs: &impl DefineLookup) -> Result<u32, EvalError> {
    match expr {
        Expr::Literal { value, .. } => Ok(*value),
        Expr::Define(name) => defs
            .lookup(name)
            .ok_or_else(|| EvalError::UndefinedSymbol(name.clone())),
        Expr::Neg(inner) => Ok(eval_expr(inner, defs)?.wrapping_neg()),
        Expr::Binary { op, lhs, rhs } => {
            let l = eval_expr(lhs, defs)?;
            let r = eval_expr(rhs, defs)?;
            Ok(apply_binop(*op, l, r))
        }
    }
}

/// Apply one binary operator with the dialect's u32 semantics.
pub fn apply_binop(op: BinOp, l: u32, r: u32) -> u32 {
    match op {
        BinOp::Add => l.wrapping_add(r),
        BinOp::Sub => l.wrapping_sub(r),
        BinOp::Mul => l.wrapping_mul(r),
        BinOp::Shl => {
            if r >= 32 {
                0
            } else {
                l << r
            }
        }
        BinOp::Shr => {
            if r >= 32 {
                0
            } else {
                l >> r
            }
        }
        BinOp::BitOr => l | r,
        BinOp::BitAnd => l & r,
        BinOp::Eq => u32::from(l == r),
        BinOp::Ne => u32::from(l != r),
        BinOp::Lt => u32::from(l < r),
        BinOp::Gt => u32::from(l > r),
    }
}

/// Cursor over the token stream of one line. The expression parser consumes
/// as many tokens as form a valid expression and leaves the rest.
pub(super) struct Cursor<'t> {
    tokens: &'t [Token],
    pos: usize,
    /// Column just past the end of the raw line, for errors at end of input.
    end_col: u32,
}

impl<'t> Cursor<'t> {
    pub(super) fn new(tokens: &'t [Token], end_col: u32) -> Self {
        Cursor {
            tokens,
            pos: 0,
            end_col,
        }
    }

    pub(super) fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    pub(super) fn next(&mut self) -> Option<&'t Token> {
        let tok = self.tokens.get(self.pos);
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    /// Column to report for "something missing here" errors.
    pub(super) fn here(&self) -> u32 {
        self.peek().map_or(self.end_col, |t| t.col)
    }
}

fn binop_of(kind: &TokenKind) -> Option<BinOp> {
    Some(match kind {
        TokenKind::Plus => BinOp::Add,
        TokenKind::Minus => BinOp::Sub,
        TokenKind::Star => BinOp::Mul,
        TokenKind::ShiftLeft => BinOp::Shl,
        TokenKind::ShiftRight => BinOp::Shr,
        TokenKind::Pipe => BinOp::BitOr,
        TokenKind::Ampersand => BinOp::BitAnd,
        TokenKind::EqEq => BinOp::Eq,
        TokenKind::NotEq => BinOp::Ne,
        TokenKind::Less => BinOp::Lt,
        TokenKind::Greater => BinOp::Gt,
        _ => return None,
    })
}

/// Is a define name well-formed (`[A-Z_][A-Z0-9_]*`)?
pub(super) fn is_define_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_uppercase() || c == '_' => {}
        _ => return false,
    }
    name.chars()
        .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

/// Parse an expression from the cursor. `allow_compare` is true only for
/// `#if` guards; anywhere else a comparison operator is a syntax error.
pub(super) fn parse_expr(cursor: &mut Cursor<'_>, allow_compare: bool) -> Result<Expr, ParseIssue> {
    parse_binary(cursor, 0, allow_compare)
}

fn parse_binary(
    cursor: &mut Cursor<'_>,
    min_prec: u8,
    allow_compare: bool,
) -> Result<Expr, ParseIssue> {
    let mut lhs = parse_atom(cursor, allow_compare)?;
    while let Some(tok) = cursor.peek() {
        let Some(op) = binop_of(&tok.kind) else { break };
        if op.precedence() < min_prec {
            break;
        }
        if op.is_comparison() && !allow_compare {
            return Err(ParseIssue::new(
                tok.col,
                format!("comparison operator {} is only valid in #if", op.symbol()),
            ));
        }
        cursor.next();
        let rhs = parse_binary(cursor, op.precedence() + 1, allow_compare)?;
        lhs = Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        };
    }
    Ok(lhs)
}

fn parse_atom(cursor: &mut Cursor<'_>, allow_compare: bool) -> Result<Expr, ParseIssue> {
    let col = cursor.here();
    let Some(tok) = cursor.next() else {
        return Err(ParseIssue::new(col, "expected expression".to_string()));
    };
    match &tok.kind {
        TokenKind::Number { value, hex } => Ok(Expr::Literal {
            value: *value,
            hex: *hex,
        }),
        TokenKind::Ident(name) => {
            if is_define_name(name) {
                Ok(Expr::Define(name.clone()))
            } else {
                Err(ParseIssue::new(
                    tok.col,
                    format!("{name} is not a define name (defines are UPPER_CASE)"),
                ))
            }
        }
        TokenKind::Minus => {
            let inner = parse_atom(cursor, allow_compare)?;
            Ok(Expr::Neg(Box::new(inner)))
        }
        TokenKind::OpenParen => {
            let inner = parse_binary(cursor, 0, allow_compare)?;
            match cursor.next() {
                Some(Token {
                    kind: TokenKind::CloseParen,
                    ..
                }) => Ok(inner),
                other => Err(ParseIssue::new(
                    other.map_or(cursor.here(), |t| t.col),
                    "expected closing parenthesis".to_string(),
                )),
            }
        }
        other => Err(ParseIssue::new(
            tok.col,
            format!("expected expression, found {}", other.describe()),
        )),
    }
}
