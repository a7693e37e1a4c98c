//! Frontend for the `.mhl` mini language.
//!
//! ```text
//! program := decl* stmt*
//! decl    := "var" ident ("[" int "]")? ";"
//! stmt    := lvalue "=" expr ";"
//!          | "if" expr "{" stmt* "}" ("else" "{" stmt* "}")?
//!          | "while" expr "{" stmt* "}"
//!          | "repeat" "{" stmt* "}" "until" expr ";"
//!          | "for" ident "=" expr "to" expr "{" stmt* "}"     (sugar for while)
//!          | "swap" lvalue "," lvalue ";"
//!          | "read" lvalue ("from" port)? ";"
//!          | "write" expr ("to" port)? ";"
//!          | "halt" ";"
//! expr    := or-chain of and-chains of ["not"] cmp
//! cmp     := bits (("<"|">"|"="|"<="|">="|"!=") bits)?
//! bits    := "|" over "^" over "&" over ("+"|"-") over primary
//! primary := int | "-" int | ident | ident "[" expr "]" | "(" expr ")"
//! ```
//!
//! Words are 16-bit two's complement and arithmetic wraps. Comparisons yield
//! 1 or 0 and are defined through the sign bit of the wrapped difference,
//! which is exactly what the generated `SUB`/`JN` sequences test:
//! `a < b` iff bit 15 of `a - b` is set, `a > b` iff `b < a`, `a <= b` iff
//! `!(b < a)`, `a >= b` iff `!(a < b)`. Logical operators treat any non-zero
//! word as true, evaluate both operands, and yield 1 or 0. Out-of-range array
//! indices trap at run time.

mod analyze;
mod ast;
mod parser;
mod pretty;

pub use analyze::{analyze, register_need, CheckedProgram, SemanticError, Symbol, MAX_EXPR_REGISTERS};
pub use ast::*;
pub use parser::{parse, parse_bytes, parse_str, SyntaxError};
pub use pretty::{expr_to_string, pretty_print};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
}

/// Parse and check in one go.
pub fn check_source(src: &SourceProgram) -> Result<CheckedProgram, FrontendError> {
    Ok(analyze(parse(src)?)?)
}

/// `a < b` under the wrapped-difference rule.
pub fn word_less(a: u16, b: u16) -> bool {
    a.wrapping_sub(b) & 0x8000 != 0
}
