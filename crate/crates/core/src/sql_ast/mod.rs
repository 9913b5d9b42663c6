//! SQLite-dialect SQL parsing, rendering and tree queries.

mod ast;
mod lexer;
mod parser;
mod patterns;
mod refs;
mod render;
mod visit;

use std::fmt;

pub use ast::*;
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::{is_reserved, Parser};
pub use patterns::{find, find_patterns, invalid_strftime_specifier, PatternKind, PatternMatch, UnknownPattern, STRFTIME_SPECIFIERS};
pub use refs::{extract_schema_refs, SchemaRefs, SchemaSubset};
pub use render::{quote_ident, quote_string};
pub use visit::{node_at, shallow_exprs, walk, Clause, Node, NodePath, Visit};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset into the input.
    pub offset: usize,
    pub expected: String,
    pub found: Option<String>,
}

impl ParseError {
    pub fn new(offset: usize, expected: &str) -> Self {
        ParseError { offset, expected: expected.to_string(), found: None }
    }

    pub fn with_found(offset: usize, expected: &str, found: String) -> Self {
        ParseError { offset, expected: expected.to_string(), found: Some(found) }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at byte {}: expected {}", self.offset, self.expected)?;
        if let Some(found) = &self.found {
            write!(f, ", found {found}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

/// Parses one read-only statement. A single trailing `;` is allowed.
pub fn parse_sql(text: &str) -> Result<SqlTree, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::new(0, "a SELECT statement"));
    }
    Parser::new(text)?.parse_statement()
}
