//! Declaration-level Java grammar.
//!
//! Covers packages, imports, classes, interfaces, enums, records, annotation
//! types, generics, annotations, fields, constructors and methods. Method and
//! initializer bodies are not parsed into statements; they are captured
//! verbatim after checking that every bracket inside them is balanced.

mod lexer;
mod parser;

pub use lexer::{tokenize, LexError, Token, TokenKind};
pub use parser::is_reserved;
pub use parser::{
    parse_compilation_unit, CompilationUnit, MethodDecl, Modifiers, Param, ParseError, TypeDecl,
    TypeKind,
};

/// Distinct non-keyword identifiers of `code`, in first-seen order. Falls back
/// to a plain word split when the text does not lex as Java.
pub fn identifiers(code: &str) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let words: Vec<String> = match tokenize(code) {
        Ok(toks) => toks
            .into_iter()
            .filter(|t| t.kind == TokenKind::Word && !is_reserved(t.text))
            .map(|t| t.text.to_string())
            .collect(),
        Err(_) => code
            .split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '$'))
            .filter(|w| w.chars().next().is_some_and(|c| !c.is_ascii_digit()))
            .filter(|w| !is_reserved(w))
            .map(str::to_string)
            .collect(),
    };
    words
        .into_iter()
        .filter(|w| seen.insert(w.clone()))
        .collect()
}
