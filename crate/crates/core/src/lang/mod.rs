//! The predicated source language: syntax tree, parser, printer, validation,
//! `if` desugaring and a reference interpreter.

mod ast;
mod desugar;
mod diag;
pub mod interp;
mod parser;
mod printer;
mod validate;

pub use ast::*;
pub use desugar::{desugar_if, DesugarError};
pub use diag::{Diagnostic, DiagnosticKind, ParseError};
pub use interp::{run_source, run_structured, InterpError, OutputRecord, SourceRun};
pub use parser::{parse_program, parse_structured, parse_unchecked};
pub(crate) use printer::quote;
pub use validate::validate;
