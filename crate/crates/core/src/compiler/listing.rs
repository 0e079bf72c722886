use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ir::Opcode;
use crate::lang::quote;

/// An obfuscated data reference.
pub type ObfId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObfOp {
    /// `mov`, unary and binary operators: `dst = op(srcs)`.
    Compute {
        opcode: Opcode,
        dst: ObfId,
        srcs: Vec<ObfId>,
    },
    Print {
        format: String,
        src: ObfId,
    },
    Goto {
        target: String,
        reset_vars: Vec<ObfId>,
        reset_consts: Vec<ObfId>,
    },
}

impl ObfOp {
    pub fn opcode(&self) -> Opcode {
        match self {
            ObfOp::Compute { opcode, .. } => *opcode,
            ObfOp::Print { .. } => Opcode::Print,
            ObfOp::Goto { .. } => Opcode::Goto,
        }
    }

    pub fn ids(&self) -> Vec<ObfId> {
        match self {
            ObfOp::Compute { dst, srcs, .. } => std::iter::once(*dst).chain(srcs.iter().copied()).collect(),
            ObfOp::Print { src, .. } => vec![*src],
            ObfOp::Goto {
                reset_vars,
                reset_consts,
                ..
            } => reset_vars.iter().chain(reset_consts).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObfStatement {
    pub label: Option<String>,
    pub predicate: ObfId,
    pub op: ObfOp,
}

impl ObfStatement {
    /// Every obfuscated id in the statement, predicate first.
    pub fn ids(&self) -> Vec<ObfId> {
        std::iter::once(self.predicate).chain(self.op.ids()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObfuscatedProgram {
    pub page_bits: u32,
    pub statements: Vec<ObfStatement>,
}

const HEADER: &str = "# obfuscated listing";

fn write_list(f: &mut fmt::Formatter<'_>, ids: &[ObfId]) -> fmt::Result {
    f.write_str("[")?;
    for (i, id) in ids.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{id}")?;
    }
    f.write_str("]")
}

impl fmt::Display for ObfStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = &self.label {
            write!(f, "{l}: ")?;
        }
        write!(f, "{} : {}", self.predicate, self.op.opcode())?;
        match &self.op {
            ObfOp::Compute { dst, srcs, .. } => {
                write!(f, " {dst}")?;
                for s in srcs {
                    write!(f, " {s}")?;
                }
                Ok(())
            }
            ObfOp::Print { format, src } => write!(f, " {} {src}", quote(format)),
            ObfOp::Goto {
                target,
                reset_vars,
                reset_consts,
            } => {
                write!(f, " {target} ")?;
                write_list(f, reset_vars)?;
                f.write_str(" ")?;
                write_list(f, reset_consts)
            }
        }
    }
}

impl fmt::Display for ObfuscatedProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{HEADER} page_bits={} ids=decimal", self.page_bits)?;
        for s in &self.statements {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("listing line {line}: {message}")]
pub struct ListingError {
    pub line: usize,
    pub message: String,
}

struct Cursor<'a> {
    rest: &'a str,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ListingError> {
        Err(ListingError {
            line: self.line,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start();
    }

    fn word(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let end = self
            .rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(self.rest.len());
        if end == 0 {
            return None;
        }
        let (w, rest) = self.rest.split_at(end);
        self.rest = rest;
        Some(w)
    }

    fn id(&mut self) -> Result<ObfId, ListingError> {
        match self.word() {
            Some(w) => w.parse().or_else(|_| self.err(format!("expected an id, found `{w}`"))),
            None => self.err("expected an id"),
        }
    }

    fn punct(&mut self, c: char) -> Result<(), ListingError> {
        self.skip_ws();
        match self.rest.strip_prefix(c) {
            Some(r) => {
                self.rest = r;
                Ok(())
            }
            None => self.err(format!("expected `{c}`")),
        }
    }

    fn peek(&mut self, c: char) -> bool {
        self.skip_ws();
        self.rest.starts_with(c)
    }

    fn list(&mut self) -> Result<Vec<ObfId>, ListingError> {
        self.punct('[')?;
        let mut out = Vec::new();
        if self.peek(']') {
            self.punct(']')?;
            return Ok(out);
        }
        loop {
            out.push(self.id()?);
            if self.peek(',') {
                self.punct(',')?;
            } else {
                self.punct(']')?;
                return Ok(out);
            }
        }
    }

    fn string(&mut self) -> Result<String, ListingError> {
        self.punct('"')?;
        let mut out = String::new();
        let mut chars = self.rest.char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.rest = &self.rest[i + 1..];
                    return Ok(out);
                }
                '\\' => match chars.next() {
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 't')) => out.push('\t'),
                    Some((_, e)) => out.push(e),
                    None => break,
                },
                c => out.push(c),
            }
        }
        self.err("unterminated string")
    }
}

fn parse_statement(text: &str, line: usize) -> Result<ObfStatement, ListingError> {
    let mut c = Cursor { rest: text, line };
    let first = c.word();
    let (label, predicate) = match first {
        Some(w) if c.peek(':') && !w.chars().all(|ch| ch.is_ascii_digit()) => {
            c.punct(':')?;
            (Some(w.to_string()), c.id()?)
        }
        Some(w) => (
            None,
            w.parse().or_else(|_| c.err(format!("expected a predicate id, found `{w}`")))?,
        ),
        None => return c.err("expected a statement"),
    };
    c.punct(':')?;
    let opcode: Opcode = match c.word() {
        Some(w) => w.parse().or_else(|e: String| c.err(e))?,
        None => return c.err("expected an opcode"),
    };
    let op = match opcode {
        Opcode::Print => {
            c.skip_ws();
            let format = c.string()?;
            ObfOp::Print { format, src: c.id()? }
        }
        Opcode::Goto => {
            let target = match c.word() {
                Some(w) => w.to_string(),
                None => return c.err("expected a goto target"),
            };
            let reset_vars = c.list()?;
            let reset_consts = c.list()?;
            ObfOp::Goto {
                target,
                reset_vars,
                reset_consts,
            }
        }
        _ => {
            let arity = if opcode == Opcode::Mov || opcode.as_unary().is_some() { 1 } else { 2 };
            let dst = c.id()?;
            let srcs = (0..arity).map(|_| c.id()).collect::<Result<_, _>>()?;
            ObfOp::Compute { opcode, dst, srcs }
        }
    };
    c.skip_ws();
    if !c.rest.is_empty() {
        return c.err(format!("unexpected trailing text `{}`", c.rest));
    }
    Ok(ObfStatement { label, predicate, op })
}

impl ObfuscatedProgram {
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Self, ListingError> {
        let mut page_bits = None;
        let mut statements = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if let Some(meta) = trimmed.strip_prefix(HEADER) {
                for kv in meta.split_whitespace() {
                    if let Some(v) = kv.strip_prefix("page_bits=") {
                        page_bits = Some(v.parse().map_err(|_| ListingError {
                            line,
                            message: format!("bad page_bits `{v}`"),
                        })?);
                    }
                }
                continue;
            }
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            statements.push(parse_statement(trimmed, line)?);
        }
        Ok(ObfuscatedProgram {
            page_bits: page_bits.ok_or(ListingError {
                line: 1,
                message: "missing listing header".into(),
            })?,
            statements,
        })
    }
}
