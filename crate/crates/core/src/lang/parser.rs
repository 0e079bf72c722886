//! Lexer and recursive-descent parser for `.lcfi` sources.
//!
//! ```text
//! program  ::= (decl | stmt | if)*          separated by newlines or ';'
//! decl     ::= type ident ('=' literal)?
//! stmt     ::= ('$' ident)? pred ':' inst
//! pred     ::= 'true' | 'false' | ident
//! inst     ::= 'print' '(' string ',' exp ')'
//!            | 'goto' '(' '$'? ident ',' list ',' list ')'
//!            | ident '=' exp
//! if       ::= 'if' '(' exp ')' block ('else' 'if' '(' exp ')' block)* ('else' block)?
//! ```
//!
//! Inside `if` blocks the `pred :` prefix is optional. `#` starts a line
//! comment.

use super::ast::*;
use super::diag::{Diagnostic, DiagnosticKind, ParseError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Label(String),
    Int(u64),
    Str(String),
    Newline,
    Semi,
    Colon,
    Comma,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Tilde,
    Bang,
    AndAnd,
    OrOr,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Label(s) => format!("label `${s}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", punct_text(other)),
        }
    }
}

fn punct_text(t: &Tok) -> &'static str {
    match t {
        Tok::Semi => ";",
        Tok::Colon => ":",
        Tok::Comma => ",",
        Tok::LParen => "(",
        Tok::RParen => ")",
        Tok::LBracket => "[",
        Tok::RBracket => "]",
        Tok::LBrace => "{",
        Tok::RBrace => "}",
        Tok::Assign => "=",
        Tok::Plus => "+",
        Tok::Minus => "-",
        Tok::Star => "*",
        Tok::Slash => "/",
        Tok::Percent => "%",
        Tok::Tilde => "~",
        Tok::Bang => "!",
        Tok::AndAnd => "&&",
        Tok::OrOr => "||",
        Tok::Lt => "<",
        Tok::Le => "<=",
        Tok::Gt => ">",
        Tok::Ge => ">=",
        Tok::EqEq => "==",
        Tok::Ne => "!=",
        _ => "?",
    }
}

fn syntax(span: Span, msg: impl Into<String>) -> ParseError {
    ParseError::single(Diagnostic::new(DiagnosticKind::Syntax, span, msg))
}

fn lex(src: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    while i < chars.len() {
        let c = chars[i];
        let span = Span::new(line, col);
        let advance = |i: &mut usize, col: &mut u32, n: usize| {
            *i += n;
            *col += n as u32;
        };
        match c {
            '\n' => {
                out.push((Tok::Newline, span));
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => advance(&mut i, &mut col, 1),
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    advance(&mut i, &mut col, 1);
                }
            }
            '"' => {
                let mut s = String::new();
                advance(&mut i, &mut col, 1);
                loop {
                    match chars.get(i) {
                        None | Some('\n') => {
                            return Err(syntax(span, "unterminated string literal"))
                        }
                        Some('"') => {
                            advance(&mut i, &mut col, 1);
                            break;
                        }
                        Some('\\') => {
                            let esc = match chars.get(i + 1) {
                                Some('n') => '\n',
                                Some('t') => '\t',
                                Some('"') => '"',
                                Some('\\') => '\\',
                                _ => {
                                    return Err(syntax(
                                        Span::new(line, col),
                                        "unknown escape sequence",
                                    ))
                                }
                            };
                            s.push(esc);
                            advance(&mut i, &mut col, 2);
                        }
                        Some(&ch) => {
                            s.push(ch);
                            advance(&mut i, &mut col, 1);
                        }
                    }
                }
                out.push((Tok::Str(s), span));
            }
            '0'..='9' => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(&mut i, &mut col, 1);
                }
                let text: String = chars[start..i].iter().collect();
                let v = text
                    .parse::<u64>()
                    .ok()
                    .filter(|v| *v <= 1 << 31)
                    .ok_or_else(|| syntax(span, format!("integer literal `{text}` out of range")))?;
                out.push((Tok::Int(v), span));
            }
            '$' => {
                advance(&mut i, &mut col, 1);
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    advance(&mut i, &mut col, 1);
                }
                if start == i {
                    return Err(syntax(span, "expected label name after `$`"));
                }
                out.push((Tok::Label(chars[start..i].iter().collect()), span));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    advance(&mut i, &mut col, 1);
                }
                out.push((Tok::Ident(chars[start..i].iter().collect()), span));
            }
            _ => {
                let next = chars.get(i + 1).copied();
                let (tok, n) = match (c, next) {
                    ('&', Some('&')) => (Tok::AndAnd, 2),
                    ('|', Some('|')) => (Tok::OrOr, 2),
                    ('<', Some('=')) => (Tok::Le, 2),
                    ('>', Some('=')) => (Tok::Ge, 2),
                    ('=', Some('=')) => (Tok::EqEq, 2),
                    ('!', Some('=')) => (Tok::Ne, 2),
                    (';', _) => (Tok::Semi, 1),
                    (':', _) => (Tok::Colon, 1),
                    (',', _) => (Tok::Comma, 1),
                    ('(', _) => (Tok::LParen, 1),
                    (')', _) => (Tok::RParen, 1),
                    ('[', _) => (Tok::LBracket, 1),
                    (']', _) => (Tok::RBracket, 1),
                    ('{', _) => (Tok::LBrace, 1),
                    ('}', _) => (Tok::RBrace, 1),
                    ('=', _) => (Tok::Assign, 1),
                    ('+', _) => (Tok::Plus, 1),
                    ('-', _) => (Tok::Minus, 1),
                    ('*', _) => (Tok::Star, 1),
                    ('/', _) => (Tok::Slash, 1),
                    ('%', _) => (Tok::Percent, 1),
                    ('~', _) => (Tok::Tilde, 1),
                    ('!', _) => (Tok::Bang, 1),
                    ('<', _) => (Tok::Lt, 1),
                    ('>', _) => (Tok::Gt, 1),
                    _ => return Err(syntax(span, format!("unexpected character `{c}`"))),
                };
                out.push((tok, span));
                advance(&mut i, &mut col, n);
            }
        }
    }
    out.push((Tok::Eof, Span::new(line, col)));
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "bool", "int", "float", "true", "false", "print", "goto", "if", "else",
];

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    structured: bool,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let idx = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[idx].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        Err(syntax(
            self.span(),
            format!("expected {wanted}, found {}", self.peek().describe()),
        ))
    }

    fn expect(&mut self, t: Tok) -> PResult<Span> {
        if *self.peek() == t {
            Ok(self.bump().1)
        } else {
            self.unexpected(&format!("`{}`", punct_text(&t)))
        }
    }

    fn is_ident(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let sp = self.bump().1;
                Ok((s, sp))
            }
            _ => self.unexpected(what),
        }
    }

    fn skip_separators(&mut self) {
        while matches!(self.peek(), Tok::Newline | Tok::Semi) {
            self.bump();
        }
    }

    fn end_of_item(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline | Tok::Semi => {
                self.skip_separators();
                Ok(())
            }
            Tok::Eof | Tok::RBrace => Ok(()),
            _ => self.unexpected("end of statement"),
        }
    }

    fn parse_type(&self) -> Option<Type> {
        match self.peek() {
            Tok::Ident(s) if s == "bool" => Some(Type::Bool),
            Tok::Ident(s) if s == "int" => Some(Type::Int),
            Tok::Ident(s) if s == "float" => Some(Type::Float),
            _ => None,
        }
    }

    fn program(&mut self) -> PResult<(Vec<Declaration>, Vec<Item>)> {
        let mut decls = Vec::new();
        let mut items = Vec::new();
        self.skip_separators();
        while *self.peek() != Tok::Eof {
            if let Some(ty) = self.parse_type() {
                let span = self.bump().1;
                let (name, _) = self.ident("variable name")?;
                let init = if *self.peek() == Tok::Assign {
                    self.bump();
                    Some(self.literal()?)
                } else {
                    None
                };
                decls.push(Declaration {
                    name,
                    ty,
                    init,
                    span,
                });
            } else {
                items.push(self.item(true)?);
            }
            self.end_of_item()?;
        }
        Ok((decls, items))
    }

    fn literal(&mut self) -> PResult<Literal> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Int(v) => {
                let sp = self.bump().1;
                int_literal(v, neg, sp)
            }
            Tok::Ident(s) if !neg && (s == "true" || s == "false") => {
                self.bump();
                Ok(Literal::Bool(s == "true"))
            }
            _ => self.unexpected("literal"),
        }
    }

    fn item(&mut self, top_level: bool) -> PResult<Item> {
        if self.is_ident("if") {
            if !self.structured {
                return Err(syntax(
                    self.span(),
                    "`if` is not part of the predicated language; use the structured front end",
                ));
            }
            return self.if_item();
        }
        let label = if let Tok::Label(l) = self.peek().clone() {
            self.bump();
            self.skip_separators();
            Some(l)
        } else {
            None
        };
        let span = self.span();
        let has_pred = matches!(self.peek_at(1), Tok::Colon);
        let predicate = if has_pred {
            let p = self.predicate()?;
            self.expect(Tok::Colon)?;
            p
        } else if top_level && !self.structured {
            return self.unexpected("predicate followed by `:`");
        } else {
            Predicate::Const(true)
        };
        let instruction = self.instruction()?;
        Ok(Item::Stmt(Statement {
            label,
            predicate,
            instruction,
            span,
        }))
    }

    fn if_item(&mut self) -> PResult<Item> {
        let span = self.bump().1;
        let mut arms = Vec::new();
        let mut otherwise = None;
        loop {
            self.expect(Tok::LParen)?;
            let cond = self.expr()?;
            self.expect(Tok::RParen)?;
            let body = self.block()?;
            arms.push((cond, body));
            // `else` may sit on the next line after `}`.
            let save = self.pos;
            self.skip_separators();
            if !self.is_ident("else") {
                self.pos = save;
                break;
            }
            self.bump();
            if self.is_ident("if") {
                self.bump();
                continue;
            }
            otherwise = Some(self.block()?);
            break;
        }
        Ok(Item::If {
            arms,
            otherwise,
            span,
        })
    }

    fn block(&mut self) -> PResult<Vec<Item>> {
        self.skip_separators();
        self.expect(Tok::LBrace)?;
        self.skip_separators();
        let mut items = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return self.unexpected("`}`");
            }
            items.push(self.item(false)?);
            self.end_of_item()?;
        }
        self.bump();
        Ok(items)
    }

    fn predicate(&mut self) -> PResult<Predicate> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Predicate::Const(s == "true"))
            }
            Tok::Ident(_) => Ok(Predicate::Var(self.ident("predicate")?.0)),
            _ => self.unexpected("predicate"),
        }
    }

    fn instruction(&mut self) -> PResult<Instruction> {
        if self.is_ident("print") {
            self.bump();
            self.expect(Tok::LParen)?;
            let format = match self.bump() {
                (Tok::Str(s), _) => s,
                (t, sp) => {
                    return Err(syntax(
                        sp,
                        format!("expected string literal, found {}", t.describe()),
                    ))
                }
            };
            self.expect(Tok::Comma)?;
            let value = self.expr()?;
            self.expect(Tok::RParen)?;
            return Ok(Instruction::Print { format, value });
        }
        if self.is_ident("goto") {
            self.bump();
            self.expect(Tok::LParen)?;
            let target = match self.peek().clone() {
                Tok::Label(l) => {
                    self.bump();
                    l
                }
                _ => self.ident("goto target label")?.0,
            };
            self.expect(Tok::Comma)?;
            let reset_vars = self.pred_list()?;
            self.expect(Tok::Comma)?;
            let reset_consts = self.pred_list()?;
            self.expect(Tok::RParen)?;
            return Ok(Instruction::Goto {
                target,
                reset_vars,
                reset_consts,
            });
        }
        let (target, _) = self.ident("instruction")?;
        self.expect(Tok::Assign)?;
        let value = self.expr()?;
        Ok(Instruction::Assign { target, value })
    }

    fn pred_list(&mut self) -> PResult<Vec<Predicate>> {
        self.expect(Tok::LBracket)?;
        let mut out = Vec::new();
        if *self.peek() != Tok::RBracket {
            loop {
                out.push(self.predicate()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RBracket)?;
        Ok(out)
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        Some(match self.peek() {
            Tok::Plus => BinaryOp::Add,
            Tok::Minus => BinaryOp::Sub,
            Tok::Star => BinaryOp::Mul,
            Tok::Slash => BinaryOp::Div,
            Tok::Percent => BinaryOp::Mod,
            Tok::AndAnd => BinaryOp::And,
            Tok::OrOr => BinaryOp::Or,
            Tok::Lt => BinaryOp::Lt,
            Tok::Le => BinaryOp::Le,
            Tok::Gt => BinaryOp::Gt,
            Tok::Ge => BinaryOp::Ge,
            Tok::EqEq => BinaryOp::Eq,
            Tok::Ne => BinaryOp::Ne,
            _ => return None,
        })
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.expr_prec(1)
    }

    fn expr_prec(&mut self, min: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op() {
            let prec = op.precedence();
            if prec < min {
                break;
            }
            self.bump();
            let rhs = self.expr_prec(prec + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let op = match self.peek() {
            Tok::Minus => {
                if let Tok::Int(v) = *self.peek_at(1) {
                    self.bump();
                    let sp = self.bump().1;
                    return Ok(Expr::Lit(int_literal(v, true, sp)?));
                }
                UnaryOp::Neg
            }
            Tok::Bang => UnaryOp::Not,
            Tok::Tilde => UnaryOp::BitNot,
            _ => return self.primary(),
        };
        self.bump();
        Ok(Expr::Unary(op, Box::new(self.unary()?)))
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(v) => {
                let sp = self.bump().1;
                Ok(Expr::Lit(int_literal(v, false, sp)?))
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Expr::Lit(Literal::Bool(s == "true")))
            }
            Tok::Ident(_) => Ok(Expr::Var(self.ident("expression")?.0)),
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            _ => self.unexpected("expression"),
        }
    }
}

fn int_literal(v: u64, negative: bool, span: Span) -> PResult<Literal> {
    let signed = if negative { -(v as i64) } else { v as i64 };
    i32::try_from(signed)
        .map(Literal::Int)
        .map_err(|_| syntax(span, format!("integer literal `{signed}` out of range")))
}

fn parse_items(
    src: &str,
    structured: bool,
) -> Result<(Vec<Declaration>, Vec<Item>), ParseError> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        structured,
    };
    p.program()
}

/// Parses predicated source without validating name resolution.
pub fn parse_unchecked(name: &str, src: &str) -> Result<Program, ParseError> {
    let (declarations, items) = parse_items(src, false)?;
    let statements = items
        .into_iter()
        .map(|i| match i {
            Item::Stmt(s) => s,
            Item::If { .. } => unreachable!("rejected by the parser"),
        })
        .collect();
    Ok(Program {
        name: name.to_string(),
        declarations,
        statements,
    })
}

/// Parses and validates a predicated program.
pub fn parse_program(name: &str, src: &str) -> Result<Program, ParseError> {
    let program = parse_unchecked(name, src)?;
    let diags = super::validate::validate(&program);
    if diags.is_empty() {
        Ok(program)
    } else {
        Err(ParseError { diagnostics: diags })
    }
}

/// Parses a program that may contain `if`/`else` blocks.
pub fn parse_structured(name: &str, src: &str) -> Result<StructuredProgram, ParseError> {
    let (declarations, items) = parse_items(src, true)?;
    Ok(StructuredProgram {
        name: name.to_string(),
        declarations,
        items,
    })
}
