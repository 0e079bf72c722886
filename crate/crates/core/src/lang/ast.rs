//! Syntax tree for predicated programs.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Source position, 1-based.
///
/// Positions are diagnostic metadata only, so every span compares equal to
/// every other span. That keeps structural equality of programs independent
/// of formatting.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Self { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Type {
    Bool,
    Int,
    Float,
}

impl Type {
    /// Bytes occupied in the flat data section.
    pub fn width(self) -> u32 {
        match self {
            Type::Bool => 1,
            Type::Int | Type::Float => 4,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Bool => "bool",
            Type::Int => "int",
            Type::Float => "float",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Literal {
    Int(i32),
    Bool(bool),
}

impl Literal {
    pub fn ty(self) -> Type {
        match self {
            Literal::Int(_) => Type::Int,
            Literal::Bool(_) => Type::Bool,
        }
    }

    pub fn as_i32(self) -> i32 {
        match self {
            Literal::Int(v) => v,
            Literal::Bool(b) => b as i32,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Declaration {
    pub name: String,
    pub ty: Type,
    /// Initial value; variables without one start zeroed.
    pub init: Option<Literal>,
    pub span: Span,
}

/// Guard of a statement: a boolean constant or a boolean variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Predicate {
    Const(bool),
    Var(String),
}

impl Predicate {
    pub fn is_const(&self) -> bool {
        matches!(self, Predicate::Const(_))
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Const(b) => write!(f, "{b}"),
            Predicate::Var(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnaryOp {
    /// `-e`, wrapping.
    Neg,
    /// `!e`, logical.
    Not,
    /// `~e`, bitwise complement.
    BitNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    And,
    Or,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Mod => "%",
            BinaryOp::And => "&&",
            BinaryOp::Or => "||",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq | BinaryOp::Ne => 3,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 4,
            BinaryOp::Add | BinaryOp::Sub => 5,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Mod => 6,
        }
    }

    pub fn yields_bool(self) -> bool {
        self.precedence() <= 4
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Lit(Literal),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn int(v: i32) -> Self {
        Expr::Lit(Literal::Int(v))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn not(e: Expr) -> Self {
        Expr::Unary(UnaryOp::Not, Box::new(e))
    }

    /// Visits every variable name in evaluation order.
    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(v) => f(v),
            Expr::Unary(_, e) => e.for_each_var(f),
            Expr::Binary(_, l, r) => {
                l.for_each_var(f);
                r.for_each_var(f);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instruction {
    Assign { target: String, value: Expr },
    Print { format: String, value: Expr },
    /// Jump to `target`, first resetting the re-execution guard of every
    /// predicate in both lists. By convention the first list holds variable
    /// predicates of the loop body and the second holds constants.
    Goto {
        target: String,
        reset_vars: Vec<Predicate>,
        reset_consts: Vec<Predicate>,
    },
}

impl Instruction {
    pub fn resets(&self) -> impl Iterator<Item = &Predicate> {
        let lists: (&[Predicate], &[Predicate]) = match self {
            Instruction::Goto {
                reset_vars,
                reset_consts,
                ..
            } => (reset_vars, reset_consts),
            _ => (&[], &[]),
        };
        lists.0.iter().chain(lists.1.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub label: Option<String>,
    pub predicate: Predicate,
    pub instruction: Instruction,
    pub span: Span,
}

impl Statement {
    pub fn new(predicate: Predicate, instruction: Instruction) -> Self {
        Self {
            label: None,
            predicate,
            instruction,
            span: Span::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub name: String,
    pub declarations: Vec<Declaration>,
    pub statements: Vec<Statement>,
}

impl Program {
    pub fn declaration(&self, name: &str) -> Option<&Declaration> {
        self.declarations.iter().find(|d| d.name == name)
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.statements
            .iter()
            .position(|s| s.label.as_deref() == Some(label))
    }
}

/// Structured program: statements may be wrapped in `if`/`else` blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuredProgram {
    pub name: String,
    pub declarations: Vec<Declaration>,
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Stmt(Statement),
    If {
        /// `if (cond) {..} else if (cond) {..}` arms in order.
        arms: Vec<(Expr, Vec<Item>)>,
        otherwise: Option<Vec<Item>>,
        span: Span,
    },
}
