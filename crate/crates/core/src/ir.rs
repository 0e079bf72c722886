//! Three-address form of a predicated program: one operation per statement.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lang::{BinaryOp, Declaration, Literal, Predicate, UnaryOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Opcode {
    Mov,
    Neg,
    Not,
    BitNot,
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
    Print,
    Goto,
}

impl Opcode {
    pub const ALL: [Opcode; 19] = [
        Opcode::Mov,
        Opcode::Neg,
        Opcode::Not,
        Opcode::BitNot,
        Opcode::Add,
        Opcode::Sub,
        Opcode::Mul,
        Opcode::Div,
        Opcode::Mod,
        Opcode::And,
        Opcode::Or,
        Opcode::Lt,
        Opcode::Le,
        Opcode::Gt,
        Opcode::Ge,
        Opcode::Eq,
        Opcode::Ne,
        Opcode::Print,
        Opcode::Goto,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Opcode::Mov => "mov",
            Opcode::Neg => "neg",
            Opcode::Not => "not",
            Opcode::BitNot => "bnot",
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Mul => "mul",
            Opcode::Div => "div",
            Opcode::Mod => "mod",
            Opcode::And => "and",
            Opcode::Or => "or",
            Opcode::Lt => "lt",
            Opcode::Le => "le",
            Opcode::Gt => "gt",
            Opcode::Ge => "ge",
            Opcode::Eq => "eq",
            Opcode::Ne => "ne",
            Opcode::Print => "print",
            Opcode::Goto => "goto",
        }
    }

    pub fn of_unary(op: UnaryOp) -> Self {
        match op {
            UnaryOp::Neg => Opcode::Neg,
            UnaryOp::Not => Opcode::Not,
            UnaryOp::BitNot => Opcode::BitNot,
        }
    }

    pub fn of_binary(op: BinaryOp) -> Self {
        match op {
            BinaryOp::Add => Opcode::Add,
            BinaryOp::Sub => Opcode::Sub,
            BinaryOp::Mul => Opcode::Mul,
            BinaryOp::Div => Opcode::Div,
            BinaryOp::Mod => Opcode::Mod,
            BinaryOp::And => Opcode::And,
            BinaryOp::Or => Opcode::Or,
            BinaryOp::Lt => Opcode::Lt,
            BinaryOp::Le => Opcode::Le,
            BinaryOp::Gt => Opcode::Gt,
            BinaryOp::Ge => Opcode::Ge,
            BinaryOp::Eq => Opcode::Eq,
            BinaryOp::Ne => Opcode::Ne,
        }
    }

    pub fn as_unary(self) -> Option<UnaryOp> {
        Some(match self {
            Opcode::Neg => UnaryOp::Neg,
            Opcode::Not => UnaryOp::Not,
            Opcode::BitNot => UnaryOp::BitNot,
            _ => return None,
        })
    }

    pub fn as_binary(self) -> Option<BinaryOp> {
        Some(match self {
            Opcode::Add => BinaryOp::Add,
            Opcode::Sub => BinaryOp::Sub,
            Opcode::Mul => BinaryOp::Mul,
            Opcode::Div => BinaryOp::Div,
            Opcode::Mod => BinaryOp::Mod,
            Opcode::And => BinaryOp::And,
            Opcode::Or => BinaryOp::Or,
            Opcode::Lt => BinaryOp::Lt,
            Opcode::Le => BinaryOp::Le,
            Opcode::Gt => BinaryOp::Gt,
            Opcode::Ge => BinaryOp::Ge,
            Opcode::Eq => BinaryOp::Eq,
            Opcode::Ne => BinaryOp::Ne,
            _ => return None,
        })
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Opcode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Opcode::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| format!("unknown opcode `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Var(String),
    Lit(Literal),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) => f.write_str(v),
            Operand::Lit(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpKind {
    Mov {
        dst: String,
        src: Operand,
    },
    Unary {
        op: UnaryOp,
        dst: String,
        src: Operand,
    },
    Binary {
        op: BinaryOp,
        dst: String,
        lhs: Operand,
        rhs: Operand,
    },
    Print {
        format: String,
        src: Operand,
    },
    Goto {
        target: String,
        reset_vars: Vec<Predicate>,
        reset_consts: Vec<Predicate>,
    },
}

impl OpKind {
    pub fn opcode(&self) -> Opcode {
        match self {
            OpKind::Mov { .. } => Opcode::Mov,
            OpKind::Unary { op, .. } => Opcode::of_unary(*op),
            OpKind::Binary { op, .. } => Opcode::of_binary(*op),
            OpKind::Print { .. } => Opcode::Print,
            OpKind::Goto { .. } => Opcode::Goto,
        }
    }

    /// Read operands in evaluation order.
    pub fn sources(&self) -> Vec<&Operand> {
        match self {
            OpKind::Mov { src, .. } | OpKind::Unary { src, .. } | OpKind::Print { src, .. } => {
                vec![src]
            }
            OpKind::Binary { lhs, rhs, .. } => vec![lhs, rhs],
            OpKind::Goto { .. } => vec![],
        }
    }

    pub fn dst(&self) -> Option<&str> {
        match self {
            OpKind::Mov { dst, .. } | OpKind::Unary { dst, .. } | OpKind::Binary { dst, .. } => {
                Some(dst)
            }
            _ => None,
        }
    }

    pub fn resets(&self) -> impl Iterator<Item = &Predicate> {
        let lists: (&[Predicate], &[Predicate]) = match self {
            OpKind::Goto {
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
pub struct Op {
    pub label: Option<String>,
    pub predicate: Predicate,
    pub kind: OpKind,
    /// Inserted by uniformization; never affects real state.
    pub junk: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearProgram {
    pub name: String,
    pub declarations: Vec<Declaration>,
    pub ops: Vec<Op>,
}

impl LinearProgram {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.ops.iter().position(|o| o.label.as_deref() == Some(label))
    }
}
