//! Value semantics shared by the reference interpreter and the evaluator.
//!
//! Every value is a 32-bit two's-complement integer; booleans are 0 and 1.
//! Arithmetic wraps, division truncates toward zero.

use crate::lang::{BinaryOp, UnaryOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ArithError {
    #[error("division by zero")]
    DivisionByZero,
}

pub fn truthy(v: i32) -> bool {
    v != 0
}

pub fn unary(op: UnaryOp, v: i32) -> i32 {
    match op {
        UnaryOp::Neg => v.wrapping_neg(),
        UnaryOp::Not => (!truthy(v)) as i32,
        UnaryOp::BitNot => !v,
    }
}

pub fn binary(op: BinaryOp, a: i32, b: i32) -> Result<i32, ArithError> {
    Ok(match op {
        BinaryOp::Add => a.wrapping_add(b),
        BinaryOp::Sub => a.wrapping_sub(b),
        BinaryOp::Mul => a.wrapping_mul(b),
        BinaryOp::Div if b == 0 => return Err(ArithError::DivisionByZero),
        BinaryOp::Div => a.wrapping_div(b),
        BinaryOp::Mod if b == 0 => return Err(ArithError::DivisionByZero),
        BinaryOp::Mod => a.wrapping_rem(b),
        BinaryOp::And => (truthy(a) && truthy(b)) as i32,
        BinaryOp::Or => (truthy(a) || truthy(b)) as i32,
        BinaryOp::Lt => (a < b) as i32,
        BinaryOp::Le => (a <= b) as i32,
        BinaryOp::Gt => (a > b) as i32,
        BinaryOp::Ge => (a >= b) as i32,
        BinaryOp::Eq => (a == b) as i32,
        BinaryOp::Ne => (a != b) as i32,
    })
}

/// Value as stored in a slot of `width` bytes.
pub fn narrow(v: i32, width: u32) -> i32 {
    if width == 1 {
        truthy(v) as i32
    } else {
        v
    }
}

/// Line-index guard deciding whether a predicate may be evaluated again.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReexecGuard {
    /// Skip when `current < last`. After a backward jump this still lets the
    /// most recent statement guarded by a foreign predicate run again.
    Strict,
    /// Skip when `current <= last`, so a statement already visited in this
    /// sweep never runs twice until its predicate is reset.
    #[default]
    Inclusive,
}

impl ReexecGuard {
    pub fn admits(self, current: i64, last: i64) -> bool {
        match self {
            ReexecGuard::Strict => current >= last,
            ReexecGuard::Inclusive => current > last,
        }
    }
}
