//! Canonical source rendering. `parse_program(&p.to_string())` yields a
//! program structurally equal to `p`.

use std::fmt::{self, Write};

use super::ast::*;

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, 0)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    match e {
        Expr::Lit(l) => write!(f, "{l}"),
        Expr::Var(v) => f.write_str(v),
        Expr::Unary(op, inner) => {
            f.write_char(match op {
                UnaryOp::Neg => '-',
                UnaryOp::Not => '!',
                UnaryOp::BitNot => '~',
            })?;
            // `-5` would re-parse as a literal and `--x` is still a unary
            // chain, but literals and binaries need explicit grouping.
            match **inner {
                Expr::Binary(..) | Expr::Lit(Literal::Int(_)) => {
                    f.write_char('(')?;
                    write_expr(f, inner, 0)?;
                    f.write_char(')')
                }
                _ => write_expr(f, inner, u8::MAX),
            }
        }
        Expr::Binary(op, l, r) => {
            let prec = op.precedence();
            let paren = prec < min_prec;
            if paren {
                f.write_char('(')?;
            }
            write_expr(f, l, prec)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(f, r, prec + 1)?;
            if paren {
                f.write_char(')')?;
            }
            Ok(())
        }
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, preds: &[Predicate]) -> fmt::Result {
    f.write_char('[')?;
    for (i, p) in preds.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{p}")?;
    }
    f.write_char(']')
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::Assign { target, value } => write!(f, "{target} = {value}"),
            Instruction::Print { format, value } => {
                write!(f, "print({}, {value})", quote(format))
            }
            Instruction::Goto {
                target,
                reset_vars,
                reset_consts,
            } => {
                write!(f, "goto(${target}, ")?;
                write_list(f, reset_vars)?;
                f.write_str(", ")?;
                write_list(f, reset_consts)?;
                f.write_char(')')
            }
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = &self.label {
            write!(f, "${l} ")?;
        }
        write!(f, "{} : {}", self.predicate, self.instruction)
    }
}

impl fmt::Display for Declaration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.ty, self.name)?;
        if let Some(init) = self.init {
            write!(f, " = {init}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.declarations {
            writeln!(f, "{d}")?;
        }
        for s in &self.statements {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}
