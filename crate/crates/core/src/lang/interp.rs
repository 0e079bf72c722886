//! Direct interpreter for source programs. Serves as the functional
//! reference that obfuscated runs are compared against.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::*;
use crate::semantics::{self, ArithError, ReexecGuard};

/// One `print` result.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutputRecord {
    pub format: String,
    pub value: i32,
}

impl fmt::Display for OutputRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {}", super::printer::quote(&self.format), self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InterpError {
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error("fuel exhausted after {0} steps")]
    FuelExhausted(u64),
    #[error("unknown variable `{0}`")]
    Unknown(String),
    #[error("unsupported construct: {0}")]
    Unsupported(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRun {
    pub outputs: Vec<OutputRecord>,
    pub steps: u64,
}

struct Env {
    vars: HashMap<String, (i32, u32)>,
}

impl Env {
    fn new(decls: &[Declaration]) -> Self {
        let vars = decls
            .iter()
            .map(|d| {
                let v = d.init.map(Literal::as_i32).unwrap_or(0);
                (d.name.clone(), (v, d.ty.width()))
            })
            .collect();
        Self { vars }
    }

    fn get(&self, name: &str) -> Result<i32, InterpError> {
        self.vars
            .get(name)
            .map(|v| v.0)
            .ok_or_else(|| InterpError::Unknown(name.into()))
    }

    fn set(&mut self, name: &str, v: i32) -> Result<(), InterpError> {
        let slot = self
            .vars
            .get_mut(name)
            .ok_or_else(|| InterpError::Unknown(name.into()))?;
        slot.0 = semantics::narrow(v, slot.1);
        Ok(())
    }

    fn eval(&self, e: &Expr) -> Result<i32, InterpError> {
        Ok(match e {
            Expr::Lit(l) => l.as_i32(),
            Expr::Var(v) => self.get(v)?,
            Expr::Unary(op, inner) => semantics::unary(*op, self.eval(inner)?),
            Expr::Binary(op, l, r) => semantics::binary(*op, self.eval(l)?, self.eval(r)?)?,
        })
    }

    fn pred(&self, p: &Predicate) -> Result<bool, InterpError> {
        match p {
            Predicate::Const(b) => Ok(*b),
            Predicate::Var(v) => Ok(semantics::truthy(self.get(v)?)),
        }
    }
}

/// Runs a predicated program with the given re-execution guard.
pub fn run_source(p: &Program, fuel: u64, guard: ReexecGuard) -> Result<SourceRun, InterpError> {
    let mut env = Env::new(&p.declarations);
    let mut last: HashMap<&Predicate, i64> = HashMap::new();
    let labels: HashMap<&str, usize> = p
        .statements
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.label.as_deref().map(|l| (l, i)))
        .collect();
    let mut outputs = Vec::new();
    let mut ip = 0usize;
    let mut steps = 0u64;

    while ip < p.statements.len() {
        if steps >= fuel {
            return Err(InterpError::FuelExhausted(steps));
        }
        steps += 1;
        let s = &p.statements[ip];
        let line = ip as i64;
        let prev = last.get(&s.predicate).copied().unwrap_or(-1);
        if !guard.admits(line, prev) {
            ip += 1;
            continue;
        }
        last.insert(&s.predicate, line);
        if !env.pred(&s.predicate)? {
            ip += 1;
            continue;
        }
        match &s.instruction {
            Instruction::Assign { target, value } => {
                let v = env.eval(value)?;
                env.set(target, v)?;
            }
            Instruction::Print { format, value } => outputs.push(OutputRecord {
                format: format.clone(),
                value: env.eval(value)?,
            }),
            Instruction::Goto { target, .. } => {
                for r in s.instruction.resets() {
                    last.insert(r, -1);
                }
                ip = labels[target.as_str()];
                continue;
            }
        }
        ip += 1;
    }
    Ok(SourceRun { outputs, steps })
}

/// Runs a goto-free structured program with ordinary `if` semantics.
pub fn run_structured(p: &StructuredProgram) -> Result<Vec<OutputRecord>, InterpError> {
    let mut env = Env::new(&p.declarations);
    let mut out = Vec::new();
    exec_items(&p.items, &mut env, &mut out)?;
    Ok(out)
}

fn exec_items(items: &[Item], env: &mut Env, out: &mut Vec<OutputRecord>) -> Result<(), InterpError> {
    for item in items {
        match item {
            Item::Stmt(s) => {
                if !env.pred(&s.predicate)? {
                    continue;
                }
                match &s.instruction {
                    Instruction::Assign { target, value } => {
                        let v = env.eval(value)?;
                        env.set(target, v)?;
                    }
                    Instruction::Print { format, value } => out.push(OutputRecord {
                        format: format.clone(),
                        value: env.eval(value)?,
                    }),
                    Instruction::Goto { .. } => {
                        return Err(InterpError::Unsupported("goto inside structured program"))
                    }
                }
            }
            Item::If { arms, otherwise, .. } => {
                let mut taken = false;
                for (cond, body) in arms {
                    if semantics::truthy(env.eval(cond)?) {
                        exec_items(body, env, out)?;
                        taken = true;
                        break;
                    }
                }
                if !taken {
                    if let Some(body) = otherwise {
                        exec_items(body, env, out)?;
                    }
                }
            }
        }
    }
    Ok(())
}
