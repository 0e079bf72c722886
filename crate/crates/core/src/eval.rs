//! Untrusted evaluator. Fetches obfuscated statements, evaluates predicates
//! with the re-execution guard, and performs every data access through the
//! trusted runtime.

use std::collections::HashMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::compiler::{Compiled, ObfId, ObfOp, ObfuscatedProgram};
use crate::ir::Opcode;
use crate::lang::OutputRecord;
use crate::semantics::{self, ArithError, ReexecGuard};
use crate::tee::{AccessStats, Resolved, ShuffleEvent, TeeError, TrustedRuntime};

pub const DEFAULT_FUEL: u64 = 10_000_000;

/// Storage of a predicate's value and last executed line.
pub trait PredicateMemory {
    type Error;
    fn last_line(&mut self, pred: ObfId) -> Result<i32, Self::Error>;
    fn set_last_line(&mut self, pred: ObfId, line: i32) -> Result<(), Self::Error>;
    fn value(&mut self, pred: ObfId) -> Result<bool, Self::Error>;
}

/// Returns false without side effects when the guard rejects `current`;
/// otherwise records `current` as the last line and returns the value.
pub fn eval_predicate<M: PredicateMemory>(
    mem: &mut M,
    guard: ReexecGuard,
    pred: ObfId,
    current: i32,
) -> Result<bool, M::Error> {
    let last = mem.last_line(pred)?;
    if !guard.admits(current as i64, last as i64) {
        return Ok(false);
    }
    mem.set_last_line(pred, current)?;
    mem.value(pred)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessRole {
    LastLine,
    SetLastLine,
    Predicate,
    Operand,
    Result,
    Reset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceAccess {
    pub role: AccessRole,
    pub id: ObfId,
    pub phys: Vec<u32>,
    /// Pages shuffled immediately before this access.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shuffled: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    pub opcode: Opcode,
    pub executed: bool,
    pub accesses: Vec<TraceAccess>,
}

impl TraceStep {
    pub fn shuffle_events(&self) -> Vec<ShuffleEvent> {
        self.accesses
            .iter()
            .filter(|a| !a.shuffled.is_empty())
            .map(|a| ShuffleEvent {
                pages: a.shuffled.clone(),
            })
            .collect()
    }
}

/// What the untrusted side observes while running.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub steps: Vec<TraceStep>,
}

impl ExecutionTrace {
    pub fn write_jsonl(&self, mut w: impl Write) -> io::Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn from_jsonl(text: &str) -> serde_json::Result<Self> {
        let steps = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(ExecutionTrace { steps })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Memory(#[from] TeeError),
    #[error("statement {index}: {source}")]
    Arith { index: usize, source: ArithError },
    #[error("fuel exhausted after {0} steps")]
    FuelExhausted(u64),
    #[error("statement {index}: unknown label `{label}`")]
    UnknownLabel { index: usize, label: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub fuel: u64,
    pub trace: bool,
    pub guard: ReexecGuard,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            fuel: DEFAULT_FUEL,
            trace: false,
            guard: ReexecGuard::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub outputs: Vec<OutputRecord>,
    /// Statement index of each output.
    pub output_sites: Vec<usize>,
    pub steps: u64,
    pub stats: AccessStats,
    pub trace: Option<ExecutionTrace>,
}

struct Machine<'a> {
    rt: &'a mut TrustedRuntime,
    accesses: Option<Vec<TraceAccess>>,
}

impl Machine<'_> {
    fn note(&mut self, role: AccessRole, id: ObfId, res: Resolved) {
        if let Some(acc) = &mut self.accesses {
            let shuffled = if self.rt.has_events() {
                self.rt.take_events().into_iter().flat_map(|e| e.pages).collect()
            } else {
                Vec::new()
            };
            acc.push(TraceAccess {
                role,
                id,
                phys: res.addrs().to_vec(),
                shuffled,
            });
        }
    }

    fn load(&mut self, role: AccessRole, id: ObfId) -> Result<i32, TeeError> {
        let (v, res) = self.rt.load(id)?;
        self.note(role, id, res);
        Ok(v)
    }

    fn store(&mut self, id: ObfId, v: i32) -> Result<(), TeeError> {
        let res = self.rt.store(id, v)?;
        self.note(AccessRole::Result, id, res);
        Ok(())
    }
}

impl PredicateMemory for Machine<'_> {
    type Error = TeeError;

    fn last_line(&mut self, pred: ObfId) -> Result<i32, TeeError> {
        let (v, res) = self.rt.load_last_line(pred)?;
        self.note(AccessRole::LastLine, pred, res);
        Ok(v)
    }

    fn set_last_line(&mut self, pred: ObfId, line: i32) -> Result<(), TeeError> {
        let res = self.rt.store_last_line(pred, line)?;
        self.note(AccessRole::SetLastLine, pred, res);
        Ok(())
    }

    fn value(&mut self, pred: ObfId) -> Result<bool, TeeError> {
        self.load(AccessRole::Predicate, pred).map(semantics::truthy)
    }
}

fn jump_targets(p: &ObfuscatedProgram) -> Result<Vec<usize>, RunError> {
    let labels: HashMap<&str, usize> = p
        .statements
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.label.as_deref().map(|l| (l, i)))
        .collect();
    p.statements
        .iter()
        .enumerate()
        .map(|(i, s)| match &s.op {
            ObfOp::Goto { target, .. } => labels.get(target.as_str()).copied().ok_or(RunError::UnknownLabel {
                index: i,
                label: target.clone(),
            }),
            _ => Ok(usize::MAX),
        })
        .collect()
}

/// Executes `program` from the first statement until control passes the end.
pub fn run(program: &ObfuscatedProgram, rt: &mut TrustedRuntime, opts: RunOptions) -> Result<RunResult, RunError> {
    let targets = jump_targets(program)?;
    rt.record_events(opts.trace);
    let mut m = Machine { rt, accesses: None };
    let mut trace = opts.trace.then(ExecutionTrace::default);
    let mut outputs = Vec::new();
    let mut output_sites = Vec::new();
    let mut steps = 0u64;
    let mut ip = 0usize;
    let n = program.statements.len();

    while ip < n {
        if steps >= opts.fuel {
            return Err(RunError::FuelExhausted(steps));
        }
        steps += 1;
        let s = &program.statements[ip];
        if trace.is_some() {
            m.accesses = Some(Vec::new());
        }
        let executed = eval_predicate(&mut m, opts.guard, s.predicate, ip as i32)?;
        let mut next = ip + 1;
        if executed {
            match &s.op {
                ObfOp::Compute { opcode, dst, srcs } => {
                    let a = m.load(AccessRole::Operand, srcs[0])?;
                    let v = if let Some(op) = opcode.as_binary() {
                        let b = m.load(AccessRole::Operand, srcs[1])?;
                        semantics::binary(op, a, b).map_err(|source| RunError::Arith { index: ip, source })?
                    } else if let Some(op) = opcode.as_unary() {
                        semantics::unary(op, a)
                    } else {
                        a
                    };
                    m.store(*dst, v)?;
                }
                ObfOp::Print { format, src } => {
                    let value = m.load(AccessRole::Operand, *src)?;
                    outputs.push(OutputRecord {
                        format: format.clone(),
                        value,
                    });
                    output_sites.push(ip);
                }
                ObfOp::Goto {
                    reset_vars,
                    reset_consts,
                    ..
                } => {
                    for &p in reset_vars.iter().chain(reset_consts) {
                        let res = m.rt.store_last_line(p, -1)?;
                        m.note(AccessRole::Reset, p, res);
                    }
                    next = targets[ip];
                }
            }
        }
        if let Some(t) = &mut trace {
            t.steps.push(TraceStep {
                index: ip,
                opcode: s.op.opcode(),
                executed,
                accesses: m.accesses.take().unwrap_or_default(),
            });
        }
        ip = next;
    }
    Ok(RunResult {
        outputs,
        output_sites,
        steps,
        stats: m.rt.stats(),
        trace,
    })
}

/// Runs a compilation with a fresh trusted runtime built from its key.
pub fn run_compiled(c: &Compiled, opts: RunOptions) -> Result<RunResult, RunError> {
    let mut rt = TrustedRuntime::new(&c.key, &c.layout)?;
    run(&c.program, &mut rt, opts)
}
