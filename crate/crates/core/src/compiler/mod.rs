//! Lowering, uniformization, interleaving and identifier obfuscation.

mod idmint;
mod interleave;
mod listing;
mod lower;
mod uniformize;

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ir::{LinearProgram, OpKind, Opcode, Operand};
use crate::lang::{ParseError, Predicate, Program};
use crate::layout::{layout, DataLabel, FlatLayout, LayoutError};

pub use idmint::{g, IdError, IdMinter};
pub use interleave::{draw_program, interleave, interleave_order};
pub use listing::{ListingError, ObfId, ObfOp, ObfStatement, ObfuscatedProgram};
pub use lower::lower_program;
pub use uniformize::{junk_program, uniformize, used_alphabet, OpcodeHistogram};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("no input programs")]
    NoPrograms,
    #[error("program `{0}` is invalid: {1}")]
    Invalid(String, ParseError),
    #[error("program `{program}`: floating-point variable `{variable}` is not supported")]
    UnsupportedFloat { program: String, variable: String },
    #[error("uniformization alphabet is empty")]
    EmptyAlphabet,
    #[error("program `{program}` uses `{opcode}`, which is outside the alphabet")]
    OpcodeOutsideAlphabet { program: String, opcode: Opcode },
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Id(#[from] IdError),
    #[error("key range [{lo}, {hi}] is empty for a {t}-byte data section")]
    EmptyKeyRange { lo: u64, hi: u64, t: u64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// How often the runtime reshuffles touched pages, in data accesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleSetting {
    /// One shuffle per `n` accesses on average, `n` the number of input programs.
    #[default]
    PerProgramCount,
    Every(u64),
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileConfig {
    pub compile_seed: u64,
    pub junk_seed: u64,
    pub perm_seed: u64,
    pub alpha: u64,
    pub beta: u64,
    pub id_bound: u64,
    pub page_bits: u32,
    pub counter_bits: u32,
    pub shuffle: ShuffleSetting,
    pub uniformize: bool,
    /// Defaults to the opcodes used by the inputs.
    pub alphabet: Option<Vec<Opcode>>,
    /// Extra junk rounds as a fraction of the per-opcode target count.
    pub junk_ratio: f64,
    pub junk_programs: usize,
    /// Largest data section accepted, in bytes.
    pub address_bound: u64,
}

impl Default for CompileConfig {
    fn default() -> Self {
        CompileConfig {
            compile_seed: 0,
            junk_seed: 0,
            perm_seed: 0,
            alpha: 2,
            beta: 5,
            id_bound: 1_000_000,
            page_bits: 8,
            counter_bits: 16,
            shuffle: ShuffleSetting::default(),
            uniformize: true,
            alphabet: None,
            junk_ratio: 0.0,
            junk_programs: 0,
            address_bound: 1 << 24,
        }
    }
}

impl CompileConfig {
    pub fn with_seed(seed: u64) -> Self {
        CompileConfig {
            compile_seed: seed,
            junk_seed: seed.wrapping_add(1),
            perm_seed: seed.wrapping_add(2),
            ..Default::default()
        }
    }

    fn check(&self) -> Result<(), CompileError> {
        let bad = |m: &str| Err(CompileError::Config(m.to_string()));
        if self.alpha == 0 || self.alpha >= self.beta {
            return bad("alpha must be positive and below beta");
        }
        if self.page_bits == 0 || self.page_bits > 16 {
            return bad("page_bits must be in 1..=16");
        }
        if self.counter_bits == 0 || self.counter_bits > 32 {
            return bad("counter_bits must be in 1..=32");
        }
        if self.shuffle == ShuffleSetting::Every(0) {
            return bad("shuffle period must be positive");
        }
        if !(self.junk_ratio >= 0.0 && self.junk_ratio.is_finite()) {
            return bad("junk ratio must be a non-negative number");
        }
        Ok(())
    }
}

/// Secret material of the trusted runtime. Never shipped with the listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyMaterial {
    pub trusted_only: bool,
    pub sk: u64,
    pub alpha: u64,
    pub beta: u64,
    pub id_bound: u64,
    pub perm_seed: u64,
    pub counter_bits: u32,
    pub page_bits: u32,
    /// Mean accesses between shuffles; `None` disables shuffling.
    pub shuffle_period: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramInfo {
    pub name: String,
    /// Made entirely of junk.
    pub junk_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementOrigin {
    pub program: usize,
    pub junk: bool,
}

/// Ground truth of a compilation: where each merged statement came from and
/// which clear id each obfuscated id names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceMap {
    pub programs: Vec<ProgramInfo>,
    pub statements: Vec<StatementOrigin>,
    pub clear_ids: BTreeMap<ObfId, u32>,
}

impl ProvenanceMap {
    /// Number of merged statements of each program.
    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.programs.len()];
        for s in &self.statements {
            out[s.program] += 1;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub program: ObfuscatedProgram,
    pub key: KeyMaterial,
    pub layout: FlatLayout,
    pub provenance: ProvenanceMap,
    /// The programs that were merged, after lowering and padding.
    pub merged_inputs: Vec<LinearProgram>,
}

fn validated(p: &Program) -> Result<(), CompileError> {
    let diags = crate::lang::validate(p);
    if diags.is_empty() {
        Ok(())
    } else {
        Err(CompileError::Invalid(p.name.clone(), ParseError { diagnostics: diags }))
    }
}

/// Draws the key uniformly from `[max(alpha*t, t+1), beta*t]`.
pub fn choose_key(t: u64, alpha: u64, beta: u64, rng: &mut impl Rng) -> Result<u64, CompileError> {
    let lo = (alpha * t).max(t + 1);
    let hi = beta * t;
    if lo > hi {
        return Err(CompileError::EmptyKeyRange { lo, hi, t });
    }
    Ok(rng.gen_range(lo..=hi))
}

/// Independent sub-streams of the compile seed.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Lowers and, if configured, uniformizes the inputs.
pub fn prepare(programs: &[Program], config: &CompileConfig) -> Result<Vec<LinearProgram>, CompileError> {
    if programs.is_empty() {
        return Err(CompileError::NoPrograms);
    }
    config.check()?;
    for p in programs {
        validated(p)?;
    }
    let lowered = programs.iter().map(lower_program).collect::<Result<Vec<_>, _>>()?;
    if !config.uniformize {
        return Ok(lowered);
    }
    let alphabet = config.alphabet.clone().unwrap_or_else(|| used_alphabet(&lowered));
    let mut padded = uniformize(&lowered, &alphabet, config.junk_ratio, config.junk_seed)?;
    let per_opcode = padded[0].len() / alphabet.len();
    let formats = uniformize::formats_of(&lowered);
    for j in 0..config.junk_programs {
        let seed = config.junk_seed.wrapping_add(1 + j as u64);
        padded.push(junk_program(&format!("__junk{j}"), &alphabet, per_opcode, &formats, seed));
    }
    Ok(padded)
}

struct Rewriter<'a> {
    layout: &'a FlatLayout,
    minter: IdMinter,
    rng: ChaCha8Rng,
    clear_ids: BTreeMap<ObfId, u32>,
}

impl Rewriter<'_> {
    fn fresh(&mut self, label: DataLabel) -> Result<ObfId, CompileError> {
        let x = self.layout.clear_id_of(&label)?;
        let r = self.minter.mint(x as u64, &mut self.rng)?;
        self.clear_ids.insert(r, x);
        Ok(r)
    }

    fn operand(&mut self, program: u32, o: &Operand) -> Result<ObfId, CompileError> {
        match o {
            Operand::Var(v) => self.fresh(DataLabel::var(program, v)),
            Operand::Lit(l) => self.fresh(DataLabel::constant(*l)),
        }
    }

    fn predicates(&mut self, program: u32, ps: &[Predicate]) -> Result<Vec<ObfId>, CompileError> {
        ps.iter()
            .map(|p| self.fresh(DataLabel::predicate_value(program, p)))
            .collect()
    }
}

/// Full pipeline: lower, uniformize, lay out, interleave, then rewrite every
/// data reference to a fresh obfuscated id.
pub fn compile(programs: &[Program], config: &CompileConfig) -> Result<Compiled, CompileError> {
    let inputs = prepare(programs, config)?;
    let real_programs = programs.len() as u64;

    let data = layout(&inputs, stream(config.compile_seed, 1).gen(), config.address_bound)?;
    let t = data.total_size() as u64;
    let sk = choose_key(t, config.alpha, config.beta, &mut stream(config.compile_seed, 2))?;

    let per_program: Vec<Vec<crate::ir::Op>> = inputs.iter().map(|p| p.ops.clone()).collect();
    let (merged, order) = interleave(per_program, stream(config.compile_seed, 3).gen());

    let mut labels: HashMap<(usize, String), String> = HashMap::new();
    for (&pi, op) in order.iter().zip(&merged) {
        if let Some(l) = &op.label {
            let fresh = format!("L{}", labels.len());
            labels.insert((pi, l.clone()), fresh);
        }
    }

    let mut rw = Rewriter {
        layout: &data,
        minter: IdMinter::new(sk, config.id_bound),
        rng: stream(config.compile_seed, 4),
        clear_ids: BTreeMap::new(),
    };
    let mut statements = Vec::with_capacity(merged.len());
    let mut origins = Vec::with_capacity(merged.len());
    for (&pi, op) in order.iter().zip(&merged) {
        let p = pi as u32;
        let predicate = rw.fresh(DataLabel::predicate_value(p, &op.predicate))?;
        let obf = match &op.kind {
            OpKind::Mov { dst, src } | OpKind::Unary { dst, src, .. } => {
                let src = rw.operand(p, src)?;
                ObfOp::Compute {
                    opcode: op.kind.opcode(),
                    dst: rw.fresh(DataLabel::var(p, dst))?,
                    srcs: vec![src],
                }
            }
            OpKind::Binary { dst, lhs, rhs, .. } => {
                let lhs = rw.operand(p, lhs)?;
                let rhs = rw.operand(p, rhs)?;
                ObfOp::Compute {
                    opcode: op.kind.opcode(),
                    dst: rw.fresh(DataLabel::var(p, dst))?,
                    srcs: vec![lhs, rhs],
                }
            }
            OpKind::Print { format, src } => ObfOp::Print {
                format: format.clone(),
                src: rw.operand(p, src)?,
            },
            OpKind::Goto {
                target,
                reset_vars,
                reset_consts,
            } => ObfOp::Goto {
                target: labels[&(pi, target.clone())].clone(),
                reset_vars: rw.predicates(p, reset_vars)?,
                reset_consts: rw.predicates(p, reset_consts)?,
            },
        };
        statements.push(ObfStatement {
            label: op.label.as_ref().map(|l| labels[&(pi, l.clone())].clone()),
            predicate,
            op: obf,
        });
        origins.push(StatementOrigin {
            program: pi,
            junk: op.junk,
        });
    }

    let shuffle_period = match config.shuffle {
        ShuffleSetting::PerProgramCount => Some(real_programs),
        ShuffleSetting::Every(n) => Some(n),
        ShuffleSetting::Never => None,
    };
    let key = KeyMaterial {
        trusted_only: true,
        sk,
        alpha: config.alpha,
        beta: config.beta,
        id_bound: config.id_bound,
        perm_seed: stream(config.perm_seed, 5).gen::<u64>() | 1 << 63,
        counter_bits: config.counter_bits,
        page_bits: config.page_bits,
        shuffle_period,
    };
    let provenance = ProvenanceMap {
        programs: inputs
            .iter()
            .enumerate()
            .map(|(i, p)| ProgramInfo {
                name: p.name.clone(),
                junk_only: i >= programs.len(),
            })
            .collect(),
        statements: origins,
        clear_ids: rw.clear_ids,
    };
    Ok(Compiled {
        program: ObfuscatedProgram {
            page_bits: config.page_bits,
            statements,
        },
        key,
        layout: data,
        provenance,
        merged_inputs: inputs,
    })
}
