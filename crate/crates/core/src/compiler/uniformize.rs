use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ir::{LinearProgram, Op, OpKind, Opcode, Operand};
use crate::lang::{Declaration, Literal, Predicate, Span, Type};

use super::CompileError;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OpcodeHistogram {
    pub counts: BTreeMap<Opcode, usize>,
    pub total: usize,
}

impl OpcodeHistogram {
    pub fn of(p: &LinearProgram) -> Self {
        let mut h = OpcodeHistogram::default();
        for op in &p.ops {
            *h.counts.entry(op.kind.opcode()).or_default() += 1;
            h.total += 1;
        }
        h
    }

    pub fn count(&self, op: Opcode) -> usize {
        self.counts.get(&op).copied().unwrap_or(0)
    }

    /// Relative frequency of each opcode.
    pub fn distribution(&self) -> BTreeMap<Opcode, f64> {
        self.counts
            .iter()
            .map(|(&o, &c)| (o, c as f64 / self.total as f64))
            .collect()
    }

    /// True when every opcode of `alphabet` occurs equally often and nothing else occurs.
    pub fn is_uniform_over(&self, alphabet: &[Opcode]) -> bool {
        let Some(&first) = alphabet.first() else {
            return self.total == 0;
        };
        let m = self.count(first);
        alphabet.iter().all(|&o| self.count(o) == m) && m * alphabet.len() == self.total
    }
}

/// Union of opcodes used by any program, in canonical order.
pub fn used_alphabet(programs: &[LinearProgram]) -> Vec<Opcode> {
    let set: BTreeSet<Opcode> = programs
        .iter()
        .flat_map(|p| p.ops.iter().map(|o| o.kind.opcode()))
        .collect();
    set.into_iter().collect()
}

const JUNK_INTS: usize = 3;
const JUNK_BOOLS: usize = 3;
const JUNK_PREDS: usize = 2;

struct JunkNames {
    ints: Vec<String>,
    bools: Vec<String>,
    preds: Vec<String>,
    never: String,
    label_prefix: String,
}

fn fresh(taken: &mut HashSet<String>, stem: &str) -> String {
    let mut n = 0;
    loop {
        let name = format!("{stem}{n}");
        if taken.insert(name.clone()) {
            return name;
        }
        n += 1;
    }
}

impl JunkNames {
    fn for_program(p: &LinearProgram) -> Self {
        let mut taken: HashSet<String> = p.declarations.iter().map(|d| d.name.clone()).collect();
        let ints = (0..JUNK_INTS).map(|_| fresh(&mut taken, "__ji")).collect();
        let bools = (0..JUNK_BOOLS).map(|_| fresh(&mut taken, "__jb")).collect();
        let preds = (0..JUNK_PREDS).map(|_| fresh(&mut taken, "__jp")).collect();
        let never = fresh(&mut taken, "__jq");
        let labels: HashSet<String> = p.ops.iter().filter_map(|o| o.label.clone()).collect();
        let mut label_prefix = "__jl".to_string();
        while labels.iter().any(|l| l.starts_with(&label_prefix)) {
            label_prefix.push('_');
        }
        JunkNames {
            ints,
            bools,
            preds,
            never,
            label_prefix,
        }
    }

    fn declarations(&self) -> Vec<Declaration> {
        let decl = |name: &String, ty, init| Declaration {
            name: name.clone(),
            ty,
            init,
            span: Span::default(),
        };
        let mut out = Vec::new();
        out.extend(self.ints.iter().map(|n| decl(n, Type::Int, None)));
        out.extend(self.bools.iter().map(|n| decl(n, Type::Bool, None)));
        out.extend(
            self.preds
                .iter()
                .map(|n| decl(n, Type::Bool, Some(Literal::Bool(true)))),
        );
        out.push(decl(&self.never, Type::Bool, Some(Literal::Bool(false))));
        out
    }
}

struct JunkGen<'a> {
    names: &'a JunkNames,
    formats: &'a [String],
    next_label: usize,
}

impl JunkGen<'_> {
    fn int(&self, rng: &mut impl Rng) -> String {
        self.names.ints.choose(rng).unwrap().clone()
    }

    fn bool(&self, rng: &mut impl Rng) -> String {
        self.names.bools.choose(rng).unwrap().clone()
    }

    fn int_operand(&self, rng: &mut impl Rng) -> Operand {
        if rng.gen_bool(0.5) {
            Operand::Var(self.int(rng))
        } else {
            Operand::Lit(Literal::Int(rng.gen_range(1..=9)))
        }
    }

    fn op(&mut self, code: Opcode, rng: &mut impl Rng) -> Op {
        let live = Predicate::Var(self.names.preds.choose(rng).unwrap().clone());
        let never = Predicate::Var(self.names.never.clone());
        let mut label = None;
        let (predicate, kind) = match code {
            Opcode::Mov => (
                live,
                OpKind::Mov {
                    dst: self.int(rng),
                    src: self.int_operand(rng),
                },
            ),
            Opcode::Neg | Opcode::BitNot => (
                live,
                OpKind::Unary {
                    op: code.as_unary().unwrap(),
                    dst: self.int(rng),
                    src: Operand::Var(self.int(rng)),
                },
            ),
            Opcode::Not => (
                live,
                OpKind::Unary {
                    op: code.as_unary().unwrap(),
                    dst: self.bool(rng),
                    src: Operand::Var(self.bool(rng)),
                },
            ),
            Opcode::Div | Opcode::Mod => (
                live,
                OpKind::Binary {
                    op: code.as_binary().unwrap(),
                    dst: self.int(rng),
                    lhs: Operand::Var(self.int(rng)),
                    rhs: Operand::Lit(Literal::Int(rng.gen_range(1..=9))),
                },
            ),
            Opcode::Add | Opcode::Sub | Opcode::Mul => (
                live,
                OpKind::Binary {
                    op: code.as_binary().unwrap(),
                    dst: self.int(rng),
                    lhs: Operand::Var(self.int(rng)),
                    rhs: self.int_operand(rng),
                },
            ),
            Opcode::And | Opcode::Or => (
                live,
                OpKind::Binary {
                    op: code.as_binary().unwrap(),
                    dst: self.bool(rng),
                    lhs: Operand::Var(self.bool(rng)),
                    rhs: Operand::Var(self.bool(rng)),
                },
            ),
            Opcode::Lt | Opcode::Le | Opcode::Gt | Opcode::Ge | Opcode::Eq | Opcode::Ne => (
                live,
                OpKind::Binary {
                    op: code.as_binary().unwrap(),
                    dst: self.bool(rng),
                    lhs: Operand::Var(self.int(rng)),
                    rhs: self.int_operand(rng),
                },
            ),
            Opcode::Print => (
                never,
                OpKind::Print {
                    format: self.formats.choose(rng).cloned().unwrap_or_default(),
                    src: Operand::Var(self.int(rng)),
                },
            ),
            Opcode::Goto => {
                let l = format!("{}{}", self.names.label_prefix, self.next_label);
                self.next_label += 1;
                label = Some(l.clone());
                (
                    never,
                    OpKind::Goto {
                        target: l,
                        reset_vars: vec![],
                        reset_consts: vec![],
                    },
                )
            }
        };
        Op {
            label,
            predicate,
            kind,
            junk: true,
        }
    }
}

/// Adds the predicates of junk ops inside each backward-jump region to that
/// jump's reset list, so junk repeats along with the loop body.
fn reset_junk_in_loops(ops: &mut [Op]) {
    for g in 0..ops.len() {
        if ops[g].junk {
            continue;
        }
        let OpKind::Goto { target, .. } = &ops[g].kind else {
            continue;
        };
        let Some(start) = ops.iter().position(|o| o.label.as_deref() == Some(target.as_str())) else {
            continue;
        };
        if start > g {
            continue;
        }
        let needed: BTreeSet<Predicate> = ops[start..g]
            .iter()
            .filter(|o| o.junk)
            .map(|o| o.predicate.clone())
            .collect();
        if let OpKind::Goto { reset_vars, .. } = &mut ops[g].kind {
            for p in needed {
                if !reset_vars.contains(&p) {
                    reset_vars.push(p);
                }
            }
        }
    }
}

fn pad(p: &LinearProgram, alphabet: &[Opcode], m: usize, formats: &[String], rng: &mut ChaCha8Rng) -> LinearProgram {
    let hist = OpcodeHistogram::of(p);
    let names = JunkNames::for_program(p);
    let mut gen = JunkGen {
        names: &names,
        formats,
        next_label: 0,
    };
    let mut junk: Vec<Op> = alphabet
        .iter()
        .flat_map(|&o| std::iter::repeat_n(o, m - hist.count(o)))
        .collect::<Vec<_>>()
        .into_iter()
        .map(|o| gen.op(o, rng))
        .collect();
    if junk.is_empty() {
        return p.clone();
    }
    junk.shuffle(rng);

    let len = p.ops.len() + junk.len();
    let mut real_at = vec![false; len];
    let mut picks = index::sample(rng, len, p.ops.len()).into_vec();
    picks.sort_unstable();
    for i in picks {
        real_at[i] = true;
    }
    let mut real = p.ops.iter().cloned();
    let mut junk = junk.into_iter();
    let mut ops: Vec<Op> = real_at
        .into_iter()
        .map(|r| if r { real.next() } else { junk.next() }.unwrap())
        .collect();
    reset_junk_in_loops(&mut ops);

    let mut declarations = p.declarations.clone();
    declarations.extend(names.declarations());
    LinearProgram {
        name: p.name.clone(),
        declarations,
        ops,
    }
}

pub(crate) fn formats_of(programs: &[LinearProgram]) -> Vec<String> {
    let set: BTreeSet<String> = programs
        .iter()
        .flat_map(|p| p.ops.iter())
        .filter_map(|o| match &o.kind {
            OpKind::Print { format, .. } => Some(format.clone()),
            _ => None,
        })
        .collect();
    set.into_iter().collect()
}

/// Target per-opcode count: the largest count of any opcode in any program,
/// raised by `junk_ratio` extra rounds.
fn target_count(programs: &[LinearProgram], alphabet: &[Opcode], junk_ratio: f64) -> usize {
    let base = programs
        .iter()
        .map(OpcodeHistogram::of)
        .flat_map(|h| alphabet.iter().map(move |&o| h.count(o)).collect::<Vec<_>>())
        .max()
        .unwrap_or(0);
    base + (base as f64 * junk_ratio.max(0.0)).ceil() as usize
}

/// Pads every program with junk so that each program's opcode histogram is
/// uniform over `alphabet` and all programs have equal length.
pub fn uniformize(
    programs: &[LinearProgram],
    alphabet: &[Opcode],
    junk_ratio: f64,
    junk_seed: u64,
) -> Result<Vec<LinearProgram>, CompileError> {
    if alphabet.is_empty() {
        return Err(CompileError::EmptyAlphabet);
    }
    for p in programs {
        if let Some(op) = p.ops.iter().map(|o| o.kind.opcode()).find(|o| !alphabet.contains(o)) {
            return Err(CompileError::OpcodeOutsideAlphabet {
                program: p.name.clone(),
                opcode: op,
            });
        }
    }
    let m = target_count(programs, alphabet, junk_ratio);
    let formats = formats_of(programs);
    let mut rng = ChaCha8Rng::seed_from_u64(junk_seed);
    Ok(programs
        .iter()
        .map(|p| pad(p, alphabet, m, &formats, &mut rng))
        .collect())
}

/// A program made only of junk, shaped like a uniformized real program.
pub fn junk_program(
    name: &str,
    alphabet: &[Opcode],
    per_opcode: usize,
    formats: &[String],
    seed: u64,
) -> LinearProgram {
    let empty = LinearProgram {
        name: name.to_string(),
        declarations: vec![],
        ops: vec![],
    };
    pad(&empty, alphabet, per_opcode, formats, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::lower_program;
    use crate::lang::parse_program;
    use crate::samples;

    fn lowered(name: &str, src: &str) -> LinearProgram {
        lower_program(&parse_program(name, src).unwrap()).unwrap()
    }

    #[test]
    fn pads_to_max_count() {
        let p = lowered("p", "int x\ntrue : x = x + 1\ntrue : x = x * 2\ntrue : x = x + 3\n");
        let out = uniformize(&[p], &[Opcode::Add, Opcode::Mul, Opcode::Div], 0.0, 1).unwrap();
        let h = OpcodeHistogram::of(&out[0]);
        assert_eq!(h.count(Opcode::Add), 2);
        assert_eq!(h.count(Opcode::Mul), 2);
        assert_eq!(h.count(Opcode::Div), 2);
    }

    #[test]
    fn uniform_program_unchanged() {
        let p = lowered("p", "int x\ntrue : x = x + 1\ntrue : x = x * 2\n");
        let out = uniformize(std::slice::from_ref(&p), &[Opcode::Add, Opcode::Mul], 0.0, 1).unwrap();
        assert_eq!(out[0], p);
    }

    #[test]
    fn division_appears_in_program_without_division() {
        let ps = [lowered("p1", samples::SUM_TO_TEN), lowered("p2", &samples::average_source(4))];
        assert_eq!(OpcodeHistogram::of(&ps[0]).count(Opcode::Div), 0);
        let alphabet = used_alphabet(&ps);
        let out = uniformize(&ps, &alphabet, 0.0, 2).unwrap();
        assert!(OpcodeHistogram::of(&out[0]).count(Opcode::Div) > 0);
        assert_eq!(out[0].len(), out[1].len());
        for p in &out {
            assert!(OpcodeHistogram::of(p).is_uniform_over(&alphabet));
        }
    }

    #[test]
    fn originals_keep_order() {
        let p = lowered("p1", samples::POWERS_OF_TWO);
        let out = uniformize(std::slice::from_ref(&p), &Opcode::ALL, 0.5, 3).unwrap();
        let real: Vec<&Op> = out[0].ops.iter().filter(|o| !o.junk).collect();
        let orig: Vec<&Op> = p.ops.iter().collect();
        assert_eq!(real.len(), orig.len());
        for (a, b) in real.iter().zip(&orig) {
            assert_eq!(a.kind.opcode(), b.kind.opcode());
            assert_eq!(a.predicate, b.predicate);
        }
    }

    #[test]
    fn junk_touches_only_junk_vars() {
        let p = lowered("p1", samples::SUM_TO_TEN);
        let user: HashSet<String> = p.declarations.iter().map(|d| d.name.clone()).collect();
        let out = uniformize(&[p], &Opcode::ALL, 0.0, 4).unwrap();
        for op in out[0].ops.iter().filter(|o| o.junk) {
            if let Some(d) = op.kind.dst() {
                assert!(!user.contains(d));
            }
        }
    }

    #[test]
    fn errors() {
        let p = lowered("p", "int x\ntrue : x = x + 1\n");
        assert_eq!(uniformize(std::slice::from_ref(&p), &[], 0.0, 0), Err(CompileError::EmptyAlphabet));
        assert!(matches!(
            uniformize(&[p], &[Opcode::Mul], 0.0, 0),
            Err(CompileError::OpcodeOutsideAlphabet { .. })
        ));
    }

    #[test]
    fn junk_program_is_uniform() {
        let p = junk_program("j", &[Opcode::Add, Opcode::Goto, Opcode::Print], 3, &["s".into()], 0);
        assert!(OpcodeHistogram::of(&p).is_uniform_over(&[Opcode::Add, Opcode::Goto, Opcode::Print]));
        assert!(p.ops.iter().all(|o| o.junk));
    }
}
