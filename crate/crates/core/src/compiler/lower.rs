use std::collections::HashSet;

use crate::ir::{LinearProgram, Op, OpKind, Operand};
use crate::lang::{Declaration, Expr, Instruction, Program, Span, Type, UnaryOp};

use super::CompileError;

struct Temps {
    taken: HashSet<String>,
    ints: Vec<String>,
    bools: Vec<String>,
    next_int: usize,
    next_bool: usize,
}

impl Temps {
    fn take(&mut self, ty: Type) -> String {
        let (pool, next, tag) = match ty {
            Type::Bool => (&mut self.bools, &mut self.next_bool, 'b'),
            _ => (&mut self.ints, &mut self.next_int, 'i'),
        };
        if let Some(name) = pool.get(*next) {
            *next += 1;
            return name.clone();
        }
        let mut n = pool.len();
        let name = loop {
            let candidate = format!("__t{tag}{n}");
            if self.taken.insert(candidate.clone()) {
                break candidate;
            }
            n += 1;
        };
        pool.push(name.clone());
        *next += 1;
        name
    }

    fn release_all(&mut self) {
        self.next_int = 0;
        self.next_bool = 0;
    }
}

fn result_type(e: &Expr) -> Type {
    match e {
        Expr::Unary(UnaryOp::Not, _) => Type::Bool,
        Expr::Binary(op, ..) if op.yields_bool() => Type::Bool,
        _ => Type::Int,
    }
}

fn atom(e: &Expr) -> Option<Operand> {
    match e {
        Expr::Lit(l) => Some(Operand::Lit(*l)),
        Expr::Var(v) => Some(Operand::Var(v.clone())),
        _ => None,
    }
}

struct Lowerer<'a> {
    program: &'a Program,
    temps: Temps,
    ops: Vec<Op>,
}

impl Lowerer<'_> {
    fn check_var(&self, v: &str) -> Result<(), CompileError> {
        match self.program.declaration(v) {
            Some(d) if d.ty == Type::Float => Err(CompileError::UnsupportedFloat {
                program: self.program.name.clone(),
                variable: v.to_string(),
            }),
            _ => Ok(()),
        }
    }

    fn operand(&mut self, e: &Expr, template: &Op) -> Result<Operand, CompileError> {
        if let Some(a) = atom(e) {
            if let Operand::Var(v) = &a {
                self.check_var(v)?;
            }
            return Ok(a);
        }
        let tmp = self.temps.take(result_type(e));
        self.compute(&tmp, e, template)?;
        Ok(Operand::Var(tmp))
    }

    /// Emits ops computing `e` into `dst`.
    fn compute(&mut self, dst: &str, e: &Expr, template: &Op) -> Result<(), CompileError> {
        let kind = match e {
            Expr::Lit(_) | Expr::Var(_) => OpKind::Mov {
                dst: dst.into(),
                src: self.operand(e, template)?,
            },
            Expr::Unary(op, inner) => OpKind::Unary {
                op: *op,
                dst: dst.into(),
                src: self.operand(inner, template)?,
            },
            Expr::Binary(op, l, r) => {
                let lhs = self.operand(l, template)?;
                let rhs = self.operand(r, template)?;
                OpKind::Binary {
                    op: *op,
                    dst: dst.into(),
                    lhs,
                    rhs,
                }
            }
        };
        self.push(template, kind);
        Ok(())
    }

    fn push(&mut self, template: &Op, kind: OpKind) {
        // the first op emitted for a statement carries its label
        let first = self.ops.last().map(|o| o.label.is_some()) != Some(true)
            && template.label.is_some()
            && !self.ops.iter().rev().any(|o| o.label == template.label);
        self.ops.push(Op {
            label: if first { template.label.clone() } else { None },
            predicate: template.predicate.clone(),
            kind,
            junk: false,
        });
    }
}

/// Flattens every statement into single-operator operations. Compound
/// expressions are split through per-statement temporaries that share the
/// statement's predicate.
pub fn lower_program(p: &Program) -> Result<LinearProgram, CompileError> {
    let mut lw = Lowerer {
        program: p,
        temps: Temps {
            taken: p.declarations.iter().map(|d| d.name.clone()).collect(),
            ints: Vec::new(),
            bools: Vec::new(),
            next_int: 0,
            next_bool: 0,
        },
        ops: Vec::new(),
    };
    for s in &p.statements {
        let template = Op {
            label: s.label.clone(),
            predicate: s.predicate.clone(),
            kind: OpKind::Goto {
                target: String::new(),
                reset_vars: vec![],
                reset_consts: vec![],
            },
            junk: false,
        };
        lw.temps.release_all();
        match &s.instruction {
            Instruction::Assign { target, value } => {
                lw.check_var(target)?;
                lw.compute(target, value, &template)?;
            }
            Instruction::Print { format, value } => {
                let src = lw.operand(value, &template)?;
                lw.push(
                    &template,
                    OpKind::Print {
                        format: format.clone(),
                        src,
                    },
                );
            }
            Instruction::Goto {
                target,
                reset_vars,
                reset_consts,
            } => lw.push(
                &template,
                OpKind::Goto {
                    target: target.clone(),
                    reset_vars: reset_vars.clone(),
                    reset_consts: reset_consts.clone(),
                },
            ),
        }
    }

    let mut declarations = p.declarations.clone();
    let temp_decl = |name: &String, ty| Declaration {
        name: name.clone(),
        ty,
        init: None,
        span: Span::default(),
    };
    declarations.extend(lw.temps.ints.iter().map(|n| temp_decl(n, Type::Int)));
    declarations.extend(lw.temps.bools.iter().map(|n| temp_decl(n, Type::Bool)));
    Ok(LinearProgram {
        name: p.name.clone(),
        declarations,
        ops: lw.ops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Opcode;
    use crate::lang::parse_program;
    use crate::samples;

    #[test]
    fn compound_expression_uses_temporaries() {
        let p = parse_program("e", "int x\nint y\n$l true : x = x + y * 2\n").unwrap();
        let lp = lower_program(&p).unwrap();
        let codes: Vec<Opcode> = lp.ops.iter().map(|o| o.kind.opcode()).collect();
        assert_eq!(codes, vec![Opcode::Mul, Opcode::Add]);
        assert_eq!(lp.ops[0].label.as_deref(), Some("l"));
        assert_eq!(lp.ops[1].label, None);
        assert_eq!(lp.ops[1].kind.dst(), Some("x"));
        assert!(lp.declarations.iter().any(|d| d.name == "__ti0"));
    }

    #[test]
    fn temporaries_avoid_user_names() {
        let p = parse_program("e", "int __ti0\nint x\ntrue : x = (x + 1) * 2\n").unwrap();
        let lp = lower_program(&p).unwrap();
        assert_eq!(lp.ops[0].kind.dst(), Some("__ti1"));
    }

    #[test]
    fn print_of_atom_is_single_op() {
        let p = parse_program("p1", samples::SUM_TO_TEN).unwrap();
        let lp = lower_program(&p).unwrap();
        assert_eq!(lp.len(), p.statements.len());
    }

    #[test]
    fn floats_rejected() {
        let p = parse_program("f", "float f\ntrue : f = 1\n").unwrap();
        assert!(matches!(lower_program(&p), Err(CompileError::UnsupportedFloat { .. })));
    }
}
