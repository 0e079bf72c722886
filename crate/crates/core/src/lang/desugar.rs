//! Lowering of structured `if`/`else` into predicated statements.
//!
//! Every branch condition is materialized into a boolean temporary computed
//! before any branch body runs, so bodies that modify the tested variables
//! do not change which arm was selected.

use std::collections::HashSet;

use super::ast::*;
use super::diag::ParseError;
use super::validate::validate;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DesugarError {
    #[error("desugaring produced an invalid program: {0}")]
    Internal(ParseError),
}

struct Ctx {
    taken: HashSet<String>,
    next: usize,
    decls: Vec<Declaration>,
    out: Vec<Statement>,
    /// Statements synthesized by this pass, by output index.
    generated: HashSet<usize>,
}

impl Ctx {
    fn fresh(&mut self) -> String {
        loop {
            let name = format!("__g{}", self.next);
            self.next += 1;
            if self.taken.insert(name.clone()) {
                self.decls.push(Declaration {
                    name: name.clone(),
                    ty: Type::Bool,
                    init: None,
                    span: Span::default(),
                });
                return name;
            }
        }
    }

    fn emit(&mut self, s: Statement, generated: bool) {
        if generated {
            self.generated.insert(self.out.len());
        }
        self.out.push(s);
    }

    /// `true : t = guard`, returning `t`.
    fn materialize(&mut self, guard: Expr, label: &mut Option<String>) -> String {
        let t = self.fresh();
        let mut s = Statement::new(
            Predicate::Const(true),
            Instruction::Assign {
                target: t.clone(),
                value: guard,
            },
        );
        s.label = label.take();
        self.emit(s, true);
        t
    }
}

fn conj(parts: Vec<Expr>) -> Expr {
    parts
        .into_iter()
        .reduce(|acc, e| Expr::binary(BinaryOp::And, acc, e))
        .expect("at least one conjunct")
}

fn assigned_in(items: &[Item], out: &mut HashSet<String>) {
    for item in items {
        match item {
            Item::Stmt(s) => {
                if let Instruction::Assign { target, .. } = &s.instruction {
                    out.insert(target.clone());
                }
            }
            Item::If {
                arms, otherwise, ..
            } => {
                for (_, body) in arms {
                    assigned_in(body, out);
                }
                if let Some(body) = otherwise {
                    assigned_in(body, out);
                }
            }
        }
    }
}

fn lower(items: &[Item], enclosing: Option<&str>, ctx: &mut Ctx) {
    for item in items {
        match item {
            Item::Stmt(s) => {
                let mut label = s.label.clone();
                let predicate = match (enclosing, &s.predicate) {
                    (None, p) => p.clone(),
                    (Some(e), Predicate::Const(true)) => Predicate::Var(e.to_string()),
                    (Some(_), Predicate::Const(false)) => Predicate::Const(false),
                    (Some(e), Predicate::Var(v)) => {
                        let guard = Expr::binary(BinaryOp::And, Expr::var(e), Expr::var(v));
                        Predicate::Var(ctx.materialize(guard, &mut label))
                    }
                };
                ctx.emit(
                    Statement {
                        label,
                        predicate,
                        instruction: s.instruction.clone(),
                        span: s.span,
                    },
                    false,
                );
            }
            Item::If {
                arms, otherwise, ..
            } => {
                let mut written = HashSet::new();
                for (_, body) in arms {
                    assigned_in(body, &mut written);
                }
                if let Some(body) = otherwise {
                    assigned_in(body, &mut written);
                }

                let mut negated: Vec<Expr> = Vec::new();
                let mut guards = Vec::new();
                let mut no_label = None;
                for (cond, _) in arms {
                    let direct = match cond {
                        Expr::Var(v) if enclosing.is_none() && negated.is_empty() && !written.contains(v) => {
                            Some(v.clone())
                        }
                        _ => None,
                    };
                    let guard = match direct {
                        Some(v) => v,
                        None => {
                            let mut parts: Vec<Expr> = enclosing.map(Expr::var).into_iter().collect();
                            parts.extend(negated.iter().cloned());
                            parts.push(cond.clone());
                            ctx.materialize(conj(parts), &mut no_label)
                        }
                    };
                    guards.push(guard);
                    negated.push(Expr::not(cond.clone()));
                }
                let else_guard = otherwise.as_ref().map(|_| {
                    let mut parts: Vec<Expr> = enclosing.map(Expr::var).into_iter().collect();
                    parts.extend(negated);
                    ctx.materialize(conj(parts), &mut no_label)
                });

                for ((_, body), guard) in arms.iter().zip(&guards) {
                    lower(body, Some(guard), ctx);
                }
                if let (Some(body), Some(guard)) = (otherwise, else_guard) {
                    lower(body, Some(&guard), ctx);
                }
            }
        }
    }
}

/// Adds the predicates of synthesized statements that sit inside a loop body
/// to that loop's reset lists, so they re-run on every iteration.
fn reset_generated(statements: &mut [Statement], generated: &HashSet<usize>, guards: &HashSet<&str>) {
    let labels: Vec<Option<String>> = statements.iter().map(|s| s.label.clone()).collect();
    for g in 0..statements.len() {
        let Instruction::Goto { target, .. } = &statements[g].instruction else {
            continue;
        };
        let Some(start) = labels.iter().position(|l| l.as_deref() == Some(target.as_str())) else {
            continue;
        };
        if start > g {
            continue;
        }
        let mut needed: Vec<Predicate> = Vec::new();
        for i in start..=g {
            let uses_generated_guard =
                matches!(&statements[i].predicate, Predicate::Var(v) if guards.contains(v.as_str()));
            if generated.contains(&i) || uses_generated_guard {
                needed.push(statements[i].predicate.clone());
            }
        }
        if let Instruction::Goto {
            reset_vars,
            reset_consts,
            ..
        } = &mut statements[g].instruction
        {
            for p in needed {
                let list = if p.is_const() {
                    &mut *reset_consts
                } else {
                    &mut *reset_vars
                };
                if !list.contains(&p) {
                    list.push(p);
                }
            }
        }
    }
}

/// Translates a structured program into pure predicated form.
pub fn desugar_if(p: &StructuredProgram) -> Result<Program, DesugarError> {
    let mut ctx = Ctx {
        taken: p.declarations.iter().map(|d| d.name.clone()).collect(),
        next: 0,
        decls: Vec::new(),
        out: Vec::new(),
        generated: HashSet::new(),
    };
    lower(&p.items, None, &mut ctx);
    let Ctx {
        decls,
        mut out,
        generated,
        ..
    } = ctx;
    let guards: HashSet<&str> = decls.iter().map(|d| d.name.as_str()).collect();
    reset_generated(&mut out, &generated, &guards);

    let mut declarations = p.declarations.clone();
    declarations.extend(decls);
    let program = Program {
        name: p.name.clone(),
        declarations,
        statements: out,
    };
    let diags = validate(&program);
    if diags.is_empty() {
        Ok(program)
    } else {
        Err(DesugarError::Internal(ParseError { diagnostics: diags }))
    }
}
