use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::diag::{Diagnostic, DiagnosticKind};

/// Checks name resolution and label invariants. Returns an empty list for a
/// well-formed program.
pub fn validate(p: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut types: HashMap<&str, Type> = HashMap::new();
    for d in &p.declarations {
        if types.insert(&d.name, d.ty).is_some() {
            diags.push(Diagnostic::new(
                DiagnosticKind::DuplicateDeclaration,
                d.span,
                format!("variable `{}` declared more than once", d.name),
            ));
        }
    }

    let mut labels = HashSet::new();
    for s in &p.statements {
        if let Some(l) = &s.label {
            if !labels.insert(l.as_str()) {
                diags.push(Diagnostic::new(
                    DiagnosticKind::DuplicateLabel,
                    s.span,
                    format!("label `${l}` defined more than once"),
                ));
            }
        }
    }

    let check_pred = |pred: &Predicate, span: Span, diags: &mut Vec<Diagnostic>| {
        if let Predicate::Var(v) = pred {
            match types.get(v.as_str()) {
                None => diags.push(undeclared(v, span)),
                Some(Type::Bool) => {}
                Some(ty) => diags.push(Diagnostic::new(
                    DiagnosticKind::NonBooleanPredicate,
                    span,
                    format!("predicate `{v}` has type {ty}, expected bool"),
                )),
            }
        }
    };

    for s in &p.statements {
        check_pred(&s.predicate, s.span, &mut diags);
        let check_expr = |e: &Expr, diags: &mut Vec<Diagnostic>| {
            e.for_each_var(&mut |v| {
                if !types.contains_key(v) {
                    diags.push(undeclared(v, s.span));
                }
            })
        };
        match &s.instruction {
            Instruction::Assign { target, value } => {
                if !types.contains_key(target.as_str()) {
                    diags.push(undeclared(target, s.span));
                }
                check_expr(value, &mut diags);
            }
            Instruction::Print { value, .. } => check_expr(value, &mut diags),
            Instruction::Goto { target, .. } => {
                if !labels.contains(target.as_str()) {
                    diags.push(Diagnostic::new(
                        DiagnosticKind::UnknownLabel,
                        s.span,
                        format!("goto target `${target}` is not defined"),
                    ));
                }
                for r in s.instruction.resets() {
                    check_pred(r, s.span, &mut diags);
                }
            }
        }
    }
    diags
}

fn undeclared(name: &str, span: Span) -> Diagnostic {
    Diagnostic::new(
        DiagnosticKind::UndeclaredVariable,
        span,
        format!("use of undeclared variable `{name}`"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_unchecked;
    use crate::samples;

    fn kinds(src: &str) -> Vec<DiagnosticKind> {
        validate(&parse_unchecked("t", src).unwrap())
            .into_iter()
            .map(|d| d.kind)
            .collect()
    }

    #[test]
    fn sample_programs_are_clean() {
        for (name, src) in [("p1", samples::SUM_TO_TEN), ("p2", samples::POWERS_OF_TWO)] {
            assert!(validate(&parse_unchecked(name, src).unwrap()).is_empty());
        }
    }

    #[test]
    fn missing_goto_label() {
        assert_eq!(
            kinds("bool c\nc : goto($nowhere, [], [])"),
            vec![DiagnosticKind::UnknownLabel]
        );
    }

    #[test]
    fn undeclared_variable() {
        assert_eq!(
            kinds("int i\ntrue : i = x_9 + 1"),
            vec![DiagnosticKind::UndeclaredVariable]
        );
    }

    #[test]
    fn duplicates_and_bad_predicates() {
        assert_eq!(
            kinds("int i\nint i\ni : i = 1"),
            vec![
                DiagnosticKind::DuplicateDeclaration,
                DiagnosticKind::NonBooleanPredicate
            ]
        );
        assert_eq!(
            kinds("bool c\n$a c : c = false\n$a c : c = true"),
            vec![DiagnosticKind::DuplicateLabel]
        );
    }
}
