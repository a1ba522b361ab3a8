//! Static validation of parsed programs: scope checks, class-table sanity,
//! and the absence of runtime-only commands.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::syntax::{Command, Expr, Name, Program, THIS};

/// One validation finding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A variable declared twice in the same body.
    DuplicateDeclaration {
        class: Name,
        method: Name,
        var: Name,
    },
    /// A body uses a variable other than `this` that is not declared before
    /// the use.
    FreeVariable {
        class: Name,
        method: Name,
        var: Name,
    },
    /// No `main { .. }` block.
    MissingMain,
    /// `lock`/`unlock` found in a parsed body (cannot come from the parser;
    /// guards against hand-built programs).
    RuntimeCommandInSource { class: Name, method: Name },
    /// `extends` names a class that does not exist.
    UnknownParent { class: Name, parent: Name },
    /// The subclass relation has a cycle through this class.
    CyclicInheritance { class: Name },
}

impl fmt::Display for Violation {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateDeclaration { class, method, var } => {
                write!(w, "{class}.{method}: variable `{var}` declared twice")
            }
            Violation::FreeVariable { class, method, var } => {
                write!(w, "{class}.{method}: use of undeclared variable `{var}`")
            }
            Violation::MissingMain => write!(w, "program has no main block"),
            Violation::RuntimeCommandInSource { class, method } => {
                write!(w, "{class}.{method}: lock/unlock cannot appear in source")
            }
            Violation::UnknownParent { class, parent } => {
                write!(w, "class `{class}` extends unknown class `{parent}`")
            }
            Violation::CyclicInheritance { class } => {
                write!(w, "class `{class}` participates in an inheritance cycle")
            }
        }
    }
}

/// All findings for a program; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return w.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(w)?;
            }
            write!(w, "{v}")?;
        }
        Ok(())
    }
}

/// Checks a parsed program. Report-valued: collects every violation instead
/// of stopping at the first.
pub fn validate_program(p: &Program) -> ValidationReport {
    let mut violations = Vec::new();

    if p.main_body().is_none() {
        violations.push(Violation::MissingMain);
    }

    for (class, def) in &p.classes {
        if let Some(parent) = &def.parent {
            if !p.classes.contains_key(parent) {
                violations.push(Violation::UnknownParent {
                    class: class.clone(),
                    parent: parent.clone(),
                });
            }
        }
        // superclass_chain stops on a repeat; a cycle shows up as a chain
        // whose last element has a parent inside the chain.
        let chain = p.superclass_chain(class);
        if let Some(last) = chain.last() {
            if let Some(parent) = p.classes.get(*last).and_then(|c| c.parent.as_deref()) {
                if chain.contains(&parent) {
                    violations.push(Violation::CyclicInheritance {
                        class: class.clone(),
                    });
                }
            }
        }
        for (method, body) in &def.methods {
            check_body(class, method, body, &mut violations);
        }
    }

    ValidationReport { violations }
}

fn check_body(class: &str, method: &str, body: &Command, violations: &mut Vec<Violation>) {
    let mut scope: BTreeSet<Name> = BTreeSet::from([THIS.into()]);
    let mut declared: BTreeSet<Name> = BTreeSet::new();
    walk(class, method, body, &mut scope, &mut declared, violations);
}

/// Linear scope walk. Declarations inside a sync block stay in scope until
/// the end of the body, mirroring the execution semantics where the
/// environment persists past the critical section.
fn walk(
    class: &str,
    method: &str,
    c: &Command,
    scope: &mut BTreeSet<Name>,
    declared: &mut BTreeSet<Name>,
    violations: &mut Vec<Violation>,
) {
    let use_var = |var: &Name, violations: &mut Vec<Violation>, scope: &BTreeSet<Name>| {
        if !scope.contains(var) {
            violations.push(Violation::FreeVariable {
                class: class.into(),
                method: method.into(),
                var: var.clone(),
            });
        }
    };
    match c {
        Command::Decl(x, e) => {
            check_expr(class, method, e, scope, violations);
            if !declared.insert(x.clone()) {
                violations.push(Violation::DuplicateDeclaration {
                    class: class.into(),
                    method: method.into(),
                    var: x.clone(),
                });
            }
            scope.insert(x.clone());
        }
        Command::AssignVar(x, e) => {
            use_var(x, violations, scope);
            check_expr(class, method, e, scope, violations);
        }
        Command::AssignField(x, _, e) => {
            use_var(x, violations, scope);
            check_expr(class, method, e, scope, violations);
        }
        Command::Seq(a, b) => {
            walk(class, method, a, scope, declared, violations);
            walk(class, method, b, scope, declared, violations);
        }
        Command::Skip => {}
        Command::Call(e, _) | Command::Spawn(e, _) => {
            check_expr(class, method, e, scope, violations);
        }
        Command::Sync(e, body) => {
            check_expr(class, method, e, scope, violations);
            walk(class, method, body, scope, declared, violations);
        }
        Command::Lock(_) | Command::Unlock(_) => {
            violations.push(Violation::RuntimeCommandInSource {
                class: class.into(),
                method: method.into(),
            });
        }
    }
}

fn check_expr(
    class: &str,
    method: &str,
    e: &Expr,
    scope: &BTreeSet<Name>,
    violations: &mut Vec<Violation>,
) {
    let mut vars = BTreeSet::new();
    e.free_vars(&mut vars);
    for v in vars {
        if !scope.contains(&v) {
            violations.push(Violation::FreeVariable {
                class: class.into(),
                method: method.into(),
                var: v,
            });
        }
    }
}

/// Human-readable one-line summary, used by the CLI for exit-2 messages.
pub fn summarize(report: &ValidationReport) -> String {
    if report.is_valid() {
        "valid".into()
    } else {
        format!("{} violation(s): {report}", report.violations.len())
    }
}

// Convenience for tests and the CLI.
/// Parses and validates in one call.
pub fn load_program(src: &str) -> Result<Program, String> {
    use alloc::string::ToString;
    let p = crate::parser::parse_program(src).map_err(|e| e.to_string())?;
    let report = validate_program(&p);
    if report.is_valid() {
        Ok(p)
    } else {
        Err(summarize(&report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    #[test]
    fn running_example_is_valid() {
        let src = r#"
            class K {
              method m() {
                decl z = this.x;
                decl w = new Object{};
                sync (z) { this.y := z.f; w := this.y; }
                w.g := new Object{};
              }
            }
            class K1 { }
            class K2 { }
            main { new K{x = new K1{f = new K2{g = new Object{}}}, y = new K2{g = new Object{}}}.m(); }
        "#;
        let p = parse_program(src).unwrap();
        assert!(validate_program(&p).is_valid());
    }

    #[test]
    fn duplicate_declaration_flagged() {
        let p = parse_program(
            "class K { method m() { decl z = this.x; decl z = this.y; } } main { }",
        )
        .unwrap();
        let report = validate_program(&p);
        assert!(report.violations.iter().any(|v| matches!(
            v,
            Violation::DuplicateDeclaration { var, .. } if var == "z"
        )));
    }

    #[test]
    fn duplicate_declaration_inside_sync_flagged() {
        let p = parse_program(
            "class K { method m() { decl z = this.x; sync (z) { decl z = this.y; } } } main { }",
        )
        .unwrap();
        assert!(!validate_program(&p).is_valid());
    }

    #[test]
    fn free_variable_flagged() {
        let p = parse_program("class K { method m() { y := this.x; } } main { }").unwrap();
        let report = validate_program(&p);
        assert!(report.violations.iter().any(|v| matches!(
            v,
            Violation::FreeVariable { var, .. } if var == "y"
        )));
    }

    #[test]
    fn decl_initializer_cannot_use_the_declared_variable() {
        let p = parse_program("main { decl x = x; skip; }").unwrap();
        let report = validate_program(&p);
        assert!(report.violations.iter().any(|v| matches!(
            v,
            Violation::FreeVariable { var, .. } if var == "x"
        )));
    }

    #[test]
    fn scope_extends_past_sync_blocks() {
        let p = parse_program(
            "class K { method m() { sync (this) { decl got = this.f; } got.g := got; } } main { }",
        )
        .unwrap();
        assert!(validate_program(&p).is_valid());
    }

    #[test]
    fn missing_main_flagged() {
        let p = parse_program("class K { }").unwrap();
        assert!(validate_program(&p)
            .violations
            .contains(&Violation::MissingMain));
    }

    #[test]
    fn unknown_parent_and_cycles_flagged() {
        let p = parse_program("class K extends Ghost { } main { }").unwrap();
        assert!(validate_program(&p)
            .violations
            .iter()
            .any(|v| matches!(v, Violation::UnknownParent { .. })));

        let mut p = parse_program("class A { } class B { } main { }").unwrap();
        p.classes.get_mut("A").unwrap().parent = Some("B".into());
        p.classes.get_mut("B").unwrap().parent = Some("A".into());
        assert!(validate_program(&p)
            .violations
            .iter()
            .any(|v| matches!(v, Violation::CyclicInheritance { .. })));
    }
}
