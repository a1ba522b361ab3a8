//! Abstract syntax of the calculus: expressions, commands, class tables,
//! programs, and guard annotations.
//!
//! Sequencing is kept right-associated everywhere: the first component of a
//! `Seq` is never itself a `Seq`. The parser produces bodies in this normal
//! form (with a trailing `Skip` terminator) and reduction preserves it.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::semantics::Location;

/// Identifier for variables, fields, methods, and classes.
pub type Name = String;

/// Variable bound to the receiver in every activation record.
pub const THIS: &str = "this";
/// Guard-only variable denoting the protected entity's current value.
pub const ITSELF: &str = "itself";
/// Class name of the implicit root class (no methods, no parent).
pub const OBJECT_CLASS: &str = "Object";
/// Class name of the distinguished entry class introduced by `main { .. }`.
pub const MAIN_CLASS: &str = "main";
/// Method name of the entry point inside [`MAIN_CLASS`].
pub const MAIN_METHOD: &str = "main";

/// Words that cannot be used as identifiers in program source.
pub const RESERVED_WORDS: &[&str] = &[
    "this", "itself", "sync", "spawn", "decl", "skip", "new", "class", "method", "extends",
    "main",
];

/// Expressions: variables, field accesses, and object creation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    /// A variable read (`x`, `this`, or — in guards only — `itself`).
    Var(Name),
    /// Field access `E.f`.
    Field(Box<Expr>, Name),
    /// Object creation `new K{f1 = E1, ..., fn = En}` with ordered initializers.
    New(Name, Vec<(Name, Expr)>),
}

impl Expr {
    pub fn var(name: &str) -> Self {
        Expr::Var(name.to_owned())
    }

    pub fn field(recv: Expr, name: &str) -> Self {
        Expr::Field(Box::new(recv), name.to_owned())
    }

    /// All variable names occurring in the expression (field names excluded).
    pub fn free_vars(&self, out: &mut BTreeSet<Name>) {
        match self {
            Expr::Var(x) => {
                out.insert(x.clone());
            }
            Expr::Field(recv, _) => recv.free_vars(out),
            Expr::New(_, inits) => {
                for (_, e) in inits {
                    e.free_vars(out);
                }
            }
        }
    }

    /// All field names occurring anywhere in the expression.
    pub fn field_names(&self, out: &mut BTreeSet<Name>) {
        match self {
            Expr::Var(_) => {}
            Expr::Field(recv, f) => {
                out.insert(f.clone());
                recv.field_names(out);
            }
            Expr::New(_, inits) => {
                for (f, e) in inits {
                    out.insert(f.clone());
                    e.field_names(out);
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(x) => w.write_str(x),
            Expr::Field(recv, f) => write!(w, "{recv}.{f}"),
            Expr::New(class, inits) => {
                write!(w, "new {class}{{")?;
                for (i, (f, e)) in inits.iter().enumerate() {
                    if i > 0 {
                        w.write_str(", ")?;
                    }
                    write!(w, "{f} = {e}")?;
                }
                w.write_str("}")
            }
        }
    }
}

/// Commands. `Lock` and `Unlock` never appear in parsed source; they are
/// introduced by the reduction of `sync`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Command {
    /// `decl x = E;` — declares a fresh local.
    Decl(Name, Expr),
    /// `x := E;` — assigns an already-declared local.
    AssignVar(Name, Expr),
    /// `x.f := E;` — writes field `f` of the object held in variable `x`.
    AssignField(Name, Name, Expr),
    /// Sequential composition.
    Seq(Box<Command>, Box<Command>),
    /// `skip;`
    Skip,
    /// `E.m();` — dynamically dispatched call.
    Call(Expr, Name),
    /// `spawn E.m();` — like a call, on a fresh thread with no held locks.
    Spawn(Expr, Name),
    /// `sync (E) { C }` — reentrant monitor on the value of `E`.
    Sync(Expr, Box<Command>),
    /// Runtime-only: acquire one level of the monitor at a location.
    Lock(Location),
    /// Runtime-only: release one level of the monitor at a location.
    Unlock(Location),
}

impl Command {
    pub fn seq(first: Command, second: Command) -> Self {
        Command::Seq(Box::new(first), Box::new(second))
    }

    /// Folds a command list into a right-associated `Seq` chain followed by
    /// `tail`. An empty list yields `tail` itself.
    pub fn seq_all(cmds: Vec<Command>, tail: Command) -> Command {
        cmds.into_iter()
            .rev()
            .fold(tail, |acc, c| Command::seq(c, acc))
    }

    /// Rebuilds `self`'s sequence spine right-associated with `tail`
    /// appended. Used by the `sync` reduction to splice
    /// `lock(l); C; unlock(l)` into the surrounding continuation without
    /// creating a left-nested `Seq`.
    pub fn seq_append(self, tail: Command) -> Command {
        match self {
            Command::Seq(first, rest) => Command::seq(*first, rest.seq_append(tail)),
            atom => Command::seq(atom, tail),
        }
    }

    /// The first atomic command of the sequence spine.
    pub fn head(&self) -> &Command {
        match self {
            Command::Seq(first, _) => first.head(),
            c => c,
        }
    }

    /// True if no `Seq` has a `Seq` as its first component.
    pub fn is_right_associated(&self) -> bool {
        match self {
            Command::Seq(first, rest) => {
                !matches!(**first, Command::Seq(..)) && rest.is_right_associated()
            }
            _ => true,
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Decl(x, e) => write!(w, "decl {x} = {e};"),
            Command::AssignVar(x, e) => write!(w, "{x} := {e};"),
            Command::AssignField(x, f, e) => write!(w, "{x}.{f} := {e};"),
            Command::Seq(a, b) => write!(w, "{a} {b}"),
            Command::Skip => w.write_str("skip;"),
            Command::Call(e, m) => write!(w, "{e}.{m}();"),
            Command::Spawn(e, m) => write!(w, "spawn {e}.{m}();"),
            Command::Sync(e, body) => write!(w, "sync ({e}) {{ {body} }}"),
            Command::Lock(l) => write!(w, "lock({l});"),
            Command::Unlock(l) => write!(w, "unlock({l});"),
        }
    }
}

/// Renders the first atomic command of a continuation, for trace output.
/// `sync` bodies are elided.
pub fn head_display(cont: &Command) -> String {
    use alloc::format;
    match cont.head() {
        Command::Sync(e, _) => format!("sync ({e}) {{ ... }}"),
        Command::Skip => "skip;".to_owned(),
        other => format!("{other}"),
    }
}

/// A class: optional parent (absent only for `Object`) and a method table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDef {
    pub parent: Option<Name>,
    pub methods: BTreeMap<Name, Command>,
}

/// A program: a finite class table plus the distinguished entry class.
///
/// The entry block `main { .. }` is stored as a class named [`MAIN_CLASS`]
/// with a single method [`MAIN_METHOD`]; `Object` is always present and
/// empty. Field names are global: they are not declared by any class and are
/// checked dynamically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub classes: BTreeMap<Name, ClassDef>,
}

impl Program {
    /// An empty program skeleton containing only `Object`.
    pub fn new() -> Self {
        let mut classes = BTreeMap::new();
        classes.insert(
            OBJECT_CLASS.to_owned(),
            ClassDef {
                parent: None,
                methods: BTreeMap::new(),
            },
        );
        Program { classes }
    }

    /// The body of `main`, when the program has an entry block.
    pub fn main_body(&self) -> Option<&Command> {
        self.classes.get(MAIN_CLASS)?.methods.get(MAIN_METHOD)
    }

    /// The superclass chain starting at `class` (inclusive). Stops if a
    /// parent is missing from the table or a cycle is detected.
    pub fn superclass_chain<'a>(&'a self, class: &'a str) -> Vec<&'a str> {
        let mut chain = Vec::new();
        let mut seen = BTreeSet::new();
        let mut cur = Some(class);
        while let Some(name) = cur {
            if !seen.insert(name) {
                break;
            }
            chain.push(name);
            cur = self
                .classes
                .get(name)
                .and_then(|c| c.parent.as_deref());
        }
        chain
    }

    /// Dynamic method lookup: the nearest class in the superclass chain of
    /// `class` (inclusive) that implements `method`.
    pub fn lookup<'a>(&'a self, class: &'a str, method: &str) -> Option<&'a str> {
        self.superclass_chain(class)
            .into_iter()
            .find(|k| self.classes.get(*k).is_some_and(|c| c.methods.contains_key(method)))
    }

    /// Body of `method` as found by dynamic lookup from `class`.
    pub fn method_body<'a>(&'a self, class: &'a str, method: &str) -> Option<(&'a str, &'a Command)> {
        let owner = self.lookup(class, method)?;
        let body = self.classes.get(owner)?.methods.get(method)?;
        Some((owner, body))
    }

    /// Every field name appearing syntactically anywhere in the program.
    pub fn field_names(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        for class in self.classes.values() {
            for body in class.methods.values() {
                collect_field_names(body, &mut out);
            }
        }
        out
    }
}

impl Default for Program {
    fn default() -> Self {
        Program::new()
    }
}

fn collect_field_names(c: &Command, out: &mut BTreeSet<Name>) {
    match c {
        Command::Decl(_, e) | Command::AssignVar(_, e) => e.field_names(out),
        Command::AssignField(_, f, e) => {
            out.insert(f.clone());
            e.field_names(out);
        }
        Command::Seq(a, b) => {
            collect_field_names(a, out);
            collect_field_names(b, out);
        }
        Command::Skip | Command::Lock(_) | Command::Unlock(_) => {}
        Command::Call(e, _) | Command::Spawn(e, _) => e.field_names(out),
        Command::Sync(e, body) => {
            e.field_names(out);
            collect_field_names(body, out);
        }
    }
}

impl fmt::Display for Program {
    /// Canonical source rendering; reparsing it yields a structurally
    /// identical program.
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, class) in &self.classes {
            if name == OBJECT_CLASS || name == MAIN_CLASS {
                continue;
            }
            match class.parent.as_deref() {
                Some(OBJECT_CLASS) | None => writeln!(w, "class {name} {{")?,
                Some(parent) => writeln!(w, "class {name} extends {parent} {{")?,
            }
            for (method, body) in &class.methods {
                writeln!(w, "  method {method}() {{")?;
                write_body(w, body, "    ")?;
                writeln!(w, "  }}")?;
            }
            writeln!(w, "}}")?;
        }
        if let Some(body) = self.main_body() {
            writeln!(w, "main {{")?;
            write_body(w, body, "  ")?;
            writeln!(w, "}}")?;
        }
        Ok(())
    }
}

/// Writes the commands of a body, omitting the trailing `Skip` terminator
/// that the parser appends.
fn write_body(w: &mut fmt::Formatter<'_>, body: &Command, indent: &str) -> fmt::Result {
    let mut cmds = Vec::new();
    flatten(body, &mut cmds);
    if let Some(Command::Skip) = cmds.last() {
        cmds.pop();
    }
    for c in cmds {
        write_command(w, c, indent)?;
    }
    Ok(())
}

fn flatten<'a>(c: &'a Command, out: &mut Vec<&'a Command>) {
    match c {
        Command::Seq(a, b) => {
            flatten(a, out);
            flatten(b, out);
        }
        other => out.push(other),
    }
}

fn write_command(w: &mut fmt::Formatter<'_>, c: &Command, indent: &str) -> fmt::Result {
    match c {
        Command::Sync(e, body) => {
            writeln!(w, "{indent}sync ({e}) {{")?;
            let mut cmds = Vec::new();
            flatten(body, &mut cmds);
            let inner: String = alloc::format!("{indent}  ");
            for c in cmds {
                write_command(w, c, &inner)?;
            }
            writeln!(w, "{indent}}}")
        }
        other => writeln!(w, "{indent}{other}"),
    }
}

/// Which reading of a `guard` annotation is intended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protection {
    /// Lock required whenever the annotated *name* is accessed.
    Name,
    /// Lock required whenever a location ever bound to the annotated entity
    /// is dereferenced.
    Value,
}

impl fmt::Display for Protection {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        w.write_str(match self {
            Protection::Name => "name",
            Protection::Value => "value",
        })
    }
}

/// What a guard annotation protects.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AnnotationTarget {
    /// A field name (fields are global to the program).
    Field(Name),
    /// A local variable of a specific method implementation.
    Var {
        class: Name,
        method: Name,
        var: Name,
    },
}

impl fmt::Display for AnnotationTarget {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotationTarget::Field(f) => write!(w, "field {f}"),
            AnnotationTarget::Var { class, method, var } => {
                write!(w, "var {class}.{method}.{var}")
            }
        }
    }
}

/// One `guard` line from an annotation file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub protection: Protection,
    pub target: AnnotationTarget,
    pub guard: Expr,
}

impl fmt::Display for Annotation {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(w, "guard {} {} by {}", self.protection, self.target, self.guard)
    }
}
