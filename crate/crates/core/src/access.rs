//! Per-step access extraction: which expressions a command syntactically
//! accesses, and which locations it dereferences.
//!
//! Accesses are purely syntactic and keep the exact container expression
//! used for each field (`z.f` accesses `z` and `z.f`). Dereferences are
//! semantic: reading or writing a field of the object stored at a location,
//! tagged read or write. The two are incomparable: `v.f := w.g.h` accesses
//! `v`, `v.f`, `w`, `w.g`, `w.g.h` but dereferences only the locations held
//! in `v`, `w`, and `w.g`.
//!
//! Only the first command of a sequence contributes: both functions describe
//! a single reduction step. Lock-counter traffic is not a dereference, so
//! `sync (E) { C }` contributes only what evaluating `E` needs. Field
//! initialization in `new` is not an access (a fresh object is visible only
//! to its creator).
//!
//! Dereference extraction evaluates container expressions on a scratch copy
//! of the memory; allocations made by those evaluations are discarded, so
//! observers never perturb execution.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::semantics::{eval_expr, Configuration, Environment, EvalError, Location, Memory};
use crate::syntax::{Command, Expr, Name, Program};

/// Read or write of a field at a location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccessMode {
    Read,
    Write,
}

impl fmt::Display for AccessMode {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        w.write_str(match self {
            AccessMode::Read => "read",
            AccessMode::Write => "write",
        })
    }
}

/// A dereference token: field `field` of the object at `loc` is read or
/// written. Write tokens arise only from field assignment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DerefToken {
    pub loc: Location,
    pub field: Name,
    pub mode: AccessMode,
}

impl fmt::Display for DerefToken {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        let arrow = match self.mode {
            AccessMode::Read => "->",
            AccessMode::Write => "<-",
        };
        write!(w, "{}.{}{arrow}", self.loc, self.field)
    }
}

/// Expressions accessed when one reduction step of `c` fires.
pub fn command_accesses(c: &Command) -> BTreeSet<Expr> {
    let mut out = BTreeSet::new();
    acc_command(c, &mut out);
    out
}

/// Expressions accessed by evaluating `e`.
pub fn expr_accesses(e: &Expr) -> BTreeSet<Expr> {
    let mut out = BTreeSet::new();
    acc_expr(e, &mut out);
    out
}

fn acc_command(c: &Command, out: &mut BTreeSet<Expr>) {
    match c {
        Command::Decl(_, e) => acc_expr(e, out),
        Command::AssignVar(x, e) => {
            acc_expr(&Expr::Var(x.clone()), out);
            acc_expr(e, out);
        }
        Command::AssignField(x, f, e) => {
            acc_expr(&Expr::field(Expr::Var(x.clone()), f), out);
            acc_expr(e, out);
        }
        Command::Seq(first, _) => acc_command(first, out),
        Command::Skip | Command::Lock(_) | Command::Unlock(_) => {}
        Command::Call(e, _) | Command::Spawn(e, _) => acc_expr(e, out),
        // The monitor reads the lock counter, not the guard's value: for a
        // variable guard nothing is accessed, for a field guard only the
        // container chain, for a creation guard its initializers.
        Command::Sync(guard, _) => match guard {
            Expr::Var(_) => {}
            Expr::Field(recv, _) => acc_expr(recv, out),
            e @ Expr::New(..) => acc_expr(e, out),
        },
    }
}

fn acc_expr(e: &Expr, out: &mut BTreeSet<Expr>) {
    match e {
        Expr::Var(_) => {
            out.insert(e.clone());
        }
        Expr::Field(recv, _) => {
            acc_expr(recv, out);
            out.insert(e.clone());
        }
        Expr::New(_, inits) => {
            for (_, init) in inits {
                acc_expr(init, out);
            }
        }
    }
}

/// True iff a step of `c` accesses the variable `x`.
pub fn accesses_variable(c: &Command, x: &str) -> bool {
    command_accesses(c)
        .iter()
        .any(|e| matches!(e, Expr::Var(v) if v == x))
}

/// The containers `E'` of every access `E'.f` of field `f` in one step of
/// `c`.
pub fn field_access_containers(c: &Command, f: &str) -> Vec<Expr> {
    command_accesses(c)
        .into_iter()
        .filter_map(|e| match e {
            Expr::Field(recv, g) if g == f => Some(*recv),
            _ => None,
        })
        .collect()
}

/// Locations dereferenced when one step of `c` fires under `env`/`mem`.
/// Container evaluations run on a scratch memory; `mem` is untouched.
pub fn command_derefs(
    p: &Program,
    c: &Command,
    env: &Environment,
    mem: &Memory,
    next_loc: u32,
) -> Result<BTreeSet<DerefToken>, EvalError> {
    let mut out = BTreeSet::new();
    let mut scratch = Scratch {
        program: p,
        env,
        memory: mem.clone(),
        next_loc,
    };
    deref_command(c, &mut scratch, &mut out)?;
    Ok(out)
}

/// Dereferences of evaluating the expression `e` alone.
pub fn expr_derefs(
    p: &Program,
    e: &Expr,
    env: &Environment,
    mem: &Memory,
    next_loc: u32,
) -> Result<BTreeSet<DerefToken>, EvalError> {
    let mut out = BTreeSet::new();
    let mut scratch = Scratch {
        program: p,
        env,
        memory: mem.clone(),
        next_loc,
    };
    deref_expr(e, &mut scratch, &mut out)?;
    Ok(out)
}

/// Projection of [`command_derefs`] on locations, dropping fields and modes.
pub fn deref_locations(
    p: &Program,
    c: &Command,
    env: &Environment,
    mem: &Memory,
    next_loc: u32,
) -> Result<BTreeSet<Location>, EvalError> {
    Ok(command_derefs(p, c, env, mem, next_loc)?
        .into_iter()
        .map(|t| t.loc)
        .collect())
}

/// Scratch evaluation context: evaluations may allocate here, and the whole
/// thing is dropped when extraction finishes.
struct Scratch<'a> {
    program: &'a Program,
    env: &'a Environment,
    memory: Memory,
    next_loc: u32,
}

impl Scratch<'_> {
    fn eval(&mut self, e: &Expr) -> Result<Location, EvalError> {
        let r = eval_expr(self.program, e, self.env, &self.memory, self.next_loc)?;
        self.memory = r.memory;
        self.next_loc = r.next_loc;
        Ok(r.loc)
    }
}

fn deref_command(
    c: &Command,
    scratch: &mut Scratch<'_>,
    out: &mut BTreeSet<DerefToken>,
) -> Result<(), EvalError> {
    match c {
        Command::Decl(_, e) | Command::AssignVar(_, e) => deref_expr(e, scratch, out),
        Command::AssignField(x, f, e) => {
            let target = scratch
                .env
                .get(x)
                .copied()
                .ok_or_else(|| EvalError::UndefinedVariable(x.clone()))?;
            out.insert(DerefToken {
                loc: target,
                field: f.clone(),
                mode: AccessMode::Write,
            });
            deref_expr(e, scratch, out)
        }
        Command::Seq(first, _) => deref_command(first, scratch, out),
        Command::Skip | Command::Lock(_) | Command::Unlock(_) => Ok(()),
        Command::Call(e, _) | Command::Spawn(e, _) => deref_expr(e, scratch, out),
        Command::Sync(guard, _) => deref_expr(guard, scratch, out),
    }
}

fn deref_expr(
    e: &Expr,
    scratch: &mut Scratch<'_>,
    out: &mut BTreeSet<DerefToken>,
) -> Result<(), EvalError> {
    match e {
        Expr::Var(_) => Ok(()),
        Expr::Field(recv, f) => {
            let container = scratch.eval(recv)?;
            out.insert(DerefToken {
                loc: container,
                field: f.clone(),
                mode: AccessMode::Read,
            });
            deref_expr(recv, scratch, out)
        }
        Expr::New(_, inits) => {
            for (_, init) in inits {
                deref_expr(init, scratch, out)?;
            }
            Ok(())
        }
    }
}

/// Everything the access model says about one reduction step: accesses and
/// dereferences of the firing thread's continuation against the pre-state,
/// plus the locks it held there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepEvents {
    pub accessed: BTreeSet<Expr>,
    pub derefs: BTreeSet<DerefToken>,
    pub locks_held: BTreeSet<Location>,
}

impl StepEvents {
    pub fn deref_locations(&self) -> BTreeSet<Location> {
        self.derefs.iter().map(|t| t.loc).collect()
    }

    pub fn empty() -> Self {
        StepEvents {
            accessed: BTreeSet::new(),
            derefs: BTreeSet::new(),
            locks_held: BTreeSet::new(),
        }
    }
}

/// Events of thread `n` (1-based, enabled) stepping from `pre`.
pub fn events_of_step(
    p: &Program,
    pre: &Configuration,
    n: usize,
) -> Result<StepEvents, EvalError> {
    let thread = pre.thread(n);
    let Some(top) = thread.top() else {
        // Structural elimination of a finished thread touches nothing.
        return Ok(StepEvents {
            locks_held: thread.lockset.clone(),
            ..StepEvents::empty()
        });
    };
    Ok(StepEvents {
        accessed: command_accesses(&top.continuation),
        derefs: command_derefs(p, &top.continuation, &top.env, &pre.memory, pre.next_loc)?,
        locks_held: thread.lockset.clone(),
    })
}

/// Compact rendering of a token set for trace output: `l1.f-> l2.g<-`.
pub fn format_tokens(tokens: &BTreeSet<DerefToken>) -> String {
    let mut parts: Vec<String> = tokens.iter().map(|t| format!("{t}")).collect();
    parts.sort();
    parts.join(" ")
}
