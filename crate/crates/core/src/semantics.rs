//! Semantic domains and the single-step reduction relation.
//!
//! A configuration pairs an ordered pool of threads with a shared memory.
//! Each thread is an activation stack plus the set of locations it currently
//! locks. Reduction is deterministic per thread: picking an enabled thread
//! index fully determines the successor configuration, so a schedule (a
//! sequence of 1-based thread indices) determines a trace.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::syntax::{ClassDef, Command, Expr, Name, Program, MAIN_CLASS, MAIN_METHOD, THIS};

/// A memory location. Locations are allocated sequentially within a trace
/// and never reused, so traces are reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location(pub u32);

impl fmt::Display for Location {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(w, "l{}", self.0)
    }
}

/// Finite partial map from variable names to locations.
pub type Environment = BTreeMap<Name, Location>;

/// A heap object: immutable class tag, field environment, and a reentrant
/// lock counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Object {
    pub class: Name,
    pub fields: Environment,
    pub locks: u32,
}

impl Object {
    pub fn new(class: Name, fields: Environment) -> Self {
        Object {
            class,
            fields,
            locks: 0,
        }
    }

    pub fn with_field(&self, field: &str, value: Location) -> Self {
        let mut o = self.clone();
        o.fields.insert(field.into(), value);
        o
    }

    pub fn lock_incremented(&self) -> Self {
        let mut o = self.clone();
        o.locks += 1;
        o
    }

    pub fn lock_decremented(&self) -> Self {
        let mut o = self.clone();
        o.locks = o.locks.saturating_sub(1);
        o
    }
}

impl fmt::Display for Object {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(w, "{}{{", self.class)?;
        for (i, (f, l)) in self.fields.iter().enumerate() {
            if i > 0 {
                w.write_str(", ")?;
            }
            write!(w, "{f}={l}")?;
        }
        write!(w, "}}#{}", self.locks)
    }
}

/// Finite partial map from locations to objects.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Memory {
    map: BTreeMap<Location, Object>,
}

impl Memory {
    pub fn new() -> Self {
        Memory::default()
    }

    pub fn get(&self, l: Location) -> Option<&Object> {
        self.map.get(&l)
    }

    pub fn insert(&mut self, l: Location, o: Object) {
        self.map.insert(l, o);
    }

    pub fn contains(&self, l: Location) -> bool {
        self.map.contains_key(&l)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Location, &Object)> {
        self.map.iter().map(|(l, o)| (*l, o))
    }
}

/// One frame of a thread's activation stack: the method it belongs to, the
/// remaining command, and the local environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationRecord {
    pub owner_class: Name,
    pub owner_method: Name,
    pub continuation: Command,
    pub env: Environment,
}

impl ActivationRecord {
    pub fn owner_is(&self, class: &str, method: &str) -> bool {
        self.owner_class == class && self.owner_method == method
    }
}

/// A thread: activation stack (top last is *not* used — the top of the stack
/// is index 0) and the set of locations it holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Thread {
    /// Stack of activation records, top first.
    pub stack: Vec<ActivationRecord>,
    pub lockset: BTreeSet<Location>,
}

impl Thread {
    pub fn top(&self) -> Option<&ActivationRecord> {
        self.stack.first()
    }
}

/// A pool of threads (1-based indexing in the reduction relation) sharing a
/// memory, plus the sequential allocation counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    pub threads: Vec<Thread>,
    pub memory: Memory,
    pub next_loc: u32,
}

impl Configuration {
    /// The thread at 1-based index `n`.
    pub fn thread(&self, n: usize) -> &Thread {
        &self.threads[n - 1]
    }

    pub fn thread_count(&self) -> usize {
        self.threads.len()
    }
}

/// The initial configuration: a single thread running `main`'s body with
/// `this` bound to a fresh object of the entry class.
///
/// The program must have an entry block (enforced by validation).
pub fn initial_config(p: &Program) -> Configuration {
    let body = p
        .main_body()
        .expect("initial_config requires a program with a main block")
        .clone();
    let init_loc = Location(0);
    let mut memory = Memory::new();
    memory.insert(init_loc, Object::new(MAIN_CLASS.into(), Environment::new()));
    let env = Environment::from([(THIS.into(), init_loc)]);
    Configuration {
        threads: vec![Thread {
            stack: vec![ActivationRecord {
                owner_class: MAIN_CLASS.into(),
                owner_method: MAIN_METHOD.into(),
                continuation: body,
                env,
            }],
            lockset: BTreeSet::new(),
        }],
        memory,
        next_loc: 1,
    }
}

/// Why an expression failed to evaluate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("undefined variable `{0}`")]
    UndefinedVariable(Name),
    #[error("object at {loc} has no field `{field}`")]
    UndefinedField { loc: Location, field: Name },
    #[error("unknown class `{0}`")]
    UnknownClass(Name),
    #[error("dangling location {0} (internal invariant breach)")]
    Dangling(Location),
}

/// Result of a successful expression evaluation: the value, the memory after
/// any allocations, and the advanced allocation counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluated {
    pub loc: Location,
    pub memory: Memory,
    pub next_loc: u32,
}

/// Evaluates `e` under `env` in `mem`. Variables read the environment; field
/// accesses evaluate the receiver and read the field of the receiver object;
/// object creation evaluates initializers left to right and binds a fresh
/// location to an unlocked object. Existing objects are never mutated.
pub fn eval_expr(
    p: &Program,
    e: &Expr,
    env: &Environment,
    mem: &Memory,
    next_loc: u32,
) -> Result<Evaluated, EvalError> {
    let mut memory = mem.clone();
    let mut next = next_loc;
    let loc = eval_in(p, e, env, &mut memory, &mut next)?;
    Ok(Evaluated {
        loc,
        memory,
        next_loc: next,
    })
}

fn eval_in(
    p: &Program,
    e: &Expr,
    env: &Environment,
    mem: &mut Memory,
    next: &mut u32,
) -> Result<Location, EvalError> {
    match e {
        Expr::Var(x) => env
            .get(x)
            .copied()
            .ok_or_else(|| EvalError::UndefinedVariable(x.clone())),
        Expr::Field(recv, f) => {
            let l = eval_in(p, recv, env, mem, next)?;
            let obj = mem.get(l).ok_or(EvalError::Dangling(l))?;
            obj.fields
                .get(f)
                .copied()
                .ok_or_else(|| EvalError::UndefinedField {
                    loc: l,
                    field: f.clone(),
                })
        }
        Expr::New(class, inits) => {
            if !p.classes.contains_key(class) {
                return Err(EvalError::UnknownClass(class.clone()));
            }
            let mut fields = Environment::new();
            for (f, init) in inits {
                let l = eval_in(p, init, env, mem, next)?;
                fields.insert(f.clone(), l);
            }
            let fresh = Location(*next);
            debug_assert!(!mem.contains(fresh));
            *next += 1;
            mem.insert(fresh, Object::new(class.clone(), fields));
            Ok(fresh)
        }
    }
}

/// The eighteen named reduction rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleName {
    Decl,
    VarAss,
    FieldAss,
    Seq,
    SeqSkip,
    Invoc,
    Spawn,
    Sync,
    AcquireLock,
    ReentrantLock,
    DecreaseLock,
    ReleaseLock,
    Push,
    Pop,
    ParL,
    ParR,
    EndL,
    EndR,
}

impl RuleName {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuleName::Decl => "decl",
            RuleName::VarAss => "var-ass",
            RuleName::FieldAss => "field-ass",
            RuleName::Seq => "seq",
            RuleName::SeqSkip => "seq-skip",
            RuleName::Invoc => "invoc",
            RuleName::Spawn => "spawn",
            RuleName::Sync => "sync",
            RuleName::AcquireLock => "acquire-lock",
            RuleName::ReentrantLock => "reentrant-lock",
            RuleName::DecreaseLock => "decrease-lock",
            RuleName::ReleaseLock => "release-lock",
            RuleName::Push => "push",
            RuleName::Pop => "pop",
            RuleName::ParL => "par-l",
            RuleName::ParR => "par-r",
            RuleName::EndL => "end-l",
            RuleName::EndR => "end-r",
        }
    }
}

impl fmt::Display for RuleName {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(w, "[{}]", self.as_str())
    }
}

/// Counter movement of a lock rule, for invariant checking and trace output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LockEffect {
    pub loc: Location,
    pub pre_count: u32,
    pub post_count: u32,
}

/// What happened in one reduction step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    /// 1-based index of the firing thread in the pre-state.
    pub thread: usize,
    /// Derivation chain, outermost wrapper first; the last entry is the
    /// axiom that fired.
    pub rules: Vec<RuleName>,
    /// Present for the four lock rules.
    pub lock: Option<LockEffect>,
}

impl StepRecord {
    /// The innermost rule of the derivation — the one tests and trace dumps
    /// report.
    pub fn rule(&self) -> RuleName {
        *self.rules.last().expect("derivation chain is never empty")
    }
}

/// Identifies which of the 18 rules produced a step.
pub fn rule_name_of(record: &StepRecord) -> RuleName {
    record.rule()
}

/// Why a thread has no applicable rule. `Blocked` is recoverable (another
/// thread may release the lock); `Stuck` is terminal for the thread.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("blocked acquiring {0} (held by another thread)")]
    Blocked(Location),
    #[error("stuck: {0}")]
    Stuck(StuckCause),
}

/// Terminal per-thread failures: an undefined premise of the would-be rule.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StuckCause {
    #[error("{0}")]
    Eval(#[from] EvalError),
    #[error("no method `{method}` on class `{class}` or its superclasses")]
    MethodNotFound { class: Name, method: Name },
    #[error("variable `{0}` already declared")]
    AlreadyDeclared(Name),
    #[error("assignment to undeclared variable `{0}`")]
    UndeclaredVariable(Name),
    #[error("call or spawn without a continuation (bodies must be skip-terminated)")]
    BareInvocation,
    #[error("unlock({0}) with no matching lock (internal consistency breach)")]
    UnlockWithoutLock(Location),
    #[error("lock({0}): counter is zero but the location is in a lockset (internal consistency breach)")]
    LockStateMismatch(Location),
}

/// The thread indices that can fire a step from `c`.
///
/// A thread whose next action is `lock(l)` while another thread holds `l` is
/// not enabled (blocking); a thread with an undefined premise is not enabled
/// (stuck). A thread with an empty stack is enabled: it can be removed from
/// the pool.
pub fn enabled(p: &Program, c: &Configuration) -> Vec<usize> {
    (1..=c.threads.len())
        .filter(|n| step(p, c, *n).is_ok())
        .collect()
}

/// Classifies every thread of `c` by whether and why it can(not) step.
pub fn thread_statuses(p: &Program, c: &Configuration) -> Vec<Result<(), StepError>> {
    (1..=c.threads.len())
        .map(|n| step(p, c, n).map(|_| ()))
        .collect()
}

/// Fires the single applicable rule instance for thread `n` (1-based) of
/// `c`. Exactly one rule applies to an enabled thread; `Err` reports why
/// none does. Panics if `n` is out of range.
pub fn step(
    p: &Program,
    c: &Configuration,
    n: usize,
) -> Result<(Configuration, StepRecord), StepError> {
    assert!(
        n >= 1 && n <= c.threads.len(),
        "thread index {n} out of range 1..={}",
        c.threads.len()
    );
    let thread = &c.threads[n - 1];
    let par_chain = |tail: Vec<RuleName>| -> Vec<RuleName> {
        let mut rules = Vec::new();
        if c.threads.len() > 1 {
            rules.push(if n == 1 { RuleName::ParL } else { RuleName::ParR });
        }
        rules.extend(tail);
        rules
    };

    // Structural elimination of a finished thread.
    if thread.stack.is_empty() {
        let mut threads = c.threads.clone();
        threads.remove(n - 1);
        let end = if n < c.threads.len() {
            RuleName::EndL
        } else {
            RuleName::EndR
        };
        let rules = if c.threads.len() > 1 && n > 1 && n < c.threads.len() {
            vec![RuleName::ParR, end]
        } else {
            vec![end]
        };
        return Ok((
            Configuration {
                threads,
                memory: c.memory.clone(),
                next_loc: c.next_loc,
            },
            StepRecord {
                thread: n,
                rules,
                lock: None,
            },
        ));
    }

    let top = &thread.stack[0];
    debug_assert!(top.continuation.is_right_associated());

    match &top.continuation {
        // Method return.
        Command::Skip => {
            let mut threads = c.threads.clone();
            threads[n - 1].stack.remove(0);
            Ok((
                Configuration {
                    threads,
                    memory: c.memory.clone(),
                    next_loc: c.next_loc,
                },
                StepRecord {
                    thread: n,
                    rules: par_chain(vec![RuleName::Pop]),
                    lock: None,
                },
            ))
        }

        // Call and spawn fire on the whole `E.m(); C` continuation.
        Command::Seq(first, rest) => match &**first {
            Command::Call(recv, method) => {
                let (callee, evald) = resolve_call(p, recv, method, &top.env, c)?;
                let mut threads = c.threads.clone();
                let stack = &mut threads[n - 1].stack;
                stack[0].continuation = (**rest).clone();
                stack.insert(0, callee);
                Ok((
                    Configuration {
                        threads,
                        memory: evald.memory,
                        next_loc: evald.next_loc,
                    },
                    StepRecord {
                        thread: n,
                        rules: par_chain(vec![RuleName::Invoc]),
                        lock: None,
                    },
                ))
            }
            Command::Spawn(recv, method) => {
                let (callee, evald) = resolve_call(p, recv, method, &top.env, c)?;
                let mut threads = c.threads.clone();
                threads[n - 1].stack[0].continuation = (**rest).clone();
                // The new thread is placed immediately left of its parent.
                threads.insert(
                    n - 1,
                    Thread {
                        stack: vec![callee],
                        lockset: BTreeSet::new(),
                    },
                );
                Ok((
                    Configuration {
                        threads,
                        memory: evald.memory,
                        next_loc: evald.next_loc,
                    },
                    StepRecord {
                        thread: n,
                        rules: par_chain(vec![RuleName::Spawn]),
                        lock: None,
                    },
                ))
            }
            _ => apply_record_step(p, c, n, par_chain),
        },

        Command::Call(..) | Command::Spawn(..) => {
            Err(StepError::Stuck(StuckCause::BareInvocation))
        }

        _ => apply_record_step(p, c, n, par_chain),
    }
}

/// Evaluates a call/spawn receiver and builds the callee activation record.
fn resolve_call(
    p: &Program,
    recv: &Expr,
    method: &str,
    env: &Environment,
    c: &Configuration,
) -> Result<(ActivationRecord, Evaluated), StepError> {
    let evald = eval_expr(p, recv, env, &c.memory, c.next_loc)
        .map_err(|e| StepError::Stuck(StuckCause::Eval(e)))?;
    let class = &evald
        .memory
        .get(evald.loc)
        .expect("evaluation result is allocated")
        .class;
    let owner = p
        .lookup(class, method)
        .ok_or_else(|| {
            StepError::Stuck(StuckCause::MethodNotFound {
                class: class.clone(),
                method: method.into(),
            })
        })?
        .to_owned();
    let body = p.classes[&owner].methods[method].clone();
    Ok((
        ActivationRecord {
            owner_class: owner,
            owner_method: method.into(),
            continuation: body,
            env: Environment::from([(THIS.into(), evald.loc)]),
        },
        evald,
    ))
}

/// Steps the top activation record of thread `n` with a record-local rule,
/// lifting it over the stack ([push]) and the pool ([par-*]).
fn apply_record_step(
    p: &Program,
    c: &Configuration,
    n: usize,
    par_chain: impl Fn(Vec<RuleName>) -> Vec<RuleName>,
) -> Result<(Configuration, StepRecord), StepError> {
    let thread = &c.threads[n - 1];
    let top = &thread.stack[0];
    let out = step_command(
        p,
        &top.continuation,
        &top.env,
        &thread.lockset,
        &c.memory,
        c.next_loc,
    )?;
    let mut threads = c.threads.clone();
    {
        let t = &mut threads[n - 1];
        t.lockset = out.lockset;
        let rec = &mut t.stack[0];
        rec.continuation = out.cmd;
        rec.env = out.env;
    }
    let mut rules = Vec::new();
    if thread.stack.len() > 1 {
        rules.push(RuleName::Push);
    }
    rules.extend(out.rules);
    Ok((
        Configuration {
            threads,
            memory: out.memory,
            next_loc: out.next_loc,
        },
        StepRecord {
            thread: n,
            rules: par_chain(rules),
            lock: out.lock,
        },
    ))
}

struct CommandStep {
    cmd: Command,
    env: Environment,
    memory: Memory,
    next_loc: u32,
    lockset: BTreeSet<Location>,
    rules: Vec<RuleName>,
    lock: Option<LockEffect>,
}

fn step_command(
    p: &Program,
    cmd: &Command,
    env: &Environment,
    lockset: &BTreeSet<Location>,
    mem: &Memory,
    next_loc: u32,
) -> Result<CommandStep, StepError> {
    let unchanged = |cmd: Command, rules: Vec<RuleName>| CommandStep {
        cmd,
        env: env.clone(),
        memory: mem.clone(),
        next_loc,
        lockset: lockset.clone(),
        rules,
        lock: None,
    };

    match cmd {
        Command::Seq(first, rest) => match &**first {
            Command::Skip => Ok(unchanged((**rest).clone(), vec![RuleName::SeqSkip])),
            // `sync` rewrites in place, splicing the critical section into
            // the surrounding continuation to keep the spine right-associated.
            Command::Sync(guard, body) => {
                let evald = eval_expr(p, guard, env, mem, next_loc)
                    .map_err(|e| StepError::Stuck(StuckCause::Eval(e)))?;
                let l = evald.loc;
                let tail = Command::seq(Command::Unlock(l), (**rest).clone());
                let cmd = Command::seq(Command::Lock(l), body.clone().seq_append(tail));
                Ok(CommandStep {
                    cmd,
                    env: env.clone(),
                    memory: evald.memory,
                    next_loc: evald.next_loc,
                    lockset: lockset.clone(),
                    rules: vec![RuleName::Seq, RuleName::Sync],
                    lock: None,
                })
            }
            Command::Call(..) | Command::Spawn(..) | Command::Seq(..) => {
                // Calls and spawns are consumed one level up; nested Seq
                // cannot arise in right-associated continuations.
                Err(StepError::Stuck(StuckCause::BareInvocation))
            }
            other => {
                let inner = step_command(p, other, env, lockset, mem, next_loc)?;
                let mut rules = vec![RuleName::Seq];
                rules.extend(inner.rules);
                Ok(CommandStep {
                    cmd: Command::seq(inner.cmd, (**rest).clone()),
                    rules,
                    ..inner
                })
            }
        },

        Command::Decl(x, e) => {
            if env.contains_key(x) {
                return Err(StepError::Stuck(StuckCause::AlreadyDeclared(x.clone())));
            }
            let evald = eval_expr(p, e, env, mem, next_loc)
                .map_err(|e| StepError::Stuck(StuckCause::Eval(e)))?;
            let mut env = env.clone();
            env.insert(x.clone(), evald.loc);
            Ok(CommandStep {
                cmd: Command::Skip,
                env,
                memory: evald.memory,
                next_loc: evald.next_loc,
                lockset: lockset.clone(),
                rules: vec![RuleName::Decl],
                lock: None,
            })
        }

        Command::AssignVar(x, e) => {
            if !env.contains_key(x) {
                return Err(StepError::Stuck(StuckCause::UndeclaredVariable(x.clone())));
            }
            let evald = eval_expr(p, e, env, mem, next_loc)
                .map_err(|e| StepError::Stuck(StuckCause::Eval(e)))?;
            let mut env = env.clone();
            env.insert(x.clone(), evald.loc);
            Ok(CommandStep {
                cmd: Command::Skip,
                env,
                memory: evald.memory,
                next_loc: evald.next_loc,
                lockset: lockset.clone(),
                rules: vec![RuleName::VarAss],
                lock: None,
            })
        }

        Command::AssignField(x, f, e) => {
            let target = *env
                .get(x)
                .ok_or_else(|| StepError::Stuck(StuckCause::UndeclaredVariable(x.clone())))?;
            // The object is read from the pre-evaluation memory; evaluation
            // never mutates existing objects, so the update commutes.
            let obj = mem
                .get(target)
                .ok_or(StepError::Stuck(StuckCause::Eval(EvalError::Dangling(
                    target,
                ))))?
                .clone();
            let evald = eval_expr(p, e, env, mem, next_loc)
                .map_err(|e| StepError::Stuck(StuckCause::Eval(e)))?;
            let mut memory = evald.memory;
            memory.insert(target, obj.with_field(f, evald.loc));
            Ok(CommandStep {
                cmd: Command::Skip,
                env: env.clone(),
                memory,
                next_loc: evald.next_loc,
                lockset: lockset.clone(),
                rules: vec![RuleName::FieldAss],
                lock: None,
            })
        }

        Command::Sync(guard, body) => {
            // A bare sync (not inside a Seq); rewrites like the sequenced
            // form but with nothing following the unlock.
            let evald = eval_expr(p, guard, env, mem, next_loc)
                .map_err(|e| StepError::Stuck(StuckCause::Eval(e)))?;
            let l = evald.loc;
            let cmd = Command::seq(
                Command::Lock(l),
                body.clone().seq_append(Command::Unlock(l)),
            );
            Ok(CommandStep {
                cmd,
                env: env.clone(),
                memory: evald.memory,
                next_loc: evald.next_loc,
                lockset: lockset.clone(),
                rules: vec![RuleName::Sync],
                lock: None,
            })
        }

        Command::Lock(l) => {
            let obj = mem
                .get(*l)
                .ok_or(StepError::Stuck(StuckCause::Eval(EvalError::Dangling(*l))))?;
            let held = lockset.contains(l);
            match (obj.locks, held) {
                (0, true) => Err(StepError::Stuck(StuckCause::LockStateMismatch(*l))),
                (0, false) => {
                    let mut lockset = lockset.clone();
                    lockset.insert(*l);
                    let mut memory = mem.clone();
                    memory.insert(*l, obj.lock_incremented());
                    Ok(CommandStep {
                        cmd: Command::Skip,
                        env: env.clone(),
                        memory,
                        next_loc,
                        lockset,
                        rules: vec![RuleName::AcquireLock],
                        lock: Some(LockEffect {
                            loc: *l,
                            pre_count: 0,
                            post_count: 1,
                        }),
                    })
                }
                (count, true) => {
                    let mut memory = mem.clone();
                    memory.insert(*l, obj.lock_incremented());
                    Ok(CommandStep {
                        cmd: Command::Skip,
                        env: env.clone(),
                        memory,
                        next_loc,
                        lockset: lockset.clone(),
                        rules: vec![RuleName::ReentrantLock],
                        lock: Some(LockEffect {
                            loc: *l,
                            pre_count: count,
                            post_count: count + 1,
                        }),
                    })
                }
                (_, false) => Err(StepError::Blocked(*l)),
            }
        }

        Command::Unlock(l) => {
            let obj = mem
                .get(*l)
                .ok_or(StepError::Stuck(StuckCause::Eval(EvalError::Dangling(*l))))?;
            if obj.locks == 0 || !lockset.contains(l) {
                // Unreachable from programmer source: sync generates
                // balanced lock/unlock pairs.
                return Err(StepError::Stuck(StuckCause::UnlockWithoutLock(*l)));
            }
            let mut memory = mem.clone();
            memory.insert(*l, obj.lock_decremented());
            let (rule, lockset) = if obj.locks > 1 {
                (RuleName::DecreaseLock, lockset.clone())
            } else {
                let mut ls = lockset.clone();
                ls.remove(l);
                (RuleName::ReleaseLock, ls)
            };
            Ok(CommandStep {
                cmd: Command::Skip,
                env: env.clone(),
                memory,
                next_loc,
                lockset,
                rules: vec![rule],
                lock: Some(LockEffect {
                    loc: *l,
                    pre_count: obj.locks,
                    post_count: obj.locks - 1,
                }),
            })
        }

        Command::Skip | Command::Call(..) | Command::Spawn(..) => {
            // Skip is handled by [pop] and calls by [invoc]/[spawn] one
            // level up; reaching here means a malformed continuation.
            Err(StepError::Stuck(StuckCause::BareInvocation))
        }
    }
}

/// True when the pool is nonempty but no thread can fire a step.
pub fn no_enabled_thread(p: &Program, c: &Configuration) -> bool {
    !c.threads.is_empty() && enabled(p, c).is_empty()
}

/// Pretty thread description used in diagnostics.
pub fn describe_thread(t: &Thread) -> String {
    use alloc::format;
    match t.top() {
        None => "terminated".into(),
        Some(r) => format!(
            "{}.{} at `{}`",
            r.owner_class,
            r.owner_method,
            crate::syntax::head_display(&r.continuation)
        ),
    }
}

/// Convenience constructor used by tests and checkers: a class table entry.
pub fn class_def(parent: &str, methods: &[(&str, Command)]) -> ClassDef {
    ClassDef {
        parent: Some(parent.into()),
        methods: methods
            .iter()
            .map(|(m, b)| ((*m).into(), b.clone()))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::OBJECT_CLASS;
    use alloc::string::ToString;

    fn tiny_program() -> Program {
        let mut p = Program::new();
        p.classes.insert(
            MAIN_CLASS.into(),
            class_def(
                OBJECT_CLASS,
                &[(MAIN_METHOD, Command::seq(Command::Skip, Command::Skip))],
            ),
        );
        p
    }

    #[test]
    fn initial_config_shape() {
        let p = tiny_program();
        let c = initial_config(&p);
        assert_eq!(c.threads.len(), 1);
        assert_eq!(c.memory.len(), 1);
        let t = c.thread(1);
        assert!(t.lockset.is_empty());
        let top = t.top().unwrap();
        assert!(top.owner_is(MAIN_CLASS, MAIN_METHOD));
        assert_eq!(top.env.get(THIS), Some(&Location(0)));
        assert_eq!(c.memory.get(Location(0)).unwrap().class, MAIN_CLASS);
        assert_eq!(c.memory.get(Location(0)).unwrap().locks, 0);
    }

    #[test]
    fn eval_variable_read() {
        let p = Program::new();
        let env = Environment::from([("z".to_string(), Location(1))]);
        let mut mem = Memory::new();
        mem.insert(Location(1), Object::new(OBJECT_CLASS.into(), Environment::new()));
        let r = eval_expr(&p, &Expr::var("z"), &env, &mem, 2).unwrap();
        assert_eq!(r.loc, Location(1));
        assert_eq!(r.memory, mem);
        assert_eq!(r.next_loc, 2);
    }

    #[test]
    fn eval_field_read_through_this() {
        let p = Program::new();
        let env = Environment::from([(THIS.to_string(), Location(0))]);
        let mut mem = Memory::new();
        mem.insert(
            Location(0),
            Object::new(
                "K".into(),
                Environment::from([("x".to_string(), Location(1))]),
            ),
        );
        mem.insert(Location(1), Object::new("K1".into(), Environment::new()));
        let r = eval_expr(&p, &Expr::field(Expr::var(THIS), "x"), &env, &mem, 2).unwrap();
        assert_eq!(r.loc, Location(1));
        assert_eq!(r.memory, mem);
    }

    #[test]
    fn eval_new_allocates_fresh_unlocked() {
        let p = Program::new();
        let env = Environment::new();
        let mem = Memory::new();
        let r = eval_expr(&p, &Expr::New(OBJECT_CLASS.into(), alloc::vec![]), &env, &mem, 6)
            .unwrap();
        assert_eq!(r.loc, Location(6));
        assert_eq!(r.next_loc, 7);
        let o = r.memory.get(Location(6)).unwrap();
        assert_eq!(o.class, OBJECT_CLASS);
        assert!(o.fields.is_empty());
        assert_eq!(o.locks, 0);
    }

    #[test]
    fn eval_errors_distinguish_causes() {
        let p = Program::new();
        let env = Environment::new();
        let mem = Memory::new();
        assert_eq!(
            eval_expr(&p, &Expr::var("q"), &env, &mem, 0),
            Err(EvalError::UndefinedVariable("q".into()))
        );
        assert_eq!(
            eval_expr(&p, &Expr::New("Nope".into(), alloc::vec![]), &env, &mem, 0),
            Err(EvalError::UnknownClass("Nope".into()))
        );
        let env = Environment::from([("a".to_string(), Location(0))]);
        let mut mem = Memory::new();
        mem.insert(Location(0), Object::new(OBJECT_CLASS.into(), Environment::new()));
        assert_eq!(
            eval_expr(&p, &Expr::field(Expr::var("a"), "f"), &env, &mem, 1),
            Err(EvalError::UndefinedField {
                loc: Location(0),
                field: "f".into()
            })
        );
    }

    #[test]
    fn eval_purity_modulo_allocation() {
        // The output memory restricted to the input domain equals the input.
        let p = Program::new();
        let env = Environment::from([("a".to_string(), Location(0))]);
        let mut mem = Memory::new();
        mem.insert(Location(0), Object::new(OBJECT_CLASS.into(), Environment::new()));
        let e = Expr::New(
            OBJECT_CLASS.into(),
            alloc::vec![("f".to_string(), Expr::var("a"))],
        );
        let r = eval_expr(&p, &e, &env, &mem, 1).unwrap();
        for (l, o) in mem.iter() {
            assert_eq!(r.memory.get(l), Some(o));
        }
        assert!(!mem.contains(r.loc));
    }

    #[test]
    fn pop_then_end_terminates_a_lone_thread() {
        let p = tiny_program();
        let c = initial_config(&p);
        // skip; skip -> [seq-skip] -> skip -> [pop] -> empty stack -> [end-r].
        let (c1, r1) = step(&p, &c, 1).unwrap();
        assert_eq!(r1.rule(), RuleName::SeqSkip);
        let (c2, r2) = step(&p, &c1, 1).unwrap();
        assert_eq!(r2.rule(), RuleName::Pop);
        assert!(c2.threads[0].stack.is_empty());
        let (c3, r3) = step(&p, &c2, 1).unwrap();
        assert_eq!(r3.rule(), RuleName::EndR);
        assert!(c3.threads.is_empty());
        assert!(step_count_finite(&p, &c));
    }

    fn step_count_finite(p: &Program, c: &Configuration) -> bool {
        let mut cur = c.clone();
        for _ in 0..100 {
            if cur.threads.is_empty() {
                return true;
            }
            let en = enabled(p, &cur);
            if en.is_empty() {
                return false;
            }
            cur = step(p, &cur, en[0]).unwrap().0;
        }
        false
    }

    #[test]
    fn decl_requires_fresh_variable() {
        let p = Program::new();
        let env = Environment::from([("x".to_string(), Location(0))]);
        let mut mem = Memory::new();
        mem.insert(Location(0), Object::new(OBJECT_CLASS.into(), Environment::new()));
        let got = step_command(
            &p,
            &Command::Decl("x".into(), Expr::var("x")),
            &env,
            &BTreeSet::new(),
            &mem,
            1,
        );
        assert!(matches!(
            got,
            Err(StepError::Stuck(StuckCause::AlreadyDeclared(_)))
        ));
    }

    #[test]
    fn assign_requires_declared_variable() {
        let p = Program::new();
        let got = step_command(
            &p,
            &Command::AssignVar("y".into(), Expr::var(THIS)),
            &Environment::from([(THIS.to_string(), Location(0))]),
            &BTreeSet::new(),
            &Memory::new(),
            1,
        );
        assert!(matches!(
            got,
            Err(StepError::Stuck(StuckCause::UndeclaredVariable(_)))
        ));
    }
}
