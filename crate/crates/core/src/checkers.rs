//! Trace-quantified checking of guard annotations, data-race detection,
//! non-aliasing, the race-freedom harness, and dynamic guard inference.
//!
//! All checkers re-walk a recorded [`Exploration`] with visitors; they
//! evaluate guards on scratch copies of the memory and never perturb
//! execution. Verdicts are `Holds` only when exploration completed every
//! branch within the bound; any bound-cut branch weakens a clean result to
//! `HoldsUpToBound`.
//!
//! The two protection readings differ exactly as advertised: name
//! protection fires on syntactic accesses of the annotated name (with
//! `this` in field guards rebound to the accessed container — viewpoint
//! adaptation), while value protection collects every location ever bound
//! to the target anywhere in the trace (past and future alike) and fires on
//! dereferences of those locations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::access::{field_access_containers, AccessMode, DerefToken};
use crate::explorer::{
    EdgeContext, EnabledChild, Exploration, ExploreConfig, ExploreError, ScheduleVisitor,
};
use crate::semantics::{eval_expr, Configuration, Environment, Location, Memory};
use crate::syntax::{
    Annotation, AnnotationTarget, Expr, Name, Program, Protection, ITSELF, THIS,
};

/// Outcome of a universally-quantified check over an exploration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// Held on every step of every explored trace, and exploration was
    /// complete.
    Holds,
    /// Held on everything explored, but some branch hit the step bound.
    HoldsUpToBound { bound: usize },
    /// A counterexample was found.
    Violated(Violation),
}

impl Verdict {
    pub fn holds(&self) -> bool {
        !matches!(self, Verdict::Violated(_))
    }

    pub fn is_exact_holds(&self) -> bool {
        matches!(self, Verdict::Holds)
    }

    fn from_walk(violation: Option<Violation>, bound_exhausted: bool, bound: usize) -> Verdict {
        match violation {
            Some(v) => Verdict::Violated(v),
            None if bound_exhausted => Verdict::HoldsUpToBound { bound },
            None => Verdict::Holds,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Holds => w.write_str("holds"),
            Verdict::HoldsUpToBound { bound } => write!(w, "holds up to bound {bound}"),
            Verdict::Violated(v) => write!(w, "violated at step {}: {}", v.step_index, v.explanation),
        }
    }
}

/// A counterexample: a replayable schedule and the step where the check
/// failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Full schedule of the violating trace (for value checks the verdict
    /// depends on bindings later in the trace, so the whole schedule is
    /// kept).
    pub schedule: Vec<usize>,
    /// Index into the schedule of the violating step.
    pub step_index: usize,
    pub explanation: String,
    /// The dereference happened before the location's first binding to the
    /// target in this trace (value checks quantify over the whole trace,
    /// past and future).
    pub early_dereference: bool,
}

/// Evaluates a guard on a scratch copy of `mem` and reports the location it
/// names, if any.
fn guard_location(
    p: &Program,
    guard: &Expr,
    env: &Environment,
    mem: &Memory,
    next_loc: u32,
) -> Result<Location, String> {
    eval_expr(p, guard, env, mem, next_loc)
        .map(|r| r.loc)
        .map_err(|e| format!("guard not evaluable: {e}"))
}

// ---------------------------------------------------------------------------
// Name protection
// ---------------------------------------------------------------------------

enum NameTarget<'a> {
    Var {
        class: &'a str,
        method: &'a str,
        var: &'a str,
    },
    Field(&'a str),
}

struct NameCheck<'a> {
    program: &'a Program,
    target: NameTarget<'a>,
    guard: &'a Expr,
    path: Vec<usize>,
    violation: Option<Violation>,
    checked_accesses: usize,
}

impl NameCheck<'_> {
    fn violate(&mut self, explanation: String) {
        if self.violation.is_none() {
            self.violation = Some(Violation {
                schedule: self.path.clone(),
                step_index: self.path.len() - 1,
                explanation,
                early_dereference: false,
            });
        }
    }
}

impl ScheduleVisitor for NameCheck<'_> {
    fn enter_edge(&mut self, ctx: &EdgeContext<'_>) {
        self.path.push(ctx.record.thread);
        if self.violation.is_some() {
            return;
        }
        let thread = ctx.pre.thread(ctx.record.thread);
        let Some(top) = thread.top() else {
            return;
        };
        match self.target {
            NameTarget::Var { class, method, var } => {
                if !top.owner_is(class, method) {
                    return;
                }
                if !ctx
                    .events
                    .accessed
                    .iter()
                    .any(|e| matches!(e, Expr::Var(v) if v == var))
                {
                    return;
                }
                self.checked_accesses += 1;
                let Some(value) = top.env.get(var).copied() else {
                    self.violate(format!(
                        "guard not evaluable: accessed variable `{var}` is unbound"
                    ));
                    return;
                };
                let mut env = top.env.clone();
                env.insert(ITSELF.into(), value);
                match guard_location(self.program, self.guard, &env, &ctx.pre.memory, ctx.pre.next_loc)
                {
                    Ok(lock) => {
                        if !ctx.events.locks_held.contains(&lock) {
                            self.violate(format!(
                                "access to variable `{var}` without holding {lock} (the value of `{}`)",
                                self.guard
                            ));
                        }
                    }
                    Err(e) => self.violate(e),
                }
            }
            NameTarget::Field(field) => {
                // Every access E'.field in this step, each with its own
                // viewpoint adaptation of `this` to the container.
                for container in field_access_containers(&top.continuation, field) {
                    self.checked_accesses += 1;
                    let evald = match eval_expr(
                        self.program,
                        &container,
                        &top.env,
                        &ctx.pre.memory,
                        ctx.pre.next_loc,
                    ) {
                        Ok(r) => r,
                        Err(e) => {
                            self.violate(format!(
                                "guard not evaluable: container `{container}` failed: {e}"
                            ));
                            return;
                        }
                    };
                    let container_loc = evald.loc;
                    let Some(value) = evald
                        .memory
                        .get(container_loc)
                        .and_then(|o| o.fields.get(field))
                        .copied()
                    else {
                        self.violate(format!(
                            "guard not evaluable: `{container}` (at {container_loc}) has no field `{field}` yet"
                        ));
                        return;
                    };
                    let mut env = top.env.clone();
                    env.insert(THIS.into(), container_loc);
                    env.insert(ITSELF.into(), value);
                    match guard_location(
                        self.program,
                        self.guard,
                        &env,
                        &evald.memory,
                        evald.next_loc,
                    ) {
                        Ok(lock) => {
                            if !ctx.events.locks_held.contains(&lock) {
                                self.violate(format!(
                                    "access to field `{field}` via `{container}` without holding {lock} (the value of `{}`)",
                                    self.guard
                                ));
                                return;
                            }
                        }
                        Err(e) => {
                            self.violate(e);
                            return;
                        }
                    }
                }
            }
        }
    }

    fn leave_edge(&mut self) {
        self.path.pop();
    }

    fn finished(&self) -> bool {
        self.violation.is_some()
    }
}

// ---------------------------------------------------------------------------
// Value protection
// ---------------------------------------------------------------------------

struct PendingDeref {
    loc: Location,
    /// True when the guard evaluated to a held lock at this step.
    ok: bool,
    failure: Option<String>,
}

struct EdgeData {
    /// Trace-state index of each L-contribution made by this edge.
    contribs: Vec<(Location, usize)>,
    derefs: Vec<PendingDeref>,
}

struct ValueCheck<'a> {
    program: &'a Program,
    target: NameTarget<'a>,
    guard: &'a Expr,
    path: Vec<usize>,
    edges: Vec<EdgeData>,
    bound_locations: BTreeMap<Location, usize>,
    violation: Option<Violation>,
    checked_derefs: usize,
}

/// Locations the target contributes to its protected set from one edge,
/// paired with the index of the trace state the binding is observed in.
fn target_contributions(target: &NameTarget<'_>, ctx: &EdgeContext<'_>) -> Vec<(Location, usize)> {
    let mut out = Vec::new();
    match target {
        // Bindings of the variable in the firing thread's top record,
        // observed in the pre-state of every step but the first.
        NameTarget::Var { class, method, var } => {
            if ctx.depth >= 1 {
                if let Some(top) = ctx.pre.thread(ctx.record.thread).top() {
                    if top.owner_is(class, method) {
                        if let Some(l) = top.env.get(*var) {
                            out.push((*l, ctx.depth));
                        }
                    }
                }
            }
        }
        // Values of the field anywhere in memory, observed in every
        // post-state (trace states 1.. including the final one).
        NameTarget::Field(field) => {
            for (_, obj) in ctx.post.memory.iter() {
                if let Some(l) = obj.fields.get(*field) {
                    out.push((*l, ctx.depth + 1));
                }
            }
        }
    }
    out
}

impl ScheduleVisitor for ValueCheck<'_> {
    fn enter_edge(&mut self, ctx: &EdgeContext<'_>) {
        self.path.push(ctx.record.thread);
        if self.violation.is_some() {
            // Keep path bookkeeping consistent while unwinding.
            self.edges.push(EdgeData {
                contribs: Vec::new(),
                derefs: Vec::new(),
            });
            return;
        }
        let contribs = target_contributions(&self.target, ctx);
        for (l, _) in &contribs {
            *self.bound_locations.entry(*l).or_insert(0) += 1;
        }
        // Pre-judge every dereferenced location now, while the pre-state is
        // at hand; whether it lands in the protected set is known only at
        // the leaf.
        let mut derefs = Vec::new();
        if let Some(top) = ctx.pre.thread(ctx.record.thread).top() {
            for loc in ctx.events.deref_locations() {
                let mut env = top.env.clone();
                env.insert(ITSELF.into(), loc);
                let (ok, failure) = match guard_location(
                    self.program,
                    self.guard,
                    &env,
                    &ctx.pre.memory,
                    ctx.pre.next_loc,
                ) {
                    Ok(lock) => (ctx.events.locks_held.contains(&lock), None),
                    Err(e) => (false, Some(e)),
                };
                derefs.push(PendingDeref { loc, ok, failure });
            }
        }
        self.edges.push(EdgeData { contribs, derefs });
    }

    fn leave_edge(&mut self) {
        self.path.pop();
        if let Some(edge) = self.edges.pop() {
            for (l, _) in edge.contribs {
                match self.bound_locations.get_mut(&l) {
                    Some(1) => {
                        self.bound_locations.remove(&l);
                    }
                    Some(k) => *k -= 1,
                    None => {}
                }
            }
        }
    }

    fn leaf(&mut self, _final: &Configuration, _outcome: &crate::trace::TraceOutcome, _d: usize) {
        if self.violation.is_some() {
            return;
        }
        for (edge_idx, edge) in self.edges.iter().enumerate() {
            for pending in &edge.derefs {
                if !self.bound_locations.contains_key(&pending.loc) {
                    continue;
                }
                self.checked_derefs += 1;
                if pending.ok {
                    continue;
                }
                let first_binding_state = self
                    .edges
                    .iter()
                    .flat_map(|e| e.contribs.iter())
                    .filter(|(l, _)| *l == pending.loc)
                    .map(|(_, state)| *state)
                    .min()
                    .unwrap_or(usize::MAX);
                let explanation = match &pending.failure {
                    Some(e) => format!("dereference of {}: {e}", pending.loc),
                    None => format!(
                        "dereference of {} (a value of the target) without holding the value of `{}`",
                        pending.loc, self.guard
                    ),
                };
                self.violation = Some(Violation {
                    schedule: self.path.clone(),
                    step_index: edge_idx,
                    explanation,
                    early_dereference: first_binding_state > edge_idx,
                });
                return;
            }
        }
    }

    fn finished(&self) -> bool {
        self.violation.is_some()
    }
}

// ---------------------------------------------------------------------------
// Public protection checkers
// ---------------------------------------------------------------------------

fn run_name_check(
    x: &Exploration,
    target: NameTarget<'_>,
    guard: &Expr,
) -> Result<(Verdict, usize), ExploreError> {
    let mut check = NameCheck {
        program: x.program(),
        target,
        guard,
        path: Vec::new(),
        violation: None,
        checked_accesses: 0,
    };
    let stats = x.walk(&mut check)?;
    Ok((
        Verdict::from_walk(check.violation, stats.bound_exhausted > 0, x.bound()),
        check.checked_accesses,
    ))
}

fn run_value_check(
    x: &Exploration,
    target: NameTarget<'_>,
    guard: &Expr,
) -> Result<(Verdict, usize), ExploreError> {
    let mut check = ValueCheck {
        program: x.program(),
        target,
        guard,
        path: Vec::new(),
        edges: Vec::new(),
        bound_locations: BTreeMap::new(),
        violation: None,
        checked_derefs: 0,
    };
    let stats = x.walk(&mut check)?;
    Ok((
        Verdict::from_walk(check.violation, stats.bound_exhausted > 0, x.bound()),
        check.checked_derefs,
    ))
}

/// Name protection for a local variable: at every step of a `class.method`
/// activation whose continuation accesses `var`, the guard (with `itself`
/// bound to the variable's current value) must evaluate to a held lock.
pub fn check_name_var(
    x: &Exploration,
    class: &str,
    method: &str,
    var: &str,
    guard: &Expr,
) -> Result<Verdict, ExploreError> {
    run_name_check(x, NameTarget::Var { class, method, var }, guard).map(|r| r.0)
}

/// Name protection for a field: at every step accessing `E'.field`, the
/// guard — with `this` rebound to the container `E'` and `itself` to the
/// field's current value, evaluated against the memory produced by
/// evaluating `E'` — must name a held lock.
pub fn check_name_field(
    x: &Exploration,
    field: &str,
    guard: &Expr,
) -> Result<Verdict, ExploreError> {
    run_name_check(x, NameTarget::Field(field), guard).map(|r| r.0)
}

/// Value protection for a local variable: collect every location ever bound
/// to the variable anywhere in each trace; every dereference of one of them
/// must hold the guard's value (`itself` bound to the dereferenced
/// location).
pub fn check_value_var(
    x: &Exploration,
    class: &str,
    method: &str,
    var: &str,
    guard: &Expr,
) -> Result<Verdict, ExploreError> {
    run_value_check(x, NameTarget::Var { class, method, var }, guard).map(|r| r.0)
}

/// Value protection for a field: like [`check_value_var`], with the
/// protected set collecting every location ever stored in the field of any
/// object in any memory of the trace.
pub fn check_value_field(
    x: &Exploration,
    field: &str,
    guard: &Expr,
) -> Result<Verdict, ExploreError> {
    run_value_check(x, NameTarget::Field(field), guard).map(|r| r.0)
}

/// Dispatches an annotation to the matching checker.
pub fn check_annotation(x: &Exploration, a: &Annotation) -> Result<Verdict, ExploreError> {
    match (&a.target, a.protection) {
        (AnnotationTarget::Field(f), Protection::Name) => check_name_field(x, f, &a.guard),
        (AnnotationTarget::Field(f), Protection::Value) => check_value_field(x, f, &a.guard),
        (AnnotationTarget::Var { class, method, var }, Protection::Name) => {
            check_name_var(x, class, method, var, &a.guard)
        }
        (AnnotationTarget::Var { class, method, var }, Protection::Value) => {
            check_value_var(x, class, method, var, &a.guard)
        }
    }
}

// ---------------------------------------------------------------------------
// Data races
// ---------------------------------------------------------------------------

/// One data race: at the configuration reached by `schedule`, threads
/// `thread_a` and `thread_b` are both enabled, both dereference
/// `loc.field`, and at least one writes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RaceFinding {
    pub schedule: Vec<usize>,
    pub loc: Location,
    pub field: Name,
    pub thread_a: usize,
    pub thread_b: usize,
    pub mode_a: AccessMode,
    pub mode_b: AccessMode,
}

impl fmt::Display for RaceFinding {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            w,
            "race at {}.{} between threads {} ({}) and {} ({}) after schedule {:?}",
            self.loc,
            self.field,
            self.thread_a,
            self.mode_a,
            self.thread_b,
            self.mode_b,
            self.schedule
        )
    }
}

/// All races found over the visited configurations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RaceReport {
    pub findings: Vec<RaceFinding>,
}

impl RaceReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    /// Distinct (location, field, thread pair) sites, schedule-independent.
    pub fn sites(&self) -> BTreeSet<(Location, Name, usize, usize)> {
        self.findings
            .iter()
            .map(|f| (f.loc, f.field.clone(), f.thread_a, f.thread_b))
            .collect()
    }
}

fn mode_of(tokens: &BTreeSet<DerefToken>, loc: Location, field: &str) -> Option<AccessMode> {
    let mut found = None;
    for t in tokens {
        if t.loc == loc && t.field == field {
            if t.mode == AccessMode::Write {
                return Some(AccessMode::Write);
            }
            found = Some(AccessMode::Read);
        }
    }
    found
}

struct RaceScan {
    path: Vec<usize>,
    findings: Vec<RaceFinding>,
}

impl RaceScan {
    fn scan_node(&mut self, children: &[EnabledChild<'_>]) {
        for i in 0..children.len() {
            for j in i + 1..children.len() {
                let a = &children[i];
                let b = &children[j];
                if a.thread == b.thread {
                    continue;
                }
                // Candidate (loc, field) pairs: everything a writes plus
                // everything b writes.
                let mut candidates: BTreeSet<(Location, &Name)> = BTreeSet::new();
                for t in a
                    .events
                    .derefs
                    .iter()
                    .chain(b.events.derefs.iter())
                    .filter(|t| t.mode == AccessMode::Write)
                {
                    candidates.insert((t.loc, &t.field));
                }
                for (loc, field) in candidates {
                    let ma = mode_of(&a.events.derefs, loc, field);
                    let mb = mode_of(&b.events.derefs, loc, field);
                    if let (Some(ma), Some(mb)) = (ma, mb) {
                        if ma == AccessMode::Write || mb == AccessMode::Write {
                            self.findings.push(RaceFinding {
                                schedule: self.path.clone(),
                                loc,
                                field: field.clone(),
                                thread_a: a.thread,
                                thread_b: b.thread,
                                mode_a: ma,
                                mode_b: mb,
                            });
                        }
                    }
                }
            }
        }
    }
}

impl ScheduleVisitor for RaceScan {
    fn node(&mut self, _cfg: &Configuration, children: &[EnabledChild<'_>]) {
        self.scan_node(children);
    }

    fn enter_edge(&mut self, ctx: &EdgeContext<'_>) {
        self.path.push(ctx.record.thread);
    }

    fn leave_edge(&mut self) {
        self.path.pop();
    }
}

/// Data-race detection: at every visited configuration, for every pair of
/// enabled threads, report overlapping dereferences of the same location's
/// field with at least one write.
pub fn detect_races(x: &Exploration) -> Result<RaceReport, ExploreError> {
    let mut scan = RaceScan {
        path: Vec::new(),
        findings: Vec::new(),
    };
    x.walk(&mut scan)?;
    Ok(RaceReport {
        findings: scan.findings,
    })
}

// ---------------------------------------------------------------------------
// Non-aliasing
// ---------------------------------------------------------------------------

fn alias_violation(c: &Configuration, name: &str) -> Option<String> {
    // Variable side: `name` bound in some thread's top record.
    for (j, thread) in c.threads.iter().enumerate() {
        let Some(top) = thread.top() else { continue };
        let Some(&l) = top.env.get(name) else {
            continue;
        };
        for (y, &ly) in &top.env {
            if y != name && ly == l {
                return Some(format!(
                    "variable `{name}` (thread {}) and variable `{y}` share {l}",
                    j + 1
                ));
            }
        }
        for (k, other) in c.threads.iter().enumerate() {
            if k == j {
                continue;
            }
            if let Some(other_top) = other.top() {
                for (y, &ly) in &other_top.env {
                    if ly == l {
                        return Some(format!(
                            "variable `{name}` (thread {}) and variable `{y}` (thread {}) share {l}",
                            j + 1,
                            k + 1
                        ));
                    }
                }
            }
        }
        for (container, obj) in c.memory.iter() {
            for (y, &ly) in &obj.fields {
                if ly == l {
                    return Some(format!(
                        "variable `{name}` (thread {}) and field `{y}` of {container} share {l}",
                        j + 1
                    ));
                }
            }
        }
    }
    // Field side: `name` as a field of some object.
    for (container, obj) in c.memory.iter() {
        let Some(&l) = obj.fields.get(name) else {
            continue;
        };
        for (j, thread) in c.threads.iter().enumerate() {
            if let Some(top) = thread.top() {
                for (y, &ly) in &top.env {
                    if ly == l {
                        return Some(format!(
                            "field `{name}` of {container} and variable `{y}` (thread {}) share {l}",
                            j + 1
                        ));
                    }
                }
            }
        }
        for (other, obj2) in c.memory.iter() {
            if other == container {
                continue;
            }
            for (y, &ly) in &obj2.fields {
                if ly == l {
                    return Some(format!(
                        "field `{name}` of {container} and field `{y}` of {other} share {l}"
                    ));
                }
            }
        }
    }
    None
}

struct AliasScan<'a> {
    name: &'a str,
    path: Vec<usize>,
    violation: Option<Violation>,
}

impl AliasScan<'_> {
    fn check(&mut self, c: &Configuration) {
        if self.violation.is_none() {
            if let Some(explanation) = alias_violation(c, self.name) {
                self.violation = Some(Violation {
                    schedule: self.path.clone(),
                    step_index: self.path.len().saturating_sub(1),
                    explanation,
                    early_dereference: false,
                });
            }
        }
    }
}

impl ScheduleVisitor for AliasScan<'_> {
    fn root(&mut self, cfg: &Configuration) {
        self.check(cfg);
    }

    fn enter_edge(&mut self, ctx: &EdgeContext<'_>) {
        self.path.push(ctx.record.thread);
        self.check(ctx.post);
    }

    fn leave_edge(&mut self) {
        self.path.pop();
    }

    fn finished(&self) -> bool {
        self.violation.is_some()
    }
}

/// Non-aliasing of a variable or field name over every visited
/// configuration: a location bound to the name is never simultaneously
/// reachable through any other binder (another variable of the same or
/// another thread, or any object field; for fields, any variable or any
/// other container).
pub fn check_nonaliased(x: &Exploration, name: &str) -> Result<Verdict, ExploreError> {
    let mut scan = AliasScan {
        name,
        path: Vec::new(),
        violation: None,
    };
    let stats = x.walk(&mut scan)?;
    Ok(Verdict::from_walk(
        scan.violation,
        stats.bound_exhausted > 0,
        x.bound(),
    ))
}

// ---------------------------------------------------------------------------
// Guard well-formedness (theorem hypotheses)
// ---------------------------------------------------------------------------

/// Whether an annotation target names a variable or a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Var,
    Field,
}

/// Result of the syntactic theorem-hypothesis check on a guard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wellformedness {
    pub ok: bool,
    pub diagnostics: Vec<String>,
}

/// Checks the variable restriction the race-freedom theorems place on
/// guards: value protection admits only `itself`; name protection admits
/// only `itself` for variables and `itself`/`this` for fields. Field names
/// reached through those roots are unrestricted.
pub fn check_guard_wellformed(
    guard: &Expr,
    protection: Protection,
    kind: TargetKind,
) -> Wellformedness {
    let allowed: &[&str] = match (protection, kind) {
        (Protection::Value, _) => &[ITSELF],
        (Protection::Name, TargetKind::Var) => &[ITSELF],
        (Protection::Name, TargetKind::Field) => &[ITSELF, THIS],
    };
    let mut vars = BTreeSet::new();
    guard.free_vars(&mut vars);
    let diagnostics: Vec<String> = vars
        .iter()
        .filter(|v| !allowed.contains(&v.as_str()))
        .map(|v| {
            format!(
                "guard `{guard}` uses variable `{v}`; {} protection of a {} admits only {:?} — \
                 the guard may denote different values at different access points, so no mutual-exclusion guarantee applies",
                match protection {
                    Protection::Name => "name",
                    Protection::Value => "value",
                },
                match kind {
                    TargetKind::Var => "variable",
                    TargetKind::Field => "field",
                },
                allowed
            )
        })
        .collect();
    Wellformedness {
        ok: diagnostics.is_empty(),
        diagnostics,
    }
}

// ---------------------------------------------------------------------------
// Race-freedom harness
// ---------------------------------------------------------------------------

/// Status of the combined theorem hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypothesesStatus {
    /// All hypotheses hold with complete exploration.
    Hold,
    /// All hypotheses hold on everything explored; some branch was
    /// bound-cut.
    HoldUpToBound,
    /// At least one hypothesis fails; the theorem promises nothing.
    Fail,
}

impl fmt::Display for HypothesesStatus {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        w.write_str(match self {
            HypothesesStatus::Hold => "hold",
            HypothesesStatus::HoldUpToBound => "hold up to bound",
            HypothesesStatus::Fail => "fail",
        })
    }
}

/// Outcome of the race-freedom harness for one annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TheoremReport {
    pub annotation: Annotation,
    pub wellformed: Wellformedness,
    /// Present only for name protection, which additionally requires the
    /// target to be non-aliased.
    pub nonaliased: Option<Verdict>,
    pub protection: Verdict,
    pub hypotheses: HypothesesStatus,
    /// Races at locations ever bound to the target (per trace).
    pub restricted_races: Vec<RaceFinding>,
    /// False exactly when the hypotheses hold yet restricted races exist —
    /// a soundness bug, never expected.
    pub sound: bool,
}

/// Collects races restricted to locations ever bound to the target: per
/// trace, a race finding counts iff its location lands in that trace's
/// protected set.
struct RestrictedRaces<'a> {
    target: NameTarget<'a>,
    path: Vec<usize>,
    /// Per path edge: L-contributions and the races found at the node this
    /// edge leads to.
    edges: Vec<(Vec<(Location, usize)>, Vec<RaceFinding>)>,
    root_races: Vec<RaceFinding>,
    bound_locations: BTreeMap<Location, usize>,
    seen: BTreeSet<RaceFinding>,
}

impl ScheduleVisitor for RestrictedRaces<'_> {
    fn node(&mut self, _cfg: &Configuration, children: &[EnabledChild<'_>]) {
        let mut scan = RaceScan {
            path: self.path.clone(),
            findings: Vec::new(),
        };
        scan.scan_node(children);
        match self.edges.last_mut() {
            Some((_, races)) => races.extend(scan.findings),
            None => self.root_races.extend(scan.findings),
        }
    }

    fn enter_edge(&mut self, ctx: &EdgeContext<'_>) {
        self.path.push(ctx.record.thread);
        let contribs = target_contributions(&self.target, ctx);
        for (l, _) in &contribs {
            *self.bound_locations.entry(*l).or_insert(0) += 1;
        }
        self.edges.push((contribs, Vec::new()));
    }

    fn leave_edge(&mut self) {
        self.path.pop();
        if let Some((contribs, _)) = self.edges.pop() {
            for (l, _) in contribs {
                match self.bound_locations.get_mut(&l) {
                    Some(1) => {
                        self.bound_locations.remove(&l);
                    }
                    Some(k) => *k -= 1,
                    None => {}
                }
            }
        }
    }

    fn leaf(&mut self, _final: &Configuration, _outcome: &crate::trace::TraceOutcome, _d: usize) {
        let on_path = self
            .root_races
            .iter()
            .chain(self.edges.iter().flat_map(|(_, r)| r.iter()));
        for race in on_path {
            if self.bound_locations.contains_key(&race.loc) && !self.seen.contains(race) {
                self.seen.insert(race.clone());
            }
        }
    }
}

/// The race-freedom harness: checks the theorem hypotheses for the
/// annotation (guard well-formedness; non-aliasing for name protection;
/// the protection verdict itself) and then detects races restricted to
/// locations ever bound to the target. When the hypotheses hold, the
/// restricted race set must be empty up to the explored bound; `sound`
/// records that implication.
pub fn verify_race_freedom(
    p: &Program,
    annotation: &Annotation,
    config: ExploreConfig,
) -> Result<TheoremReport, ExploreError> {
    let x = crate::explorer::explore(p, config)?;
    verify_race_freedom_in(&x, annotation)
}

/// Like [`verify_race_freedom`], over an existing exploration.
pub fn verify_race_freedom_in(
    x: &Exploration,
    annotation: &Annotation,
) -> Result<TheoremReport, ExploreError> {
    let kind = match &annotation.target {
        AnnotationTarget::Field(_) => TargetKind::Field,
        AnnotationTarget::Var { .. } => TargetKind::Var,
    };
    let wellformed = check_guard_wellformed(&annotation.guard, annotation.protection, kind);

    let target_name = match &annotation.target {
        AnnotationTarget::Field(f) => f.clone(),
        AnnotationTarget::Var { var, .. } => var.clone(),
    };
    let nonaliased = match annotation.protection {
        Protection::Name => Some(check_nonaliased(x, &target_name)?),
        Protection::Value => None,
    };
    let protection = check_annotation(x, annotation)?;

    let target = match &annotation.target {
        AnnotationTarget::Field(f) => NameTarget::Field(f),
        AnnotationTarget::Var { class, method, var } => NameTarget::Var { class, method, var },
    };
    let mut restricted = RestrictedRaces {
        target,
        path: Vec::new(),
        edges: Vec::new(),
        root_races: Vec::new(),
        bound_locations: BTreeMap::new(),
        seen: BTreeSet::new(),
    };
    x.walk(&mut restricted)?;
    let restricted_races: Vec<RaceFinding> = restricted.seen.into_iter().collect();

    let mut exact = wellformed.ok;
    let mut holds = wellformed.ok;
    for v in nonaliased.iter().chain([&protection]) {
        holds &= v.holds();
        exact &= v.is_exact_holds();
    }
    let hypotheses = if !holds {
        HypothesesStatus::Fail
    } else if exact {
        HypothesesStatus::Hold
    } else {
        HypothesesStatus::HoldUpToBound
    };
    let sound = hypotheses == HypothesesStatus::Fail || restricted_races.is_empty();

    Ok(TheoremReport {
        annotation: annotation.clone(),
        wellformed,
        nonaliased,
        protection,
        hypotheses,
        restricted_races,
        sound,
    })
}

// ---------------------------------------------------------------------------
// Guard inference
// ---------------------------------------------------------------------------

/// Result of trace-based guard inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceResult {
    /// Candidates whose protection verdict is `Holds` or `HoldsUpToBound`.
    pub guards: Vec<Expr>,
    /// True when the target was never accessed (name) or never had a
    /// protected location dereferenced (value): every candidate holds
    /// vacuously.
    pub vacuous: bool,
}

/// The default candidate set: `itself`, `this`, and field paths of depth at
/// most two rooted at either, over every field name in the program.
pub fn default_candidates(p: &Program) -> Vec<Expr> {
    let fields: Vec<Name> = p.field_names().into_iter().collect();
    let mut out = Vec::new();
    for root in [ITSELF, THIS] {
        out.push(Expr::var(root));
        for f in &fields {
            out.push(Expr::field(Expr::var(root), f));
            for g in &fields {
                out.push(Expr::field(Expr::field(Expr::var(root), f), g));
            }
        }
    }
    out
}

/// Returns the candidates under which the target is protected (in the given
/// reading) throughout the exploration. Candidates that fail to evaluate at
/// some access point are filtered out by the checkers themselves.
pub fn infer_guards(
    x: &Exploration,
    target: &AnnotationTarget,
    protection: Protection,
    candidates: &[Expr],
) -> Result<InferenceResult, ExploreError> {
    let mut guards = Vec::new();
    let mut vacuous = false;
    for cand in candidates {
        let name_target = match target {
            AnnotationTarget::Field(f) => NameTarget::Field(f),
            AnnotationTarget::Var { class, method, var } => {
                NameTarget::Var { class, method, var }
            }
        };
        let (verdict, activity) = match protection {
            Protection::Name => run_name_check(x, name_target, cand)?,
            Protection::Value => run_value_check(x, name_target, cand)?,
        };
        if verdict.holds() {
            if activity == 0 {
                vacuous = true;
            }
            guards.push(cand.clone());
        }
    }
    Ok(InferenceResult { guards, vacuous })
}

/// True when the annotation target exists in the program: any
/// syntactically occurring field, or a variable declared in the named
/// method implementation.
pub fn target_exists(p: &Program, target: &AnnotationTarget) -> bool {
    match target {
        AnnotationTarget::Field(f) => p.field_names().contains(f),
        AnnotationTarget::Var { class, method, var } => {
            let Some(def) = p.classes.get(class) else {
                return false;
            };
            let Some(body) = def.methods.get(method) else {
                return false;
            };
            let mut declared = BTreeSet::new();
            collect_decls(body, &mut declared);
            declared.contains(var)
        }
    }
}

fn collect_decls(c: &crate::syntax::Command, out: &mut BTreeSet<Name>) {
    use crate::syntax::Command;
    match c {
        Command::Decl(x, _) => {
            out.insert(x.clone());
        }
        Command::Seq(a, b) => {
            collect_decls(a, out);
            collect_decls(b, out);
        }
        Command::Sync(_, body) => collect_decls(body, out),
        _ => {}
    }
}
