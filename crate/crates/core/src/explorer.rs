//! Deterministic execution, bounded-exhaustive interleaving exploration, and
//! lock-soundness assertions.
//!
//! Reduction is deterministic per thread, so exploration branches only on
//! the choice of enabled thread. The explorer enumerates every schedule
//! depth-first up to a micro-step bound, with no partial-order reduction and
//! no state deduplication: the checkers quantify over every derivation, and
//! pruning would need an independence argument the calculus does not supply.
//!
//! [`explore`] records the schedule tree in a compact form (two words per
//! step). Checkers do not replay stored configurations; they re-walk the
//! tree with a [`ScheduleVisitor`], re-executing each edge exactly once per
//! pass. Walks are deterministic (children in ascending thread order), so a
//! re-walk visits exactly the recorded tree.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;

use alloc::vec::Vec;
use core::fmt;

use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::access::{events_of_step, StepEvents};
use crate::semantics::{
    enabled, initial_config, step, Configuration, Location, RuleName, StepError, StepRecord,
    StuckCause,
};
use crate::syntax::Program;
use crate::trace::{Trace, TraceOutcome, TraceStep};

/// How a deterministic run picks among enabled threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulePolicy {
    /// Always the smallest enabled index.
    Leftmost,
    /// The smallest enabled index after the previously fired one, cyclically.
    RoundRobin,
    /// Uniform pseudo-random choice from a fixed seed; reproducible across
    /// runs and platforms.
    Seeded(u64),
}

/// Exploration limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreConfig {
    /// Maximum micro-steps per trace.
    pub bound: usize,
    /// Maximum configurations visited across the whole exploration.
    pub state_cap: usize,
    /// Check lock invariants on every visited step.
    pub check_invariants: bool,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            bound: 10_000,
            state_cap: 1_000_000,
            check_invariants: true,
        }
    }
}

/// Exploration-level failures (distinct from per-trace outcomes).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error("state cap of {cap} visited configurations exceeded")]
    StateCapExceeded { cap: usize },
    #[error("program has no main block")]
    NoMain,
    #[error("access extraction failed on an enabled thread: {0} (interpreter bug)")]
    EventExtraction(String),
}

/// One enabled successor of a configuration, as shown to visitors.
pub struct EnabledChild<'a> {
    pub thread: usize,
    pub record: &'a StepRecord,
    pub events: &'a StepEvents,
    pub post: &'a Configuration,
}

/// Context for one edge of the schedule tree.
pub struct EdgeContext<'a> {
    pub pre: &'a Configuration,
    pub post: &'a Configuration,
    pub record: &'a StepRecord,
    pub events: &'a StepEvents,
    /// 0-based step index along the current path.
    pub depth: usize,
}

/// Depth-first observer of the schedule tree. `enter_edge`/`leave_edge`
/// bracket each subtree; `node` sees every expanded configuration with all
/// its enabled successors (the basis for race detection); `leaf` sees every
/// terminal or bound-cut configuration.
pub trait ScheduleVisitor {
    fn root(&mut self, _cfg: &Configuration) {}
    fn node(&mut self, _cfg: &Configuration, _children: &[EnabledChild<'_>]) {}
    fn enter_edge(&mut self, _ctx: &EdgeContext<'_>) {}
    fn leave_edge(&mut self) {}
    fn leaf(&mut self, _final_config: &Configuration, _outcome: &TraceOutcome, _depth: usize) {}
    /// Visitors may stop the walk early (first counterexample found).
    fn finished(&self) -> bool {
        false
    }
}

/// Aggregate counts for one walk or exploration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WalkStats {
    pub configurations_visited: usize,
    pub edges: usize,
    pub completed: usize,
    pub deadlocked: usize,
    pub stuck: usize,
    pub bound_exhausted: usize,
    pub max_depth: usize,
    pub finished_early: bool,
    /// Lock-invariant violations found (a non-empty list is an interpreter
    /// bug).
    pub invariant_violations: Vec<String>,
}

impl WalkStats {
    pub fn leaves(&self) -> usize {
        self.completed + self.deadlocked + self.stuck + self.bound_exhausted
    }
}

struct ChildSlot {
    thread: usize,
    record: StepRecord,
    events: StepEvents,
    post: Option<Configuration>,
}

struct Frame {
    cfg: Configuration,
    depth: usize,
    children: Vec<ChildSlot>,
    next: usize,
}

enum Classified {
    Leaf(TraceOutcome),
    Expand(Vec<ChildSlot>),
}

fn classify(
    p: &Program,
    cfg: &Configuration,
    depth: usize,
    config: &ExploreConfig,
) -> Result<Classified, ExploreError> {
    if cfg.threads.is_empty() {
        return Ok(Classified::Leaf(TraceOutcome::Completed));
    }
    let mut children = Vec::new();
    let mut first_stuck = None;
    for n in 1..=cfg.threads.len() {
        match step(p, cfg, n) {
            Ok((post, record)) => {
                let events = events_of_step(p, cfg, n)
                    .map_err(|e| ExploreError::EventExtraction(format!("{e}")))?;
                children.push(ChildSlot {
                    thread: n,
                    record,
                    events,
                    post: Some(post),
                });
            }
            Err(StepError::Blocked(_)) => {}
            Err(StepError::Stuck(cause)) => {
                if first_stuck.is_none() {
                    first_stuck = Some((n, cause));
                }
            }
        }
    }
    if children.is_empty() {
        return Ok(Classified::Leaf(match first_stuck {
            Some((thread, cause)) => TraceOutcome::Stuck { thread, cause },
            None => TraceOutcome::Deadlock,
        }));
    }
    if depth >= config.bound {
        return Ok(Classified::Leaf(TraceOutcome::BoundExhausted));
    }
    Ok(Classified::Expand(children))
}

/// Walks every schedule of `p` up to the configured bound, driving
/// `visitor`. Children are expanded in ascending thread order, so the walk
/// order is deterministic.
pub fn walk_schedules(
    p: &Program,
    config: &ExploreConfig,
    visitor: &mut dyn ScheduleVisitor,
) -> Result<WalkStats, ExploreError> {
    if p.main_body().is_none() {
        return Err(ExploreError::NoMain);
    }
    let mut stats = WalkStats::default();
    let root = initial_config(p);
    visitor.root(&root);

    let mut stack: Vec<Frame> = Vec::new();
    let begin = |cfg: Configuration,
                     depth: usize,
                     stats: &mut WalkStats,
                     visitor: &mut dyn ScheduleVisitor|
     -> Result<Option<Frame>, ExploreError> {
        stats.configurations_visited += 1;
        if stats.configurations_visited > config.state_cap {
            return Err(ExploreError::StateCapExceeded {
                cap: config.state_cap,
            });
        }
        stats.max_depth = stats.max_depth.max(depth);
        match classify(p, &cfg, depth, config)? {
            Classified::Leaf(outcome) => {
                match outcome {
                    TraceOutcome::Completed => stats.completed += 1,
                    TraceOutcome::Deadlock => stats.deadlocked += 1,
                    TraceOutcome::Stuck { .. } => stats.stuck += 1,
                    TraceOutcome::BoundExhausted => stats.bound_exhausted += 1,
                }
                visitor.leaf(&cfg, &outcome, depth);
                Ok(None)
            }
            Classified::Expand(children) => {
                let borrowed: Vec<EnabledChild<'_>> = children
                    .iter()
                    .map(|c| EnabledChild {
                        thread: c.thread,
                        record: &c.record,
                        events: &c.events,
                        post: c.post.as_ref().expect("unexpanded child"),
                    })
                    .collect();
                visitor.node(&cfg, &borrowed);
                Ok(Some(Frame {
                    cfg,
                    depth,
                    children,
                    next: 0,
                }))
            }
        }
    };

    if let Some(frame) = begin(root, 0, &mut stats, visitor)? {
        stack.push(frame);
    }
    while let Some(frame) = stack.last_mut() {
        if visitor.finished() {
            stats.finished_early = true;
            break;
        }
        if frame.next >= frame.children.len() {
            stack.pop();
            if !stack.is_empty() {
                visitor.leave_edge();
            }
            continue;
        }
        let idx = frame.next;
        frame.next += 1;
        let post = frame.children[idx].post.take().expect("child visited once");
        let depth = frame.depth;
        {
            let frame = &*frame;
            if config.check_invariants {
                for v in assert_lock_invariants(
                    &frame.cfg,
                    &post,
                    &frame.children[idx].record,
                ) {
                    if stats.invariant_violations.len() < 32 {
                        stats.invariant_violations.push(format!("{v}"));
                    }
                }
            }
            visitor.enter_edge(&EdgeContext {
                pre: &frame.cfg,
                post: &post,
                record: &frame.children[idx].record,
                events: &frame.children[idx].events,
                depth,
            });
        }
        stats.edges += 1;
        match begin(post, depth + 1, &mut stats, visitor)? {
            Some(child_frame) => stack.push(child_frame),
            None => visitor.leave_edge(),
        }
    }
    Ok(stats)
}

/// Compact schedule-tree node: the edge that reached it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TreeNode {
    parent: Option<u32>,
    thread: u32,
}

/// A terminal of the schedule tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafRecord {
    /// Last edge on the path, `None` when the initial configuration is
    /// already terminal.
    last_edge: Option<u32>,
    pub outcome: TraceOutcome,
    pub depth: usize,
}

/// The bounded exploration of a program: schedule tree, leaf outcomes, and
/// statistics. Holds the program and limits so checkers can re-walk it.
#[derive(Debug, Clone)]
pub struct Exploration {
    program: Program,
    config: ExploreConfig,
    nodes: Vec<TreeNode>,
    leaves: Vec<LeafRecord>,
    pub stats: WalkStats,
}

struct TreeBuilder {
    nodes: Vec<TreeNode>,
    leaves: Vec<LeafRecord>,
    path: Vec<u32>,
}

impl ScheduleVisitor for TreeBuilder {
    fn enter_edge(&mut self, ctx: &EdgeContext<'_>) {
        let id = self.nodes.len() as u32;
        self.nodes.push(TreeNode {
            parent: self.path.last().copied(),
            thread: ctx.record.thread as u32,
        });
        self.path.push(id);
    }

    fn leave_edge(&mut self) {
        self.path.pop();
    }

    fn leaf(&mut self, _final_config: &Configuration, outcome: &TraceOutcome, depth: usize) {
        self.leaves.push(LeafRecord {
            last_edge: self.path.last().copied(),
            outcome: outcome.clone(),
            depth,
        });
    }
}

/// Exhaustively explores every schedule of `p` up to `config.bound`
/// micro-steps per trace.
pub fn explore(p: &Program, config: ExploreConfig) -> Result<Exploration, ExploreError> {
    let mut builder = TreeBuilder {
        nodes: Vec::new(),
        leaves: Vec::new(),
        path: Vec::new(),
    };
    let stats = walk_schedules(p, &config, &mut builder)?;
    Ok(Exploration {
        program: p.clone(),
        config,
        nodes: builder.nodes,
        leaves: builder.leaves,
        stats,
    })
}

impl Exploration {
    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn config(&self) -> &ExploreConfig {
        &self.config
    }

    pub fn bound(&self) -> usize {
        self.config.bound
    }

    /// Number of maximal (or bound-cut) traces.
    pub fn trace_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaves(&self) -> &[LeafRecord] {
        &self.leaves
    }

    /// True when some branch was cut by the step bound; universally
    /// quantified verdicts then weaken to "holds up to bound".
    pub fn bound_exhausted(&self) -> bool {
        self.stats.bound_exhausted > 0
    }

    /// The schedule of a leaf, root-first.
    pub fn leaf_schedule(&self, leaf: &LeafRecord) -> Vec<usize> {
        self.schedule_to(leaf.last_edge)
    }

    fn schedule_to(&self, edge: Option<u32>) -> Vec<usize> {
        let mut rev = Vec::new();
        let mut cur = edge;
        while let Some(id) = cur {
            let node = &self.nodes[id as usize];
            rev.push(node.thread as usize);
            cur = node.parent;
        }
        rev.reverse();
        rev
    }

    /// Re-walks the recorded tree, re-executing every edge once. Invariant
    /// checking is skipped: it already ran when the exploration was built.
    pub fn walk(&self, visitor: &mut dyn ScheduleVisitor) -> Result<WalkStats, ExploreError> {
        let config = ExploreConfig {
            check_invariants: false,
            ..self.config
        };
        walk_schedules(&self.program, &config, visitor)
    }

    /// Materializes the trace of one leaf by replaying its schedule.
    pub fn leaf_trace(&self, leaf: &LeafRecord) -> Trace {
        replay(&self.program, &self.leaf_schedule(leaf))
            .expect("recorded schedules replay cleanly")
    }

    /// Iterates all traces. Each is materialized on demand.
    pub fn traces(&self) -> impl Iterator<Item = Trace> + '_ {
        self.leaves.iter().map(|leaf| self.leaf_trace(leaf))
    }
}

fn classify_halt(p: &Program, cfg: &Configuration) -> Option<TraceOutcome> {
    if cfg.threads.is_empty() {
        return Some(TraceOutcome::Completed);
    }
    let mut first_stuck = None;
    for n in 1..=cfg.threads.len() {
        match step(p, cfg, n) {
            Ok(_) => return None,
            Err(StepError::Blocked(_)) => {}
            Err(StepError::Stuck(cause)) => {
                if first_stuck.is_none() {
                    first_stuck = Some((n, cause));
                }
            }
        }
    }
    Some(match first_stuck {
        Some((thread, cause)) => TraceOutcome::Stuck { thread, cause },
        None => TraceOutcome::Deadlock,
    })
}

/// True iff threads remain but none can fire a step.
pub fn detect_deadlock(p: &Program, c: &Configuration) -> bool {
    !c.threads.is_empty() && enabled(p, c).is_empty()
}

/// Runs one schedule chosen by `policy`, up to `max_steps` micro-steps.
pub fn run_deterministic(p: &Program, policy: SchedulePolicy, max_steps: usize) -> Trace {
    let mut rng = match policy {
        SchedulePolicy::Seeded(seed) => Some(rand_chacha::ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut cursor = 0usize;
    let initial = Arc::new(initial_config(p));
    let mut cur = initial.clone();
    let mut steps: Vec<TraceStep> = Vec::new();

    loop {
        if let Some(outcome) = classify_halt(p, &cur) {
            return Trace {
                initial,
                steps,
                final_config: cur,
                outcome,
            };
        }
        if steps.len() >= max_steps {
            return Trace {
                initial,
                steps,
                final_config: cur,
                outcome: TraceOutcome::BoundExhausted,
            };
        }
        let en = enabled(p, &cur);
        let n = match policy {
            SchedulePolicy::Leftmost => en[0],
            SchedulePolicy::RoundRobin => {
                let next = en.iter().copied().find(|i| *i > cursor).unwrap_or(en[0]);
                cursor = next;
                next
            }
            SchedulePolicy::Seeded(_) => {
                let rng = rng.as_mut().expect("seeded policy has an rng");
                en[(rng.next_u32() as usize) % en.len()]
            }
        };
        let (post, record) = step(p, &cur, n).expect("enabled thread steps");
        let events = events_of_step(p, &cur, n).expect("events of enabled thread");
        steps.push(TraceStep {
            pre: cur,
            record,
            events,
        });
        cur = Arc::new(post);
    }
}

/// A replay failed: the schedule named a thread that cannot fire.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("replay failed at step {at} (thread {thread}): {error}")]
pub struct ReplayError {
    pub at: usize,
    pub thread: usize,
    pub error: StepError,
}

/// Re-executes a recorded schedule. Reduction is deterministic per thread,
/// so replaying a trace's schedule reproduces it bit-exactly, allocation
/// indices included.
pub fn replay(p: &Program, schedule: &[usize]) -> Result<Trace, ReplayError> {
    let initial = Arc::new(initial_config(p));
    let mut cur = initial.clone();
    let mut steps = Vec::with_capacity(schedule.len());
    for (at, &n) in schedule.iter().enumerate() {
        if n == 0 || n > cur.threads.len() {
            return Err(ReplayError {
                at,
                thread: n,
                error: StepError::Stuck(StuckCause::BareInvocation),
            });
        }
        let (post, record) = step(p, &cur, n).map_err(|error| ReplayError {
            at,
            thread: n,
            error,
        })?;
        let events = events_of_step(p, &cur, n).expect("events of enabled thread");
        steps.push(TraceStep {
            pre: cur,
            record,
            events,
        });
        cur = Arc::new(post);
    }
    let outcome = classify_halt(p, &cur).unwrap_or(TraceOutcome::BoundExhausted);
    Ok(Trace {
        initial,
        steps,
        final_config: cur,
        outcome,
    })
}

/// A breach of the lock-soundness properties. Any instance is an
/// interpreter bug: the properties are theorems of the reduction rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LockInvariantViolation {
    /// Two threads hold the same location.
    LocksetsOverlap {
        thread_a: usize,
        thread_b: usize,
        loc: Location,
    },
    /// A spawn produced a thread that already holds locks.
    SpawnedHoldingLocks { thread: usize },
    /// A finished (empty-stack) thread still holds locks.
    TerminatedHoldingLocks { thread: usize },
    /// The union of all locksets changed on a rule that must preserve it,
    /// or failed to change on acquire/release.
    UnionChanged { rule: RuleName, detail: String },
    /// Reentrant acquisition by a thread that does not hold the lock.
    ReentrantWithoutHold { thread: usize, loc: Location },
    /// Unlock fired without the lock held or with a zero counter.
    UnlockWithoutHold { thread: usize, loc: Location },
    /// A lock counter disagrees with the number of threads holding the
    /// location (positive counter requires exactly one holder).
    CounterHolderMismatch {
        loc: Location,
        counter: u32,
        holders: usize,
    },
}

impl fmt::Display for LockInvariantViolation {
    fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LockInvariantViolation::LocksetsOverlap {
                thread_a,
                thread_b,
                loc,
            } => write!(
                w,
                "locksets of threads {thread_a} and {thread_b} both contain {loc}"
            ),
            LockInvariantViolation::SpawnedHoldingLocks { thread } => {
                write!(w, "spawned thread {thread} starts with a non-empty lockset")
            }
            LockInvariantViolation::TerminatedHoldingLocks { thread } => {
                write!(w, "terminated thread {thread} still holds locks")
            }
            LockInvariantViolation::UnionChanged { rule, detail } => {
                write!(w, "global lockset union misbehaved under {rule}: {detail}")
            }
            LockInvariantViolation::ReentrantWithoutHold { thread, loc } => {
                write!(w, "thread {thread} re-entered {loc} without holding it")
            }
            LockInvariantViolation::UnlockWithoutHold { thread, loc } => {
                write!(w, "thread {thread} unlocked {loc} without holding it")
            }
            LockInvariantViolation::CounterHolderMismatch {
                loc,
                counter,
                holders,
            } => write!(
                w,
                "{loc} has lock counter {counter} but {holders} holder(s)"
            ),
        }
    }
}

fn lockset_union(c: &Configuration) -> BTreeSet<Location> {
    c.threads
        .iter()
        .flat_map(|t| t.lockset.iter().copied())
        .collect()
}

/// Checks the lock-soundness properties across one step: pairwise-disjoint
/// locksets, spawn/termination lock emptiness, union monotonicity tied to
/// acquire/release, reentrancy and unlock preconditions, and
/// counter/holder coherence. Empty on every reachable step.
pub fn assert_lock_invariants(
    pre: &Configuration,
    post: &Configuration,
    record: &StepRecord,
) -> Vec<LockInvariantViolation> {
    let mut out = Vec::new();
    let n = record.thread;

    // Pairwise disjointness of post-state locksets.
    for a in 0..post.threads.len() {
        for b in a + 1..post.threads.len() {
            if let Some(loc) = post.threads[a]
                .lockset
                .intersection(&post.threads[b].lockset)
                .next()
            {
                out.push(LockInvariantViolation::LocksetsOverlap {
                    thread_a: a + 1,
                    thread_b: b + 1,
                    loc: *loc,
                });
            }
        }
    }

    // Finished threads hold nothing.
    for (i, t) in post.threads.iter().enumerate() {
        if t.stack.is_empty() && !t.lockset.is_empty() {
            out.push(LockInvariantViolation::TerminatedHoldingLocks { thread: i + 1 });
        }
    }

    // A spawned thread starts with an empty lockset (it lands at the
    // parent's index).
    if record.rule() == RuleName::Spawn && !post.threads[n - 1].lockset.is_empty() {
        out.push(LockInvariantViolation::SpawnedHoldingLocks { thread: n });
    }

    // The union of locksets grows exactly on acquire (0 -> 1) and shrinks
    // exactly on release (1 -> 0).
    let pre_union = lockset_union(pre);
    let post_union = lockset_union(post);
    let rule = record.rule();
    match rule {
        RuleName::AcquireLock => {
            let l = record.lock.expect("lock rules carry an effect").loc;
            let mut want = pre_union.clone();
            want.insert(l);
            if post_union != want {
                out.push(LockInvariantViolation::UnionChanged {
                    rule,
                    detail: format!("expected union to gain exactly {l}"),
                });
            }
        }
        RuleName::ReleaseLock => {
            let l = record.lock.expect("lock rules carry an effect").loc;
            let mut want = pre_union.clone();
            want.remove(&l);
            if post_union != want {
                out.push(LockInvariantViolation::UnionChanged {
                    rule,
                    detail: format!("expected union to lose exactly {l}"),
                });
            }
        }
        _ => {
            if pre_union != post_union {
                out.push(LockInvariantViolation::UnionChanged {
                    rule,
                    detail: "union must be preserved".into(),
                });
            }
        }
    }

    // Preconditions of the reentrant and unlock rules, re-checked against
    // the pre-state.
    if let Some(effect) = record.lock {
        let held = pre
            .threads
            .get(n - 1)
            .is_some_and(|t| t.lockset.contains(&effect.loc));
        match rule {
            RuleName::ReentrantLock => {
                if !held || effect.pre_count == 0 {
                    out.push(LockInvariantViolation::ReentrantWithoutHold {
                        thread: n,
                        loc: effect.loc,
                    });
                }
            }
            RuleName::DecreaseLock | RuleName::ReleaseLock => {
                if !held || effect.pre_count == 0 {
                    out.push(LockInvariantViolation::UnlockWithoutHold {
                        thread: n,
                        loc: effect.loc,
                    });
                }
            }
            _ => {}
        }
    }

    // Counter/holder coherence in the post-state.
    for (loc, obj) in post.memory.iter() {
        let holders = post
            .threads
            .iter()
            .filter(|t| t.lockset.contains(&loc))
            .count();
        let coherent = (obj.locks > 0 && holders == 1) || (obj.locks == 0 && holders == 0);
        if !coherent {
            out.push(LockInvariantViolation::CounterHolderMismatch {
                loc,
                counter: obj.locks,
                holders,
            });
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    fn skip_main() -> Program {
        parse_program("main { skip; }").unwrap()
    }

    #[test]
    fn trivial_main_completes_quickly() {
        let t = run_deterministic(&skip_main(), SchedulePolicy::Leftmost, 100);
        assert_eq!(t.outcome, TraceOutcome::Completed);
        // skip; skip -> seq-skip, pop, end: three steps.
        assert_eq!(t.steps.len(), 3);
        assert!(t.final_config.threads.is_empty());
    }

    #[test]
    fn bound_exhaustion_is_reported() {
        let t = run_deterministic(&skip_main(), SchedulePolicy::Leftmost, 1);
        assert_eq!(t.outcome, TraceOutcome::BoundExhausted);
    }

    #[test]
    fn single_threaded_program_has_one_trace() {
        let x = explore(&skip_main(), ExploreConfig::default()).unwrap();
        assert_eq!(x.trace_count(), 1);
        assert_eq!(x.stats.completed, 1);
        assert!(x.stats.invariant_violations.is_empty());
    }

    #[test]
    fn state_cap_is_a_hard_error() {
        let err = explore(
            &skip_main(),
            ExploreConfig {
                state_cap: 2,
                ..ExploreConfig::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, ExploreError::StateCapExceeded { cap: 2 }));
    }

    #[test]
    fn replay_reproduces_a_trace_bit_exactly() {
        let p = parse_program(
            "class A { method m() { decl t = new Object{}; } } main { spawn new A{}.m(); decl u = new Object{}; }",
        )
        .unwrap();
        let t = run_deterministic(&p, SchedulePolicy::Seeded(7), 200);
        assert_eq!(t.outcome, TraceOutcome::Completed);
        let again = replay(&p, &t.schedule()).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn detect_deadlock_on_empty_pool_is_false() {
        let p = skip_main();
        let t = run_deterministic(&p, SchedulePolicy::Leftmost, 100);
        assert!(!detect_deadlock(&p, &t.final_config));
    }
}
