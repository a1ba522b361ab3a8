//! Executed traces and their canonical text rendering.
//!
//! The dump format is stable and machine-readable; golden files depend on
//! it. One line per step:
//!
//! ```text
//! <index> t<thread> [<rule>] <head> | locks=<{l..}> | mem=<delta>
//! ```
//!
//! where `<head>` is the first atomic command of the firing thread's top
//! continuation in the pre-state (`<end>` for the structural elimination of
//! a finished thread), `locks` is the firing thread's lockset in the
//! pre-state, and `mem` lists post-state insertions (`+l=obj`) and updates
//! (`~l=obj`) in location order, space-separated, or `-` when the memory is
//! unchanged. Objects render as `Class{f=l, ..}#locks`. The dump ends with
//! an `outcome:` line and a `final:` line listing the final memory.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::access::StepEvents;
use crate::semantics::{Configuration, Memory, StepRecord, StuckCause};
use crate::syntax::head_display;

/// One step of a trace: the configuration it fired from, what fired, and
/// the access-model events extracted against the pre-state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub pre: Arc<Configuration>,
    pub record: StepRecord,
    pub events: StepEvents,
}

/// Why a trace stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceOutcome {
    /// Every thread finished and was removed from the pool.
    Completed,
    /// Threads remain but none is enabled and all are lock-blocked.
    Deadlock,
    /// Some thread hit an undefined premise; carries the first such cause.
    Stuck { thread: usize, cause: StuckCause },
    /// The step bound was reached with enabled threads remaining.
    BoundExhausted,
}

impl TraceOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            TraceOutcome::Completed => "completed",
            TraceOutcome::Deadlock => "deadlock",
            TraceOutcome::Stuck { .. } => "stuck",
            TraceOutcome::BoundExhausted => "bound-exhausted",
        }
    }
}

/// A maximal (or bound-cut) run from an initial configuration under one
/// schedule. Consecutive steps chain: the post-state of step `i` is the
/// pre-state of step `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub initial: Arc<Configuration>,
    pub steps: Vec<TraceStep>,
    pub final_config: Arc<Configuration>,
    pub outcome: TraceOutcome,
}

impl Trace {
    /// The schedule that produced this trace: 1-based thread indices.
    pub fn schedule(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.record.thread).collect()
    }

    /// The pre-state of step `i`, the final configuration for `i == len`.
    pub fn config_at(&self, i: usize) -> &Configuration {
        if i < self.steps.len() {
            &self.steps[i].pre
        } else {
            &self.final_config
        }
    }
}

fn format_lockset(locks: &alloc::collections::BTreeSet<crate::semantics::Location>) -> String {
    let inner: Vec<String> = locks.iter().map(|l| format!("{l}")).collect();
    format!("{{{}}}", inner.join(","))
}

fn format_memory_delta(pre: &Memory, post: &Memory) -> String {
    let mut parts: Vec<String> = Vec::new();
    for (l, obj) in post.iter() {
        match pre.get(l) {
            None => parts.push(format!("+{l}={obj}")),
            Some(old) if old != obj => parts.push(format!("~{l}={obj}")),
            Some(_) => {}
        }
    }
    if parts.is_empty() {
        "-".into()
    } else {
        parts.join(" ")
    }
}

/// Renders one step line of the dump format.
pub fn format_step(index: usize, step: &TraceStep, post_memory: &Memory) -> String {
    let thread = step.record.thread;
    let head = match step.pre.thread(thread).top() {
        Some(record) => head_display(&record.continuation),
        None => "<end>".into(),
    };
    format!(
        "{index} t{thread} [{rule}] {head} | locks={locks} | mem={delta}",
        rule = step.record.rule().as_str(),
        locks = format_lockset(&step.pre.thread(thread).lockset),
        delta = format_memory_delta(&step.pre.memory, post_memory),
    )
}

/// Full dump of a trace in the documented format.
pub fn format_trace(trace: &Trace) -> String {
    let mut out = String::new();
    for (i, step) in trace.steps.iter().enumerate() {
        let post_memory = &trace.config_at(i + 1).memory;
        out.push_str(&format_step(i, step, post_memory));
        out.push('\n');
    }
    out.push_str(&format!(
        "outcome: {} steps={}\n",
        trace.outcome.label(),
        trace.steps.len()
    ));
    let final_mem: Vec<String> = trace
        .final_config
        .memory
        .iter()
        .map(|(l, o)| format!("{l}={o}"))
        .collect();
    out.push_str(&format!("final: {}\n", final_mem.join(" ")));
    out
}
