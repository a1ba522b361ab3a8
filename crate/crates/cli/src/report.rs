//! Machine-readable report schema (version 1).
//!
//! Field order is fixed by struct declaration order and every collection is
//! a vector, so serializing, parsing, and reserializing a report is
//! byte-identical.

use serde::{Deserialize, Serialize};

use guardedby_core::access::AccessMode;
use guardedby_core::checkers::{
    HypothesesStatus, RaceFinding, TheoremReport, Verdict, Violation,
};
use guardedby_core::explorer::WalkStats;
use guardedby_core::syntax::Annotation;
use guardedby_core::trace::{Trace, TraceOutcome};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub program: ProgramInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exploration: Option<ExplorationInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunInfo>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<AnnotationVerdict>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub races: Vec<RaceJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theorems: Vec<TheoremJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inference: Option<InferenceJson>,
    pub summary: Summary,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramInfo {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationInfo {
    pub bound: usize,
    pub state_cap: usize,
    pub configurations_visited: usize,
    pub traces: TraceCounts,
    /// True when no branch hit the step bound: verdicts are exact.
    pub complete: bool,
    pub lock_invariant_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCounts {
    pub completed: usize,
    pub deadlocked: usize,
    pub stuck: usize,
    pub bound_exhausted: usize,
}

pub fn exploration_info(stats: &WalkStats, bound: usize, state_cap: usize) -> ExplorationInfo {
    ExplorationInfo {
        bound,
        state_cap,
        configurations_visited: stats.configurations_visited,
        traces: TraceCounts {
            completed: stats.completed,
            deadlocked: stats.deadlocked,
            stuck: stats.stuck,
            bound_exhausted: stats.bound_exhausted,
        },
        complete: stats.bound_exhausted == 0,
        lock_invariant_violations: stats.invariant_violations.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub scheduler: String,
    pub max_steps: usize,
    pub steps: usize,
    pub outcome: String,
    pub schedule: Vec<usize>,
}

pub fn run_info(trace: &Trace, scheduler: &str, max_steps: usize) -> RunInfo {
    RunInfo {
        scheduler: scheduler.to_string(),
        max_steps,
        steps: trace.steps.len(),
        outcome: trace.outcome.label().to_string(),
        schedule: trace.schedule(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationVerdict {
    pub annotation: String,
    pub verdict: VerdictJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictJson {
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<CounterexampleJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleJson {
    pub schedule: Vec<usize>,
    pub step_index: usize,
    pub explanation: String,
    pub early_dereference: bool,
}

pub fn verdict_json(v: &Verdict) -> VerdictJson {
    match v {
        Verdict::Holds => VerdictJson {
            status: "holds".into(),
            bound: None,
            counterexample: None,
        },
        Verdict::HoldsUpToBound { bound } => VerdictJson {
            status: "holds-up-to-bound".into(),
            bound: Some(*bound),
            counterexample: None,
        },
        Verdict::Violated(violation) => VerdictJson {
            status: "violated".into(),
            bound: None,
            counterexample: Some(counterexample_json(violation)),
        },
    }
}

fn counterexample_json(v: &Violation) -> CounterexampleJson {
    CounterexampleJson {
        schedule: v.schedule.clone(),
        step_index: v.step_index,
        explanation: v.explanation.clone(),
        early_dereference: v.early_dereference,
    }
}

pub fn annotation_verdict(a: &Annotation, v: &Verdict) -> AnnotationVerdict {
    AnnotationVerdict {
        annotation: a.to_string(),
        verdict: verdict_json(v),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceJson {
    pub location: String,
    pub field: String,
    pub thread_a: usize,
    pub thread_b: usize,
    pub mode_a: String,
    pub mode_b: String,
    pub schedule: Vec<usize>,
}

fn mode_str(m: AccessMode) -> String {
    match m {
        AccessMode::Read => "read".into(),
        AccessMode::Write => "write".into(),
    }
}

pub fn race_json(f: &RaceFinding) -> RaceJson {
    RaceJson {
        location: f.loc.to_string(),
        field: f.field.clone(),
        thread_a: f.thread_a,
        thread_b: f.thread_b,
        mode_a: mode_str(f.mode_a),
        mode_b: mode_str(f.mode_b),
        schedule: f.schedule.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremJson {
    pub annotation: String,
    pub wellformed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wellformed_diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonaliased: Option<VerdictJson>,
    pub protection: VerdictJson,
    pub hypotheses: String,
    pub restricted_races: Vec<RaceJson>,
    pub sound: bool,
}

pub fn theorem_json(r: &TheoremReport) -> TheoremJson {
    TheoremJson {
        annotation: r.annotation.to_string(),
        wellformed: r.wellformed.ok,
        wellformed_diagnostics: r.wellformed.diagnostics.clone(),
        nonaliased: r.nonaliased.as_ref().map(verdict_json),
        protection: verdict_json(&r.protection),
        hypotheses: match r.hypotheses {
            HypothesesStatus::Hold => "hold".into(),
            HypothesesStatus::HoldUpToBound => "hold-up-to-bound".into(),
            HypothesesStatus::Fail => "fail".into(),
        },
        restricted_races: r.restricted_races.iter().map(race_json).collect(),
        sound: r.sound,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceJson {
    pub target: String,
    pub semantics: String,
    pub candidates: usize,
    pub guards: Vec<String>,
    pub vacuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub outcome: String,
    pub exit_code: i32,
}

/// Trace steps in machine-readable form, used by `run --format json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceJson {
    pub steps: Vec<TraceStepJson>,
    pub outcome: String,
    pub final_memory: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStepJson {
    pub index: usize,
    pub thread: usize,
    pub rule: String,
    pub head: String,
    pub locks: Vec<String>,
    pub memory_delta: Vec<String>,
}

pub fn trace_json(t: &Trace) -> TraceJson {
    let steps = t
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let pre = &s.pre;
            let post = t.config_at(i + 1);
            let head = match pre.thread(s.record.thread).top() {
                Some(r) => guardedby_core::syntax::head_display(&r.continuation),
                None => "<end>".to_string(),
            };
            let mut memory_delta = Vec::new();
            for (l, obj) in post.memory.iter() {
                match pre.memory.get(l) {
                    None => memory_delta.push(format!("+{l}={obj}")),
                    Some(old) if old != obj => memory_delta.push(format!("~{l}={obj}")),
                    Some(_) => {}
                }
            }
            TraceStepJson {
                index: i,
                thread: s.record.thread,
                rule: s.record.rule().as_str().to_string(),
                head,
                locks: pre
                    .thread(s.record.thread)
                    .lockset
                    .iter()
                    .map(|l| l.to_string())
                    .collect(),
                memory_delta,
            }
        })
        .collect();
    TraceJson {
        steps,
        outcome: t.outcome.label().to_string(),
        final_memory: t
            .final_config
            .memory
            .iter()
            .map(|(l, o)| format!("{l}={o}"))
            .collect(),
    }
}

/// Exit-code vocabulary shared by every subcommand.
pub fn outcome_exit(outcome: &TraceOutcome) -> (String, i32) {
    match outcome {
        TraceOutcome::Completed => ("completed".into(), 0),
        TraceOutcome::Deadlock => ("deadlock".into(), 4),
        TraceOutcome::Stuck { thread, cause } => (format!("stuck (thread {thread}: {cause})"), 5),
        TraceOutcome::BoundExhausted => ("bound-exhausted".into(), 3),
    }
}
