//! `guardedby` — run, explore, and check locking annotations on programs of
//! the core calculus.
//!
//! Exit codes (shared vocabulary across subcommands):
//!   0  success / everything holds
//!   1  violation, race, or empty inference result
//!   2  input or resource error (parse, validation, unknown target, caps)
//!   3  bound exhausted
//!   4  deadlock
//!   5  stuck thread

mod report;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use guardedby_core::checkers::{
    check_annotation, detect_races, infer_guards, target_exists, verify_race_freedom_in,
    Verdict,
};
use guardedby_core::explorer::{
    explore, run_deterministic, ExploreConfig, Exploration, SchedulePolicy,
};
use guardedby_core::parser::{parse_annotations, parse_program};
use guardedby_core::syntax::{Annotation, AnnotationTarget, Program, Protection};
use guardedby_core::trace::format_trace;
use guardedby_core::validate::validate_program;

use report::{Report, Summary, SCHEMA_VERSION};

const DEFAULT_BOUND: usize = 10_000;
const DEFAULT_STATE_CAP: usize = 1_000_000;
const STATE_CAP_ENV: &str = "GUARDEDBY_STATE_CAP";

#[derive(Parser)]
#[command(name = "guardedby", version, about = "Interpreter, bounded explorer, and locking-discipline checker for a concurrent object calculus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct ExploreArgs {
    /// Maximum micro-steps per trace.
    #[arg(long, default_value_t = DEFAULT_BOUND)]
    bound: usize,
    /// Maximum configurations visited (default also via GUARDEDBY_STATE_CAP).
    #[arg(long)]
    state_cap: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

impl ExploreArgs {
    fn config(&self) -> ExploreConfig {
        let env_cap = std::env::var(STATE_CAP_ENV)
            .ok()
            .and_then(|v| v.parse().ok());
        ExploreConfig {
            bound: self.bound,
            state_cap: self.state_cap.or(env_cap).unwrap_or(DEFAULT_STATE_CAP),
            check_invariants: true,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Execute one schedule and dump the trace.
    Run {
        program: PathBuf,
        /// leftmost, roundrobin, or seed:<n>.
        #[arg(long, default_value = "leftmost")]
        scheduler: String,
        #[arg(long, default_value_t = DEFAULT_BOUND)]
        max_steps: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Check every annotation in a sidecar file over an exhaustive bounded
    /// exploration.
    Check {
        program: PathBuf,
        annotations: PathBuf,
        #[command(flatten)]
        explore: ExploreArgs,
        /// Additionally run the race-freedom harness per annotation.
        #[arg(long)]
        verify_theorems: bool,
    },
    /// Detect data races over an exhaustive bounded exploration.
    Races {
        program: PathBuf,
        #[command(flatten)]
        explore: ExploreArgs,
    },
    /// Infer guard expressions for a field or variable.
    Infer {
        program: PathBuf,
        /// field:<f> or var:<Class>.<method>.<x>.
        #[arg(long)]
        target: String,
        /// name or value protection.
        #[arg(long)]
        semantics: SemanticsArg,
        #[command(flatten)]
        explore: ExploreArgs,
    },
    /// Explore all schedules and summarize outcomes.
    Explore {
        program: PathBuf,
        #[command(flatten)]
        explore: ExploreArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SemanticsArg {
    Name,
    Value,
}

impl From<SemanticsArg> for Protection {
    fn from(s: SemanticsArg) -> Protection {
        match s {
            SemanticsArg::Name => Protection::Name,
            SemanticsArg::Value => Protection::Value,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match dispatch(cli.command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            2
        }
    };
    ExitCode::from(code as u8)
}

fn dispatch(cmd: Command) -> Result<i32, String> {
    match cmd {
        Command::Run {
            program,
            scheduler,
            max_steps,
            format,
        } => cmd_run(&program, &scheduler, max_steps, format),
        Command::Check {
            program,
            annotations,
            explore,
            verify_theorems,
        } => cmd_check(&program, &annotations, &explore, verify_theorems),
        Command::Races { program, explore } => cmd_races(&program, &explore),
        Command::Infer {
            program,
            target,
            semantics,
            explore,
        } => cmd_infer(&program, &target, semantics.into(), &explore),
        Command::Explore { program, explore } => cmd_explore(&program, &explore),
    }
}

fn load_program(path: &PathBuf) -> Result<(Program, report::ProgramInfo), String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).map_err(|_| format!("{}: not UTF-8", path.display()))?;
    let program =
        parse_program(&text).map_err(|e| format!("{}:{e}", path.display()))?;
    let validation = validate_program(&program);
    if !validation.is_valid() {
        return Err(format!("{}: {validation}", path.display()));
    }
    Ok((
        program,
        report::ProgramInfo {
            path: path.display().to_string(),
            sha256: digest,
        },
    ))
}

fn load_annotations(path: &PathBuf) -> Result<Vec<Annotation>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_annotations(&text).map_err(|e| format!("{}:{e}", path.display()))
}

fn parse_scheduler(s: &str) -> Result<SchedulePolicy, String> {
    match s {
        "leftmost" => Ok(SchedulePolicy::Leftmost),
        "roundrobin" => Ok(SchedulePolicy::RoundRobin),
        _ => match s.strip_prefix("seed:") {
            Some(n) => n
                .parse()
                .map(SchedulePolicy::Seeded)
                .map_err(|_| format!("bad seed in scheduler `{s}`")),
            None => Err(format!(
                "unknown scheduler `{s}` (expected leftmost, roundrobin, or seed:<n>)"
            )),
        },
    }
}

fn parse_target(s: &str) -> Result<AnnotationTarget, String> {
    if let Some(f) = s.strip_prefix("field:") {
        return Ok(AnnotationTarget::Field(f.to_string()));
    }
    if let Some(rest) = s.strip_prefix("var:") {
        let parts: Vec<&str> = rest.split('.').collect();
        if let [class, method, var] = parts[..] {
            return Ok(AnnotationTarget::Var {
                class: class.to_string(),
                method: method.to_string(),
                var: var.to_string(),
            });
        }
    }
    Err(format!(
        "bad target `{s}` (expected field:<f> or var:<Class>.<method>.<x>)"
    ))
}

fn base_report(command: &str, program: report::ProgramInfo) -> Report {
    Report {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        program,
        exploration: None,
        run: None,
        annotations: Vec::new(),
        races: Vec::new(),
        theorems: Vec::new(),
        inference: None,
        summary: Summary {
            outcome: String::new(),
            exit_code: 0,
        },
    }
}

fn explore_or_fail(p: &Program, cfg: &ExploreConfig) -> Result<Exploration, String> {
    explore(p, *cfg).map_err(|e| e.to_string())
}

fn warn_invariants(x: &Exploration) {
    if !x.stats.invariant_violations.is_empty() {
        eprintln!(
            "internal error: lock invariants violated during exploration: {:?}",
            x.stats.invariant_violations
        );
    }
}

fn cmd_run(
    path: &PathBuf,
    scheduler: &str,
    max_steps: usize,
    format: Format,
) -> Result<i32, String> {
    let (program, info) = load_program(path)?;
    let policy = parse_scheduler(scheduler)?;
    let trace = run_deterministic(&program, policy, max_steps);
    let (outcome, code) = report::outcome_exit(&trace.outcome);
    match format {
        Format::Text => print!("{}", format_trace(&trace)),
        Format::Json => {
            let mut rep = base_report("run", info);
            rep.run = Some(report::run_info(&trace, scheduler, max_steps));
            rep.summary = Summary {
                outcome,
                exit_code: code,
            };
            let mut out = serde_json::to_value(&rep).expect("report");
            out["trace"] = serde_json::to_value(report::trace_json(&trace)).expect("trace");
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
        }
    }
    Ok(code)
}

fn cmd_check(
    program_path: &PathBuf,
    annotations_path: &PathBuf,
    args: &ExploreArgs,
    verify_theorems: bool,
) -> Result<i32, String> {
    let (program, info) = load_program(program_path)?;
    let annotations = load_annotations(annotations_path)?;
    let cfg = args.config();
    let x = explore_or_fail(&program, &cfg)?;
    warn_invariants(&x);

    let mut rep = base_report("check", info);
    rep.exploration = Some(report::exploration_info(&x.stats, cfg.bound, cfg.state_cap));

    let mut any_violated = false;
    let mut any_up_to_bound = false;
    for a in &annotations {
        let verdict = check_annotation(&x, a).map_err(|e| e.to_string())?;
        match &verdict {
            Verdict::Violated(_) => any_violated = true,
            Verdict::HoldsUpToBound { .. } => any_up_to_bound = true,
            Verdict::Holds => {}
        }
        rep.annotations.push(report::annotation_verdict(a, &verdict));
        if verify_theorems {
            let theorem = verify_race_freedom_in(&x, a).map_err(|e| e.to_string())?;
            if !theorem.sound {
                eprintln!("internal error: hypotheses hold but races found for `{a}`");
            }
            rep.theorems.push(report::theorem_json(&theorem));
        }
    }
    let (outcome, code) = if any_violated {
        ("violated".to_string(), 1)
    } else if any_up_to_bound {
        ("holds-up-to-bound".to_string(), 3)
    } else {
        ("holds".to_string(), 0)
    };
    rep.summary = Summary {
        outcome,
        exit_code: code,
    };

    match args.format {
        Format::Json => print!("{}", rep.to_json()),
        Format::Text => {
            for av in &rep.annotations {
                println!("{}: {}", av.annotation, av.verdict.status);
                if let Some(ce) = &av.verdict.counterexample {
                    println!(
                        "  counterexample: step {} of schedule {:?}{}",
                        ce.step_index,
                        ce.schedule,
                        if ce.early_dereference {
                            " (early dereference)"
                        } else {
                            ""
                        }
                    );
                    println!("  {}", ce.explanation);
                }
            }
            for t in &rep.theorems {
                println!(
                    "theorem [{}]: hypotheses {}, {} restricted race(s){}",
                    t.annotation,
                    t.hypotheses,
                    t.restricted_races.len(),
                    if t.sound { "" } else { " — SOUNDNESS BUG" }
                );
                for d in &t.wellformed_diagnostics {
                    println!("  note: {d}");
                }
            }
            println!("check: {}", rep.summary.outcome);
        }
    }
    Ok(code)
}

fn cmd_races(path: &PathBuf, args: &ExploreArgs) -> Result<i32, String> {
    let (program, info) = load_program(path)?;
    let cfg = args.config();
    let x = explore_or_fail(&program, &cfg)?;
    warn_invariants(&x);
    let races = detect_races(&x).map_err(|e| e.to_string())?;

    let (outcome, code) = if !races.is_empty() {
        ("races-found".to_string(), 1)
    } else if x.bound_exhausted() {
        ("no-races-up-to-bound".to_string(), 3)
    } else {
        ("race-free".to_string(), 0)
    };

    let mut rep = base_report("races", info);
    rep.exploration = Some(report::exploration_info(&x.stats, cfg.bound, cfg.state_cap));
    rep.races = races.findings.iter().map(report::race_json).collect();
    rep.summary = Summary {
        outcome: outcome.clone(),
        exit_code: code,
    };

    match args.format {
        Format::Json => print!("{}", rep.to_json()),
        Format::Text => {
            for (loc, field, a, b) in races.sites() {
                println!("race: {loc}.{field} between threads {a} and {b}");
            }
            if let Some(first) = races.findings.first() {
                println!(
                    "first witness: schedule {:?} ({} finding(s) total)",
                    first.schedule,
                    races.findings.len()
                );
            }
            println!("races: {outcome}");
        }
    }
    Ok(code)
}

fn cmd_infer(
    path: &PathBuf,
    target_str: &str,
    protection: Protection,
    args: &ExploreArgs,
) -> Result<i32, String> {
    let (program, info) = load_program(path)?;
    let target = parse_target(target_str)?;
    if !target_exists(&program, &target) {
        return Err(format!("unknown target `{target_str}`"));
    }
    let cfg = args.config();
    let x = explore_or_fail(&program, &cfg)?;
    warn_invariants(&x);
    let candidates = guardedby_core::checkers::default_candidates(&program);
    let result = infer_guards(&x, &target, protection, &candidates).map_err(|e| e.to_string())?;

    let (outcome, code) = if x.bound_exhausted() {
        ("bound-exhausted".to_string(), 3)
    } else if result.guards.is_empty() {
        ("nothing-inferred".to_string(), 1)
    } else {
        ("inferred".to_string(), 0)
    };

    let mut rep = base_report("infer", info);
    rep.exploration = Some(report::exploration_info(&x.stats, cfg.bound, cfg.state_cap));
    rep.inference = Some(report::InferenceJson {
        target: target.to_string(),
        semantics: protection.to_string(),
        candidates: candidates.len(),
        guards: result.guards.iter().map(|g| g.to_string()).collect(),
        vacuous: result.vacuous,
    });
    rep.summary = Summary {
        outcome: outcome.clone(),
        exit_code: code,
    };

    match args.format {
        Format::Json => print!("{}", rep.to_json()),
        Format::Text => {
            for g in &result.guards {
                println!("guard {} {} by {}", protection, target, g);
            }
            if result.vacuous {
                println!("note: target never accessed in any explored trace (vacuous)");
            }
            println!("infer: {outcome}");
        }
    }
    Ok(code)
}

fn cmd_explore(path: &PathBuf, args: &ExploreArgs) -> Result<i32, String> {
    let (program, info) = load_program(path)?;
    let cfg = args.config();
    let x = explore_or_fail(&program, &cfg)?;
    warn_invariants(&x);
    let stats = &x.stats;

    let (outcome, code) = if stats.deadlocked > 0 {
        ("deadlocks-found".to_string(), 4)
    } else if stats.stuck > 0 {
        ("stuck-threads-found".to_string(), 5)
    } else if stats.bound_exhausted > 0 {
        ("bound-exhausted".to_string(), 3)
    } else {
        ("all-completed".to_string(), 0)
    };

    let mut rep = base_report("explore", info);
    rep.exploration = Some(report::exploration_info(stats, cfg.bound, cfg.state_cap));
    rep.summary = Summary {
        outcome: outcome.clone(),
        exit_code: code,
    };

    match args.format {
        Format::Json => print!("{}", rep.to_json()),
        Format::Text => {
            println!(
                "configurations: {}  traces: {} (completed {}, deadlocked {}, stuck {}, bound-exhausted {})",
                stats.configurations_visited,
                stats.leaves(),
                stats.completed,
                stats.deadlocked,
                stats.stuck,
                stats.bound_exhausted
            );
            println!("max depth: {}", stats.max_depth);
            println!("lock invariant violations: {}", stats.invariant_violations.len());
            println!("explore: {outcome}");
        }
    }
    Ok(code)
}
