//! Small-step interpreter, bounded schedule explorer, and locking-discipline
//! checkers for a core concurrent object calculus with `@GuardedBy`-style
//! annotations.
//!
//! The calculus has classes, dynamically dispatched parameterless methods,
//! object creation, field reads/writes, `spawn`, and reentrant monitors
//! (`sync`). Programs reduce over configurations: a pool of threads (each an
//! activation stack plus a set of held locks) sharing one memory. On top of
//! the reduction relation the crate provides:
//!
//! - deterministic execution and exhaustive bounded exploration of all thread
//!   interleavings ([`explorer`]),
//! - syntactic access and semantic dereference extraction per reduction step
//!   ([`access`]),
//! - checkers for the name-protection and value-protection readings of
//!   `guard` annotations, data-race detection, non-aliasing, and the
//!   race-freedom harness tying them together ([`checkers`]),
//! - trace-based guard inference ([`checkers::infer_guards`]).
//!
//! The crate is `no_std` (with `alloc`); IO, file formats, and the CLI live
//! in the companion `guardedby-cli` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod access;
pub mod checkers;
pub mod explorer;
pub mod parser;
pub mod semantics;
pub mod syntax;
pub mod trace;
pub mod validate;

pub use syntax::{Annotation, AnnotationTarget, Command, Expr, Program, Protection};
