//! Support for the acceptance suite: a seeded random program generator for
//! the race-freedom harness, and a memory-graph isomorphism checker.
//!
//! Generated programs stay small by construction (at most 3 classes, at
//! most 2 spawns, bodies of at most 8 commands) and keep the post-spawn
//! interleaving window narrow so exhaustive exploration at bound 60 stays
//! cheap. Roughly half the programs follow a locking discipline (value
//! locked on itself, or container locked) so the theorem hypotheses
//! actually hold on a healthy fraction; the rest drop locks or mix random
//! command soup to exercise the violation paths.

#![allow(dead_code)]

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use guardedby_core::semantics::{Location, Memory};

pub struct ProgramGen {
    rng: ChaCha8Rng,
}

impl ProgramGen {
    pub fn new(seed: u64) -> Self {
        ProgramGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn pick(&mut self, n: usize) -> usize {
        (self.rng.next_u32() as usize) % n
    }

    fn flip(&mut self) -> bool {
        self.pick(2) == 0
    }

    /// Raw index stream, for deterministic sampling outside the generator.
    pub fn next_index(&mut self) -> usize {
        self.rng.next_u32() as usize
    }

    /// A random small program in concrete syntax. Templates 0-3 follow a
    /// value-locking discipline, 4-5 a container-locking one, 6-7 drop the
    /// locks, 8 spawns two trivial workers, 9+ is single-threaded soup.
    pub fn generate(&mut self) -> String {
        // The shared object always carries `box` (holding a B whose `f` is
        // readable) and `cnt`; the protected field is fixed per program so
        // worker and main contend on the same monitor.
        let alloc = "decl a = new A{box = new B{f = new Object{}}, cnt = new Object{}};";
        match self.pick(10) {
            // Value discipline: every dereference of box's value runs under
            // the monitor of the value itself; the spawn happens inside
            // main's critical section, so the worker parks early.
            0..=3 => {
                let write = if self.flip() {
                    "t.f := new Object{};"
                } else {
                    "t.f := t;"
                };
                let main_op = if self.flip() {
                    "u.f := new Object{};"
                } else {
                    "decl r = u.f;"
                };
                format!(
                    "class A {{ method m() {{ decl t = this.box; sync (t) {{ {write} }} }} }}\n\
                     class B {{ }}\n\
                     main {{\n  {alloc}\n  decl u = a.box;\n  sync (u) {{\n    spawn a.m();\n    {main_op}\n  }}\n}}\n"
                )
            }
            // Container discipline: accesses of cnt under the container's
            // own monitor (`this` from inside, `a` from main).
            4 | 5 => {
                let w = if self.flip() {
                    "sync (this) { this.cnt := new Object{}; }"
                } else {
                    "sync (this) { decl r = this.cnt; }"
                };
                let m = if self.flip() {
                    "a.cnt := a;"
                } else {
                    "decl r = a.cnt;"
                };
                format!(
                    "class A {{ method m() {{ {w} }} }}\n\
                     class B {{ }}\n\
                     main {{\n  {alloc}\n  sync (a) {{\n    spawn a.m();\n    {m}\n  }}\n}}\n"
                )
            }
            // No discipline: same access patterns, no locks anywhere.
            6 | 7 => {
                let w = match self.pick(3) {
                    0 => "decl t = this.box; t.f := new Object{};",
                    1 => "this.cnt := new Object{};",
                    _ => "decl t = this.box; decl r = t.f;",
                };
                let m = match self.pick(3) {
                    0 => "decl u = a.box; u.f := a;",
                    1 => "a.cnt := new Object{};",
                    _ => "decl r = a.box;",
                };
                format!(
                    "class A {{ method m() {{ {w} }} }}\n\
                     class B {{ }}\n\
                     main {{\n  {alloc}\n  spawn a.m();\n  {m}\n}}\n"
                )
            }
            // Two spawns with tiny workers: scheduling noise, pool-order
            // coverage.
            8 => {
                let tail = if self.flip() { "a.cnt := a;" } else { "skip;" };
                format!(
                    "class A {{ method m1() {{ }} method m2() {{ skip; }} }}\n\
                     main {{\n  decl a = new A{{box = new Object{{}}, cnt = new Object{{}}}};\n  spawn a.m1();\n  spawn a.m2();\n  {tail}\n}}\n"
                )
            }
            // Single-threaded soup: declarations, writes, syncs, a call.
            _ => {
                let worker = match self.pick(3) {
                    0 => "decl t = this.box; sync (t) { t.f := t; }",
                    1 => "sync (this) { this.cnt := new Object{}; }",
                    _ => "this.cnt := this;",
                };
                let mut body = String::new();
                let n = 1 + self.pick(5);
                for i in 0..n {
                    let cmd = match self.pick(6) {
                        0 => format!("decl v{i} = a.box;"),
                        1 => "a.cnt := new Object{};".to_string(),
                        2 => "sync (a) { a.cnt := a; }".to_string(),
                        3 => format!("sync (a.box) {{ decl w{i} = a.cnt; }}"),
                        4 => "a.m();".to_string(),
                        _ => "skip;".to_string(),
                    };
                    body.push_str("  ");
                    body.push_str(&cmd);
                    body.push('\n');
                }
                format!(
                    "class A {{ method m() {{ {worker} }} }}\nclass B {{ }}\nmain {{\n  {alloc}\n{body}}}\n"
                )
            }
        }
    }
}

/// Structural isomorphism of two memories up to location renaming:
/// a bijection preserving class tags, lock counters, and the field graph.
/// Exponential in the worst case but fine at corpus scale.
pub fn memories_isomorphic(a: &Memory, b: &Memory) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let nodes_a: Vec<Location> = a.iter().map(|(l, _)| l).collect();
    let nodes_b: Vec<Location> = b.iter().map(|(l, _)| l).collect();
    let mut mapping: std::collections::BTreeMap<Location, Location> = Default::default();
    let mut used: std::collections::BTreeSet<Location> = Default::default();

    fn compatible(a: &Memory, b: &Memory, la: Location, lb: Location) -> bool {
        let (oa, ob) = (a.get(la).unwrap(), b.get(lb).unwrap());
        oa.class == ob.class
            && oa.locks == ob.locks
            && oa.fields.keys().eq(ob.fields.keys())
    }

    fn assign(
        a: &Memory,
        b: &Memory,
        nodes_a: &[Location],
        nodes_b: &[Location],
        i: usize,
        mapping: &mut std::collections::BTreeMap<Location, Location>,
        used: &mut std::collections::BTreeSet<Location>,
    ) -> bool {
        if i == nodes_a.len() {
            // All nodes mapped; verify every edge.
            return a.iter().all(|(la, oa)| {
                let lb = mapping[&la];
                oa.fields
                    .iter()
                    .all(|(f, ta)| b.get(lb).unwrap().fields.get(f) == Some(&mapping[ta]))
            });
        }
        let la = nodes_a[i];
        for &lb in nodes_b {
            if used.contains(&lb) || !compatible(a, b, la, lb) {
                continue;
            }
            mapping.insert(la, lb);
            used.insert(lb);
            if assign(a, b, nodes_a, nodes_b, i + 1, mapping, used) {
                return true;
            }
            mapping.remove(&la);
            used.remove(&lb);
        }
        false
    }

    assign(a, b, &nodes_a, &nodes_b, 0, &mut mapping, &mut used)
}
