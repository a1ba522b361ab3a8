//! Shared helpers for integration tests: corpus loading and small builders.
#![allow(dead_code)] // each test target uses a different subset

use std::fs;
use std::path::PathBuf;

use guardedby_core::parser::parse_program;
use guardedby_core::syntax::Program;
use guardedby_core::validate::validate_program;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn corpus_source(name: &str) -> String {
    let path = corpus_dir().join(name);
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

pub fn load_corpus(name: &str) -> Program {
    let p = parse_program(&corpus_source(name)).unwrap_or_else(|e| panic!("parsing {name}: {e}"));
    let report = validate_program(&p);
    assert!(report.is_valid(), "{name} fails validation: {report}");
    p
}

/// Every corpus program, by file name.
pub fn corpus_programs() -> Vec<(String, Program)> {
    let mut names: Vec<String> = fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .filter_map(|e| {
            let name = e.ok()?.file_name().into_string().ok()?;
            name.ends_with(".gbc").then_some(name)
        })
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|n| {
            let p = load_corpus(&n);
            (n, p)
        })
        .collect()
}
