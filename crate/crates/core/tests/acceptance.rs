//! Acceptance criteria 1 through 8, one line per criterion.
//!
//! Lines go straight to stdout so they appear in the test log even when
//! the test passes.

use std::io::Write;

use twoway::harness::{reproduce_all, DEFAULT_SEED};

#[test]
fn acceptance_criteria() {
    let outcomes = reproduce_all(DEFAULT_SEED).expect("battery runs");
    let mut out = std::io::stdout().lock();
    writeln!(out).unwrap();
    for o in &outcomes {
        writeln!(out, "{}", o.line()).unwrap();
    }
    out.flush().unwrap();
    assert_eq!(outcomes.len(), 8);
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
