//! All twelve acceptance criteria, one PASS/FAIL line each.
//!
//! Criteria listed in `KNOWN_INFEASIBLE` still run and still print FAIL; they
//! do not fail this target. If one of them starts passing the target fails,
//! so the list cannot go stale.

use std::path::PathBuf;
use std::process::ExitCode;

use wyner_cli::criteria::{run_all, VerifyContext, KNOWN_INFEASIBLE};

fn main() -> ExitCode {
    let plan = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("plans/paper_suite.plan");
    let ctx = VerifyContext::new(Some(PathBuf::from(env!("CARGO_BIN_EXE_wyner"))), plan);
    println!("running 12 acceptance criteria");
    let outcomes = run_all(&ctx, |o| println!("{}", o.line()));

    let unexpected: Vec<u8> = outcomes.iter().filter(|o| !o.passed && !KNOWN_INFEASIBLE.contains(&o.id)).map(|o| o.id).collect();
    let stale: Vec<u8> = outcomes.iter().filter(|o| o.passed && KNOWN_INFEASIBLE.contains(&o.id)).map(|o| o.id).collect();
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("\nacceptance: {passed}/12 passed; known infeasible {KNOWN_INFEASIBLE:?}");
    if !stale.is_empty() {
        println!("criteria {stale:?} are listed as infeasible but passed");
    }
    if unexpected.is_empty() && stale.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
