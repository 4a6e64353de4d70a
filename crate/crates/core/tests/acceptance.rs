//! One PASS/FAIL line per acceptance criterion. Thresholds live in
//! `smem_vqa::repro` and are never relaxed here.

use std::process::ExitCode;

use smem_vqa::repro::{run_all, ReproContext};

fn main() -> ExitCode {
    let mut ctx = ReproContext::new();
    let results = run_all(&mut ctx);
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
