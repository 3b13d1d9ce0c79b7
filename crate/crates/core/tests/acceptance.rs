//! Acceptance suite: one line per criterion, then the individual checks.
//!
//! Runs at desk scale by default. Set `ACCEPTANCE_SCALE=smoke` for a quick
//! pass over the code paths (the tolerances are not meaningful there) and
//! `ACCEPTANCE_ONLY=3,7` to run a subset.

use std::process::ExitCode;
use std::time::Instant;

use atomic_regen::experiments::{run_experiment, Scale};

const CRITERIA: &[&str] = &["1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "11", "12"];
const SEED: u64 = 20_240_611;

fn main() -> ExitCode {
    let scale: Scale = std::env::var("ACCEPTANCE_SCALE")
        .ok()
        .map(|s| s.parse().expect("ACCEPTANCE_SCALE is smoke, desk or full"))
        .unwrap_or(Scale::Desk);
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').map(|x| x.trim().to_string()).collect());

    let mut failed = Vec::new();
    let mut details = String::new();
    for id in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == id)) {
            continue;
        }
        let start = Instant::now();
        match run_experiment(id, scale, SEED) {
            Ok(rep) => {
                let failing: Vec<&str> = rep
                    .checks
                    .iter()
                    .filter(|c| !c.passed && !c.informational)
                    .map(|c| c.name.as_str())
                    .collect();
                let verdict = if failing.is_empty() { "PASS" } else { "FAIL" };
                println!(
                    "criterion {id:>2} {verdict}  {} ({} checks, {:.1}s){}",
                    rep.title,
                    rep.checks.len(),
                    start.elapsed().as_secs_f64(),
                    if failing.is_empty() {
                        String::new()
                    } else {
                        format!("  failing: {}", failing.join("; "))
                    }
                );
                if !failing.is_empty() {
                    failed.push(id.to_string());
                }
                details.push_str(&rep.to_string());
            }
            Err(e) => {
                println!("criterion {id:>2} FAIL  error: {e}");
                failed.push(id.to_string());
            }
        }
    }
    println!();
    print!("{details}");
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
