//! Runs every acceptance criterion and prints one line per criterion, then
//! the negative controls. Exits non-zero on any unexpected outcome.

use std::process::ExitCode;

use powersim::checks::{power_identity_report, run_check, CheckOptions, CRITERIA};
use powersim::model::Smoothing;

/// Criteria that fail in this simulator for reasons documented with the
/// check. They still run and print; only a change of outcome is an error,
/// so a fix shows up here rather than going unnoticed.
const KNOWN_FAILING: [u32; 1] = [7];

fn criteria(problems: &mut Vec<String>) {
    let opts = CheckOptions::default();
    for &(id, _) in &CRITERIA {
        let o = run_check(id, &opts);
        let known = KNOWN_FAILING.contains(&id);
        println!(
            "criterion {:>2} [{}] {} ({:.2} s): {}{}",
            o.id,
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.elapsed,
            o.detail,
            if known && !o.passed { " (known failure)" } else { "" }
        );
        if o.passed == known {
            problems.push(format!("criterion {id} {}", if o.passed { "now passes" } else { "fails" }));
        }
    }
}

fn zero_gamma_breaks_convergence(problems: &mut Vec<String>) {
    let o = run_check(3, &CheckOptions { gamma: Some(0.0), ..CheckOptions::default() });
    println!("negative control, γ = 0: {}", o.detail);
    if o.passed || !o.detail.contains("never fell below") {
        problems.push("γ = 0 did not break the convergence check".into());
    }
}

fn frozen_smoothing_breaks_power_identity(problems: &mut Vec<String>) {
    let live = power_identity_report(Smoothing::Ewma).expect("power report runs");
    let frozen = power_identity_report(Smoothing::Frozen).expect("power report runs");
    let share = |(g, t): (usize, usize)| g as f64 / t as f64;
    println!(
        "negative control, frozen smoothing: settled agreement live {:.3}, frozen {:.3}",
        share(live.settled),
        share(frozen.settled)
    );
    let o = run_check(7, &CheckOptions { smoothing: Smoothing::Frozen, ..CheckOptions::default() });
    if share(live.settled) < 0.9 || share(frozen.settled) >= 0.5 || share(frozen.congested) >= 0.9 || o.passed {
        problems.push("frozen smoothing did not break the power identity".into());
    }
}

fn main() -> ExitCode {
    let mut problems = Vec::new();
    criteria(&mut problems);
    zero_gamma_breaks_convergence(&mut problems);
    frozen_smoothing_breaks_power_identity(&mut problems);
    if problems.is_empty() {
        println!("acceptance: all outcomes as expected");
        ExitCode::SUCCESS
    } else {
        eprintln!("acceptance: unexpected outcomes: {}", problems.join("; "));
        ExitCode::FAILURE
    }
}
