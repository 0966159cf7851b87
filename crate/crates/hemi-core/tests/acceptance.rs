//! One PASS/FAIL line per acceptance criterion, with the underlying checks
//! listed beneath it. Runs without the libtest harness so the lines always
//! reach stdout; exits non-zero when a criterion fails.

use std::time::Instant;

use hemi_core::flow::RegionTag;
use hemi_core::verify::{run_suite, sign_audit, Check, RegionFixtures, Suite, VerifyOptions, REGIONS};

/// States per region of the exact rate-sign audit.
const SIGN_AUDIT_STATES: usize = 1000;

fn criterion_name(suite: Suite) -> &'static str {
    match suite {
        Suite::Counting => "counting exactness",
        Suite::Constants => "constants vs closed forms",
        Suite::Expansion => "expansion fidelity",
        Suite::Gradients => "gradient self-consistency",
        Suite::Flow => "flow qualitative claims",
        Suite::Census => "census and levels",
        Suite::Interaction => "interaction inequalities",
        Suite::Convexity => "boundary-maximum convexity",
    }
}

fn sign_audit_checks(opts: &VerifyOptions) -> Vec<Check> {
    let fx = RegionFixtures::new().expect("fixtures");
    REGIONS
        .iter()
        .filter(|t| **t != RegionTag::W)
        .map(|&tag| {
            let (count, bad) = sign_audit(&fx, tag, SIGN_AUDIT_STATES, opts.seed).expect("sign audit");
            Check {
                name: format!("flow.{tag}.sign_audit"),
                passed: bad == 0,
                detail: format!("{count} states, {bad} with a positive rate velocity"),
                seconds: None,
            }
        })
        .collect()
}

fn main() {
    let opts = VerifyOptions::default();
    let mut failed = Vec::new();
    let mut lines = Vec::new();
    for suite in Suite::ALL {
        let start = Instant::now();
        let mut checks = match run_suite(suite, &opts) {
            Ok(c) => c,
            Err(e) => vec![Check {
                name: format!("{}.error", suite.name()),
                passed: false,
                detail: e.to_string(),
                seconds: None,
            }],
        };
        if suite == Suite::Flow {
            checks.extend(sign_audit_checks(&opts));
        }
        let ok = checks.iter().all(|c| c.passed);
        let status = if ok { "PASS" } else { "FAIL" };
        lines.push(format!(
            "{status} {} ({} checks, {:.2}s)",
            criterion_name(suite),
            checks.len(),
            start.elapsed().as_secs_f64()
        ));
        for c in &checks {
            let mark = if c.passed { "ok" } else { "FAILED" };
            let time = c.seconds.map(|s| format!(" [{s:.2}s]")).unwrap_or_default();
            lines.push(format!("    {mark:6} {}: {}{time}", c.name, c.detail));
        }
        if !ok {
            failed.push(criterion_name(suite));
        }
    }
    println!("{}", lines.join("\n"));
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
