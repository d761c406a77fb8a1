use localstar::cli::{cmd_verify, config::RunConfig};
use localstar::verify::{self, Bound, SuiteReport, VerifyOptions};
use std::process::ExitCode;

/// (criterion, summary, runtime limit in seconds)
const CRITERIA: &[(u32, &str, f64)] = &[
    (1, "radial map round trip and equivariance", 5.0),
    (2, "flow laws", 30.0),
    (3, "engine against oracle", 600.0),
    (4, "support inclusion and fixed functions", 120.0),
    (5, "delta-state multiplicativity", 120.0),
    (6, "associativity and involution", 300.0),
    (7, "tower homomorphisms and commutator support", 600.0),
    (8, "semiclassical order", 300.0),
    (9, "deformed seminorms", 600.0),
];

fn worst(suites: &[&SuiteReport]) -> String {
    let mut parts = Vec::new();
    for s in suites {
        if let Some(e) = &s.error {
            parts.push(format!("{}: error {e}", s.suite));
            continue;
        }
        for c in s.checks.iter().filter(|c| c.bound != Bound::Info) {
            if !c.passed {
                parts.push(format!("{}/{} = {:.3e} (tolerance {:.1e})", s.suite, c.name, c.value, c.tolerance));
            }
        }
    }
    if parts.is_empty() {
        let checks: usize = suites.iter().map(|s| s.checks.iter().filter(|c| c.bound != Bound::Info).count()).sum();
        return format!("{checks} checks");
    }
    parts.join("; ")
}

fn main() -> ExitCode {
    let opts = VerifyOptions::default();
    let (report, seconds) = verify::run(None, &opts).expect("suite selection");
    let mut all = true;
    for &(criterion, summary, limit) in CRITERIA {
        let idx: Vec<usize> = (0..report.suites.len()).filter(|&i| report.suites[i].criterion == criterion).collect();
        let suites: Vec<&SuiteReport> = idx.iter().map(|&i| &report.suites[i]).collect();
        let elapsed: f64 = idx.iter().map(|&i| seconds[i]).sum();
        let passed = !suites.is_empty() && suites.iter().all(|s| s.passed) && elapsed < limit;
        all &= passed;
        println!(
            "criterion {criterion:>2} {} {summary}: {} [{elapsed:.2} s, limit {limit} s]",
            if passed { "PASS" } else { "FAIL" },
            worst(&suites)
        );
    }
    let cfg = RunConfig::default_config().expect("default config");
    let repeat = cmd_verify(&cfg, None).expect("repeat run");
    let identical = serde_json::to_string(&report).unwrap() == serde_json::to_string(&repeat).unwrap();
    all &= identical;
    println!(
        "criterion 10 {} determinism: repeated verification with seed {} {}",
        if identical { "PASS" } else { "FAIL" },
        opts.seed,
        if identical { "gives identical reports" } else { "differs" }
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
