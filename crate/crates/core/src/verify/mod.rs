//! Verification suites shared by the command line and the acceptance tests.

pub mod fixtures;
mod suites;

use crate::error::{Error, Result};
use serde::Serialize;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    /// value <= tolerance
    Upper,
    /// value >= tolerance
    Lower,
    /// reported only
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub criterion: u32,
    pub description: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub tolerance_override: Option<f64>,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Replaces every upper-bound tolerance.
    pub tolerance_override: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 20240917,
            tolerance_override: None,
        }
    }
}

/// Collects checks for one suite.
pub struct Recorder<'a> {
    opts: &'a VerifyOptions,
    checks: Vec<Check>,
}

impl<'a> Recorder<'a> {
    fn new(opts: &'a VerifyOptions) -> Self {
        Self { opts, checks: Vec::new() }
    }

    pub fn upper(&mut self, name: &str, value: f64, tolerance: f64) {
        let tolerance = self.opts.tolerance_override.unwrap_or(tolerance);
        self.checks.push(Check {
            name: name.into(),
            value,
            tolerance,
            bound: Bound::Upper,
            passed: value <= tolerance,
        });
    }

    pub fn lower(&mut self, name: &str, value: f64, tolerance: f64) {
        self.checks.push(Check {
            name: name.into(),
            value,
            tolerance,
            bound: Bound::Lower,
            passed: value >= tolerance,
        });
    }

    pub fn info(&mut self, name: &str, value: f64) {
        self.checks.push(Check {
            name: name.into(),
            value,
            tolerance: 0.0,
            bound: Bound::Info,
            passed: true,
        });
    }

    pub fn seed(&self, salt: u64) -> u64 {
        self.opts.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(salt)
    }
}

type SuiteFn = fn(&mut Recorder) -> Result<()>;

pub struct Suite {
    pub name: &'static str,
    pub criterion: u32,
    pub description: &'static str,
    run: SuiteFn,
}

pub const SUITES: &[Suite] = &[
    Suite {
        name: "psi",
        criterion: 1,
        description: "radial diffeomorphism round trip and orthogonal equivariance",
        run: suites::psi,
    },
    Suite {
        name: "flows",
        criterion: 2,
        description: "flow group law, commutation and agreement with an ODE integrator",
        run: suites::flows,
    },
    Suite {
        name: "engine-oracle",
        criterion: 3,
        description: "spectral product against the oscillatory-integral oracle",
        run: suites::engine_oracle,
    },
    Suite {
        name: "support-inclusion",
        criterion: 4,
        description: "supp(f*g) lies in (supp f cap supp g) cup K",
        run: suites::support_inclusion,
    },
    Suite {
        name: "fixed-functions",
        criterion: 4,
        description: "products with fixed functions are pointwise",
        run: suites::fixed_functions,
    },
    Suite {
        name: "delta-state",
        criterion: 5,
        description: "evaluation at a point over a vanishing section is multiplicative",
        run: suites::delta_state,
    },
    Suite {
        name: "algebra",
        criterion: 6,
        description: "associativity and involution",
        run: suites::algebra,
    },
    Suite {
        name: "tower",
        criterion: 7,
        description: "homomorphisms between the products on TM, M x M and M",
        run: suites::tower,
    },
    Suite {
        name: "semiclassical",
        criterion: 8,
        description: "second-order agreement of the commutator with the Poisson bracket",
        run: suites::semiclassical,
    },
    Suite {
        name: "norms",
        criterion: 9,
        description: "deformed seminorm estimates",
        run: suites::norms,
    },
];

/// Filter tokens accepted for each suite besides its name.
const ALIASES: &[(&str, &str)] = &[
    ("prop-3.2", "support-inclusion"),
    ("prop-3.3", "fixed-functions"),
    ("prop-3.4", "delta-state"),
];

/// Suites selected by a comma-separated filter (names, aliases or criterion numbers); None selects all.
pub fn select(filter: Option<&str>) -> Result<Vec<&'static Suite>> {
    let Some(filter) = filter else {
        return Ok(SUITES.iter().collect());
    };
    let mut out: Vec<&'static Suite> = Vec::new();
    for token in filter.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let name = ALIASES.iter().find(|(a, _)| *a == token).map(|(_, n)| *n).unwrap_or(token);
        let hits: Vec<&'static Suite> = match name.parse::<u32>() {
            Ok(c) => SUITES.iter().filter(|s| s.criterion == c).collect(),
            Err(_) => SUITES.iter().filter(|s| s.name == name).collect(),
        };
        if hits.is_empty() {
            return Err(Error::Config(format!("unknown suite '{token}'")));
        }
        for s in hits {
            if !out.iter().any(|o| o.name == s.name) {
                out.push(s);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Config("suite filter selects nothing".into()));
    }
    Ok(out)
}

pub fn run_suite(suite: &Suite, opts: &VerifyOptions) -> SuiteReport {
    let mut rec = Recorder::new(opts);
    let outcome = (suite.run)(&mut rec);
    let error = outcome.err().map(|e| e.to_string());
    let passed = error.is_none() && rec.checks.iter().all(|c| c.passed);
    SuiteReport {
        suite: suite.name.into(),
        criterion: suite.criterion,
        description: suite.description.into(),
        passed,
        checks: rec.checks,
        error,
    }
}

/// Runs the selected suites; wall-clock seconds per suite are returned beside the report.
pub fn run(filter: Option<&str>, opts: &VerifyOptions) -> Result<(VerifyReport, Vec<f64>)> {
    let selected = select(filter)?;
    let mut suites = Vec::new();
    let mut seconds = Vec::new();
    for s in selected {
        let t = Instant::now();
        suites.push(run_suite(s, opts));
        seconds.push(t.elapsed().as_secs_f64());
    }
    Ok((
        VerifyReport {
            seed: opts.seed,
            tolerance_override: opts.tolerance_override,
            passed: suites.iter().all(|s| s.passed),
            suites,
        },
        seconds,
    ))
}
