//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs everything; positional arguments
//! select criteria by number, e.g. `cargo test --test acceptance -- 4 9`.

mod formulas;
mod library;
mod oracle;
mod physics;
mod qa;
mod reward;
mod search;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

struct Criterion {
    number: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

const CRITERIA: [Criterion; 11] = [
    Criterion { number: 1, name: "penalty formulas", limit: secs(1), run: formulas::penalties },
    Criterion { number: 2, name: "fitness decomposition", limit: secs(60), run: formulas::decomposition },
    Criterion { number: 3, name: "distance oracles", limit: secs(60), run: formulas::distances },
    Criterion { number: 4, name: "reward boolean oracle", limit: secs(300), run: reward::boolean_oracle },
    Criterion { number: 5, name: "partial credit", limit: secs(60), run: reward::partial_credit },
    Criterion { number: 6, name: "simulator determinism and physics", limit: secs(120), run: physics::sanity },
    Criterion { number: 7, name: "planted detector recovery", limit: secs(600), run: search::planted_recovery },
    Criterion { number: 8, name: "dense vs binary optimization", limit: secs(1800), run: search::dense_vs_binary },
    Criterion { number: 9, name: "q&a oracle", limit: secs(120), run: qa::oracle },
    Criterion { number: 10, name: "ablation closure", limit: secs(60), run: library::ablation_closure },
    Criterion { number: 11, name: "end-to-end mock run", limit: secs(900), run: library::end_to_end },
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    // keep panics from criteria out of the report; they become FAIL lines
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in CRITERIA.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.number)) {
        let start = Instant::now();
        let out = match catch_unwind(AssertUnwindSafe(c.run)) {
            Ok(o) => o,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Outcome::new(false, format!("panicked: {msg}"))
            }
        };
        let took = start.elapsed();
        let in_time = took <= c.limit;
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        let timing = if in_time {
            format!("{:.2}s", took.as_secs_f64())
        } else {
            format!("{:.2}s, over the {}s limit", took.as_secs_f64(), c.limit.as_secs())
        };
        println!(
            "criterion {:>2} {:<36} {}  {} ({timing})",
            c.number,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
