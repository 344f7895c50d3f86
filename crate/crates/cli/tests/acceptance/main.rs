//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any fails.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

mod fom;
mod learning;
mod oracles;
mod systems;

/// Outcome of one criterion: pass flag and a one-line summary of the measured values.
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

type Criterion = fn() -> anyhow::Result<Verdict>;

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(u32, &str, Criterion); 10] = [
        (1, "linear Landau damping rate", fom::criterion_1),
        (2, "nonlinear Landau damping and growth rates", fom::criterion_2),
        (3, "full-order energy conservation", fom::criterion_3),
        (4, "symplectic basis structure", fom::criterion_4),
        (5, "complex SVD against a Jacobi oracle", oracles::criterion_5),
        (6, "derivatives against central differences", oracles::criterion_6),
        (7, "end-to-end synthetic linear system", learning::criterion_7),
        (8, "desk-scale linear Landau reduced model", learning::criterion_8),
        (9, "reduced cost independent of N", systems::criterion_9),
        (10, "deterministic artifacts", systems::criterion_10),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string() || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let verdict = match catch_unwind(AssertUnwindSafe(run)) {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => Verdict::new(false, format!("error: {e:#}")),
            Err(_) => Verdict::new(false, "panicked"),
        };
        failed += usize::from(!verdict.pass);
        let line = format!(
            "criterion {id:>2} {}: {name}: {} ({:.1} s)",
            if verdict.pass { "PASS" } else { "FAIL" },
            verdict.detail,
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        std::io::stdout().flush().ok();
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
