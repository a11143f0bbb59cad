//! Acceptance suite: one PASS/FAIL line per criterion, then an isolation
//! check (a deliberately broken tolerance fails only its own criterion) and
//! a determinism check. Exits non-zero if anything fails.

use epsense::cli::acceptance::{run_acceptance_with, run_criterion, CriterionResult, Tolerances};

fn fingerprint(r: &CriterionResult) -> String {
    serde_json::to_string(r).unwrap()
}

fn main() {
    let tol = Tolerances::default();
    let started = std::time::Instant::now();
    let results = run_acceptance_with(&tol);
    for r in &results {
        println!("{r}");
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("acceptance: {passed}/{} criteria passed in {:.1}s", results.len(), started.elapsed().as_secs_f64());

    let broken = Tolerances { feasibility_factor: 1.0, ..Tolerances::default() };
    let flipped = run_criterion(12, &broken);
    let isolated = !flipped.passed
        && results[11].passed
        && [1u8, 9].iter().all(|&id| fingerprint(&run_criterion(id, &broken)) == fingerprint(&results[id as usize - 1]));
    println!("isolation {}: criterion 12 with factor 1.0 -> {}", if isolated { "PASS" } else { "FAIL" }, flipped.passed);

    let deterministic = [1u8, 2, 9, 12].iter().all(|&id| fingerprint(&run_criterion(id, &tol)) == fingerprint(&results[id as usize - 1]));
    println!("determinism {}", if deterministic { "PASS" } else { "FAIL" });

    if passed != results.len() || !isolated || !deterministic {
        std::process::exit(1);
    }
}
