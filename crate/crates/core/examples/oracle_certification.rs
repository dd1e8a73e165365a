//! Scores the closed-form and iterative solvers against brute-force oracles
//! and shows that a 5% error in the decisions is caught.
//!
//! cargo run --release --example oracle_certification

use mec_lyapunov::oracle::{run_check, Check, VerifyOptions};

fn summary(check: Check, opts: &VerifyOptions) {
    let reports = run_check(check, opts);
    let failed = reports.iter().filter(|r| !r.pass).count();
    let worst = reports.iter().map(|r| r.rel_gap).fold(0.0, f64::max);
    println!(
        "{:<16} perturb {:<5} {:>4} cases, {:>4} failed, worst rel gap {worst:.2e}",
        check.as_str(),
        opts.perturbation,
        reports.len(),
        failed
    );
}

fn main() {
    let checks = [Check::Sp1Grid, Check::PowerGrid, Check::Sp2IdleProbe, Check::Sp3Exhaustive, Check::Sp2Gradient];
    for perturbation in [0.0, 0.05] {
        let opts = VerifyOptions {
            n_cases: Some(100),
            perturbation,
            ..Default::default()
        };
        for &c in &checks {
            summary(c, &opts);
        }
    }
}
