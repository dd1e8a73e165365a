//! Analytical power and backlog references next to simulated values. The
//! smallest power seen across V stands in for the unknown optimum.
//!
//! cargo run --release --example drift_bounds

use mec_lyapunov::metrics::{theorem1_power_bound, theorem1_queue_bound};
use mec_lyapunov::{drift_constant_c, run, Mode, RunOptions, SystemConfig};

fn main() {
    let base = SystemConfig::default();
    let c = drift_constant_c(&base);
    println!("C = {c:.6e} bits^2");

    let vs = [1e8, 1e9, 3e9, 7e9];
    let runs: Vec<_> = vs
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            cfg.control_v = v;
            (cfg.clone(), run(&cfg, &RunOptions::new(Mode::BaselineAlg1, 5_000)).metrics)
        })
        .collect();
    let p_proxy = runs.iter().map(|(_, m)| m.avg_weighted_power_w).fold(f64::INFINITY, f64::min);
    println!("p_opt proxy (smallest observed power) = {p_proxy:.5} W");

    // a stationary reference point with made-up margin, for illustration only
    let (psi, eps) = (0.6, 2_000.0);
    println!("{:>8} {:>10} {:>12} {:>14} {:>14}", "V", "power W", "bound W", "sum queue", "queue bound");
    for (cfg, m) in &runs {
        let qb = theorem1_queue_bound(psi, eps, p_proxy, cfg).expect("positive margin");
        println!(
            "{:>8.0e} {:>10.5} {:>12.5} {:>14.0} {:>14.3e}",
            cfg.control_v,
            m.avg_weighted_power_w,
            theorem1_power_bound(p_proxy, cfg),
            m.avg_sum_queue_bits,
            qb
        );
    }
}
