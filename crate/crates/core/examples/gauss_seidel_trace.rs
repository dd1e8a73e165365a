//! Alternating power and bandwidth steps on one slot: the objective after each
//! pass, the final split, and what a fixed equal split would cost.
//!
//! cargo run --example gauss_seidel_trace

use mec_lyapunov::solver::{solve_sp2, solve_sp2_equal_bandwidth, sp2_objective, OffloaderPartition};
use mec_lyapunov::{QueueState, SlotEnvironment, SolverSettings, SystemConfig};

fn main() {
    let mut cfg = SystemConfig::default();
    cfg.control_v = 1e9;
    let state = QueueState {
        q_bits: vec![3.0e5, 2.8e5, 1.0e5, 2.0e5, 6.0e4],
        t_bits: vec![0.0, 5.0e4, 1.0e4, 3.0e5, 0.0],
    };
    // unequal fading so the split has something to decide
    let fading = [2.1, 0.3, 1.0, 0.8, 0.05];
    let env = SlotEnvironment {
        gamma: fading.iter().enumerate().map(|(i, h)| h * cfg.large_scale_gain(i)).collect(),
        arrivals_bits: vec![0.0; 5],
    };
    let offloaders = OffloaderPartition::from_state(&state).offloaders;

    for extrapolate in [false, true] {
        let settings = SolverSettings {
            extrapolate,
            ..Default::default()
        };
        let sol = solve_sp2(&state, &env, &cfg, &settings);
        println!("extrapolation {extrapolate}: {} passes", sol.trace.iterations);
        let first = sol.trace.objective_history[0];
        for (k, v) in sol.trace.objective_history.iter().enumerate().take(12) {
            println!("  pass {:>3}  objective {v:.9e}  gain {:.3e}", k + 1, first - v);
        }
        println!("  alpha {:?}", sol.alpha.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>());
        println!("  p_mW  {:?}", sol.p_tx_w.iter().map(|p| format!("{:.2}", p * 1e3)).collect::<Vec<_>>());
    }

    let best = solve_sp2(&state, &env, &cfg, &SolverSettings::default());
    let equal = solve_sp2_equal_bandwidth(&state, &env, &cfg);
    let value = |p: &[f64], a: &[f64]| sp2_objective(p, a, &state, &env, &cfg, &offloaders);
    println!(
        "optimized {:.6e}, equal split {:.6e}",
        value(&best.p_tx_w, &best.alpha),
        value(&equal.p_tx_w, &equal.alpha)
    );
}
