//! Solves the per-slot problem once for a hand-picked backlog and prints the
//! decision block by block.
//!
//! cargo run --example per_slot_decision

use mec_lyapunov::model::{draw_environment, RngState};
use mec_lyapunov::solver::per_slot_objective;
use mec_lyapunov::{solve_per_slot, BandwidthPolicy, QueueState, SlotOutcome, SolverSettings, SystemConfig};

fn main() {
    let mut cfg = SystemConfig::default();
    cfg.control_v = 3e9;
    cfg.server_weight = 0.02;

    // devices 1 and 3 hold more on the server than locally and stay silent
    let state = QueueState {
        q_bits: vec![4.0e5, 1.0e5, 2.5e5, 3.0e4, 1.5e5],
        t_bits: vec![1.0e5, 2.0e5, 2.0e4, 9.0e4, 0.0],
    };
    let env = draw_environment(&RngState::new(11), &cfg);
    let sol = solve_per_slot(&state, &env, &cfg, &SolverSettings::default(), BandwidthPolicy::Optimized);
    let d = &sol.decision;
    let out = SlotOutcome::evaluate(d, &state.q_bits, &env, &cfg);

    println!("dev       Q        T     gain/N0B    f [GHz]  p [mW]   alpha   D_l      D_r");
    for i in 0..cfg.n_devices() {
        let snr = env.gamma[i] / (cfg.noise_psd_w_per_hz * cfg.bandwidth_hz);
        println!(
            "{i:>3} {:>8.0} {:>8.0} {:>10.3e} {:>9.4} {:>7.2} {:>7.4} {:>7.0} {:>8.0}",
            state.q_bits[i],
            state.t_bits[i],
            snr,
            d.f_hz[i] / 1e9,
            d.p_tx_w[i] * 1e3,
            d.alpha[i],
            out.d_local_bits[i],
            out.d_remote_bits[i],
        );
    }
    let scheduled = d.d_s_bits.iter().position(|&x| x > 0.0);
    println!(
        "server: cores at {:.3} GHz, {:?} gets {:.0} bits",
        d.f_c_hz[0] / 1e9,
        scheduled,
        d.d_s_bits.iter().sum::<f64>()
    );
    println!(
        "Gauss-Seidel: {} passes, converged {}",
        sol.trace.iterations, sol.trace.converged
    );
    println!(
        "weighted power {:.4} W, objective {:.6e}",
        out.weighted_power_w,
        per_slot_objective(d, &state, &env, &cfg)
    );
}
