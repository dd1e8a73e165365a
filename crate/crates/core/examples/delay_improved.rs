//! Same seed, same decisions: the delay-improved controller spends exactly the
//! baseline power but keeps smaller server buffers.
//!
//! cargo run --release --example delay_improved

use mec_lyapunov::{run, Mode, RunOptions, SystemConfig};

fn main() {
    println!("{:>8} {:>12} {:>12} {:>12} {:>12} {:>8}", "V", "power W", "T base", "T improved", "delay base", "gain");
    for v in [1e8, 1e9, 3e9, 7e9] {
        let mut cfg = SystemConfig::default();
        cfg.control_v = v;
        let base = run(&cfg, &RunOptions::new(Mode::BaselineAlg1, 10_000)).metrics;
        let improved = run(&cfg, &RunOptions::new(Mode::DelayImprovedAlg3, 10_000)).metrics;
        assert_eq!(base.avg_weighted_power_w, improved.avg_weighted_power_w);
        let (db, di) = (base.exec_delay_ms(&cfg), improved.exec_delay_ms(&cfg));
        println!(
            "{v:>8.0e} {:>12.5} {:>12.0} {:>12.0} {:>9.2} ms {:>7.1}%",
            base.avg_weighted_power_w,
            base.avg_server_queue_bits,
            improved.avg_server_queue_bits,
            db,
            100.0 * (1.0 - di / db)
        );
    }
}
