//! Power against backlog as V grows, for the optimized and equal bandwidth
//! splits. Writes the sweep CSV to stdout when given `--csv`.
//!
//! cargo run --release --example tradeoff_sweep [-- --csv]

use mec_lyapunov::experiment::{log_space, run_sweep, write_sweep_csv, SweepSpec};
use mec_lyapunov::{Mode, SolverSettings, SystemConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SweepSpec {
        v_values: log_space(1e6, 7e9, 8),
        modes: vec![Mode::BaselineAlg1, Mode::EqualBandwidth],
        seeds: vec![1, 2],
        n_slots: 5_000,
        server_weights: vec![0.0],
    };
    let rows = run_sweep(&SystemConfig::default(), &spec, &SolverSettings::default())?;
    if std::env::args().any(|a| a == "--csv") {
        write_sweep_csv(std::io::stdout().lock(), &rows)?;
        return Ok(());
    }

    println!("{:>10} {:>16} {:>10} {:>14} {:>10}", "V", "mode", "power W", "queue/dev", "delay ms");
    for chunk in rows.chunks(spec.seeds.len()) {
        let n = chunk.len() as f64;
        let mean = |f: fn(&mec_lyapunov::experiment::SweepRow) -> f64| chunk.iter().map(f).sum::<f64>() / n;
        println!(
            "{:>10.3e} {:>16} {:>10.4} {:>14.0} {:>10.2}",
            chunk[0].control_v,
            chunk[0].mode.as_str(),
            mean(|r| r.avg_weighted_power_w),
            mean(|r| r.avg_sum_queue_bits_per_device),
            mean(|r| r.exec_delay_ms),
        );
    }
    Ok(())
}
