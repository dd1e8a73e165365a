//! Streams the per-slot trace of a run as CSV and reports the summed backlog
//! every 500 slots.
//!
//! cargo run --release --example queue_trace -- [trace.csv]

use std::fs::File;
use std::io::BufWriter;

use mec_lyapunov::engine::{run_with, write_trace_rows, TRACE_COLUMNS};
use mec_lyapunov::{Mode, RunOptions, SystemConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = SystemConfig::default();
    cfg.control_v = 7e9;
    let path = std::env::args().nth(1).unwrap_or_else(|| "queue_trace.csv".into());
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
    w.write_record(TRACE_COLUMNS)?;

    let mut window = 0.0;
    let result = run_with(&cfg, &RunOptions::new(Mode::DelayImprovedAlg3, 6_000), |rec| {
        write_trace_rows(&mut w, rec).expect("trace write");
        window += rec.actual.total_bits();
        if (rec.slot + 1) % 500 == 0 {
            println!("slots {:>5}-{:>5}  mean sum queue {:.3e} bits", rec.slot - 499, rec.slot, window / 500.0);
            window = 0.0;
        }
    });
    w.flush()?;
    let m = result.metrics;
    println!(
        "power {:.4} W, local {:.0} + server {:.0} bits, delay {:.2} ms, trace in {path}",
        m.avg_weighted_power_w,
        m.avg_local_queue_bits,
        m.avg_server_queue_bits,
        m.exec_delay_ms(&cfg)
    );
    Ok(())
}
