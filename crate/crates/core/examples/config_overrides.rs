//! Loads a JSON config, applies dotted overrides and runs it, printing the
//! metrics document the CLI would write.
//!
//! cargo run --release --example config_overrides -- [config.json] [key=value ...]

use std::path::PathBuf;

use mec_lyapunov::experiment::{cmd_run, load_config, RunRequest};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/heterogeneous.json"));
    let overrides: Vec<String> = args.collect();
    let loaded = load_config(Some(&path), &overrides)?;
    let req = RunRequest::from_document(&loaded.document);
    let report = cmd_run(&loaded, &req, None::<std::io::Sink>)?;
    println!("{}", serde_json::to_string_pretty(&report.metrics)?);
    println!("config {} ({} devices), C = {:.4e}", report.config_hash, loaded.config.n_devices(), report.bounds.drift_constant_c_bits2);
    Ok(())
}
