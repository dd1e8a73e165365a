use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mec_lyapunov::engine::Mode;
use mec_lyapunov::experiment::{
    cmd_run, cmd_sweep, cmd_verify, create_output, load_config, load_sweep_spec, log_space, write_report,
    BoundInputs, ExperimentError, RunRequest, SweepSpec,
};
use mec_lyapunov::model::ConfigError;
use mec_lyapunov::oracle::{Suite, VerifyOptions};

/// Drift-plus-penalty simulator for multi-user mobile-edge computing.
///
/// Exit status: 0 success, 1 invalid configuration or arguments, 2 oracle
/// failure, 3 runtime or I/O error.
#[derive(Parser)]
#[command(name = "mec-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and write a metrics JSON.
    Run(RunArgs),
    /// Run a grid of V, mode, seed and server weight values into one CSV.
    Sweep(SweepArgs),
    /// Check the per-slot solvers against brute-force oracles.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config document; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted override applied to the document, e.g. `devices.0.distance_m=80`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    slots: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics JSON path.
    #[arg(long, default_value = "metrics.json")]
    out: PathBuf,
    /// Per-slot, per-device CSV trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Optimal-power proxy used for the analytical bounds.
    #[arg(long)]
    p_opt: Option<f64>,
    /// Power of a stationary reference policy.
    #[arg(long, requires = "slater_eps")]
    psi: Option<f64>,
    /// Drift margin of that reference policy.
    #[arg(long, requires = "psi")]
    slater_eps: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// JSON sweep spec; replaces the grid flags below.
    #[arg(long, conflicts_with_all = ["v_min", "v_max", "v_points", "modes", "seeds", "weights"])]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1e6)]
    v_min: f64,
    #[arg(long, default_value_t = 7e9)]
    v_max: f64,
    #[arg(long, default_value_t = 8)]
    v_points: usize,
    #[arg(long, value_delimiter = ',', default_value = "baseline_alg1")]
    modes: Vec<Mode>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    weights: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    slots: u64,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all")]
    suite: Suite,
    /// Cases per check; each check has its own default.
    #[arg(long)]
    cases: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON-lines report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scale every solver decision by `1 + x` before scoring. Used to check
    /// that the oracles catch wrong answers.
    #[arg(long, default_value_t = 0.0, hide = true)]
    perturb: f64,
}

fn run(args: RunArgs) -> Result<(), ExperimentError> {
    let mut overrides = args.config.overrides;
    if let Some(seed) = args.seed {
        overrides.push(format!("rng_seed={seed}"));
    }
    let loaded = load_config(args.config.config.as_deref(), &overrides)?;
    let mut req = RunRequest::from_document(&loaded.document);
    if let Some(mode) = args.mode {
        req.mode = mode;
    }
    if let Some(slots) = args.slots {
        req.n_slots = slots;
    }
    req.bounds = BoundInputs {
        p_opt_proxy_w: args.p_opt,
        slater: args.psi.zip(args.slater_eps),
    };
    let report = match &args.trace {
        Some(path) => cmd_run(&loaded, &req, Some(create_output(path)?))?,
        None => cmd_run(&loaded, &req, None::<io::Sink>)?,
    };
    write_report(&args.out, &report)?;
    let m = &report.metrics;
    eprintln!(
        "{} V={:e} slots={}: power {:.6} W, queue/device {:.1} bits, delay {:.3} ms -> {}",
        report.mode.as_str(),
        report.control_v,
        m.n_slots,
        m.avg_weighted_power_w,
        m.avg_sum_queue_bits_per_device(),
        report.exec_delay_ms,
        args.out.display()
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), ExperimentError> {
    let loaded = load_config(args.config.config.as_deref(), &args.config.overrides)?;
    let spec = match &args.spec {
        Some(path) => load_sweep_spec(path)?,
        None => {
            if args.v_points == 0 || !(args.v_min > 0.0 && args.v_max >= args.v_min) {
                return Err(ConfigError::invalid("v_min", "need 0 < v_min <= v_max and v_points >= 1").into());
            }
            SweepSpec {
                v_values: log_space(args.v_min, args.v_max, args.v_points),
                modes: args.modes,
                seeds: args.seeds,
                n_slots: args.slots,
                server_weights: args.weights,
            }
        }
    };
    let settings = loaded.document.solver.unwrap_or_default();
    let rows = cmd_sweep(&loaded, &spec, &settings, create_output(&args.out)?)?;
    eprintln!("{} runs -> {}", rows.len(), args.out.display());
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<(), ExperimentError> {
    let opts = VerifyOptions {
        n_cases: args.cases,
        seed: args.seed,
        perturbation: args.perturb,
        ..Default::default()
    };
    let reports = match &args.out {
        Some(path) => cmd_verify(args.suite, &opts, create_output(path)?),
        None => cmd_verify(args.suite, &opts, BufWriter::new(io::stdout().lock())),
    }?;
    eprintln!("{} oracle cases passed", reports.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mec-sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
