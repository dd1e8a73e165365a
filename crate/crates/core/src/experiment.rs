//! Experiment front end shared by the `mec-sim` binary and the examples:
//! config documents with overrides, single runs, parameter sweeps and
//! oracle verification, with their JSON and CSV outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{run_with, write_trace_rows, Mode, RunOptions, TRACE_COLUMNS};
use crate::metrics::{drift_constant_c, theorem1_power_bound, theorem1_queue_bound, RunMetrics};
use crate::model::{db_to_linear, dbm_to_watts, ConfigError, CoreParams, DeviceParams, SystemConfig};
use crate::oracle::{run_suite, OracleReport, Suite, VerifyOptions};
use crate::solver::SolverSettings;

/// Version of every CSV and JSON layout written by this module.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{failed} of {total} oracle cases failed")]
    OracleFailure { failed: usize, total: usize },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
}

impl ExperimentError {
    /// Process exit status: 1 config, 2 oracle, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            ExperimentError::OracleFailure { .. } => 2,
            ExperimentError::Io { .. } | ExperimentError::Csv { .. } => 3,
        }
    }

    fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| ExperimentError::Io { context, source }
    }

    fn csv(context: impl Into<String>) -> impl FnOnce(csv::Error) -> Self {
        let context = context.into();
        move |source| ExperimentError::Csv { context, source }
    }
}

/// Per-device fields of a config document; absent fields fall back to the
/// `device` block and then to the built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceDoc {
    pub distance_m: Option<f64>,
    pub cycles_per_bit: Option<f64>,
    pub kappa_mob: Option<f64>,
    pub f_max_hz: Option<f64>,
    pub p_max_w: Option<f64>,
    pub weight: Option<f64>,
    pub arrival_max_bits: Option<f64>,
}

impl DeviceDoc {
    fn apply(&self, d: &mut DeviceParams) {
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut d.distance_m, self.distance_m);
        set(&mut d.cycles_per_bit, self.cycles_per_bit);
        set(&mut d.kappa_mob, self.kappa_mob);
        set(&mut d.f_max_hz, self.f_max_hz);
        set(&mut d.p_max_w, self.p_max_w);
        set(&mut d.weight, self.weight);
        set(&mut d.arrival_max_bits, self.arrival_max_bits);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreDoc {
    pub kappa_ser: Option<f64>,
    pub fc_max_hz: Option<f64>,
}

impl CoreDoc {
    fn apply(&self, c: &mut CoreParams) {
        if let Some(v) = self.kappa_ser {
            c.kappa_ser = v;
        }
        if let Some(v) = self.fc_max_hz {
            c.fc_max_hz = v;
        }
    }
}

/// Run-level settings that may live in a config document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDoc {
    pub mode: Option<Mode>,
    pub n_slots: Option<u64>,
    pub warmup_slots: Option<u64>,
}

/// JSON config document. Every field is optional; the empty document `{}`
/// is the default five-device, eight-core system, and the counts stay at
/// five and eight unless `n_devices` and `n_cores` say otherwise. Noise and path loss may be
/// given either linearly or in dBm/Hz and dB.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub n_devices: Option<usize>,
    pub n_cores: Option<usize>,
    pub bandwidth_hz: Option<f64>,
    pub slot_seconds: Option<f64>,
    pub noise_psd_w_per_hz: Option<f64>,
    pub noise_psd_dbm_per_hz: Option<f64>,
    pub pathloss_const: Option<f64>,
    pub pathloss_db: Option<f64>,
    pub pathloss_exp: Option<f64>,
    pub ref_distance_m: Option<f64>,
    pub server_weight: Option<f64>,
    pub control_v: Option<f64>,
    pub eps_a: Option<f64>,
    pub rng_seed: Option<u64>,
    /// Defaults applied to every device.
    pub device: Option<DeviceDoc>,
    /// Per-device overrides, position `i` is device `i`. May be shorter than
    /// `n_devices`, never longer.
    pub devices: Option<Vec<DeviceDoc>>,
    /// Defaults applied to every core.
    pub core: Option<CoreDoc>,
    pub cores: Option<Vec<CoreDoc>>,
    pub run: Option<RunDoc>,
    pub solver: Option<SolverSettings>,
}

fn either(
    linear: Option<f64>,
    log: Option<f64>,
    linear_name: &str,
    log_name: &str,
    convert: fn(f64) -> f64,
) -> Result<Option<f64>, ConfigError> {
    match (linear, log) {
        (Some(_), Some(_)) => Err(ConfigError::invalid(
            linear_name,
            format!("give either `{linear_name}` or `{log_name}`, not both"),
        )),
        (Some(v), None) => Ok(Some(v)),
        (None, Some(v)) => Ok(Some(convert(v))),
        (None, None) => Ok(None),
    }
}

fn count(explicit: Option<usize>, listed: Option<usize>, field: &str, list: &str, default: usize) -> Result<usize, ConfigError> {
    let n = explicit.unwrap_or(default);
    match listed {
        Some(k) if k > n => Err(ConfigError::invalid(
            list,
            format!("{k} entries but `{field}` is {n}"),
        )),
        _ => Ok(n),
    }
}

impl ConfigDocument {
    /// Builds and validates the system configuration.
    pub fn to_config(&self) -> Result<SystemConfig, ConfigError> {
        let n = count(self.n_devices, self.devices.as_ref().map(Vec::len), "n_devices", "devices", 5)?;
        let m = count(self.n_cores, self.cores.as_ref().map(Vec::len), "n_cores", "cores", 8)?;
        let mut cfg = SystemConfig::homogeneous(n, m);

        let mut device = DeviceParams::default();
        if let Some(doc) = &self.device {
            doc.apply(&mut device);
        }
        cfg.devices = vec![device; n];
        for (d, doc) in cfg.devices.iter_mut().zip(self.devices.iter().flatten()) {
            doc.apply(d);
        }
        let mut core = CoreParams::default();
        if let Some(doc) = &self.core {
            doc.apply(&mut core);
        }
        cfg.cores = vec![core; m];
        for (c, doc) in cfg.cores.iter_mut().zip(self.cores.iter().flatten()) {
            doc.apply(c);
        }

        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.bandwidth_hz, self.bandwidth_hz);
        set(&mut cfg.slot_seconds, self.slot_seconds);
        set(
            &mut cfg.noise_psd_w_per_hz,
            either(self.noise_psd_w_per_hz, self.noise_psd_dbm_per_hz, "noise_psd_w_per_hz", "noise_psd_dbm_per_hz", dbm_to_watts)?,
        );
        set(
            &mut cfg.pathloss_const,
            either(self.pathloss_const, self.pathloss_db, "pathloss_const", "pathloss_db", db_to_linear)?,
        );
        set(&mut cfg.pathloss_exp, self.pathloss_exp);
        set(&mut cfg.ref_distance_m, self.ref_distance_m);
        set(&mut cfg.server_weight, self.server_weight);
        set(&mut cfg.control_v, self.control_v);
        set(&mut cfg.eps_a, self.eps_a);
        if let Some(seed) = self.rng_seed {
            cfg.rng_seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Applies one `key=value` override to a JSON document. Dotted keys descend
/// into objects and numeric segments index arrays, which grow with empty
/// objects as needed. The value is parsed as JSON and kept as a string when
/// that fails, so `mode=delay_improved_alg3` works unquoted.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::invalid(assignment, "override must look like key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let last = k + 1 == parts.len();
        if let Ok(index) = part.parse::<usize>() {
            if node.is_null() {
                *node = Value::Array(Vec::new());
            }
            let list = node
                .as_array_mut()
                .ok_or_else(|| ConfigError::invalid(key, format!("`{part}` indexes a non-list")))?;
            while list.len() <= index {
                list.push(Value::Object(Map::new()));
            }
            node = &mut list[index];
        } else {
            if node.is_null() {
                *node = Value::Object(Map::new());
            }
            let map = node
                .as_object_mut()
                .ok_or_else(|| ConfigError::invalid(key, format!("`{part}` descends into a non-object")))?;
            node = map.entry(part.to_string()).or_insert(Value::Null);
        }
        if last {
            *node = value;
            return Ok(());
        }
    }
    Ok(())
}

/// A config resolved from an optional file plus overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub document: ConfigDocument,
    pub config: SystemConfig,
    /// The overrides as given, echoed into outputs.
    pub overrides: Vec<String>,
}

/// Parses a config document from JSON text and applies `overrides`.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<LoadedConfig, ConfigError> {
    let mut doc: Value = serde_json::from_str(text)?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let document: ConfigDocument = serde_json::from_value(doc)?;
    let config = document.to_config()?;
    Ok(LoadedConfig {
        document,
        config,
        overrides: overrides.to_vec(),
    })
}

/// Reads `path` (or starts from `{}` when `None`) and applies `overrides`.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<LoadedConfig, ConfigError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|source| ConfigError::Io {
            path: p.display().to_string(),
            source,
        })?,
        None => "{}".to_string(),
    };
    parse_config(&text, overrides)
}

/// Hex SHA-256 of the resolved configuration.
pub fn config_hash(cfg: &SystemConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Analytical references reported next to the measured metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub drift_constant_c_bits2: f64,
    /// `C / V`: gap between the power bound and the optimum.
    pub power_gap_c_over_v_w: f64,
    /// Caller-supplied proxy for the optimal power, if any.
    pub p_opt_proxy_w: Option<f64>,
    pub power_bound_w: Option<f64>,
    pub queue_bound_bits: Option<f64>,
}

/// Inputs of the optional bound evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundInputs {
    pub p_opt_proxy_w: Option<f64>,
    /// Power and drift margin of a stationary reference policy.
    pub slater: Option<(f64, f64)>,
}

pub fn bound_report(cfg: &SystemConfig, inputs: BoundInputs) -> Result<BoundReport, ConfigError> {
    let c = drift_constant_c(cfg);
    let queue_bound_bits = match (inputs.slater, inputs.p_opt_proxy_w) {
        (Some((psi, eps)), Some(p_opt)) => Some(
            theorem1_queue_bound(psi, eps, p_opt, cfg).map_err(|e| ConfigError::invalid("slater_eps", e.to_string()))?,
        ),
        (Some(_), None) => {
            return Err(ConfigError::invalid("p_opt", "the queue bound needs a p_opt proxy"));
        }
        _ => None,
    };
    Ok(BoundReport {
        drift_constant_c_bits2: c,
        power_gap_c_over_v_w: c / cfg.control_v,
        p_opt_proxy_w: inputs.p_opt_proxy_w,
        power_bound_w: inputs.p_opt_proxy_w.map(|p| theorem1_power_bound(p, cfg)),
        queue_bound_bits,
    })
}

/// Metrics JSON document of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    /// Wall-clock metadata, excluded from determinism guarantees.
    pub generated_unix_s: u64,
    pub config_hash: String,
    pub seed: u64,
    pub mode: Mode,
    pub control_v: f64,
    pub server_weight: f64,
    pub overrides: Vec<String>,
    pub metrics: RunMetrics,
    pub exec_delay_ms: f64,
    pub bounds: BoundReport,
    pub config: SystemConfig,
}

/// What a single run should do.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRequest {
    pub mode: Mode,
    pub n_slots: u64,
    pub warmup_slots: u64,
    pub settings: SolverSettings,
    pub bounds: BoundInputs,
}

impl RunRequest {
    /// Settings from the document's `run` and `solver` blocks, with defaults.
    pub fn from_document(doc: &ConfigDocument) -> Self {
        let run = doc.run.clone().unwrap_or_default();
        Self {
            mode: run.mode.unwrap_or(Mode::BaselineAlg1),
            n_slots: run.n_slots.unwrap_or(10_000),
            warmup_slots: run.warmup_slots.unwrap_or(0),
            settings: doc.solver.unwrap_or_default(),
            bounds: BoundInputs::default(),
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn schema_line(kind: &str) -> String {
    format!("# mec-sim {kind} schema_version={SCHEMA_VERSION}\n")
}

/// Runs one simulation; streams the per-slot trace to `trace` when given.
pub fn cmd_run<W: Write>(
    loaded: &LoadedConfig,
    req: &RunRequest,
    trace: Option<W>,
) -> Result<RunReport, ExperimentError> {
    if req.n_slots == 0 {
        return Err(ConfigError::invalid("n_slots", "must be at least 1").into());
    }
    let cfg = &loaded.config;
    let bounds = bound_report(cfg, req.bounds)?;
    let opts = RunOptions {
        mode: req.mode,
        n_slots: req.n_slots,
        warmup_slots: req.warmup_slots,
        keep_trace: false,
        settings: req.settings,
    };

    let metrics = match trace {
        Some(mut out) => {
            out.write_all(schema_line("trace").as_bytes())
                .map_err(ExperimentError::io("writing trace"))?;
            let mut w = csv::Writer::from_writer(out);
            w.write_record(TRACE_COLUMNS).map_err(ExperimentError::csv("writing trace"))?;
            let mut failure = None;
            let result = run_with(cfg, &opts, |rec| {
                if failure.is_none() {
                    failure = write_trace_rows(&mut w, rec).err();
                }
            });
            if let Some(e) = failure {
                return Err(ExperimentError::csv("writing trace")(e));
            }
            w.flush().map_err(ExperimentError::io("writing trace"))?;
            result.metrics
        }
        None => run_with(cfg, &opts, |_| {}).metrics,
    };

    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        generated_unix_s: unix_now(),
        config_hash: config_hash(cfg),
        seed: cfg.rng_seed,
        mode: req.mode,
        control_v: cfg.control_v,
        server_weight: cfg.server_weight,
        overrides: loaded.overrides.clone(),
        exec_delay_ms: metrics.exec_delay_ms(cfg),
        metrics,
        bounds,
        config: cfg.clone(),
    })
}

/// A grid of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub v_values: Vec<f64>,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_slots")]
    pub n_slots: u64,
    #[serde(default = "default_server_weights")]
    pub server_weights: Vec<f64>,
}

fn default_slots() -> u64 {
    10_000
}

fn default_server_weights() -> Vec<f64> {
    vec![0.0]
}

/// Log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| {
            if k == 0 {
                lo
            } else if k == n - 1 {
                hi
            } else {
                (a + (b - a) * k as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.v_values.is_empty() {
            return Err(ConfigError::invalid("v_values", "must not be empty"));
        }
        if self.modes.is_empty() {
            return Err(ConfigError::invalid("modes", "must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::invalid("seeds", "must not be empty"));
        }
        if self.server_weights.is_empty() {
            return Err(ConfigError::invalid("server_weights", "must not be empty"));
        }
        if self.n_slots == 0 {
            return Err(ConfigError::invalid("n_slots", "must be at least 1"));
        }
        Ok(())
    }

    /// Every point of the grid in output order: V, then mode, seed and
    /// server weight.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &v in &self.v_values {
            for &mode in &self.modes {
                for &seed in &self.seeds {
                    for &w in &self.server_weights {
                        out.push(SweepPoint {
                            control_v: v,
                            mode,
                            seed,
                            server_weight: w,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub control_v: f64,
    pub mode: Mode,
    pub seed: u64,
    pub server_weight: f64,
}

/// One row of the sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "V")]
    pub control_v: f64,
    pub mode: Mode,
    pub w_server: f64,
    pub seed: u64,
    pub n_slots: u64,
    pub avg_weighted_power_w: f64,
    pub avg_mobile_power_w: f64,
    pub avg_server_power_w: f64,
    pub avg_sum_queue_bits_per_device: f64,
    pub exec_delay_ms: f64,
    #[serde(rename = "final_queue_over_T")]
    pub final_queue_over_t: f64,
    #[serde(rename = "C_bits2")]
    pub c_bits2: f64,
    pub gs_nonconverged_slots: u64,
}

/// Column order of the sweep CSV.
pub const SWEEP_COLUMNS: [&str; 13] = [
    "V",
    "mode",
    "w_server",
    "seed",
    "n_slots",
    "avg_weighted_power_w",
    "avg_mobile_power_w",
    "avg_server_power_w",
    "avg_sum_queue_bits_per_device",
    "exec_delay_ms",
    "final_queue_over_T",
    "C_bits2",
    "gs_nonconverged_slots",
];

/// Runs every point of `spec` on top of `base` in parallel and returns the
/// rows in grid order.
pub fn run_sweep(base: &SystemConfig, spec: &SweepSpec, settings: &SolverSettings) -> Result<Vec<SweepRow>, ExperimentError> {
    spec.validate()?;
    let points = spec.points();
    let configs: Vec<SystemConfig> = points
        .iter()
        .map(|pt| {
            let mut cfg = base.clone();
            cfg.control_v = pt.control_v;
            cfg.server_weight = pt.server_weight;
            cfg.rng_seed = pt.seed;
            cfg.validate().map(|_| cfg)
        })
        .collect::<Result<_, _>>()?;
    let rows = points
        .par_iter()
        .zip(configs.par_iter())
        .map(|(pt, cfg)| {
            let opts = RunOptions {
                settings: *settings,
                ..RunOptions::new(pt.mode, spec.n_slots)
            };
            let m = run_with(cfg, &opts, |_| {}).metrics;
            SweepRow {
                control_v: pt.control_v,
                mode: pt.mode,
                w_server: pt.server_weight,
                seed: pt.seed,
                n_slots: m.n_slots,
                avg_weighted_power_w: m.avg_weighted_power_w,
                avg_mobile_power_w: m.avg_mobile_power_w,
                avg_server_power_w: m.avg_server_power_w,
                avg_sum_queue_bits_per_device: m.avg_sum_queue_bits_per_device(),
                exec_delay_ms: m.exec_delay_ms(cfg),
                final_queue_over_t: m.final_queue_over_t,
                c_bits2: drift_constant_c(cfg),
                gs_nonconverged_slots: m.gs_nonconverged_slots,
            }
        })
        .collect();
    Ok(rows)
}

/// Writes sweep rows as CSV with the schema line and header.
pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> Result<(), ExperimentError> {
    out.write_all(schema_line("sweep").as_bytes())
        .map_err(ExperimentError::io("writing sweep"))?;
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(SWEEP_COLUMNS).map_err(ExperimentError::csv("writing sweep"))?;
    }
    for r in rows {
        w.serialize(r).map_err(ExperimentError::csv("writing sweep"))?;
    }
    w.flush().map_err(ExperimentError::io("writing sweep"))
}

/// Reads back a sweep CSV written by [`write_sweep_csv`].
pub fn read_sweep_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>, ExperimentError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(ExperimentError::csv("reading sweep"))
}

/// Runs the sweep and writes the CSV.
pub fn cmd_sweep<W: Write>(
    loaded: &LoadedConfig,
    spec: &SweepSpec,
    settings: &SolverSettings,
    out: W,
) -> Result<Vec<SweepRow>, ExperimentError> {
    let rows = run_sweep(&loaded.config, spec, settings)?;
    write_sweep_csv(out, &rows)?;
    Ok(rows)
}

/// Loads a sweep spec from a JSON file.
pub fn load_sweep_spec(path: &Path) -> Result<SweepSpec, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let spec: SweepSpec = serde_json::from_str(&text)?;
    spec.validate()?;
    Ok(spec)
}

/// Runs an oracle suite, writes one JSON line per report and fails with
/// [`ExperimentError::OracleFailure`] when any case fails.
pub fn cmd_verify<W: Write>(suite: Suite, opts: &VerifyOptions, mut out: W) -> Result<Vec<OracleReport>, ExperimentError> {
    let reports = run_suite(suite, opts);
    for r in &reports {
        let line = serde_json::to_string(r).expect("report serializes");
        writeln!(out, "{line}").map_err(ExperimentError::io("writing reports"))?;
    }
    out.flush().map_err(ExperimentError::io("writing reports"))?;
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(ExperimentError::OracleFailure {
            failed,
            total: reports.len(),
        });
    }
    Ok(reports)
}

/// Writes `report` as pretty JSON to `path`.
pub fn write_report(path: &Path, report: &RunReport) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(path, text + "\n").map_err(ExperimentError::io(format!("writing {}", path.display())))
}

/// Opens `path` for writing, creating parent directories.
pub fn create_output(path: &Path) -> Result<std::io::BufWriter<fs::File>, ExperimentError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(ExperimentError::io(format!("creating {}", parent.display())))?;
    }
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(ExperimentError::io(format!("creating {}", path.display())))
}

/// Default output location next to a config file or in the working directory.
pub fn default_output(config: Option<&Path>, name: &str) -> PathBuf {
    config
        .and_then(Path::parent)
        .map(|p| p.join(name))
        .unwrap_or_else(|| PathBuf::from(name))
}
