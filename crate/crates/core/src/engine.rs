//! Slot-by-slot simulation: buffer dynamics, the online controller and the
//! delay-improved server re-allocation driven by virtual server buffers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::metrics::{MetricsAccumulator, RunMetrics};
use crate::model::{
    draw_environment, effective_offload, QueueState, RngState, SlotDecision, SlotEnvironment,
    SlotOutcome, SystemConfig,
};
use crate::solver::{solve_per_slot, BandwidthPolicy, GaussSeidelTrace, SolverSettings};

/// Controller variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Solve the slot problem on the actual buffers.
    BaselineAlg1,
    /// Solve on virtual buffers, then hand idle server cycles to other devices.
    DelayImprovedAlg3,
    /// Baseline controller with the bandwidth fixed to `1/N` per device.
    EqualBandwidth,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::BaselineAlg1, Mode::DelayImprovedAlg3, Mode::EqualBandwidth];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::BaselineAlg1 => "baseline_alg1",
            Mode::DelayImprovedAlg3 => "delay_improved_alg3",
            Mode::EqualBandwidth => "equal_bandwidth",
        }
    }

    fn bandwidth_policy(self) -> BandwidthPolicy {
        match self {
            Mode::EqualBandwidth => BandwidthPolicy::Equal,
            _ => BandwidthPolicy::Optimized,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline_alg1" | "baseline" => Ok(Mode::BaselineAlg1),
            "delay_improved_alg3" | "delay_improved" => Ok(Mode::DelayImprovedAlg3),
            "equal_bandwidth" => Ok(Mode::EqualBandwidth),
            other => Err(format!(
                "unknown mode `{other}` (expected baseline_alg1, delay_improved_alg3 or equal_bandwidth)"
            )),
        }
    }
}

/// Local buffer update: `max(q - d_sum, 0) + a`.
pub fn update_local_queue(q: f64, d_sum: f64, a: f64) -> f64 {
    (q - d_sum).max(0.0) + a
}

/// Server buffer update: `max(t - d_s, 0) + min(max(q - d_l, 0), d_r)`.
pub fn update_server_queue(t: f64, d_s: f64, q: f64, d_l: f64, d_r: f64) -> f64 {
    (t - d_s).max(0.0) + effective_offload(q, d_l, d_r)
}

/// Re-allocates the server cycles chosen on the virtual buffers to the
/// actual buffers in descending virtual `T_i / L_i` order, ties broken by
/// ascending index. When the top device's actual backlog already absorbs the
/// whole budget the schedule is returned unchanged.
pub fn delay_improved_schedule(
    d_s_star: &[f64],
    f_c_star: &[f64],
    actual_t: &[f64],
    virtual_t: &[f64],
    cfg: &SystemConfig,
) -> Vec<f64> {
    let n = cfg.n_devices();
    let budget = f_c_star.iter().sum::<f64>() * cfg.slot_seconds;
    let cycles = |i: usize| actual_t[i] * cfg.devices[i].cycles_per_bit;

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps ascending index among equal ratios
    order.sort_by(|&a, &b| {
        let ra = virtual_t[a] / cfg.devices[a].cycles_per_bit;
        let rb = virtual_t[b] / cfg.devices[b].cycles_per_bit;
        rb.total_cmp(&ra)
    });
    let top = order[0];
    if budget <= cycles(top) {
        return d_s_star.to_vec();
    }

    let total: f64 = (0..n).map(cycles).sum();
    let n_ser = if total > budget {
        let mut acc = 0.0;
        let mut k = n;
        for (pos, &i) in order.iter().enumerate() {
            acc += cycles(i);
            if acc > budget {
                k = pos + 1;
                break;
            }
        }
        k
    } else {
        n
    };

    let mut d = vec![0.0; n];
    let mut used = 0.0;
    for &i in &order[..n_ser - 1] {
        d[i] = actual_t[i];
        used += cycles(i);
    }
    let last = order[n_ser - 1];
    d[last] = ((budget - used) / cfg.devices[last].cycles_per_bit).max(0.0);
    d
}

/// Complete simulator state between slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub slot_index: u64,
    pub actual: QueueState,
    /// Virtual server buffers; tracked in every mode, only drive decisions in
    /// delay-improved mode, where they equal the buffers the baseline controller would see.
    pub virtual_server_t: Vec<f64>,
    pub rng: RngState,
    pub mode: Mode,
}

impl EngineState {
    pub fn new(cfg: &SystemConfig, mode: Mode) -> Self {
        let n = cfg.n_devices();
        Self {
            slot_index: 0,
            actual: QueueState::empty(n),
            virtual_server_t: vec![0.0; n],
            rng: RngState::new(cfg.rng_seed),
            mode,
        }
    }

    /// Buffers the per-slot problem is solved on.
    pub fn decision_queues(&self) -> QueueState {
        match self.mode {
            Mode::DelayImprovedAlg3 => QueueState {
                q_bits: self.actual.q_bits.clone(),
                t_bits: self.virtual_server_t.clone(),
            },
            _ => self.actual.clone(),
        }
    }
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    /// Buffers at the start of the slot.
    pub actual: QueueState,
    pub virtual_server_t: Vec<f64>,
    pub environment: SlotEnvironment,
    pub decision: SlotDecision,
    /// Server schedule actually executed (differs from `decision.d_s_bits`
    /// only in delay-improved mode).
    pub executed_d_s_bits: Vec<f64>,
    pub outcome: SlotOutcome,
    pub gs: GaussSeidelTrace,
}

/// Advances the system by one slot.
pub fn step(state: &EngineState, cfg: &SystemConfig, settings: &SolverSettings) -> (EngineState, SlotRecord) {
    let env = draw_environment(&state.rng, cfg);
    let queues = state.decision_queues();
    let solution = solve_per_slot(&queues, &env, cfg, settings, state.mode.bandwidth_policy());
    let decision = solution.decision;
    let outcome = SlotOutcome::evaluate(&decision, &state.actual.q_bits, &env, cfg);

    let executed = match state.mode {
        Mode::DelayImprovedAlg3 => delay_improved_schedule(
            &decision.d_s_bits,
            &decision.f_c_hz,
            &state.actual.t_bits,
            &state.virtual_server_t,
            cfg,
        ),
        _ => decision.d_s_bits.clone(),
    };

    let n = cfg.n_devices();
    let mut next = QueueState::empty(n);
    let mut next_virtual = vec![0.0; n];
    for i in 0..n {
        let q = state.actual.q_bits[i];
        let d_l = outcome.d_local_bits[i];
        let d_r = outcome.d_remote_bits[i];
        next.q_bits[i] = update_local_queue(q, d_l + d_r, env.arrivals_bits[i]);
        next.t_bits[i] = update_server_queue(state.actual.t_bits[i], executed[i], q, d_l, d_r);
        next_virtual[i] =
            update_server_queue(state.virtual_server_t[i], decision.d_s_bits[i], q, d_l, d_r);
    }

    let record = SlotRecord {
        slot: state.slot_index,
        actual: state.actual.clone(),
        virtual_server_t: state.virtual_server_t.clone(),
        environment: env,
        decision,
        executed_d_s_bits: executed,
        outcome,
        gs: solution.trace,
    };
    let next_state = EngineState {
        slot_index: state.slot_index + 1,
        actual: next,
        virtual_server_t: next_virtual,
        rng: state.rng.next(),
        mode: state.mode,
    };
    (next_state, record)
}

/// Options of a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub mode: Mode,
    pub n_slots: u64,
    /// Slots excluded from the post-warm-up averages.
    pub warmup_slots: u64,
    pub keep_trace: bool,
    pub settings: SolverSettings,
}

impl RunOptions {
    pub fn new(mode: Mode, n_slots: u64) -> Self {
        Self {
            mode,
            n_slots,
            warmup_slots: 0,
            keep_trace: false,
            settings: SolverSettings::default(),
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.keep_trace = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub metrics: RunMetrics,
    pub trace: Vec<SlotRecord>,
    pub final_state: EngineState,
}

/// Runs `opts.n_slots` slots from empty buffers.
pub fn run(cfg: &SystemConfig, opts: &RunOptions) -> RunResult {
    run_with(cfg, opts, |_| {})
}

/// Like [`run`], handing every slot record to `observe` as it is produced.
pub fn run_with<F: FnMut(&SlotRecord)>(cfg: &SystemConfig, opts: &RunOptions, mut observe: F) -> RunResult {
    let mut state = EngineState::new(cfg, opts.mode);
    let mut acc = MetricsAccumulator::new(cfg, opts.warmup_slots);
    let mut trace = Vec::new();
    for _ in 0..opts.n_slots {
        let (next, record) = step(&state, cfg, &opts.settings);
        acc.observe(&record, cfg);
        observe(&record);
        if opts.keep_trace {
            trace.push(record);
        }
        state = next;
    }
    RunResult {
        metrics: acc.finish(&state.actual, cfg),
        trace,
        final_state: state,
    }
}

/// Column names of the per-slot trace CSV, one row per (slot, device).
pub const TRACE_COLUMNS: [&str; 16] = [
    "slot",
    "device",
    "Q_bits",
    "T_act_bits",
    "T_vir_bits",
    "f_hz",
    "p_tx_w",
    "alpha",
    "d_l",
    "d_r_nominal",
    "d_r_effective",
    "d_s",
    "f_c_sum_hz",
    "weighted_power_w",
    "gs_iterations",
    "gs_converged",
];

/// Writes one slot record as per-device rows.
pub fn write_trace_rows<W: std::io::Write>(w: &mut csv::Writer<W>, rec: &SlotRecord) -> csv::Result<()> {
    let f_c_sum: f64 = rec.decision.f_c_hz.iter().sum();
    for i in 0..rec.actual.len() {
        w.write_record([
            rec.slot.to_string(),
            i.to_string(),
            rec.actual.q_bits[i].to_string(),
            rec.actual.t_bits[i].to_string(),
            rec.virtual_server_t[i].to_string(),
            rec.decision.f_hz[i].to_string(),
            rec.decision.p_tx_w[i].to_string(),
            rec.decision.alpha[i].to_string(),
            rec.outcome.d_local_bits[i].to_string(),
            rec.outcome.d_remote_bits[i].to_string(),
            rec.outcome.d_effective_remote_bits[i].to_string(),
            rec.executed_d_s_bits[i].to_string(),
            f_c_sum.to_string(),
            rec.outcome.weighted_power_w.to_string(),
            rec.gs.iterations.to_string(),
            rec.gs.converged.to_string(),
        ])?;
    }
    Ok(())
}
