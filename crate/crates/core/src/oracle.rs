//! Brute-force reference solvers used to certify the per-slot solver.
//!
//! The oracles evaluate objectives with their own formulas and never call
//! into the closed forms they check. Random instances come from a seed
//! namespace of their own, so changes elsewhere never move the cases.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{QueueState, SlotEnvironment, SystemConfig};
use crate::solver::{
    optimal_power, solve_sp2, solve_sp3, sp1_frequency, SolverSettings,
};

/// One certified case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub check: String,
    pub case_id: u64,
    pub closed_form_objective: f64,
    pub oracle_objective: f64,
    /// `closed_form_objective - oracle_objective`, evaluated in a
    /// cancellation-free form where one exists.
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub tolerance: f64,
    /// Grid spacing of the oracle, when it is grid based.
    pub resolution: Option<f64>,
    pub pass: bool,
}

/// Evaluates `objective` on `n_points` evenly spaced points of `[lo, hi]`
/// and returns the first minimizer and its value.
pub fn grid_oracle_scalar<F: Fn(f64) -> f64>(objective: F, lo: f64, hi: f64, n_points: usize) -> (f64, f64) {
    assert!(lo < hi && n_points >= 2, "grid needs lo < hi and at least two points");
    let last = (n_points - 1) as f64;
    let mut best = (lo, objective(lo));
    for k in 1..n_points {
        let x = if k == n_points - 1 { hi } else { lo + (hi - lo) * (k as f64 / last) };
        let v = objective(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    best
}

/// Checks that can be run by [`run_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// Local frequency closed form against a frequency grid.
    Sp1Grid,
    /// Water-filling power against a power grid at fixed bandwidth.
    PowerGrid,
    /// Alternating power/bandwidth solver against projected gradient.
    Sp2Gradient,
    /// Devices with `Q <= T` gain nothing from transmitting.
    Sp2IdleProbe,
    /// Server closed form against exhaustive frequency and schedule grids.
    Sp3Exhaustive,
}

impl Check {
    pub fn as_str(self) -> &'static str {
        match self {
            Check::Sp1Grid => "sp1_grid",
            Check::PowerGrid => "power_grid",
            Check::Sp2Gradient => "sp2_gradient",
            Check::Sp2IdleProbe => "sp2_idle_probe",
            Check::Sp3Exhaustive => "sp3_exhaustive",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Check::Sp1Grid => 1,
            Check::PowerGrid => 2,
            Check::Sp2Gradient => 3,
            Check::Sp2IdleProbe => 4,
            Check::Sp3Exhaustive => 5,
        }
    }

    pub fn default_cases(self) -> usize {
        match self {
            Check::Sp1Grid | Check::PowerGrid | Check::Sp3Exhaustive => 1000,
            Check::Sp2Gradient => 200,
            Check::Sp2IdleProbe => 1000,
        }
    }
}

/// Groups of checks selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Sp1,
    Sp2,
    Sp3,
    All,
}

impl Suite {
    pub fn checks(self) -> &'static [Check] {
        match self {
            Suite::Sp1 => &[Check::Sp1Grid],
            Suite::Sp2 => &[Check::PowerGrid, Check::Sp2Gradient, Check::Sp2IdleProbe],
            Suite::Sp3 => &[Check::Sp3Exhaustive],
            Suite::All => &[
                Check::Sp1Grid,
                Check::PowerGrid,
                Check::Sp2Gradient,
                Check::Sp2IdleProbe,
                Check::Sp3Exhaustive,
            ],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Sp1 => "sp1",
            Suite::Sp2 => "sp2",
            Suite::Sp3 => "sp3",
            Suite::All => "all",
        })
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sp1" => Ok(Suite::Sp1),
            "sp2" => Ok(Suite::Sp2),
            "sp3" => Ok(Suite::Sp3),
            "all" => Ok(Suite::All),
            other => Err(format!("unknown suite `{other}` (expected sp1, sp2, sp3 or all)")),
        }
    }
}

/// Knobs of a verification run.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Cases per check; `None` uses each check's default.
    pub n_cases: Option<usize>,
    pub seed: u64,
    /// Test hook: multiplies every closed-form decision by `1 + perturbation`
    /// before it is scored.
    pub perturbation: f64,
    pub grid_points: usize,
    pub settings: SolverSettings,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n_cases: None,
            seed: 0,
            perturbation: 0.0,
            grid_points: 20_001,
            settings: SolverSettings::default(),
        }
    }
}

/// Absolute tolerance of the grid checks.
pub const GRID_TOLERANCE: f64 = 1e-9;
/// Relative agreement required between the alternating solver and projected gradient.
pub const SP2_REL_TOLERANCE: f64 = 1e-4;

const NAMESPACE: u64 = 0x6f72_6163_6c65_5f30;

/// Generator of the `case`-th instance of `check`; independent of the order
/// in which cases are visited.
pub fn case_rng(seed: u64, check: Check, case: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NAMESPACE);
    rng.set_stream((check.stream() << 48) | case);
    rng
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn weight(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.15) {
        0.0
    } else {
        log_uniform(rng, 0.05, 20.0)
    }
}

fn random_device_config(rng: &mut ChaCha8Rng, n: usize, m: usize) -> SystemConfig {
    let mut cfg = SystemConfig::homogeneous(n, m);
    cfg.control_v = log_uniform(rng, 1e5, 1e10);
    cfg.server_weight = weight(rng);
    for d in &mut cfg.devices {
        d.distance_m = log_uniform(rng, 30.0, 300.0);
        d.cycles_per_bit = log_uniform(rng, 100.0, 2000.0);
        d.kappa_mob = log_uniform(rng, 1e-28, 1e-26);
        d.f_max_hz = log_uniform(rng, 3e8, 3e9);
        d.p_max_w = log_uniform(rng, 0.05, 2.0);
        d.weight = weight(rng);
    }
    for c in &mut cfg.cores {
        c.kappa_ser = log_uniform(rng, 1e-28, 1e-26);
        c.fc_max_hz = log_uniform(rng, 5e8, 4e9);
    }
    cfg
}

fn channel(rng: &mut ChaCha8Rng, cfg: &SystemConfig, device: usize) -> f64 {
    let u: f64 = rng.gen();
    cfg.large_scale_gain(device) * -(1.0 - u).ln()
}

/// `-a x + b x^3` at `x` minus the same at `y`, without cancellation.
fn cubic_difference(x: f64, y: f64, a: f64, b: f64) -> f64 {
    (x - y) * (-a + b * (x * x + x * y + y * y))
}

fn report(
    check: Check,
    case_id: u64,
    closed: f64,
    oracle: f64,
    abs_gap: f64,
    tolerance: f64,
    resolution: Option<f64>,
) -> OracleReport {
    let scale = closed.abs().max(oracle.abs());
    let rel_gap = if scale > 0.0 { abs_gap / scale } else { 0.0 };
    OracleReport {
        check: check.as_str().to_string(),
        case_id,
        closed_form_objective: closed,
        oracle_objective: oracle,
        abs_gap,
        rel_gap,
        tolerance,
        resolution,
        pass: abs_gap <= tolerance,
    }
}

/// Local frequency of one random device against a uniform grid on `[0, f_max]`.
pub fn sp1_case(case_id: u64, opts: &VerifyOptions) -> OracleReport {
    let mut rng = case_rng(opts.seed, Check::Sp1Grid, case_id);
    let cfg = random_device_config(&mut rng, 1, 1);
    let dev = &cfg.devices[0];
    let q = if rng.gen_bool(0.05) { 0.0 } else { log_uniform(&mut rng, 1.0, 1e7) };

    let a = q * cfg.slot_seconds / dev.cycles_per_bit;
    let b = cfg.control_v * dev.weight * dev.kappa_mob;
    let objective = |f: f64| -a * f + b * f * f * f;

    let f_star = (sp1_frequency(q, dev, &cfg) * (1.0 + opts.perturbation)).min(dev.f_max_hz);
    let (f_grid, grid_value) = grid_oracle_scalar(objective, 0.0, dev.f_max_hz, opts.grid_points);
    let gap = -cubic_difference(f_grid, f_star, a, b);
    report(
        Check::Sp1Grid,
        case_id,
        objective(f_star),
        grid_value,
        gap,
        GRID_TOLERANCE,
        Some(dev.f_max_hz / (opts.grid_points - 1) as f64),
    )
}

/// Water-filling power of one offloader at a random bandwidth fraction
/// against a uniform grid on `[0, p_max]`.
pub fn power_case(case_id: u64, opts: &VerifyOptions) -> OracleReport {
    let mut rng = case_rng(opts.seed, Check::PowerGrid, case_id);
    let cfg = random_device_config(&mut rng, 1, 1);
    let dev = &cfg.devices[0];
    let gap_bits = log_uniform(&mut rng, 1.0, 1e7);
    let alpha = log_uniform(&mut rng, cfg.eps_a, 1.0);
    let gamma = channel(&mut rng, &cfg, 0);

    // -W alpha B tau / ln2 * ln(1 + g p / alpha) + V w p
    let scale = gap_bits * alpha * cfg.bandwidth_hz * cfg.slot_seconds / LN_2;
    let g = gamma / (cfg.noise_psd_w_per_hz * cfg.bandwidth_hz) / alpha;
    let price = cfg.control_v * dev.weight;
    let objective = |p: f64| -scale * (g * p).ln_1p() + price * p;

    let p_star = (optimal_power(alpha, gap_bits, gamma, dev, &cfg) * (1.0 + opts.perturbation)).min(dev.p_max_w);
    let (p_grid, grid_value) = grid_oracle_scalar(objective, 0.0, dev.p_max_w, opts.grid_points);
    // objective(p_star) - objective(p_grid) without cancellation
    let gap = scale * (g * (p_grid - p_star) / (1.0 + g * p_star)).ln_1p() - price * (p_grid - p_star);
    report(
        Check::PowerGrid,
        case_id,
        objective(p_star),
        grid_value,
        gap,
        GRID_TOLERANCE,
        Some(dev.p_max_w / (opts.grid_points - 1) as f64),
    )
}

/// A slot instance for the offloading block.
#[derive(Debug, Clone, PartialEq)]
pub struct Sp2Instance {
    pub cfg: SystemConfig,
    pub state: QueueState,
    pub env: SlotEnvironment,
}

pub fn random_sp2_instance(rng: &mut ChaCha8Rng) -> Sp2Instance {
    let n = [2, 3, 5][rng.gen_range(0..3)];
    let cfg = random_device_config(rng, n, 1);
    let mut state = QueueState::empty(n);
    for i in 0..n {
        let q = log_uniform(rng, 1e2, 1e7);
        state.q_bits[i] = q;
        state.t_bits[i] = q * rng.gen_range(0.0..1.3);
    }
    let gamma = (0..n).map(|i| channel(rng, &cfg, i)).collect();
    Sp2Instance {
        cfg,
        state,
        env: SlotEnvironment {
            gamma,
            arrivals_bits: vec![0.0; n],
        },
    }
}

/// Offloading-block objective `sum -(Q_i - T_i) D_r,i + V w_i p_i` over every
/// device, evaluated independently of the model module.
pub fn sp2_full_objective(inst: &Sp2Instance, p: &[f64], alpha: &[f64]) -> f64 {
    let cfg = &inst.cfg;
    let c = cfg.bandwidth_hz * cfg.slot_seconds / LN_2;
    let n0b = cfg.noise_psd_w_per_hz * cfg.bandwidth_hz;
    (0..cfg.n_devices())
        .map(|i| {
            let w = inst.state.q_bits[i] - inst.state.t_bits[i];
            let rate = if alpha[i] > 0.0 {
                c * alpha[i] * (inst.env.gamma[i] * p[i] / (n0b * alpha[i])).ln_1p()
            } else {
                0.0
            };
            -w * rate + cfg.control_v * cfg.devices[i].weight * p[i]
        })
        .sum()
}

/// Euclidean projection onto `{y >= 0, sum y <= cap}`.
fn project_capped_simplex(y: &mut [f64], cap: f64) {
    for v in y.iter_mut() {
        *v = v.max(0.0);
    }
    if y.iter().sum::<f64>() <= cap {
        return;
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut shift = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        acc += v;
        let candidate = (acc - cap) / (k + 1) as f64;
        if candidate < *v {
            shift = candidate;
        }
    }
    for v in y.iter_mut() {
        *v = (*v - shift).max(0.0);
    }
}

/// Result of [`projected_gradient_sp2`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSolution {
    pub p_tx_w: Vec<f64>,
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Minimizes the offloading-block objective over all devices jointly, on
/// `p_i in [0, p_max,i]`, `alpha_i >= eps_a`, `sum alpha <= 1`, by projected
/// accelerated gradient steps with backtracking and restarts. Powers are scaled by `p_max` and the
/// objective by a fixed positive constant so both blocks share one step size.
pub fn projected_gradient_sp2(inst: &Sp2Instance, max_iter: usize) -> GradientSolution {
    let cfg = &inst.cfg;
    let n = cfg.n_devices();
    let eps = cfg.eps_a;
    let cap = 1.0 - n as f64 * eps;
    let c = cfg.bandwidth_hz * cfg.slot_seconds / LN_2;
    let n0b = cfg.noise_psd_w_per_hz * cfg.bandwidth_hz;
    let w: Vec<f64> = (0..n).map(|i| inst.state.q_bits[i] - inst.state.t_bits[i]).collect();
    let g: Vec<f64> = inst.env.gamma.iter().map(|gm| gm / n0b).collect();
    let pmax: Vec<f64> = cfg.devices.iter().map(|d| d.p_max_w).collect();
    let price: Vec<f64> = cfg.devices.iter().map(|d| cfg.control_v * d.weight).collect();
    let norm = (0..n).map(|i| w[i].abs() * c + price[i] * pmax[i]).sum::<f64>().max(f64::MIN_POSITIVE);

    // x = [u_0..u_n, y_0..y_n], p = u p_max, alpha = eps + y
    let unpack = |x: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let p = (0..n).map(|i| x[i] * pmax[i]).collect();
        let a = (0..n).map(|i| eps + x[n + i]).collect();
        (p, a)
    };
    let value = |x: &[f64]| {
        let (p, a) = unpack(x);
        sp2_full_objective(inst, &p, &a) / norm
    };
    let gradient = |x: &[f64]| -> Vec<f64> {
        let (p, a) = unpack(x);
        let mut grad = vec![0.0; 2 * n];
        for i in 0..n {
            let s = g[i] * p[i] / a[i];
            let d_dp = c * g[i] * a[i] / (a[i] + g[i] * p[i]);
            let d_da = if s > 0.0 { c * (s.ln_1p() - s / (1.0 + s)) } else { 0.0 };
            grad[i] = (-w[i] * d_dp + price[i]) * pmax[i] / norm;
            grad[n + i] = -w[i] * d_da / norm;
        }
        grad
    };
    let project = |x: &mut [f64]| {
        for u in x[..n].iter_mut() {
            *u = u.clamp(0.0, 1.0);
        }
        project_capped_simplex(&mut x[n..], cap);
    };

    let mut x = vec![0.0; 2 * n];
    for i in 0..n {
        x[i] = 0.5;
        x[n + i] = cap / n as f64;
    }
    let mut fx = value(&x);
    let mut previous = x.clone();
    let mut momentum = 1.0_f64;
    let mut step = 1.0;
    let mut iterations = 0;
    let mut checkpoint = fx;
    while iterations < max_iter {
        iterations += 1;
        if iterations % PLATEAU_WINDOW == 0 {
            if checkpoint - fx < PLATEAU_GAIN * fx.abs().max(1.0) {
                break;
            }
            checkpoint = fx;
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_momentum;
        let mut y: Vec<f64> = x.iter().zip(&previous).map(|(a, b)| a + beta * (a - b)).collect();
        project(&mut y);
        let fy = value(&y);
        let grad = gradient(&y);
        let mut trial = Vec::new();
        let mut ft = f64::INFINITY;
        let mut stalled = true;
        for _ in 0..80 {
            trial = y.iter().zip(&grad).map(|(yi, gi)| yi - step * gi).collect();
            project(&mut trial);
            let diff: Vec<f64> = trial.iter().zip(&y).map(|(a, b)| a - b).collect();
            let sq: f64 = diff.iter().map(|d| d * d).sum();
            if sq == 0.0 {
                break;
            }
            let model = fy + diff.iter().zip(&grad).map(|(d, g)| d * g).sum::<f64>() + sq / (2.0 * step);
            ft = value(&trial);
            if ft <= model {
                stalled = false;
                break;
            }
            step *= 0.5;
        }
        if stalled || ft > fx {
            // restart the momentum from the best point so far
            if momentum == 1.0 && stalled {
                break;
            }
            previous = x.clone();
            momentum = 1.0;
            continue;
        }
        previous = std::mem::replace(&mut x, trial);
        fx = ft;
        momentum = next_momentum;
        step *= 1.5;
    }
    let (p, a) = unpack(&x);
    GradientSolution {
        objective: sp2_full_objective(inst, &p, &a),
        p_tx_w: p,
        alpha: a,
        iterations,
    }
}

/// Iteration budget of the projected-gradient oracle.
pub const GRADIENT_ITERATIONS: usize = 400_000;
/// The gradient oracle stops early when a window of this many iterations
/// improves the scaled objective by less than `PLATEAU_GAIN`.
const PLATEAU_WINDOW: usize = 10_000;
const PLATEAU_GAIN: f64 = 1e-13;

/// Alternating solver against projected gradient on a random instance; both
/// must agree to [`SP2_REL_TOLERANCE`].
pub fn sp2_case(case_id: u64, opts: &VerifyOptions) -> OracleReport {
    let mut rng = case_rng(opts.seed, Check::Sp2Gradient, case_id);
    let inst = random_sp2_instance(&mut rng);
    let sol = solve_sp2(&inst.state, &inst.env, &inst.cfg, &opts.settings);
    let p: Vec<f64> = sol
        .p_tx_w
        .iter()
        .zip(&inst.cfg.devices)
        .map(|(p, d)| (p * (1.0 + opts.perturbation)).min(d.p_max_w))
        .collect();
    let closed = sp2_full_objective(&inst, &p, &sol.alpha);
    let oracle = projected_gradient_sp2(&inst, GRADIENT_ITERATIONS).objective;
    let gap = closed - oracle;
    let scale = closed.abs().max(oracle.abs());
    // objectives that vanish (nobody worth serving) are compared absolutely
    let tolerance = (SP2_REL_TOLERANCE * scale).max(1e-9);
    let mut r = report(Check::Sp2Gradient, case_id, closed, oracle, gap, tolerance, None);
    r.pass = gap.abs() <= tolerance;
    r
}

/// Forces a small positive power onto a device with `Q <= T` in the
/// alternating solver's answer; the objective must not improve.
pub fn idle_probe_case(case_id: u64, opts: &VerifyOptions) -> OracleReport {
    let mut rng = case_rng(opts.seed, Check::Sp2IdleProbe, case_id);
    let mut inst = random_sp2_instance(&mut rng);
    let n = inst.cfg.n_devices();
    let idle = rng.gen_range(0..n);
    inst.state.t_bits[idle] = inst.state.q_bits[idle] * rng.gen_range(1.0..2.0);
    let sol = solve_sp2(&inst.state, &inst.env, &inst.cfg, &opts.settings);
    let closed = sp2_full_objective(&inst, &sol.p_tx_w, &sol.alpha);

    let mut p = sol.p_tx_w.clone();
    p[idle] = inst.cfg.devices[idle].p_max_w * rng.gen_range(1e-6..1.0);
    let probe = sp2_full_objective(&inst, &p, &sol.alpha);
    // only the idle device's term changes
    let w = inst.state.q_bits[idle] - inst.state.t_bits[idle];
    let c = inst.cfg.bandwidth_hz * inst.cfg.slot_seconds / LN_2;
    let n0b = inst.cfg.noise_psd_w_per_hz * inst.cfg.bandwidth_hz;
    let a = sol.alpha[idle];
    let term = |p: f64| -w * c * a * (inst.env.gamma[idle] * p / (n0b * a)).ln_1p()
        + inst.cfg.control_v * inst.cfg.devices[idle].weight * p;
    let gap = term(sol.p_tx_w[idle]) - term(p[idle]);
    let exact_idle = sol.p_tx_w[idle] == 0.0 && sol.alpha[idle] == inst.cfg.eps_a;
    let mut r = report(Check::Sp2IdleProbe, case_id, closed, probe, gap, 0.0, None);
    r.pass = exact_idle && gap <= 0.0;
    r
}

/// Per-core frequency grid for the exhaustive server search.
pub const SP3_GRID: usize = 41;
/// Per-core frequency grid and cycle-share steps of the schedule-agnostic search.
pub const SP3_AGNOSTIC_GRID: usize = 11;
pub const SP3_SHARE_STEPS: usize = 10;

fn grid_axis(hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| if k == n - 1 { hi } else { hi * (k as f64 / (n - 1) as f64) })
        .collect()
}

fn cartesian(axes: &[Vec<f64>], mut visit: impl FnMut(&[f64])) {
    let mut idx = vec![0usize; axes.len()];
    let mut point: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    loop {
        visit(&point);
        let mut k = 0;
        loop {
            if k == axes.len() {
                return;
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                point[k] = axes[k][idx[k]];
                break;
            }
            idx[k] = 0;
            point[k] = axes[k][0];
            k += 1;
        }
    }
}

/// All ways of splitting `steps` units over `n` devices.
fn compositions(n: usize, steps: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![steps]];
    }
    let mut out = Vec::new();
    for first in 0..=steps {
        for mut rest in compositions(n - 1, steps - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Result of [`exhaustive_sp3`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sp3OracleSolution {
    pub f_c_hz: Vec<f64>,
    pub d_s_bits: Vec<f64>,
    pub objective: f64,
}

/// Server block by exhaustive search over a per-core frequency grid; for
/// every grid point all cycles go to the device with the largest `T / L`.
pub fn exhaustive_sp3(state: &QueueState, cfg: &SystemConfig, grid_points: usize) -> Sp3OracleSolution {
    let (best_dev, ratio) = best_ratio(state, cfg);
    let price = cfg.control_v * cfg.server_weight;
    let axes: Vec<Vec<f64>> = cfg.cores.iter().map(|c| grid_axis(c.fc_max_hz, grid_points)).collect();
    let mut best = (f64::INFINITY, vec![0.0; cfg.n_cores()]);
    cartesian(&axes, |f| {
        let total: f64 = f.iter().sum();
        let power: f64 = f.iter().zip(&cfg.cores).map(|(f, c)| c.kappa_ser * f * f * f).sum();
        let v = -ratio * cfg.slot_seconds * total + price * power;
        if v < best.0 {
            best = (v, f.to_vec());
        }
    });
    let mut d_s_bits = vec![0.0; cfg.n_devices()];
    d_s_bits[best_dev] = best.1.iter().sum::<f64>() * cfg.slot_seconds / cfg.devices[best_dev].cycles_per_bit;
    Sp3OracleSolution {
        f_c_hz: best.1,
        d_s_bits,
        objective: best.0,
    }
}

fn best_ratio(state: &QueueState, cfg: &SystemConfig) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, (t, d)) in state.t_bits.iter().zip(&cfg.devices).enumerate() {
        let r = t / d.cycles_per_bit;
        if r > best.1 {
            best = (i, r);
        }
    }
    best
}

/// Schedule-agnostic search: grids core frequencies and every split of the
/// cycles over the devices. Returns the best objective and how far below the
/// single-device schedule at the same frequencies it got (never positive
/// when the single-device schedule is optimal).
pub fn schedule_agnostic_sp3(state: &QueueState, cfg: &SystemConfig, grid_points: usize, share_steps: usize) -> (f64, f64) {
    let (_, r_max) = best_ratio(state, cfg);
    let ratios: Vec<f64> = state.t_bits.iter().zip(&cfg.devices).map(|(t, d)| t / d.cycles_per_bit).collect();
    let splits = compositions(cfg.n_devices(), share_steps);
    let price = cfg.control_v * cfg.server_weight;
    let axes: Vec<Vec<f64>> = cfg.cores.iter().map(|c| grid_axis(c.fc_max_hz, grid_points)).collect();
    let mut best = f64::INFINITY;
    let mut advantage = f64::NEG_INFINITY;
    cartesian(&axes, |f| {
        let cycles = f.iter().sum::<f64>() * cfg.slot_seconds;
        let power: f64 = f.iter().zip(&cfg.cores).map(|(f, c)| c.kappa_ser * f * f * f).sum();
        for split in &splits {
            let served_ratio: f64 = split
                .iter()
                .zip(&ratios)
                .map(|(&k, r)| k as f64 / share_steps as f64 * r)
                .sum();
            let v = -served_ratio * cycles + price * power;
            best = best.min(v);
            // single-device objective minus this one
            let loss: f64 = split
                .iter()
                .zip(&ratios)
                .map(|(&k, r)| k as f64 / share_steps as f64 * (r_max - r))
                .sum::<f64>()
                * cycles;
            advantage = advantage.max(-loss);
        }
    });
    (best, advantage)
}

/// Server closed form against both exhaustive searches.
pub fn sp3_case(case_id: u64, opts: &VerifyOptions) -> OracleReport {
    let mut rng = case_rng(opts.seed, Check::Sp3Exhaustive, case_id);
    let n = rng.gen_range(1..=4);
    let m = rng.gen_range(1..=3);
    let cfg = random_device_config(&mut rng, n, m);
    let mut state = QueueState::empty(n);
    for i in 0..n {
        state.t_bits[i] = if rng.gen_bool(0.1) { 0.0 } else { log_uniform(&mut rng, 1.0, 1e7) };
    }
    let sol = solve_sp3(&state, &cfg);
    let f_star: Vec<f64> = sol
        .f_c_hz
        .iter()
        .zip(&cfg.cores)
        .map(|(f, c)| (f * (1.0 + opts.perturbation)).min(c.fc_max_hz))
        .collect();
    let cycles_star = f_star.iter().sum::<f64>() * cfg.slot_seconds;
    let price = cfg.control_v * cfg.server_weight;
    let power_star: f64 = f_star.iter().zip(&cfg.cores).map(|(f, c)| c.kappa_ser * f * f * f).sum();

    let (_, r_max) = best_ratio(&state, &cfg);
    let served: Vec<usize> = (0..n).filter(|&i| sol.d_s_bits[i] > 0.0).collect();
    // shortfall of the closed-form schedule against serving the best device
    let schedule_loss = match served.as_slice() {
        [] => r_max * cycles_star,
        [j] => (r_max - state.t_bits[*j] / cfg.devices[*j].cycles_per_bit) * cycles_star,
        _ => r_max * cycles_star - (0..n).map(|i| state.t_bits[i] * sol.d_s_bits[i]).sum::<f64>(),
    };
    let closed = -r_max * cycles_star + schedule_loss + price * power_star;

    let grid = exhaustive_sp3(&state, &cfg, SP3_GRID);
    let a = r_max * cfg.slot_seconds;
    let frequency_gap: f64 = grid
        .f_c_hz
        .iter()
        .zip(&f_star)
        .zip(&cfg.cores)
        .map(|((fg, fs), c)| -cubic_difference(*fg, *fs, a, price * c.kappa_ser))
        .sum();
    let (agnostic_best, agnostic_advantage) = schedule_agnostic_sp3(&state, &cfg, SP3_AGNOSTIC_GRID, SP3_SHARE_STEPS);

    let gap = (frequency_gap + schedule_loss).max(agnostic_advantage);
    let resolution = cfg.cores.iter().map(|c| c.fc_max_hz).fold(0.0, f64::max) / (SP3_GRID - 1) as f64;
    report(
        Check::Sp3Exhaustive,
        case_id,
        closed,
        grid.objective.min(agnostic_best),
        gap,
        GRID_TOLERANCE,
        Some(resolution),
    )
}

/// Runs one check over `n` cases in parallel; reports come back in case order.
pub fn run_check(check: Check, opts: &VerifyOptions) -> Vec<OracleReport> {
    let n = opts.n_cases.unwrap_or_else(|| check.default_cases()) as u64;
    let case = match check {
        Check::Sp1Grid => sp1_case,
        Check::PowerGrid => power_case,
        Check::Sp2Gradient => sp2_case,
        Check::Sp2IdleProbe => idle_probe_case,
        Check::Sp3Exhaustive => sp3_case,
    };
    (0..n).into_par_iter().map(|id| case(id, opts)).collect()
}

/// Runs every check of `suite`.
pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Vec<OracleReport> {
    suite.checks().iter().flat_map(|&c| run_check(c, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_constant_objective_returns_lo() {
        assert_eq!(grid_oracle_scalar(|_| 3.0, -1.0, 2.0, 7), (-1.0, 3.0));
    }

    #[test]
    fn grid_quadratic_picks_nearest_point() {
        let (x, v) = grid_oracle_scalar(|x| (x - 0.31) * (x - 0.31), 0.0, 1.0, 11);
        assert_eq!(x, 0.3);
        assert!((v - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn grid_hits_both_endpoints_exactly() {
        let (x, _) = grid_oracle_scalar(|x| -x, 0.0, 0.7, 3);
        assert_eq!(x, 0.7);
    }

    #[test]
    fn capped_simplex_projection() {
        let mut y = vec![0.2, -0.1, 0.3];
        project_capped_simplex(&mut y, 1.0);
        assert_eq!(y, vec![0.2, 0.0, 0.3]);

        let mut y = vec![0.9, 0.6, -0.4];
        project_capped_simplex(&mut y, 1.0);
        assert!((y[0] - 0.65).abs() < 1e-15 && (y[1] - 0.35).abs() < 1e-15 && y[2] == 0.0);
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(3, 10).len(), 66);
        assert!(compositions(4, 5).iter().all(|c| c.iter().sum::<usize>() == 5));
    }

    #[test]
    fn gradient_zero_channel_gives_idle_allocation() {
        let cfg = SystemConfig::homogeneous(3, 1);
        let inst = Sp2Instance {
            state: QueueState {
                q_bits: vec![5e4, 4e4, 3e4],
                t_bits: vec![0.0; 3],
            },
            env: SlotEnvironment {
                gamma: vec![0.0; 3],
                arrivals_bits: vec![0.0; 3],
            },
            cfg,
        };
        let sol = projected_gradient_sp2(&inst, 2000);
        assert!(sol.p_tx_w.iter().all(|&p| p == 0.0));
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn gradient_symmetric_instance_is_symmetric() {
        let cfg = SystemConfig::homogeneous(2, 1);
        let g = cfg.large_scale_gain(0);
        let inst = Sp2Instance {
            state: QueueState {
                q_bits: vec![2e5, 2e5],
                t_bits: vec![1e4, 1e4],
            },
            env: SlotEnvironment {
                gamma: vec![g, g],
                arrivals_bits: vec![0.0; 2],
            },
            cfg,
        };
        let sol = projected_gradient_sp2(&inst, GRADIENT_ITERATIONS);
        assert!((sol.alpha[0] - sol.alpha[1]).abs() < 1e-5);
        assert!((sol.p_tx_w[0] - sol.p_tx_w[1]).abs() < 1e-5);
    }

    #[test]
    fn exhaustive_sp3_empty_buffers_idle_the_cores() {
        let mut cfg = SystemConfig::homogeneous(2, 2);
        cfg.server_weight = 0.02;
        let sol = exhaustive_sp3(&QueueState::empty(2), &cfg, 5);
        assert_eq!(sol.f_c_hz, vec![0.0, 0.0]);
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn case_generation_is_order_independent() {
        let opts = VerifyOptions::default();
        let a = sp1_case(17, &opts);
        let _ = sp1_case(3, &opts);
        assert_eq!(a, sp1_case(17, &opts));
    }

    #[test]
    fn perturbed_closed_forms_are_caught() {
        let opts = VerifyOptions {
            n_cases: Some(50),
            perturbation: 0.05,
            ..Default::default()
        };
        for check in [Check::Sp1Grid, Check::PowerGrid, Check::Sp3Exhaustive] {
            assert!(run_check(check, &opts).iter().any(|r| !r.pass), "{check:?}");
        }
    }
}
