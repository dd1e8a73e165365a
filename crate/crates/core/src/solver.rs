//! Per-slot drift-plus-penalty problem.
//!
//! The slot objective separates into three independent blocks:
//!
//! * local CPU frequencies, closed form per device;
//! * transmit power and bandwidth of the devices whose local backlog exceeds
//!   their server backlog, solved by alternating a closed-form power step with
//!   a Lagrangian bisection for the bandwidth split;
//! * server core frequencies and the server schedule, closed form once the
//!   device with the largest `T_i / L_i` is known.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::model::{
    offload_rate, offload_rate_d2alpha, offload_rate_dalpha, server_power, DeviceParams, QueueState, SlotDecision,
    SlotEnvironment, SystemConfig,
};

/// Numerical knobs of the iterative parts of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Relative objective change that stops the alternating power/bandwidth loop.
    pub tol_gs: f64,
    pub max_iter_gs: usize,
    /// Relative interval width at which the per-device root search stops.
    pub root_rel_width: f64,
    /// Accuracy on the bandwidth budget that stops the multiplier search.
    pub xi: f64,
    pub max_multiplier_iter: usize,
    /// Try an extrapolated bandwidth split after every alternating pass and
    /// keep it when it lowers the objective.
    pub extrapolate: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_gs: 1e-8,
            max_iter_gs: 100,
            root_rel_width: 1e-10,
            xi: 1e-7,
            max_multiplier_iter: 200,
            extrapolate: true,
        }
    }
}

/// Stationary point of `-Q tau f / L + V w kappa f^3`, clipped to `[0, f_max]`.
pub fn sp1_frequency(q_bits: f64, dev: &DeviceParams, cfg: &SystemConfig) -> f64 {
    if dev.weight > 0.0 {
        let stationary = (q_bits * cfg.slot_seconds
            / (3.0 * dev.kappa_mob * dev.weight * cfg.control_v * dev.cycles_per_bit))
            .sqrt();
        stationary.min(dev.f_max_hz)
    } else {
        dev.f_max_hz
    }
}

/// Optimal local CPU frequencies.
pub fn solve_sp1(q_bits: &[f64], cfg: &SystemConfig) -> Vec<f64> {
    q_bits
        .iter()
        .zip(&cfg.devices)
        .map(|(&q, dev)| sp1_frequency(q, dev, cfg))
        .collect()
}

/// One device's share of the local-frequency objective.
pub fn sp1_term(f_hz: f64, q_bits: f64, dev: &DeviceParams, cfg: &SystemConfig) -> f64 {
    -q_bits * cfg.slot_seconds * f_hz / dev.cycles_per_bit
        + cfg.control_v * dev.weight * dev.kappa_mob * f_hz.powi(3)
}

/// Devices that offload (`Q_i > T_i`) and those pinned to zero power.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffloaderPartition {
    pub offloaders: Vec<usize>,
    pub non_offloaders: Vec<usize>,
}

impl OffloaderPartition {
    pub fn from_state(state: &QueueState) -> Self {
        let (offloaders, non_offloaders) =
            (0..state.len()).partition(|&i| state.q_bits[i] > state.t_bits[i]);
        Self {
            offloaders,
            non_offloaders,
        }
    }

    /// Bandwidth left for the offloaders once every other device holds `eps_a`.
    pub fn residual_bandwidth(&self, cfg: &SystemConfig) -> f64 {
        1.0 - self.non_offloaders.len() as f64 * cfg.eps_a
    }
}

/// Closed-form water-filling power of one offloader for a fixed bandwidth
/// fraction. `backlog_gap` is `Q_i - T_i`.
pub fn optimal_power(
    alpha: f64,
    backlog_gap: f64,
    gamma: f64,
    dev: &DeviceParams,
    cfg: &SystemConfig,
) -> f64 {
    if dev.weight == 0.0 {
        return dev.p_max_w;
    }
    if gamma <= 0.0 {
        return 0.0;
    }
    let level = backlog_gap * cfg.slot_seconds / (LN_2 * cfg.control_v * dev.weight)
        - cfg.noise_psd_w_per_hz / gamma;
    (alpha * cfg.bandwidth_hz * level.max(0.0)).min(dev.p_max_w)
}

/// Power step of the alternating loop. Entries outside the offloader set are 0.
pub fn solve_power_given_bandwidth(
    alpha: &[f64],
    state: &QueueState,
    env: &SlotEnvironment,
    cfg: &SystemConfig,
    partition: &OffloaderPartition,
) -> Vec<f64> {
    let mut p = vec![0.0; cfg.n_devices()];
    for &i in &partition.offloaders {
        p[i] = optimal_power(
            alpha[i],
            state.q_bits[i] - state.t_bits[i],
            env.gamma[i],
            &cfg.devices[i],
            cfg,
        );
    }
    p
}

/// Result of the Lagrangian bandwidth split.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSolution {
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Marginal {
    weight: f64,
    p: f64,
    gamma: f64,
}

impl Marginal {
    fn at(&self, alpha: f64, cfg: &SystemConfig) -> f64 {
        self.weight * offload_rate_dalpha(alpha, self.p, self.gamma, cfg)
    }

    fn active(&self) -> bool {
        self.p * self.gamma > 0.0
    }
}

/// `max(eps_a, R(lambda))` where `R` solves `marginal(alpha) = lambda` on
/// `(0, cap]`; the marginal is decreasing in `alpha`. `bracket` must contain
/// the root (pass `(eps_a, cap)` when nothing better is known) and `start`
/// is the first Newton point. Newton steps that leave the shrinking bracket
/// fall back to bisection; the root is returned once a bracket of relative
/// width `rel_width` around it is certified.
fn alpha_for_multiplier(
    m: &Marginal,
    lambda: f64,
    cap: f64,
    bracket: (f64, f64),
    start: f64,
    rel_width: f64,
    cfg: &SystemConfig,
) -> f64 {
    if !m.active() || m.at(cfg.eps_a, cfg) <= lambda {
        return cfg.eps_a;
    }
    if m.at(cap, cfg) >= lambda {
        return cap;
    }
    let (mut lo, mut hi) = (bracket.0.max(cfg.eps_a), bracket.1.min(cap));
    let mut x = if start > lo && start < hi { start } else { 0.5 * (lo + hi) };
    while hi - lo > rel_width * hi {
        let g = m.at(x, cfg) - lambda;
        if g > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = m.weight * offload_rate_d2alpha(x, m.p, m.gamma, cfg);
        let newton = if slope < 0.0 { x - g / slope } else { f64::NAN };
        if newton > lo && newton < hi {
            let half = 0.5 * rel_width * newton;
            if (newton - x).abs() <= half {
                let (a, b) = (newton - half, newton + half);
                let (ga, gb) = (m.at(a, cfg) > lambda, m.at(b, cfg) > lambda);
                if ga && !gb {
                    return newton;
                }
                if ga {
                    lo = lo.max(b);
                } else {
                    hi = hi.min(a);
                }
                x = 0.5 * (lo + hi);
            } else {
                x = newton;
            }
        } else {
            x = 0.5 * (lo + hi);
        }
    }
    0.5 * (lo + hi)
}

/// Bandwidth step of the alternating loop: bisection on the multiplier of the
/// budget `sum alpha <= 1 - |non-offloaders| eps_a`. Non-offloaders keep
/// `eps_a`. The returned split is always feasible; `converged` is false when
/// the iteration cap was hit before the budget was met to within `xi`.
pub fn solve_bandwidth_given_power(
    p: &[f64],
    state: &QueueState,
    env: &SlotEnvironment,
    cfg: &SystemConfig,
    partition: &OffloaderPartition,
    settings: &SolverSettings,
) -> BandwidthSolution {
    let eps = cfg.eps_a;
    let mut alpha = vec![eps; cfg.n_devices()];
    let budget = partition.residual_bandwidth(cfg);
    let marginals: Vec<(usize, Marginal)> = partition
        .offloaders
        .iter()
        .map(|&i| {
            (
                i,
                Marginal {
                    weight: state.q_bits[i] - state.t_bits[i],
                    p: p[i],
                    gamma: env.gamma[i],
                },
            )
        })
        .collect();
    if !marginals.iter().any(|(_, m)| m.active()) {
        return BandwidthSolution {
            alpha,
            iterations: 0,
            converged: true,
        };
    }

    let max_marginal = |a: f64| {
        marginals
            .iter()
            .map(|(_, m)| m.at(a, cfg))
            .fold(0.0, f64::max)
    };
    let mut lambda_lo = max_marginal(budget);
    let mut lambda_hi = max_marginal(eps);

    // alpha(lambda) is non-increasing, so the splits at the current multiplier
    // bracket ends bound the split at any multiplier inside it
    let mut at_lo = vec![budget; marginals.len()];
    let mut at_hi = vec![eps; marginals.len()];
    let fill = |lambda: f64, at_lo: &[f64], at_hi: &[f64], alpha: &mut [f64]| -> f64 {
        let mut sum = 0.0;
        for (k, (i, m)) in marginals.iter().enumerate() {
            let start = alpha[*i];
            alpha[*i] = alpha_for_multiplier(
                m,
                lambda,
                budget,
                (at_hi[k], at_lo[k]),
                start,
                settings.root_rel_width,
                cfg,
            );
            sum += alpha[*i];
        }
        sum
    };

    let mut sum = fill(lambda_lo, &at_lo, &at_hi, &mut alpha);
    for (k, (i, _)) in marginals.iter().enumerate() {
        at_lo[k] = alpha[*i];
    }
    let mut iterations = 0;
    while (sum - budget).abs() >= settings.xi && iterations < settings.max_multiplier_iter {
        iterations += 1;
        let lambda = 0.5 * (lambda_lo + lambda_hi);
        sum = fill(lambda, &at_lo, &at_hi, &mut alpha);
        let ends = if sum > budget {
            lambda_lo = lambda;
            &mut at_lo
        } else {
            lambda_hi = lambda;
            &mut at_hi
        };
        for (k, (i, _)) in marginals.iter().enumerate() {
            ends[k] = alpha[*i];
        }
    }
    let converged = (sum - budget).abs() < settings.xi;

    if sum > budget {
        // shrink the part above eps_a so the budget holds exactly
        let excess: f64 = marginals.iter().map(|(i, _)| alpha[*i] - eps).sum();
        let target = budget - marginals.len() as f64 * eps;
        let scale = if excess > 0.0 { target / excess } else { 0.0 };
        for (i, _) in &marginals {
            alpha[*i] = eps + (alpha[*i] - eps) * scale;
        }
    }

    BandwidthSolution {
        alpha,
        iterations,
        converged,
    }
}

/// Objective of the offloading block restricted to `devices`:
/// `sum -(Q_i - T_i) D_r,i + V w_i p_i`.
pub fn sp2_objective(
    p: &[f64],
    alpha: &[f64],
    state: &QueueState,
    env: &SlotEnvironment,
    cfg: &SystemConfig,
    devices: &[usize],
) -> f64 {
    devices
        .iter()
        .map(|&i| {
            -(state.q_bits[i] - state.t_bits[i]) * offload_rate(alpha[i], p[i], env.gamma[i], cfg)
                + cfg.control_v * cfg.devices[i].weight * p[i]
        })
        .sum()
}

/// Diagnostics of the alternating power/bandwidth loop.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GaussSeidelTrace {
    pub iterations: usize,
    /// Objective after each full power + bandwidth pass.
    pub objective_history: Vec<f64>,
    pub converged: bool,
    /// False if any bandwidth step hit its multiplier iteration cap.
    pub bandwidth_converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sp2Solution {
    pub p_tx_w: Vec<f64>,
    pub alpha: Vec<f64>,
    pub trace: GaussSeidelTrace,
}

/// Jointly optimal transmit powers and bandwidth split.
pub fn solve_sp2(
    state: &QueueState,
    env: &SlotEnvironment,
    cfg: &SystemConfig,
    settings: &SolverSettings,
) -> Sp2Solution {
    let n = cfg.n_devices();
    let partition = OffloaderPartition::from_state(state);
    let mut alpha = vec![cfg.eps_a; n];
    let mut trace = GaussSeidelTrace {
        converged: true,
        bandwidth_converged: true,
        ..Default::default()
    };
    if partition.offloaders.is_empty() {
        return Sp2Solution {
            p_tx_w: vec![0.0; n],
            alpha,
            trace,
        };
    }

    let share = partition.residual_bandwidth(cfg) / partition.offloaders.len() as f64;
    for &i in &partition.offloaders {
        alpha[i] = share;
    }
    let objective = |p: &[f64], a: &[f64]| sp2_objective(p, a, state, env, cfg, &partition.offloaders);

    trace.converged = false;
    let mut p = vec![0.0; n];
    let mut previous: Option<f64> = None;
    let mut reach = 1.0;
    for _ in 0..settings.max_iter_gs {
        trace.iterations += 1;
        let p_new = solve_power_given_bandwidth(&alpha, state, env, cfg, &partition);
        let after_power = objective(&p_new, &alpha);
        if previous.is_some_and(|v| after_power > v) {
            // an exact power step can only lose ground through rounding
            trace.converged = true;
            break;
        }
        p = p_new;
        let reference = previous.unwrap_or(after_power);

        let bw = solve_bandwidth_given_power(&p, state, env, cfg, &partition, settings);
        trace.bandwidth_converged &= bw.converged;
        let after_bandwidth = objective(&p, &bw.alpha);
        // an inexact bandwidth step is only accepted if it does not lose ground
        let before = alpha.clone();
        let mut current = if after_bandwidth <= after_power {
            alpha = bw.alpha;
            after_bandwidth
        } else {
            after_power
        };

        if (reference - current).abs() <= settings.tol_gs * reference.abs().max(current.abs()) {
            trace.objective_history.push(current);
            trace.converged = true;
            break;
        }

        if settings.extrapolate {
            if let Some(trial) = extrapolate_split(&before, &alpha, reach, &partition, cfg) {
                let plain = objective(&solve_power_given_bandwidth(&alpha, state, env, cfg, &partition), &alpha);
                let p_trial = solve_power_given_bandwidth(&trial, state, env, cfg, &partition);
                let value = objective(&p_trial, &trial);
                if value < plain.min(current) {
                    alpha = trial;
                    p = p_trial;
                    current = value;
                    reach *= 2.0;
                } else {
                    reach = 1.0;
                }
            }
        }
        trace.objective_history.push(current);
        previous = Some(current);
    }

    Sp2Solution {
        p_tx_w: p,
        alpha,
        trace,
    }
}

/// `alpha + t (alpha - before)` over the offloaders with the largest
/// `t <= reach` that keeps every share at least `eps_a` and the total within
/// budget; `None` when no such move exists.
fn extrapolate_split(
    before: &[f64],
    alpha: &[f64],
    reach: f64,
    partition: &OffloaderPartition,
    cfg: &SystemConfig,
) -> Option<Vec<f64>> {
    let budget = partition.residual_bandwidth(cfg);
    let mut t = reach;
    let mut drift = 0.0;
    for &i in &partition.offloaders {
        let d = alpha[i] - before[i];
        drift += d;
        if d < 0.0 {
            t = t.min((alpha[i] - cfg.eps_a) / -d);
        }
    }
    let total: f64 = partition.offloaders.iter().map(|&i| alpha[i]).sum();
    if drift > 0.0 {
        t = t.min((budget - total) / drift);
    }
    if !(t > 0.0) {
        return None;
    }
    let mut trial = alpha.to_vec();
    for &i in &partition.offloaders {
        trial[i] = (alpha[i] + t * (alpha[i] - before[i])).max(cfg.eps_a);
    }
    let sum: f64 = partition.offloaders.iter().map(|&i| trial[i]).sum();
    (sum <= budget && trial != alpha).then_some(trial)
}

/// Equal split `alpha_i = 1/N` with the closed-form power for offloaders.
pub fn solve_sp2_equal_bandwidth(
    state: &QueueState,
    env: &SlotEnvironment,
    cfg: &SystemConfig,
) -> Sp2Solution {
    let n = cfg.n_devices();
    let partition = OffloaderPartition::from_state(state);
    let alpha = vec![1.0 / n as f64; n];
    let p_tx_w = solve_power_given_bandwidth(&alpha, state, env, cfg, &partition);
    Sp2Solution {
        p_tx_w,
        alpha,
        trace: GaussSeidelTrace {
            converged: true,
            bandwidth_converged: true,
            ..Default::default()
        },
    }
}

/// Device with the largest `T_i / L_i`, smallest index on ties.
pub fn most_backlogged_device(t_bits: &[f64], cfg: &SystemConfig) -> usize {
    let mut best = 0;
    let mut best_ratio = f64::NEG_INFINITY;
    for (i, (t, dev)) in t_bits.iter().zip(&cfg.devices).enumerate() {
        let ratio = t / dev.cycles_per_bit;
        if ratio > best_ratio {
            best = i;
            best_ratio = ratio;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sp3Solution {
    pub f_c_hz: Vec<f64>,
    pub d_s_bits: Vec<f64>,
    /// The device that receives every server cycle.
    pub scheduled: usize,
}

/// Optimal server core frequencies and schedule: all cycles go to the device
/// with the largest `T_i / L_i`.
pub fn solve_sp3(state: &QueueState, cfg: &SystemConfig) -> Sp3Solution {
    let scheduled = most_backlogged_device(&state.t_bits, cfg);
    let t = state.t_bits[scheduled];
    let l = cfg.devices[scheduled].cycles_per_bit;
    let f_c_hz: Vec<f64> = cfg
        .cores
        .iter()
        .map(|core| {
            if cfg.server_weight > 0.0 {
                let stationary = (t * cfg.slot_seconds
                    / (3.0 * cfg.control_v * cfg.server_weight * l * core.kappa_ser))
                    .sqrt();
                stationary.min(core.fc_max_hz)
            } else {
                core.fc_max_hz
            }
        })
        .collect();
    let mut d_s_bits = vec![0.0; cfg.n_devices()];
    d_s_bits[scheduled] = f_c_hz.iter().sum::<f64>() * cfg.slot_seconds / l;
    Sp3Solution {
        f_c_hz,
        d_s_bits,
        scheduled,
    }
}

/// `-sum T_i D_s,i + V w_{N+1} sum kappa f_C^3`.
pub fn sp3_objective(f_c_hz: &[f64], d_s_bits: &[f64], t_bits: &[f64], cfg: &SystemConfig) -> f64 {
    let served: f64 = t_bits.iter().zip(d_s_bits).map(|(t, d)| t * d).sum();
    -served + cfg.control_v * cfg.server_weight * server_power(f_c_hz, cfg)
}

/// How the bandwidth split is chosen each slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandwidthPolicy {
    Optimized,
    /// Fixed `alpha_i = 1/N`.
    Equal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerSlotSolution {
    pub decision: SlotDecision,
    pub trace: GaussSeidelTrace,
}

/// Solves the full per-slot problem for the decision queues `state`.
pub fn solve_per_slot(
    state: &QueueState,
    env: &SlotEnvironment,
    cfg: &SystemConfig,
    settings: &SolverSettings,
    policy: BandwidthPolicy,
) -> PerSlotSolution {
    let f_hz = solve_sp1(&state.q_bits, cfg);
    let sp2 = match policy {
        BandwidthPolicy::Optimized => solve_sp2(state, env, cfg, settings),
        BandwidthPolicy::Equal => solve_sp2_equal_bandwidth(state, env, cfg),
    };
    let sp3 = solve_sp3(state, cfg);
    PerSlotSolution {
        decision: SlotDecision {
            f_hz,
            p_tx_w: sp2.p_tx_w,
            alpha: sp2.alpha,
            f_c_hz: sp3.f_c_hz,
            d_s_bits: sp3.d_s_bits,
        },
        trace: sp2.trace,
    }
}

/// Full per-slot objective
/// `-sum Q D_sum - sum T (D_s - D_r) + V P_sum` of a decision.
pub fn per_slot_objective(
    decision: &SlotDecision,
    state: &QueueState,
    env: &SlotEnvironment,
    cfg: &SystemConfig,
) -> f64 {
    let mut value = 0.0;
    for (i, dev) in cfg.devices.iter().enumerate() {
        let d_l = cfg.slot_seconds * decision.f_hz[i] / dev.cycles_per_bit;
        let d_r = offload_rate(decision.alpha[i], decision.p_tx_w[i], env.gamma[i], cfg);
        value -= state.q_bits[i] * (d_l + d_r);
        value -= state.t_bits[i] * (decision.d_s_bits[i] - d_r);
        value += cfg.control_v
            * dev.weight
            * (decision.p_tx_w[i] + dev.kappa_mob * decision.f_hz[i].powi(3));
    }
    value + cfg.control_v * cfg.server_weight * server_power(&decision.f_c_hz, cfg)
}
