//! Run-level metrics and the analytical drift-plus-penalty bounds.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SlotRecord;
use crate::model::{QueueState, SystemConfig};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("total arrival rate is zero, delay is undefined")]
    ZeroArrivalRate,
    #[error("drift margin must be positive, got {0}")]
    NonPositiveMargin(f64),
}

/// Averages over a window of slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub n_slots: u64,
    pub avg_weighted_power_w: f64,
    pub avg_mobile_power_w: f64,
    pub avg_server_power_w: f64,
    pub avg_sum_queue_bits: f64,
}

/// Time averages of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n_slots: u64,
    pub warmup_slots: u64,
    /// Mean of the weighted sum power.
    pub avg_weighted_power_w: f64,
    /// Mean of the unweighted sum of device powers (CPU + transmit).
    pub avg_mobile_power_w: f64,
    pub avg_server_power_w: f64,
    pub per_device_power_w: Vec<f64>,
    /// Sum over devices of the mean of `Q_i(t) + T_i(t)`.
    pub avg_sum_queue_bits: f64,
    pub per_device_queue_bits: Vec<f64>,
    pub avg_local_queue_bits: f64,
    pub avg_server_queue_bits: f64,
    /// Little's-law delay in slots; 0 when nothing ever arrives.
    pub avg_exec_delay_slots: f64,
    /// `sum_i (Q_i(T) + T_i(T)) / T` after the last slot.
    #[serde(rename = "final_queue_over_T")]
    pub final_queue_over_t: f64,
    pub gs_nonconverged_slots: u64,
    pub post_warmup: Option<WindowMetrics>,
}

impl RunMetrics {
    pub fn avg_sum_queue_bits_per_device(&self) -> f64 {
        self.avg_sum_queue_bits / self.per_device_queue_bits.len() as f64
    }

    /// Delay converted to milliseconds with the configured slot length.
    pub fn exec_delay_ms(&self, cfg: &SystemConfig) -> f64 {
        self.avg_exec_delay_slots * cfg.slot_seconds * 1e3
    }
}

#[derive(Debug, Clone, Default)]
struct Sums {
    slots: u64,
    weighted: f64,
    server: f64,
    device_power: Vec<f64>,
    device_queue: Vec<f64>,
    local_queue: f64,
    server_queue: f64,
}

impl Sums {
    fn new(n: usize) -> Self {
        Self {
            device_power: vec![0.0; n],
            device_queue: vec![0.0; n],
            ..Default::default()
        }
    }

    fn add(&mut self, rec: &SlotRecord) {
        self.slots += 1;
        self.weighted += rec.outcome.weighted_power_w;
        self.server += rec.outcome.power_server_w;
        for (i, p) in rec.outcome.power_mobile_w.iter().enumerate() {
            self.device_power[i] += p;
            let (q, t) = (rec.actual.q_bits[i], rec.actual.t_bits[i]);
            self.device_queue[i] += q + t;
            self.local_queue += q;
            self.server_queue += t;
        }
    }

    fn window(&self) -> WindowMetrics {
        let n = self.slots.max(1) as f64;
        WindowMetrics {
            n_slots: self.slots,
            avg_weighted_power_w: self.weighted / n,
            avg_mobile_power_w: self.device_power.iter().sum::<f64>() / n,
            avg_server_power_w: self.server / n,
            avg_sum_queue_bits: self.device_queue.iter().sum::<f64>() / n,
        }
    }
}

/// Streaming accumulator fed one slot record at a time.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    all: Sums,
    post: Sums,
    warmup_slots: u64,
    gs_nonconverged: u64,
}

impl MetricsAccumulator {
    pub fn new(cfg: &SystemConfig, warmup_slots: u64) -> Self {
        let n = cfg.n_devices();
        Self {
            all: Sums::new(n),
            post: Sums::new(n),
            warmup_slots,
            gs_nonconverged: 0,
        }
    }

    pub fn observe(&mut self, rec: &SlotRecord, _cfg: &SystemConfig) {
        self.all.add(rec);
        if rec.slot >= self.warmup_slots {
            self.post.add(rec);
        }
        if !(rec.gs.converged && rec.gs.bandwidth_converged) {
            self.gs_nonconverged += 1;
        }
    }

    /// Final metrics; `final_queues` are the buffers after the last slot.
    pub fn finish(self, final_queues: &QueueState, cfg: &SystemConfig) -> RunMetrics {
        let n = self.all.slots.max(1) as f64;
        let window = self.all.window();
        let per_device_queue_bits: Vec<f64> = self.all.device_queue.iter().map(|s| s / n).collect();
        let mut metrics = RunMetrics {
            n_slots: self.all.slots,
            warmup_slots: self.warmup_slots,
            avg_weighted_power_w: window.avg_weighted_power_w,
            avg_mobile_power_w: window.avg_mobile_power_w,
            avg_server_power_w: window.avg_server_power_w,
            per_device_power_w: self.all.device_power.iter().map(|s| s / n).collect(),
            avg_sum_queue_bits: window.avg_sum_queue_bits,
            per_device_queue_bits,
            avg_local_queue_bits: self.all.local_queue / n,
            avg_server_queue_bits: self.all.server_queue / n,
            avg_exec_delay_slots: 0.0,
            final_queue_over_t: final_queues.total_bits() / n,
            gs_nonconverged_slots: self.gs_nonconverged,
            post_warmup: (self.warmup_slots > 0).then(|| self.post.window()),
        };
        metrics.avg_exec_delay_slots = littles_law_delay(&metrics, cfg).unwrap_or(0.0);
        metrics
    }
}

/// Average execution delay in slots: total mean backlog over total mean
/// arrival rate.
pub fn littles_law_delay(metrics: &RunMetrics, cfg: &SystemConfig) -> Result<f64, MetricsError> {
    let rate = cfg.total_arrival_mean_bits();
    if rate <= 0.0 {
        return Err(MetricsError::ZeroArrivalRate);
    }
    Ok(metrics.per_device_queue_bits.iter().sum::<f64>() / rate)
}

/// Constant `C` of the one-slot drift bound, in bits^2, for unit-mean fading.
pub fn drift_constant_c(cfg: &SystemConfig) -> f64 {
    let tau = cfg.slot_seconds;
    let server_cycles: f64 = cfg.cores.iter().map(|c| c.fc_max_hz).sum::<f64>() * tau;
    let mean_fading = 1.0;
    cfg.devices
        .iter()
        .map(|d| {
            let eta = 2.0
                * cfg.pathloss_const
                * mean_fading
                * d.p_max_w
                * cfg.ref_distance_m.powf(cfg.pathloss_exp)
                * tau
                * tau
                / (LN_2 * cfg.noise_psd_w_per_hz * d.distance_m.powf(cfg.pathloss_exp));
            d.arrival_max_bits.powi(2)
                + (server_cycles / d.cycles_per_bit).powi(2)
                + (d.f_max_hz * tau / d.cycles_per_bit).powi(2)
                + eta * (d.f_max_hz / d.cycles_per_bit + 2.0 * cfg.bandwidth_hz / LN_2)
        })
        .sum::<f64>()
        / 2.0
}

/// Upper bound `P_opt + C/V` on the long-run weighted power. `p_opt_estimate`
/// is a caller-supplied proxy for the unknown optimum.
pub fn theorem1_power_bound(p_opt_estimate: f64, cfg: &SystemConfig) -> f64 {
    p_opt_estimate + drift_constant_c(cfg) / cfg.control_v
}

/// Upper bound `(C + V (psi - P_opt)) / eps` on the summed mean backlog for a
/// policy with drift margin `eps` and power `psi`.
pub fn theorem1_queue_bound(
    psi_eps: f64,
    eps: f64,
    p_opt_estimate: f64,
    cfg: &SystemConfig,
) -> Result<f64, MetricsError> {
    if !(eps > 0.0) {
        return Err(MetricsError::NonPositiveMargin(eps));
    }
    Ok((drift_constant_c(cfg) + cfg.control_v * (psi_eps - p_opt_estimate)) / eps)
}
