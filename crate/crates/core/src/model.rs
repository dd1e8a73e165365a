//! System model: static configuration, queue/decision/outcome records, the
//! physical evaluators (departures and DVFS power) and the seeded
//! per-slot environment generator.

use std::f64::consts::LN_2;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Static parameters of one mobile device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Distance to the server in metres.
    pub distance_m: f64,
    /// CPU cycles needed per task bit.
    pub cycles_per_bit: f64,
    /// Effective switched capacitance of the local CPU.
    pub kappa_mob: f64,
    pub f_max_hz: f64,
    pub p_max_w: f64,
    /// Power weight, may be zero.
    pub weight: f64,
    /// Upper end of the uniform per-slot arrival range, in bits.
    pub arrival_max_bits: f64,
}

impl DeviceParams {
    /// Mean arrival per slot for uniform arrivals on `[0, arrival_max_bits]`.
    pub fn arrival_mean_bits(&self) -> f64 {
        self.arrival_max_bits / 2.0
    }
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            distance_m: 150.0,
            cycles_per_bit: 737.5,
            kappa_mob: 1e-27,
            f_max_hz: 1e9,
            p_max_w: 0.5,
            weight: 1.0,
            arrival_max_bits: 8000.0,
        }
    }
}

/// Static parameters of one server CPU core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreParams {
    pub kappa_ser: f64,
    pub fc_max_hz: f64,
}

impl Default for CoreParams {
    fn default() -> Self {
        Self {
            kappa_ser: 1e-27,
            fc_max_hz: 2.5e9,
        }
    }
}

/// All static parameters of the MEC system, in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub devices: Vec<DeviceParams>,
    pub cores: Vec<CoreParams>,
    /// System bandwidth in Hz.
    pub bandwidth_hz: f64,
    /// Slot length in seconds.
    pub slot_seconds: f64,
    /// Noise power spectral density, linear W/Hz.
    pub noise_psd_w_per_hz: f64,
    /// Path-loss constant, linear.
    pub pathloss_const: f64,
    pub pathloss_exp: f64,
    pub ref_distance_m: f64,
    /// Weight of the server power in the weighted sum, may be zero.
    pub server_weight: f64,
    /// Drift-plus-penalty control parameter, bits^2/W.
    pub control_v: f64,
    /// Lower bound on every bandwidth fraction.
    pub eps_a: f64,
    pub rng_seed: u64,
}

/// Converts a dBm/Hz density into W/Hz.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a dB gain into a linear factor.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl Default for SystemConfig {
    /// Five homogeneous devices at 150 m, an eight-core server and a 10 MHz
    /// channel with 1 ms slots.
    fn default() -> Self {
        Self::homogeneous(5, 8)
    }
}

impl SystemConfig {
    /// Homogeneous system with default device and core parameters.
    pub fn homogeneous(n_devices: usize, n_cores: usize) -> Self {
        Self {
            devices: vec![DeviceParams::default(); n_devices],
            cores: vec![CoreParams::default(); n_cores],
            bandwidth_hz: 1e7,
            slot_seconds: 1e-3,
            noise_psd_w_per_hz: dbm_to_watts(-174.0),
            pathloss_const: db_to_linear(-40.0),
            pathloss_exp: 4.0,
            ref_distance_m: 1.0,
            server_weight: 0.0,
            control_v: 7e9,
            eps_a: 1e-4,
            rng_seed: 1,
        }
    }

    pub fn n_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn n_cores(&self) -> usize {
        self.cores.len()
    }

    /// Large-scale gain `g0 (d0/d_i)^theta` of device `i`.
    pub fn large_scale_gain(&self, device: usize) -> f64 {
        self.pathloss_const
            * (self.ref_distance_m / self.devices[device].distance_m).powf(self.pathloss_exp)
    }

    /// Total arrival rate in bits per slot.
    pub fn total_arrival_mean_bits(&self) -> f64 {
        self.devices.iter().map(DeviceParams::arrival_mean_bits).sum()
    }

    /// Server cycles available per slot with every core at full speed.
    pub fn max_server_cycles(&self) -> f64 {
        self.cores.iter().map(|c| c.fc_max_hz).sum::<f64>() * self.slot_seconds
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(field, format!("must be finite and > 0, got {v}")))
            }
        }
        fn non_negative(field: &str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(field, format!("must be finite and >= 0, got {v}")))
            }
        }

        if self.devices.is_empty() {
            return Err(ConfigError::invalid("n_devices", "must be at least 1"));
        }
        if self.cores.is_empty() {
            return Err(ConfigError::invalid("n_cores", "must be at least 1"));
        }
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("slot_seconds", self.slot_seconds)?;
        positive("noise_psd_w_per_hz", self.noise_psd_w_per_hz)?;
        positive("pathloss_const", self.pathloss_const)?;
        positive("pathloss_exp", self.pathloss_exp)?;
        positive("ref_distance_m", self.ref_distance_m)?;
        non_negative("server_weight", self.server_weight)?;
        positive("control_v", self.control_v)?;
        positive("eps_a", self.eps_a)?;
        if self.n_devices() as f64 * self.eps_a >= 1.0 {
            return Err(ConfigError::invalid(
                "eps_a",
                format!("n_devices * eps_a must be < 1, got {}", self.n_devices() as f64 * self.eps_a),
            ));
        }
        for (i, d) in self.devices.iter().enumerate() {
            let f = |name: &str| format!("devices[{i}].{name}");
            positive(&f("distance_m"), d.distance_m)?;
            positive(&f("cycles_per_bit"), d.cycles_per_bit)?;
            positive(&f("kappa_mob"), d.kappa_mob)?;
            positive(&f("f_max_hz"), d.f_max_hz)?;
            positive(&f("p_max_w"), d.p_max_w)?;
            non_negative(&f("weight"), d.weight)?;
            non_negative(&f("arrival_max_bits"), d.arrival_max_bits)?;
        }
        for (m, c) in self.cores.iter().enumerate() {
            positive(&format!("cores[{m}].kappa_ser"), c.kappa_ser)?;
            positive(&format!("cores[{m}].fc_max_hz"), c.fc_max_hz)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("malformed config document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("device {device}: frequency {f_hz} Hz outside [0, {f_max_hz}]")]
    FrequencyOutOfRange { device: usize, f_hz: f64, f_max_hz: f64 },
}

/// Local and server-side buffer lengths, in bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub q_bits: Vec<f64>,
    pub t_bits: Vec<f64>,
}

impl QueueState {
    /// Empty buffers for `n` devices.
    pub fn empty(n: usize) -> Self {
        Self {
            q_bits: vec![0.0; n],
            t_bits: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.q_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_bits.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        self.q_bits.len() == self.t_bits.len()
            && self
                .q_bits
                .iter()
                .chain(&self.t_bits)
                .all(|v| v.is_finite() && *v >= 0.0)
    }

    pub fn total_bits(&self) -> f64 {
        self.q_bits.iter().sum::<f64>() + self.t_bits.iter().sum::<f64>()
    }
}

/// Random realisations of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotEnvironment {
    /// Channel power gain including path loss, linear.
    pub gamma: Vec<f64>,
    pub arrivals_bits: Vec<f64>,
}

/// Control vector of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDecision {
    pub f_hz: Vec<f64>,
    pub p_tx_w: Vec<f64>,
    pub alpha: Vec<f64>,
    pub f_c_hz: Vec<f64>,
    pub d_s_bits: Vec<f64>,
}

impl SlotDecision {
    /// Checks the box, relaxed-simplex and server-cycle constraints. `slack`
    /// is a relative tolerance for the two coupling constraints.
    pub fn check_feasible(&self, cfg: &SystemConfig, slack: f64) -> Result<(), String> {
        let n = cfg.n_devices();
        if self.f_hz.len() != n
            || self.p_tx_w.len() != n
            || self.alpha.len() != n
            || self.d_s_bits.len() != n
            || self.f_c_hz.len() != cfg.n_cores()
        {
            return Err("dimension mismatch".into());
        }
        for (i, d) in cfg.devices.iter().enumerate() {
            if !(0.0..=d.f_max_hz).contains(&self.f_hz[i]) {
                return Err(format!("f_hz[{i}] = {} out of range", self.f_hz[i]));
            }
            if !(0.0..=d.p_max_w).contains(&self.p_tx_w[i]) {
                return Err(format!("p_tx_w[{i}] = {} out of range", self.p_tx_w[i]));
            }
            if !(self.alpha[i] >= cfg.eps_a) {
                return Err(format!("alpha[{i}] = {} below eps_a", self.alpha[i]));
            }
            if !(self.d_s_bits[i] >= 0.0) {
                return Err(format!("d_s_bits[{i}] = {} negative", self.d_s_bits[i]));
            }
        }
        let alpha_sum: f64 = self.alpha.iter().sum();
        if alpha_sum > 1.0 + slack {
            return Err(format!("alpha sums to {alpha_sum}"));
        }
        for (m, c) in cfg.cores.iter().enumerate() {
            if !(0.0..=c.fc_max_hz).contains(&self.f_c_hz[m]) {
                return Err(format!("f_c_hz[{m}] = {} out of range", self.f_c_hz[m]));
            }
        }
        let used: f64 = self
            .d_s_bits
            .iter()
            .zip(&cfg.devices)
            .map(|(d, dev)| d * dev.cycles_per_bit)
            .sum();
        let budget = self.f_c_hz.iter().sum::<f64>() * cfg.slot_seconds;
        if used > budget * (1.0 + slack) {
            return Err(format!("server schedule uses {used} cycles of {budget}"));
        }
        Ok(())
    }
}

/// Departures and power draw resulting from one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub d_local_bits: Vec<f64>,
    pub d_remote_bits: Vec<f64>,
    /// Offloaded bits that carry real task input: `min(max(Q - D_l, 0), D_r)`.
    pub d_effective_remote_bits: Vec<f64>,
    /// Per-device `kappa f^3 + p_tx`.
    pub power_mobile_w: Vec<f64>,
    pub power_server_w: f64,
    pub weighted_power_w: f64,
}

impl SlotOutcome {
    /// Evaluates a decision against the local buffers `q_bits` it acts on.
    pub fn evaluate(
        decision: &SlotDecision,
        q_bits: &[f64],
        env: &SlotEnvironment,
        cfg: &SystemConfig,
    ) -> Self {
        let n = cfg.n_devices();
        let mut d_local_bits = Vec::with_capacity(n);
        let mut d_remote_bits = Vec::with_capacity(n);
        let mut d_effective_remote_bits = Vec::with_capacity(n);
        let mut power_mobile_w = Vec::with_capacity(n);
        let mut weighted = 0.0;
        for (i, dev) in cfg.devices.iter().enumerate() {
            let d_l = cfg.slot_seconds * decision.f_hz[i] / dev.cycles_per_bit;
            let d_r = offload_rate(decision.alpha[i], decision.p_tx_w[i], env.gamma[i], cfg);
            let p = dev.kappa_mob * decision.f_hz[i].powi(3) + decision.p_tx_w[i];
            weighted += dev.weight * p;
            d_local_bits.push(d_l);
            d_remote_bits.push(d_r);
            d_effective_remote_bits.push(effective_offload(q_bits[i], d_l, d_r));
            power_mobile_w.push(p);
        }
        let power_server_w = server_power(&decision.f_c_hz, cfg);
        weighted += cfg.server_weight * power_server_w;
        Self {
            d_local_bits,
            d_remote_bits,
            d_effective_remote_bits,
            power_mobile_w,
            power_server_w,
            weighted_power_w: weighted,
        }
    }
}

/// Offloaded bits that enter the server buffer: dummy bits sent beyond the
/// local backlog are dropped.
pub fn effective_offload(q: f64, d_local: f64, d_remote: f64) -> f64 {
    (q - d_local).max(0.0).min(d_remote)
}

/// Bits executed locally in one slot at CPU frequency `f_hz`.
pub fn local_departure(f_hz: f64, cfg: &SystemConfig, device: usize) -> Result<f64, ModelError> {
    let dev = &cfg.devices[device];
    if !(0.0..=dev.f_max_hz).contains(&f_hz) {
        return Err(ModelError::FrequencyOutOfRange {
            device,
            f_hz,
            f_max_hz: dev.f_max_hz,
        });
    }
    Ok(cfg.slot_seconds * f_hz / dev.cycles_per_bit)
}

/// Shannon-rate offload volume (bits per slot) with bandwidth fraction
/// `alpha`, transmit power `p_tx_w` and channel gain `gamma`.
pub fn offload_rate(alpha: f64, p_tx_w: f64, gamma: f64, cfg: &SystemConfig) -> f64 {
    if alpha <= 0.0 {
        return 0.0;
    }
    let snr = gamma * p_tx_w / (alpha * cfg.noise_psd_w_per_hz * cfg.bandwidth_hz);
    alpha * cfg.bandwidth_hz * cfg.slot_seconds * snr.ln_1p() / LN_2
}

/// `ln(1+s) - s/(1+s)`, accurate for small `s`.
fn rate_slope_kernel(s: f64) -> f64 {
    if s < 1e-3 {
        // alternating series sum_{k>=2} (-1)^k (k-1)/k s^k
        let s2 = s * s;
        s2 * (0.5 - s * (2.0 / 3.0) + s2 * 0.75 - s2 * s * 0.8)
    } else {
        s.ln_1p() - s / (1.0 + s)
    }
}

/// Partial derivative of [`offload_rate`] in `alpha` (bits per unit
/// bandwidth fraction). Positive and decreasing in `alpha`.
pub fn offload_rate_dalpha(alpha: f64, p_tx_w: f64, gamma: f64, cfg: &SystemConfig) -> f64 {
    let x = gamma * p_tx_w / (cfg.noise_psd_w_per_hz * cfg.bandwidth_hz);
    if x <= 0.0 {
        return 0.0;
    }
    let s = x / alpha;
    cfg.bandwidth_hz * cfg.slot_seconds / LN_2 * rate_slope_kernel(s)
}

/// Second partial derivative of [`offload_rate`] in `alpha`; non-positive.
pub fn offload_rate_d2alpha(alpha: f64, p_tx_w: f64, gamma: f64, cfg: &SystemConfig) -> f64 {
    let x = gamma * p_tx_w / (cfg.noise_psd_w_per_hz * cfg.bandwidth_hz);
    if x <= 0.0 || alpha <= 0.0 {
        return 0.0;
    }
    let s = x / alpha;
    let r = s / (1.0 + s);
    -cfg.bandwidth_hz * cfg.slot_seconds / LN_2 * r * r / alpha
}

/// Partial derivative of [`offload_rate`] in the transmit power.
pub fn offload_rate_dpower(alpha: f64, p_tx_w: f64, gamma: f64, cfg: &SystemConfig) -> f64 {
    if alpha <= 0.0 {
        return 0.0;
    }
    let g = gamma / (cfg.noise_psd_w_per_hz * cfg.bandwidth_hz);
    cfg.bandwidth_hz * cfg.slot_seconds / LN_2 * g * alpha / (alpha + g * p_tx_w)
}

/// DVFS power of a mobile CPU, `kappa f^3`.
pub fn mobile_power(f_hz: f64, cfg: &SystemConfig, device: usize) -> f64 {
    cfg.devices[device].kappa_mob * f_hz.powi(3)
}

/// Total DVFS power of the server cores.
pub fn server_power(f_c_hz: &[f64], cfg: &SystemConfig) -> f64 {
    f_c_hz
        .iter()
        .zip(&cfg.cores)
        .map(|(f, c)| c.kappa_ser * f.powi(3))
        .sum()
}

/// Counter-based position in the environment random stream. Each device
/// owns an independent ChaCha stream, so adding devices never shifts the
/// draws of existing ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub slot: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self { seed, slot: 0 }
    }

    pub fn next(self) -> Self {
        Self {
            seed: self.seed,
            slot: self.slot + 1,
        }
    }
}

/// Arrival process behind the environment generator.
pub trait ArrivalModel {
    /// Maps a uniform variate `u` in `[0, 1)` to an arrival volume.
    fn sample(&self, device: &DeviceParams, u: f64) -> f64;
    fn mean_bits(&self, device: &DeviceParams) -> f64;
}

/// Arrivals i.i.d. uniform on `[0, arrival_max_bits]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformArrivals;

impl ArrivalModel for UniformArrivals {
    fn sample(&self, device: &DeviceParams, u: f64) -> f64 {
        u * device.arrival_max_bits
    }

    fn mean_bits(&self, device: &DeviceParams) -> f64 {
        device.arrival_mean_bits()
    }
}

fn unit_interval(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draws the channel gains and arrivals of the slot addressed by `rng`.
pub fn draw_environment(rng: &RngState, cfg: &SystemConfig) -> SlotEnvironment {
    draw_environment_with(rng, cfg, &UniformArrivals)
}

pub fn draw_environment_with<A: ArrivalModel>(
    rng: &RngState,
    cfg: &SystemConfig,
    arrivals: &A,
) -> SlotEnvironment {
    let n = cfg.n_devices();
    let mut gamma = Vec::with_capacity(n);
    let mut arrivals_bits = Vec::with_capacity(n);
    for (i, dev) in cfg.devices.iter().enumerate() {
        let mut stream = ChaCha8Rng::seed_from_u64(rng.seed);
        stream.set_stream(i as u64);
        // two u64 draws per slot = four 32-bit words
        stream.set_word_pos(u128::from(rng.slot) * 4);
        let u_fade = unit_interval(stream.next_u64());
        let u_arrival = unit_interval(stream.next_u64());
        // Exp(1) by inverse CDF
        let small_scale = -(-u_fade).ln_1p();
        gamma.push(small_scale * cfg.large_scale_gain(i));
        arrivals_bits.push(arrivals.sample(dev, u_arrival));
    }
    SlotEnvironment {
        gamma,
        arrivals_bits,
    }
}
