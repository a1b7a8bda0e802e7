//! Physical system model.
//!
//! Units are strict SI throughout: seconds, joules, watts, hertz, meters,
//! bits. Anything that arrives in dB/dBm is converted at the configuration
//! boundary (see [`crate::config`]); nothing in this module ever sees a
//! logarithmic unit.
//!
//! A round couples two costs for every scheduled device:
//!
//! * **computation** — one full local pass costs `cycles_per_sample · beta`
//!   CPU cycles; the device runs them at a chosen fraction `tau ∈ (0, 1]` of
//!   its clock, paying time `∝ 1/tau` and energy `∝ tau²` (dynamic power);
//! * **communication** — the model upload of `model_size_bits` goes out over
//!   one sub-channel at a chosen fraction `p ∈ (0, 1]` of the transmit
//!   power, at Shannon rate `B·log2(1 + p·gain)`.
//!
//! `gain` is the receive SNR per unit of normalized power: transmit power
//! times small-scale fading times `eta / d^a` path loss, over the noise
//! power in the sub-channel band.

use serde::Serialize;

use crate::error::Error;
use crate::rng;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Resolved, linear-unit system parameters shared by every device.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SystemConfig {
    /// Number of devices `N`.
    pub num_devices: usize,
    /// Number of orthogonal sub-channels `K` (at most one device each).
    pub num_subchannels: usize,
    /// Per-sub-channel bandwidth `B`, Hz.
    pub bandwidth: f64,
    /// Device transmit power `P_t`, W (shared cap for all devices).
    pub transmit_power: f64,
    /// Noise power per sub-channel `sigma²`, W.
    pub noise_variance: f64,
    /// Path-loss exponent `a` (dimensionless).
    pub path_loss_exponent: f64,
    /// Carrier frequency `f`, Hz.
    pub carrier_frequency: f64,
    /// Reference path gain at 1 m, `(c / 4·pi·f)²` unless overridden.
    pub freq_factor: f64,
    /// CPU cycles needed per training sample.
    pub cycles_per_sample: f64,
    /// Effective switched-capacitance coefficient `kappa0`, J·s²/cycles³
    /// (energy per cycle scales with the square of the clock).
    pub power_coeff: f64,
    /// Upload size `D`, bits.
    pub model_size_bits: f64,
    /// Device CPU clock `C`, Hz (uniform across devices).
    pub cpu_freq: f64,
    /// Per-round device energy budget `E_max`, J (uniform across devices).
    pub energy_budget: f64,
    /// Stopping tolerance of the allocation solver, seconds.
    pub error_tolerance: f64,
    /// Master seed for all named substreams.
    pub rng_seed: u64,
    /// Cell radius: devices are placed uniformly in a disc of this radius, m.
    pub disc_radius: f64,
}

impl SystemConfig {
    /// Reference path gain for carrier frequency `f`: `(c / 4·pi·f)²`.
    pub fn default_freq_factor(carrier_frequency: f64) -> f64 {
        let x = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * carrier_frequency);
        x * x
    }

    /// Sanity-checks ranges and cross-field constraints.
    pub fn validate(&self) -> Result<(), Error> {
        let positive = [
            ("bandwidth", self.bandwidth),
            ("transmit_power", self.transmit_power),
            ("noise_variance", self.noise_variance),
            ("path_loss_exponent", self.path_loss_exponent),
            ("carrier_frequency", self.carrier_frequency),
            ("freq_factor", self.freq_factor),
            ("cycles_per_sample", self.cycles_per_sample),
            ("power_coeff", self.power_coeff),
            ("model_size_bits", self.model_size_bits),
            ("cpu_freq", self.cpu_freq),
            ("energy_budget", self.energy_budget),
            ("error_tolerance", self.error_tolerance),
            ("disc_radius", self.disc_radius),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.num_devices == 0 {
            return Err(Error::Config("num_devices must be >= 1".into()));
        }
        if self.num_subchannels == 0 || self.num_subchannels > self.num_devices {
            return Err(Error::Config(format!(
                "num_subchannels must be in 1..=num_devices ({} vs {})",
                self.num_subchannels, self.num_devices
            )));
        }
        Ok(())
    }
}

impl Default for SystemConfig {
    /// Benchmark defaults: a 500 m cell, 20 devices, 4 sub-channels of 1 MHz,
    /// 10 dBm transmit power over -174 dBm/Hz noise, 20 mJ per-round budget.
    fn default() -> Self {
        let carrier_frequency = 1e9;
        let bandwidth = 1e6;
        SystemConfig {
            num_devices: 20,
            num_subchannels: 4,
            bandwidth,
            transmit_power: 0.01,
            // -174 dBm/Hz thermal-noise density times the channel band.
            noise_variance: 10f64.powf(-20.4) * bandwidth,
            path_loss_exponent: 3.76,
            carrier_frequency,
            freq_factor: Self::default_freq_factor(carrier_frequency),
            cycles_per_sample: 1e7,
            power_coeff: 1e-28,
            model_size_bits: 1e6,
            cpu_freq: 1e9,
            energy_budget: 0.02,
            error_tolerance: 0.01,
            rng_seed: 1,
            disc_radius: 500.0,
        }
    }
}

/// One participating device's static profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    /// Stable identifier, `0..N`.
    pub id: usize,
    /// Local sample count `beta` (>= 1).
    pub samples: usize,
    /// CPU clock `C_n`, Hz.
    pub cpu_freq: f64,
    /// Distance to the server, m.
    pub distance: f64,
    /// Per-round energy budget `E_max`, J.
    pub energy_budget: f64,
}

/// Distance of a point drawn uniformly over a disc of radius `radius`,
/// floored at 1 m so the path loss stays finite.
pub fn sample_distance<R: rand::Rng>(rng: &mut R, radius: f64) -> f64 {
    (radius * rng.gen::<f64>().sqrt()).max(1.0)
}

/// Per-round channel state: `gains[k][n]` for sub-channel `k`, device `n`.
#[derive(Debug, Clone)]
pub struct ChannelMatrix {
    /// Round index this draw belongs to (1-based).
    pub round: usize,
    gains: Vec<f64>,
    channels: usize,
    devices: usize,
}

impl ChannelMatrix {
    /// Builds from a row-major `channels x devices` gain table.
    pub fn new(round: usize, channels: usize, devices: usize, gains: Vec<f64>) -> Self {
        assert_eq!(gains.len(), channels * devices, "gain table shape");
        ChannelMatrix { round, gains, channels, devices }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn devices(&self) -> usize {
        self.devices
    }

    /// Receive SNR per unit normalized power for (`channel`, `device`).
    pub fn gain(&self, channel: usize, device: usize) -> f64 {
        self.gains[channel * self.devices + device]
    }
}

/// Receive SNR per unit of normalized transmit power.
///
/// `P_t · fading · eta · d^(-a) / sigma²`, with `fading` the small-scale
/// power coefficient (exponential with unit mean under Rayleigh fading).
pub fn channel_gain(cfg: &SystemConfig, distance: f64, fading: f64) -> f64 {
    cfg.transmit_power * fading * cfg.freq_factor * distance.powf(-cfg.path_loss_exponent)
        / cfg.noise_variance
}

/// Draws the round's `K x N` gain table with i.i.d. unit-mean exponential
/// fading per (channel, device) pair.
pub fn draw_channels<R: rand::Rng>(
    rng: &mut R,
    cfg: &SystemConfig,
    devices: &[Device],
    round: usize,
) -> ChannelMatrix {
    let k = cfg.num_subchannels;
    let n = devices.len();
    let mut gains = Vec::with_capacity(k * n);
    for _ in 0..k {
        for dev in devices {
            gains.push(channel_gain(cfg, dev.distance, rng::exp1(rng)));
        }
    }
    ChannelMatrix::new(round, k, n, gains)
}

// ---------------------------------------------------------------------------
// Time and energy accounting
// ---------------------------------------------------------------------------

/// Local computation time for one full pass, seconds:
/// `cycles_per_sample · beta / (tau · C_n)`.
pub fn comp_time(cfg: &SystemConfig, dev: &Device, tau: f64) -> Result<f64, Error> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Degenerate("tau outside (0, 1]"));
    }
    Ok(cfg.cycles_per_sample * dev.samples as f64 / (tau * dev.cpu_freq))
}

/// Local computation energy, joules: `kappa0 · cycles_per_sample · beta · (tau · C_n)²`.
pub fn comp_energy(cfg: &SystemConfig, dev: &Device, tau: f64) -> f64 {
    let clock = tau * dev.cpu_freq;
    cfg.power_coeff * cfg.cycles_per_sample * dev.samples as f64 * clock * clock
}

/// Achievable uplink rate, bits/s: `B · log2(1 + p · gain)`.
pub fn comm_rate(cfg: &SystemConfig, gain: f64, p: f64) -> f64 {
    cfg.bandwidth * (1.0 + p * gain).log2()
}

/// Upload time, seconds: `model_size_bits / rate`.
pub fn comm_time(cfg: &SystemConfig, rate: f64) -> Result<f64, Error> {
    if rate <= 0.0 {
        return Err(Error::ZeroRate);
    }
    Ok(cfg.model_size_bits / rate)
}

/// Transmission energy, joules: `p · P_t · comm_time`.
pub fn comm_energy(cfg: &SystemConfig, p: f64, comm_time: f64) -> f64 {
    p * cfg.transmit_power * comm_time
}

/// End-to-end round time for one device on one sub-channel, seconds.
pub fn total_time(
    cfg: &SystemConfig,
    dev: &Device,
    gain: f64,
    tau: f64,
    p: f64,
) -> Result<f64, Error> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Degenerate("p outside (0, 1]"));
    }
    let t_cp = comp_time(cfg, dev, tau)?;
    let t_cm = comm_time(cfg, comm_rate(cfg, gain, p))?;
    Ok(t_cp + t_cm)
}

/// End-to-end round energy for one device on one sub-channel, joules.
pub fn total_energy(
    cfg: &SystemConfig,
    dev: &Device,
    gain: f64,
    tau: f64,
    p: f64,
) -> Result<f64, Error> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Degenerate("tau outside (0, 1]"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Degenerate("p outside (0, 1]"));
    }
    let t_cm = comm_time(cfg, comm_rate(cfg, gain, p))?;
    Ok(comp_energy(cfg, dev, tau) + comm_energy(cfg, p, t_cm))
}

/// Hard infeasibility test for a (device, sub-channel) pair.
///
/// Transmission energy `p·P_t·D / (B·log2(1+p·gain))` decreases towards
/// `ln2 · P_t · D / (B · gain)` as `p -> 0`; if even that infimum reaches the
/// energy budget, no power setting can deliver the upload:
/// `ln2 · P_t · D >= E_max · B · gain`.
pub fn is_infeasible_pair(cfg: &SystemConfig, dev: &Device, gain: f64) -> bool {
    std::f64::consts::LN_2 * cfg.transmit_power * cfg.model_size_bits
        >= dev.energy_budget * cfg.bandwidth * gain
}
