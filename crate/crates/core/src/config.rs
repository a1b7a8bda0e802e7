//! Configuration parsing and echoing.
//!
//! The config file is TOML with four sections — `[system]`, `[task]`,
//! `[scheme]`, `[output]` — plus a top-level `rounds`. Every key is
//! optional (an empty file runs the benchmark defaults); unknown keys are
//! errors. Power-like fields accept either a bare number in linear watts
//! or a string with a unit (`"10 dBm"`, `"5 mW"`, `"0.01 W"`; noise also
//! takes `"dBm/Hz"` / `"W/Hz"` densities, scaled by the sub-channel
//! bandwidth). The resolved configuration can be echoed back as TOML in
//! linear units, and that echo re-parses to the identical configuration.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::follower::{FollowerPolicy, MatcherInit, RaPolicy, SaPolicy};
use crate::learning::TaskKind;
use crate::system::SystemConfig;

/// Scheduling scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Staleness-weighted scheduling with over-budget replacement.
    Aou,
    /// Uniformly random K-subset each round.
    Random,
    /// Round-robin rotation over device clusters.
    Cluster,
    /// The same fixed set every round.
    Fixed,
}

impl Scheme {
    pub fn token(self) -> &'static str {
        match self {
            Scheme::Aou => "aou",
            Scheme::Random => "random",
            Scheme::Cluster => "cluster",
            Scheme::Fixed => "fixed",
        }
    }

    pub fn parse(token: &str) -> Result<Self, Error> {
        match token {
            "aou" => Ok(Scheme::Aou),
            "random" => Ok(Scheme::Random),
            "cluster" => Ok(Scheme::Cluster),
            "fixed" => Ok(Scheme::Fixed),
            other => Err(Error::Config(format!(
                "scheme must be one of aou|random|cluster|fixed, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Config tokens for the allocation policy.
pub fn ra_token(ra: RaPolicy) -> &'static str {
    match ra {
        RaPolicy::Optimal => "mo",
        RaPolicy::FixedSplit => "fix",
    }
}

pub fn parse_ra(token: &str) -> Result<RaPolicy, Error> {
    match token {
        "mo" => Ok(RaPolicy::Optimal),
        "fix" => Ok(RaPolicy::FixedSplit),
        other => Err(Error::Config(format!("ra must be mo|fix, got {other:?}"))),
    }
}

/// Config tokens for the assignment policy.
pub fn sa_token(sa: SaPolicy) -> &'static str {
    match sa {
        SaPolicy::Stable => "match",
        SaPolicy::Random => "random",
    }
}

pub fn parse_sa(token: &str) -> Result<SaPolicy, Error> {
    match token {
        "match" => Ok(SaPolicy::Stable),
        "random" => Ok(SaPolicy::Random),
        other => Err(Error::Config(format!("sa must be match|random, got {other:?}"))),
    }
}

/// Config tokens for the matcher's starting assignment.
pub fn matcher_init_token(init: MatcherInit) -> &'static str {
    match init {
        MatcherInit::Identity => "identity",
        MatcherInit::Random => "random",
    }
}

pub fn parse_matcher_init(token: &str) -> Result<MatcherInit, Error> {
    match token {
        "identity" => Ok(MatcherInit::Identity),
        "random" => Ok(MatcherInit::Random),
        other => Err(Error::Config(format!("matcher_init must be identity|random, got {other:?}"))),
    }
}

/// Config tokens for the task kind.
pub fn task_kind_token(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Ridge => "ridge",
        TaskKind::Logistic => "logistic",
    }
}

pub fn parse_task_kind(token: &str) -> Result<TaskKind, Error> {
    match token {
        "ridge" => Ok(TaskKind::Ridge),
        "logistic" => Ok(TaskKind::Logistic),
        other => Err(Error::Config(format!("task kind must be ridge|logistic, got {other:?}"))),
    }
}

/// Step size: derived from the curvature (1/L) or pinned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Auto,
    Fixed(f64),
}

/// Resolved learning-task settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub total_samples: usize,
    pub dim: usize,
    pub lambda_reg: f64,
    pub learning_rate: LearningRate,
    /// Label noise level for the synthetic data.
    pub noise_std: f64,
    /// Emit the per-round convergence bound. Defaults to on exactly when
    /// its premises hold (ridge task, auto step size); forcing it on
    /// otherwise is a config error.
    pub track_bound: bool,
}

/// Resolved scheduling settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub policy: FollowerPolicy,
    /// Device set for the fixed scheme (ascending ids). `None` elsewhere.
    pub fixed_set: Option<Vec<usize>>,
}

/// The full resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub rounds: usize,
    pub system: SystemConfig,
    pub task: TaskConfig,
    pub scheme: SchemeConfig,
    pub out_dir: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            rounds: 200,
            system: SystemConfig::default(),
            task: TaskConfig {
                kind: TaskKind::Ridge,
                total_samples: 500,
                dim: 5,
                lambda_reg: 0.1,
                learning_rate: LearningRate::Auto,
                noise_std: 0.1,
                track_bound: true,
            },
            scheme: SchemeConfig {
                scheme: Scheme::Aou,
                policy: FollowerPolicy::default(),
                fixed_set: None,
            },
            out_dir: "out".to_string(),
        }
    }
}

// ---- raw (on-disk) shape ----

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    rounds: Option<usize>,
    system: Option<RawSystem>,
    task: Option<RawTask>,
    scheme: Option<RawScheme>,
    output: Option<RawOutput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    num_devices: Option<usize>,
    num_subchannels: Option<usize>,
    bandwidth: Option<f64>,
    transmit_power: Option<toml::Value>,
    noise: Option<toml::Value>,
    path_loss_exponent: Option<f64>,
    carrier_frequency: Option<f64>,
    freq_factor: Option<f64>,
    cycles_per_sample: Option<f64>,
    power_coeff: Option<f64>,
    model_size_bits: Option<f64>,
    cpu_freq: Option<f64>,
    energy_budget: Option<f64>,
    error_tolerance: Option<f64>,
    rng_seed: Option<u64>,
    disc_radius: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    kind: Option<String>,
    total_samples: Option<usize>,
    dim: Option<usize>,
    lambda_reg: Option<f64>,
    learning_rate: Option<toml::Value>,
    noise_std: Option<f64>,
    track_bound: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    scheme: Option<String>,
    ra: Option<String>,
    sa: Option<String>,
    matcher_init: Option<String>,
    fixed_set: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
}

fn value_number(v: &toml::Value, field: &str) -> Result<f64, Error> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(x) => Ok(*x as f64),
        _ => Err(Error::Config(format!("{field}: expected a number, got {v}"))),
    }
}

fn split_unit<'a>(s: &'a str, units: &[&'static str]) -> Option<(f64, &'static str)> {
    let lower = s.trim().to_ascii_lowercase();
    for &unit in units {
        if let Some(prefix) = lower.strip_suffix(unit) {
            if let Ok(x) = prefix.trim().parse::<f64>() {
                return Some((x, unit));
            }
        }
    }
    None
}

/// Transmit power: bare numbers are watts; strings take W, mW, or dBm.
fn power_watts(v: &toml::Value, field: &str) -> Result<f64, Error> {
    match v {
        toml::Value::String(s) => match split_unit(s, &["dbm", "mw", "w"]) {
            Some((x, "dbm")) => Ok(10f64.powf((x - 30.0) / 10.0)),
            Some((x, "mw")) => Ok(x * 1e-3),
            Some((x, "w")) => Ok(x),
            _ => Err(Error::Config(format!(
                "{field}: cannot parse {s:?} (expected e.g. \"10 dBm\", \"5 mW\", \"0.01 W\")"
            ))),
        },
        other => value_number(other, field),
    }
}

/// Noise: bare numbers are total watts in the sub-channel band; strings
/// take W or dBm totals, or W/Hz / dBm/Hz densities scaled by `bandwidth`.
fn noise_watts(v: &toml::Value, bandwidth: f64, field: &str) -> Result<f64, Error> {
    match v {
        toml::Value::String(s) => match split_unit(s, &["dbm/hz", "w/hz", "dbm", "w"]) {
            Some((x, "dbm/hz")) => Ok(10f64.powf((x - 30.0) / 10.0) * bandwidth),
            Some((x, "w/hz")) => Ok(x * bandwidth),
            Some((x, "dbm")) => Ok(10f64.powf((x - 30.0) / 10.0)),
            Some((x, "w")) => Ok(x),
            _ => Err(Error::Config(format!(
                "{field}: cannot parse {s:?} (expected e.g. \"-174 dBm/Hz\" or watts)"
            ))),
        },
        other => value_number(other, field),
    }
}

impl SimConfig {
    /// Parses and validates a TOML string (empty input means all defaults).
    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        let mut cfg = SimConfig::default();

        if let Some(rounds) = raw.rounds {
            cfg.rounds = rounds;
        }
        if let Some(sys) = raw.system {
            let s = &mut cfg.system;
            if let Some(v) = sys.num_devices {
                s.num_devices = v;
            }
            if let Some(v) = sys.num_subchannels {
                s.num_subchannels = v;
            }
            if let Some(v) = sys.bandwidth {
                s.bandwidth = v;
                // The default noise is a density times the band: keep it
                // consistent unless noise is given explicitly.
                if sys.noise.is_none() {
                    s.noise_variance = 10f64.powf(-20.4) * v;
                }
            }
            if let Some(v) = &sys.transmit_power {
                s.transmit_power = power_watts(v, "system.transmit_power")?;
            }
            if let Some(v) = &sys.noise {
                s.noise_variance = noise_watts(v, s.bandwidth, "system.noise")?;
            }
            if let Some(v) = sys.path_loss_exponent {
                s.path_loss_exponent = v;
            }
            if let Some(v) = sys.carrier_frequency {
                s.carrier_frequency = v;
                if sys.freq_factor.is_none() {
                    s.freq_factor = SystemConfig::default_freq_factor(v);
                }
            }
            if let Some(v) = sys.freq_factor {
                s.freq_factor = v;
            }
            if let Some(v) = sys.cycles_per_sample {
                s.cycles_per_sample = v;
            }
            if let Some(v) = sys.power_coeff {
                s.power_coeff = v;
            }
            if let Some(v) = sys.model_size_bits {
                s.model_size_bits = v;
            }
            if let Some(v) = sys.cpu_freq {
                s.cpu_freq = v;
            }
            if let Some(v) = sys.energy_budget {
                s.energy_budget = v;
            }
            if let Some(v) = sys.error_tolerance {
                s.error_tolerance = v;
            }
            if let Some(v) = sys.rng_seed {
                s.rng_seed = v;
            }
            if let Some(v) = sys.disc_radius {
                s.disc_radius = v;
            }
        }
        if let Some(task) = raw.task {
            let t = &mut cfg.task;
            if let Some(kind) = &task.kind {
                t.kind = parse_task_kind(kind)?;
            }
            if let Some(v) = task.total_samples {
                t.total_samples = v;
            }
            if let Some(v) = task.dim {
                t.dim = v;
            }
            if let Some(v) = task.lambda_reg {
                t.lambda_reg = v;
            }
            if let Some(v) = &task.learning_rate {
                t.learning_rate = match v {
                    toml::Value::String(s) if s == "auto" => LearningRate::Auto,
                    other => LearningRate::Fixed(value_number(other, "task.learning_rate")?),
                };
            }
            if let Some(v) = task.noise_std {
                t.noise_std = v;
            }
            // Default tracking: on exactly when the bound premises hold.
            t.track_bound = match task.track_bound {
                Some(v) => v,
                None => t.kind == TaskKind::Ridge && t.learning_rate == LearningRate::Auto,
            };
        } else {
            cfg.task.track_bound =
                cfg.task.kind == TaskKind::Ridge && cfg.task.learning_rate == LearningRate::Auto;
        }
        if let Some(scheme) = raw.scheme {
            let sc = &mut cfg.scheme;
            if let Some(v) = &scheme.scheme {
                sc.scheme = Scheme::parse(v)?;
            }
            if let Some(v) = &scheme.ra {
                sc.policy.ra = parse_ra(v)?;
            }
            if let Some(v) = &scheme.sa {
                sc.policy.sa = parse_sa(v)?;
            }
            if let Some(v) = &scheme.matcher_init {
                sc.policy.matcher_init = parse_matcher_init(v)?;
            }
            if let Some(v) = scheme.fixed_set {
                sc.fixed_set = Some(v);
            }
        }
        if let Some(output) = raw.output {
            if let Some(dir) = output.dir {
                cfg.out_dir = dir;
            }
        }
        cfg.normalize();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, parses, and validates a config file.
    pub fn from_path(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Fills derived defaults that depend on other fields.
    pub fn normalize(&mut self) {
        if self.scheme.scheme == Scheme::Fixed && self.scheme.fixed_set.is_none() {
            // Default fixed set: the K lowest ids.
            self.scheme.fixed_set = Some((0..self.system.num_subchannels).collect());
        }
        if let Some(set) = &mut self.scheme.fixed_set {
            set.sort_unstable();
        }
    }

    /// Field-level validation of the resolved configuration.
    pub fn validate(&self) -> Result<(), Error> {
        self.system.validate()?;
        let t = &self.task;
        if t.dim == 0 {
            return Err(Error::Config("task.dim must be >= 1".into()));
        }
        if t.total_samples < self.system.num_devices {
            return Err(Error::Config(format!(
                "task.total_samples ({}) must cover every device ({})",
                t.total_samples, self.system.num_devices
            )));
        }
        if t.lambda_reg < 1e-3 {
            return Err(Error::Config(format!(
                "task.lambda_reg must be at least 1e-3, got {}",
                t.lambda_reg
            )));
        }
        if !(t.noise_std.is_finite() && t.noise_std >= 0.0) {
            return Err(Error::Config(format!("task.noise_std must be >= 0, got {}", t.noise_std)));
        }
        if let LearningRate::Fixed(v) = t.learning_rate {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("task.learning_rate must be > 0, got {v}")));
            }
        }
        if t.track_bound && (t.kind != TaskKind::Ridge || t.learning_rate != LearningRate::Auto) {
            return Err(Error::Config(
                "task.track_bound requires kind = \"ridge\" and learning_rate = \"auto\" \
                 (the bound is stated for the 1/L step on the exact-constant task)"
                    .into(),
            ));
        }
        match (&self.scheme.scheme, &self.scheme.fixed_set) {
            (Scheme::Fixed, Some(set)) => {
                if set.is_empty() {
                    return Err(Error::Config("scheme.fixed_set must not be empty".into()));
                }
                if set.len() > self.system.num_subchannels {
                    return Err(Error::Config(format!(
                        "scheme.fixed_set has {} devices but only {} sub-channels exist",
                        set.len(),
                        self.system.num_subchannels
                    )));
                }
                if set.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::Config("scheme.fixed_set has duplicate ids".into()));
                }
                if set.iter().any(|&id| id >= self.system.num_devices) {
                    return Err(Error::Config(format!(
                        "scheme.fixed_set contains an id >= num_devices ({})",
                        self.system.num_devices
                    )));
                }
            }
            (Scheme::Fixed, None) => unreachable!("normalize fills the default fixed set"),
            (_, Some(_)) => {
                return Err(Error::Config(
                    "scheme.fixed_set is only meaningful with scheme = \"fixed\"".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    /// The resolved configuration as TOML, linear units throughout.
    ///
    /// Re-parsing the echo yields this exact configuration. The output
    /// directory is deliberately omitted: it locates a run, it does not
    /// define one, and its absence keeps outputs byte-identical no matter
    /// where they are written.
    pub fn echo_toml(&self) -> String {
        #[derive(Serialize)]
        struct EchoSystem {
            num_devices: usize,
            num_subchannels: usize,
            bandwidth: f64,
            transmit_power: f64,
            noise: f64,
            path_loss_exponent: f64,
            carrier_frequency: f64,
            freq_factor: f64,
            cycles_per_sample: f64,
            power_coeff: f64,
            model_size_bits: f64,
            cpu_freq: f64,
            energy_budget: f64,
            error_tolerance: f64,
            rng_seed: u64,
            disc_radius: f64,
        }
        #[derive(Serialize)]
        struct EchoTask<'a> {
            kind: &'a str,
            total_samples: usize,
            dim: usize,
            lambda_reg: f64,
            learning_rate: toml::Value,
            noise_std: f64,
            track_bound: bool,
        }
        #[derive(Serialize)]
        struct EchoScheme<'a> {
            scheme: &'a str,
            ra: &'a str,
            sa: &'a str,
            matcher_init: &'a str,
            #[serde(skip_serializing_if = "Option::is_none")]
            fixed_set: Option<&'a [usize]>,
        }
        #[derive(Serialize)]
        struct Echo<'a> {
            rounds: usize,
            system: EchoSystem,
            task: EchoTask<'a>,
            scheme: EchoScheme<'a>,
        }
        let s = &self.system;
        let echo = Echo {
            rounds: self.rounds,
            system: EchoSystem {
                num_devices: s.num_devices,
                num_subchannels: s.num_subchannels,
                bandwidth: s.bandwidth,
                transmit_power: s.transmit_power,
                noise: s.noise_variance,
                path_loss_exponent: s.path_loss_exponent,
                carrier_frequency: s.carrier_frequency,
                freq_factor: s.freq_factor,
                cycles_per_sample: s.cycles_per_sample,
                power_coeff: s.power_coeff,
                model_size_bits: s.model_size_bits,
                cpu_freq: s.cpu_freq,
                energy_budget: s.energy_budget,
                error_tolerance: s.error_tolerance,
                rng_seed: s.rng_seed,
                disc_radius: s.disc_radius,
            },
            task: EchoTask {
                kind: task_kind_token(self.task.kind),
                total_samples: self.task.total_samples,
                dim: self.task.dim,
                lambda_reg: self.task.lambda_reg,
                learning_rate: match self.task.learning_rate {
                    LearningRate::Auto => toml::Value::String("auto".into()),
                    LearningRate::Fixed(v) => toml::Value::Float(v),
                },
                noise_std: self.task.noise_std,
                track_bound: self.task.track_bound,
            },
            scheme: EchoScheme {
                scheme: self.scheme.scheme.token(),
                ra: ra_token(self.scheme.policy.ra),
                sa: sa_token(self.scheme.policy.sa),
                matcher_init: matcher_init_token(self.scheme.policy.matcher_init),
                fixed_set: self.scheme.fixed_set.as_deref(),
            },
        };
        toml::to_string_pretty(&echo).expect("echo serialization cannot fail")
    }
}
