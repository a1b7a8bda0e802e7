//! The round loop: channels, scheduling, device response, training, record.
//!
//! One master seed drives named substreams (placement, partition, per-round
//! channels, per-round scheme randomness, per-round matcher seeds), so two
//! schemes run against the *same* channel and data draws — paired
//! comparisons come free, and adding a scheme never perturbs another's
//! randomness. Everything a round decided is written to a [`RoundRecord`];
//! the run-level aggregates land in a [`RunSummary`].

use serde::Serialize;

use crate::config::{LearningRate, Scheme, SimConfig};
use crate::error::Error;
use crate::follower::{solve_follower, ColumnCache, FollowerOutcome};
use crate::learning::{self, LearnerConstants, TaskSpec};
use crate::rng;
use crate::selection::{self, AoUState, ClusterRotation};
use crate::system::{self, Device};

/// What one participating device did this round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceRound {
    pub channel: usize,
    pub tau: f64,
    pub p: f64,
    /// Computation + upload time, s.
    pub time: f64,
    /// Computation + upload energy, J.
    pub energy: f64,
}

/// Everything one round decided and measured.
#[derive(Debug, Clone, Serialize)]
pub struct RoundRecord {
    /// Round index, 1-based.
    pub t: usize,
    pub scheme: String,
    /// Scheduled device ids in slot order (after any replacement).
    pub selected: Vec<usize>,
    /// (device, sub-channel) for each participant, slot order.
    pub assignment: Vec<(usize, usize)>,
    /// Scheduled devices whose every pair was over budget this round.
    pub dropped: Vec<usize>,
    /// Per device id: its allocation if it participated.
    pub per_device: Vec<Option<DeviceRound>>,
    /// Slowest participant's total time, s (0.0 when nobody trained).
    pub latency: f64,
    pub participants: usize,
    /// Global loss of the model this round produced.
    pub global_loss: f64,
    /// Convergence-bound value dominating this round's optimality gap.
    pub bound: Option<f64>,
    /// Running sum of latency through this round, s.
    pub cum_time: f64,
    /// Age-of-update counters as the scheduler saw them.
    pub aou: Vec<u32>,
    /// Devices swapped in to cover over-budget slots.
    pub replaced: usize,
    /// Swaps the stable matcher executed.
    pub swaps: usize,
}

/// Run-level aggregates plus the resolved configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scheme: String,
    pub seed: u64,
    pub rounds: usize,
    /// Global loss of the zero initial model.
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Sum of per-round latencies, s.
    pub cumulative_time: f64,
    pub loss_series: Vec<f64>,
    pub latency_series: Vec<f64>,
    pub participant_series: Vec<usize>,
    /// Per-round bound values when tracking is on.
    pub bound_series: Option<Vec<f64>>,
    /// Curvature constants (rho certified along this run's trajectory).
    pub constants: Option<LearnerConstants>,
    /// The resolved configuration, echoed as TOML.
    pub config_echo: String,
}

/// A complete run: per-round records plus the summary.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub summary: RunSummary,
    pub records: Vec<RoundRecord>,
}

/// Runs the configured simulation end to end.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimRun, Error> {
    cfg.validate()?;
    let sys = &cfg.system;
    let master = sys.rng_seed;
    let n = sys.num_devices;
    let k = sys.num_subchannels;

    let data = {
        let mut part_rng = rng::stream(master, "partition");
        learning::partition_data(
            &mut part_rng,
            n,
            cfg.task.total_samples,
            cfg.task.dim,
            cfg.task.noise_std,
            cfg.task.kind,
        )
    };
    let betas = data.betas();
    let total_beta = data.total as f64;

    let devices: Vec<Device> = {
        let mut place_rng = rng::stream(master, "placement");
        (0..n)
            .map(|id| Device {
                id,
                samples: betas[id],
                cpu_freq: sys.cpu_freq,
                distance: system::sample_distance(&mut place_rng, sys.disc_radius),
                energy_budget: sys.energy_budget,
            })
            .collect()
    };

    // Constants come first because the auto step size is 1/L.
    let provisional = TaskSpec::new(cfg.task.kind, data, cfg.task.lambda_reg, 1.0)?;
    let mut constants = learning::learner_constants(&provisional)?;
    let lr = match cfg.task.learning_rate {
        LearningRate::Auto => 1.0 / constants.lipschitz,
        LearningRate::Fixed(v) => v,
    };
    let task = TaskSpec { learning_rate: lr, ..provisional };

    let cluster = match cfg.scheme.scheme {
        Scheme::Cluster => {
            let mut plan_rng = rng::stream(master, "cluster-plan");
            Some(ClusterRotation::new(&mut plan_rng, n, k))
        }
        _ => None,
    };

    let mut aou = AoUState::new(n);
    let mut w = vec![0.0; cfg.task.dim];
    let initial_loss = learning::global_loss(&task, &w);
    let track_bound = cfg.task.track_bound;

    let mut records: Vec<RoundRecord> = Vec::with_capacity(cfg.rounds);
    let mut grad_norm_sq = Vec::new();
    let mut unselected_beta = Vec::new();
    let mut rho = 0.0_f64;
    let mut cum_time = 0.0;

    for t in 1..=cfg.rounds {
        let channels = {
            let mut ch_rng = rng::stream_at(master, "channel", t as u64);
            system::draw_channels(&mut ch_rng, sys, &devices, t)
        };
        let mut cache = ColumnCache::new();
        let mut matcher_rng = rng::stream_at(master, "matcher-init", t as u64);
        let mut scheme_rng = rng::stream_at(master, "scheme", t as u64);

        let aou_snapshot = aou.ages().to_vec();
        let policy = &cfg.scheme.policy;
        let (selected, outcome, replaced): (Vec<usize>, FollowerOutcome, usize) =
            match cfg.scheme.scheme {
                Scheme::Aou => {
                    let s = selection::select_aou(
                        sys,
                        &devices,
                        &aou,
                        &channels,
                        policy,
                        &mut cache,
                        &mut matcher_rng,
                    )?;
                    (s.selected, s.outcome, s.replaced)
                }
                Scheme::Random => {
                    let ids = selection::select_random(&mut scheme_rng, n, k);
                    let o = solve_follower(
                        sys,
                        &devices,
                        &ids,
                        &channels,
                        policy,
                        &mut cache,
                        &mut matcher_rng,
                    )?;
                    (ids, o, 0)
                }
                Scheme::Cluster => {
                    let ids = cluster.as_ref().expect("cluster plan built above").select(t, k);
                    let o = solve_follower(
                        sys,
                        &devices,
                        &ids,
                        &channels,
                        policy,
                        &mut cache,
                        &mut matcher_rng,
                    )?;
                    (ids, o, 0)
                }
                Scheme::Fixed => {
                    let ids =
                        cfg.scheme.fixed_set.clone().expect("validated fixed scheme has a set");
                    let o = solve_follower(
                        sys,
                        &devices,
                        &ids,
                        &channels,
                        policy,
                        &mut cache,
                        &mut matcher_rng,
                    )?;
                    (ids, o, 0)
                }
            };

        let slots = outcome.matching.slots();
        let mut participated = vec![false; n];
        let mut assignment = Vec::new();
        let mut dropped = Vec::new();
        let mut per_device: Vec<Option<DeviceRound>> = vec![None; n];
        for slot in 0..slots {
            let dev = outcome.gamma.device_id(slot);
            if outcome.dropped_slots.contains(&slot) {
                dropped.push(dev);
                continue;
            }
            let channel = outcome.matching.channel_of(slot);
            let alloc = outcome
                .gamma
                .entry(channel, slot)
                .allocation()
                .expect("assigned slot holds a feasible pair");
            debug_assert!(alloc.energy <= devices[dev].energy_budget + 1e-9);
            participated[dev] = true;
            assignment.push((dev, channel));
            per_device[dev] = Some(DeviceRound {
                channel,
                tau: alloc.point.tau,
                p: alloc.point.p,
                time: alloc.time,
                energy: alloc.energy,
            });
        }
        let latency = outcome.latency.unwrap_or(0.0);

        if track_bound {
            // Probe the pre-update model: the bound's terms are indexed by
            // the model each round trained from.
            let g = learning::global_gradient(&task, &w);
            grad_norm_sq.push(g.iter().map(|x| x * x).sum());
            let ub: f64 = betas
                .iter()
                .enumerate()
                .filter(|&(id, _)| !participated[id])
                .map(|(_, &b)| b as f64)
                .sum();
            unselected_beta.push(ub);
            rho = rho.max(learning::grad_ratio(&task, &w));
        }

        let locals: Vec<Vec<f64>> = devices
            .iter()
            .map(|d| {
                if participated[d.id] {
                    learning::local_update(
                        task.kind,
                        task.lambda_reg,
                        &task.data.devices[d.id],
                        &w,
                        lr,
                    )
                } else {
                    w.clone()
                }
            })
            .collect();
        if let Some(next) = learning::aggregate(&locals, &betas, &participated) {
            w = next;
        } // else: nobody trained; the global model carries over unchanged.

        aou.update(&participated);
        cum_time += latency;
        let global_loss = learning::global_loss(&task, &w);
        records.push(RoundRecord {
            t,
            scheme: cfg.scheme.scheme.token().to_string(),
            selected,
            assignment,
            dropped,
            per_device,
            latency,
            participants: participated.iter().filter(|&&p| p).count(),
            global_loss,
            bound: None,
            cum_time,
            aou: aou_snapshot,
            replaced,
            swaps: outcome.swaps,
        });
    }

    let bound_series = if track_bound {
        let initial_gap = initial_loss - constants.f_star;
        let bounds = learning::convergence_bound(
            initial_gap,
            &grad_norm_sq,
            &unselected_beta,
            total_beta,
            constants.lipschitz,
            constants.strong_convexity,
            rho,
        );
        for (record, &b) in records.iter_mut().zip(&bounds[1..]) {
            record.bound = Some(b);
        }
        constants.rho = Some(rho);
        Some(bounds[1..].to_vec())
    } else {
        None
    };

    let final_loss = records.last().map_or(initial_loss, |r| r.global_loss);
    let summary = RunSummary {
        scheme: cfg.scheme.scheme.token().to_string(),
        seed: master,
        rounds: cfg.rounds,
        initial_loss,
        final_loss,
        cumulative_time: cum_time,
        loss_series: records.iter().map(|r| r.global_loss).collect(),
        latency_series: records.iter().map(|r| r.latency).collect(),
        participant_series: records.iter().map(|r| r.participants).collect(),
        bound_series,
        constants: Some(constants),
        config_echo: cfg.echo_toml(),
    };
    Ok(SimRun { summary, records })
}
