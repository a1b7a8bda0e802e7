//! The device-side answer to a scheduling decision.
//!
//! Given the round's channel draw and a scheduled set, the devices produce
//! (a) the per-pair time table under the configured allocation policy and
//! (b) a sub-channel assignment under the configured assignment policy.
//! The scheduler re-invokes this while it revises its set, so per-device
//! columns are cached for the duration of a round: a device that survives a
//! revision is not re-solved.

use std::collections::BTreeMap;

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{self, GammaMatrix};
use crate::error::Error;
use crate::matching::{self, Matching};
use crate::system::{ChannelMatrix, Device, SystemConfig};

/// Per-pair allocation policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaPolicy {
    /// Latency-minimal (tau, p) per pair (the outer-approximation solver).
    Optimal,
    /// Fixed tau = p = 0.5; pairs over budget at that point drop.
    FixedSplit,
}

/// Sub-channel assignment policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaPolicy {
    /// Sequential-swap loop to two-sided exchange stability.
    Stable,
    /// A uniformly random assignment (no swaps).
    Random,
}

/// Starting assignment handed to the stable matcher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherInit {
    /// Slot `j` starts on channel `j`.
    Identity,
    /// Seeded random bijection.
    Random,
}

/// The follower-side policy bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FollowerPolicy {
    pub ra: RaPolicy,
    pub sa: SaPolicy,
    pub matcher_init: MatcherInit,
}

impl Default for FollowerPolicy {
    fn default() -> Self {
        FollowerPolicy { ra: RaPolicy::Optimal, sa: SaPolicy::Stable, matcher_init: MatcherInit::Identity }
    }
}

/// Caches one round's per-device allocation columns (keyed by device id).
#[derive(Debug, Default)]
pub struct ColumnCache {
    columns: BTreeMap<usize, Vec<allocator::AllocationResult>>,
}

impl ColumnCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// The device's column under `ra`, solving it on first use.
    fn column(
        &mut self,
        cfg: &SystemConfig,
        dev: &Device,
        channels: &ChannelMatrix,
        ra: RaPolicy,
    ) -> Result<&Vec<allocator::AllocationResult>, Error> {
        if !self.columns.contains_key(&dev.id) {
            let col = match ra {
                RaPolicy::Optimal => allocator::allocation_column(cfg, dev, channels, cfg.error_tolerance)?,
                RaPolicy::FixedSplit => allocator::fixed_split_column(cfg, dev, channels),
            };
            self.columns.insert(dev.id, col);
        }
        Ok(&self.columns[&dev.id])
    }

    /// Number of devices solved so far this round.
    pub fn solved_devices(&self) -> usize {
        self.columns.len()
    }
}

/// The devices' resource response for one scheduled set.
#[derive(Debug, Clone)]
pub struct FollowerOutcome {
    pub gamma: GammaMatrix,
    pub matching: Matching,
    /// Swaps executed by the stable matcher (0 under random assignment).
    pub swaps: usize,
    /// Round latency: slowest assigned device, `None` when every slot dropped.
    pub latency: Option<f64>,
    /// Slots whose pair is infeasible; those devices sit the round out.
    pub dropped_slots: Vec<usize>,
}

/// Solves the follower level for `selected` under `policy`.
///
/// `rng` drives the random assignment policy and the random matcher seed; it
/// is untouched under the deterministic settings.
pub fn solve_follower(
    cfg: &SystemConfig,
    devices: &[Device],
    selected: &[usize],
    channels: &ChannelMatrix,
    policy: &FollowerPolicy,
    cache: &mut ColumnCache,
    rng: &mut ChaCha12Rng,
) -> Result<FollowerOutcome, Error> {
    let k = channels.channels();
    assert!(selected.len() <= k, "scheduled set larger than the channel count");
    let mut columns = Vec::with_capacity(selected.len());
    for &id in selected {
        columns.push(cache.column(cfg, &devices[id], channels, policy.ra)?.clone());
    }
    let gamma = GammaMatrix::from_columns(k, selected.to_vec(), columns);

    let (matching, swaps) = match policy.sa {
        SaPolicy::Stable => {
            let initial = match policy.matcher_init {
                MatcherInit::Identity => Matching::identity(selected.len()),
                MatcherInit::Random => Matching::random(rng, selected.len(), k),
            };
            let out = matching::stable_match(&gamma, initial);
            let n = out.swaps.len();
            (out.matching, n)
        }
        SaPolicy::Random => (Matching::random(rng, selected.len(), k), 0),
    };

    let (latency, dropped_slots) = match matching::matching_latency(&gamma, &matching) {
        Ok(s) => (Some(s.latency), s.dropped_slots),
        Err(Error::EmptyRound) => (None, (0..matching.slots()).collect()),
        Err(e) => return Err(e),
    };
    Ok(FollowerOutcome { gamma, matching, swaps, latency, dropped_slots })
}
