//! Server-side scheduling: which devices train this round.
//!
//! The reference scheme weights each device by its age-of-update (rounds
//! since it last participated, normalised over the fleet) times its sample
//! count, schedules the top-K, and then consults the device-side response:
//! any device whose pairs are all over budget is swapped for the next name
//! on the priority list until the round closes or the list runs out.
//! Random, rotating-cluster, and fixed-set baselines share the plumbing.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::Error;
use crate::follower::{solve_follower, ColumnCache, FollowerOutcome, FollowerPolicy};
use crate::system::{ChannelMatrix, Device, SystemConfig};

/// Age-of-update counters, one per device.
///
/// Ages start at 1 (everyone is one round stale at the first selection) and
/// reset to 1 on participation, so a weight is never zero and a device never
/// ages out of consideration entirely.
#[derive(Debug, Clone)]
pub struct AoUState {
    ages: Vec<u32>,
}

impl AoUState {
    pub fn new(num_devices: usize) -> Self {
        AoUState { ages: vec![1; num_devices] }
    }

    /// Advances the counters after a round: participants reset, others age.
    pub fn update(&mut self, participated: &[bool]) {
        assert_eq!(participated.len(), self.ages.len(), "participation flags per device");
        for (age, &took_part) in self.ages.iter_mut().zip(participated) {
            *age = if took_part { 1 } else { *age + 1 };
        }
    }

    pub fn ages(&self) -> &[u32] {
        &self.ages
    }

    /// Normalised ages: each device's share of the total staleness.
    pub fn weights(&self) -> Vec<f64> {
        let total: u32 = self.ages.iter().sum();
        self.ages.iter().map(|&a| f64::from(a) / f64::from(total)).collect()
    }
}

/// Device ids ordered by weight x sample count, highest first (id breaks ties).
pub fn priority_list(weights: &[f64], samples: &[f64]) -> Vec<usize> {
    assert_eq!(weights.len(), samples.len());
    let mut ids: Vec<usize> = (0..weights.len()).collect();
    ids.sort_by(|&a, &b| {
        let sa = weights[a] * samples[a];
        let sb = weights[b] * samples[b];
        sb.partial_cmp(&sa).expect("finite priority scores").then(a.cmp(&b))
    });
    ids
}

/// One round's scheduling result.
#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    /// Scheduled device ids, in slot order.
    pub selected: Vec<usize>,
    /// The device-side response for the final set.
    pub outcome: FollowerOutcome,
    /// Devices swapped in to cover an over-budget slot.
    pub replaced: usize,
}

/// Staleness-weighted scheduling with over-budget replacement.
///
/// Takes the top-K names off the priority list, asks the devices to respond,
/// and covers each dropped slot with the next name on the list, re-solving
/// after every revision. Stops when the round has no drops or the list is
/// exhausted (remaining drops then sit the round out).
pub fn select_aou(
    cfg: &SystemConfig,
    devices: &[Device],
    state: &AoUState,
    channels: &ChannelMatrix,
    policy: &FollowerPolicy,
    cache: &mut ColumnCache,
    rng: &mut ChaCha12Rng,
) -> Result<SelectionOutcome, Error> {
    let k = channels.channels().min(devices.len());
    let weights = state.weights();
    let samples: Vec<f64> = devices.iter().map(|d| d.samples as f64).collect();
    let list = priority_list(&weights, &samples);
    let mut selected: Vec<usize> = list[..k].to_vec();
    let mut next = k;
    let mut replaced = 0;
    loop {
        let outcome = solve_follower(cfg, devices, &selected, channels, policy, cache, rng)?;
        if outcome.dropped_slots.is_empty() {
            return Ok(SelectionOutcome { selected, outcome, replaced });
        }
        let mut revised = false;
        for &slot in &outcome.dropped_slots {
            if next >= list.len() {
                break;
            }
            selected[slot] = list[next];
            next += 1;
            replaced += 1;
            revised = true;
        }
        if !revised {
            return Ok(SelectionOutcome { selected, outcome, replaced });
        }
    }
}

/// A uniformly random K-subset of device ids, ascending.
pub fn select_random(rng: &mut ChaCha12Rng, num_devices: usize, k: usize) -> Vec<usize> {
    let k = k.min(num_devices);
    let mut ids: Vec<usize> = (0..num_devices).collect();
    for i in 0..k {
        let j = rng.gen_range(i..num_devices);
        ids.swap(i, j);
    }
    ids.truncate(k);
    ids.sort_unstable();
    ids
}

/// Round-robin clusters visited in rotation, one cluster per round.
#[derive(Debug, Clone)]
pub struct ClusterRotation {
    clusters: Vec<Vec<usize>>,
}

impl ClusterRotation {
    /// Deals a shuffled fleet into `max(num_devices / k, 1)` clusters.
    pub fn new(rng: &mut ChaCha12Rng, num_devices: usize, k: usize) -> Self {
        let count = (num_devices / k.max(1)).max(1);
        let mut ids: Vec<usize> = (0..num_devices).collect();
        // Fisher-Yates so cluster membership is seed-stable.
        for i in (1..num_devices).rev() {
            let j = rng.gen_range(0..=i);
            ids.swap(i, j);
        }
        let mut clusters = vec![Vec::new(); count];
        for (pos, id) in ids.into_iter().enumerate() {
            clusters[pos % count].push(id);
        }
        ClusterRotation { clusters }
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    /// The round's cluster (1-based round index), truncated to `k`, ascending.
    pub fn select(&self, round: usize, k: usize) -> Vec<usize> {
        assert!(round >= 1, "rounds are 1-based");
        let mut ids = self.clusters[(round - 1) % self.clusters.len()].clone();
        ids.truncate(k);
        ids.sort_unstable();
        ids
    }
}
