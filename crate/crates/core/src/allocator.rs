//! Latency-minimal compute/transmit split for one (device, sub-channel) pair.
//!
//! For a pair with receive gain `g`, the device picks `z = (tau, p)` in
//! `(0, 1]²` to minimize its end-to-end round time subject to the per-round
//! energy budget. Both the (negated) objective and the budget slack are
//! strictly increasing along rays through the origin, which makes the
//! feasible set *normal* (downward closed): the optimum lies on the budget
//! boundary, and an outer approximation by shrinking boxes converges to it.
//!
//! The solver keeps a set of box corners ("vertices") covering the feasible
//! region. Each iteration projects the most promising vertex onto the budget
//! boundary along its ray, splits the vertex at the projection, and keeps the
//! best boundary point seen (the incumbent). Termination requires both the
//! successive-change test on the selected vertex's projected objective *and*
//! a certified optimality gap: the best corner objective (a true upper bound
//! on anything still uncovered) must be within `eps` of the incumbent. While
//! the change test plateaus with the gap still open, the split switches to
//! the largest-bound vertex to close it.

use serde::Serialize;

use crate::error::Error;
use crate::system::{self, Device, ChannelMatrix, SystemConfig};

/// Lower bound on each coordinate of the search domain. No zero-power
/// transmission and no zero compute allocation.
pub const DOMAIN_FLOOR: f64 = 1e-6;
/// Bisection interval tolerance on the ray parameter `zeta`.
pub const ZETA_TOL: f64 = 1e-10;
/// Defensive cap on bisection steps (the tolerance needs ~34).
pub const MAX_BISECT_ITERS: usize = 200;
/// Budget-slack tolerance at returned boundary points, joules.
pub const CONSTRAINT_TOL: f64 = 1e-9;
/// Defensive cap on outer-approximation iterations.
pub const MAX_ITERS: usize = 10_000;

/// A compute/transmit operating point: clock fraction `tau`, power fraction `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AllocationPoint {
    pub tau: f64,
    pub p: f64,
}

impl AllocationPoint {
    /// Validates membership in `(0, 1]²`.
    pub fn new(tau: f64, p: f64) -> Result<Self, Error> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Degenerate("tau outside (0, 1]"));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Degenerate("p outside (0, 1]"));
        }
        Ok(AllocationPoint { tau, p })
    }
}

/// A feasible solution of the per-pair problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub point: AllocationPoint,
    /// End-to-end round time at `point`, seconds.
    pub time: f64,
    /// Energy spent at `point`, joules (within budget + tolerance).
    pub energy: f64,
}

/// Outcome of solving one (device, sub-channel) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AllocationResult {
    Feasible(Allocation),
    /// No operating point fits the energy budget on this pair.
    Infeasible,
}

impl AllocationResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self, AllocationResult::Feasible(_))
    }

    /// Round time if feasible.
    pub fn time(&self) -> Option<f64> {
        match self {
            AllocationResult::Feasible(a) => Some(a.time),
            AllocationResult::Infeasible => None,
        }
    }

    pub fn allocation(&self) -> Option<&Allocation> {
        match self {
            AllocationResult::Feasible(a) => Some(a),
            AllocationResult::Infeasible => None,
        }
    }
}

/// Negated end-to-end time — the quantity the outer approximation maximizes.
/// Strictly increasing in both coordinates.
pub fn time_objective(cfg: &SystemConfig, dev: &Device, gain: f64, pt: AllocationPoint) -> f64 {
    -system::total_time(cfg, dev, gain, pt.tau, pt.p).expect("point inside (0,1]^2")
}

/// Energy minus budget, joules. Negative inside the budget; strictly
/// increasing in both coordinates.
pub fn energy_slack(cfg: &SystemConfig, dev: &Device, gain: f64, pt: AllocationPoint) -> f64 {
    system::total_energy(cfg, dev, gain, pt.tau, pt.p).expect("point inside (0,1]^2")
        - dev.energy_budget
}

/// Bisection root bracketing for an increasing function with `f(lo) < 0 <= f(hi)`.
/// Returns the final feasible-side iterate `lo` (so `f(lo) <= 0` always).
pub(crate) fn bisect_increasing<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    debug_assert!(f(lo) < 0.0);
    for _ in 0..MAX_BISECT_ITERS {
        if hi - lo <= ZETA_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Projects a vertex onto the budget boundary along its ray through the origin.
///
/// Returns `(zeta, zeta * v)` with `energy_slack(zeta * v) ~ 0`. If the vertex
/// itself fits the budget, the projection is the vertex (`zeta = 1`). Errors
/// with [`Error::InfeasibleRay`] when even the floored ray end is over budget.
pub fn project(
    cfg: &SystemConfig,
    dev: &Device,
    gain: f64,
    vertex: AllocationPoint,
) -> Result<(f64, AllocationPoint), Error> {
    let slack = |zeta: f64| {
        energy_slack(cfg, dev, gain, AllocationPoint { tau: zeta * vertex.tau, p: zeta * vertex.p })
    };
    if slack(1.0) <= 0.0 {
        return Ok((1.0, vertex));
    }
    if slack(DOMAIN_FLOOR) >= 0.0 {
        return Err(Error::InfeasibleRay);
    }
    let zeta = bisect_increasing(slack, DOMAIN_FLOOR, 1.0);
    Ok((zeta, AllocationPoint { tau: zeta * vertex.tau, p: zeta * vertex.p }))
}

/// Per-iteration bookkeeping of the outer-approximation loop.
#[derive(Debug, Clone, Copy)]
pub struct IterationStat {
    /// 1-based iteration index.
    pub theta: usize,
    /// Projected objective of the vertex selected by the argmax rule.
    pub selected_objective: f64,
    /// Best boundary objective seen so far (monotone non-decreasing).
    pub incumbent: f64,
    /// Largest corner objective over the active set — upper bound on the optimum.
    pub upper_bound: f64,
    /// True when the plateaued change test redirected the split to the
    /// largest-bound vertex.
    pub split_on_bound: bool,
    /// Active vertices before the split.
    pub vertices_before: usize,
    /// Active vertices after the split and pruning.
    pub vertices_after: usize,
    /// Children inserted (0..=2).
    pub added: usize,
    /// Children discarded by the incumbent-based prune.
    pub pruned_children: usize,
    /// Children outside the floored domain or with an infeasible ray.
    pub dropped_children: usize,
    /// Previously active vertices discarded after the incumbent improved.
    pub pruned_retained: usize,
}

/// Full solve trace (for diagnostics and the invariant tests).
#[derive(Debug, Clone, Default)]
pub struct SolveTrace {
    pub iterations: Vec<IterationStat>,
}

struct Vertex {
    pt: AllocationPoint,
    phi: AllocationPoint,
    f_phi: f64,
    f_vert: f64,
}

/// Solves one (device, sub-channel) pair to tolerance `eps` (seconds).
pub fn solve_allocation(
    cfg: &SystemConfig,
    dev: &Device,
    gain: f64,
    eps: f64,
) -> Result<AllocationResult, Error> {
    solve_allocation_traced(cfg, dev, gain, eps).map(|(r, _)| r)
}

/// [`solve_allocation`] with the iteration trace attached.
pub fn solve_allocation_traced(
    cfg: &SystemConfig,
    dev: &Device,
    gain: f64,
    eps: f64,
) -> Result<(AllocationResult, SolveTrace), Error> {
    let mut trace = SolveTrace::default();
    if gain <= 0.0 || system::is_infeasible_pair(cfg, dev, gain) {
        return Ok((AllocationResult::Infeasible, trace));
    }
    let corner = AllocationPoint { tau: 1.0, p: 1.0 };
    if energy_slack(cfg, dev, gain, corner) <= 0.0 {
        // The budget never binds: run flat out.
        let time = -time_objective(cfg, dev, gain, corner);
        let energy = energy_slack(cfg, dev, gain, corner) + dev.energy_budget;
        return Ok((
            AllocationResult::Feasible(Allocation { point: corner, time, energy }),
            trace,
        ));
    }
    let (_, phi0) = match project(cfg, dev, gain, corner) {
        Ok(z) => z,
        // Even the floored diagonal is over budget: treat the pair as
        // infeasible within the floored domain.
        Err(Error::InfeasibleRay) => return Ok((AllocationResult::Infeasible, trace)),
        Err(e) => return Err(e),
    };
    let f_phi0 = time_objective(cfg, dev, gain, phi0);
    let mut verts = vec![Vertex {
        pt: corner,
        phi: phi0,
        f_phi: f_phi0,
        f_vert: time_objective(cfg, dev, gain, corner),
    }];
    let mut inc_pt = phi0;
    let mut inc_f = f_phi0;
    let mut prev: Option<f64> = None;

    let mut theta = 0;
    loop {
        if verts.is_empty() {
            // Every remaining box was provably dominated by the incumbent.
            break;
        }
        theta += 1;
        if theta > MAX_ITERS {
            return Err(Error::NoConvergence(MAX_ITERS));
        }

        // Argmax of the projected objective; ties go to the oldest vertex.
        let mut best = 0;
        let mut upper = f64::NEG_INFINITY;
        let mut bound_idx = 0;
        for (i, v) in verts.iter().enumerate() {
            if v.f_phi > verts[best].f_phi {
                best = i;
            }
            if v.f_vert > upper {
                upper = v.f_vert;
                bound_idx = i;
            }
        }
        let selected_objective = verts[best].f_phi;
        let plateau = prev.is_some_and(|p| (selected_objective - p).abs() <= eps);
        if plateau && upper - inc_f <= eps {
            break; // change test passed and the incumbent is certified eps-optimal
        }
        prev = Some(selected_objective);
        let split_on_bound = plateau;
        let split_idx = if plateau { bound_idx } else { best };

        let vertices_before = verts.len();
        let v = verts.remove(split_idx);
        let children = [
            AllocationPoint { tau: v.phi.tau, p: v.pt.p },
            AllocationPoint { tau: v.pt.tau, p: v.phi.p },
        ];
        let (mut added, mut pruned_children, mut dropped_children) = (0usize, 0usize, 0usize);
        for child in children {
            if child.tau < DOMAIN_FLOOR || child.p < DOMAIN_FLOOR {
                dropped_children += 1;
                continue;
            }
            let (_, cphi) = match project(cfg, dev, gain, child) {
                Ok(z) => z,
                Err(Error::InfeasibleRay) => {
                    dropped_children += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let f_phi = time_objective(cfg, dev, gain, cphi);
            if f_phi > inc_f {
                inc_f = f_phi;
                inc_pt = cphi;
            }
            let f_vert = time_objective(cfg, dev, gain, child);
            // Prune when the projection trails the incumbent by more than eps
            // AND the box corner itself cannot beat the incumbent (so nothing
            // inside the box can either — the eps-optimality certificate is
            // unaffected).
            if f_phi < inc_f - eps && f_vert <= inc_f {
                pruned_children += 1;
                continue;
            }
            verts.push(Vertex { pt: child, phi: cphi, f_phi, f_vert });
            added += 1;
        }
        // The incumbent may have moved past older vertices; apply the same rule.
        let before_retain = verts.len();
        verts.retain(|v| !(v.f_phi < inc_f - eps && v.f_vert <= inc_f));
        let pruned_retained = before_retain - verts.len();

        let mut upper_after = f64::NEG_INFINITY;
        for v in &verts {
            upper_after = upper_after.max(v.f_vert);
        }
        trace.iterations.push(IterationStat {
            theta,
            selected_objective,
            incumbent: inc_f,
            upper_bound: if verts.is_empty() { inc_f } else { upper_after },
            split_on_bound,
            vertices_before,
            vertices_after: verts.len(),
            added,
            pruned_children,
            dropped_children,
            pruned_retained,
        });
    }

    let time = -inc_f;
    let energy = energy_slack(cfg, dev, gain, inc_pt) + dev.energy_budget;
    debug_assert!(energy <= dev.energy_budget + CONSTRAINT_TOL);
    Ok((
        AllocationResult::Feasible(Allocation { point: inc_pt, time, energy }),
        trace,
    ))
}

// ---------------------------------------------------------------------------
// The per-round time table
// ---------------------------------------------------------------------------

/// Fraction used by the fixed-split baseline: `tau = p = 0.5`.
pub const FIXED_SPLIT: f64 = 0.5;

/// Minimal round times for a scheduled set: `K` sub-channels (rows) by
/// `S <= K` scheduled device slots (columns).
#[derive(Debug, Clone)]
pub struct GammaMatrix {
    channels: usize,
    device_ids: Vec<usize>,
    entries: Vec<AllocationResult>, // row-major, channels x slots
}

impl GammaMatrix {
    /// Assembles from per-device columns (each of length `channels`).
    pub fn from_columns(channels: usize, device_ids: Vec<usize>, columns: Vec<Vec<AllocationResult>>) -> Self {
        assert_eq!(device_ids.len(), columns.len(), "one column per device");
        let slots = columns.len();
        assert!(slots <= channels, "more scheduled devices than sub-channels");
        let mut entries = vec![AllocationResult::Infeasible; channels * slots];
        for (s, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), channels, "column length");
            for (k, r) in col.iter().enumerate() {
                entries[k * slots + s] = *r;
            }
        }
        GammaMatrix { channels, device_ids, entries }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of scheduled device slots (columns).
    pub fn slots(&self) -> usize {
        self.device_ids.len()
    }

    /// Device id occupying column `slot`.
    pub fn device_id(&self, slot: usize) -> usize {
        self.device_ids[slot]
    }

    pub fn device_ids(&self) -> &[usize] {
        &self.device_ids
    }

    pub fn entry(&self, channel: usize, slot: usize) -> &AllocationResult {
        &self.entries[channel * self.slots() + slot]
    }

    /// Round time of (channel, slot) if the pair is feasible.
    pub fn time(&self, channel: usize, slot: usize) -> Option<f64> {
        self.entry(channel, slot).time()
    }

    /// Largest feasible entry, if any — the scale the drop sentinel must dwarf.
    pub fn max_feasible_time(&self) -> Option<f64> {
        self.entries.iter().filter_map(|e| e.time()).fold(None, |acc, t| {
            Some(match acc {
                None => t,
                Some(a) => a.max(t),
            })
        })
    }
}

/// One device's optimal-allocation column: solves every sub-channel.
pub fn allocation_column(
    cfg: &SystemConfig,
    dev: &Device,
    channels: &ChannelMatrix,
    eps: f64,
) -> Result<Vec<AllocationResult>, Error> {
    (0..channels.channels())
        .map(|k| solve_allocation(cfg, dev, channels.gain(k, dev.id), eps))
        .collect()
}

/// One device's fixed-split column (`tau = p = 0.5`); a pair is kept only if
/// that point fits the energy budget.
pub fn fixed_split_column(cfg: &SystemConfig, dev: &Device, channels: &ChannelMatrix) -> Vec<AllocationResult> {
    (0..channels.channels())
        .map(|k| {
            let gain = channels.gain(k, dev.id);
            let energy = match system::total_energy(cfg, dev, gain, FIXED_SPLIT, FIXED_SPLIT) {
                Ok(e) => e,
                Err(_) => return AllocationResult::Infeasible, // zero rate
            };
            if energy > dev.energy_budget {
                return AllocationResult::Infeasible;
            }
            let time = system::total_time(cfg, dev, gain, FIXED_SPLIT, FIXED_SPLIT)
                .expect("rate positive: energy evaluation succeeded");
            AllocationResult::Feasible(Allocation {
                point: AllocationPoint { tau: FIXED_SPLIT, p: FIXED_SPLIT },
                time,
                energy,
            })
        })
        .collect()
}

/// Builds the optimal-allocation time table for a scheduled set.
pub fn build_gamma(
    cfg: &SystemConfig,
    devices: &[Device],
    selected: &[usize],
    channels: &ChannelMatrix,
    eps: f64,
) -> Result<GammaMatrix, Error> {
    let columns = selected
        .iter()
        .map(|&id| allocation_column(cfg, &devices[id], channels, eps))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GammaMatrix::from_columns(channels.channels(), selected.to_vec(), columns))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SystemConfig {
        SystemConfig::default()
    }

    fn dev(samples: usize) -> Device {
        Device { id: 0, samples, cpu_freq: 1e9, distance: 100.0, energy_budget: 0.02 }
    }

    #[test]
    fn bisect_linear_toy() {
        // 2 zeta - 1 crosses zero at exactly 0.5.
        let root = bisect_increasing(|z| 2.0 * z - 1.0, DOMAIN_FLOOR, 1.0);
        assert!((root - 0.5).abs() <= ZETA_TOL);
    }

    #[test]
    fn projection_matches_frozen_boundary_point() {
        // beta=20, gain=0.9, diagonal ray: zeta bisected offline to 14 digits.
        let c = cfg();
        let d = dev(20);
        let (zeta, pt) = project(&c, &d, 0.9, AllocationPoint { tau: 1.0, p: 1.0 }).unwrap();
        assert!((zeta - 0.7086436730583092).abs() < 1e-9, "zeta {zeta}");
        assert!(energy_slack(&c, &d, 0.9, pt).abs() <= CONSTRAINT_TOL);
        assert!(energy_slack(&c, &d, 0.9, pt) <= 0.0, "projection stays feasible");
    }

    #[test]
    fn projection_ray_scan_oracle() {
        // No scanned point farther out on the ray than zeta + 1e-6 fits the
        // budget (dense 1e6-point sweep).
        let c = cfg();
        let d = dev(20);
        let v = AllocationPoint { tau: 1.0, p: 0.7 };
        let (zeta, _) = project(&c, &d, 0.9, v).unwrap();
        let n = 1_000_000;
        for i in 1..=n {
            let z = i as f64 / n as f64;
            if z <= zeta + 1e-6 {
                continue;
            }
            let slack = energy_slack(&c, &d, 0.9, AllocationPoint { tau: z * v.tau, p: z * v.p });
            assert!(slack > 0.0, "z={z} should be over budget");
        }
    }

    #[test]
    fn feasible_vertex_projects_to_itself() {
        let c = cfg();
        let mut d = dev(5);
        d.energy_budget = 10.0; // budget never binds
        let v = AllocationPoint { tau: 0.8, p: 0.6 };
        let (zeta, pt) = project(&c, &d, 5.0, v).unwrap();
        assert_eq!(zeta, 1.0);
        assert_eq!(pt, v);
    }

    #[test]
    fn unconstrained_pair_runs_flat_out() {
        let c = cfg();
        let mut d = dev(5);
        d.energy_budget = 10.0;
        let r = solve_allocation(&c, &d, 5.0, 0.01).unwrap();
        let a = r.allocation().expect("feasible");
        assert_eq!(a.point, AllocationPoint { tau: 1.0, p: 1.0 });
    }

    #[test]
    fn hard_pair_is_infeasible() {
        let c = cfg();
        let d = dev(5);
        // gain below the ln2*P_t*D / (E_max*B) threshold of ~0.3466.
        assert_eq!(solve_allocation(&c, &d, 0.3, 0.01).unwrap(), AllocationResult::Infeasible);
        assert_eq!(solve_allocation(&c, &d, 0.0, 0.01).unwrap(), AllocationResult::Infeasible);
    }

    #[test]
    fn pinned_instance_matches_grid_oracle() {
        // beta=20, gain=0.9: a 4000x4000 grid puts the optimum at
        // T = 1.3747908054564544 s (tau ~ 0.678, p = 1).
        let c = cfg();
        let d = dev(20);
        let r = solve_allocation(&c, &d, 0.9, 0.01).unwrap();
        let a = r.allocation().expect("feasible");
        let rel = (a.time - 1.3747908054564544).abs() / 1.3747908054564544;
        assert!(rel <= 1e-2, "time {} rel {rel}", a.time);
        assert!(a.energy <= d.energy_budget + CONSTRAINT_TOL);
    }

    #[test]
    fn solution_is_feasible_and_incumbent_monotone() {
        let c = cfg();
        let d = dev(35);
        let (r, trace) = solve_allocation_traced(&c, &d, 0.45, 0.01).unwrap();
        let a = r.allocation().expect("feasible");
        assert!(energy_slack(&c, &d, 0.45, a.point) <= 1e-6);
        let mut last = f64::NEG_INFINITY;
        for it in &trace.iterations {
            assert!(it.incumbent >= last, "incumbent dipped at theta {}", it.theta);
            last = it.incumbent;
        }
        assert!(!trace.iterations.is_empty(), "constrained instance should iterate");
    }

    #[test]
    fn vertex_accounting_invariant() {
        let c = cfg();
        let d = dev(35);
        let (_, trace) = solve_allocation_traced(&c, &d, 0.45, 0.01).unwrap();
        for it in &trace.iterations {
            // Exact bookkeeping: one removed, `added` inserted, retained prunes out.
            assert_eq!(
                it.vertices_after,
                it.vertices_before - 1 + it.added - it.pruned_retained,
                "theta {}",
                it.theta
            );
            assert_eq!(it.added + it.pruned_children + it.dropped_children, 2);
            if it.pruned_children == 0 && it.dropped_children == 0 && it.pruned_retained == 0 {
                // The canonical split: one vertex out, its two children in.
                assert_eq!(it.vertices_after, it.vertices_before + 1);
            }
        }
    }

    #[test]
    fn certified_gap_closes_at_termination() {
        let c = cfg();
        for (samples, gain) in [(20, 0.9), (35, 0.45), (12, 0.514), (50, 2.0)] {
            let d = dev(samples);
            let (r, trace) = solve_allocation_traced(&c, &d, gain, 0.01).unwrap();
            let a = r.allocation().expect("feasible");
            if let Some(last) = trace.iterations.last() {
                assert!(last.upper_bound - (-a.time) <= 0.01 + 1e-12 || last.vertices_after == 0);
            }
        }
    }

    #[test]
    fn gamma_assembles_columns_in_order() {
        let c = cfg();
        let devices: Vec<Device> = (0..6)
            .map(|id| Device { id, samples: 20 + id, cpu_freq: 1e9, distance: 80.0, energy_budget: 0.02 })
            .collect();
        let mut rng = crate::rng::stream_at(3, "channel", 1);
        let ch = system::draw_channels(&mut rng, &c, &devices, 1);
        let selected = vec![4, 1, 5, 2];
        let g = build_gamma(&c, &devices, &selected, &ch, 0.01).unwrap();
        assert_eq!(g.channels(), 4);
        assert_eq!(g.slots(), 4);
        assert_eq!(g.device_ids(), &[4, 1, 5, 2]);
        // Column 0 must be device 4's solves, channel by channel.
        for k in 0..4 {
            let direct = solve_allocation(&c, &devices[4], ch.gain(k, 4), 0.01).unwrap();
            assert_eq!(g.entry(k, 0).time(), direct.time());
        }
    }
}
