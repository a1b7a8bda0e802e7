//! The training side: synthetic data, full-batch local steps, weighted
//! aggregation, and the convergence-bound machinery.
//!
//! Two tasks are provided. Ridge regression is the reference task: its
//! curvature constants and optimum are exact (eigenvalues of the average
//! Gram matrix, normal equations), which is what makes the convergence
//! bound checkable to tight tolerances. L2-regularized logistic regression
//! is a second task whose smoothness constant is an upper bound rather
//! than tight; its optimum is located numerically.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::standard_normal;

/// The loss family being trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Ridge,
    Logistic,
}

/// One device's immutable shard: `rows x dim` features plus labels.
#[derive(Debug, Clone)]
pub struct DeviceData {
    dim: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl DeviceData {
    pub fn new(dim: usize, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len() * dim, "feature matrix shape");
        DeviceData { dim, xs, ys }
    }

    pub fn rows(&self) -> usize {
        self.ys.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.ys[i]
    }
}

/// The partitioned fleet dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dim: usize,
    pub devices: Vec<DeviceData>,
    pub total: usize,
}

impl Dataset {
    /// Per-device sample counts.
    pub fn betas(&self) -> Vec<usize> {
        self.devices.iter().map(DeviceData::rows).collect()
    }
}

/// Integer sample counts proportional to `shares`, summing to `total`.
///
/// Largest-remainder rounding, then any zero count is topped up from the
/// largest shard so every device holds at least one sample.
pub fn partition_counts(total: usize, shares: &[f64]) -> Vec<usize> {
    let n = shares.len();
    assert!(n > 0 && total >= n, "need at least one sample per device");
    assert!(shares.iter().all(|&s| s > 0.0), "shares must be positive");
    let sum: f64 = shares.iter().sum();
    let quotas: Vec<f64> = shares.iter().map(|&s| total as f64 * s / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|&q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).expect("finite quotas").then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    while let Some(zero) = counts.iter().position(|&c| c == 0) {
        let largest = (0..n).max_by_key(|&i| counts[i]).expect("non-empty");
        debug_assert!(counts[largest] >= 2, "total >= n guarantees a donor");
        counts[largest] -= 1;
        counts[zero] += 1;
    }
    debug_assert_eq!(counts.iter().sum::<usize>(), total);
    counts
}

/// Draws the synthetic fleet dataset.
///
/// Shard sizes follow per-device shares drawn uniformly from [1, 10]
/// (imbalanced, IID contents). Features are standard normal; labels come
/// from one hidden linear model plus Gaussian noise — thresholded to +/-1
/// for the logistic task.
pub fn partition_data<R: Rng>(
    rng: &mut R,
    num_devices: usize,
    total_samples: usize,
    dim: usize,
    noise_std: f64,
    kind: TaskKind,
) -> Dataset {
    assert!(total_samples >= num_devices, "need at least one sample per device");
    let shares: Vec<f64> = (0..num_devices).map(|_| 1.0 + 9.0 * rng.gen::<f64>()).collect();
    let counts = partition_counts(total_samples, &shares);
    let hidden: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
    let mut devices = Vec::with_capacity(num_devices);
    for &rows in &counts {
        let mut xs = Vec::with_capacity(rows * dim);
        let mut ys = Vec::with_capacity(rows);
        for _ in 0..rows {
            let start = xs.len();
            for _ in 0..dim {
                xs.push(standard_normal(rng));
            }
            let clean: f64 = xs[start..].iter().zip(&hidden).map(|(x, w)| x * w).sum();
            let noisy = clean + noise_std * standard_normal(rng);
            ys.push(match kind {
                TaskKind::Ridge => noisy,
                TaskKind::Logistic => {
                    if noisy >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
            });
        }
        devices.push(DeviceData::new(dim, xs, ys));
    }
    Dataset { dim, devices, total: total_samples }
}

/// A training task: the data plus loss-family hyper-parameters.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub data: Dataset,
    /// Regularization weight; kept >= 1e-3 so curvature stays bounded
    /// away from zero.
    pub lambda_reg: f64,
    pub learning_rate: f64,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, data: Dataset, lambda_reg: f64, learning_rate: f64) -> Result<Self, Error> {
        if lambda_reg < 1e-3 {
            return Err(Error::Config(format!(
                "lambda_reg must be at least 1e-3 (got {lambda_reg})"
            )));
        }
        if learning_rate <= 0.0 {
            return Err(Error::Config(format!("learning_rate must be positive (got {learning_rate})")));
        }
        Ok(TaskSpec { kind, data, lambda_reg, learning_rate })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Device-mean sample loss (each sample carries its regularizer share).
pub fn local_loss(kind: TaskKind, lambda_reg: f64, data: &DeviceData, w: &[f64]) -> f64 {
    let reg = 0.5 * lambda_reg * dot(w, w);
    let mut sum = 0.0;
    for i in 0..data.rows() {
        let margin = dot(data.row(i), w);
        sum += match kind {
            TaskKind::Ridge => 0.5 * (margin - data.label(i)).powi(2),
            TaskKind::Logistic => (-data.label(i) * margin).exp().ln_1p(),
        };
    }
    sum / data.rows() as f64 + reg
}

/// Device-mean sample gradient: for ridge this is X'(Xw - y)/beta + lambda w.
pub fn local_gradient(kind: TaskKind, lambda_reg: f64, data: &DeviceData, w: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; w.len()];
    for i in 0..data.rows() {
        let row = data.row(i);
        let margin = dot(row, w);
        let coeff = match kind {
            TaskKind::Ridge => margin - data.label(i),
            // d/dm ln(1+e^(-ym)) = -y/(1+e^(ym))
            TaskKind::Logistic => -data.label(i) / (1.0 + (data.label(i) * margin).exp()),
        };
        for (gj, &xj) in g.iter_mut().zip(row) {
            *gj += coeff * xj;
        }
    }
    let beta = data.rows() as f64;
    for (gj, &wj) in g.iter_mut().zip(w) {
        *gj = *gj / beta + lambda_reg * wj;
    }
    g
}

/// Sample-weighted mean of the device losses.
pub fn global_loss(task: &TaskSpec, w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for dev in &task.data.devices {
        acc += dev.rows() as f64 * local_loss(task.kind, task.lambda_reg, dev, w);
    }
    acc / task.data.total as f64
}

/// Sample-weighted mean of the device gradients.
pub fn global_gradient(task: &TaskSpec, w: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; w.len()];
    for dev in &task.data.devices {
        let g = local_gradient(task.kind, task.lambda_reg, dev, w);
        let beta = dev.rows() as f64;
        for (a, gj) in acc.iter_mut().zip(g) {
            *a += beta * gj;
        }
    }
    for a in &mut acc {
        *a /= task.data.total as f64;
    }
    acc
}

/// Largest single-sample squared gradient norm across the whole fleet at `w`.
pub fn max_per_sample_grad_sq(task: &TaskSpec, w: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for dev in &task.data.devices {
        for i in 0..dev.rows() {
            let row = dev.row(i);
            let margin = dot(row, w);
            let coeff = match task.kind {
                TaskKind::Ridge => margin - dev.label(i),
                TaskKind::Logistic => -dev.label(i) / (1.0 + (dev.label(i) * margin).exp()),
            };
            let mut norm_sq = 0.0;
            for (j, &xj) in row.iter().enumerate() {
                let gj = coeff * xj + task.lambda_reg * w[j];
                norm_sq += gj * gj;
            }
            worst = worst.max(norm_sq);
        }
    }
    worst
}

/// max_i ||grad l_i(w)||^2 / ||grad F(w)||^2 at one probe point.
pub fn grad_ratio(task: &TaskSpec, w: &[f64]) -> f64 {
    let g = global_gradient(task, w);
    let denom = dot(&g, &g);
    if denom == 0.0 {
        // Stationary point: every per-sample ratio is formally infinite, but
        // the bound term it scales is zero there; contribute nothing.
        return 0.0;
    }
    max_per_sample_grad_sq(task, w) / denom
}

/// One full-batch local step: w - lr * (mean sample gradient).
pub fn local_update(kind: TaskKind, lambda_reg: f64, data: &DeviceData, w: &[f64], lr: f64) -> Vec<f64> {
    let g = local_gradient(kind, lambda_reg, data, w);
    w.iter().zip(g).map(|(&wj, gj)| wj - lr * gj).collect()
}

/// Sample-weighted average of the participating local models.
///
/// `None` when nobody participates: the caller carries the global model
/// over unchanged and records the round as such.
pub fn aggregate(locals: &[Vec<f64>], betas: &[usize], mask: &[bool]) -> Option<Vec<f64>> {
    assert_eq!(locals.len(), betas.len());
    assert_eq!(locals.len(), mask.len());
    let weight: usize = betas.iter().zip(mask).filter(|(_, &m)| m).map(|(&b, _)| b).sum();
    if weight == 0 {
        return None;
    }
    let dim = locals.iter().map(Vec::len).next().unwrap_or(0);
    let mut out = vec![0.0; dim];
    for ((model, &beta), &m) in locals.iter().zip(betas).zip(mask) {
        if !m {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(model) {
            *o += beta as f64 * v;
        }
    }
    for o in &mut out {
        *o /= weight as f64;
    }
    Some(out)
}

/// Curvature constants and the optimum of the global objective.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerConstants {
    /// Smoothness constant of the global gradient (exact for ridge, an
    /// upper bound for logistic).
    pub lipschitz: f64,
    /// Strong-convexity constant.
    pub strong_convexity: f64,
    /// Optimal global loss.
    pub f_star: f64,
    /// Arg-min of the global loss.
    pub w_star: Vec<f64>,
    /// Largest observed per-sample-to-global gradient ratio; certified
    /// along the realized trajectory after a run, absent before.
    pub rho: Option<f64>,
}

/// Average Gram matrix over every sample in the fleet: sum(x x') / total.
fn average_gram(data: &Dataset) -> DMatrix<f64> {
    let d = data.dim;
    let mut h = DMatrix::zeros(d, d);
    for dev in &data.devices {
        for i in 0..dev.rows() {
            let row = dev.row(i);
            for a in 0..d {
                for b in 0..d {
                    h[(a, b)] += row[a] * row[b];
                }
            }
        }
    }
    h / data.total as f64
}

/// Computes the curvature constants and optimum for `task`.
///
/// Ridge: eigenvalues of the average Gram matrix give exact constants and
/// the normal equations give the optimum. Logistic: the standard 1/4
/// curvature cap bounds the smoothness, strong convexity comes from the
/// regularizer alone, and the optimum is found by gradient descent.
pub fn learner_constants(task: &TaskSpec) -> Result<LearnerConstants, Error> {
    let d = task.data.dim;
    let h = average_gram(&task.data);
    let eigen = h.clone().symmetric_eigen();
    let lam_max = eigen.eigenvalues.max();
    let lam_min = eigen.eigenvalues.min();
    match task.kind {
        TaskKind::Ridge => {
            let lipschitz = lam_max + task.lambda_reg;
            let strong_convexity = lam_min + task.lambda_reg;
            let mut b = DVector::zeros(d);
            for dev in &task.data.devices {
                for i in 0..dev.rows() {
                    let row = dev.row(i);
                    let y = dev.label(i);
                    for a in 0..d {
                        b[a] += row[a] * y;
                    }
                }
            }
            b /= task.data.total as f64;
            let system = &h + DMatrix::identity(d, d) * task.lambda_reg;
            let w_star = system
                .lu()
                .solve(&b)
                .ok_or(Error::Degenerate("regularized normal equations are singular"))?;
            let w_vec: Vec<f64> = w_star.iter().copied().collect();
            let f_star = global_loss(task, &w_vec);
            Ok(LearnerConstants { lipschitz, strong_convexity, f_star, w_star: w_vec, rho: None })
        }
        TaskKind::Logistic => {
            let lipschitz = lam_max / 4.0 + task.lambda_reg;
            let strong_convexity = task.lambda_reg;
            let mut w = vec![0.0; d];
            let step = 1.0 / lipschitz;
            let mut converged = false;
            for _ in 0..200_000 {
                let g = global_gradient(task, &w);
                if dot(&g, &g).sqrt() <= 1e-12 {
                    converged = true;
                    break;
                }
                for (wj, gj) in w.iter_mut().zip(g) {
                    *wj -= step * gj;
                }
            }
            if !converged {
                return Err(Error::NoConvergence(200_000));
            }
            let f_star = global_loss(task, &w);
            Ok(LearnerConstants { lipschitz, strong_convexity, f_star, w_star: w, rho: None })
        }
    }
}

/// The per-round convergence bound on the optimality gap.
///
/// Entry `t` bounds F(w^(t+1)) - F_star:
///
/// ```text
/// (1 - mu/L)^t * delta1
///   + (2 rho / L) * sum_{i=1..t} (1 - mu/L)^(t-i) * ||grad F(w^i)||^2
///                                * unselected_beta[i] / total_beta
/// ```
///
/// computed by direct summation; entry 0 is `delta1` itself.
pub fn convergence_bound(
    initial_gap: f64,
    grad_norm_sq: &[f64],
    unselected_beta: &[f64],
    total_beta: f64,
    lipschitz: f64,
    strong_convexity: f64,
    rho: f64,
) -> Vec<f64> {
    assert_eq!(grad_norm_sq.len(), unselected_beta.len());
    let q = 1.0 - strong_convexity / lipschitz;
    let rounds = grad_norm_sq.len();
    let mut bounds = Vec::with_capacity(rounds + 1);
    for t in 0..=rounds {
        let mut b = q.powi(t as i32) * initial_gap;
        for i in 1..=t {
            b += (2.0 * rho / lipschitz)
                * q.powi((t - i) as i32)
                * grad_norm_sq[i - 1]
                * (unselected_beta[i - 1] / total_beta);
        }
        bounds.push(b);
    }
    bounds
}
