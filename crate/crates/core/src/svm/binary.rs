//! Binary soft-margin SVM with a linear kernel.
//!
//! Minimizes `1/2 |w|^2 + C * sum_i zeta_i` with
//! `zeta_i = max(0, 1 - y_i (w . x_i + b))` by solving the dual with
//! two-coordinate descent steps (the equality constraint `sum a_i y_i = 0`
//! from the unregularized bias rules out single-coordinate moves). Pairs are
//! chosen by the maximal-violation rule with second-order selection of the
//! second index.

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100_000;

const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub cost: f64,
    /// Stop when the maximal KKT violation drops to this value.
    pub tol: f64,
    /// Cap on pair updates.
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cost: 1.0,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinarySvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Primal objective at `(weights, bias)`.
    pub objective: f64,
    pub iterations: usize,
    /// Final maximal KKT violation.
    pub violation: f64,
    pub converged: bool,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// `max(0, 1 - y (w . x + b))` for each sample.
pub fn slacks(x: &[Vec<f64>], y: &[f64], w: &[f64], b: f64) -> Vec<f64> {
    x.iter()
        .zip(y)
        .map(|(xi, &yi)| (1.0 - yi * (dot(w, xi) + b)).max(0.0))
        .collect()
}

pub fn primal_objective(x: &[Vec<f64>], y: &[f64], cost: f64, w: &[f64], b: f64) -> f64 {
    0.5 * dot(w, w) + cost * slacks(x, y, w, b).iter().sum::<f64>()
}

pub(crate) fn check_problem(x: &[Vec<f64>], y: &[f64], cost: f64) -> Result<usize> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::shape(format!(
            "{} samples, {} labels",
            x.len(),
            y.len()
        )));
    }
    let dim = x[0].len();
    if dim == 0 || x.iter().any(|r| r.len() != dim) {
        return Err(Error::shape("ragged or empty feature rows"));
    }
    if cost.is_nan() || cost <= 0.0 || !cost.is_finite() {
        return Err(Error::Config(format!("cost must be positive, got {cost}")));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Config("labels must be -1 or +1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::DegenerateLabels);
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Contract("non-finite feature value".into()));
    }
    Ok(dim)
}

/// Bias minimizing the hinge sum for fixed `w`, chosen as the point of the
/// optimal interval nearest to `hint`.
pub(crate) fn best_bias(x: &[Vec<f64>], y: &[f64], w: &[f64], hint: f64) -> f64 {
    // term i is active for b < y_i - s_i (y=+1) or b > y_i - s_i (y=-1)
    let mut points: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| (yi - dot(w, xi), yi))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_pos = y.iter().filter(|&&v| v > 0.0).count() as i64;
    let mut neg_le = 0i64;
    let mut pos_le = 0i64;
    let mut lo = None;
    let mut hi = None;
    let mut k = 0;
    while k < points.len() {
        let b = points[k].0;
        let (neg_lt, pos_lt) = (neg_le, pos_le);
        while k < points.len() && points[k].0 == b {
            if points[k].1 > 0.0 {
                pos_le += 1;
            } else {
                neg_le += 1;
            }
            k += 1;
        }
        // slopes just right and just left of b
        let right = neg_le - (n_pos - pos_le);
        let left = neg_lt - (n_pos - pos_lt);
        if lo.is_none() && right >= 0 {
            lo = Some(b);
        }
        if left <= 0 {
            hi = Some(b);
        }
    }
    match (lo, hi) {
        (Some(lo), Some(hi)) if lo <= hi => hint.clamp(lo, hi),
        (Some(lo), _) => lo,
        _ => hint,
    }
}

pub fn train_binary(x: &[Vec<f64>], y: &[f64], config: &SolverConfig) -> Result<BinarySvm> {
    let dim = check_problem(x, y, config.cost)?;
    let n = x.len();
    let c = config.cost;
    let diag: Vec<f64> = x.iter().map(|r| dot(r, r)).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut violation;

    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt < 0.0 && a < c) || (yt > 0.0 && a > 0.0);

    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if low(alpha[t], y[t]) && v < gmin {
                gmin = v;
            }
        }
        violation = gmax - gmin;
        if i == usize::MAX || violation <= config.tol || iterations >= config.max_iter {
            break;
        }
        let xi = &x[i];
        let ki: Vec<f64> = x.iter().map(|r| dot(r, xi)).collect();
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            let b = gmax - v;
            if b > 0.0 {
                let a = diag[i] + diag[t] - 2.0 * ki[t];
                let score = -(b * b) / if a > 0.0 { a } else { TAU };
                if score < best {
                    best = score;
                    j = t;
                }
            }
        }
        if j == usize::MAX {
            break;
        }
        let kj: Vec<f64> = x.iter().map(|r| dot(r, &x[j])).collect();
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = (diag[i] + diag[j] - 2.0 * ki[j]).max(TAU);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
        iterations += 1;
    }

    let mut w = vec![0.0; dim];
    for t in 0..n {
        if alpha[t] != 0.0 {
            for (wk, xk) in w.iter_mut().zip(&x[t]) {
                *wk += alpha[t] * y[t] * xk;
            }
        }
    }
    // decision = w.x - rho, with rho from the free multipliers
    let mut free_sum = 0.0;
    let mut free = 0;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += yg;
            free += 1;
        } else if (alpha[t] >= c) != (y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };
    let bias = best_bias(x, y, &w, -rho);
    let objective = primal_objective(x, y, c, &w, bias);
    Ok(BinarySvm {
        weights: w,
        bias,
        objective,
        iterations,
        violation,
        converged: violation <= config.tol,
    })
}
