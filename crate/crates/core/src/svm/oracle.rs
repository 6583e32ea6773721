//! Slow, independent solver for tiny soft-margin problems, used to verify
//! the production solver.
//!
//! Runs accelerated projected gradient ascent on the dual
//! `max sum a - 1/2 |sum a_i y_i x_i|^2` over `{0 <= a <= C, sum a_i y_i = 0}`,
//! projecting exactly by bisection on the equality multiplier. The primal
//! point is `w = sum a_i y_i x_i` with the bias found by trying every hinge
//! breakpoint. Weak duality makes `primal - dual` a certificate of
//! optimality.
//!
//! Primal points recovered from an approximate dual converge slowly, so the
//! iterate is periodically polished: points near the margin are pinned to
//! it, the resulting equality-constrained problem is solved exactly, and
//! the KKT conditions are checked at the result.

use nalgebra::{DMatrix, DVector};

use super::binary::check_problem;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub objective: f64,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Dual objective at the final multipliers; `objective - dual` bounds
    /// the suboptimality.
    pub dual: f64,
    pub iterations: usize,
    /// The KKT conditions hold at `(weights, bias)` to within `KKT_TOL`.
    pub certified: bool,
}

impl OracleSolution {
    pub fn gap(&self) -> f64 {
        self.objective - self.dual
    }
}

const MAX_ITER: usize = 200_000;
const CHECK_EVERY: usize = 256;
pub const KKT_TOL: f64 = 1e-10;
const PROJECTION_ROUNDS: usize = 20_000;

fn inner(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

fn primal(x: &[Vec<f64>], y: &[f64], cost: f64, w: &[f64], b: f64) -> f64 {
    let mut hinge = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let m = 1.0 - yi * (inner(w, xi) + b);
        if m > 0.0 {
            hinge += m;
        }
    }
    0.5 * inner(w, w) + cost * hinge
}

/// Euclidean projection onto `{0 <= a <= C, sum a_i y_i = 0}`.
fn project(v: &[f64], y: &[f64], cost: f64) -> Vec<f64> {
    let at = |lambda: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(&vi, &yi)| (vi - lambda * yi).clamp(0.0, cost))
            .collect()
    };
    let balance = |a: &[f64]| a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
    // balance(at(lambda)) is non-increasing in lambda
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + cost + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * span {
            break;
        }
    }
    at(0.5 * (lo + hi))
}

/// Exact minimizer for the margin set suggested by `(w, b)`, if it passes
/// the KKT check.
fn polish(x: &[Vec<f64>], y: &[f64], cost: f64, w: &[f64], b: f64) -> Option<(Vec<f64>, f64)> {
    let dim = w.len();
    let margin = |w: &[f64], b: f64, i: usize| y[i] * (inner(w, &x[i]) + b);
    for exponent in 2..=10 {
        let band = 10f64.powi(-exponent);
        let on: Vec<usize> = (0..x.len())
            .filter(|&i| (margin(w, b, i) - 1.0).abs() <= band)
            .collect();
        let inside: Vec<bool> = (0..x.len()).map(|i| margin(w, b, i) < 1.0 - band).collect();
        // unknowns: w, b, one multiplier per margin point
        let size = dim + 1 + on.len();
        let mut a = DMatrix::<f64>::zeros(size, size);
        let mut rhs = DVector::<f64>::zeros(size);
        for k in 0..dim {
            a[(k, k)] = 1.0;
            for (m, &i) in on.iter().enumerate() {
                a[(k, dim + 1 + m)] = -y[i] * x[i][k];
            }
            rhs[k] = (0..x.len())
                .filter(|&i| inside[i])
                .map(|i| cost * y[i] * x[i][k])
                .sum();
        }
        for (m, &i) in on.iter().enumerate() {
            a[(dim, dim + 1 + m)] = y[i];
        }
        rhs[dim] = -(0..x.len())
            .filter(|&i| inside[i])
            .map(|i| cost * y[i])
            .sum::<f64>();
        for (m, &i) in on.iter().enumerate() {
            let row = dim + 1 + m;
            for k in 0..dim {
                a[(row, k)] = y[i] * x[i][k];
            }
            a[(row, dim)] = y[i];
            rhs[row] = 1.0;
        }
        let Ok(z) = a.clone().svd(true, true).solve(&rhs, 1e-13) else {
            continue;
        };
        if (&a * &z - &rhs).amax() > KKT_TOL {
            continue;
        }
        let w_new: Vec<f64> = z.iter().take(dim).copied().collect();
        let b_new = z[dim];
        let others_ok = (0..x.len()).filter(|i| !on.contains(i)).all(|i| {
            let m = margin(&w_new, b_new, i);
            if inside[i] {
                m <= 1.0 + KKT_TOL
            } else {
                m >= 1.0 - KKT_TOL
            }
        });
        if others_ok && feasible_multipliers(x, y, cost, &on, &inside, &w_new, z.as_slice()) {
            return Some((w_new, b_new));
        }
    }
    None
}

/// Whether some multipliers in `[0, C]` for the margin points reproduce
/// `w` and balance the labels. Starts from the least-norm solution and
/// alternates projections between the box and the affine solution set,
/// since degenerate problems have many multiplier vectors and the
/// least-norm one may leave the box.
fn feasible_multipliers(
    x: &[Vec<f64>],
    y: &[f64],
    cost: f64,
    on: &[usize],
    inside: &[bool],
    w: &[f64],
    solution: &[f64],
) -> bool {
    let dim = w.len();
    let mut a = DMatrix::<f64>::zeros(dim + 1, on.len());
    for (m, &i) in on.iter().enumerate() {
        for k in 0..dim {
            a[(k, m)] = y[i] * x[i][k];
        }
        a[(dim, m)] = y[i];
    }
    let mut target = DVector::<f64>::zeros(dim + 1);
    for k in 0..dim {
        target[k] = w[k]
            - (0..x.len())
                .filter(|&i| inside[i])
                .map(|i| cost * y[i] * x[i][k])
                .sum::<f64>();
    }
    target[dim] = -(0..x.len())
        .filter(|&i| inside[i])
        .map(|i| cost * y[i])
        .sum::<f64>();
    let residual = |mu: &DVector<f64>| (&a * mu - &target).amax();
    let mut mu = DVector::from_iterator(on.len(), solution.iter().skip(dim + 1).copied());
    if mu
        .iter()
        .all(|&v| v >= -KKT_TOL * cost && v <= cost * (1.0 + KKT_TOL))
    {
        return residual(&mu) <= KKT_TOL;
    }
    if on.is_empty() {
        return false;
    }
    let Ok(pinv) = a.clone().pseudo_inverse(1e-13) else {
        return false;
    };
    for _ in 0..PROJECTION_ROUNDS {
        mu.iter_mut().for_each(|v| *v = v.clamp(0.0, cost));
        if residual(&mu) <= KKT_TOL {
            return true;
        }
        let correction = &pinv * (&a * &mu - &target);
        mu -= correction;
    }
    false
}

pub fn qp_oracle(x: &[Vec<f64>], y: &[f64], cost: f64) -> Result<OracleSolution> {
    let dim = check_problem(x, y, cost)?;
    let n = x.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * inner(&x[i], &x[j])).collect())
        .collect();
    // Lipschitz constant of the dual gradient: largest eigenvalue of Q
    let mut v = vec![1.0; n];
    let mut lipschitz = 1.0;
    for _ in 0..500 {
        let qv: Vec<f64> = q.iter().map(|row| inner(row, &v)).collect();
        let norm = inner(&qv, &qv).sqrt();
        if norm == 0.0 {
            break;
        }
        lipschitz = norm / inner(&v, &v).sqrt();
        v = qv.iter().map(|z| z / norm).collect();
    }
    let step = 1.0 / (lipschitz * 1.01 + 1e-12);

    let weights_of = |a: &[f64]| -> Vec<f64> {
        let mut w = vec![0.0; dim];
        for i in 0..n {
            for k in 0..dim {
                w[k] += a[i] * y[i] * x[i][k];
            }
        }
        w
    };
    let dual_of = |a: &[f64]| -> f64 {
        let w = weights_of(a);
        a.iter().sum::<f64>() - 0.5 * inner(&w, &w)
    };
    let primal_of = |a: &[f64]| -> (f64, Vec<f64>, f64) {
        let w = weights_of(a);
        let mut best = (f64::INFINITY, 0.0);
        for (xi, &yi) in x.iter().zip(y) {
            let b = yi - inner(&w, xi);
            let p = primal(x, y, cost, &w, b);
            if p < best.0 {
                best = (p, b);
            }
        }
        (best.0, w, best.1)
    };

    let mut alpha = project(&vec![0.0; n], y, cost);
    let mut momentum_point = alpha.clone();
    let mut t = 1.0f64;
    let mut best_dual = dual_of(&alpha);
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let grad: Vec<f64> = (0..n)
            .map(|i| 1.0 - inner(&q[i], &momentum_point))
            .collect();
        let ascent: Vec<f64> = momentum_point
            .iter()
            .zip(&grad)
            .map(|(a, g)| a + step * g)
            .collect();
        let next = project(&ascent, y, cost);
        let next_dual = dual_of(&next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let stalled = next_dual < best_dual;
        if stalled {
            // restart momentum when the dual stops improving
            momentum_point = alpha.clone();
            t = 1.0;
        } else {
            momentum_point = next
                .iter()
                .zip(&alpha)
                .map(|(a, prev)| a + (t - 1.0) / t_next * (a - prev))
                .collect();
            alpha = next;
            best_dual = next_dual;
            t = t_next;
        }
        if stalled || iterations % CHECK_EVERY == 0 {
            let (p, w, b) = primal_of(&alpha);
            if let Some((weights, bias)) = polish(x, y, cost, &w, b) {
                return Ok(OracleSolution {
                    objective: primal(x, y, cost, &weights, bias),
                    weights,
                    bias,
                    dual: best_dual,
                    iterations,
                    certified: true,
                });
            }
            if p - best_dual <= 1e-13 * p.abs().max(1.0) {
                break;
            }
        }
    }
    let (objective, weights, bias) = primal_of(&alpha);
    Ok(OracleSolution {
        objective,
        weights,
        bias,
        dual: best_dual,
        iterations,
        certified: false,
    })
}
