//! L2-regularized logistic regression fit by damped Newton iterations.
//!
//! The objective is the mean log-likelihood minus `l2/2 · ‖w‖²`; the intercept
//! is not penalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub l2: f64,
    /// Convergence when the max-norm of the parameter update drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            tolerance: 1e-8,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn linear(x: &[f64], intercept: f64, coef: &[f64]) -> f64 {
    intercept + x.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>()
}

/// Regularized mean log-likelihood at `(intercept, coef)`.
pub fn objective(x: &[Vec<f64>], y: &[u8], intercept: f64, coef: &[f64], l2: f64) -> f64 {
    let n = y.len() as f64;
    let ll: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let z = linear(row, intercept, coef);
            f64::from(yi) * z - softplus(z)
        })
        .sum();
    ll / n - 0.5 * l2 * coef.iter().map(|c| c * c).sum::<f64>()
}

/// Gradient of [`objective`], intercept first.
pub fn gradient(x: &[Vec<f64>], y: &[u8], intercept: f64, coef: &[f64], l2: f64) -> Vec<f64> {
    let n = y.len() as f64;
    let mut grad = vec![0.0; coef.len() + 1];
    for (row, &yi) in x.iter().zip(y) {
        let r = f64::from(yi) - sigmoid(linear(row, intercept, coef));
        grad[0] += r;
        for (g, v) in grad[1..].iter_mut().zip(row) {
            *g += r * v;
        }
    }
    for g in &mut grad {
        *g /= n;
    }
    for (g, c) in grad[1..].iter_mut().zip(coef) {
        *g -= l2 * c;
    }
    grad
}

pub fn fit(x: &[Vec<f64>], y: &[u8], params: &LogisticParams) -> LogisticFit {
    let p = x.first().map_or(0, Vec::len);
    let n = y.len() as f64;
    let dim = p + 1;
    let mut theta = vec![0.0; dim];
    let mut current = objective(x, y, 0.0, &theta[1..], params.l2);

    for iteration in 1..=params.max_iterations {
        let grad = gradient(x, y, theta[0], &theta[1..], params.l2);
        // Negative Hessian: X'WX / n + l2 on the coefficient block.
        let mut info = DMatrix::<f64>::zeros(dim, dim);
        for row in x {
            let s = sigmoid(linear(row, theta[0], &theta[1..]));
            let w = s * (1.0 - s) / n;
            for a in 0..dim {
                let xa = if a == 0 { 1.0 } else { row[a - 1] };
                if xa == 0.0 {
                    continue;
                }
                for b in a..dim {
                    let xb = if b == 0 { 1.0 } else { row[b - 1] };
                    info[(a, b)] += w * xa * xb;
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
            if a > 0 {
                info[(a, a)] += params.l2;
            }
        }
        let g = DVector::from_vec(grad.clone());
        let step = match info.clone().cholesky() {
            Some(chol) => chol.solve(&g),
            None => match info.lu().solve(&g) {
                Some(s) => s,
                None => g.clone(),
            },
        };

        // Backtrack until the objective does not decrease.
        let mut scale = 1.0;
        let mut candidate = theta.clone();
        let mut accepted = false;
        for _ in 0..60 {
            for (c, (t, s)) in candidate.iter_mut().zip(theta.iter().zip(step.iter())) {
                *c = t + scale * s;
            }
            let value = objective(x, y, candidate[0], &candidate[1..], params.l2);
            if value >= current {
                current = value;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        let update = if accepted {
            step.iter().map(|s| (scale * s).abs()).fold(0.0, f64::max)
        } else {
            0.0
        };
        if accepted {
            theta = candidate;
        }
        if update < params.tolerance {
            return LogisticFit {
                intercept: theta[0],
                coefficients: theta[1..].to_vec(),
                iterations: iteration,
                converged: true,
            };
        }
    }
    LogisticFit {
        intercept: theta[0],
        coefficients: theta[1..].to_vec(),
        iterations: params.max_iterations,
        converged: false,
    }
}
