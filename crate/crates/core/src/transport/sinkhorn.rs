//! Log-domain Sinkhorn iterations for entropic transport, turned into a
//! certified bracket on the unregularized optimum: the rounded plan is
//! feasible (upper bound) and the double c-transform of the dual potential is
//! dual feasible (lower bound).

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropicBracket {
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    /// L1 deviation of the row marginal at termination.
    pub residual: f64,
}

#[inline]
fn log_sum_exp(values: impl Iterator<Item = f64>, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend(values);
    let max = buf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + buf.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn bracket(
    a: &[f64],
    b: &[f64],
    cost: &[f64],
    epsilon: f64,
    tol: f64,
    max_iter: usize,
) -> Result<EntropicBracket> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = a.len();
    let m = b.len();
    let log_a: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|v| v.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut buf = Vec::with_capacity(n.max(m));
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        for i in 0..n {
            let row = &cost[i * m..(i + 1) * m];
            let lse = log_sum_exp((0..m).map(|j| log_b[j] + (g[j] - row[j]) / epsilon), &mut buf);
            f[i] = -epsilon * lse;
        }
        for j in 0..m {
            let lse = log_sum_exp((0..n).map(|i| log_a[i] + (f[i] - cost[i * m + j]) / epsilon), &mut buf);
            g[j] = -epsilon * lse;
        }
        // columns are exact after the g-update; measure the rows
        if iterations % 10 == 0 || iterations == max_iter {
            residual = 0.0;
            for i in 0..n {
                let row = &cost[i * m..(i + 1) * m];
                let s: f64 = (0..m)
                    .map(|j| a[i] * b[j] * ((f[i] + g[j] - row[j]) / epsilon).exp())
                    .sum();
                residual += (s - a[i]).abs();
            }
            if residual < tol {
                break;
            }
        }
    }
    if residual >= tol {
        return Err(Error::NotConverged { iterations, residual });
    }

    // plan and rounding onto the transport polytope
    let mut plan = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            plan[i * m + j] = a[i] * b[j] * ((f[i] + g[j] - cost[i * m + j]) / epsilon).exp();
        }
    }
    round_to_polytope(a, b, &mut plan);
    let upper: f64 = plan.iter().zip(cost).map(|(p, c)| p * c).sum();

    // double c-transform of g
    let mut fc = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in 0..m {
            fc[i] = fc[i].min(cost[i * m + j] - g[j]);
        }
    }
    let mut gc = vec![f64::INFINITY; m];
    for i in 0..n {
        for j in 0..m {
            gc[j] = gc[j].min(cost[i * m + j] - fc[i]);
        }
    }
    let lower: f64 = a.iter().zip(&fc).map(|(w, v)| w * v).sum::<f64>() + b.iter().zip(&gc).map(|(w, v)| w * v).sum::<f64>();
    Ok(EntropicBracket {
        lower: lower.max(0.0).min(upper),
        upper,
        iterations,
        residual,
    })
}

/// Rounding of a nonnegative matrix onto the couplings of `a` and `b`:
/// scale rows and columns down to fit, then add the rank-one correction.
fn round_to_polytope(a: &[f64], b: &[f64], plan: &mut [f64]) {
    let n = a.len();
    let m = b.len();
    for i in 0..n {
        let s: f64 = plan[i * m..(i + 1) * m].iter().sum();
        if s > a[i] {
            let scale = a[i] / s;
            plan[i * m..(i + 1) * m].iter_mut().for_each(|v| *v *= scale);
        }
    }
    for j in 0..m {
        let s: f64 = (0..n).map(|i| plan[i * m + j]).sum();
        if s > b[j] {
            let scale = b[j] / s;
            (0..n).for_each(|i| plan[i * m + j] *= scale);
        }
    }
    let err_r: Vec<f64> = (0..n)
        .map(|i| (a[i] - plan[i * m..(i + 1) * m].iter().sum::<f64>()).max(0.0))
        .collect();
    let err_c: Vec<f64> = (0..m)
        .map(|j| (b[j] - (0..n).map(|i| plan[i * m + j]).sum::<f64>()).max(0.0))
        .collect();
    let total: f64 = err_r.iter().sum();
    if total > 0.0 {
        for i in 0..n {
            for j in 0..m {
                plan[i * m + j] += err_r[i] * err_c[j] / total;
            }
        }
    }
}
