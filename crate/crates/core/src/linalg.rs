//! Small dense least-squares solvers.
//!
//! [`lstsq`] uses Householder QR with column pivoting on the largest remaining
//! column norm (Businger–Golub), so rank-deficient systems get a basic
//! solution with zeros in the dependent coordinates instead of blowing up.
//! [`nnls`] is the Lawson–Hanson active-set method; among equally attractive
//! variables the lowest index enters first, which keeps results reproducible.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub rank: usize,
}

fn check_shape(a: &DMatrix<f64>, b: &[f64]) -> Result<()> {
    if a.nrows() != b.len() {
        return Err(invalid(format!(
            "matrix has {} rows but right-hand side has {} entries",
            a.nrows(),
            b.len()
        )));
    }
    if a.ncols() == 0 {
        return Err(invalid("matrix has no columns"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(invalid("least-squares inputs must be finite"));
    }
    Ok(())
}

pub fn residual_norm(a: &DMatrix<f64>, x: &[f64], b: &[f64]) -> f64 {
    (0..a.nrows())
        .map(|i| {
            let ax: f64 = (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum();
            (b[i] - ax).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Minimises `||A x - b||` by pivoted QR.
pub fn lstsq(a: &DMatrix<f64>, b: &[f64]) -> Result<LeastSquares> {
    check_shape(a, b)?;
    let (m, n) = a.shape();
    let mut r = a.clone();
    let mut qtb = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let steps = m.min(n);
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE) * (m.max(n) as f64);
    let mut rank = 0;

    for k in 0..steps {
        let col_norm = |r: &DMatrix<f64>, j: usize| (k..m).map(|i| r[(i, j)].powi(2)).sum::<f64>();
        let mut best = k;
        let mut best_norm = col_norm(&r, k);
        for j in k + 1..n {
            let nj = col_norm(&r, j);
            if nj > best_norm {
                best = j;
                best_norm = nj;
            }
        }
        if best_norm.sqrt() <= tol {
            break;
        }
        r.swap_columns(k, best);
        perm.swap(k, best);

        let norm = best_norm.sqrt();
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv > 0.0 {
            for j in k..n {
                let dot: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum();
                let f = 2.0 * dot / vtv;
                for i in k..m {
                    r[(i, j)] -= f * v[i - k];
                }
            }
            let dot: f64 = (k..m).map(|i| v[i - k] * qtb[i]).sum();
            let f = 2.0 * dot / vtv;
            for i in k..m {
                qtb[i] -= f * v[i - k];
            }
        }
        rank += 1;
    }

    let mut z = vec![0.0; n];
    for i in (0..rank).rev() {
        let s: f64 = (i + 1..rank).map(|j| r[(i, j)] * z[j]).sum();
        z[i] = (qtb[i] - s) / r[(i, i)];
    }
    let mut x = vec![0.0; n];
    for (i, &p) in perm.iter().enumerate() {
        x[p] = z[i];
    }
    let residual_norm = residual_norm(a, &x, b);
    Ok(LeastSquares {
        x,
        residual_norm,
        rank,
    })
}

/// Minimises `||A x - b||` subject to `x >= 0` (Lawson–Hanson).
pub fn nnls(a: &DMatrix<f64>, b: &[f64]) -> Result<LeastSquares> {
    check_shape(a, b)?;
    let (m, n) = a.shape();
    let scale = a.iter().chain(b).fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE) * (m.max(n) as f64);
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];

    let gradient = |x: &[f64]| -> Vec<f64> {
        let resid: Vec<f64> = (0..m)
            .map(|i| b[i] - (0..n).map(|j| a[(i, j)] * x[j]).sum::<f64>())
            .collect();
        (0..n)
            .map(|j| (0..m).map(|i| a[(i, j)] * resid[i]).sum())
            .collect()
    };

    for _outer in 0..3 * n + 3 {
        let w = gradient(&x);
        let mut entering: Option<usize> = None;
        for j in 0..n {
            if !passive[j] && w[j] > tol && entering.is_none_or(|e| w[j] > w[e]) {
                entering = Some(j);
            }
        }
        let Some(j) = entering else { break };
        passive[j] = true;

        for _inner in 0..3 * n + 3 {
            let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let sub = DMatrix::from_fn(m, cols.len(), |i, c| a[(i, cols[c])]);
            let s = lstsq(&sub, b)?.x;
            if s.iter().all(|&v| v > tol) {
                x.iter_mut().for_each(|v| *v = 0.0);
                for (c, &j) in cols.iter().enumerate() {
                    x[j] = s[c];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (c, &j) in cols.iter().enumerate() {
                if s[c] <= tol {
                    let step = x[j] / (x[j] - s[c]);
                    if step < alpha {
                        alpha = step;
                    }
                }
            }
            for (c, &j) in cols.iter().enumerate() {
                x[j] += alpha * (s[c] - x[j]);
            }
            for &j in &cols {
                if x[j] <= tol {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
        }
    }
    let residual_norm = residual_norm(a, &x, b);
    let rank = passive.iter().filter(|p| **p).count();
    Ok(LeastSquares {
        x,
        residual_norm,
        rank,
    })
}

/// Ratio of the largest to the smallest singular value (infinite when singular).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(0.0f64, |m, v| m.max(*v));
    let min = sv.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}
