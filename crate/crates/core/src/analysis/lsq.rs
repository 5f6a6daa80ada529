//! Small dense least squares: modified Gram-Schmidt with one
//! reorthogonalization pass, and an exact nonnegative variant for a handful of
//! constrained columns.

use alloc::vec;
use alloc::vec::Vec;

/// Solution of `min ||X c - y||`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsqSolution {
    /// One coefficient per column; dropped columns get 0.
    pub coeffs: Vec<f64>,
    /// `||X c - y||`.
    pub residual_norm: f64,
    /// Columns removed because they were (numerically) in the span of the
    /// preceding ones.
    pub dropped: Vec<usize>,
}

/// Relative size below which an orthogonalized column counts as dependent.
const RANK_TOL: f64 = 1e-10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ordinary least squares over `columns` (each of length `y.len()`).
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> LsqSolution {
    let n = y.len();
    let k = columns.len();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
    // r[i][j] for kept columns, upper triangular in kept order.
    let mut r = vec![vec![0.0; k]; k];
    let mut kept: Vec<usize> = Vec::with_capacity(k);
    let mut dropped = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        debug_assert_eq!(col.len(), n);
        let original = libm::sqrt(dot(col, col));
        let mut w = col.clone();
        let mut coef = vec![0.0; q.len()];
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let p = dot(qi, &w);
                coef[i] += p;
                for (wk, qk) in w.iter_mut().zip(qi) {
                    *wk -= p * qk;
                }
            }
        }
        let len = libm::sqrt(dot(&w, &w));
        if original == 0.0 || len <= RANK_TOL * original {
            dropped.push(j);
            continue;
        }
        let row = kept.len();
        for (i, c) in coef.iter().enumerate() {
            r[i][row] = *c;
        }
        r[row][row] = len;
        for wk in &mut w {
            *wk /= len;
        }
        q.push(w);
        kept.push(j);
    }
    // Solve R c = Q^T y (two passes on the projection for accuracy).
    let m = kept.len();
    let mut resid = y.to_vec();
    let mut qty = vec![0.0; m];
    for _ in 0..2 {
        for (i, qi) in q.iter().enumerate() {
            let p = dot(qi, &resid);
            qty[i] += p;
            for (rk, qk) in resid.iter_mut().zip(qi) {
                *rk -= p * qk;
            }
        }
    }
    let mut sol = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = qty[i];
        for jj in i + 1..m {
            s -= r[i][jj] * sol[jj];
        }
        sol[i] = s / r[i][i];
    }
    let mut coeffs = vec![0.0; k];
    for (pos, &j) in kept.iter().enumerate() {
        coeffs[j] = sol[pos];
    }
    let residual_norm = residual(columns, &coeffs, y);
    LsqSolution {
        coeffs,
        residual_norm,
        dropped,
    }
}

pub(crate) fn residual(columns: &[Vec<f64>], coeffs: &[f64], y: &[f64]) -> f64 {
    let mut ss = 0.0;
    for (t, &yt) in y.iter().enumerate() {
        let fit: f64 = columns.iter().zip(coeffs).map(|(c, a)| c[t] * a).sum();
        ss += (yt - fit) * (yt - fit);
    }
    libm::sqrt(ss)
}

/// Least squares with `coeffs[j] >= 0` for every `j` in `constrained`.
///
/// Enumerates which constrained columns are clamped to zero and keeps the
/// feasible refit with the smallest residual; this is the exact optimum of the
/// convex problem, and cheap for the two or three constraints used here.
/// Returns the solution and whether any constraint is active.
pub fn nonnegative_least_squares(columns: &[Vec<f64>], y: &[f64], constrained: &[usize]) -> (LsqSolution, bool) {
    assert!(constrained.len() <= 16, "subset enumeration is exponential");
    let unconstrained = least_squares(columns, y);
    if constrained.iter().all(|&j| unconstrained.coeffs[j] >= 0.0) {
        return (unconstrained, false);
    }
    let mut best: Option<LsqSolution> = None;
    for mask in 1u32..(1 << constrained.len()) {
        let zeroed: Vec<usize> = constrained
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask & (1 << bit) != 0)
            .map(|(_, &j)| j)
            .collect();
        let keep: Vec<usize> = (0..columns.len()).filter(|j| !zeroed.contains(j)).collect();
        let sub: Vec<Vec<f64>> = keep.iter().map(|&j| columns[j].clone()).collect();
        let s = least_squares(&sub, y);
        let mut coeffs = vec![0.0; columns.len()];
        for (pos, &j) in keep.iter().enumerate() {
            coeffs[j] = s.coeffs[pos];
        }
        if constrained.iter().any(|&j| coeffs[j] < 0.0) {
            continue;
        }
        let dropped = s.dropped.iter().map(|&p| keep[p]).collect();
        let cand = LsqSolution {
            residual_norm: residual(columns, &coeffs, y),
            coeffs,
            dropped,
        };
        if best.as_ref().is_none_or(|b| cand.residual_norm < b.residual_norm) {
            best = Some(cand);
        }
    }
    // The all-zero mask of constrained columns leaves only free columns, so at
    // least one candidate exists unless every column is constrained, in which
    // case the empty model (all zero) is feasible.
    let sol = best.unwrap_or_else(|| LsqSolution {
        coeffs: vec![0.0; columns.len()],
        residual_norm: libm::sqrt(dot(y, y)),
        dropped: Vec::new(),
    });
    (sol, true)
}
