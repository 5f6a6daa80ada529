//! Cosine similarity between a batch gradient and the update
//! `Δθ(β₂) = -m̂ / √(β₂ v_prev + (1-β₂) g²)` as `β₂` sweeps `[0, 1]`.

use alloc::vec::Vec;

use crate::error::invalid;
use crate::vecmath::{dot, norm};
use crate::{Error, Result};

/// The four vectors of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct NShapeInput {
    /// Gradient of the tracked batch.
    pub grad_l_b: Vec<f64>,
    /// Bias-corrected first moment.
    pub m_hat: Vec<f64>,
    /// Second moment before the current step.
    pub v_prev: Vec<f64>,
    /// Squared current gradient.
    pub g_squared: Vec<f64>,
}

/// The three-dimensional example whose similarity curve is n-shaped.
pub fn reference_vectors() -> NShapeInput {
    NShapeInput {
        grad_l_b: alloc::vec![2.0, 1.0, 2.0],
        m_hat: alloc::vec![-8.0, 1.0, 2.0],
        v_prev: alloc::vec![1.0, 0.0001, 1.0],
        g_squared: alloc::vec![1.0, 1.0, 0.0001],
    }
}

/// `0, 1/steps, ..., 1`.
pub fn unit_grid(steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps).map(|k| k as f64 / steps as f64).collect()
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct NShapePoint {
    /// `β₂`.
    pub beta2: f64,
    /// `cos(∇l^b, Δθ(β₂))`.
    pub cosine: f64,
    /// `⟨∇l^b, Δθ(β₂)⟩`.
    pub dot: f64,
    /// `Δθ(β₂)`.
    pub delta_theta: Vec<f64>,
}

/// Result of [`nshape_sweep`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NShapeSweep {
    /// Evaluated points, in grid order.
    pub points: Vec<NShapePoint>,
    /// Grid values skipped because a denominator component was zero (or the
    /// update or gradient vanished, leaving the cosine undefined).
    pub skipped: Vec<f64>,
}

/// Evaluate the sweep over `betas` (each in `[0, 1]`).
pub fn nshape_sweep(input: &NShapeInput, betas: &[f64]) -> Result<NShapeSweep> {
    let n = input.grad_l_b.len();
    for v in [&input.m_hat, &input.v_prev, &input.g_squared] {
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
    }
    for v in [&input.grad_l_b, &input.m_hat, &input.v_prev, &input.g_squared] {
        if let Some(index) = crate::vecmath::first_non_finite(v) {
            return Err(Error::NonFinite { index });
        }
    }
    if input.v_prev.iter().chain(&input.g_squared).any(|&x| x < 0.0) {
        return Err(invalid("second moments", "must be componentwise nonnegative"));
    }
    if betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(invalid("beta2", "grid values must lie in [0, 1]"));
    }
    let grad_norm = norm(&input.grad_l_b);
    let mut out = NShapeSweep::default();
    for &beta2 in betas {
        let mut delta = Vec::with_capacity(n);
        let mut ok = true;
        for i in 0..n {
            let denom = libm::sqrt(beta2 * input.v_prev[i] + (1.0 - beta2) * input.g_squared[i]);
            if denom == 0.0 {
                ok = false;
                break;
            }
            delta.push(-input.m_hat[i] / denom);
        }
        let dnorm = if ok { norm(&delta) } else { 0.0 };
        if !ok || dnorm == 0.0 || grad_norm == 0.0 {
            out.skipped.push(beta2);
            continue;
        }
        let d = dot(&input.grad_l_b, &delta);
        out.points.push(NShapePoint {
            beta2,
            cosine: d / (grad_norm * dnorm),
            dot: d,
            delta_theta: delta,
        });
    }
    Ok(out)
}
