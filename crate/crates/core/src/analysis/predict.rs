//! Predicted tracked-batch loss from a fitted `⟨Δθ_t, ∇l^b_t⟩` model.
//!
//! `l_1 = l0` and `l_{t+1} = l_t + model(t)`, i.e. the first-order expansion
//! summed from the first step of the epoch.

use alloc::vec::Vec;

use super::fit::{FitModel, FitResult};
use crate::error::invalid;
use crate::Result;

/// Output of [`predict_loss_curve`].
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedCurve {
    /// `values[t - 1]` is the predicted loss at step `t`, for `t = 1..=T`.
    pub values: Vec<f64>,
    /// First step whose model increment is positive: from here on the
    /// constant and `1/(t+d)` terms outweigh the decaying `β₁^t/t` term and the
    /// curve rises. `None` if that never happens within `T` steps.
    pub crossover: Option<usize>,
}

/// Cumulative sum of a fitted `DotDtheta` model starting from `l0`.
pub fn predict_loss_curve(fit: &FitResult, l0: f64, steps: usize) -> Result<PredictedCurve> {
    if fit.model != FitModel::DotDtheta {
        return Err(invalid("fit", "must be a dot_dtheta fit"));
    }
    if steps == 0 {
        return Err(invalid("T", "must be at least 1"));
    }
    let mut values = Vec::with_capacity(steps);
    let mut crossover = None;
    let mut l = l0;
    values.push(l);
    for t in 1..steps {
        let inc = fit.evaluate(t as f64);
        if crossover.is_none() && inc > 0.0 {
            crossover = Some(t);
        }
        l += inc;
        values.push(l);
    }
    if crossover.is_none() && fit.evaluate(steps as f64) > 0.0 {
        crossover = Some(steps);
    }
    Ok(PredictedCurve { values, crossover })
}
