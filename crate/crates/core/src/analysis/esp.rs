//! Per-epoch sawtooth metrics.
//!
//! With `L_start(e)` and `L_end(e)` the mean batch loss over the first and
//! last `w` steps of epoch `e`:
//!
//! * rise `R_e = L_end(e) - L_start(e)`
//! * drop `D_e = L_end(e) - L_start(e+1)`
//! * normalized amplitude `A_e = D_e / max(|L_end(e)|, 1e-12)`
//!
//! Concavity is the quadratic coefficient of a degree-2 fit of the trailing
//! `w`-step average over the epoch, with time rescaled to `[0, 1]`.

use alloc::vec::Vec;
use core::fmt;

use super::lsq::least_squares;
use crate::error::invalid;
use crate::trainer::StepTrace;
use crate::{Error, Result};

const DELTA: f64 = 1e-12;

/// Metrics of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochEsp {
    /// 1-based epoch.
    pub epoch: usize,
    /// Number of steps in the epoch.
    pub steps: usize,
    /// Mean of the first `w` batch losses.
    pub l_start: f64,
    /// Mean of the last `w` batch losses.
    pub l_end: f64,
    /// `L_end - L_start`.
    pub rise: f64,
    /// `L_end(e) - L_start(e+1)`; `None` when the next epoch is missing or omitted.
    pub drop: Option<f64>,
    /// `D_e / max(|L_end|, δ)`.
    pub amplitude: Option<f64>,
    /// Quadratic coefficient of the intra-epoch fit; negative means concave.
    pub concavity: f64,
}

impl EpochEsp {
    /// `-1`, `0` or `1`. Coefficients within `1e-9` of the epoch's loss scale count as zero.
    pub fn concavity_sign(&self) -> i8 {
        let scale = self.l_start.abs().max(self.l_end.abs()).max(DELTA);
        if !self.concavity.is_finite() || self.concavity.abs() <= 1e-9 * scale {
            0
        } else if self.concavity > 0.0 {
            1
        } else {
            -1
        }
    }
}

/// Something [`esp_metrics`] skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EspNotice {
    /// The epoch had fewer than `2w` steps.
    EpochTooShort {
        /// 1-based epoch.
        epoch: usize,
        /// Steps it had.
        steps: usize,
    },
}

impl fmt::Display for EspNotice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EspNotice::EpochTooShort { epoch, steps } => {
                write!(f, "epoch {epoch} omitted: {steps} steps is fewer than twice the window")
            }
        }
    }
}

/// Metrics for every epoch long enough for the window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EspReport {
    /// Window `w` used.
    pub window: usize,
    /// Epochs in increasing order.
    pub epochs: Vec<EpochEsp>,
    /// Epochs omitted.
    pub notices: Vec<EspNotice>,
}

impl EspReport {
    /// Metrics for epoch `e`, if present.
    pub fn epoch(&self, e: usize) -> Option<&EpochEsp> {
        self.epochs.iter().find(|m| m.epoch == e)
    }

    fn mean_of(&self, lo: usize, hi: usize, f: impl Fn(&EpochEsp) -> Option<f64>) -> Option<f64> {
        let vals: Vec<f64> = self
            .epochs
            .iter()
            .filter(|m| (lo..=hi).contains(&m.epoch))
            .filter_map(f)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }

    /// Mean `D_e` over epochs `lo..=hi` that have a drop.
    pub fn mean_drop(&self, lo: usize, hi: usize) -> Option<f64> {
        self.mean_of(lo, hi, |m| m.drop)
    }

    /// Mean `|D_e|` over epochs `lo..=hi`.
    pub fn mean_abs_drop(&self, lo: usize, hi: usize) -> Option<f64> {
        self.mean_of(lo, hi, |m| m.drop.map(f64::abs))
    }

    /// Mean `A_e` over epochs `lo..=hi`.
    pub fn mean_amplitude(&self, lo: usize, hi: usize) -> Option<f64> {
        self.mean_of(lo, hi, |m| m.amplitude)
    }
}

/// 5% of the epoch length, rounded, at least 1.
pub fn default_window(batches_per_epoch: usize) -> usize {
    (libm::round(batches_per_epoch as f64 * 0.05) as usize).max(1)
}

/// Trailing mean: element `k` averages `losses[k+1-w ..= k]`, clipped at the start.
pub fn window_average(losses: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(losses.len());
    let mut sum = 0.0;
    for (k, &x) in losses.iter().enumerate() {
        sum += x;
        if k >= w {
            sum -= losses[k - w];
        }
        out.push(sum / (k + 1).min(w) as f64);
    }
    out
}

/// Metrics from a step trace. Rows are grouped by `epoch`, in trace order.
pub fn esp_metrics(trace: &[StepTrace], window: usize) -> Result<EspReport> {
    let mut epochs: Vec<(usize, Vec<f64>)> = Vec::new();
    for row in trace {
        match epochs.last_mut() {
            Some((e, losses)) if *e == row.epoch => losses.push(row.batch_loss),
            _ => epochs.push((row.epoch, alloc::vec![row.batch_loss])),
        }
    }
    esp_metrics_from_epochs(&epochs, window)
}

/// Metrics from `(epoch, batch losses)` groups with consecutive epoch numbers.
pub fn esp_metrics_from_epochs(epochs: &[(usize, Vec<f64>)], window: usize) -> Result<EspReport> {
    if window == 0 {
        return Err(invalid("window", "must be at least 1"));
    }
    if epochs.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: epochs.len() });
    }
    if epochs.windows(2).any(|p| p[1].0 != p[0].0 + 1) {
        return Err(invalid("epochs", "must be consecutive"));
    }
    let w = window;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let start_of = |losses: &Vec<f64>| (losses.len() >= 2 * w).then(|| mean(&losses[..w]));

    let mut report = EspReport { window: w, ..Default::default() };
    for (k, (epoch, losses)) in epochs.iter().enumerate() {
        let Some(l_start) = start_of(losses) else {
            report.notices.push(EspNotice::EpochTooShort { epoch: *epoch, steps: losses.len() });
            continue;
        };
        let l_end = mean(&losses[losses.len() - w..]);
        let drop = epochs.get(k + 1).and_then(|(_, next)| start_of(next)).map(|s| l_end - s);
        report.epochs.push(EpochEsp {
            epoch: *epoch,
            steps: losses.len(),
            l_start,
            l_end,
            rise: l_end - l_start,
            drop,
            amplitude: drop.map(|d| d / l_end.abs().max(DELTA)),
            concavity: concavity(&window_average(losses, w)),
        });
    }
    Ok(report)
}

fn concavity(smoothed: &[f64]) -> f64 {
    let n = smoothed.len();
    if n < 3 {
        return 0.0;
    }
    let s: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
    let cols = [alloc::vec![1.0; n], s.clone(), s.iter().map(|x| x * x).collect()];
    least_squares(&cols, smoothed).coeffs[2]
}
