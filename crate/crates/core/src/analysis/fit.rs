//! Fitters for the five intra-epoch dynamics models.
//!
//! | model        | series                         | form                                                |
//! |--------------|--------------------------------|-----------------------------------------------------|
//! | `GNorm`      | `‖g_t‖`                        | `a + b √(1-β₂) t`                                   |
//! | `MNorm`      | `‖m_t‖`                        | `a β₁^t + b √(1-β₂) t + c`                          |
//! | `VNorm`      | `‖v_t‖`                        | `a + b t + c (1-β₂) t²`                             |
//! | `DotM`       | `⟨m_t, ∇l^b_t⟩`                | `a β₁^t + b √(1-β₂) t + c`, `a, b ≥ 0`              |
//! | `DotDtheta`  | `⟨Δθ_t, ∇l^b_t⟩`               | `-a β₁^t / t + b √(1-β₂) + c / (t + d)`, all `≥ 0`  |
//!
//! Every model except `DotDtheta` is linear in its coefficients. `DotDtheta`
//! is fitted by a grid over `d` with a constrained linear fit at each point.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::lsq::{least_squares, nonnegative_least_squares, LsqSolution};
use crate::error::invalid;
use crate::{Error, Result};

/// Which model a fit used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitModel {
    /// Gradient norm, linear in `t`.
    GNorm,
    /// First-moment norm: exponential spike plus linear growth.
    MNorm,
    /// Second-moment norm, quadratic in `t`.
    VNorm,
    /// `⟨m_t, ∇l^b_t⟩` with nonnegative spike and slope.
    DotM,
    /// `⟨Δθ_t, ∇l^b_t⟩`.
    DotDtheta,
}

impl FitModel {
    /// All models.
    pub const ALL: [FitModel; 5] = [
        FitModel::GNorm,
        FitModel::MNorm,
        FitModel::VNorm,
        FitModel::DotM,
        FitModel::DotDtheta,
    ];

    /// Identifier used on the command line and in `fit.csv`.
    pub fn id(&self) -> &'static str {
        match self {
            FitModel::GNorm => "g_norm",
            FitModel::MNorm => "m_norm",
            FitModel::VNorm => "v_norm",
            FitModel::DotM => "dot_m",
            FitModel::DotDtheta => "dot_dtheta",
        }
    }

    /// Trace column the model describes.
    pub fn column(&self) -> &'static str {
        self.id()
    }

    /// Coefficient names in storage order.
    pub fn coefficient_names(&self) -> &'static [&'static str] {
        match self {
            FitModel::GNorm => &["a_g", "b_g"],
            FitModel::MNorm => &["a_m", "b_m", "c_m"],
            FitModel::VNorm => &["a_v", "b_v", "c_v"],
            FitModel::DotM => &["a_mg", "b_mg", "c_mg"],
            FitModel::DotDtheta => &["a_xg", "b_xg", "c_xg", "d_xg"],
        }
    }
}

impl fmt::Display for FitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for FitModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        FitModel::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or(invalid("model", "expected g_norm | m_norm | v_norm | dot_m | dot_dtheta"))
    }
}

/// Something the fitter had to work around.
#[derive(Debug, Clone, PartialEq)]
pub enum FitNotice {
    /// A basis column vanished or was collinear; its coefficient is reported as 0.
    Degenerate {
        /// Name of the dropped coefficient.
        coefficient: &'static str,
    },
    /// A sign constraint was active; the listed coefficients were clamped to 0.
    ConstraintActive {
        /// Names of clamped coefficients.
        coefficients: Vec<&'static str>,
    },
    /// `β₂ = 1`, so `b_xg` is reported as the raw intercept `b √(1-β₂)`.
    RawIntercept,
    /// Every grid point was degenerate; the best unconstrained fit is reported.
    GridDegenerate,
}

impl fmt::Display for FitNotice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitNotice::Degenerate { coefficient } => write!(f, "degenerate basis: {coefficient} fixed at 0"),
            FitNotice::ConstraintActive { coefficients } => {
                f.write_str("constraint active:")?;
                for c in coefficients {
                    write!(f, " {c}")?;
                }
                f.write_str(" clamped to 0")
            }
            FitNotice::RawIntercept => f.write_str("beta2 = 1: b_xg reported as raw intercept"),
            FitNotice::GridDegenerate => f.write_str("all grid points degenerate: unconstrained best reported"),
        }
    }
}

/// Fitted coefficients and quality of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Model.
    pub model: FitModel,
    /// Coefficients in [`FitModel::coefficient_names`] order.
    pub coeffs: Vec<f64>,
    /// Coefficient of determination; 1 for an exact fit of a constant series.
    pub r_squared: f64,
    /// Euclidean norm of the residual.
    pub residual_norm: f64,
    /// `β₁` used to build the basis.
    pub beta1: f64,
    /// `β₂` used to build the basis.
    pub beta2: f64,
    /// Smallest and largest `t` fitted.
    pub t_range: (f64, f64),
    /// Workarounds applied.
    pub notices: Vec<FitNotice>,
}

impl FitResult {
    /// Coefficient by name.
    pub fn coeff(&self, name: &str) -> Option<f64> {
        self.model
            .coefficient_names()
            .iter()
            .position(|n| *n == name)
            .map(|k| self.coeffs[k])
    }

    /// Model value at `t`.
    pub fn evaluate(&self, t: f64) -> f64 {
        let s2 = libm::sqrt(1.0 - self.beta2);
        let c = &self.coeffs;
        match self.model {
            FitModel::GNorm => c[0] + c[1] * s2 * t,
            FitModel::MNorm | FitModel::DotM => c[0] * libm::pow(self.beta1, t) + c[1] * s2 * t + c[2],
            FitModel::VNorm => c[0] + c[1] * t + c[2] * (1.0 - self.beta2) * t * t,
            FitModel::DotDtheta => {
                -c[0] * libm::pow(self.beta1, t) / t + self.intercept() + c[2] / (t + c[3])
            }
        }
    }

    /// For `DotDtheta`, the constant term `b √(1-β₂)` (or the raw intercept when `β₂ = 1`).
    pub fn intercept(&self) -> f64 {
        if self.model != FitModel::DotDtheta {
            return 0.0;
        }
        if self.notices.contains(&FitNotice::RawIntercept) {
            self.coeffs[1]
        } else {
            self.coeffs[1] * libm::sqrt(1.0 - self.beta2)
        }
    }

    /// Human-readable notices joined with `"; "`.
    pub fn notice_text(&self) -> String {
        let mut s = String::new();
        for (k, n) in self.notices.iter().enumerate() {
            if k > 0 {
                s.push_str("; ");
            }
            fmt::write(&mut s, format_args!("{n}")).ok();
        }
        s
    }
}

fn check_betas(beta1: f64, beta2: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta1) {
        return Err(invalid("beta1", "must lie in [0, 1]"));
    }
    if !(0.0..=1.0).contains(&beta2) {
        return Err(invalid("beta2", "must lie in [0, 1]"));
    }
    Ok(())
}

fn check_series(series: &[(f64, f64)], needed: usize, min_t: f64) -> Result<()> {
    if series.len() < needed {
        return Err(Error::TooFewPoints {
            needed,
            got: series.len(),
        });
    }
    for (k, &(t, y)) in series.iter().enumerate() {
        if !t.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite { index: k });
        }
        if t < min_t {
            return Err(invalid("t", "below the model's domain"));
        }
    }
    Ok(())
}

fn r_squared(y: &[f64], residual_norm: f64) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res = residual_norm * residual_norm;
    if ss_tot == 0.0 {
        if ss_res <= 1e-24 * y.iter().map(|v| v * v).sum::<f64>().max(1.0) {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

fn t_range(series: &[(f64, f64)]) -> (f64, f64) {
    series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(t, _)| (lo.min(t), hi.max(t)))
}

fn column(series: &[(f64, f64)], f: impl Fn(f64) -> f64) -> Vec<f64> {
    series.iter().map(|&(t, _)| f(t)).collect()
}

fn finish(
    model: FitModel,
    series: &[(f64, f64)],
    sol: LsqSolution,
    beta1: f64,
    beta2: f64,
    mut notices: Vec<FitNotice>,
) -> FitResult {
    let names = model.coefficient_names();
    for &j in &sol.dropped {
        notices.insert(0, FitNotice::Degenerate { coefficient: names[j] });
    }
    let y: Vec<f64> = series.iter().map(|p| p.1).collect();
    FitResult {
        model,
        r_squared: r_squared(&y, sol.residual_norm),
        residual_norm: sol.residual_norm,
        coeffs: sol.coeffs,
        beta1,
        beta2,
        t_range: t_range(series),
        notices,
    }
}

/// `‖g_t‖ ≈ a_g + b_g √(1-β₂) t`.
pub fn fit_g_norm(series: &[(f64, f64)], beta2: f64) -> Result<FitResult> {
    check_betas(0.0, beta2)?;
    check_series(series, 3, 1.0)?;
    let s2 = libm::sqrt(1.0 - beta2);
    let cols = [column(series, |_| 1.0), column(series, |t| s2 * t)];
    let y: Vec<f64> = series.iter().map(|p| p.1).collect();
    let sol = least_squares(&cols, &y);
    Ok(finish(FitModel::GNorm, series, sol, f64::NAN, beta2, Vec::new()))
}

/// `‖m_t‖ ≈ a_m β₁^t + b_m √(1-β₂) t + c_m`.
pub fn fit_m_norm(series: &[(f64, f64)], beta1: f64, beta2: f64) -> Result<FitResult> {
    check_betas(beta1, beta2)?;
    check_series(series, 3, 0.0)?;
    let s2 = libm::sqrt(1.0 - beta2);
    let cols = [
        column(series, |t| libm::pow(beta1, t)),
        column(series, |t| s2 * t),
        column(series, |_| 1.0),
    ];
    let y: Vec<f64> = series.iter().map(|p| p.1).collect();
    let sol = least_squares(&cols, &y);
    Ok(finish(FitModel::MNorm, series, sol, beta1, beta2, Vec::new()))
}

/// `‖v_t‖ ≈ a_v + b_v t + c_v (1-β₂) t²`.
pub fn fit_v_norm(series: &[(f64, f64)], beta2: f64) -> Result<FitResult> {
    check_betas(0.0, beta2)?;
    check_series(series, 3, 0.0)?;
    let q = 1.0 - beta2;
    let cols = [
        column(series, |_| 1.0),
        column(series, |t| t),
        column(series, |t| q * t * t),
    ];
    let y: Vec<f64> = series.iter().map(|p| p.1).collect();
    let sol = least_squares(&cols, &y);
    Ok(finish(FitModel::VNorm, series, sol, f64::NAN, beta2, Vec::new()))
}

/// `⟨m_t, ∇l^b_t⟩ ≈ a_mg β₁^t + b_mg √(1-β₂) t + c_mg` with `a_mg, b_mg ≥ 0`.
pub fn fit_dot_m(series: &[(f64, f64)], beta1: f64, beta2: f64) -> Result<FitResult> {
    check_betas(beta1, beta2)?;
    check_series(series, 3, 0.0)?;
    let s2 = libm::sqrt(1.0 - beta2);
    let cols = [
        column(series, |t| libm::pow(beta1, t)),
        column(series, |t| s2 * t),
        column(series, |_| 1.0),
    ];
    let y: Vec<f64> = series.iter().map(|p| p.1).collect();
    let (sol, active) = nonnegative_least_squares(&cols, &y, &[0, 1]);
    let mut notices = Vec::new();
    if active {
        let names = FitModel::DotM.coefficient_names();
        let clamped: Vec<&'static str> = [0, 1]
            .into_iter()
            .filter(|&j| sol.coeffs[j] == 0.0 && !sol.dropped.contains(&j))
            .map(|j| names[j])
            .collect();
        if !clamped.is_empty() {
            notices.push(FitNotice::ConstraintActive { coefficients: clamped });
        }
    }
    Ok(finish(FitModel::DotM, series, sol, beta1, beta2, notices))
}

/// Grid of `d_xg` values searched by [`fit_dot_dtheta_with_grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DGrid {
    /// First grid value.
    pub start: f64,
    /// Last grid value (inclusive).
    pub stop: f64,
    /// Spacing.
    pub step: f64,
}

impl Default for DGrid {
    /// `0, 0.5, ..., 100`.
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: 100.0,
            step: 0.5,
        }
    }
}

impl DGrid {
    fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.stop >= self.start) || self.start < 0.0 {
            return Err(invalid("d_grid", "need 0 <= start <= stop and step > 0"));
        }
        let n = libm::floor((self.stop - self.start) / self.step + 1e-9) as usize;
        Ok((0..=n).map(|k| self.start + k as f64 * self.step).collect())
    }
}

/// [`fit_dot_dtheta_with_grid`] over the default grid.
pub fn fit_dot_dtheta(series: &[(f64, f64)], beta1: f64, beta2: f64) -> Result<FitResult> {
    fit_dot_dtheta_with_grid(series, beta1, beta2, DGrid::default())
}

/// `⟨Δθ_t, ∇l^b_t⟩ ≈ -a β₁^t / t + b √(1-β₂) + c / (t + d)` with all
/// coefficients nonnegative.
///
/// For each `d` on the grid the three remaining coefficients come from a
/// nonnegative linear fit over `{-β₁^t/t, 1, 1/(t+d)}`; the grid point with the
/// smallest residual wins (earliest on ties).
pub fn fit_dot_dtheta_with_grid(series: &[(f64, f64)], beta1: f64, beta2: f64, grid: DGrid) -> Result<FitResult> {
    check_betas(beta1, beta2)?;
    check_series(series, 4, 1.0)?;
    let y: Vec<f64> = series.iter().map(|p| p.1).collect();
    let exp_col = column(series, |t| -libm::pow(beta1, t) / t);
    let ones = column(series, |_| 1.0);

    struct Best {
        d: f64,
        sol: LsqSolution,
        active: bool,
    }
    let mut best: Option<Best> = None;
    let mut best_uncon: Option<(f64, LsqSolution)> = None;
    for d in grid.points()? {
        let cols = [exp_col.clone(), ones.clone(), column(series, |t| 1.0 / (t + d))];
        let uncon = least_squares(&cols, &y);
        if best_uncon.as_ref().is_none_or(|(_, b)| uncon.residual_norm < b.residual_norm) {
            best_uncon = Some((d, uncon.clone()));
        }
        if !uncon.dropped.is_empty() {
            continue;
        }
        let (sol, active) = nonnegative_least_squares(&cols, &y, &[0, 1, 2]);
        if best.as_ref().is_none_or(|b| sol.residual_norm < b.sol.residual_norm) {
            best = Some(Best { d, sol, active });
        }
    }

    let mut notices = Vec::new();
    let (d, mut sol) = match best {
        Some(b) => {
            if b.active {
                let names = FitModel::DotDtheta.coefficient_names();
                let clamped: Vec<&'static str> =
                    (0..3).filter(|&j| b.sol.coeffs[j] == 0.0).map(|j| names[j]).collect();
                if !clamped.is_empty() {
                    notices.push(FitNotice::ConstraintActive { coefficients: clamped });
                }
            }
            (b.d, b.sol)
        }
        None => {
            notices.push(FitNotice::GridDegenerate);
            best_uncon.expect("grid has at least one point")
        }
    };
    let s2 = libm::sqrt(1.0 - beta2);
    if s2 > 0.0 {
        sol.coeffs[1] /= s2;
    } else {
        notices.push(FitNotice::RawIntercept);
    }
    sol.coeffs.push(d);
    Ok(finish(FitModel::DotDtheta, series, sol, beta1, beta2, notices))
}

/// Dispatch on `model`.
pub fn fit_model(model: FitModel, series: &[(f64, f64)], beta1: f64, beta2: f64) -> Result<FitResult> {
    match model {
        FitModel::GNorm => fit_g_norm(series, beta2),
        FitModel::MNorm => fit_m_norm(series, beta1, beta2),
        FitModel::VNorm => fit_v_norm(series, beta2),
        FitModel::DotM => fit_dot_m(series, beta1, beta2),
        FitModel::DotDtheta => fit_dot_dtheta(series, beta1, beta2),
    }
}
