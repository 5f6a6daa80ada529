//! Adam, RMSProp and SGD with momentum, written out so that every moment is
//! observable from the outside.
//!
//! All state is `f64`. The step counter is global for the life of a run and is
//! never reset at epoch boundaries, so bias correction decays to the identity
//! after the first few thousand steps.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::invalid;
use crate::vecmath::first_non_finite;
use crate::{Error, Result};

/// Hyperparameters shared by Adam and RMSProp.
///
/// RMSProp ignores `beta1` and `bias_correction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    /// Step size.
    pub lr: f64,
    /// First-moment decay, in `[0, 1)`.
    pub beta1: f64,
    /// Second-moment decay, in `[0, 1)`.
    pub beta2: f64,
    /// Added to the square root of the second moment.
    pub epsilon: f64,
    /// Coupled L2 coefficient: `weight_decay * theta` is added to the gradient
    /// before the moment updates.
    pub weight_decay: f64,
    /// Divide the moments by `1 - beta^t`.
    pub bias_correction: bool,
}

impl Default for AdamConfig {
    /// The quadratic-testbed reference setting: `lr = 0.06`, betas
    /// `(0.9, 0.999)`, `epsilon = 1e-8`, bias correction on.
    fn default() -> Self {
        Self {
            lr: 0.06,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            bias_correction: true,
        }
    }
}

impl AdamConfig {
    /// Config with the given step size and betas, `epsilon = 1e-8`.
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            ..Self::default()
        }
    }

    /// Replace `epsilon`.
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Replace `weight_decay`.
    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    /// Turn bias correction on or off.
    pub fn with_bias_correction(mut self, on: bool) -> Self {
        self.bias_correction = on;
        self
    }

    /// Check the admissible ranges.
    ///
    /// `epsilon = 0` is accepted so closed-form checks can run without the
    /// stabilizer.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid("lr", "must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(invalid("beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("beta2", "must lie in [0, 1)"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon", "must be nonnegative and finite"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(invalid("weight_decay", "must be nonnegative and finite"));
        }
        Ok(())
    }
}

/// Mutable moment state owned by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl OptimizerState {
    /// Zeroed state for `dim` parameters.
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// First moment.
    pub fn m(&self) -> &[f64] {
        &self.m
    }

    /// Second moment (componentwise nonnegative).
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// Number of updates applied so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Parameter dimension.
    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

/// What one optimizer step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateResult {
    /// The parameter change to add to theta.
    pub delta_theta: Vec<f64>,
    /// First moment after any bias correction (zero for RMSProp).
    pub m_hat: Vec<f64>,
    /// Second moment after any bias correction (zero for momentum SGD).
    pub v_hat: Vec<f64>,
}

impl UpdateResult {
    /// Zeroed buffers of length `dim`, for use with the `*_into` steps.
    pub fn zeros(dim: usize) -> Self {
        Self {
            delta_theta: vec![0.0; dim],
            m_hat: vec![0.0; dim],
            v_hat: vec![0.0; dim],
        }
    }

    fn resize(&mut self, dim: usize) {
        self.delta_theta.resize(dim, 0.0);
        self.m_hat.resize(dim, 0.0);
        self.v_hat.resize(dim, 0.0);
    }
}

fn check_inputs(state: &OptimizerState, grad: &[f64], params: Option<&[f64]>) -> Result<()> {
    let dim = state.dim();
    if grad.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: grad.len(),
        });
    }
    if let Some(index) = first_non_finite(grad) {
        return Err(Error::NonFinite { index });
    }
    if let Some(p) = params {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
    }
    Ok(())
}

/// Subnormal moments (from long-unvisited coordinates) become zero.
#[inline(always)]
fn flush(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

fn effective_grad(g: f64, params: &[f64], i: usize, weight_decay: f64) -> f64 {
    if weight_decay > 0.0 {
        g + weight_decay * params[i]
    } else {
        g
    }
}

/// One Adam update.
///
/// `params` is only read when `config.weight_decay > 0`.
pub fn adam_step(
    state: &mut OptimizerState,
    config: &AdamConfig,
    grad: &[f64],
    params: &[f64],
) -> Result<UpdateResult> {
    let mut out = UpdateResult::zeros(state.dim());
    adam_step_into(state, config, grad, params, &mut out)?;
    Ok(out)
}

/// [`adam_step`] writing into caller-owned buffers.
pub fn adam_step_into(
    state: &mut OptimizerState,
    config: &AdamConfig,
    grad: &[f64],
    params: &[f64],
    out: &mut UpdateResult,
) -> Result<()> {
    check_inputs(state, grad, (config.weight_decay > 0.0).then_some(params))?;
    out.resize(state.dim());
    state.t += 1;
    let (c1, c2) = if config.bias_correction {
        let t = state.t as f64;
        (
            1.0 - libm::pow(config.beta1, t),
            1.0 - libm::pow(config.beta2, t),
        )
    } else {
        (1.0, 1.0)
    };
    let (b1, b2) = (config.beta1, config.beta2);
    for i in 0..grad.len() {
        let g = effective_grad(grad[i], params, i, config.weight_decay);
        let m = flush(b1 * state.m[i] + (1.0 - b1) * g);
        let v = flush(b2 * state.v[i] + (1.0 - b2) * g * g);
        state.m[i] = m;
        state.v[i] = v;
        let m_hat = m / c1;
        let v_hat = v / c2;
        out.m_hat[i] = m_hat;
        out.v_hat[i] = v_hat;
        out.delta_theta[i] = -config.lr * m_hat / (libm::sqrt(v_hat) + config.epsilon);
    }
    Ok(())
}

/// One RMSProp update: `v <- b2 v + (1 - b2) g^2`, `dtheta = -lr g / (sqrt(v) + eps)`.
///
/// The first moment is left untouched and reported as zero.
pub fn rmsprop_step(
    state: &mut OptimizerState,
    config: &AdamConfig,
    grad: &[f64],
    params: &[f64],
) -> Result<UpdateResult> {
    let mut out = UpdateResult::zeros(state.dim());
    rmsprop_step_into(state, config, grad, params, &mut out)?;
    Ok(out)
}

/// [`rmsprop_step`] writing into caller-owned buffers.
pub fn rmsprop_step_into(
    state: &mut OptimizerState,
    config: &AdamConfig,
    grad: &[f64],
    params: &[f64],
    out: &mut UpdateResult,
) -> Result<()> {
    check_inputs(state, grad, (config.weight_decay > 0.0).then_some(params))?;
    out.resize(state.dim());
    state.t += 1;
    let b2 = config.beta2;
    for i in 0..grad.len() {
        let g = effective_grad(grad[i], params, i, config.weight_decay);
        let v = flush(b2 * state.v[i] + (1.0 - b2) * g * g);
        state.v[i] = v;
        out.m_hat[i] = 0.0;
        out.v_hat[i] = v;
        out.delta_theta[i] = -config.lr * g / (libm::sqrt(v) + config.epsilon);
    }
    Ok(())
}

/// One heavy-ball step with an exponentially averaged gradient:
/// `m <- b1 m + (1 - b1) g`, `dtheta = -lr m`. With `beta1 = 0` this is plain
/// gradient descent.
pub fn sgd_momentum_step(
    state: &mut OptimizerState,
    lr: f64,
    beta1: f64,
    grad: &[f64],
) -> Result<UpdateResult> {
    let mut out = UpdateResult::zeros(state.dim());
    sgd_momentum_step_into(state, lr, beta1, grad, &mut out)?;
    Ok(out)
}

/// [`sgd_momentum_step`] writing into caller-owned buffers.
pub fn sgd_momentum_step_into(
    state: &mut OptimizerState,
    lr: f64,
    beta1: f64,
    grad: &[f64],
    out: &mut UpdateResult,
) -> Result<()> {
    validate_momentum(lr, beta1)?;
    check_inputs(state, grad, None)?;
    out.resize(state.dim());
    state.t += 1;
    for i in 0..grad.len() {
        let m = flush(beta1 * state.m[i] + (1.0 - beta1) * grad[i]);
        state.m[i] = m;
        out.m_hat[i] = m;
        out.v_hat[i] = 0.0;
        out.delta_theta[i] = -lr * m;
    }
    Ok(())
}

fn validate_momentum(lr: f64, beta1: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(invalid("lr", "must be positive and finite"));
    }
    if !(0.0..1.0).contains(&beta1) {
        return Err(invalid("beta1", "must lie in [0, 1)"));
    }
    Ok(())
}

/// Which update rule a run uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// Adam with the given hyperparameters.
    Adam(AdamConfig),
    /// RMSProp; uses `lr`, `beta2`, `epsilon` and `weight_decay`.
    RmsProp(AdamConfig),
    /// SGD with an exponentially averaged gradient.
    SgdMomentum {
        /// Step size.
        lr: f64,
        /// Averaging coefficient; zero gives plain gradient descent.
        beta1: f64,
    },
}

impl OptimizerKind {
    /// Short lowercase name used in file headers.
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Adam(_) => "adam",
            OptimizerKind::RmsProp(_) => "rmsprop",
            OptimizerKind::SgdMomentum { .. } => "sgd",
        }
    }

    /// Range-check the hyperparameters.
    pub fn validate(&self) -> Result<()> {
        match self {
            OptimizerKind::Adam(c) | OptimizerKind::RmsProp(c) => c.validate(),
            OptimizerKind::SgdMomentum { lr, beta1 } => validate_momentum(*lr, *beta1),
        }
    }
}

/// An update rule bound to its state.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    state: OptimizerState,
}

impl Optimizer {
    /// Fresh optimizer for `dim` parameters.
    pub fn new(kind: OptimizerKind, dim: usize) -> Result<Self> {
        kind.validate()?;
        Ok(Self {
            kind,
            state: OptimizerState::new(dim),
        })
    }

    /// The update rule.
    pub fn kind(&self) -> &OptimizerKind {
        &self.kind
    }

    /// Current moments.
    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    /// Apply one update, returning fresh buffers.
    pub fn step(&mut self, grad: &[f64], params: &[f64]) -> Result<UpdateResult> {
        let mut out = UpdateResult::zeros(self.state.dim());
        self.step_into(grad, params, &mut out)?;
        Ok(out)
    }

    /// Apply one update into `out`.
    pub fn step_into(&mut self, grad: &[f64], params: &[f64], out: &mut UpdateResult) -> Result<()> {
        match &self.kind {
            OptimizerKind::Adam(c) => adam_step_into(&mut self.state, c, grad, params, out),
            OptimizerKind::RmsProp(c) => rmsprop_step_into(&mut self.state, c, grad, params, out),
            OptimizerKind::SgdMomentum { lr, beta1 } => {
                sgd_momentum_step_into(&mut self.state, *lr, *beta1, grad, out)
            }
        }
    }
}
