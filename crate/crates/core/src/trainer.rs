//! The incremental training loop and its probes.
//!
//! Each step draws a batch, evaluates its loss and gradient at the current
//! parameters, applies one optimizer update and records a [`StepTrace`] row.
//! With fixed-batch probing on, the loss and gradient of one designated batch
//! (identified by its 1-based position in the epoch, re-resolved at every epoch
//! start) are also evaluated at the pre-update parameters of every probed step.
//!
//! Epochs and steps are 1-based: step `t` of an epoch evaluates at the
//! parameters produced by steps `1..t`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::invalid;
use crate::optim::{Optimizer, OptimizerKind, UpdateResult};
use crate::problem::{Batch, QuadraticProblem, SparseGrad, ToyProblem};
use crate::schedule::{self, EpochSchedule, SamplingPolicy};
use crate::vecmath::norm;
use crate::{Error, Result};

/// Per-batch loss above which a run is declared diverged.
pub const DEFAULT_DIVERGENCE_CEILING: f64 = 1e12;

/// The quadratic testbed a run trains on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    /// Generator seed.
    pub seed: u64,
    /// `N`.
    pub num_functions: usize,
    /// Length of `x`.
    pub dim: usize,
    /// Every coordinate starts here.
    pub init: f64,
}

impl ProblemSpec {
    /// The full-size testbed: 10 000 functions in 10 000 dimensions from `x = 3`.
    pub fn reference(seed: u64) -> Self {
        Self::square(seed, 10_000)
    }

    /// `n` functions in `n` dimensions from `x = 3`.
    pub fn square(seed: u64, n: usize) -> Self {
        Self {
            seed,
            num_functions: n,
            dim: n,
            init: crate::problem::REFERENCE_INIT,
        }
    }

    /// Generate the problem.
    pub fn build(&self) -> Result<QuadraticProblem> {
        QuadraticProblem::generate(self.seed, self.num_functions, self.dim)
    }
}

/// What to record beyond the always-on step columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeConfig {
    /// Window `w` for averaged loss curves.
    pub window: usize,
    /// 1-based position-in-epoch of the tracked batch, or `None` to disable
    /// fixed-batch probing.
    pub tracked_batch: Option<usize>,
    /// Fixed-batch probes are evaluated on steps `1, 1 + stride, ...` of each epoch.
    pub stride: usize,
    /// Epoch (1-based) at whose start the loss of every batch is recorded.
    pub epoch_start_sample: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            window: 1,
            tracked_batch: None,
            stride: 1,
            epoch_start_sample: None,
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    /// Update rule.
    pub optimizer: OptimizerKind,
    /// Testbed.
    pub problem: ProblemSpec,
    /// Sample ordering.
    pub policy: SamplingPolicy,
    /// Shuffle once before epoch 1 under `fixed` / `reverse`.
    pub initial_shuffle: bool,
    /// `B`.
    pub batch_size: usize,
    /// Number of epochs.
    pub num_epochs: usize,
    /// Probe settings.
    pub probes: ProbeConfig,
    /// Seed of the sample-ordering stream.
    pub seed: u64,
    /// Per-batch loss ceiling.
    pub divergence_ceiling: f64,
}

impl RunConfig {
    /// Adam `lr = 0.06`, betas `(0.9, 0.999)`, `epsilon = 1e-8` on the
    /// full-size testbed with `B = 1`, shuffling every epoch.
    pub fn reference(seed: u64) -> Self {
        Self {
            optimizer: OptimizerKind::Adam(Default::default()),
            problem: ProblemSpec::reference(seed),
            policy: SamplingPolicy::ShufflePerEpoch,
            initial_shuffle: false,
            batch_size: 1,
            num_epochs: 9,
            probes: ProbeConfig::default(),
            seed,
            divergence_ceiling: DEFAULT_DIVERGENCE_CEILING,
        }
    }

    /// Batches per epoch implied by the problem size and batch size.
    pub fn batches_per_epoch(&self) -> usize {
        self.problem.num_functions.div_ceil(self.batch_size.max(1))
    }

    /// Check sizes and probe settings.
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.problem.num_functions == 0 || self.problem.dim == 0 {
            return Err(invalid("problem", "num_functions and dim must be at least 1"));
        }
        if self.batch_size == 0 || self.batch_size > self.problem.num_functions {
            return Err(invalid("batch_size", "must lie in 1..=num_functions"));
        }
        if self.num_epochs == 0 {
            return Err(invalid("num_epochs", "must be at least 1"));
        }
        if self.probes.window == 0 {
            return Err(invalid("window", "must be at least 1"));
        }
        if self.probes.stride == 0 {
            return Err(invalid("stride", "must be at least 1"));
        }
        if let Some(b) = self.probes.tracked_batch {
            if b == 0 || b > self.batches_per_epoch() {
                return Err(invalid("tracked_batch", "must lie in 1..=batches_per_epoch"));
            }
        }
        if !self.problem.init.is_finite() {
            return Err(invalid("init", "must be finite"));
        }
        if !(self.divergence_ceiling > 0.0) {
            return Err(invalid("divergence_ceiling", "must be positive"));
        }
        Ok(())
    }
}

/// Fixed-batch probe columns of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedProbe {
    /// Loss of the tracked batch at the pre-update parameters.
    pub tracked_loss: f64,
    /// `<g_t, grad l_tracked>`.
    pub dot_g: f64,
    /// `<m_t, grad l_tracked>` with the post-update first moment.
    pub dot_m: f64,
    /// `<dtheta_t, grad l_tracked>`.
    pub dot_dtheta: f64,
    /// Running sum of `dot_dtheta` over the probed steps of this epoch, this step included.
    pub cum_dot: f64,
}

/// One row of the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTrace {
    /// 1-based epoch.
    pub epoch: usize,
    /// 1-based step within the epoch.
    pub step: usize,
    /// 1-based step over the whole run.
    pub global_step: u64,
    /// Loss of the batch used at this step, at the pre-update parameters.
    pub batch_loss: f64,
    /// `||g_t||`.
    pub g_norm: f64,
    /// `||m_t||` after the update.
    pub m_norm: f64,
    /// `||v_t||` after the update.
    pub v_norm: f64,
    /// Present on probed steps when fixed-batch probing is on.
    pub probe: Option<TrackedProbe>,
}

/// Per-epoch aggregates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    /// 1-based epoch.
    pub epoch: usize,
    /// Mean of that epoch's batch losses.
    pub mean_batch_loss: f64,
    /// Sum over all functions at the end of the epoch (NaN for the toy problem).
    pub full_loss: f64,
}

/// Loss of every batch of an epoch evaluated at the same parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLossSample {
    /// 1-based epoch whose batches were evaluated.
    pub epoch: usize,
    /// One loss per batch, in service order.
    pub losses: Vec<f64>,
    /// Mean of `losses`.
    pub mean: f64,
    /// Population variance of `losses`.
    pub variance: f64,
}

/// Outcome of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// One row per executed step.
    pub trace: Vec<StepTrace>,
    /// True when the loss left the finite range or crossed the ceiling.
    pub diverged: bool,
    /// Global step at which divergence was detected.
    pub divergence_step: Option<u64>,
    /// One entry per completed epoch.
    pub epochs: Vec<EpochSummary>,
    /// Present when an epoch-start sample was requested and reached.
    pub epoch_start_sample: Option<BatchLossSample>,
    /// Parameters at the end of the run.
    pub final_theta: Vec<f64>,
}

impl RunResult {
    /// Batch loss column.
    pub fn batch_losses(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.batch_loss).collect()
    }

    /// Rows of one epoch.
    pub fn epoch_rows(&self, epoch: usize) -> impl Iterator<Item = &StepTrace> {
        self.trace.iter().filter(move |r| r.epoch == epoch)
    }
}

/// Loss of every batch in `batches` at `theta`, with mean and variance.
pub fn probe_epoch_start_losses(
    problem: &QuadraticProblem,
    batches: &[Batch],
    theta: &[f64],
) -> Result<(Vec<f64>, f64, f64)> {
    if let Some(index) = crate::vecmath::first_non_finite(theta) {
        return Err(Error::NonFinite { index });
    }
    let losses = batches
        .iter()
        .map(|b| problem.batch_loss(b, theta))
        .collect::<Result<Vec<f64>>>()?;
    let (mean, variance) = mean_var(&losses);
    Ok((losses, mean, variance))
}

/// [`probe_epoch_start_losses`] over the batches a schedule will serve next.
/// The schedule is advanced to the next epoch if it sits at a boundary.
pub fn probe_schedule_losses(
    problem: &QuadraticProblem,
    schedule: &mut EpochSchedule,
    theta: &[f64],
) -> Result<(Vec<f64>, f64, f64)> {
    schedule.ensure_epoch();
    probe_epoch_start_losses(problem, schedule.epoch_batches(), theta)
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

struct Tracked {
    batch: Batch,
    cum_dot: f64,
}

/// Execute one run of the quadratic testbed.
///
/// Divergence is a reported outcome: the run stops, `diverged` is set and the
/// offending row (with NaN norms) is the last one in the trace.
pub fn run(config: &RunConfig) -> Result<RunResult> {
    config.validate()?;
    let problem = config.problem.build()?;
    run_on(&problem, config)
}

/// [`run`] on an already generated problem. `config.problem` only supplies `init`.
pub fn run_on(problem: &QuadraticProblem, config: &RunConfig) -> Result<RunResult> {
    config.validate()?;
    if problem.num_functions() != config.problem.num_functions || problem.dim() != config.problem.dim {
        return Err(invalid("problem", "does not match config.problem sizes"));
    }
    let dim = problem.dim();
    let mut theta = vec![config.problem.init; dim];
    let mut opt = Optimizer::new(config.optimizer, dim)?;
    let mut sched = EpochSchedule::new(
        config.policy,
        problem.num_functions(),
        config.batch_size,
        config.seed,
    )?
    .with_initial_shuffle(config.initial_shuffle);
    let steps_per_epoch = sched.batches_per_epoch();

    let mut grad_dense = vec![0.0; dim];
    let mut update = UpdateResult::zeros(dim);
    let mut trace = Vec::with_capacity(steps_per_epoch * config.num_epochs);
    let mut epochs = Vec::with_capacity(config.num_epochs);
    let mut tracked: Option<Tracked> = None;
    let mut sample = None;
    let mut global: u64 = 0;

    for epoch in 1..=config.num_epochs {
        sched.ensure_epoch();
        debug_assert_eq!(sched.epoch(), epoch);
        if let Some(pos) = config.probes.tracked_batch {
            tracked = Some(Tracked {
                batch: sched.epoch_batches()[pos - 1].clone(),
                cum_dot: 0.0,
            });
        }
        if config.probes.epoch_start_sample == Some(epoch) {
            let (losses, mean, variance) = probe_epoch_start_losses(problem, sched.epoch_batches(), &theta)?;
            sample = Some(BatchLossSample {
                epoch,
                losses,
                mean,
                variance,
            });
        }
        let mut loss_sum = 0.0;
        for step in 1..=steps_per_epoch {
            global += 1;
            let batch = sched.next_batch();
            let loss = problem.batch_loss(&batch, &theta)?;
            if !loss.is_finite() || loss > config.divergence_ceiling {
                trace.push(StepTrace {
                    epoch,
                    step,
                    global_step: global,
                    batch_loss: loss,
                    g_norm: f64::NAN,
                    m_norm: f64::NAN,
                    v_norm: f64::NAN,
                    probe: None,
                });
                return Ok(RunResult {
                    trace,
                    diverged: true,
                    divergence_step: Some(global),
                    epochs,
                    epoch_start_sample: sample,
                    final_theta: theta,
                });
            }
            loss_sum += loss;
            let g = problem.batch_grad(&batch, &theta)?;

            let probed = (step - 1) % config.probes.stride == 0;
            let tracked_eval: Option<(f64, SparseGrad)> = match (&tracked, probed) {
                (Some(tr), true) => Some((
                    problem.batch_loss(&tr.batch, &theta)?,
                    problem.batch_grad(&tr.batch, &theta)?,
                )),
                _ => None,
            };

            g.scatter_into(&mut grad_dense);
            let stepped = opt.step_into(&grad_dense, &theta, &mut update);
            g.clear_from(&mut grad_dense);
            if let Err(Error::NonFinite { .. }) = stepped {
                trace.push(StepTrace {
                    epoch,
                    step,
                    global_step: global,
                    batch_loss: loss,
                    g_norm: f64::NAN,
                    m_norm: f64::NAN,
                    v_norm: f64::NAN,
                    probe: None,
                });
                return Ok(RunResult {
                    trace,
                    diverged: true,
                    divergence_step: Some(global),
                    epochs,
                    epoch_start_sample: sample,
                    final_theta: theta,
                });
            }
            stepped?;
            for (x, d) in theta.iter_mut().zip(&update.delta_theta) {
                *x += d;
            }

            let state = opt.state();
            let probe = match (tracked_eval, tracked.as_mut()) {
                (Some((tracked_loss, tg)), Some(tr)) => {
                    let dot_dtheta = tg.dot_dense(&update.delta_theta);
                    tr.cum_dot += dot_dtheta;
                    Some(TrackedProbe {
                        tracked_loss,
                        dot_g: g.dot(&tg),
                        dot_m: tg.dot_dense(state.m()),
                        dot_dtheta,
                        cum_dot: tr.cum_dot,
                    })
                }
                _ => None,
            };
            trace.push(StepTrace {
                epoch,
                step,
                global_step: global,
                batch_loss: loss,
                g_norm: g.norm(),
                m_norm: norm(state.m()),
                v_norm: norm(state.v()),
                probe,
            });
        }
        epochs.push(EpochSummary {
            epoch,
            mean_batch_loss: loss_sum / steps_per_epoch as f64,
            full_loss: problem.full_loss(&theta)?,
        });
    }

    Ok(RunResult {
        trace,
        diverged: false,
        divergence_step: None,
        epochs,
        epoch_start_sample: sample,
        final_theta: theta,
    })
}

/// Sequencing of the two toy batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToySequencing {
    /// AB, AB, AB, ...
    Fixed,
    /// AB, BA, AB, ...
    Reversed,
}

impl core::str::FromStr for ToySequencing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fixed" => Ok(ToySequencing::Fixed),
            "reversed" | "reverse" => Ok(ToySequencing::Reversed),
            _ => Err(invalid("sequencing", "expected fixed | reversed")),
        }
    }
}

impl ToySequencing {
    /// Name used on the command line.
    pub fn as_str(&self) -> &'static str {
        match self {
            ToySequencing::Fixed => "fixed",
            ToySequencing::Reversed => "reversed",
        }
    }

    /// Toy batch (0 = `g`, 1 = `h`) served at 1-based `(epoch, step)`.
    pub fn batch_at(&self, epoch: usize, step: usize) -> usize {
        let first = usize::from(step != 1);
        match self {
            ToySequencing::Reversed if epoch % 2 == 0 => 1 - first,
            _ => first,
        }
    }
}

/// Starting parameter of the toy runs.
pub const TOY_INIT: f64 = 0.75;

/// Incrementally "optimize" `g(theta) + h(theta)` with momentum SGD.
///
/// Each epoch serves the two batches once, in the order given by
/// `sequencing`. Rows carry the pre-update batch loss and `||m||`; `theta`
/// starts at [`TOY_INIT`].
pub fn run_toy(sequencing: ToySequencing, momentum_beta1: f64, lr: f64, epochs: usize) -> Result<RunResult> {
    if epochs == 0 {
        return Err(invalid("epochs", "must be at least 1"));
    }
    let mut opt = Optimizer::new(
        OptimizerKind::SgdMomentum {
            lr,
            beta1: momentum_beta1,
        },
        1,
    )?;
    let policy = match sequencing {
        ToySequencing::Fixed => SamplingPolicy::FixedOrder,
        ToySequencing::Reversed => SamplingPolicy::ReverseAlternating,
    };
    let mut sched = schedule::EpochSchedule::new(policy, 2, 1, 0)?;
    let toy = ToyProblem;
    let mut theta = TOY_INIT;
    let mut update = UpdateResult::zeros(1);
    let mut trace = Vec::with_capacity(2 * epochs);
    let mut summaries = Vec::with_capacity(epochs);
    let mut global = 0;
    for epoch in 1..=epochs {
        let mut sum = 0.0;
        for step in 1..=2 {
            global += 1;
            let b = sched.next_batch().indices[0];
            let loss = toy.batch_loss(b, theta);
            sum += loss;
            let g = toy.batch_grad(b);
            opt.step_into(&[g], &[theta], &mut update)?;
            theta += update.delta_theta[0];
            trace.push(StepTrace {
                epoch,
                step,
                global_step: global,
                batch_loss: loss,
                g_norm: libm::fabs(g),
                m_norm: libm::fabs(opt.state().m()[0]),
                v_norm: 0.0,
                probe: None,
            });
        }
        summaries.push(EpochSummary {
            epoch,
            mean_batch_loss: sum / 2.0,
            full_loss: f64::NAN,
        });
    }
    Ok(RunResult {
        trace,
        diverged: false,
        divergence_step: None,
        epochs: summaries,
        epoch_start_sample: None,
        final_theta: vec![theta],
    })
}

/// `max - min` of the batch loss over the last `window` rows.
pub fn oscillation_amplitude(result: &RunResult, window: usize) -> f64 {
    let n = result.trace.len();
    let tail = &result.trace[n.saturating_sub(window)..];
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.batch_loss), hi.max(r.batch_loss))
    });
    hi - lo
}
