//! Executes spec points (concurrently for sweeps) and writes their artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use sawtooth_core::analysis::{esp_metrics, EspReport};
use sawtooth_core::optim::OptimizerKind;
use sawtooth_core::trainer::{run_on, run_toy, oscillation_amplitude, RunConfig, RunResult};

use crate::artifacts;
use crate::error::{LabError, Result};
use crate::float::fmt_opt;
use crate::spec::{ExperimentSpec, SweepPoint, ToyConfig, Workload};
use crate::svg::{line_chart, Series};

/// First epoch included in summary means (epoch 1 is a warm-up transient).
pub const SUMMARY_FIRST_EPOCH: usize = 2;

/// What one point produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PointOutcome {
    /// Sweep index.
    pub index: usize,
    /// Point label.
    pub label: String,
    /// Directory holding the point's files.
    pub dir: PathBuf,
    /// Run result.
    pub result: RunResult,
    /// ESP metrics, absent when the trace is shorter than two epochs.
    pub esp: Option<EspReport>,
}

impl PointOutcome {
    /// Mean batch loss of the last completed epoch.
    pub fn final_mean_loss(&self) -> Option<f64> {
        self.result.epochs.last().map(|e| e.mean_batch_loss)
    }

    /// Mean `D_e` from epoch 2 on.
    pub fn mean_drop(&self) -> Option<f64> {
        self.esp.as_ref().and_then(|r| r.mean_drop(SUMMARY_FIRST_EPOCH, usize::MAX))
    }

    /// Mean `A_e` from epoch 2 on.
    pub fn mean_amplitude(&self) -> Option<f64> {
        self.esp.as_ref().and_then(|r| r.mean_amplitude(SUMMARY_FIRST_EPOCH, usize::MAX))
    }
}

#[derive(Serialize)]
struct OptimizerMeta {
    kind: &'static str,
    lr: f64,
    beta1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weight_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bias_correction: Option<bool>,
}

impl OptimizerMeta {
    fn new(kind: &OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Adam(c) | OptimizerKind::RmsProp(c) => Self {
                kind: kind.name(),
                lr: c.lr,
                beta1: c.beta1,
                beta2: Some(c.beta2),
                epsilon: Some(c.epsilon),
                weight_decay: Some(c.weight_decay),
                bias_correction: Some(c.bias_correction),
            },
            OptimizerKind::SgdMomentum { lr, beta1 } => Self {
                kind: kind.name(),
                lr: *lr,
                beta1: *beta1,
                beta2: None,
                epsilon: None,
                weight_decay: None,
                bias_correction: None,
            },
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
enum WorkloadMeta {
    Quadratic {
        optimizer: OptimizerMeta,
        problem_seed: u64,
        num_functions: usize,
        dim: usize,
        init: f64,
        policy: &'static str,
        initial_shuffle: bool,
        batch_size: usize,
        num_epochs: usize,
        seed: u64,
        tracked_batch: Option<usize>,
        probe_stride: usize,
        epoch_start_sample: Option<usize>,
        divergence_ceiling: f64,
    },
    Toy {
        optimizer: OptimizerMeta,
        sequencing: &'static str,
        num_epochs: usize,
        init: f64,
    },
}

impl WorkloadMeta {
    fn new(w: &Workload) -> Self {
        match w {
            Workload::Quadratic(c) => WorkloadMeta::Quadratic {
                optimizer: OptimizerMeta::new(&c.optimizer),
                problem_seed: c.problem.seed,
                num_functions: c.problem.num_functions,
                dim: c.problem.dim,
                init: c.problem.init,
                policy: c.policy.as_str(),
                initial_shuffle: c.initial_shuffle,
                batch_size: c.batch_size,
                num_epochs: c.num_epochs,
                seed: c.seed,
                tracked_batch: c.probes.tracked_batch,
                probe_stride: c.probes.stride,
                epoch_start_sample: c.probes.epoch_start_sample,
                divergence_ceiling: c.divergence_ceiling,
            },
            Workload::Toy(t) => WorkloadMeta::Toy {
                optimizer: OptimizerMeta::new(&OptimizerKind::SgdMomentum { lr: t.lr, beta1: t.beta1 }),
                sequencing: t.sequencing.as_str(),
                num_epochs: t.epochs,
                init: sawtooth_core::trainer::TOY_INIT,
            },
        }
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    tool_version: &'static str,
    experiment: &'a str,
    label: &'a str,
    index: usize,
    assignments: BTreeMap<&'a str, &'a str>,
    config: WorkloadMeta,
    window: usize,
    steps: usize,
    epochs_completed: usize,
    diverged: bool,
    divergence_step: Option<u64>,
    final_mean_loss: Option<f64>,
    final_full_loss: Option<f64>,
    mean_drop: Option<f64>,
    mean_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oscillation_amplitude: Option<f64>,
    esp_notices: Vec<String>,
    files: Vec<&'static str>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Run one point's workload without writing anything.
pub fn execute(workload: &Workload) -> Result<RunResult> {
    match workload {
        Workload::Quadratic(c) => execute_quadratic(c),
        Workload::Toy(t) => execute_toy(t),
    }
}

fn execute_quadratic(c: &RunConfig) -> Result<RunResult> {
    let problem = c.problem.build()?;
    Ok(run_on(&problem, c)?)
}

fn execute_toy(t: &ToyConfig) -> Result<RunResult> {
    Ok(run_toy(t.sequencing, t.beta1, t.lr, t.epochs)?)
}

/// ESP metrics, or `None` when the trace cannot support them.
pub fn esp_or_none(result: &RunResult, window: usize) -> Option<EspReport> {
    esp_metrics(&result.trace, window).ok()
}

/// Run one point and write its files under `dir`.
pub fn run_point(spec: &ExperimentSpec, point: &SweepPoint) -> Result<PointOutcome> {
    let result = execute(&point.workload)?;
    let esp = esp_or_none(&result, point.window);
    let dir = spec.point_dir(point);
    std::fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;

    let mut files = Vec::new();
    if spec.emit_csv {
        artifacts::write_trace_file(&dir.join("trace.csv"), &result.trace)?;
        let empty = EspReport {
            window: point.window,
            epochs: Vec::new(),
            notices: Vec::new(),
        };
        artifacts::write_epochs_file(&dir.join("epochs.csv"), esp.as_ref().unwrap_or(&empty), &result.epochs)?;
        files.extend(["trace.csv", "epochs.csv"]);
    }
    if spec.emit_problem {
        if let Workload::Quadratic(c) = &point.workload {
            artifacts::write_problem_file(&dir.join("problem.csv"), &c.problem.build()?)?;
            files.push("problem.csv");
        }
    }
    if spec.emit_svg {
        let losses = result.batch_losses();
        let tracked: Vec<f64> = result.trace.iter().filter_map(|r| r.probe.map(|p| p.tracked_loss)).collect();
        let mut series = vec![Series { name: "batch loss", values: &losses }];
        if !tracked.is_empty() {
            series.push(Series { name: "tracked batch loss", values: &tracked });
        }
        let svg = line_chart(&point.label, "step", "loss", &series);
        let path = dir.join("loss.svg");
        std::fs::write(&path, svg).map_err(|e| LabError::io(&path, e))?;
        files.push("loss.svg");
    }
    files.push("meta.json");

    let outcome = PointOutcome {
        index: point.index,
        label: point.label.clone(),
        dir: dir.clone(),
        result,
        esp,
    };
    let meta = Meta {
        tool_version: env!("CARGO_PKG_VERSION"),
        experiment: &spec.name,
        label: &point.label,
        index: point.index,
        assignments: point.assignments.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
        config: WorkloadMeta::new(&point.workload),
        window: point.window,
        steps: outcome.result.trace.len(),
        epochs_completed: outcome.result.epochs.len(),
        diverged: outcome.result.diverged,
        divergence_step: outcome.result.divergence_step,
        final_mean_loss: outcome.final_mean_loss().and_then(finite),
        final_full_loss: outcome.result.epochs.last().and_then(|e| finite(e.full_loss)),
        mean_drop: outcome.mean_drop(),
        mean_amplitude: outcome.mean_amplitude(),
        oscillation_amplitude: matches!(point.workload, Workload::Toy(_))
            .then(|| oscillation_amplitude(&outcome.result, 2 * point.window.max(1))),
        esp_notices: outcome
            .esp
            .as_ref()
            .map(|r| r.notices.iter().map(ToString::to_string).collect())
            .unwrap_or_else(|| vec!["fewer than two epochs: no ESP metrics".to_string()]),
        files,
    };
    artifacts::write_json_file(&dir.join("meta.json"), &meta)?;
    Ok(outcome)
}

/// Run every point of `spec` on up to `workers` threads. Errors are reported
/// for the lowest failing index after all points finish.
pub fn run_spec(spec: &ExperimentSpec, workers: usize) -> Result<Vec<PointOutcome>> {
    let points = spec.points();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<PointOutcome>>>> = Mutex::new((0..points.len()).map(|_| None).collect());
    let threads = workers.clamp(1, points.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(point) = points.get(k) else { break };
                let r = run_point(spec, point);
                slots.lock().unwrap_or_else(|e| e.into_inner())[k] = Some(r);
            });
        }
    });
    let outcomes = slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every point ran"))
        .collect::<Result<Vec<_>>>()?;
    if spec.is_sweep() {
        write_sweep_summary(&spec.output.join("sweep.csv"), &outcomes)?;
    }
    Ok(outcomes)
}

/// One row per point: label, divergence and the headline ESP numbers.
pub fn write_sweep_summary(path: &Path, outcomes: &[PointOutcome]) -> Result<()> {
    let header = [
        "index",
        "label",
        "diverged",
        "divergence_step",
        "epochs_completed",
        "final_mean_loss",
        "mean_drop",
        "mean_amplitude",
    ];
    let file = std::fs::File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let res: csv::Result<()> = (|| {
        w.write_record(header)?;
        for o in outcomes {
            w.write_record([
                o.index.to_string(),
                o.label.clone(),
                o.result.diverged.to_string(),
                o.result.divergence_step.map(|s| s.to_string()).unwrap_or_default(),
                o.result.epochs.len().to_string(),
                fmt_opt(o.final_mean_loss()),
                fmt_opt(o.mean_drop()),
                fmt_opt(o.mean_amplitude()),
            ])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| LabError::csv(path, e))
}
