//! Subcommand implementations. Each writes a short report to `out`.

use std::io::Write;
use std::path::{Path, PathBuf};

use sawtooth_core::analysis::{
    fit_dot_dtheta_with_grid, fit_model, nshape_sweep, predict_loss_curve, reference_vectors, unit_grid, DGrid,
    FitModel, FitResult, NShapeInput, NShapeSweep,
};
use sawtooth_core::schedule::{boundary_overlap_stats, expected_overlap};
use sawtooth_core::trainer::{oscillation_amplitude, run_toy, RunResult, ToySequencing};

use crate::artifacts::{self, ColumnTable};
use crate::error::{LabError, Result};
use crate::float::{fmt_f64, fmt_opt};
use crate::kv::{self, Value};
use crate::runner;
use crate::spec::ExperimentSpec;

/// Step size of `toy` when none is given.
pub const TOY_DEFAULT_LR: f64 = 0.1;
/// Epochs of `toy` when none is given.
pub const TOY_DEFAULT_EPOCHS: usize = 50;
/// Trailing steps over which the toy oscillation amplitude is measured.
pub const TOY_AMPLITUDE_STEPS: usize = 20;

fn report(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(text).and_then(|_| out.write_all(b"\n")).map_err(|e| LabError::io("<stdout>", e))
}

/// Options of `run`.
#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    /// Spec path or bundled name.
    pub spec: String,
    /// Override of the experiment file's output root.
    pub out: Option<PathBuf>,
    /// Override of the experiment file's worker count.
    pub workers: Option<usize>,
}

/// Execute a spec. Diverged runs are reported, not errors.
pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let mut spec = ExperimentSpec::load(&args.spec)?;
    if let Some(dir) = &args.out {
        spec.output = dir.clone();
    }
    let workers = match args.workers {
        Some(0) => return Err(LabError::Invalid("--workers must be at least 1".into())),
        Some(w) => w,
        None => spec.workers,
    };
    let outcomes = runner::run_spec(&spec, workers)?;
    for o in &outcomes {
        let status = match o.result.divergence_step {
            Some(s) => format!("diverged at step {s}"),
            None => "ok".to_string(),
        };
        report(
            out,
            format_args!(
                "{}: {status}, epochs {}, final mean loss {}, mean drop {}, mean amplitude {} -> {}",
                o.label,
                o.result.epochs.len(),
                fmt_opt(o.final_mean_loss()),
                fmt_opt(o.mean_drop()),
                fmt_opt(o.mean_amplitude()),
                o.dir.display()
            ),
        )?;
    }
    Ok(())
}

/// Options of `fit`.
#[derive(Debug, Clone)]
pub struct FitArgs {
    /// Trace CSV.
    pub trace: PathBuf,
    /// Model.
    pub model: FitModel,
    /// `β₁` of the basis.
    pub beta1: f64,
    /// `β₂` of the basis.
    pub beta2: f64,
    /// Epoch to fit; defaults to the last epoch in the file.
    pub epoch: Option<usize>,
    /// Fit only steps `t <= max_step`.
    pub max_step: Option<usize>,
    /// Output directory; defaults to `fit-<model>` next to the trace.
    pub out: Option<PathBuf>,
    /// `d` grid for `dot_dtheta`.
    pub grid: DGrid,
}

/// Largest value in the `epoch` column.
fn last_epoch(table: &ColumnTable) -> Result<Option<usize>> {
    if !table.has("epoch") {
        return Ok(None);
    }
    Ok(table.column("epoch")?.iter().flatten().fold(None, |m: Option<f64>, &e| Some(m.map_or(e, |m| m.max(e)))).map(|e| e as usize))
}

/// `(step, value)` pairs of column `col`, restricted to one epoch and to
/// `step <= max_step`. Rows with an empty cell are skipped.
pub fn epoch_series(table: &ColumnTable, col: &str, epoch: Option<usize>, max_step: Option<usize>) -> Result<Vec<(f64, f64)>> {
    let values = table.column(col)?;
    let steps = table.column("step")?;
    let epochs = match epoch {
        Some(_) => Some(table.column("epoch")?),
        None => None,
    };
    Ok((0..table.rows())
        .filter(|&k| epochs.is_none_or(|c| c[k] == epoch.map(|e| e as f64)))
        .filter_map(|k| Some((steps[k]?, values[k]?)))
        .filter(|(t, _)| max_step.is_none_or(|m| *t <= m as f64))
        .collect())
}

/// The series `model` is fitted to: its column over one epoch (default: the last).
/// Returns the series and the epoch used.
pub fn fit_series(
    table: &ColumnTable,
    model: FitModel,
    epoch: Option<usize>,
    max_step: Option<usize>,
) -> Result<(Vec<(f64, f64)>, Option<usize>)> {
    table.column(model.column())?;
    let epoch = match epoch {
        Some(e) => Some(e),
        None => last_epoch(table)?,
    };
    let series = epoch_series(table, model.column(), epoch, max_step)?;
    if series.is_empty() {
        return Err(LabError::Invalid(format!(
            "column `{}` has no values{}",
            model.column(),
            epoch.map(|e| format!(" in epoch {e}")).unwrap_or_default()
        )));
    }
    Ok((series, epoch))
}

/// Fit `args.model` and write `fit.csv`, `overlay.csv` and, for `dot_dtheta`, `predicted.csv`.
pub fn cmd_fit(args: &FitArgs, out: &mut dyn Write) -> Result<FitResult> {
    let table = ColumnTable::read_file(&args.trace)?;
    let (series, epoch) = fit_series(&table, args.model, args.epoch, args.max_step)?;
    let fit = match args.model {
        FitModel::DotDtheta => fit_dot_dtheta_with_grid(&series, args.beta1, args.beta2, args.grid)?,
        m => fit_model(m, &series, args.beta1, args.beta2)?,
    };
    let dir = args.out.clone().unwrap_or_else(|| {
        args.trace
            .parent()
            .unwrap_or(Path::new("."))
            .join(format!("fit-{}", args.model.id()))
    });
    artifacts::write_fits_file(&dir.join("fit.csv"), std::slice::from_ref(&fit))?;
    artifacts::write_overlay_file(&dir.join("overlay.csv"), &series, &fit)?;
    if args.model == FitModel::DotDtheta && table.has("tracked_loss") {
        let tracked = epoch_series(&table, "tracked_loss", epoch, args.max_step)?;
        if let Some(&(t0, l0)) = tracked.first() {
            let curve = predict_loss_curve(&fit, l0, tracked.len())?;
            let t: Vec<f64> = (0..curve.values.len()).map(|k| t0 + k as f64).collect();
            let data: Vec<f64> = tracked.iter().map(|p| p.1).collect();
            artifacts::write_series_file(&dir.join("predicted.csv"), &["t", "predicted", "tracked_loss"], &[t, curve.values, data])?;
            report(out, format_args!("crossover step: {}", curve.crossover.map(|c| c.to_string()).unwrap_or_else(|| "none".into())))?;
        }
    }
    let coeffs: Vec<String> = args
        .model
        .coefficient_names()
        .iter()
        .zip(&fit.coeffs)
        .map(|(n, v)| format!("{n} = {}", fmt_f64(*v)))
        .collect();
    report(
        out,
        format_args!(
            "{} fit on {} points{}: {}, R^2 = {}",
            args.model,
            series.len(),
            epoch.map(|e| format!(" of epoch {e}")).unwrap_or_default(),
            coeffs.join(", "),
            fmt_f64(fit.r_squared)
        ),
    )?;
    if !fit.notices.is_empty() {
        report(out, format_args!("note: {}", fit.notice_text()))?;
    }
    report(out, format_args!("wrote {}", dir.display()))?;
    Ok(fit)
}

/// Options of `toy`.
#[derive(Debug, Clone)]
pub struct ToyArgs {
    /// Batch ordering.
    pub sequencing: ToySequencing,
    /// Momentum coefficient.
    pub beta1: f64,
    /// Step size.
    pub lr: f64,
    /// Epochs.
    pub epochs: usize,
    /// CSV destination; stdout when absent.
    pub out: Option<PathBuf>,
}

/// Toy run and its trailing oscillation amplitude.
pub fn toy_run(args: &ToyArgs) -> Result<(RunResult, f64)> {
    let r = run_toy(args.sequencing, args.beta1, args.lr, args.epochs)?;
    let amp = oscillation_amplitude(&r, TOY_AMPLITUDE_STEPS);
    Ok((r, amp))
}

fn write_toy_csv<W: Write>(w: W, seq: ToySequencing, r: &RunResult) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["epoch", "step", "global_step", "batch", "batch_loss", "g_norm", "m_norm"])?;
    for row in &r.trace {
        let batch = if seq.batch_at(row.epoch, row.step) == 0 { "g" } else { "h" };
        w.write_record([
            row.epoch.to_string(),
            row.step.to_string(),
            row.global_step.to_string(),
            batch.to_string(),
            fmt_f64(row.batch_loss),
            fmt_f64(row.g_norm),
            fmt_f64(row.m_norm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run the toy problem and emit its trace.
pub fn cmd_toy(args: &ToyArgs, out: &mut dyn Write) -> Result<()> {
    let (r, amp) = toy_run(args)?;
    match &args.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
            }
            let f = std::fs::File::create(path).map_err(|e| LabError::io(path, e))?;
            write_toy_csv(f, args.sequencing, &r).map_err(|e| LabError::csv(path, e))?;
            report(
                out,
                format_args!(
                    "{} beta1 = {}: oscillation amplitude over the last {TOY_AMPLITUDE_STEPS} steps = {} -> {}",
                    args.sequencing.as_str(),
                    fmt_f64(args.beta1),
                    fmt_f64(amp),
                    path.display()
                ),
            )
        }
        None => write_toy_csv(&mut *out, args.sequencing, &r).map_err(|e| LabError::csv("<stdout>", e)),
    }
}

/// Options of `nshape`.
#[derive(Debug, Clone)]
pub struct NShapeArgs {
    /// Vector file (`grad_l_b`, `m_hat`, `v_prev`, `g_squared` as lists); built-in vectors when absent.
    pub vectors: Option<PathBuf>,
    /// Grid intervals on `[0, 1]`.
    pub steps: usize,
    /// CSV destination; stdout when absent.
    pub out: Option<PathBuf>,
}

/// Parse an n-shape vector file.
pub fn parse_nshape_vectors(text: &str, source_name: &str) -> Result<NShapeInput> {
    let entries = kv::parse(text, source_name)?;
    let spec_err = |line: usize, message: String| LabError::Spec {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let keys = ["grad_l_b", "m_hat", "v_prev", "g_squared"];
    let mut vecs: [Option<(usize, Vec<f64>)>; 4] = Default::default();
    for e in &entries {
        let Some(k) = keys.iter().position(|k| *k == e.key) else {
            return Err(spec_err(e.line, format!("unknown key `{}`", e.key)));
        };
        let items = match &e.value {
            Value::List(v) => v.clone(),
            Value::Scalar(s) => vec![s.clone()],
        };
        let nums = items
            .iter()
            .map(|s| crate::float::parse_f64(s).ok_or_else(|| spec_err(e.line, format!("`{}`: `{s}` is not a number", e.key))))
            .collect::<Result<Vec<f64>>>()?;
        vecs[k] = Some((e.line, nums));
    }
    let mut it = keys.iter().zip(vecs).map(|(k, v)| {
        v.ok_or_else(|| LabError::Invalid(format!("{source_name}: missing `{k}`")))
    });
    let [g, m, v, s] = [it.next(), it.next(), it.next(), it.next()].map(|x| x.expect("four keys"));
    let (g, m, v, s) = (g?, m?, v?, s?);
    for (line, vec, key) in [(m.0, &m.1, "m_hat"), (v.0, &v.1, "v_prev"), (s.0, &s.1, "g_squared")] {
        if vec.len() != g.1.len() {
            return Err(spec_err(
                line,
                format!("dimension mismatch: `{key}` has {} entries, `grad_l_b` has {}", vec.len(), g.1.len()),
            ));
        }
    }
    Ok(NShapeInput {
        grad_l_b: g.1,
        m_hat: m.1,
        v_prev: v.1,
        g_squared: s.1,
    })
}

/// Evaluate the n-shape sweep.
pub fn nshape_run(args: &NShapeArgs) -> Result<NShapeSweep> {
    let input = match &args.vectors {
        None => reference_vectors(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
            parse_nshape_vectors(&text, &path.display().to_string())?
        }
    };
    if args.steps == 0 {
        return Err(LabError::Invalid("--steps must be at least 1".into()));
    }
    Ok(nshape_sweep(&input, &unit_grid(args.steps))?)
}

fn write_nshape_csv<W: Write>(w: W, sweep: &NShapeSweep) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let dim = sweep.points.first().map_or(0, |p| p.delta_theta.len());
    let mut header = vec!["beta2".to_string(), "cosine".to_string(), "dot".to_string()];
    header.extend((0..dim).map(|i| format!("delta_theta_{i}")));
    w.write_record(&header)?;
    for p in &sweep.points {
        let mut row = vec![fmt_f64(p.beta2), fmt_f64(p.cosine), fmt_f64(p.dot)];
        row.extend(p.delta_theta.iter().map(|x| fmt_f64(*x)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Run the n-shape sweep and emit its CSV.
pub fn cmd_nshape(args: &NShapeArgs, out: &mut dyn Write) -> Result<()> {
    let sweep = nshape_run(args)?;
    match &args.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
            }
            let f = std::fs::File::create(path).map_err(|e| LabError::io(path, e))?;
            write_nshape_csv(f, &sweep).map_err(|e| LabError::csv(path, e))?;
            let cos = |k: usize| sweep.points.get(k).map(|p| fmt_f64(p.cosine)).unwrap_or_else(|| "-".into());
            report(
                out,
                format_args!(
                    "{} points ({} skipped), cosine at first/last grid point: {} / {} -> {}",
                    sweep.points.len(),
                    sweep.skipped.len(),
                    cos(0),
                    cos(sweep.points.len().saturating_sub(1)),
                    path.display()
                ),
            )
        }
        None => write_nshape_csv(&mut *out, &sweep).map_err(|e| LabError::csv("<stdout>", e)),
    }
}

/// Options of `overlap`.
#[derive(Debug, Clone, Copy)]
pub struct OverlapArgs {
    /// Samples per epoch.
    pub n: usize,
    /// Batch size.
    pub b: usize,
    /// Monte Carlo epoch boundaries; 0 prints only the closed form.
    pub trials: usize,
    /// Shuffle seed.
    pub seed: u64,
}

/// Print `B²/N` and optionally a simulated estimate.
pub fn cmd_overlap(args: &OverlapArgs, out: &mut dyn Write) -> Result<()> {
    let e = expected_overlap(args.n, args.b)?;
    report(out, format_args!("expected_overlap = {}", fmt_f64(e)))?;
    if args.trials > 0 {
        let s = boundary_overlap_stats(args.n, args.b, args.seed, args.trials)?;
        report(
            out,
            format_args!(
                "simulated over {} boundaries: mean = {}, std_error = {}",
                s.trials,
                fmt_f64(s.mean),
                fmt_f64(s.std_error)
            ),
        )?;
    }
    Ok(())
}
