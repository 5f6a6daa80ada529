//! CSV and JSON artifacts: step traces, per-epoch metrics, run metadata,
//! problem tables, fit results and model overlays.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use sawtooth_core::analysis::{EspReport, FitResult};
use sawtooth_core::problem::{Coeffs, QuadraticProblem};
use sawtooth_core::trainer::{EpochSummary, StepTrace, TrackedProbe};

use crate::error::{LabError, Result};
use crate::float::{fmt_f64, fmt_opt, parse_f64};

/// Header of `trace.csv`.
pub const TRACE_COLUMNS: [&str; 12] = [
    "epoch",
    "step",
    "global_step",
    "batch_loss",
    "g_norm",
    "m_norm",
    "v_norm",
    "tracked_loss",
    "dot_g",
    "dot_m",
    "dot_dtheta",
    "cum_dot",
];

/// Header of `epochs.csv`.
pub const EPOCH_COLUMNS: [&str; 11] = [
    "epoch",
    "steps",
    "l_start",
    "l_end",
    "rise",
    "drop",
    "amplitude",
    "concavity",
    "concavity_sign",
    "mean_batch_loss",
    "full_loss",
];

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    File::create(path).map_err(|e| LabError::io(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| LabError::io(path, e))
}

/// Write a step trace. Probe columns are empty on rows without a probe.
pub fn write_trace<W: Write>(out: W, trace: &[StepTrace]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for r in trace {
        let p = r.probe;
        w.write_record([
            r.epoch.to_string(),
            r.step.to_string(),
            r.global_step.to_string(),
            fmt_f64(r.batch_loss),
            fmt_f64(r.g_norm),
            fmt_f64(r.m_norm),
            fmt_f64(r.v_norm),
            fmt_opt(p.map(|p| p.tracked_loss)),
            fmt_opt(p.map(|p| p.dot_g)),
            fmt_opt(p.map(|p| p.dot_m)),
            fmt_opt(p.map(|p| p.dot_dtheta)),
            fmt_opt(p.map(|p| p.cum_dot)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// [`write_trace`] to a file, creating parent directories.
pub fn write_trace_file(path: &Path, trace: &[StepTrace]) -> Result<()> {
    write_trace(create(path)?, trace).map_err(|e| LabError::csv(path, e))
}

/// Parse a trace written by [`write_trace`]. `name` labels errors.
pub fn read_trace<R: Read>(input: R, name: &str) -> Result<Vec<StepTrace>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| LabError::csv(name, e))?.clone();
    if headers.iter().ne(TRACE_COLUMNS) {
        return Err(LabError::Invalid(format!(
            "{name}: header must be `{}`",
            TRACE_COLUMNS.join(",")
        )));
    }
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| LabError::csv(name, e))?;
        let row = k + 2;
        let bad = |col: &str, s: &str| LabError::Invalid(format!("{name}:{row}: bad `{col}` value `{s}`"));
        let int = |i: usize| rec[i].parse::<u64>().map_err(|_| bad(TRACE_COLUMNS[i], &rec[i]));
        let real = |i: usize| parse_f64(&rec[i]).ok_or_else(|| bad(TRACE_COLUMNS[i], &rec[i]));
        let probe = if rec[7].is_empty() {
            if (8..12).any(|i| !rec[i].is_empty()) {
                return Err(LabError::Invalid(format!("{name}:{row}: probe columns partly empty")));
            }
            None
        } else {
            Some(TrackedProbe {
                tracked_loss: real(7)?,
                dot_g: real(8)?,
                dot_m: real(9)?,
                dot_dtheta: real(10)?,
                cum_dot: real(11)?,
            })
        };
        out.push(StepTrace {
            epoch: int(0)? as usize,
            step: int(1)? as usize,
            global_step: int(2)?,
            batch_loss: real(3)?,
            g_norm: real(4)?,
            m_norm: real(5)?,
            v_norm: real(6)?,
            probe,
        });
    }
    Ok(out)
}

/// [`read_trace`] from a file.
pub fn read_trace_file(path: &Path) -> Result<Vec<StepTrace>> {
    read_trace(open(path)?, &path.display().to_string())
}

/// A CSV file held as named columns of optional numbers (empty cell = `None`).
#[derive(Debug, Clone, Default)]
pub struct ColumnTable {
    name: String,
    columns: BTreeMap<String, Vec<Option<f64>>>,
    rows: usize,
}

impl ColumnTable {
    /// Parse any headed numeric CSV.
    pub fn read<R: Read>(input: R, name: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers: Vec<String> = r.headers().map_err(|e| LabError::csv(name, e))?.iter().map(str::to_string).collect();
        let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); headers.len()];
        let mut rows = 0;
        for (k, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| LabError::csv(name, e))?;
            for (c, cell) in rec.iter().enumerate() {
                let v = if cell.trim().is_empty() {
                    None
                } else {
                    Some(parse_f64(cell).ok_or_else(|| {
                        LabError::Invalid(format!("{name}:{}: `{}` is not a number: `{cell}`", k + 2, headers[c]))
                    })?)
                };
                cols[c].push(v);
            }
            rows += 1;
        }
        Ok(Self {
            name: name.to_string(),
            columns: headers.into_iter().zip(cols).collect(),
            rows,
        })
    }

    /// [`ColumnTable::read`] from a file.
    pub fn read_file(path: &Path) -> Result<Self> {
        Self::read(open(path)?, &path.display().to_string())
    }

    /// Number of data rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// True if the header contains `col`.
    pub fn has(&self, col: &str) -> bool {
        self.columns.contains_key(col)
    }

    /// A column, or an error naming it.
    pub fn column(&self, col: &str) -> Result<&[Option<f64>]> {
        self.columns
            .get(col)
            .map(Vec::as_slice)
            .ok_or_else(|| LabError::Invalid(format!("{}: missing column `{col}`", self.name)))
    }
}

/// Write per-epoch metrics joined with the trainer's epoch summaries.
pub fn write_epochs_file(path: &Path, report: &EspReport, summaries: &[EpochSummary]) -> Result<()> {
    let mut epochs: Vec<usize> = report.epochs.iter().map(|m| m.epoch).chain(summaries.iter().map(|s| s.epoch)).collect();
    epochs.sort_unstable();
    epochs.dedup();
    let mut w = csv::Writer::from_writer(create(path)?);
    let res: csv::Result<()> = (|| {
        w.write_record(EPOCH_COLUMNS)?;
        for e in epochs {
            let m = report.epoch(e);
            let s = summaries.iter().find(|s| s.epoch == e);
            w.write_record([
                e.to_string(),
                m.map(|m| m.steps.to_string()).unwrap_or_default(),
                fmt_opt(m.map(|m| m.l_start)),
                fmt_opt(m.map(|m| m.l_end)),
                fmt_opt(m.map(|m| m.rise)),
                fmt_opt(m.and_then(|m| m.drop)),
                fmt_opt(m.and_then(|m| m.amplitude)),
                fmt_opt(m.map(|m| m.concavity)),
                m.map(|m| m.concavity_sign().to_string()).unwrap_or_default(),
                fmt_opt(s.map(|s| s.mean_batch_loss)),
                fmt_opt(s.map(|s| s.full_loss)),
            ])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| LabError::csv(path, e))
}

/// Write `value` as pretty JSON with a trailing newline.
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)
        .map_err(|e| LabError::io(path, e.into()))?;
    f.write_all(b"\n").map_err(|e| LabError::io(path, e))
}

/// Write the coefficient table as `i,a,b,c,j`.
pub fn write_problem<W: Write>(out: W, problem: &QuadraticProblem) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "a", "b", "c", "j"])?;
    for (i, (c, j)) in problem.coeffs().iter().zip(problem.dim_index()).enumerate() {
        w.write_record([i.to_string(), fmt_f64(c.a), fmt_f64(c.b), fmt_f64(c.c), j.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// [`write_problem`] to a file.
pub fn write_problem_file(path: &Path, problem: &QuadraticProblem) -> Result<()> {
    write_problem(create(path)?, problem).map_err(|e| LabError::csv(path, e))
}

/// Rebuild a problem from an `i,a,b,c,j` table. Rows must be in `i` order.
pub fn read_problem<R: Read>(input: R, name: &str, dim: usize, seed: u64) -> Result<QuadraticProblem> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| LabError::csv(name, e))?.clone();
    if headers.iter().ne(["i", "a", "b", "c", "j"]) {
        return Err(LabError::Invalid(format!("{name}: header must be `i,a,b,c,j`")));
    }
    let (mut coeffs, mut dims) = (Vec::new(), Vec::new());
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| LabError::csv(name, e))?;
        let bad = || LabError::Invalid(format!("{name}:{}: malformed row", k + 2));
        if rec[0].parse::<usize>().ok() != Some(k) {
            return Err(bad());
        }
        let f = |i: usize| parse_f64(&rec[i]).ok_or_else(bad);
        coeffs.push(Coeffs { a: f(1)?, b: f(2)?, c: f(3)? });
        dims.push(rec[4].parse().map_err(|_| bad())?);
    }
    Ok(QuadraticProblem::from_parts(coeffs, dims, dim, seed)?)
}

/// Coefficients and quality of each fit, one `model,key,value` row per item.
pub fn write_fits_file(path: &Path, fits: &[FitResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let res: csv::Result<()> = (|| {
        w.write_record(["model", "key", "value"])?;
        for f in fits {
            let id = f.model.id();
            for (name, v) in f.model.coefficient_names().iter().zip(&f.coeffs) {
                w.write_record([id, name, &fmt_f64(*v)])?;
            }
            let rows = [
                ("r_squared", f.r_squared),
                ("residual_norm", f.residual_norm),
                ("beta1", f.beta1),
                ("beta2", f.beta2),
                ("t_min", f.t_range.0),
                ("t_max", f.t_range.1),
            ];
            for (k, v) in rows {
                w.write_record([id, k, &fmt_f64(v)])?;
            }
            if !f.notices.is_empty() {
                w.write_record([id, "notice", &f.notice_text()])?;
            }
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| LabError::csv(path, e))
}

/// Data against the fitted model: `t,data,model`.
pub fn write_overlay_file(path: &Path, series: &[(f64, f64)], fit: &FitResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let res: csv::Result<()> = (|| {
        w.write_record(["t", "data", "model"])?;
        for &(t, y) in series {
            w.write_record([fmt_f64(t), fmt_f64(y), fmt_f64(fit.evaluate(t))])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| LabError::csv(path, e))
}

/// Write named numeric columns of equal length.
pub fn write_series_file(path: &Path, names: &[&str], columns: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let res: csv::Result<()> = (|| {
        w.write_record(names)?;
        let n = columns.iter().map(Vec::len).min().unwrap_or(0);
        for k in 0..n {
            w.write_record(columns.iter().map(|c| fmt_f64(c[k])))?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| LabError::csv(path, e))
}
