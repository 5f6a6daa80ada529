//! Experiment spec files: one run or a cross-product sweep.

use std::path::{Path, PathBuf};

use sawtooth_core::analysis::default_window;
use sawtooth_core::optim::{AdamConfig, OptimizerKind};
use sawtooth_core::schedule::SamplingPolicy;
use sawtooth_core::trainer::{ProbeConfig, ProblemSpec, RunConfig, ToySequencing, DEFAULT_DIVERGENCE_CEILING};

use crate::error::{LabError, Result};
use crate::kv::{self, Entry, Value};

/// Default bound on the number of sweep points.
pub const DEFAULT_SWEEP_CAP: usize = 64;

/// Specs shipped with the binary, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("paper_fig11a", include_str!("../specs/paper_fig11a.spec")),
    ("paper_fig12_beta2_sweep", include_str!("../specs/paper_fig12_beta2_sweep.spec")),
];

/// Text of a bundled spec.
pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Keys that accept a list value, in sweep nesting order (last varies fastest).
pub const SWEEP_KEYS: [&str; 6] = ["policy", "batch_size", "beta1", "beta2", "epsilon", "lr"];

const SCALAR_KEYS: &[&str] = &[
    "name",
    "optimizer",
    "weight_decay",
    "bias_correction",
    "problem",
    "sequencing",
    "problem_seed",
    "num_functions",
    "dim",
    "init",
    "initial_shuffle",
    "num_epochs",
    "window",
    "tracked_batch",
    "probe_stride",
    "epoch_start_sample",
    "seed",
    "divergence_ceiling",
    "output",
    "emit_csv",
    "emit_svg",
    "emit_problem",
    "workers",
    "sweep_cap",
];

/// The toy two-batch problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyConfig {
    /// Batch ordering.
    pub sequencing: ToySequencing,
    /// Momentum coefficient.
    pub beta1: f64,
    /// Step size.
    pub lr: f64,
    /// Epochs of two steps each.
    pub epochs: usize,
}

/// What one sweep point executes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Workload {
    /// The quadratic testbed.
    Quadratic(RunConfig),
    /// The toy problem.
    Toy(ToyConfig),
}

/// One concrete run of a spec.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// 0-based position in the sweep.
    pub index: usize,
    /// Directory-safe label (`name` for a single point).
    pub label: String,
    /// Swept keys and the values taken at this point.
    pub assignments: Vec<(String, String)>,
    /// Resolved run.
    pub workload: Workload,
    /// ESP window.
    pub window: usize,
}

#[derive(Debug, Clone)]
struct Axis {
    key: &'static str,
    line: usize,
    values: Vec<String>,
}

/// A parsed, validated experiment spec.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    /// Experiment name.
    pub name: String,
    /// Output root.
    pub output: PathBuf,
    /// Write `trace.csv` and `epochs.csv`.
    pub emit_csv: bool,
    /// Write `loss.svg`.
    pub emit_svg: bool,
    /// Write `problem.csv`.
    pub emit_problem: bool,
    /// Worker threads.
    pub workers: usize,
    /// Upper bound on sweep points.
    pub sweep_cap: usize,
    points: Vec<SweepPoint>,
}

impl ExperimentSpec {
    /// Parse spec text. `source_name` appears in error messages and names the
    /// experiment when the text has no `name` key.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let entries = kv::parse(text, source_name)?;
        Parser { entries: &entries, source_name }.build()
    }

    /// Read and parse a spec file, or a bundled spec if `arg` names one and no such file exists.
    pub fn load(arg: &str) -> Result<Self> {
        let path = Path::new(arg);
        if !path.exists() {
            if let Some(text) = bundled(arg) {
                return Self::parse(text, arg);
            }
        }
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(arg);
        Self::parse(&text, stem).map_err(|e| match e {
            LabError::Spec { line, message, .. } => LabError::Spec {
                source_name: arg.to_string(),
                line,
                message,
            },
            other => other,
        })
    }

    /// Every sweep point, in nesting order.
    pub fn points(&self) -> &[SweepPoint] {
        &self.points
    }

    /// True when the experiment expands to more than one run.
    pub fn is_sweep(&self) -> bool {
        self.points.len() > 1
    }

    /// Output directory of one point.
    pub fn point_dir(&self, point: &SweepPoint) -> PathBuf {
        if self.is_sweep() {
            self.output.join(&point.label)
        } else {
            self.output.clone()
        }
    }
}

struct Parser<'a> {
    entries: &'a [Entry],
    source_name: &'a str,
}

impl Parser<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> LabError {
        LabError::Spec {
            source_name: self.source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    fn scalar(&self, key: &str) -> Option<(usize, &str)> {
        self.entry(key).and_then(|e| match &e.value {
            Value::Scalar(s) => Some((e.line, s.as_str())),
            Value::List(_) => None,
        })
    }

    fn get<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.scalar(key) {
            None => Ok(None),
            Some((line, s)) => s
                .parse()
                .map(Some)
                .map_err(|_| self.err(line, format!("`{key}`: expected {what}, found `{s}`"))),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.scalar(key) {
            None => Ok(default),
            Some((_, "true" | "yes" | "1")) => Ok(true),
            Some((_, "false" | "no" | "0")) => Ok(false),
            Some((line, s)) => Err(self.err(line, format!("`{key}`: expected true or false, found `{s}`"))),
        }
    }

    fn line_of(&self, key: &str) -> usize {
        self.entry(key).map(|e| e.line).unwrap_or(0)
    }

    fn build(&self) -> Result<ExperimentSpec> {
        for e in self.entries {
            let sweepable = SWEEP_KEYS.contains(&e.key.as_str());
            if !sweepable && !SCALAR_KEYS.contains(&e.key.as_str()) {
                return Err(self.err(e.line, format!("unknown key `{}`", e.key)));
            }
            if let Value::List(items) = &e.value {
                if !sweepable {
                    return Err(self.err(e.line, format!("`{}` does not accept a list", e.key)));
                }
                if items.is_empty() {
                    return Err(self.err(e.line, format!("empty sweep list for `{}`", e.key)));
                }
            }
        }

        let name = self.scalar("name").map(|(_, s)| s.to_string()).unwrap_or_else(|| self.source_name.to_string());
        let seed: u64 = self.get("seed", "an unsigned integer")?.unwrap_or(0);
        let sweep_cap: usize = self.get("sweep_cap", "a positive integer")?.unwrap_or(DEFAULT_SWEEP_CAP);
        if sweep_cap == 0 {
            return Err(self.err(self.line_of("sweep_cap"), "`sweep_cap` must be at least 1"));
        }
        let workers = match self.get::<usize>("workers", "a positive integer")? {
            Some(0) => return Err(self.err(self.line_of("workers"), "`workers` must be at least 1")),
            Some(w) => w,
            None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        };

        let mut axes = Vec::new();
        for key in SWEEP_KEYS {
            let Some(e) = self.entry(key) else { continue };
            let values = match &e.value {
                Value::Scalar(s) => vec![s.clone()],
                Value::List(v) => v.clone(),
            };
            axes.push(Axis { key, line: e.line, values });
        }
        let count = axes.iter().try_fold(1usize, |n, a| n.checked_mul(a.values.len())).unwrap_or(usize::MAX);
        if count > sweep_cap {
            let line = axes.iter().filter(|a| a.values.len() > 1).map(|a| a.line).max().unwrap_or(0);
            return Err(self.err(line, format!("sweep has {count} points, more than sweep_cap = {sweep_cap}")));
        }
        let swept: Vec<&'static str> = axes.iter().filter(|a| a.values.len() > 1).map(|a| a.key).collect();

        let mut points = Vec::with_capacity(count);
        for index in 0..count {
            let mut rem = index;
            let mut chosen = vec![String::new(); axes.len()];
            for (k, axis) in axes.iter().enumerate().rev() {
                chosen[k] = axis.values[rem % axis.values.len()].clone();
                rem /= axis.values.len();
            }
            let value_of = |key: &str| axes.iter().position(|a| a.key == key).map(|k| (axes[k].line, chosen[k].as_str()));
            let (workload, window) = self.resolve(&value_of, seed)?;
            let assignments: Vec<(String, String)> = axes
                .iter()
                .zip(&chosen)
                .filter(|(a, _)| swept.contains(&a.key))
                .map(|(a, v)| (a.key.to_string(), v.clone()))
                .collect();
            let label = if count == 1 {
                name.clone()
            } else {
                let parts: Vec<String> = assignments.iter().map(|(k, v)| format!("{k}-{v}")).collect();
                format!("{index:02}_{}", parts.join("_"))
            };
            points.push(SweepPoint {
                index,
                label,
                assignments,
                workload,
                window,
            });
        }

        Ok(ExperimentSpec {
            output: self
                .scalar("output")
                .map(|(_, s)| PathBuf::from(s))
                .unwrap_or_else(|| Path::new("out").join(&name)),
            name,
            emit_csv: self.flag("emit_csv", true)?,
            emit_svg: self.flag("emit_svg", false)?,
            emit_problem: self.flag("emit_problem", false)?,
            workers,
            sweep_cap,
            points,
        })
    }

    fn resolve<'v>(
        &self,
        value_of: &dyn Fn(&str) -> Option<(usize, &'v str)>,
        seed: u64,
    ) -> Result<(Workload, usize)> {
        let float = |key: &str, default: f64| -> Result<f64> {
            match value_of(key) {
                None => Ok(default),
                Some((line, s)) => s
                    .parse::<f64>()
                    .map_err(|_| self.err(line, format!("`{key}`: expected a number, found `{s}`"))),
            }
        };
        let lr = float("lr", 0.06)?;
        let beta1 = float("beta1", 0.9)?;
        let beta2 = float("beta2", 0.999)?;
        let epsilon = float("epsilon", 1e-8)?;
        let num_epochs: usize = self.get("num_epochs", "a positive integer")?.unwrap_or(9);
        let window_key: Option<usize> = self.get("window", "a positive integer")?;
        if window_key == Some(0) {
            return Err(self.err(self.line_of("window"), "`window` must be at least 1"));
        }

        let problem = self.scalar("problem").map(|(_, s)| s).unwrap_or("quadratic");
        match problem {
            "toy" => {
                let sequencing = match self.scalar("sequencing") {
                    None => ToySequencing::Fixed,
                    Some((line, s)) => s.parse().map_err(|_| self.err(line, format!("`sequencing`: expected fixed or reversed, found `{s}`")))?,
                };
                let lr = if value_of("lr").is_some() { lr } else { 0.1 };
                let toy = ToyConfig { sequencing, beta1, lr, epochs: num_epochs };
                OptimizerKind::SgdMomentum { lr, beta1 }.validate().map_err(|e| self.core_err(e))?;
                if num_epochs == 0 {
                    return Err(self.err(self.line_of("num_epochs"), "`num_epochs` must be at least 1"));
                }
                Ok((Workload::Toy(toy), window_key.unwrap_or(1)))
            }
            "quadratic" => {
                let adam = AdamConfig::new(lr, beta1, beta2)
                    .with_epsilon(epsilon)
                    .with_weight_decay(self.get("weight_decay", "a number")?.unwrap_or(0.0))
                    .with_bias_correction(self.flag("bias_correction", true)?);
                let optimizer = match self.get::<String>("optimizer", "a name")?.as_deref() {
                    None | Some("adam") => OptimizerKind::Adam(adam),
                    Some("rmsprop") => OptimizerKind::RmsProp(adam),
                    Some("sgd") => OptimizerKind::SgdMomentum { lr, beta1 },
                    Some(other) => {
                        return Err(self.err(
                            self.line_of("optimizer"),
                            format!("`optimizer`: expected adam, rmsprop or sgd, found `{other}`"),
                        ))
                    }
                };
                let num_functions: usize = self.get("num_functions", "a positive integer")?.unwrap_or(10_000);
                let problem = ProblemSpec {
                    seed: self.get("problem_seed", "an unsigned integer")?.unwrap_or(seed),
                    num_functions,
                    dim: self.get("dim", "a positive integer")?.unwrap_or(num_functions),
                    init: self.get("init", "a number")?.unwrap_or(sawtooth_core::problem::REFERENCE_INIT),
                };
                let policy = match value_of("policy") {
                    None => SamplingPolicy::ShufflePerEpoch,
                    Some((line, s)) => s.parse().map_err(|_| {
                        self.err(line, format!("`policy`: expected shuffle, fixed, reverse or replacement, found `{s}`"))
                    })?,
                };
                let batch_size = match value_of("batch_size") {
                    None => 1,
                    Some((line, s)) => s
                        .parse()
                        .map_err(|_| self.err(line, format!("`batch_size`: expected a positive integer, found `{s}`")))?,
                };
                let mut config = RunConfig {
                    optimizer,
                    problem,
                    policy,
                    initial_shuffle: self.flag("initial_shuffle", false)?,
                    batch_size,
                    num_epochs,
                    probes: ProbeConfig {
                        window: 1,
                        tracked_batch: self.get("tracked_batch", "a positive integer")?,
                        stride: self.get("probe_stride", "a positive integer")?.unwrap_or(1),
                        epoch_start_sample: self.get("epoch_start_sample", "a positive integer")?,
                    },
                    seed,
                    divergence_ceiling: self.get("divergence_ceiling", "a number")?.unwrap_or(DEFAULT_DIVERGENCE_CEILING),
                };
                let window = window_key.unwrap_or_else(|| default_window(config.batches_per_epoch()));
                config.probes.window = window;
                config.validate().map_err(|e| self.core_err(e))?;
                Ok((Workload::Quadratic(config), window))
            }
            other => Err(self.err(self.line_of("problem"), format!("`problem`: expected quadratic or toy, found `{other}`"))),
        }
    }

    fn core_err(&self, e: sawtooth_core::Error) -> LabError {
        let key = match &e {
            sawtooth_core::Error::InvalidParameter { name, .. } => match *name {
                "num_functions and dim" | "problem" => "num_functions",
                "stride" => "probe_stride",
                "epochs" => "num_epochs",
                n => n,
            },
            _ => "",
        };
        match self.entry(key) {
            Some(entry) => self.err(entry.line, e.to_string()),
            None => LabError::Invalid(format!("{}: {e}", self.source_name)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_run() {
        let s = ExperimentSpec::parse("seed = 7\nworkers = 1\n", "ref").unwrap();
        assert_eq!(s.name, "ref");
        assert_eq!(s.output, Path::new("out").join("ref"));
        assert!(!s.is_sweep());
        let Workload::Quadratic(c) = s.points()[0].workload else { panic!() };
        let mut want = RunConfig::reference(7);
        want.probes.window = 500;
        assert_eq!(c, want);
        assert_eq!(s.points()[0].window, 500);
    }

    #[test]
    fn sweep_is_a_cross_product_in_key_order() {
        let s = ExperimentSpec::parse("epsilon = [1e-8, 1e-5]\nbeta2 = [0.999, 0.9, 0.7]\nnum_functions = 50\n", "sw").unwrap();
        assert_eq!(s.points().len(), 6);
        let labels: Vec<&str> = s.points().iter().map(|p| p.label.as_str()).collect();
        assert_eq!(labels[0], "00_beta2-0.999_epsilon-1e-8");
        assert_eq!(labels[1], "01_beta2-0.999_epsilon-1e-5");
        assert_eq!(labels[5], "05_beta2-0.7_epsilon-1e-5");
        let Workload::Quadratic(c) = s.points()[5].workload else { panic!() };
        assert_eq!(c.optimizer, OptimizerKind::Adam(AdamConfig::new(0.06, 0.9, 0.7).with_epsilon(1e-5)));
        assert_eq!(s.point_dir(&s.points()[1]), Path::new("out/sw/01_beta2-0.999_epsilon-1e-5"));
    }

    #[test]
    fn validation_errors_are_line_anchored() {
        let cases = [
            ("num_functions = 10\nbeta2 = []\n", 2),
            ("a = [1]\n", 1),
            ("name = x\nseed = [1, 2]\n", 2),
            ("num_functions = 10\n\nbeta2 = [0.9, 1.5]\n", 3),
            ("num_functions = 10\nbatch_size = 11\n", 2),
            ("policy = sideways\n", 1),
            ("num_functions = 10\nlr = [1,2,3,4]\nbeta1 = [0.1,0.2,0.3]\nsweep_cap = 10\n", 3),
            ("optimizer = lbfgs\n", 1),
        ];
        for (text, want) in cases {
            match ExperimentSpec::parse(text, "v") {
                Err(LabError::Spec { line, .. }) => assert_eq!(line, want, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn sweep_cap_defaults_to_64() {
        let grid = |n: usize| (0..n).map(|k| format!("{}", 0.01 * (k + 1) as f64)).collect::<Vec<_>>().join(", ");
        let ok = format!("num_functions = 10\nlr = [{}]\nbeta1 = [0.1, 0.2]\n", grid(32));
        assert_eq!(ExperimentSpec::parse(&ok, "c").unwrap().points().len(), 64);
        let too_many = format!("num_functions = 10\nlr = [{}]\nbeta1 = [0.1, 0.2]\n", grid(33));
        assert!(ExperimentSpec::parse(&too_many, "c").is_err());
    }

    #[test]
    fn toy_workload() {
        let s = ExperimentSpec::parse("problem = toy\nsequencing = reversed\nbeta1 = [0.0, 0.9]\nnum_epochs = 20\n", "toy").unwrap();
        assert_eq!(s.points().len(), 2);
        assert_eq!(
            s.points()[1].workload,
            Workload::Toy(ToyConfig { sequencing: ToySequencing::Reversed, beta1: 0.9, lr: 0.1, epochs: 20 })
        );
    }

    #[test]
    fn bundled_specs_parse() {
        for (name, text) in BUNDLED {
            let s = ExperimentSpec::parse(text, name).unwrap();
            assert_eq!(&s.name, name);
        }
        let fig12 = ExperimentSpec::parse(bundled("paper_fig12_beta2_sweep").unwrap(), "x").unwrap();
        assert_eq!(fig12.points().len(), 8);
    }
}
