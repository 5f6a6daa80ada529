//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use sawtooth_core::analysis::{
    esp_metrics, fit_dot_dtheta, fit_dot_m, fit_g_norm, fit_m_norm, fit_v_norm, nshape_sweep, predict_loss_curve,
    reference_vectors, unit_grid, EspReport, FitResult,
};
use sawtooth_core::optim::{adam_step, rmsprop_step, AdamConfig, OptimizerKind, OptimizerState};
use sawtooth_core::problem::{Batch, QuadraticProblem};
use sawtooth_core::schedule::{boundary_overlap_stats, expected_overlap, EpochSchedule, SamplingPolicy};
use sawtooth_core::trainer::{oscillation_amplitude, run, run_toy, ProblemSpec, RunConfig, RunResult, ToySequencing};
use sawtooth_lab::artifacts::{read_trace, write_trace};
use sawtooth_lab::commands::{TOY_AMPLITUDE_STEPS, TOY_DEFAULT_EPOCHS, TOY_DEFAULT_LR};
use sawtooth_lab::spec::{ExperimentSpec, Workload};

/// Epochs over which per-epoch statistics are compared.
const EPOCHS: (usize, usize) = (2, 8);
/// Epoch whose per-step series are fitted.
const FIT_EPOCH: usize = 4;

struct Verdict {
    id: usize,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn fmt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn quadratic(spec: &ExperimentSpec, k: usize) -> RunConfig {
    match spec.points()[k].workload {
        Workload::Quadratic(c) => c,
        Workload::Toy(_) => panic!("bundled spec is quadratic"),
    }
}

fn with_beta2(mut c: RunConfig, beta2: f64, epsilon: f64) -> RunConfig {
    if let OptimizerKind::Adam(mut a) = c.optimizer {
        a.beta2 = beta2;
        a.epsilon = epsilon;
        c.optimizer = OptimizerKind::Adam(a);
    }
    c
}

struct Run {
    result: RunResult,
    esp: EspReport,
    elapsed: Duration,
}

fn execute(config: &RunConfig) -> Run {
    let (result, elapsed) = timed(|| run(config).expect("valid config"));
    let esp = esp_metrics(&result.trace, config.probes.window).unwrap_or(EspReport {
        window: config.probes.window,
        epochs: Vec::new(),
        notices: Vec::new(),
    });
    Run { result, esp, elapsed }
}

fn signs_hold(esp: &EspReport) -> (bool, Vec<usize>) {
    let bad: Vec<usize> = (EPOCHS.0..=EPOCHS.1)
        .filter(|&e| !esp.epoch(e).is_some_and(|m| m.rise > 0.0 && m.drop.is_some_and(|d| d > 0.0)))
        .collect();
    (bad.is_empty(), bad)
}

fn series(result: &RunResult, f: impl Fn(&sawtooth_core::trainer::StepTrace) -> Option<f64>, max_step: usize) -> Vec<(f64, f64)> {
    result
        .epoch_rows(FIT_EPOCH)
        .filter(|r| r.step <= max_step)
        .filter_map(|r| Some((r.step as f64, f(r)?)))
        .collect()
}

fn fit_summary(fit: &Result<FitResult, sawtooth_core::Error>) -> String {
    match fit {
        Ok(f) => format!("{:?} R2={:.4}", f.coeffs.iter().map(|c| format!("{c:.4e}")).collect::<Vec<_>>(), f.r_squared),
        Err(e) => format!("error: {e}"),
    }
}

fn main() -> ExitCode {
    let fig11 = ExperimentSpec::load("paper_fig11a").expect("bundled spec");
    let fig12 = ExperimentSpec::load("paper_fig12_beta2_sweep").expect("bundled spec");
    let reference = quadratic(&fig11, 0);
    let tracked = reference.probes.tracked_batch.expect("reference spec tracks a batch");
    println!(
        "reference: seed {}, N = dim = {}, B = {}, {} epochs, window {}, tracked batch {}",
        reference.seed,
        reference.problem.num_functions,
        reference.batch_size,
        reference.num_epochs,
        reference.probes.window,
        tracked
    );
    let mut verdicts = Vec::new();

    // 1
    let shuffle = execute(&reference);
    let mut reduced_cfg = reference;
    reduced_cfg.problem = ProblemSpec::square(reference.problem.seed, 2000);
    reduced_cfg.probes.tracked_batch = None;
    reduced_cfg.probes.window = sawtooth_core::analysis::default_window(2000);
    let reduced = execute(&reduced_cfg);
    let (full_ok, full_bad) = signs_hold(&shuffle.esp);
    let (red_ok, red_bad) = signs_hold(&reduced.esp);
    let shuffle_drop = shuffle.esp.mean_drop(EPOCHS.0, EPOCHS.1).unwrap_or(f64::NAN);
    verdicts.push(Verdict {
        id: 1,
        title: "ESP replication under shuffling",
        pass: full_ok && red_ok && shuffle.elapsed.as_secs_f64() < 120.0 && reduced.elapsed.as_secs_f64() < 10.0,
        detail: format!(
            "full: failing epochs {full_bad:?}, mean D {shuffle_drop:.6}, {:.1}s; reduced N=2000: failing epochs {red_bad:?}, {:.2}s",
            shuffle.elapsed.as_secs_f64(),
            reduced.elapsed.as_secs_f64()
        ),
    });

    // 2, 3, 4
    let policy_run = |p: SamplingPolicy| {
        let mut c = reference;
        c.policy = p;
        c.probes.tracked_batch = None;
        execute(&c)
    };
    let fixed = policy_run(SamplingPolicy::FixedOrder);
    let fixed_abs = fixed.esp.mean_abs_drop(EPOCHS.0, EPOCHS.1).unwrap_or(f64::NAN);
    verdicts.push(Verdict {
        id: 2,
        title: "No-shuffle suppression",
        pass: fixed_abs < 0.2 * shuffle_drop,
        detail: format!("fixed mean |D| {fixed_abs:.6} vs 20% of shuffle mean D {:.6} (ratio {:.3})", 0.2 * shuffle_drop, fixed_abs / shuffle_drop),
    });
    let repl = policy_run(SamplingPolicy::WithReplacement);
    let repl_abs = repl.esp.mean_abs_drop(EPOCHS.0, EPOCHS.1).unwrap_or(f64::NAN);
    verdicts.push(Verdict {
        id: 3,
        title: "Replacement elimination",
        pass: repl_abs < 0.2 * shuffle_drop,
        detail: format!("replacement mean |D| {repl_abs:.6} vs 20% of shuffle mean D {:.6} (ratio {:.3})", 0.2 * shuffle_drop, repl_abs / shuffle_drop),
    });
    let rev = policy_run(SamplingPolicy::ReverseAlternating);
    let rev_drop = rev.esp.mean_drop(EPOCHS.0, EPOCHS.1).unwrap_or(f64::NAN);
    verdicts.push(Verdict {
        id: 4,
        title: "Reverse amplification",
        pass: rev_drop >= 1.5 * shuffle_drop,
        detail: format!("reverse mean D {rev_drop:.6} vs 1.5x shuffle mean D {:.6}", 1.5 * shuffle_drop),
    });

    // 5
    let amp = |r: &Run| r.esp.mean_amplitude(EPOCHS.0, EPOCHS.1).unwrap_or(f64::NAN);
    let base_eps = 1e-8;
    let b095 = execute(&with_beta2(quadratic(&fig12, 0), 0.95, base_eps));
    let b09 = execute(&with_beta2(quadratic(&fig12, 0), 0.9, base_eps));
    let (a0, a1, a2) = (amp(&shuffle), amp(&b095), amp(&b09));
    verdicts.push(Verdict {
        id: 5,
        title: "beta2 monotonicity",
        pass: a0 <= a1 && a1 <= a2,
        detail: format!("mean A at beta2 0.999 / 0.95 / 0.9: {a0:.6} / {a1:.6} / {a2:.6}"),
    });

    // 6
    let point = |b2: &str, eps: &str| {
        let k = fig12
            .points()
            .iter()
            .position(|p| p.assignments == [("beta2".to_string(), b2.to_string()), ("epsilon".to_string(), eps.to_string())])
            .expect("sweep point present");
        quadratic(&fig12, k)
    };
    let unstable = execute(&point("0.7", "1e-8"));
    let stabilised = execute(&point("0.7", "1e-5"));
    let final_loss = |r: &Run| r.result.epochs.last().map(|e| e.mean_batch_loss);
    let complete = !stabilised.result.diverged
        && stabilised.result.epochs.len() == reference.num_epochs
        && stabilised.result.trace.iter().all(|r| r.batch_loss.is_finite());
    let inferior = final_loss(&stabilised).zip(final_loss(&shuffle)).is_some_and(|(s, r)| s > r);
    verdicts.push(Verdict {
        id: 6,
        title: "beta2 = 0.7 divergence and epsilon stabilization",
        pass: unstable.result.diverged && complete && inferior,
        detail: format!(
            "eps 1e-8: diverged {} (final mean loss {}, max batch loss {:.3e}); eps 1e-5: completed {complete}, final mean loss {} vs beta2 0.999 {}",
            unstable.result.diverged,
            fmt(final_loss(&unstable)),
            unstable.result.trace.iter().map(|r| r.batch_loss).fold(0.0, f64::max),
            fmt(final_loss(&stabilised)),
            fmt(final_loss(&shuffle))
        ),
    });

    // 7
    let mut rms_cfg = reference;
    rms_cfg.probes.tracked_batch = None;
    rms_cfg.num_epochs = 10;
    if let OptimizerKind::Adam(a) = reference.optimizer {
        rms_cfg.optimizer = OptimizerKind::RmsProp(a);
    }
    let rms = execute(&rms_cfg);
    let ratio = rms.esp.epoch(10).map(|m| m.rise / m.l_start);
    verdicts.push(Verdict {
        id: 7,
        title: "RMSProp subtle ESP",
        pass: ratio.is_some_and(|r| (0.02..=0.30).contains(&r)),
        detail: format!("epoch 10 R/L_start {}", fmt(ratio)),
    });

    // 8
    let toy = |seq, b1| {
        let r = run_toy(seq, b1, TOY_DEFAULT_LR, TOY_DEFAULT_EPOCHS).expect("valid toy");
        oscillation_amplitude(&r, TOY_AMPLITUDE_STEPS)
    };
    let (tf, tr, tm) = (toy(ToySequencing::Fixed, 0.0), toy(ToySequencing::Reversed, 0.0), toy(ToySequencing::Reversed, 0.9));
    verdicts.push(Verdict {
        id: 8,
        title: "Toy ordering",
        pass: tf < tr && tr < tm,
        detail: format!(
            "amplitude fixed {tf:.6}, reversed {tr:.6}, reversed+momentum {tm:.6} (lr {TOY_DEFAULT_LR}, {TOY_DEFAULT_EPOCHS} epochs, last {TOY_AMPLITUDE_STEPS} steps)"
        ),
    });

    // 9
    let ns = nshape_sweep(&reference_vectors(), &unit_grid(100)).expect("valid vectors");
    let at = |b: f64| ns.points.iter().find(|p| (p.beta2 - b).abs() < 1e-12);
    let (c0, c5, c1) = (at(0.0).map(|p| p.cosine), at(0.5).map(|p| p.cosine), at(1.0).map(|p| p.cosine));
    let dot0 = at(0.0).map(|p| p.dot);
    verdicts.push(Verdict {
        id: 9,
        title: "n-shape sign pattern",
        pass: c0.is_some_and(|c| c < 0.0)
            && c1.is_some_and(|c| c < 0.0)
            && c5.is_some_and(|c| c > 0.0)
            && dot0.is_some_and(|d| (d + 385.0).abs() <= 1e-9),
        detail: format!("cosine at 0 / 0.5 / 1: {} / {} / {}; dot at 0: {}", fmt(c0), fmt(c5), fmt(c1), fmt(dot0)),
    });

    // 10
    let closed = expected_overlap(10_000, 100).expect("valid sizes");
    let (ov, ov_t) = timed(|| boundary_overlap_stats(10_000, 100, reference.seed, 100_000).expect("valid sizes"));
    verdicts.push(Verdict {
        id: 10,
        title: "Overlap statistic",
        pass: closed == 1.0 && (ov.mean - 1.0).abs() <= 3.0 * ov.std_error,
        detail: format!(
            "mean {:.5} +- {:.5} over {} boundaries ({:.1}s); closed form {closed}",
            ov.mean,
            ov.std_error,
            ov.trials,
            ov_t.as_secs_f64()
        ),
    });

    // 11
    let suites = property_suites();
    verdicts.push(Verdict {
        id: 11,
        title: "Property suites",
        pass: suites.iter().all(|(_, r)| r.is_ok()),
        detail: suites
            .iter()
            .map(|(n, r)| match r {
                Ok(()) => format!("{n} ok"),
                Err(e) => format!("{n} FAILED ({e})"),
            })
            .collect::<Vec<_>>()
            .join("; "),
    });

    // 12
    let (b1, b2) = match reference.optimizer {
        OptimizerKind::Adam(a) => (a.beta1, a.beta2),
        _ => unreachable!(),
    };
    let g = fit_g_norm(&series(&shuffle.result, |r| Some(r.g_norm), usize::MAX), b2);
    let m = fit_m_norm(&series(&shuffle.result, |r| Some(r.m_norm), usize::MAX), b1, b2);
    let before = tracked - 1;
    let dx = fit_dot_dtheta(&series(&shuffle.result, |r| r.probe.map(|p| p.dot_dtheta), before), b1, b2);
    let g_ok = g.as_ref().is_ok_and(|f| f.coeff("b_g").unwrap() > 0.0 && f.r_squared > 0.5);
    let m_ok = m.as_ref().is_ok_and(|f| f.coeff("a_m").unwrap() > 0.0 && f.r_squared > 0.5);
    let dx_ok = dx.as_ref().is_ok_and(|f| f.evaluate(1.0) < 0.0 && f.intercept() > 0.0 && f.r_squared > 0.5);
    verdicts.push(Verdict {
        id: 12,
        title: "Dynamics-model shapes on the reference run",
        pass: g_ok && m_ok && dx_ok,
        detail: format!(
            "epoch {FIT_EPOCH}: g_norm [a_g, b_g] {} ({}); m_norm [a_m, b_m, c_m] {} ({}); dot_dtheta t < {tracked} [a, b, c, d] {} ({})",
            fit_summary(&g),
            if g_ok { "ok" } else { "fails" },
            fit_summary(&m),
            if m_ok { "ok" } else { "fails" },
            fit_summary(&dx),
            if dx_ok { "ok" } else { "fails" },
        ),
    });

    println!();
    for v in &verdicts {
        println!("C{:<2} {} {}: {}", v.id, if v.pass { "PASS" } else { "FAIL" }, v.title, v.detail);
    }
    println!();
    for line in diagnostics(&shuffle.result, tracked) {
        println!("info: {line}");
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("\nacceptance: {passed}/{} criteria pass", verdicts.len());
    if passed == verdicts.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

/// Probe-based properties of the reference run, reported without a verdict.
fn diagnostics(result: &RunResult, tracked: usize) -> Vec<String> {
    let rows: Vec<_> = result.epoch_rows(FIT_EPOCH).collect();
    let probe = |t: usize| rows.get(t - 1).and_then(|r| r.probe);
    let mut out = Vec::new();
    if let (Some(at), Some(after)) = (probe(tracked), probe(tracked + 1)) {
        out.push(format!(
            "epoch {FIT_EPOCH}: tracked loss {:.6} at t = {tracked}, {:.6} at t = {}",
            at.tracked_loss,
            after.tracked_loss,
            tracked + 1
        ));
    }
    let before: Vec<_> = rows.iter().filter(|r| r.step < tracked).filter_map(|r| r.probe).collect();
    if !before.is_empty() {
        let pos = before.iter().filter(|p| p.dot_g > 0.0).count() as f64 / before.len() as f64;
        let zero = before.iter().filter(|p| p.dot_g == 0.0).count();
        out.push(format!("epoch {FIT_EPOCH}: fraction of t < {tracked} with dot_g > 0: {pos:.3} ({zero} exactly zero)"));
    }
    if let Some(l0) = probe(1).map(|p| p.tracked_loss) {
        let worst = (1..=tracked)
            .filter_map(|t| {
                let p = probe(t)?;
                let prev = if t > 1 { probe(t - 1)?.cum_dot } else { 0.0 };
                Some(((l0 + prev) - p.tracked_loss).abs() / p.tracked_loss.abs().max(1e-12))
            })
            .fold(0.0, f64::max);
        out.push(format!("epoch {FIT_EPOCH}: worst relative error of l0 + cumulative dot vs tracked loss for t <= {tracked}: {worst:.3e}"));
    }
    out
}

type Suite = (&'static str, Result<(), String>);

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: 64,
        failure_persistence: None,
        ..Config::default()
    })
}

fn check(name: &'static str, f: impl FnOnce(&mut TestRunner) -> Result<(), String>) -> Suite {
    (name, f(&mut runner()))
}

fn property_suites() -> Vec<Suite> {
    vec![
        check("finite-difference gradient", |r| {
            r.run(&(any::<u64>(), 2usize..40, prop::collection::vec(-4.0f64..4.0, 40)), |(seed, n, x)| {
                let p = QuadraticProblem::generate(seed, n, n).unwrap();
                let x = &x[..n];
                let batch = Batch::new((0..n).step_by(2).collect());
                let g = p.batch_grad(&batch, x).unwrap().to_dense();
                let h = 1e-6;
                for j in 0..n {
                    let (mut up, mut dn) = (x.to_vec(), x.to_vec());
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (p.batch_loss(&batch, &up).unwrap() - p.batch_loss(&batch, &dn).unwrap()) / (2.0 * h);
                    prop_assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "coord {j}: fd {fd} vs {}", g[j]);
                }
                Ok(())
            })
            .map_err(|e| e.to_string())
        }),
        check("noiseless OLS recovery (five models)", |r| {
            let coeffs = prop::array::uniform4(0.1f64..5.0);
            r.run(&(coeffs, 0.5f64..0.95, 0.9f64..0.999, 0usize..=100), |(c, beta1, beta2, dk)| {
                let s2 = (1.0 - beta2).sqrt();
                let t: Vec<f64> = (1..=200).map(f64::from).collect();
                let make = |f: &dyn Fn(f64) -> f64| t.iter().map(|&t| (t, f(t))).collect::<Vec<_>>();
                let close = |got: &[f64], want: &[f64]| -> Result<(), TestCaseError> {
                    for (g, w) in got.iter().zip(want) {
                        prop_assert!((g - w).abs() <= 1e-6, "got {got:?}, want {want:?}");
                    }
                    Ok(())
                };
                let g = fit_g_norm(&make(&|t| c[0] + c[1] * s2 * t), beta2).unwrap();
                close(&g.coeffs, &c[..2])?;
                let m = fit_m_norm(&make(&|t| c[0] * beta1.powf(t) + c[1] * s2 * t + c[2]), beta1, beta2).unwrap();
                close(&m.coeffs, &c[..3])?;
                let v = fit_v_norm(&make(&|t| c[0] + c[1] * t + c[2] * (1.0 - beta2) * t * t), beta2).unwrap();
                close(&v.coeffs, &c[..3])?;
                let dm = fit_dot_m(&make(&|t| c[0] * beta1.powf(t) + c[1] * s2 * t - c[2]), beta1, beta2).unwrap();
                close(&dm.coeffs, &[c[0], c[1], -c[2]])?;
                let d = dk as f64 * 0.5;
                let dx = fit_dot_dtheta(&make(&|t| -c[0] * beta1.powf(t) / t + c[1] * s2 + c[2] / (t + d)), beta1, beta2).unwrap();
                close(&dx.coeffs, &[c[0], c[1], c[2], d])?;
                Ok(())
            })
            .map_err(|e| e.to_string())
        }),
        check("Adam/RMSProp reduction identity", |r| {
            let grads = prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 6), 1..8);
            r.run(&(grads, 1e-4f64..1.0, 0.5f64..0.9999, 0.0f64..1e-3), |(grads, lr, beta2, eps)| {
                let adam = AdamConfig::new(lr, 0.0, beta2).with_epsilon(eps).with_bias_correction(false);
                let rms = AdamConfig::new(lr, 0.9, beta2).with_epsilon(eps);
                let (mut sa, mut sr) = (OptimizerState::new(6), OptimizerState::new(6));
                let params = [0.0; 6];
                for g in &grads {
                    let a = adam_step(&mut sa, &adam, g, &params).unwrap();
                    let b = rmsprop_step(&mut sr, &rms, g, &params).unwrap();
                    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                    prop_assert_eq!(bits(&a.delta_theta), bits(&b.delta_theta));
                }
                Ok(())
            })
            .map_err(|e| e.to_string())
        }),
        check("permutation completeness and reverse involution", |r| {
            r.run(&(1usize..200, 1usize..20, any::<u64>()), |(n, b, seed)| {
                let b = b.min(n);
                for policy in [SamplingPolicy::ShufflePerEpoch, SamplingPolicy::FixedOrder, SamplingPolicy::ReverseAlternating] {
                    let mut s = EpochSchedule::new(policy, n, b, seed).unwrap();
                    let mut epochs: Vec<Vec<usize>> = Vec::new();
                    for _ in 0..4 {
                        let flat: Vec<usize> = (0..s.batches_per_epoch()).flat_map(|_| s.next_batch().indices).collect();
                        let mut sorted = flat.clone();
                        sorted.sort_unstable();
                        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
                        epochs.push(flat);
                    }
                    if policy == SamplingPolicy::ReverseAlternating {
                        for e in 0..3 {
                            let mut rev = epochs[e].clone();
                            rev.reverse();
                            prop_assert_eq!(&rev, &epochs[e + 1]);
                        }
                        prop_assert_eq!(&epochs[0], &epochs[2]);
                    }
                }
                Ok(())
            })
            .map_err(|e| e.to_string())
        }),
        check("trace CSV round trip", |r| {
            let mut cfg = RunConfig::reference(3);
            cfg.problem = ProblemSpec::square(3, 300);
            cfg.num_epochs = 3;
            cfg.probes.tracked_batch = Some(17);
            let result = run(&cfg).map_err(|e| e.to_string())?;
            let mut buf = Vec::new();
            write_trace(&mut buf, &result.trace).map_err(|e| e.to_string())?;
            let back = read_trace(buf.as_slice(), "trace").map_err(|e| e.to_string())?;
            if back != result.trace {
                return Err("reference-style trace did not round-trip".into());
            }
            r.run(&prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 1..50), |vals| {
                let rows: Vec<_> = vals
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| {
                        let mut row = result.trace[k];
                        row.batch_loss = v;
                        row.g_norm = -v;
                        row
                    })
                    .collect();
                let mut buf = Vec::new();
                write_trace(&mut buf, &rows).unwrap();
                let back = read_trace(buf.as_slice(), "prop").unwrap();
                prop_assert_eq!(back, rows);
                Ok(())
            })
            .map_err(|e| e.to_string())
        }),
        check("telescoping identity of the predicted curve", |r| {
            r.run(&(prop::array::uniform4(0.0f64..5.0), 0.5f64..0.95, -3.0f64..3.0), |(c, beta1, l0)| {
                let d = (c[3] * 10.0).round() * 0.5;
                let s2 = (1.0 - 0.99f64).sqrt();
                let data: Vec<(f64, f64)> =
                    (1..=150).map(|t| (t as f64, -c[0] * beta1.powi(t) / t as f64 + c[1] * s2 + c[2] / (t as f64 + d))).collect();
                let fit = fit_dot_dtheta(&data, beta1, 0.99).unwrap();
                let curve = predict_loss_curve(&fit, l0, 150).unwrap();
                prop_assert_eq!(curve.values[0], l0);
                for t in 1..150 {
                    let diff = curve.values[t] - curve.values[t - 1];
                    let want = fit.evaluate(t as f64);
                    let scale = curve.values[t].abs().max(curve.values[t - 1].abs()).max(1.0);
                    prop_assert!((diff - want).abs() <= 1e-12 * scale, "t {t}: {diff} vs {want}");
                }
                Ok(())
            })
            .map_err(|e| e.to_string())
        }),
    ]
}
