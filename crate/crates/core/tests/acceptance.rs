//! Acceptance gate: one line per criterion, nonzero exit if any fails.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use common::*;
use qsched::channel::ChannelModel;
use qsched::config::{RunConfig, SweepPolicy};
use qsched::dataset::Dataset;
use qsched::experiment::{self, SweepAxis};
use qsched::model::HybridModel;
use qsched::rate::*;
use qsched::rng;
use qsched::training::{self, TrainConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn quantum_gradients() -> Verdict {
    let start = Instant::now();
    let mut r = stream("acceptance_shift_fd", 0);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let (n, layers) = ([2, 4, 6][trial % 3], [1, 2, 3][(trial / 3) % 3]);
        let (z, params) = random_circuit(&mut r, n, layers);
        worst = worst.max(shift_vs_fd(&z, &params, 1e-4));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(worst < 1e-5 && secs < 30.0, format!("max |shift - fd| = {worst:.2e} (< 1e-5), {secs:.2} s (< 30 s)"))
}

fn simulator_fidelity() -> Verdict {
    let mut r = stream("acceptance_dense", 0);
    let mut dense: f64 = 0.0;
    for trial in 0..50 {
        let (z, params) = random_circuit(&mut r, 1 + trial % 5, trial % 4);
        dense = dense.max(dense_vs_gatewise(&z, &params));
    }
    let mut r = stream("acceptance_norm", 0);
    let drift = (0..1000).map(|i| worst_norm_drift(&mut r, 1 + i % 8, 1 + i % 3)).fold(0.0, f64::max);
    verdict(
        dense < 1e-10 && drift < 1e-10,
        format!("dense vs gate-wise {dense:.2e} (< 1e-10), per-gate norm drift {drift:.2e} (< 1e-10)"),
    )
}

fn model_gradients() -> Verdict {
    let mut r = stream("acceptance_model_fd", 0);
    let g3 = random_gains(&mut r, 3, 1.0);
    let c3 = uniform(&mut r, 3, -1.0, 1.0);
    let hybrid = model_fd_error(&hybrid_fixture(3, 3, 1, 0), &g3, &c3, 1e-5);
    let g4 = random_gains(&mut r, 4, 1.0);
    let c4 = uniform(&mut r, 4, -1.0, 1.0);
    let cnn = model_fd_error(&cnn_fixture(4, 0), &g4, &c4, 1e-6);
    verdict(hybrid < 1e-4 && cnn < 1e-4, format!("hybrid {hybrid:.2e}, cnn {cnn:.2e} (< 1e-4)"))
}

fn rate_oracle() -> Verdict {
    let start = Instant::now();
    let sys = mc_system();
    let model = ChannelModel::new(&sys).unwrap();
    let sample = model.sample("sample", 0).unwrap();
    let (xi, approx) = exhaustive_best_schedule(&sample.gains, sys.budget, Objective::SumRate).unwrap();
    let mc: f64 = mc_ergodic_rate(&model, &sample.users, &xi, sys.beta(), 20_000, &mut rng::substream(sys.seed, "mc", 0))
        .unwrap()
        .iter()
        .sum();
    let gap = (approx - mc).abs() / mc;
    let all = ScheduleVector::all(sys.users);
    let mc_all: f64 =
        mc_ergodic_rate(&model, &sample.users, &all, sys.beta(), 20_000, &mut rng::substream(sys.seed, "mc", 1))
            .unwrap()
            .iter()
            .sum();
    let gap_all = (sum_rate(&sample.gains, &all) - mc_all).abs() / mc_all;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        gap <= 0.5 && secs < 120.0,
        format!(
            "schedule {xi}: approx {approx:.4} vs MC {mc:.4}, gap {:.2}% (<= 50%); all users gap {:.2}%; {secs:.1} s",
            100.0 * gap,
            100.0 * gap_all
        ),
    )
}

fn scheduler_quality() -> Verdict {
    let start = Instant::now();
    let base = RunConfig::default();
    let (mut det, mut oracle, mut random, mut loss) = (0.0, 0.0, 0.0, 0.0);
    let seeds = base.seeds();
    let mut lines = Vec::new();
    for &seed in &seeds {
        let sys = qsched::channel::SystemConfig { seed, ..base.system.clone() };
        let ds = Dataset::generate(&sys, base.train_samples, base.val_samples).unwrap();
        let (train, val) = (ds.train(), ds.val());
        let model = HybridModel::init(sys.users, base.qubits, base.layers, &mut rng::substream(seed, "init", 0));
        let cfg = TrainConfig { seed, budget: sys.budget, ..base.train.clone() };
        let out = training::train(model, &train, &val, &cfg).unwrap();
        let d = experiment::det_reward(&out.best.model.clone().into(), &val, sys.budget).unwrap();
        let o = val.iter().map(|g| exhaustive_best_schedule(g, sys.budget, Objective::SumRate).unwrap().1).sum::<f64>()
            / val.len() as f64;
        let rnd = val.iter().map(|g| random_schedule_mean(g, sys.budget).unwrap()).sum::<f64>() / val.len() as f64;
        let tail = &out.history[out.history.len() - 5..];
        let l = tail.iter().map(|m| m.mean_loss).sum::<f64>() / 5.0;
        lines.push(format!("seed {seed}: det {d:.3} oracle {o:.3} random {rnd:.3} loss {l:.3}"));
        det += d / 3.0;
        oracle += o / 3.0;
        random += rnd / 3.0;
        loss += l / 3.0;
    }
    let secs = start.elapsed().as_secs_f64();
    let checks = [det >= 0.9 * oracle, det >= 1.2 * random, loss.abs() <= 0.5, secs < 900.0];
    verdict(
        checks.iter().all(|c| *c),
        format!(
            "det {det:.3} = {:.1}% of oracle (>= 90%) [{}], {:.1}% of random (>= 120%) [{}], final-5 loss {loss:.3} (|.| <= 0.5) [{}], {secs:.1} s; {}",
            100.0 * det / oracle,
            ok(checks[0]),
            100.0 * det / random,
            ok(checks[1]),
            ok(checks[2]),
            lines.join("; ")
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "miss"
    }
}

fn trend_reproduction(dir: &Path) -> Verdict {
    let mut cfg = RunConfig { out_dir: dir.join("snr"), sweep_policy: SweepPolicy::Oracle, ..Default::default() };
    let snr = experiment::cmd_sweep(&cfg, SweepAxis::Snr, &[0.0, 5.0, 10.0, 15.0, 20.0, 25.0]).unwrap();
    let snr_means: Vec<f64> = snr.iter().map(|r| r.mean_sumrate).collect();
    let snr_ok = snr_means.windows(2).all(|w| w[1] > w[0]);

    cfg.out_dir = dir.join("antennas");
    cfg.sweep_policy = SweepPolicy::Trained;
    let ant = experiment::cmd_sweep(&cfg, SweepAxis::Antennas, &[16.0, 32.0, 64.0]).unwrap();
    let ant_means: Vec<f64> = ant.iter().map(|r| r.mean_sumrate).collect();
    let ant_ok = ant_means.windows(2).all(|w| w[1] >= w[0]);
    let fmt = |xs: &[f64]| xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" < ");
    verdict(
        snr_ok && ant_ok,
        format!(
            "oracle SNR 0..25 dB: {} [{}]; trained hybrid M 16/32/64: {} [{}]",
            fmt(&snr_means),
            ok(snr_ok),
            fmt(&ant_means),
            ok(ant_ok)
        ),
    )
}

fn comparison(dir: &Path) -> Verdict {
    let cfg = RunConfig { out_dir: dir.to_path_buf(), ..Default::default() };
    let report = experiment::cmd_compare(&cfg).unwrap();
    let rows = qsched::report::Table::read(&dir.join(experiment::COMPARE_FILE)).unwrap().rows.len();
    let per = report.per_snr();
    let beat = per.iter().all(|(_, h, c, r)| h > r && c > r);
    let cells = per
        .iter()
        .map(|(s, h, c, r)| format!("{s} dB hybrid {h:.3} cnn {c:.3} random {r:.3}"))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(
        beat && rows == 2 * 3 * 3,
        format!(
            "{cells}; {rows} rows; hybrid >= cnn in {}/{} cells (win fraction {:.2}, reported only); params hybrid {} cnn {}",
            report.hybrid_wins(),
            report.cells.len(),
            report.win_fraction(),
            report.hybrid_params,
            report.cnn_params
        ),
    )
}

fn fairness() -> Verdict {
    let slots = heterogeneous_slots(500, 10.0);
    let msr = run_horizon(&slots, 2, HorizonPolicy::MaxSumRate, DEFAULT_PF_ALPHA, DEFAULT_PF_EPSILON).unwrap();
    let pf = run_horizon(&slots, 2, HorizonPolicy::ProportionalFair, DEFAULT_PF_ALPHA, DEFAULT_PF_EPSILON).unwrap();
    let min = |xs: &[f64]| xs.iter().cloned().fold(f64::INFINITY, f64::min);
    verdict(
        min(&pf) > min(&msr),
        format!(
            "min cumulative rate PF {:.2} vs max-sum-rate {:.2}; Jain {:.3} vs {:.3}",
            min(&pf),
            min(&msr),
            jain_index(&pf),
            jain_index(&msr)
        ),
    )
}

fn determinism(dir: &Path) -> Verdict {
    const SMALL: &[&str] = &[
        "--seed", "7", "--set", "epochs=3", "--set", "train_samples=32", "--set", "val_samples=8",
        "--set", "qubits=4", "--set", "compare_qubits=4", "--set", "compare_snr=10,20", "--set", "repeats=2",
    ];
    let run = |name: &str| {
        let root = dir.join(name);
        let ckpt = root.join("hybrid").display().to_string();
        let commands: Vec<(&str, Vec<&str>)> = vec![
            ("gen", vec!["gen"]),
            ("hybrid", vec!["train"]),
            ("cnn", vec!["train", "--model", "cnn"]),
            ("eval", vec!["eval", "--checkpoint", &ckpt]),
            ("sweep_snr", vec!["sweep", "--axis", "snr", "--values", "0,10,20"]),
            ("sweep_m", vec!["sweep", "--axis", "antennas", "--values", "8,16"]),
            ("compare", vec!["compare"]),
        ];
        for (sub, args) in &commands {
            let status = Command::new(env!("CARGO_BIN_EXE_qsched"))
                .args(args)
                .args(SMALL)
                .arg("--out")
                .arg(root.join(sub))
                .stdout(Stdio::null())
                .status()
                .unwrap();
            assert!(status.success(), "{args:?}");
        }
        root
    };
    let (a, b) = (run("a"), run("b"));
    let mut files = Vec::new();
    collect(&a, &a, &mut files);
    files.sort();
    let differing: Vec<&String> = files.iter().filter(|f| fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok()).collect();
    verdict(
        differing.is_empty() && files.len() >= 14,
        format!("{} artifacts compared byte-for-byte across two runs, {} differ {:?}", files.len(), differing.len(), differing),
    )
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            collect(root, &p, out);
        } else {
            out.push(p.strip_prefix(root).unwrap().display().to_string());
        }
    }
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict>)> = vec![
        ("1 quantum gradient correctness", Box::new(quantum_gradients)),
        ("2 simulator fidelity", Box::new(simulator_fidelity)),
        ("3 end-to-end model gradients", Box::new(model_gradients)),
        ("4 rate-math oracle", Box::new(rate_oracle)),
        ("5 scheduler quality", Box::new(scheduler_quality)),
        ("6 trend reproduction", Box::new(move || trend_reproduction(&t.join("trend")))),
        ("7 comparison harness", Box::new(move || comparison(&t.join("compare")))),
        ("8 fairness property", Box::new(fairness)),
        ("9 determinism", Box::new(move || determinism(&t.join("determinism")))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let v = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| verdict(false, format!("panicked: {:?}", e.downcast_ref::<String>())));
        println!("criterion {name}: {} | {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
