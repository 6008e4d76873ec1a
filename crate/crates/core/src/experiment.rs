//! The experiment suite behind the command-line front end.
//!
//! Every command takes a validated [`RunConfig`], writes its artifacts into
//! `out_dir` and returns the numbers it wrote so callers can check them
//! without re-reading files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::channel::{GainMatrix, SystemConfig};
use crate::checkpoint::{self, StoredCheckpoint};
use crate::config::{RunConfig, SweepPolicy};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{sigmoid, AnyModel, CnnModel, HybridModel, ModelFamily, PolicyModel};
use crate::rate::{
    binomial_capped, exhaustive_best_schedule, greedy_schedule, random_schedule_mean, sum_rate, Objective,
    MAX_COMBINATIONS,
};
use crate::report::{mean_std, metrics_table, Table};
use crate::rng;
use crate::training::{self, sample_policy, validate, EpochMetrics, TrainOutcome, ValidationMode};

pub const DATASET_FILE: &str = "dataset.bin";
pub const METRICS_FILE: &str = "train_metrics.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const COMPARE_FILE: &str = "compare.csv";
pub const COMPARE_SUMMARY_FILE: &str = "compare_summary.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Antennas,
    Snr,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "antennas" | "m" => Ok(SweepAxis::Antennas),
            "snr" | "snr_db" => Ok(SweepAxis::Snr),
            other => Err(Error::config(format!("unknown sweep axis '{other}' (antennas | snr)"))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Antennas => "antennas",
            SweepAxis::Snr => "snr",
        })
    }
}

/// The configured dataset file, or a fresh one generated from the system settings.
pub fn load_or_generate(cfg: &RunConfig) -> Result<Dataset> {
    let ds = match &cfg.dataset {
        Some(path) => Dataset::read(path)?,
        None => Dataset::generate(&cfg.system, cfg.train_samples, cfg.val_samples)?,
    };
    if ds.system.users != cfg.system.users {
        return Err(Error::data(format!(
            "dataset has K = {} users but the config says K = {}",
            ds.system.users, cfg.system.users
        )));
    }
    if ds.train_samples == 0 || ds.records.len() == ds.train_samples {
        return Err(Error::data("dataset needs both training and validation samples"));
    }
    Ok(ds)
}

/// Freshly initialised model of `family`, seeded from `seed`.
pub fn init_model(family: ModelFamily, users: usize, qubits: usize, cfg: &RunConfig, seed: u64) -> AnyModel {
    let mut r = rng::substream(seed, "init", 0);
    match family {
        ModelFamily::Hybrid => {
            let mut m = HybridModel::init(users, qubits, cfg.layers, &mut r);
            m.grad_method = cfg.gradient;
            m.into()
        }
        ModelFamily::Cnn => CnnModel::init(users, &mut r).into(),
    }
}

/// Deterministic top-L validation reward of a model.
pub fn det_reward(model: &AnyModel, val: &[GainMatrix], budget: usize) -> Result<f64> {
    // The generator is never drawn from in deterministic mode.
    validate(model, val, ValidationMode::Deterministic, budget, &mut rng::substream(0, "unused", 0))
}

fn train_on(
    cfg: &RunConfig,
    system: &SystemConfig,
    family: ModelFamily,
    qubits: usize,
    ds: &Dataset,
) -> Result<TrainOutcome<AnyModel>> {
    let model = init_model(family, system.users, qubits, cfg, system.seed);
    let tc = training::TrainConfig { seed: system.seed, budget: system.budget, ..cfg.train.clone() };
    training::train(model, &ds.train(), &ds.val(), &tc)
}

pub fn cmd_gen(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let ds = Dataset::generate(&cfg.system, cfg.train_samples, cfg.val_samples)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join(DATASET_FILE);
    ds.write(&path)?;
    log::info!("wrote {} samples to {}", ds.records.len(), path.display());
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
    /// Deterministic validation reward of the saved (best) model.
    pub val_det: f64,
    pub param_count: usize,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let ds = load_or_generate(cfg)?;
    let system = SystemConfig { budget: cfg.system.budget, seed: cfg.system.seed, ..ds.system.clone() };
    let outcome = train_on(cfg, &system, cfg.model, cfg.qubits, &ds)?;
    let best = outcome.best;
    let val_det = det_reward(&best.model, &ds.val(), cfg.system.budget)?;
    let param_count = best.model.param_count();
    let hash = cfg.hash();
    metrics_table(&outcome.history).write(&cfg.out_dir.join(METRICS_FILE), "train_metrics", &hash)?;
    let best_epoch = best.epoch;
    checkpoint::save(
        &cfg.out_dir,
        &StoredCheckpoint { checkpoint: best, config_hash: hash, budget: cfg.system.budget },
    )?;
    log::info!("{} model, {param_count} parameters, best epoch {best_epoch}, val_det {val_det:.4}", cfg.model);
    Ok(TrainReport { history: outcome.history, best_epoch, val_det, param_count })
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub table: Table,
    pub mean_det: f64,
    pub mean_sto: f64,
    pub mean_oracle: Option<f64>,
    pub mean_greedy: f64,
    pub mean_random: Option<f64>,
}

/// Score a checkpoint on the validation split against the reference schedulers.
pub fn cmd_eval(cfg: &RunConfig, checkpoint_path: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    let stored = checkpoint::load(checkpoint_path)?;
    let model = stored.checkpoint.model;
    let budget = cfg.system.budget;
    if model.users() != cfg.system.users {
        return Err(Error::config(format!(
            "checkpoint was trained for K = {} users, config says K = {}",
            model.users(),
            cfg.system.users
        )));
    }
    if stored.budget != budget {
        return Err(Error::config(format!("checkpoint was trained with L = {}, config says L = {budget}", stored.budget)));
    }
    let ds = load_or_generate(cfg)?;
    let val = ds.val();
    let enumerable = binomial_capped(cfg.system.users, budget, MAX_COMBINATIONS) <= MAX_COMBINATIONS;

    let rows: Vec<[Option<f64>; 5]> = val
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let logits = model.logits(g)?;
            let det = sum_rate(g, &crate::model::top_l_select(&logits, budget));
            let pi: Vec<f64> = logits.iter().map(|s| sigmoid(*s)).collect();
            let sto = sum_rate(g, &sample_policy(&pi, 0.0, &mut rng::substream(cfg.system.seed, "eval_sto", i as u64)));
            let oracle = if enumerable { Some(exhaustive_best_schedule(g, budget, Objective::SumRate)?.1) } else { None };
            let greedy = sum_rate(g, &greedy_schedule(g, budget));
            let random = if enumerable { Some(random_schedule_mean(g, budget)?) } else { None };
            Ok([Some(det), Some(sto), oracle, Some(greedy), random])
        })
        .collect::<Result<_>>()?;

    let mean_of = |j: usize| -> Option<f64> {
        let xs: Option<Vec<f64>> = rows.iter().map(|r| r[j]).collect();
        xs.map(|xs| xs.iter().sum::<f64>() / xs.len() as f64)
    };
    let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut table = Table::new(&["sample", "policy_det", "policy_sto", "oracle", "greedy", "random"]);
    for (i, r) in rows.iter().enumerate() {
        let mut row = vec![(ds.train_samples + i).to_string()];
        row.extend(r.iter().map(|x| cell(*x)));
        table.push(row);
    }
    let means: Vec<Option<f64>> = (0..5).map(mean_of).collect();
    let mut row = vec!["mean".to_string()];
    row.extend(means.iter().map(|x| cell(*x)));
    table.push(row);
    table.write(&cfg.out_dir.join(EVAL_FILE), "eval", &cfg.hash())?;

    Ok(EvalReport {
        table,
        mean_det: means[0].expect("policy columns are always present"),
        mean_sto: means[1].expect("policy columns are always present"),
        mean_oracle: means[2],
        mean_greedy: means[3].expect("greedy is always present"),
        mean_random: means[4],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub users: usize,
    pub antennas: usize,
    pub snr_db: f64,
    pub qubits: Option<usize>,
    pub mean_sumrate: f64,
    pub std_sumrate: f64,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<f64>,
}

/// Mean validation sum-rate of `policy` on one dataset.
fn policy_score(cfg: &RunConfig, system: &SystemConfig, ds: &Dataset) -> Result<f64> {
    let val = ds.val();
    let l = system.budget;
    let mean = |f: &dyn Fn(&GainMatrix) -> Result<f64>| -> Result<f64> {
        Ok(val.iter().map(f).collect::<Result<Vec<_>>>()?.iter().sum::<f64>() / val.len() as f64)
    };
    match cfg.sweep_policy {
        SweepPolicy::Trained => {
            let outcome = train_on(cfg, system, cfg.model, cfg.qubits, ds)?;
            det_reward(&outcome.best.model, &val, l)
        }
        SweepPolicy::Oracle => mean(&|g| Ok(exhaustive_best_schedule(g, l, Objective::SumRate)?.1)),
        SweepPolicy::Greedy => mean(&|g| Ok(sum_rate(g, &greedy_schedule(g, l)))),
        SweepPolicy::Random => mean(&|g| random_schedule_mean(g, l)),
    }
}

/// Sweep one system parameter; every point reuses the same seeds.
pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    let mut values = values.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let seeds = cfg.seeds();
    let systems: Vec<SystemConfig> = values
        .iter()
        .map(|&v| {
            let mut s = cfg.system.clone();
            match axis {
                SweepAxis::Antennas => {
                    if v < 1.0 || v.fract() != 0.0 {
                        return Err(Error::config(format!("antenna count {v} is not a positive integer")));
                    }
                    s.antennas = v as usize;
                }
                SweepAxis::Snr => s.snr_db = v,
            }
            s.validate().map_err(|e| Error::config(e.to_string()))?;
            Ok(s)
        })
        .collect::<Result<_>>()?;

    let points: Vec<(usize, u64)> = (0..systems.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let scores: Vec<f64> = points
        .par_iter()
        .map(|&(i, seed)| {
            let system = SystemConfig { seed, ..systems[i].clone() };
            let ds = Dataset::generate(&system, cfg.train_samples, cfg.val_samples)?;
            policy_score(cfg, &system, &ds)
        })
        .collect::<Result<_>>()?;

    let quantum = cfg.sweep_policy == SweepPolicy::Trained && cfg.model == ModelFamily::Hybrid;
    let rows: Vec<SweepRow> = systems
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let per_seed = scores[i * seeds.len()..(i + 1) * seeds.len()].to_vec();
            let (mean_sumrate, std_sumrate) = mean_std(&per_seed);
            SweepRow {
                axis_value: values[i],
                users: s.users,
                antennas: s.antennas,
                snr_db: s.snr_db,
                qubits: quantum.then_some(cfg.qubits),
                mean_sumrate,
                std_sumrate,
                seeds: seeds.clone(),
                per_seed,
            }
        })
        .collect();

    let mut table =
        Table::new(&["axis_value", "users", "antennas", "snr_db", "qubits", "mean_sumrate", "std_sumrate", "seeds"]);
    for r in &rows {
        table.push(vec![
            r.axis_value.to_string(),
            r.users.to_string(),
            r.antennas.to_string(),
            r.snr_db.to_string(),
            r.qubits.map(|q| q.to_string()).unwrap_or_default(),
            r.mean_sumrate.to_string(),
            r.std_sumrate.to_string(),
            r.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "),
        ]);
    }
    table.write(&cfg.out_dir.join(SWEEP_FILE), &format!("sweep axis={axis} policy={}", cfg.sweep_policy), &cfg.hash())?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareCell {
    pub snr_db: f64,
    pub seed: u64,
    pub hybrid: f64,
    pub cnn: f64,
    /// Exact mean of a uniformly random size-L schedule on the same validation set.
    pub random: f64,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub cells: Vec<CompareCell>,
    pub hybrid_params: usize,
    pub cnn_params: usize,
}

impl CompareReport {
    pub fn hybrid_wins(&self) -> usize {
        self.cells.iter().filter(|c| c.hybrid >= c.cnn).count()
    }

    pub fn win_fraction(&self) -> f64 {
        self.hybrid_wins() as f64 / self.cells.len() as f64
    }

    /// `(snr, hybrid mean, cnn mean, random mean)` per SNR point.
    pub fn per_snr(&self) -> Vec<(f64, f64, f64, f64)> {
        let mut snrs: Vec<f64> = self.cells.iter().map(|c| c.snr_db).collect();
        snrs.dedup();
        snrs.iter()
            .map(|&s| {
                let cs: Vec<&CompareCell> = self.cells.iter().filter(|c| c.snr_db == s).collect();
                let avg = |f: fn(&CompareCell) -> f64| cs.iter().map(|c| f(c)).sum::<f64>() / cs.len() as f64;
                (s, avg(|c| c.hybrid), avg(|c| c.cnn), avg(|c| c.random))
            })
            .collect()
    }
}

/// Train the hybrid model and the CNN on identical datasets and seeds.
pub fn cmd_compare(cfg: &RunConfig) -> Result<CompareReport> {
    cfg.validate()?;
    let mut snrs = cfg.compare_snr.clone();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    let seeds = cfg.seeds();
    let points: Vec<(f64, u64)> = snrs.iter().flat_map(|&s| seeds.iter().map(move |&seed| (s, seed))).collect();

    let cells: Vec<CompareCell> = points
        .par_iter()
        .map(|&(snr_db, seed)| {
            let system = SystemConfig { snr_db, seed, ..cfg.system.clone() };
            let ds = Dataset::generate(&system, cfg.train_samples, cfg.val_samples)?;
            let val = ds.val();
            let score = |family| -> Result<f64> {
                let outcome = train_on(cfg, &system, family, cfg.compare_qubits, &ds)?;
                det_reward(&outcome.best.model, &val, system.budget)
            };
            let hybrid = score(ModelFamily::Hybrid)?;
            let cnn = score(ModelFamily::Cnn)?;
            let random = val.iter().map(|g| random_schedule_mean(g, system.budget)).sum::<Result<f64>>()? / val.len() as f64;
            Ok(CompareCell { snr_db, seed, hybrid, cnn, random })
        })
        .collect::<Result<_>>()?;

    let hybrid_params = init_model(ModelFamily::Hybrid, cfg.system.users, cfg.compare_qubits, cfg, 0).param_count();
    let cnn_params = init_model(ModelFamily::Cnn, cfg.system.users, cfg.compare_qubits, cfg, 0).param_count();
    let report = CompareReport { cells, hybrid_params, cnn_params };
    log::info!("trainable parameters: hybrid {hybrid_params}, cnn {cnn_params}");

    let hash = cfg.hash();
    let mut table = Table::new(&["snr_db", "model", "seed", "val_det_reward"]);
    for &s in &snrs {
        for (name, pick) in [("hybrid", (|c: &CompareCell| c.hybrid) as fn(&CompareCell) -> f64), ("cnn", |c| c.cnn)] {
            for c in report.cells.iter().filter(|c| c.snr_db == s) {
                table.push(vec![s.to_string(), name.into(), c.seed.to_string(), pick(c).to_string()]);
            }
        }
    }
    table.write(&cfg.out_dir.join(COMPARE_FILE), "compare", &hash)?;

    let mut summary = Table::new(&[
        "snr_db",
        "hybrid_mean",
        "cnn_mean",
        "random_mean",
        "hybrid_wins",
        "cells",
        "hybrid_params",
        "cnn_params",
    ]);
    for (s, h, c, r) in report.per_snr() {
        let cs: Vec<&CompareCell> = report.cells.iter().filter(|x| x.snr_db == s).collect();
        summary.push(vec![
            s.to_string(),
            h.to_string(),
            c.to_string(),
            r.to_string(),
            cs.iter().filter(|x| x.hybrid >= x.cnn).count().to_string(),
            cs.len().to_string(),
            hybrid_params.to_string(),
            cnn_params.to_string(),
        ]);
    }
    let n = report.cells.len() as f64;
    summary.push(vec![
        "all".into(),
        (report.cells.iter().map(|c| c.hybrid).sum::<f64>() / n).to_string(),
        (report.cells.iter().map(|c| c.cnn).sum::<f64>() / n).to_string(),
        (report.cells.iter().map(|c| c.random).sum::<f64>() / n).to_string(),
        report.hybrid_wins().to_string(),
        report.cells.len().to_string(),
        hybrid_params.to_string(),
        cnn_params.to_string(),
    ]);
    summary.write(&cfg.out_dir.join(COMPARE_SUMMARY_FILE), "compare_summary", &hash)?;
    log::info!("hybrid >= cnn in {}/{} cells", report.hybrid_wins(), report.cells.len());
    Ok(report)
}
