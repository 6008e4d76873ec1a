//! REINFORCE training of scheduling policies.
//!
//! Each epoch decays the exploration rate linearly and anneals the baseline
//! momentum on a cosine. Each batch samples Bernoulli schedules from the
//! sigmoid of the logits with epsilon-greedy exploration, scores them with the
//! matrix-based sum-rate (or proportional-fair) reward, updates the running
//! baseline, and takes a clipped Adam step on the score-function loss. After
//! every epoch the policy is validated both deterministically (top-L) and
//! stochastically (sampling), and the best deterministic score is kept as a
//! checkpoint.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::channel::GainMatrix;
use crate::error::{Error, Result};
use crate::model::{sigmoid, top_l_select, Normalizer, PolicyModel};
use crate::rate::{approx_rates, pf_objective, sum_rate, update_avg_rates, FairnessState, ScheduleVector};
use crate::rng;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside logarithms.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardMode {
    #[default]
    SumRate,
    ProportionalFair,
}

impl FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum_rate" | "sumrate" => Ok(RewardMode::SumRate),
            "pf" | "proportional_fair" => Ok(RewardMode::ProportionalFair),
            other => Err(Error::config(format!("unknown reward mode '{other}' (sum_rate | pf)"))),
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardMode::SumRate => "sum_rate",
            RewardMode::ProportionalFair => "pf",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub eps_init: f64,
    pub eps_floor: f64,
    /// Total exploration decay spread over all epochs.
    pub eps_decay: f64,
    pub alpha_max: f64,
    pub alpha_min: f64,
    /// Scheduled-user budget used for deterministic validation.
    pub budget: usize,
    pub reward_mode: RewardMode,
    pub pf_alpha: f64,
    pub pf_epsilon: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Record real elapsed time; when false the timing column is zero so
    /// reports are byte-reproducible.
    pub wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.01,
            clip_norm: 1.0,
            eps_init: 0.6,
            eps_floor: 0.05,
            eps_decay: 0.55,
            alpha_max: 0.7,
            alpha_min: 0.3,
            budget: 2,
            reward_mode: RewardMode::SumRate,
            pf_alpha: crate::rate::DEFAULT_PF_ALPHA,
            pf_epsilon: crate::rate::DEFAULT_PF_EPSILON,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 42,
            wall_clock: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("clip_norm", self.clip_norm),
            ("adam_eps", self.adam_eps),
            ("pf_epsilon", self.pf_epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.budget == 0 {
            return Err(Error::config("budget must be positive"));
        }
        if !(0.0..=1.0).contains(&self.eps_floor) || !(0.0..=1.0).contains(&self.eps_init) || self.eps_floor >= self.eps_init {
            return Err(Error::config("exploration rates must satisfy 0 <= eps_floor < eps_init <= 1"));
        }
        if self.eps_decay < 0.0 {
            return Err(Error::config("eps_decay must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.alpha_min) || !(0.0..=1.0).contains(&self.alpha_max) || self.alpha_min >= self.alpha_max {
            return Err(Error::config("baseline momentum must satisfy 0 <= alpha_min < alpha_max <= 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("Adam moments must lie in [0, 1)"));
        }
        if !(self.pf_alpha > 0.0 && self.pf_alpha <= 1.0) {
            return Err(Error::config("pf_alpha must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Exploration rate after `epoch` epochs: `max(floor, init - decay * epoch / E)`.
pub fn eps_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let e = cfg.epochs.max(1) as f64;
    (cfg.eps_init - cfg.eps_decay * epoch as f64 / e).max(cfg.eps_floor)
}

/// Cosine-annealed baseline momentum.
pub fn alpha_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let e = cfg.epochs.max(1) as f64;
    cfg.alpha_min + 0.5 * (cfg.alpha_max - cfg.alpha_min) * (1.0 + (std::f64::consts::PI * epoch as f64 / e).cos())
}

/// Independent per-user Bernoulli draws; with probability `eps` a bit is a fair coin.
pub fn sample_policy<R: Rng + ?Sized>(pi: &[f64], eps: f64, rng: &mut R) -> ScheduleVector {
    ScheduleVector::new(
        pi.iter()
            .map(|&p| {
                let explore = rng.random::<f64>() < eps;
                let prob = if explore { 0.5 } else { p };
                rng.random::<f64>() < prob
            })
            .collect(),
    )
}

/// Reward of a sampled schedule.
pub fn sumrate_reward(g: &GainMatrix, p: &ScheduleVector, fairness: Option<&FairnessState>) -> f64 {
    match fairness {
        Some(fs) => pf_objective(g, p, fs),
        None => sum_rate(g, p),
    }
}

/// `b <- alpha b + (1 - alpha) mean(r)`.
pub fn baseline_update(b: f64, alpha: f64, batch_rewards: &[f64]) -> f64 {
    if batch_rewards.is_empty() {
        return b;
    }
    let mean = batch_rewards.iter().sum::<f64>() / batch_rewards.len() as f64;
    alpha * b + (1.0 - alpha) * mean
}

/// Bernoulli log-likelihood of `p` under `pi`, with clamped probabilities.
pub fn log_likelihood(pi: &[f64], p: &ScheduleVector) -> f64 {
    pi.iter()
        .zip(p.bits())
        .map(|(&q, &bit)| {
            let q = q.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if bit {
                q.ln()
            } else {
                (1.0 - q).ln()
            }
        })
        .sum()
}

/// Batch-mean score-function loss `-(log pi(p)) (r - b)`.
pub fn policy_loss(pis: &[Vec<f64>], samples: &[ScheduleVector], rewards: &[f64], b: f64) -> f64 {
    let n = pis.len().max(1) as f64;
    pis.iter()
        .zip(samples)
        .zip(rewards)
        .map(|((pi, p), r)| -log_likelihood(pi, p) * (r - b))
        .sum::<f64>()
        / n
}

/// Gradient of one sample's loss term with respect to the logits, scaled by `1 / batch`.
///
/// For `pi = sigmoid(S)`, `d/dS [-log Bernoulli(p; pi)] = pi - p`.
pub fn loss_logit_gradient(pi: &[f64], p: &ScheduleVector, advantage: f64, batch: usize) -> Vec<f64> {
    let scale = advantage / batch.max(1) as f64;
    pi.iter().zip(p.bits()).map(|(q, &bit)| (q - if bit { 1.0 } else { 0.0 }) * scale).collect()
}

/// Scale `grads` so their global L2 norm is at most `clip_norm`; returns the pre-clip norm.
pub fn clip_gradients(grads: &mut [f64], clip_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > clip_norm {
        let s = clip_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Adam moments with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1, beta2, eps }
    }

    pub fn from_config(n: usize, cfg: &TrainConfig) -> Self {
        Self::new(n, cfg.beta1, cfg.beta2, cfg.adam_eps)
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_reward: f64,
    pub val_det: f64,
    pub val_sto: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub seconds: f64,
}

/// Model snapshot plus optimizer state and the metrics that produced it.
#[derive(Debug, Clone)]
pub struct Checkpoint<P> {
    pub model: P,
    pub epoch: usize,
    pub metrics: Option<EpochMetrics>,
    pub optimizer: AdamState,
    pub history: Vec<EpochMetrics>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<P> {
    pub history: Vec<EpochMetrics>,
    pub best: Checkpoint<P>,
    pub last: P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMode {
    Deterministic,
    Stochastic,
}

/// Mean sum-rate over `data` under top-L selection or Bernoulli sampling.
pub fn validate<P: PolicyModel>(
    model: &P,
    data: &[GainMatrix],
    mode: ValidationMode,
    budget: usize,
    rng: &mut rng::StreamRng,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::data("validation set is empty"));
    }
    let logits: Vec<Vec<f64>> = data.par_iter().map(|g| model.logits(g)).collect::<Result<_>>()?;
    let total: f64 = match mode {
        ValidationMode::Deterministic => {
            data.iter().zip(&logits).map(|(g, s)| sum_rate(g, &top_l_select(s, budget))).sum()
        }
        ValidationMode::Stochastic => data
            .iter()
            .zip(&logits)
            .map(|(g, s)| {
                let pi: Vec<f64> = s.iter().map(|x| sigmoid(*x)).collect();
                sum_rate(g, &sample_policy(&pi, 0.0, rng))
            })
            .sum(),
    };
    Ok(total / data.len() as f64)
}

struct BatchResult {
    loss: f64,
    mean_reward: f64,
    baseline: f64,
}

/// Train `model` on `train` and validate on `val` after each epoch.
///
/// The normalizer is refitted on `train` before the first epoch.
pub fn train<P: PolicyModel>(
    mut model: P,
    train: &[GainMatrix],
    val: &[GainMatrix],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<P>> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::data("training and validation sets must be nonempty"));
    }
    if let Some(g) = train.iter().chain(val).find(|g| g.users() != model.users()) {
        return Err(Error::data(format!(
            "dataset has {} users but the model expects {}",
            g.users(),
            model.users()
        )));
    }
    model.set_normalizer(Normalizer::fit(train)?);

    let n_params = model.param_count();
    let mut optimizer = AdamState::from_config(n_params, cfg);
    let mut best = Checkpoint { model: model.clone(), epoch: 0, metrics: None, optimizer: optimizer.clone(), history: Vec::new() };
    let mut best_score = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut baseline = 0.0;
    let mut fairness = match cfg.reward_mode {
        RewardMode::SumRate => None,
        RewardMode::ProportionalFair => Some(FairnessState::new(model.users(), cfg.pf_alpha, cfg.pf_epsilon)?),
    };

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let eps = eps_schedule(epoch, cfg);
        let alpha = alpha_schedule(epoch, cfg);

        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::substream(cfg.seed, "shuffle", epoch as u64));
        let mut explore = rng::substream(cfg.seed, "explore", epoch as u64);

        let mut loss_sum = 0.0;
        let mut reward_sum = 0.0;
        let mut batches = 0usize;
        let mut samples = 0usize;
        let mut aborted = false;

        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&GainMatrix> = chunk.iter().map(|&i| &train[i]).collect();
            match train_batch(&mut model, &batch, eps, alpha, baseline, &mut fairness, &mut optimizer, cfg, &mut explore) {
                Ok(res) => {
                    baseline = res.baseline;
                    loss_sum += res.loss;
                    reward_sum += res.mean_reward * batch.len() as f64;
                    batches += 1;
                    samples += batch.len();
                }
                Err(Error::Numerical(msg)) => {
                    log::error!("epoch {epoch}: {msg}; restoring checkpoint from epoch {}", best.epoch);
                    model = best.model.clone();
                    optimizer = best.optimizer.clone();
                    aborted = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }

        let val_det = validate(&model, val, ValidationMode::Deterministic, cfg.budget, &mut rng::substream(cfg.seed, "val_det", epoch as u64))?;
        let val_sto = validate(&model, val, ValidationMode::Stochastic, cfg.budget, &mut rng::substream(cfg.seed, "val_sto", epoch as u64))?;
        let metrics = EpochMetrics {
            epoch,
            mean_loss: if batches > 0 { loss_sum / batches as f64 } else { 0.0 },
            mean_reward: if samples > 0 { reward_sum / samples as f64 } else { 0.0 },
            val_det,
            val_sto,
            epsilon: eps,
            alpha,
            seconds: if cfg.wall_clock { started.elapsed().as_secs_f64() } else { 0.0 },
        };
        log::info!(
            "epoch {epoch}: loss {:.4} reward {:.4} val_det {:.4} val_sto {:.4}{}",
            metrics.mean_loss,
            metrics.mean_reward,
            val_det,
            val_sto,
            if aborted { " (aborted)" } else { "" }
        );
        history.push(metrics.clone());
        if val_det > best_score {
            best_score = val_det;
            best = Checkpoint {
                model: model.clone(),
                epoch,
                metrics: Some(metrics),
                optimizer: optimizer.clone(),
                history: history.clone(),
            };
        }
    }
    best.history = history.clone();
    Ok(TrainOutcome { history, best, last: model })
}

#[allow(clippy::too_many_arguments)]
fn train_batch<P: PolicyModel>(
    model: &mut P,
    batch: &[&GainMatrix],
    eps: f64,
    alpha: f64,
    baseline: f64,
    fairness: &mut Option<FairnessState>,
    optimizer: &mut AdamState,
    cfg: &TrainConfig,
    explore: &mut rng::StreamRng,
) -> Result<BatchResult> {
    let forwards: Vec<(Vec<f64>, P::Tape)> = batch.par_iter().map(|g| model.forward(g)).collect::<Result<_>>()?;

    let mut pis = Vec::with_capacity(batch.len());
    let mut samples = Vec::with_capacity(batch.len());
    let mut rewards = Vec::with_capacity(batch.len());
    for (g, (logits, _)) in batch.iter().zip(&forwards) {
        let pi: Vec<f64> = logits.iter().map(|s| sigmoid(*s)).collect();
        let p = sample_policy(&pi, eps, explore);
        let r = sumrate_reward(g, &p, fairness.as_ref());
        if let Some(fs) = fairness.as_mut() {
            *fs = update_avg_rates(fs, &approx_rates(g, &p), &p);
        }
        pis.push(pi);
        samples.push(p);
        rewards.push(r);
    }

    let baseline = baseline_update(baseline, alpha, &rewards);
    let loss = policy_loss(&pis, &samples, &rewards, baseline);
    if !loss.is_finite() {
        return Err(Error::numerical(format!("non-finite policy loss {loss}")));
    }

    let n = batch.len();
    let grads: Vec<Vec<f64>> = forwards
        .par_iter()
        .enumerate()
        .map(|(i, (_, tape))| {
            let d_logits = loss_logit_gradient(&pis[i], &samples[i], rewards[i] - baseline, n);
            model.backward(tape, &d_logits)
        })
        .collect::<Result<_>>()?;
    let mut total: Vec<f64> = vec![0.0; model.param_count()];
    for g in &grads {
        for (t, x) in total.iter_mut().zip(g) {
            *t += x;
        }
    }
    if total.iter().any(|g| !g.is_finite()) {
        return Err(Error::numerical("non-finite gradient"));
    }
    clip_gradients(&mut total, cfg.clip_norm);
    let mut params = model.flat_params();
    optimizer.step(&mut params, &total, cfg.learning_rate);
    model.set_flat_params(&params)?;

    Ok(BatchResult { loss, mean_reward: rewards.iter().sum::<f64>() / n as f64, baseline })
}
