//! Schedule evaluation: approximate ergodic rates, sum-rate and
//! proportional-fair objectives, a Monte-Carlo ergodic-rate oracle, and the
//! reference schedulers used as baselines.

use std::fmt;

use itertools::Itertools;
use rand::Rng;

use crate::channel::{sample_channel, ChannelModel, GainMatrix, UserChannelStats};
use crate::error::{Error, Result};

/// Upper bound on `C(K, L)` for exhaustive enumeration.
pub const MAX_COMBINATIONS: u128 = 1_000_000;

pub const DEFAULT_PF_ALPHA: f64 = 0.1;
pub const DEFAULT_PF_EPSILON: f64 = 1e-6;

/// Binary scheduling decision, one bit per user.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScheduleVector(Vec<bool>);

impl ScheduleVector {
    pub fn new(bits: Vec<bool>) -> Self {
        ScheduleVector(bits)
    }

    pub fn empty(k: usize) -> Self {
        ScheduleVector(vec![false; k])
    }

    pub fn all(k: usize) -> Self {
        ScheduleVector(vec![true; k])
    }

    pub fn from_indices(k: usize, idx: &[usize]) -> Self {
        let mut bits = vec![false; k];
        for &i in idx {
            bits[i] = true;
        }
        ScheduleVector(bits)
    }

    /// Parse from 0/1 integers; anything else is rejected.
    pub fn from_ints(xs: &[u8]) -> Result<Self> {
        xs.iter()
            .map(|&x| match x {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::invalid(format!("schedule entries must be 0 or 1, got {other}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(ScheduleVector)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.0[i] = v;
    }

    pub fn popcount(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter_map(|(i, b)| b.then_some(i)).collect()
    }

    pub fn to_ints(&self) -> Vec<u8> {
        self.0.iter().map(|&b| b as u8).collect()
    }
}

impl fmt::Display for ScheduleVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Exponentially smoothed per-user throughput history for proportional fairness.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessState {
    pub avg_rate: Vec<f64>,
    pub alpha: f64,
    pub epsilon_div: f64,
}

impl FairnessState {
    pub fn new(k: usize, alpha: f64, epsilon_div: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid(format!("forgetting factor must lie in (0, 1], got {alpha}")));
        }
        if !(epsilon_div > 0.0) {
            return Err(Error::invalid("epsilon_div must be positive"));
        }
        Ok(FairnessState { avg_rate: vec![0.0; k], alpha, epsilon_div })
    }

    pub fn with_defaults(k: usize) -> Self {
        FairnessState { avg_rate: vec![0.0; k], alpha: DEFAULT_PF_ALPHA, epsilon_div: DEFAULT_PF_EPSILON }
    }
}

fn check_dims(g: &GainMatrix, xi: &ScheduleVector) {
    assert_eq!(g.users(), xi.len(), "gain matrix and schedule disagree on the user count");
}

/// Approximate ergodic rate of every user in bits/s/Hz.
///
/// Unscheduled users get exactly zero.
pub fn approx_rates(g: &GainMatrix, xi: &ScheduleVector) -> Vec<f64> {
    check_dims(g, xi);
    let k = g.users();
    let beta = g.beta();
    (0..k)
        .map(|l| {
            if !xi.get(l) {
                return 0.0;
            }
            let interference: f64 =
                (0..k).filter(|&i| i != l && xi.get(i)).map(|i| beta[i] * g.get(l, i)).sum();
            let own = beta[l] * g.get(l, l);
            // log2((own + interference + 1) / (interference + 1))
            (own / (interference + 1.0)).ln_1p() / std::f64::consts::LN_2
        })
        .collect()
}

pub fn sum_rate(g: &GainMatrix, xi: &ScheduleVector) -> f64 {
    approx_rates(g, xi).iter().sum()
}

/// Proportional-fair weighted rate `sum_l T_l / (R_l + eps)`.
pub fn pf_objective(g: &GainMatrix, xi: &ScheduleVector, fs: &FairnessState) -> f64 {
    approx_rates(g, xi)
        .iter()
        .zip(&fs.avg_rate)
        .map(|(t, r)| t / (r + fs.epsilon_div))
        .sum()
}

/// Smooth the history of scheduled users; unscheduled users keep their average.
pub fn update_avg_rates(fs: &FairnessState, rates: &[f64], xi: &ScheduleVector) -> FairnessState {
    let mut next = fs.clone();
    for (l, r) in next.avg_rate.iter_mut().enumerate() {
        if xi.get(l) {
            *r = (1.0 - fs.alpha) * *r + fs.alpha * rates[l];
        }
    }
    next
}

/// Which quantity a scheduler maximizes.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    SumRate,
    ProportionalFair(&'a FairnessState),
}

impl Objective<'_> {
    pub fn value(&self, g: &GainMatrix, xi: &ScheduleVector) -> f64 {
        match self {
            Objective::SumRate => sum_rate(g, xi),
            Objective::ProportionalFair(fs) => pf_objective(g, xi, fs),
        }
    }
}

/// Monte-Carlo ergodic rate with DFT-column beamformers.
///
/// Uses `|B_i^H H_l|^2` as the received beam power so that its expectation is
/// exactly the beam-domain gain that [`approx_rates`] consumes.
pub fn mc_ergodic_rate<R: Rng + ?Sized>(
    model: &ChannelModel,
    users: &[UserChannelStats],
    xi: &ScheduleVector,
    beta: f64,
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let k = users.len();
    if xi.len() != k {
        return Err(Error::invalid("schedule length does not match the user count"));
    }
    if n_draws == 0 {
        return Err(Error::invalid("n_draws must be at least 1"));
    }
    let w = model.codebook();
    let mut acc = vec![0.0; k];
    let mut power = vec![0.0; k];
    for _ in 0..n_draws {
        for (l, stats) in users.iter().enumerate() {
            let h = sample_channel(stats, rng);
            if !xi.get(l) {
                continue;
            }
            for (i, other) in users.iter().enumerate() {
                power[i] = if xi.get(i) { w.column(other.best_beam).dotc(&h).norm_sqr() } else { 0.0 };
            }
            let interference: f64 = (0..k).filter(|&i| i != l).map(|i| beta * power[i]).sum();
            acc[l] += (beta * power[l] / (interference + 1.0)).ln_1p() / std::f64::consts::LN_2;
        }
    }
    Ok(acc.into_iter().map(|x| x / n_draws as f64).collect())
}

/// `C(n, k)`, saturating once it passes `cap`.
pub fn binomial_capped(n: usize, k: usize, cap: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > cap {
            return cap + 1;
        }
    }
    acc
}

/// Exact best size-`L` schedule; ties go to the lexicographically lowest subset.
pub fn exhaustive_best_schedule(
    g: &GainMatrix,
    budget: usize,
    objective: Objective<'_>,
) -> Result<(ScheduleVector, f64)> {
    let k = g.users();
    if budget > k {
        return Err(Error::invalid(format!("budget {budget} exceeds user count {k}")));
    }
    let count = binomial_capped(k, budget, MAX_COMBINATIONS);
    if count > MAX_COMBINATIONS {
        return Err(Error::TooManyCombinations { n: k, k: budget, count, limit: MAX_COMBINATIONS });
    }
    let mut best: Option<(ScheduleVector, f64)> = None;
    for subset in (0..k).combinations(budget) {
        let xi = ScheduleVector::from_indices(k, &subset);
        let v = objective.value(g, &xi);
        if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
            best = Some((xi, v));
        }
    }
    Ok(best.expect("at least one subset exists"))
}

/// Add users one at a time by largest marginal sum-rate gain.
pub fn greedy_schedule(g: &GainMatrix, budget: usize) -> ScheduleVector {
    let k = g.users();
    let budget = budget.min(k);
    let mut xi = ScheduleVector::empty(k);
    for _ in 0..budget {
        let mut pick: Option<(usize, f64)> = None;
        for cand in 0..k {
            if xi.get(cand) {
                continue;
            }
            xi.set(cand, true);
            let v = sum_rate(g, &xi);
            xi.set(cand, false);
            if pick.is_none_or(|(_, pv)| v > pv) {
                pick = Some((cand, v));
            }
        }
        let (cand, _) = pick.expect("budget <= K leaves a candidate");
        xi.set(cand, true);
    }
    xi
}

/// Uniformly random size-`L` subset.
pub fn random_schedule<R: Rng + ?Sized>(k: usize, budget: usize, rng: &mut R) -> ScheduleVector {
    let idx = rand::seq::index::sample(rng, k, budget.min(k)).into_vec();
    ScheduleVector::from_indices(k, &idx)
}

/// Exact mean sum-rate of a uniformly random size-`L` schedule.
pub fn random_schedule_mean(g: &GainMatrix, budget: usize) -> Result<f64> {
    let k = g.users();
    let count = binomial_capped(k, budget, MAX_COMBINATIONS);
    if count > MAX_COMBINATIONS {
        return Err(Error::TooManyCombinations { n: k, k: budget, count, limit: MAX_COMBINATIONS });
    }
    let total: f64 = (0..k)
        .combinations(budget)
        .map(|s| sum_rate(g, &ScheduleVector::from_indices(k, &s)))
        .sum();
    Ok(total / count as f64)
}

/// Jain's fairness index `(sum x)^2 / (n sum x^2)`.
pub fn jain_index(xs: &[f64]) -> f64 {
    let sum: f64 = xs.iter().sum();
    let sq: f64 = xs.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return 0.0;
    }
    sum * sum / (xs.len() as f64 * sq)
}

/// How a multi-slot horizon is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonPolicy {
    MaxSumRate,
    ProportionalFair,
}

/// Schedule every slot of `slots` exhaustively and return per-user cumulative rates.
pub fn run_horizon(
    slots: &[GainMatrix],
    budget: usize,
    policy: HorizonPolicy,
    alpha: f64,
    epsilon_div: f64,
) -> Result<Vec<f64>> {
    let k = slots.first().map(GainMatrix::users).unwrap_or(0);
    let mut fs = FairnessState::new(k, alpha, epsilon_div)?;
    let mut cumulative = vec![0.0; k];
    for g in slots {
        let objective = match policy {
            HorizonPolicy::MaxSumRate => Objective::SumRate,
            HorizonPolicy::ProportionalFair => Objective::ProportionalFair(&fs),
        };
        let (xi, _) = exhaustive_best_schedule(g, budget, objective)?;
        let rates = approx_rates(g, &xi);
        for (c, r) in cumulative.iter_mut().zip(&rates) {
            *c += r;
        }
        fs = update_avg_rates(&fs, &rates, &xi);
    }
    Ok(cumulative)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn toy() -> GainMatrix {
        GainMatrix::with_uniform_beta(2, vec![3.0, 1.0, 1.0, 3.0], 1.0).unwrap()
    }

    fn xi(bits: &[u8]) -> ScheduleVector {
        ScheduleVector::from_ints(bits).unwrap()
    }

    #[test]
    fn approx_rate_examples() {
        let g = toy();
        let r = approx_rates(&g, &xi(&[1, 0]));
        assert!((r[0] - 2.0).abs() < 1e-12);
        assert_eq!(r[1], 0.0);
        let r = approx_rates(&g, &xi(&[1, 1]));
        let expect = (5.0f64 / 2.0).log2();
        assert!((r[0] - expect).abs() < 1e-12 && (r[1] - expect).abs() < 1e-12);
        assert_eq!(approx_rates(&g, &xi(&[0, 0])), vec![0.0, 0.0]);
    }

    #[test]
    fn sum_rate_examples() {
        let g = toy();
        assert!((sum_rate(&g, &xi(&[1, 0])) - 2.0).abs() < 1e-12);
        assert!((sum_rate(&g, &xi(&[1, 1])) - 2.643_856_189_774_724).abs() < 1e-12);
    }

    #[test]
    fn pf_examples() {
        let g = toy();
        let s = xi(&[1, 1]);
        let fs = FairnessState { avg_rate: vec![0.0, 0.0], alpha: 0.1, epsilon_div: 1.0 };
        assert!((pf_objective(&g, &s, &fs) - sum_rate(&g, &s)).abs() < 1e-12);

        let fs = FairnessState { avg_rate: vec![1.0, 3.0], alpha: 0.1, epsilon_div: 1e-6 };
        let t = (2.5f64).log2();
        let expect = t / (1.0 + 1e-6) + t / (3.0 + 1e-6);
        assert!((pf_objective(&g, &s, &fs) - expect).abs() < 1e-12);
        assert!((pf_objective(&g, &s, &fs) - 1.7626).abs() < 1e-4);

        let fs = FairnessState { avg_rate: vec![1e12, 0.0], alpha: 0.1, epsilon_div: 1.0 };
        let solo = pf_objective(&g, &xi(&[1, 0]), &fs);
        assert!(solo < 1e-11);
    }

    #[test]
    fn avg_rate_recursion() {
        let fs = FairnessState { avg_rate: vec![2.0, 2.0], alpha: 0.1, epsilon_div: 1e-6 };
        let next = update_avg_rates(&fs, &[4.0, 4.0], &xi(&[1, 0]));
        assert!((next.avg_rate[0] - 2.2).abs() < 1e-12);
        assert_eq!(next.avg_rate[1], 2.0);
        let full = FairnessState { alpha: 1.0, ..fs };
        assert_eq!(update_avg_rates(&full, &[4.0, 7.0], &xi(&[1, 1])).avg_rate, vec![4.0, 7.0]);
    }

    #[test]
    fn fairness_state_validation() {
        assert!(FairnessState::new(3, 0.0, 1e-6).is_err());
        assert!(FairnessState::new(3, 0.5, 0.0).is_err());
        assert!(FairnessState::new(3, 0.5, 1e-6).is_ok());
    }

    #[test]
    fn exhaustive_tie_and_forced() {
        let (s, v) = exhaustive_best_schedule(&toy(), 1, Objective::SumRate).unwrap();
        assert_eq!(s, xi(&[1, 0]));
        assert!((v - 2.0).abs() < 1e-12);

        let g = GainMatrix::with_uniform_beta(3, vec![1.0; 9], 2.0).unwrap();
        let (s, _) = exhaustive_best_schedule(&g, 3, Objective::SumRate).unwrap();
        assert_eq!(s, ScheduleVector::all(3));
    }

    #[test]
    fn exhaustive_guard() {
        let g = GainMatrix::with_uniform_beta(40, vec![1.0; 1600], 1.0).unwrap();
        let err = exhaustive_best_schedule(&g, 20, Objective::SumRate).unwrap_err();
        assert!(matches!(err, Error::TooManyCombinations { .. }));
    }

    #[test]
    fn exhaustive_matches_reverse_enumeration() {
        use rand::Rng;
        let mut r = rng::substream(11, "exh", 0);
        for _ in 0..20 {
            let k = 6;
            let g: Vec<f64> = (0..k * k).map(|_| r.random_range(0.0..10.0)).collect();
            let g = GainMatrix::with_uniform_beta(k, g, 3.0).unwrap();
            let (best, val) = exhaustive_best_schedule(&g, 3, Objective::SumRate).unwrap();
            // Reverse bitmask sweep; keep the last maximum seen, which is the lowest-lex subset.
            let mut oracle: Option<(u32, f64)> = None;
            for mask in (0u32..(1 << k)).rev().filter(|m| m.count_ones() == 3) {
                let s = ScheduleVector::new((0..k).map(|i| mask >> i & 1 == 1).collect());
                let v = sum_rate(&g, &s);
                if oracle.is_none_or(|(_, ov)| v >= ov) {
                    oracle = Some((mask, v));
                }
            }
            let (mask, ov) = oracle.unwrap();
            assert!((val - ov).abs() < 1e-12);
            assert!((0..k).all(|i| best.get(i) == (mask >> i & 1 == 1)));
        }
    }

    #[test]
    fn greedy_and_random_full_budget() {
        let g = toy();
        assert_eq!(greedy_schedule(&g, 2), ScheduleVector::all(2));
        let mut r = rng::substream(1, "rs", 0);
        assert_eq!(random_schedule(2, 2, &mut r), ScheduleVector::all(2));
    }

    #[test]
    fn greedy_picks_dominant_user_first() {
        let mut g = vec![0.5; 16];
        g[2 * 4 + 2] = 1e4;
        let g = GainMatrix::with_uniform_beta(4, g, 1.0).unwrap();
        assert!(greedy_schedule(&g, 1).get(2));
        assert!(greedy_schedule(&g, 3).get(2));
    }

    #[test]
    fn random_schedule_is_uniform() {
        let mut r = rng::substream(2, "rs", 0);
        let mut counts = [0usize; 4];
        let n = 10_000;
        for _ in 0..n {
            let s = random_schedule(4, 2, &mut r);
            assert_eq!(s.popcount(), 2);
            for i in s.indices() {
                counts[i] += 1;
            }
        }
        // Each user is in a size-2 subset with p = 1/2.
        let sigma = (n as f64 * 0.25).sqrt();
        for c in counts {
            assert!((c as f64 - 5000.0).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn random_mean_matches_enumeration() {
        let g = toy();
        let m = random_schedule_mean(&g, 1).unwrap();
        assert!((m - 2.0).abs() < 1e-12);
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial_capped(6, 3, u128::MAX), 20);
        assert_eq!(binomial_capped(4, 5, 100), 0);
        assert_eq!(binomial_capped(60, 30, 1000), 1001);
    }

    #[test]
    fn jain_bounds() {
        assert!((jain_index(&[1.0, 1.0, 1.0]) - 1.0).abs() < 1e-12);
        assert!((jain_index(&[1.0, 0.0, 0.0, 0.0]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn display_bits() {
        assert_eq!(xi(&[1, 0, 1]).to_string(), "101");
        assert!(ScheduleVector::from_ints(&[2]).is_err());
    }
}
