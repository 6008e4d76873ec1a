//! Correlated Rician channel statistics and beam-domain gain features.
//!
//! A base station with an `M`-element half-wavelength ULA serves `K`
//! single-antenna users. Each user's channel is a Rician mix of a LoS steering
//! vector and exponentially correlated Rayleigh scattering. Projecting the
//! channel covariance onto the unitary DFT codebook gives per-beam energies;
//! each user is assigned its strongest beam, and the `K x K` matrix of
//! "user `l` observed through the beam of user `i`" gains is the scheduler
//! input.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// K-factors at or above this value are treated as pure line-of-sight.
pub const LOS_ONLY_K: f64 = 1e12;

/// Largest negative beam gain that is silently clamped to zero.
pub const CLAMP_GUARD: f64 = 1e-9;

/// Physical layout and channel statistics of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Antenna count `M`.
    pub antennas: usize,
    /// User count `K`.
    pub users: usize,
    /// Scheduled-user budget `L`.
    pub budget: usize,
    /// Transmit SNR per scheduled user, in dB.
    pub snr_db: f64,
    /// Shared Rician K-factor (linear).
    pub rician_k: f64,
    /// Optional per-user K-factors overriding `rician_k`.
    pub per_user_k: Option<Vec<f64>>,
    /// Exponential spatial correlation coefficient.
    pub rho: f64,
    /// AoD sampling interval `[lo, hi]` in degrees.
    pub aod_range_deg: (f64, f64),
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            antennas: 16,
            users: 4,
            budget: 2,
            snr_db: 20.0,
            rician_k: 10.0,
            per_user_k: None,
            rho: 0.5,
            aod_range_deg: (-60.0, 60.0),
            seed: 42,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 {
            return Err(Error::invalid("antennas must be positive"));
        }
        if self.users == 0 {
            return Err(Error::invalid("users must be positive"));
        }
        if self.budget == 0 || self.budget > self.users {
            return Err(Error::invalid(format!(
                "budget must satisfy 1 <= L <= K (L = {}, K = {})",
                self.budget, self.users
            )));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::invalid("snr_db must be finite"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.rician_k >= 0.0) {
            return Err(Error::invalid("rician_k must be nonnegative"));
        }
        if let Some(ks) = &self.per_user_k {
            if ks.len() != self.users {
                return Err(Error::invalid(format!(
                    "per_user_k has {} entries, expected {}",
                    ks.len(),
                    self.users
                )));
            }
            if ks.iter().any(|k| !(*k >= 0.0)) {
                return Err(Error::invalid("per_user_k entries must be nonnegative"));
            }
        }
        let (lo, hi) = self.aod_range_deg;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid("aod_range_deg must be a finite interval lo <= hi"));
        }
        Ok(())
    }

    /// Linear transmit SNR `beta` shared by every user.
    pub fn beta(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    pub fn k_factor(&self, user: usize) -> f64 {
        match &self.per_user_k {
            Some(ks) => ks[user],
            None => self.rician_k,
        }
    }
}

/// Second-order statistics of one user's channel and its beam assignment.
#[derive(Debug, Clone)]
pub struct UserChannelStats {
    pub aod_rad: f64,
    pub k_factor: f64,
    /// LoS steering vector `h_l`.
    pub los: CVector,
    /// NLoS correlation `R_l`.
    pub corr: CMatrix,
    /// Hermitian PSD square root of `corr`.
    pub corr_sqrt: CMatrix,
    /// `E[H_l H_l^H]`.
    pub cov: CMatrix,
    pub beam_gains: Vec<f64>,
    pub best_beam: usize,
}

/// Beam-domain gain matrix: `g[l][i]` is the gain of user `l` on the beam of user `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    k: usize,
    g: Vec<f64>,
    beta: Vec<f64>,
}

impl GainMatrix {
    pub fn new(k: usize, g: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if g.len() != k * k {
            return Err(Error::invalid(format!("gain matrix needs {} entries, got {}", k * k, g.len())));
        }
        if beta.len() != k {
            return Err(Error::invalid(format!("beta needs {} entries, got {}", k, beta.len())));
        }
        if g.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid("gain entries must be finite and nonnegative"));
        }
        Ok(GainMatrix { k, g, beta })
    }

    /// Gain matrix with the same `beta` for every user.
    pub fn with_uniform_beta(k: usize, g: Vec<f64>, beta: f64) -> Result<Self> {
        Self::new(k, g, vec![beta; k])
    }

    pub fn users(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, l: usize, i: usize) -> f64 {
        self.g[l * self.k + i]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.g
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Same gains with every user's linear SNR replaced.
    pub fn with_beta(&self, beta: f64) -> GainMatrix {
        GainMatrix { k: self.k, g: self.g.clone(), beta: vec![beta; self.k] }
    }

    /// Relabel users: new user `j` is old user `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> GainMatrix {
        let k = self.k;
        let mut g = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                g[a * k + b] = self.get(perm[a], perm[b]);
            }
        }
        let beta = perm.iter().map(|&p| self.beta[p]).collect();
        GainMatrix { k, g, beta }
    }
}

/// Unitary DFT matrix `W[m][n] = exp(-i 2 pi m n / M) / sqrt(M)`.
pub fn dft_matrix(m: usize) -> Result<CMatrix> {
    if m == 0 {
        return Err(Error::invalid("DFT size must be positive"));
    }
    let scale = 1.0 / (m as f64).sqrt();
    Ok(CMatrix::from_fn(m, m, |r, c| {
        // Reduce the exponent mod M first so large indices keep full precision.
        let phase = -2.0 * PI * ((r * c) % m) as f64 / m as f64;
        Complex64::from_polar(scale, phase)
    }))
}

/// Half-wavelength ULA steering vector, element `m = exp(i pi m sin(aod))`.
pub fn steering_vector(m: usize, aod_rad: f64) -> CVector {
    let s = aod_rad.sin();
    CVector::from_fn(m, |idx, _| Complex64::from_polar(1.0, PI * idx as f64 * s))
}

/// Exponential correlation model `R[m][n] = rho^|m-n|`.
pub fn correlation_matrix(m: usize, rho: f64) -> Result<CMatrix> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho must lie in [0, 1), got {rho}")));
    }
    Ok(CMatrix::from_fn(m, m, |r, c| {
        Complex64::new(rho.powi((r as i64 - c as i64).unsigned_abs() as i32), 0.0)
    }))
}

/// Hermitian PSD square root via eigendecomposition; negative eigenvalue dust is zeroed.
pub fn hermitian_sqrt(a: &CMatrix) -> CMatrix {
    let eig = a.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| Complex64::new(v.max(0.0).sqrt(), 0.0));
    let v = &eig.eigenvectors;
    v * CMatrix::from_diagonal(&roots) * v.adjoint()
}

fn rician_weights(k_factor: f64) -> (f64, f64) {
    if k_factor >= LOS_ONLY_K || k_factor.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k_factor / (k_factor + 1.0)).sqrt(), (1.0 / (k_factor + 1.0)).sqrt())
    }
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One channel realization.
///
/// `H^T = a h^T + b h_n^T S` with `S = R^{1/2}`, i.e. `H = a h + b S^T h_n`.
pub fn sample_channel<R: Rng + ?Sized>(stats: &UserChannelStats, rng: &mut R) -> CVector {
    let (a, b) = rician_weights(stats.k_factor);
    let m = stats.los.len();
    let los = stats.los.map(|x| x * a);
    if b == 0.0 {
        return los;
    }
    let hn = CVector::from_fn(m, |_, _| complex_gaussian(rng));
    los + stats.corr_sqrt.transpose() * hn * Complex64::new(b, 0.0)
}

/// `E[H H^H] = a^2 h h^H + b^2 S^T conj(S)`.
pub fn analytic_covariance(stats: &UserChannelStats) -> CMatrix {
    let (a, b) = rician_weights(stats.k_factor);
    let los = &stats.los * stats.los.adjoint() * Complex64::new(a * a, 0.0);
    if b == 0.0 {
        return los;
    }
    let nlos = stats.corr_sqrt.transpose() * stats.corr_sqrt.conjugate();
    los + nlos * Complex64::new(b * b, 0.0)
}

/// Diagonal of `W^H cov W` with negative dust clamped, plus the argmax beam.
///
/// Ties resolve to the lowest beam index.
pub fn beam_gains(cov: &CMatrix, w: &CMatrix) -> (Vec<f64>, usize) {
    let m = w.ncols();
    let mut gains = Vec::with_capacity(m);
    for n in 0..m {
        let col = w.column(n);
        let projected = cov * col;
        let g = col.dotc(&projected).re;
        if g < -CLAMP_GUARD {
            log::warn!("beam {n} gain {g:e} is below the clamp guard; covariance is not PSD");
        }
        gains.push(g.max(0.0));
    }
    let best = argmax_lowest(&gains);
    (gains, best)
}

pub(crate) fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Feature matrix with `g[l][i] = users[l].beam_gains[users[i].best_beam]`.
pub fn feature_matrix(users: &[UserChannelStats], cfg: &SystemConfig) -> Result<GainMatrix> {
    let k = users.len();
    let mut g = Vec::with_capacity(k * k);
    for observer in users {
        for owner in users {
            g.push(observer.beam_gains[owner.best_beam]);
        }
    }
    GainMatrix::with_uniform_beta(k, g, cfg.beta())
}

/// One generated sample: user geometry, statistics and the resulting features.
#[derive(Debug, Clone)]
pub struct ChannelSample {
    pub index: u64,
    pub aods: Vec<f64>,
    pub users: Vec<UserChannelStats>,
    pub gains: GainMatrix,
}

/// Precomputed codebook and correlation factors for one [`SystemConfig`].
#[derive(Debug, Clone)]
pub struct ChannelModel {
    cfg: SystemConfig,
    w: CMatrix,
    corr: CMatrix,
    corr_sqrt: CMatrix,
}

impl ChannelModel {
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        let w = dft_matrix(cfg.antennas)?;
        let corr = correlation_matrix(cfg.antennas, cfg.rho)?;
        let corr_sqrt = hermitian_sqrt(&corr);
        Ok(ChannelModel { cfg: cfg.clone(), w, corr, corr_sqrt })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn codebook(&self) -> &CMatrix {
        &self.w
    }

    /// Statistics of `user` located at `aod_rad`.
    pub fn user_stats(&self, user: usize, aod_rad: f64) -> UserChannelStats {
        let mut stats = UserChannelStats {
            aod_rad,
            k_factor: self.cfg.k_factor(user),
            los: steering_vector(self.cfg.antennas, aod_rad),
            corr: self.corr.clone(),
            corr_sqrt: self.corr_sqrt.clone(),
            cov: CMatrix::zeros(0, 0),
            beam_gains: Vec::new(),
            best_beam: 0,
        };
        stats.cov = analytic_covariance(&stats);
        let (gains, best) = beam_gains(&stats.cov, &self.w);
        stats.beam_gains = gains;
        stats.best_beam = best;
        stats
    }

    /// Draw per-user AoDs (radians), uniform on the configured interval.
    pub fn sample_aods<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (lo, hi) = self.cfg.aod_range_deg;
        (0..self.cfg.users)
            .map(|_| {
                let deg = if hi > lo { rng.random_range(lo..hi) } else { lo };
                deg.to_radians()
            })
            .collect()
    }

    /// Build the sample for explicit AoDs.
    pub fn sample_from_aods(&self, index: u64, aods: Vec<f64>) -> Result<ChannelSample> {
        let users: Vec<_> = aods.iter().enumerate().map(|(l, &a)| self.user_stats(l, a)).collect();
        let gains = feature_matrix(&users, &self.cfg)?;
        Ok(ChannelSample { index, aods, users, gains })
    }

    /// Sample `index` of the stream `(seed, tag)`; independent of generation order.
    pub fn sample(&self, tag: &str, index: u64) -> Result<ChannelSample> {
        let mut r = rng::substream(self.cfg.seed, tag, index);
        let aods = self.sample_aods(&mut r);
        self.sample_from_aods(index, aods)
    }
}
