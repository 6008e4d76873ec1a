//! Scheduling policies: the hybrid quantum-classical network and the CNN
//! benchmark, both mapping a gain matrix to one logit per user.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::channel::GainMatrix;
use crate::error::{Error, Result};
use crate::rate::ScheduleVector;

mod cnn;
mod hybrid;

pub use cnn::{CnnModel, CnnTape, CNN_FILTERS};
pub use hybrid::{HybridModel, HybridTape, MAX_PREACTIVATION};

/// Floor applied to the fitted standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Dataset-level scalar standardization `(x - mu) / sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer { mu: 0.0, sigma: 1.0 }
    }
}

impl Normalizer {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Normalizer { mu, sigma: sigma.max(SIGMA_FLOOR) }
    }

    /// Mean and population standard deviation over every entry of every matrix.
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a GainMatrix>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for g in samples {
            for &x in g.entries() {
                n += 1;
                sum += x;
                sq += x * x;
            }
        }
        if n == 0 {
            return Err(Error::data("cannot fit a normalizer on an empty dataset"));
        }
        let mu = sum / n as f64;
        let var = (sq / n as f64 - mu * mu).max(0.0);
        Ok(Normalizer::new(mu, var.sqrt()))
    }
}

/// Row-major flatten then standardize.
pub fn standardize(g: &GainMatrix, norm: &Normalizer) -> Vec<f64> {
    let sigma = norm.sigma.max(SIGMA_FLOOR);
    g.entries().iter().map(|x| (x - norm.mu) / sigma).collect()
}

/// Schedule the `L` users with the largest logits; ties go to the lower index.
pub fn top_l_select(logits: &[f64], budget: usize) -> ScheduleVector {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    ScheduleVector::from_indices(logits.len(), &order[..budget.min(logits.len())])
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub(crate) fn uniform_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

pub(crate) fn ensure_finite(what: &str, xs: &[f64]) -> Result<()> {
    if let Some(i) = xs.iter().position(|x| !x.is_finite()) {
        return Err(Error::numerical(format!("{what}[{i}] is not finite ({})", xs[i])));
    }
    Ok(())
}

/// How the quantum block is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMethod {
    ParameterShift,
    #[default]
    Adjoint,
}

impl FromStr for GradientMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parameter_shift" | "parameter-shift" => Ok(GradientMethod::ParameterShift),
            "adjoint" => Ok(GradientMethod::Adjoint),
            other => Err(Error::config(format!("unknown gradient method '{other}' (parameter_shift | adjoint)"))),
        }
    }
}

impl fmt::Display for GradientMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradientMethod::ParameterShift => "parameter_shift",
            GradientMethod::Adjoint => "adjoint",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    Hybrid,
    Cnn,
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid" | "qnn" => Ok(ModelFamily::Hybrid),
            "cnn" => Ok(ModelFamily::Cnn),
            other => Err(Error::config(format!("unknown model family '{other}' (hybrid | cnn)"))),
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFamily::Hybrid => "hybrid",
            ModelFamily::Cnn => "cnn",
        })
    }
}

/// A differentiable policy producing one logit per user.
///
/// Trainable parameters are exposed as one flat vector whose layout is fixed
/// per family; optimizers and checkpoints work on that vector.
pub trait PolicyModel: Clone + Send + Sync {
    type Tape: Send + Sync;

    fn family(&self) -> ModelFamily;

    fn users(&self) -> usize;

    fn forward(&self, g: &GainMatrix) -> Result<(Vec<f64>, Self::Tape)>;

    /// Flat gradient of `sum_k d_logits[k] * logits[k]`.
    fn backward(&self, tape: &Self::Tape, d_logits: &[f64]) -> Result<Vec<f64>>;

    fn param_count(&self) -> usize;

    fn flat_params(&self) -> Vec<f64>;

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()>;

    fn normalizer(&self) -> Normalizer;

    fn set_normalizer(&mut self, norm: Normalizer);

    fn logits(&self, g: &GainMatrix) -> Result<Vec<f64>> {
        self.forward(g).map(|(s, _)| s)
    }
}

/// Either policy family behind one type.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Hybrid(HybridModel),
    Cnn(CnnModel),
}

pub enum AnyTape {
    Hybrid(HybridTape),
    Cnn(CnnTape),
}

impl From<HybridModel> for AnyModel {
    fn from(m: HybridModel) -> Self {
        AnyModel::Hybrid(m)
    }
}

impl From<CnnModel> for AnyModel {
    fn from(m: CnnModel) -> Self {
        AnyModel::Cnn(m)
    }
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            AnyModel::Hybrid($m) => $body,
            AnyModel::Cnn($m) => $body,
        }
    };
}

impl PolicyModel for AnyModel {
    type Tape = AnyTape;

    fn family(&self) -> ModelFamily {
        dispatch!(self, m => m.family())
    }

    fn users(&self) -> usize {
        dispatch!(self, m => m.users())
    }

    fn forward(&self, g: &GainMatrix) -> Result<(Vec<f64>, AnyTape)> {
        match self {
            AnyModel::Hybrid(m) => m.forward(g).map(|(s, t)| (s, AnyTape::Hybrid(t))),
            AnyModel::Cnn(m) => m.forward(g).map(|(s, t)| (s, AnyTape::Cnn(t))),
        }
    }

    fn backward(&self, tape: &AnyTape, d_logits: &[f64]) -> Result<Vec<f64>> {
        match (self, tape) {
            (AnyModel::Hybrid(m), AnyTape::Hybrid(t)) => m.backward(t, d_logits),
            (AnyModel::Cnn(m), AnyTape::Cnn(t)) => m.backward(t, d_logits),
            _ => Err(Error::invalid("tape was produced by a different model family")),
        }
    }

    fn param_count(&self) -> usize {
        dispatch!(self, m => m.param_count())
    }

    fn flat_params(&self) -> Vec<f64> {
        dispatch!(self, m => m.flat_params())
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        dispatch!(self, m => m.set_flat_params(flat))
    }

    fn normalizer(&self) -> Normalizer {
        dispatch!(self, m => m.normalizer())
    }

    fn set_normalizer(&mut self, norm: Normalizer) {
        dispatch!(self, m => m.set_normalizer(norm))
    }
}
