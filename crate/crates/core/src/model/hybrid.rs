use std::f64::consts::PI;

use rand::Rng;

use super::{
    ensure_finite, glorot_bound, standardize, uniform_vec, GradientMethod, ModelFamily, Normalizer,
    PolicyModel,
};
use crate::channel::GainMatrix;
use crate::error::{Error, Result};
use crate::quantum::{circuit_gradients, circuit_vjp_adjoint, run_circuit, CircuitParams};

/// Pre-activations are clamped here before `tanh`, so encoding angles stay
/// strictly inside `(-pi, pi)` in floating point.
pub const MAX_PREACTIVATION: f64 = 18.0;

/// Initial variational angles are drawn from `U(-THETA_INIT, THETA_INIT)`.
pub const THETA_INIT: f64 = 0.1;

/// Pre-layer compression, variational circuit, post-layer logits.
///
/// ```text
/// x = standardize(G)                      K^2
/// z_in = pi * tanh(pre_w x + pre_b)       n_q
/// z_out = <Z_i> of U(theta) |z_in>        n_q
/// S = post_w z_out + post_b               K
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    users: usize,
    qubits: usize,
    /// `qubits x users^2`, row-major.
    pub pre_w: Vec<f64>,
    pub pre_b: Vec<f64>,
    pub theta: CircuitParams,
    /// `users x qubits`, row-major.
    pub post_w: Vec<f64>,
    pub post_b: Vec<f64>,
    pub normalizer: Normalizer,
    pub grad_method: GradientMethod,
}

/// Activations retained by [`HybridModel::forward`].
#[derive(Debug, Clone)]
pub struct HybridTape {
    pub x: Vec<f64>,
    pub pre_activation: Vec<f64>,
    pub z_in: Vec<f64>,
    pub z_out: Vec<f64>,
}

impl HybridModel {
    /// All-zero parameters with an identity normalizer.
    pub fn zeros(users: usize, qubits: usize, layers: usize) -> Self {
        let features = users * users;
        HybridModel {
            users,
            qubits,
            pre_w: vec![0.0; qubits * features],
            pre_b: vec![0.0; qubits],
            theta: CircuitParams::zeros(layers, qubits),
            post_w: vec![0.0; users * qubits],
            post_b: vec![0.0; users],
            normalizer: Normalizer::default(),
            grad_method: GradientMethod::default(),
        }
    }

    /// Glorot-uniform affine weights, small random angles, zero biases.
    pub fn init<R: Rng + ?Sized>(users: usize, qubits: usize, layers: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(users, qubits, layers);
        let features = users * users;
        m.pre_w = uniform_vec(rng, qubits * features, glorot_bound(features, qubits));
        let theta = uniform_vec(rng, layers * qubits * 3, THETA_INIT);
        m.theta = CircuitParams::new(layers, qubits, theta).expect("shape is consistent");
        m.post_w = uniform_vec(rng, users * qubits, glorot_bound(qubits, users));
        m
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn layers(&self) -> usize {
        self.theta.layers()
    }

    fn pre_layer(&self, x: &[f64]) -> Vec<f64> {
        let f = x.len();
        (0..self.qubits)
            .map(|q| self.pre_b[q] + self.pre_w[q * f..(q + 1) * f].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    fn post_layer(&self, z: &[f64]) -> Vec<f64> {
        let n = self.qubits;
        (0..self.users)
            .map(|k| self.post_b[k] + self.post_w[k * n..(k + 1) * n].iter().zip(z).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Encoding angles for a pre-activation vector.
    pub fn encode_angles(pre_activation: &[f64]) -> Vec<f64> {
        pre_activation.iter().map(|a| PI * a.clamp(-MAX_PREACTIVATION, MAX_PREACTIVATION).tanh()).collect()
    }
}

impl PolicyModel for HybridModel {
    type Tape = HybridTape;

    fn family(&self) -> ModelFamily {
        ModelFamily::Hybrid
    }

    fn users(&self) -> usize {
        self.users
    }

    fn forward(&self, g: &GainMatrix) -> Result<(Vec<f64>, HybridTape)> {
        if g.users() != self.users {
            return Err(Error::invalid(format!(
                "model expects {} users, gain matrix has {}",
                self.users,
                g.users()
            )));
        }
        let x = standardize(g, &self.normalizer);
        ensure_finite("standardized input", &x)?;
        let pre_activation = self.pre_layer(&x);
        ensure_finite("pre-layer activation", &pre_activation)?;
        let z_in = Self::encode_angles(&pre_activation);
        let z_out = run_circuit(&z_in, &self.theta)?;
        let logits = self.post_layer(&z_out);
        ensure_finite("logits", &logits)?;
        Ok((logits, HybridTape { x, pre_activation, z_in, z_out }))
    }

    fn backward(&self, tape: &HybridTape, d_logits: &[f64]) -> Result<Vec<f64>> {
        let (k, n) = (self.users, self.qubits);
        if d_logits.len() != k {
            return Err(Error::invalid(format!("expected {k} logit gradients, got {}", d_logits.len())));
        }
        let mut d_post_w = vec![0.0; k * n];
        let mut d_z_out = vec![0.0; n];
        for (row, &ds) in d_logits.iter().enumerate() {
            for q in 0..n {
                d_post_w[row * n + q] = ds * tape.z_out[q];
                d_z_out[q] += ds * self.post_w[row * n + q];
            }
        }
        let (d_theta, d_z_in) = match self.grad_method {
            GradientMethod::Adjoint => {
                let (_, dt, dz) = circuit_vjp_adjoint(&tape.z_in, &self.theta, &d_z_out)?;
                (dt, dz)
            }
            GradientMethod::ParameterShift => circuit_gradients(&tape.z_in, &self.theta)?.vjp(&d_z_out),
        };
        let d_pre: Vec<f64> = tape
            .pre_activation
            .iter()
            .zip(&d_z_in)
            .map(|(&a, &dz)| {
                if a.abs() > MAX_PREACTIVATION {
                    0.0
                } else {
                    let t = a.tanh();
                    dz * PI * (1.0 - t * t)
                }
            })
            .collect();
        let f = tape.x.len();
        let mut d_pre_w = vec![0.0; n * f];
        for q in 0..n {
            for (j, xj) in tape.x.iter().enumerate() {
                d_pre_w[q * f + j] = d_pre[q] * xj;
            }
        }
        let mut grad = Vec::with_capacity(self.param_count());
        grad.extend(d_pre_w);
        grad.extend(d_pre);
        grad.extend(d_theta);
        grad.extend(d_post_w);
        grad.extend_from_slice(d_logits);
        Ok(grad)
    }

    fn param_count(&self) -> usize {
        self.pre_w.len() + self.pre_b.len() + self.theta.theta().len() + self.post_w.len() + self.post_b.len()
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.pre_w);
        v.extend_from_slice(&self.pre_b);
        v.extend_from_slice(self.theta.theta());
        v.extend_from_slice(&self.post_w);
        v.extend_from_slice(&self.post_b);
        v
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::invalid(format!(
                "hybrid model has {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut rest = flat;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        take(&mut self.pre_w);
        take(&mut self.pre_b);
        take(self.theta.theta_mut());
        take(&mut self.post_w);
        take(&mut self.post_b);
        Ok(())
    }

    fn normalizer(&self) -> Normalizer {
        self.normalizer
    }

    fn set_normalizer(&mut self, norm: Normalizer) {
        self.normalizer = norm;
    }
}
