#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;

use qsched::channel::{GainMatrix, SystemConfig};
use qsched::model::{AnyModel, CnnModel, HybridModel, Normalizer, PolicyModel};
use qsched::quantum::{circuit_gradients, run_circuit, CircuitParams, Gate, StateVector};
use qsched::rng::{self, StreamRng};

pub fn stream(tag: &str, i: u64) -> StreamRng {
    rng::substream(2024, tag, i)
}

pub fn uniform(r: &mut StreamRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

pub fn random_circuit(r: &mut StreamRng, qubits: usize, layers: usize) -> (Vec<f64>, CircuitParams) {
    use std::f64::consts::PI;
    let z = uniform(r, qubits, -PI, PI);
    let theta = uniform(r, layers * qubits * 3, -PI, PI);
    (z, CircuitParams::new(layers, qubits, theta).unwrap())
}

/// Max-abs gap between parameter-shift and central differences over every
/// angle (inputs and weights) of one circuit.
pub fn shift_vs_fd(z: &[f64], params: &CircuitParams, h: f64) -> f64 {
    let jac = circuit_gradients(z, params).unwrap();
    let n = params.qubits();
    let mut worst: f64 = 0.0;
    for p in 0..params.theta().len() {
        let mut up = params.clone();
        up.theta_mut()[p] += h;
        let mut dn = params.clone();
        dn.theta_mut()[p] -= h;
        let (fu, fd) = (run_circuit(z, &up).unwrap(), run_circuit(z, &dn).unwrap());
        for j in 0..n {
            worst = worst.max(((fu[j] - fd[j]) / (2.0 * h) - jac.theta(p, j)).abs());
        }
    }
    for i in 0..n {
        let mut zu = z.to_vec();
        zu[i] += h;
        let mut zd = z.to_vec();
        zd[i] -= h;
        let (fu, fd) = (run_circuit(&zu, params).unwrap(), run_circuit(&zd, params).unwrap());
        for j in 0..n {
            worst = worst.max(((fu[j] - fd[j]) / (2.0 * h) - jac.input(i, j)).abs());
        }
    }
    worst
}

/// Max-abs gap between the dense unitary applied to `encode(z)` and
/// gate-wise simulation.
pub fn dense_vs_gatewise(z: &[f64], params: &CircuitParams) -> f64 {
    let u = qsched::quantum::circuit_unitary_dense(params).unwrap();
    let enc = StateVector::encode(z).unwrap();
    let v = nalgebra::DVector::from_column_slice(enc.amplitudes());
    let dense = &u * v;
    let mut s = enc.clone();
    for l in 0..params.layers() {
        let n = params.qubits();
        qsched::quantum::variational_layer(&mut s, &params.theta()[l * n * 3..(l + 1) * n * 3]).unwrap();
    }
    dense.iter().zip(s.amplitudes()).map(|(a, b): (&Complex64, &Complex64)| (a - b).norm()).fold(0.0, f64::max)
}

/// Largest `| ||psi|| - 1 |` observed after any single gate of a random circuit.
pub fn worst_norm_drift(r: &mut StreamRng, qubits: usize, layers: usize) -> f64 {
    let (z, params) = random_circuit(r, qubits, layers);
    let mut s = StateVector::zero(qubits).unwrap();
    let mut worst: f64 = 0.0;
    let gates: Vec<Gate> = params.gates();
    for g in gates {
        s.apply_gate(g, &z, params.theta()).unwrap();
        worst = worst.max((s.norm() - 1.0).abs());
    }
    worst
}

pub fn random_gains(r: &mut StreamRng, k: usize, beta: f64) -> GainMatrix {
    GainMatrix::with_uniform_beta(k, uniform(r, k * k, 0.0, 5.0), beta).unwrap()
}

/// Max-abs gap between a model's analytic gradient of `c . logits` and
/// central differences over every parameter.
pub fn model_fd_error(model: &AnyModel, g: &GainMatrix, c: &[f64], h: f64) -> f64 {
    let (_, tape) = model.forward(g).unwrap();
    let grad = model.backward(&tape, c).unwrap();
    let base = model.flat_params();
    let objective = |p: &[f64]| {
        let mut m = model.clone();
        m.set_flat_params(p).unwrap();
        m.logits(g).unwrap().iter().zip(c).map(|(s, w)| s * w).sum::<f64>()
    };
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut up = base.clone();
        up[i] += h;
        let mut dn = base.clone();
        dn[i] -= h;
        let fd = (objective(&up) - objective(&dn)) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs());
    }
    worst
}

/// Hybrid model with nonzero biases and a fitted-looking normalizer.
pub fn hybrid_fixture(users: usize, qubits: usize, layers: usize, seed: u64) -> AnyModel {
    let mut r = stream("hybrid_fixture", seed);
    let mut m = HybridModel::init(users, qubits, layers, &mut r);
    m.pre_b = uniform(&mut r, qubits, -0.5, 0.5);
    m.post_b = uniform(&mut r, users, -0.5, 0.5);
    m.normalizer = Normalizer::new(2.5, 1.5);
    m.into()
}

pub fn cnn_fixture(users: usize, seed: u64) -> AnyModel {
    let mut r = stream("cnn_fixture", seed);
    let mut m = CnnModel::init(users, &mut r);
    m.conv_b = uniform(&mut r, m.conv_b.len(), -0.2, 0.2);
    m.head_b = uniform(&mut r, users, -0.5, 0.5);
    m.normalizer = Normalizer::new(2.5, 1.5);
    m.into()
}

/// Gain matrices where one randomly chosen user per sample has a dominant
/// row; every other entry is small.
pub fn planted_dataset(users: usize, n: usize, beta: f64, seed: u64) -> Vec<GainMatrix> {
    let mut r = rng::substream(seed, "planted", 0);
    (0..n)
        .map(|_| {
            let star = r.random_range(0..users);
            let mut g = uniform(&mut r, users * users, 0.0, 0.1);
            for l in 0..users {
                g[l * users + l] = r.random_range(0.1..0.5);
            }
            for i in 0..users {
                g[star * users + i] = r.random_range(0.0..0.1);
            }
            g[star * users + star] = r.random_range(15.0..25.0);
            GainMatrix::with_uniform_beta(users, g, beta).unwrap()
        })
        .collect()
}

/// One strong user at boresight-like gain and three weak users; per-slot
/// fluctuations come from a fixed stream.
pub fn heterogeneous_slots(slots: usize, beta: f64) -> Vec<GainMatrix> {
    let mut r = rng::substream(7, "horizon", 0);
    let means = [20.0, 2.0, 1.5, 1.0];
    (0..slots)
        .map(|_| {
            let k = means.len();
            let mut g = vec![0.0; k * k];
            for l in 0..k {
                for i in 0..k {
                    g[l * k + i] = if l == i { means[l] * r.random_range(0.5..1.5) } else { r.random_range(0.0..0.2) };
                }
            }
            GainMatrix::with_uniform_beta(k, g, beta).unwrap()
        })
        .collect()
}

/// The system used by the rate-math acceptance check.
pub fn mc_system() -> SystemConfig {
    SystemConfig { antennas: 16, users: 4, budget: 2, snr_db: 10.0, rician_k: 10.0, rho: 0.5, ..Default::default() }
}
