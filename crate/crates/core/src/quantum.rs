//! State-vector simulator for the angle-encoded ZYZ variational circuit.
//!
//! Qubits are little-endian: qubit `q` is bit `q` of the basis index. The
//! circuit is `R_Y(z_i)` encoding on every qubit followed by `N` layers, each
//! applying `R_Z, R_Y, R_Z` to every qubit and then a ring of CNOTs
//! `(q -> q+1 mod n)` in ascending control order. Readout is the per-qubit
//! Pauli-Z expectation.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest register the simulator will allocate.
pub const MAX_QUBITS: usize = 20;

/// Largest register for the dense-unitary oracle.
pub const MAX_DENSE_QUBITS: usize = 6;

const SHIFT: f64 = std::f64::consts::FRAC_PI_2;

type Mat2 = [[Complex64; 2]; 2];

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn ry_matrix(theta: f64) -> Mat2 {
    let (s, co) = (theta / 2.0).sin_cos();
    [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]
}

fn rz_matrix(theta: f64) -> Mat2 {
    let half = theta / 2.0;
    [[Complex64::from_polar(1.0, -half), c(0.0, 0.0)], [c(0.0, 0.0), Complex64::from_polar(1.0, half)]]
}

/// Pure state of `n` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::invalid(format!(
                "qubit count must lie in 1..={MAX_QUBITS}, got {n_qubits}"
            )));
        }
        let mut amps = vec![c(0.0, 0.0); 1 << n_qubits];
        amps[0] = c(1.0, 0.0);
        Ok(StateVector { n_qubits, amps })
    }

    /// Computational basis state `|index>`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let mut s = Self::zero(n_qubits)?;
        if index >= s.amps.len() {
            return Err(Error::invalid(format!("basis index {index} out of range")));
        }
        s.amps[0] = c(0.0, 0.0);
        s.amps[index] = c(1.0, 0.0);
        Ok(s)
    }

    /// Build from raw amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let n = amps.len();
        if n < 2 || !n.is_power_of_two() || n.trailing_zeros() as usize > MAX_QUBITS {
            return Err(Error::invalid(format!("amplitude count {n} is not a supported power of two")));
        }
        Ok(StateVector { n_qubits: n.trailing_zeros() as usize, amps })
    }

    /// Angle encoding: `R_Y(z_0)|0> (x) ... (x) R_Y(z_{n-1})|0>`.
    pub fn encode(z_in: &[f64]) -> Result<Self> {
        let mut s = Self::zero(z_in.len())?;
        for (q, &z) in z_in.iter().enumerate() {
            s.apply_1q(q, &ry_matrix(z));
        }
        Ok(s)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::invalid(format!("qubit {q} out of range for {} qubits", self.n_qubits)));
        }
        Ok(())
    }

    fn apply_1q(&mut self, q: usize, m: &Mat2) {
        let stride = 1usize << q;
        for block in (0..self.amps.len()).step_by(stride << 1) {
            for i in block..block + stride {
                let a0 = self.amps[i];
                let a1 = self.amps[i + stride];
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i + stride] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    pub fn apply_ry(&mut self, q: usize, theta: f64) -> Result<()> {
        self.check_qubit(q)?;
        self.apply_1q(q, &ry_matrix(theta));
        Ok(())
    }

    pub fn apply_rz(&mut self, q: usize, theta: f64) -> Result<()> {
        self.check_qubit(q)?;
        self.apply_1q(q, &rz_matrix(theta));
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::invalid("CNOT control and target must differ"));
        }
        self.cnot_unchecked(control, target);
        Ok(())
    }

    fn cnot_unchecked(&mut self, control: usize, target: usize) {
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cbit != 0 && i & tbit == 0 {
                self.amps.swap(i, i | tbit);
            }
        }
    }

    /// `<Z_q>` for every qubit.
    pub fn z_expectations(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_qubits];
        for (b, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            for (q, o) in out.iter_mut().enumerate() {
                if b >> q & 1 == 0 {
                    *o += p;
                } else {
                    *o -= p;
                }
            }
        }
        out
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// `Im <self| P_q |other>` for `P = Y` or `Z`.
    fn im_pauli_overlap(&self, q: usize, axis: Axis, other: &StateVector) -> f64 {
        let stride = 1usize << q;
        let mut acc = c(0.0, 0.0);
        for block in (0..self.amps.len()).step_by(stride << 1) {
            for i in block..block + stride {
                let (l0, l1) = (self.amps[i].conj(), self.amps[i + stride].conj());
                let (a0, a1) = (other.amps[i], other.amps[i + stride]);
                acc += match axis {
                    // Y (a0, a1) = (-i a1, i a0)
                    Axis::Y => l0 * c(0.0, -1.0) * a1 + l1 * c(0.0, 1.0) * a0,
                    Axis::Z => l0 * a0 - l1 * a1,
                };
            }
        }
        acc.im
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Y,
    Z,
}

/// Where a rotation gate takes its angle from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Angle {
    /// Encoding input `z_in[i]`.
    Input(usize),
    /// Flat index into [`CircuitParams::theta`].
    Theta(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Ry(usize, Angle),
    Rz(usize, Angle),
    Cnot(usize, usize),
}

/// Variational angles with layout `[layer][qubit][R_Z, R_Y, R_Z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitParams {
    layers: usize,
    qubits: usize,
    theta: Vec<f64>,
}

impl CircuitParams {
    pub fn new(layers: usize, qubits: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != layers * qubits * 3 {
            return Err(Error::invalid(format!(
                "theta has {} entries, expected {} x {} x 3",
                theta.len(),
                layers,
                qubits
            )));
        }
        Ok(CircuitParams { layers, qubits, theta })
    }

    pub fn zeros(layers: usize, qubits: usize) -> Self {
        CircuitParams { layers, qubits, theta: vec![0.0; layers * qubits * 3] }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    #[inline]
    pub fn index(&self, layer: usize, qubit: usize, k: usize) -> usize {
        (layer * self.qubits + qubit) * 3 + k
    }

    pub fn get(&self, layer: usize, qubit: usize, k: usize) -> f64 {
        self.theta[self.index(layer, qubit, k)]
    }

    /// Ordered gate list of the encoding stage plus every variational layer.
    pub fn gates(&self) -> Vec<Gate> {
        let n = self.qubits;
        let mut gates: Vec<Gate> = (0..n).map(|q| Gate::Ry(q, Angle::Input(q))).collect();
        for layer in 0..self.layers {
            gates.extend(layer_gates(n, layer));
        }
        gates
    }
}

fn layer_gates(n: usize, layer: usize) -> Vec<Gate> {
    let mut gates = Vec::with_capacity(4 * n);
    for q in 0..n {
        let base = (layer * n + q) * 3;
        gates.push(Gate::Rz(q, Angle::Theta(base)));
        gates.push(Gate::Ry(q, Angle::Theta(base + 1)));
        gates.push(Gate::Rz(q, Angle::Theta(base + 2)));
    }
    if n > 1 {
        for q in 0..n {
            gates.push(Gate::Cnot(q, (q + 1) % n));
        }
    }
    gates
}

fn resolve(angle: Angle, z_in: &[f64], theta: &[f64]) -> f64 {
    match angle {
        Angle::Input(i) => z_in[i],
        Angle::Theta(i) => theta[i],
    }
}

impl StateVector {
    /// Apply one gate, reading angles from `z_in` / `theta`.
    pub fn apply_gate(&mut self, gate: Gate, z_in: &[f64], theta: &[f64]) -> Result<()> {
        match gate {
            Gate::Ry(q, a) => self.apply_ry(q, resolve(a, z_in, theta)),
            Gate::Rz(q, a) => self.apply_rz(q, resolve(a, z_in, theta)),
            Gate::Cnot(ctl, tgt) => self.apply_cnot(ctl, tgt),
        }
    }
}

fn check_dims(z_in: &[f64], params: &CircuitParams) -> Result<()> {
    if z_in.len() != params.qubits {
        return Err(Error::invalid(format!(
            "encoding has {} angles but the circuit has {} qubits",
            z_in.len(),
            params.qubits
        )));
    }
    Ok(())
}

/// One ZYZ layer followed by the CNOT ring (skipped for a single qubit).
pub fn variational_layer(state: &mut StateVector, layer_theta: &[f64]) -> Result<()> {
    let n = state.n_qubits();
    if layer_theta.len() != n * 3 {
        return Err(Error::invalid(format!("layer needs {} angles, got {}", n * 3, layer_theta.len())));
    }
    for gate in layer_gates(n, 0) {
        state.apply_gate(gate, &[], layer_theta)?;
    }
    Ok(())
}

fn final_state(z_in: &[f64], theta: &[f64], gates: &[Gate], n: usize) -> Result<StateVector> {
    let mut s = StateVector::zero(n)?;
    for &g in gates {
        s.apply_gate(g, z_in, theta)?;
    }
    Ok(s)
}

/// Encode `z_in`, run every variational layer and read out `<Z_i>`.
pub fn run_circuit(z_in: &[f64], params: &CircuitParams) -> Result<Vec<f64>> {
    check_dims(z_in, params)?;
    let mut s = StateVector::encode(z_in)?;
    for layer in 0..params.layers {
        let start = params.index(layer, 0, 0);
        variational_layer(&mut s, &params.theta[start..start + 3 * params.qubits])?;
    }
    Ok(s.z_expectations())
}

fn lift(gate: &DMatrix<Complex64>, q: usize, n: usize) -> DMatrix<Complex64> {
    let high = DMatrix::<Complex64>::identity(1 << (n - 1 - q), 1 << (n - 1 - q));
    let low = DMatrix::<Complex64>::identity(1 << q, 1 << q);
    high.kronecker(gate).kronecker(&low)
}

fn mat2(m: Mat2) -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]])
}

/// Dense `2^n x 2^n` unitary of the variational layers (encoding excluded).
///
/// Built from Kronecker-lifted gate matrices; intended as a test oracle.
pub fn circuit_unitary_dense(params: &CircuitParams) -> Result<DMatrix<Complex64>> {
    let n = params.qubits;
    if n == 0 || n > MAX_DENSE_QUBITS {
        return Err(Error::invalid(format!("dense oracle supports 1..={MAX_DENSE_QUBITS} qubits, got {n}")));
    }
    let dim = 1 << n;
    let p0 = mat2([[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]]);
    let p1 = mat2([[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]);
    let x = mat2([[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]);
    let mut u = DMatrix::<Complex64>::identity(dim, dim);
    for layer in 0..params.layers {
        for gate in layer_gates(n, layer) {
            let g = match gate {
                Gate::Ry(q, a) => lift(&mat2(ry_matrix(resolve(a, &[], &params.theta))), q, n),
                Gate::Rz(q, a) => lift(&mat2(rz_matrix(resolve(a, &[], &params.theta))), q, n),
                Gate::Cnot(ctl, tgt) => lift(&p0, ctl, n) + lift(&p1, ctl, n) * lift(&x, tgt, n),
            };
            u = g * u;
        }
    }
    Ok(u)
}

/// Full Jacobian of the readout.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitJacobian {
    pub qubits: usize,
    /// `d z_out[j] / d theta[p]` at `[p * qubits + j]`.
    pub d_theta: Vec<f64>,
    /// `d z_out[j] / d z_in[i]` at `[i * qubits + j]`.
    pub d_input: Vec<f64>,
}

impl CircuitJacobian {
    pub fn theta(&self, p: usize, out: usize) -> f64 {
        self.d_theta[p * self.qubits + out]
    }

    pub fn input(&self, i: usize, out: usize) -> f64 {
        self.d_input[i * self.qubits + out]
    }

    /// Contract with an output cotangent: `(dL/dtheta, dL/dz_in)`.
    pub fn vjp(&self, cotangent: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.qubits;
        let contract = |rows: &[f64]| -> Vec<f64> {
            rows.chunks(n).map(|r| r.iter().zip(cotangent).map(|(a, b)| a * b).sum()).collect()
        };
        (contract(&self.d_theta), contract(&self.d_input))
    }
}

/// Parameter-shift Jacobian with respect to every rotation angle.
///
/// Every angle drives a Pauli rotation, so
/// `df/dt = (f(t + pi/2) - f(t - pi/2)) / 2` is exact.
pub fn circuit_gradients(z_in: &[f64], params: &CircuitParams) -> Result<CircuitJacobian> {
    check_dims(z_in, params)?;
    let n = params.qubits;
    let gates = params.gates();
    let n_theta = params.theta.len();

    let shifted = |which: Angle| -> Result<Vec<f64>> {
        let mut z = z_in.to_vec();
        let mut th = params.theta.clone();
        let slot = match which {
            Angle::Input(i) => &mut z[i],
            Angle::Theta(i) => &mut th[i],
        };
        let base = *slot;
        *slot = base + SHIFT;
        let plus = final_state(&z, &th, &gates, n)?.z_expectations();
        let slot = match which {
            Angle::Input(i) => &mut z[i],
            Angle::Theta(i) => &mut th[i],
        };
        *slot = base - SHIFT;
        let minus = final_state(&z, &th, &gates, n)?.z_expectations();
        Ok(plus.iter().zip(&minus).map(|(p, m)| (p - m) / 2.0).collect())
    };

    let d_theta: Vec<Vec<f64>> =
        (0..n_theta).into_par_iter().map(|p| shifted(Angle::Theta(p))).collect::<Result<_>>()?;
    let d_input: Vec<Vec<f64>> =
        (0..n).into_par_iter().map(|i| shifted(Angle::Input(i))).collect::<Result<_>>()?;
    Ok(CircuitJacobian {
        qubits: n,
        d_theta: d_theta.concat(),
        d_input: d_input.concat(),
    })
}

/// Readout plus vector-Jacobian product by reverse-mode (adjoint) simulation.
///
/// Returns `(z_out, dL/dtheta, dL/dz_in)` for `L = sum_j cotangent[j] z_out[j]`
/// at the cost of roughly three circuit evaluations.
pub fn circuit_vjp_adjoint(
    z_in: &[f64],
    params: &CircuitParams,
    cotangent: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    check_dims(z_in, params)?;
    let n = params.qubits;
    if cotangent.len() != n {
        return Err(Error::invalid(format!("cotangent has {} entries, expected {n}", cotangent.len())));
    }
    let gates = params.gates();
    let mut psi = final_state(z_in, &params.theta, &gates, n)?;
    let z_out = psi.z_expectations();

    let mut lambda = psi.clone();
    for (b, a) in lambda.amps.iter_mut().enumerate() {
        let w: f64 = cotangent.iter().enumerate().map(|(q, cq)| if b >> q & 1 == 0 { *cq } else { -cq }).sum();
        *a *= w;
    }

    let mut d_theta = vec![0.0; params.theta.len()];
    let mut d_input = vec![0.0; n];
    for &gate in gates.iter().rev() {
        match gate {
            Gate::Ry(q, a) | Gate::Rz(q, a) => {
                let axis = if matches!(gate, Gate::Ry(..)) { Axis::Y } else { Axis::Z };
                let grad = lambda.im_pauli_overlap(q, axis, &psi);
                match a {
                    Angle::Input(i) => d_input[i] += grad,
                    Angle::Theta(i) => d_theta[i] += grad,
                }
                let inv = match axis {
                    Axis::Y => ry_matrix(-resolve(a, z_in, &params.theta)),
                    Axis::Z => rz_matrix(-resolve(a, z_in, &params.theta)),
                };
                psi.apply_1q(q, &inv);
                lambda.apply_1q(q, &inv);
            }
            Gate::Cnot(ctl, tgt) => {
                psi.cnot_unchecked(ctl, tgt);
                lambda.cnot_unchecked(ctl, tgt);
            }
        }
    }
    Ok((z_out, d_theta, d_input))
}
