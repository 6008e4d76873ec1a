use rand::Rng;

use super::{ensure_finite, glorot_bound, standardize, uniform_vec, ModelFamily, Normalizer, PolicyModel};
use crate::channel::GainMatrix;
use crate::error::{Error, Result};

pub const CNN_FILTERS: usize = 4;
const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Convolutional benchmark: 3x3 conv with 4 filters (zero padding 1), ReLU,
/// then a linear head to `K` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    users: usize,
    /// `[filter][row][col]`.
    pub conv_w: Vec<f64>,
    pub conv_b: Vec<f64>,
    /// `users x (filters * users^2)`, row-major; input is channel-major.
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
    pub normalizer: Normalizer,
}

#[derive(Debug, Clone)]
pub struct CnnTape {
    pub x: Vec<f64>,
    /// Conv output before ReLU, `[filter][row][col]`.
    pub conv: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl CnnModel {
    pub fn zeros(users: usize) -> Self {
        let hidden = CNN_FILTERS * users * users;
        CnnModel {
            users,
            conv_w: vec![0.0; CNN_FILTERS * TAPS],
            conv_b: vec![0.0; CNN_FILTERS],
            head_w: vec![0.0; users * hidden],
            head_b: vec![0.0; users],
            normalizer: Normalizer::default(),
        }
    }

    pub fn init<R: Rng + ?Sized>(users: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(users);
        let hidden = CNN_FILTERS * users * users;
        m.conv_w = uniform_vec(rng, CNN_FILTERS * TAPS, glorot_bound(TAPS, CNN_FILTERS * TAPS));
        m.head_w = uniform_vec(rng, users * hidden, glorot_bound(hidden, users));
        m
    }

    /// Zero-padded 3x3 cross-correlation of a `K x K` image, before ReLU.
    pub fn convolve(&self, x: &[f64]) -> Vec<f64> {
        let k = self.users;
        let mut out = vec![0.0; CNN_FILTERS * k * k];
        for f in 0..CNN_FILTERS {
            for r in 0..k {
                for c in 0..k {
                    let mut acc = self.conv_b[f];
                    for (i, j, rr, cc) in taps(k, r, c) {
                        acc += self.conv_w[f * TAPS + i * KERNEL + j] * x[rr * k + cc];
                    }
                    out[(f * k + r) * k + c] = acc;
                }
            }
        }
        out
    }
}

/// In-bounds kernel taps `(ki, kj, row, col)` around output pixel `(r, c)`.
fn taps(k: usize, r: usize, c: usize) -> impl Iterator<Item = (usize, usize, usize, usize)> {
    (0..KERNEL).flat_map(move |i| {
        (0..KERNEL).filter_map(move |j| {
            let rr = (r + i).checked_sub(1)?;
            let cc = (c + j).checked_sub(1)?;
            (rr < k && cc < k).then_some((i, j, rr, cc))
        })
    })
}

impl PolicyModel for CnnModel {
    type Tape = CnnTape;

    fn family(&self) -> ModelFamily {
        ModelFamily::Cnn
    }

    fn users(&self) -> usize {
        self.users
    }

    fn forward(&self, g: &GainMatrix) -> Result<(Vec<f64>, CnnTape)> {
        let k = self.users;
        if g.users() != k {
            return Err(Error::invalid(format!("model expects {k} users, gain matrix has {}", g.users())));
        }
        let x = standardize(g, &self.normalizer);
        ensure_finite("standardized input", &x)?;
        let conv = self.convolve(&x);
        let hidden: Vec<f64> = conv.iter().map(|v| v.max(0.0)).collect();
        let h = hidden.len();
        let logits: Vec<f64> = (0..k)
            .map(|row| self.head_b[row] + self.head_w[row * h..(row + 1) * h].iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        ensure_finite("logits", &logits)?;
        Ok((logits, CnnTape { x, conv, hidden }))
    }

    fn backward(&self, tape: &CnnTape, d_logits: &[f64]) -> Result<Vec<f64>> {
        let k = self.users;
        if d_logits.len() != k {
            return Err(Error::invalid(format!("expected {k} logit gradients, got {}", d_logits.len())));
        }
        let h = tape.hidden.len();
        let mut d_head_w = vec![0.0; k * h];
        let mut d_hidden = vec![0.0; h];
        for (row, &ds) in d_logits.iter().enumerate() {
            for j in 0..h {
                d_head_w[row * h + j] = ds * tape.hidden[j];
                d_hidden[j] += ds * self.head_w[row * h + j];
            }
        }
        let mut d_conv_w = vec![0.0; CNN_FILTERS * TAPS];
        let mut d_conv_b = vec![0.0; CNN_FILTERS];
        for f in 0..CNN_FILTERS {
            for r in 0..k {
                for c in 0..k {
                    let idx = (f * k + r) * k + c;
                    if tape.conv[idx] <= 0.0 {
                        continue;
                    }
                    let d = d_hidden[idx];
                    d_conv_b[f] += d;
                    for (i, j, rr, cc) in taps(k, r, c) {
                        d_conv_w[f * TAPS + i * KERNEL + j] += d * tape.x[rr * k + cc];
                    }
                }
            }
        }
        let mut grad = Vec::with_capacity(self.param_count());
        grad.extend(d_conv_w);
        grad.extend(d_conv_b);
        grad.extend(d_head_w);
        grad.extend_from_slice(d_logits);
        Ok(grad)
    }

    fn param_count(&self) -> usize {
        self.conv_w.len() + self.conv_b.len() + self.head_w.len() + self.head_b.len()
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.conv_w);
        v.extend_from_slice(&self.conv_b);
        v.extend_from_slice(&self.head_w);
        v.extend_from_slice(&self.head_b);
        v
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::invalid(format!("CNN has {} parameters, got {}", self.param_count(), flat.len())));
        }
        let mut rest = flat;
        for dst in [&mut self.conv_w, &mut self.conv_b, &mut self.head_w, &mut self.head_b] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn normalizer(&self) -> Normalizer {
        self.normalizer
    }

    fn set_normalizer(&mut self, norm: Normalizer) {
        self.normalizer = norm;
    }
}
