//! Two-layer rectifier perceptron with a scalar output, explicit backprop,
//! and an AdamW optimizer over flat parameter vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::util::dot;

/// `score(x) = w2 · relu(W1 x + b1) + b2`.
///
/// Parameters live in one flat vector: `W1` (hidden x input, row-major),
/// then `b1`, `w2`, and `b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    input: usize,
    hidden: usize,
    params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    pre: Vec<f64>,
    act: Vec<f64>,
}

impl Mlp {
    pub fn param_count(input: usize, hidden: usize) -> usize {
        hidden * input + 2 * hidden + 1
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization per layer.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(Self::param_count(input, hidden));
        let a1 = 1.0 / (input as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        params.extend((0..hidden * input).map(|_| rng.gen_range(-a1..=a1)));
        params.extend((0..hidden).map(|_| rng.gen_range(-a1..=a1)));
        params.extend((0..hidden).map(|_| rng.gen_range(-a2..=a2)));
        params.push(rng.gen_range(-a2..=a2));
        Self {
            input,
            hidden,
            params,
        }
    }

    /// Same as [`Mlp::init`] with the output layer zeroed, so every input scores 0.
    pub fn init_zero_output<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut m = Self::init(input, hidden, rng);
        let off = hidden * input + hidden;
        m.params[off..].iter_mut().for_each(|p| *p = 0.0);
        m
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// `(W1, b1, w2, b2)` views into the flat parameter vector.
    pub fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let (w1, rest) = self.params.split_at(self.hidden * self.input);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.hidden);
        (w1, b1, w2, b2[0])
    }

    pub fn forward(&self, x: &[f64]) -> (f64, MlpCache) {
        debug_assert_eq!(x.len(), self.input);
        let (w1, b1, w2, b2) = self.split();
        let mut pre = Vec::with_capacity(self.hidden);
        for (h, row) in w1.chunks_exact(self.input).enumerate() {
            let z = dot(row, x) + b1[h];
            pre.push(z);
        }
        let act: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        let out = act.iter().zip(w2).map(|(a, w)| a * w).sum::<f64>() + b2;
        (out, MlpCache { pre, act })
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.forward(x).0
    }

    /// Output for a precomputed first-layer product `W1 x` (without `b1`).
    pub fn score_from_product(&self, wx: &[f64]) -> f64 {
        let (_, b1, w2, b2) = self.split();
        wx.iter()
            .zip(b1)
            .zip(w2)
            .map(|((z, b), w)| (z + b).max(0.0) * w)
            .sum::<f64>()
            + b2
    }

    /// Accumulates `dout * d score / d params` into `grad` and, when given,
    /// `dout * d score / d x` into `dx`.
    pub fn backward(
        &self,
        x: &[f64],
        cache: &MlpCache,
        dout: f64,
        grad: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let (w1, _, w2, _) = self.split();
        let n_w1 = self.hidden * self.input;
        let (g_w1, rest) = grad.split_at_mut(n_w1);
        let (g_b1, rest) = rest.split_at_mut(self.hidden);
        let (g_w2, g_b2) = rest.split_at_mut(self.hidden);
        g_b2[0] += dout;
        let mut dx = dx;
        for h in 0..self.hidden {
            g_w2[h] += dout * cache.act[h];
            if cache.pre[h] <= 0.0 {
                continue;
            }
            let dz = dout * w2[h];
            g_b1[h] += dz;
            let row = &mut g_w1[h * self.input..(h + 1) * self.input];
            for (g, &xi) in row.iter_mut().zip(x) {
                *g += dz * xi;
            }
            if let Some(dx) = dx.as_deref_mut() {
                let wrow = &w1[h * self.input..(h + 1) * self.input];
                for (d, &w) in dx.iter_mut().zip(wrow) {
                    *d += dz * w;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(n: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One update; weight decay is applied directly to the parameters.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -=
                self.lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}
