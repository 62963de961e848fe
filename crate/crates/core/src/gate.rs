//! Instance-conditioned weighting of the three rationale views.
//!
//! Each view is scored by a shared perceptron on `[r_i ‖ a]`, the scores are
//! softmaxed into weights, the weighted rationale `r_f` feeds an auxiliary
//! success head `p = σ(h([r_f ‖ a]))`, and the whole stack is trained with
//! binary cross-entropy. An optional query/key attention layer lets each view
//! attend to the others before scoring.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CompanyAttributes;
use crate::metrics::Confusion;
use crate::nn::{AdamW, Mlp, MlpCache};
use crate::util::{dot, fnv1a, sigmoid, softmax};

pub const DEFAULT_ATTR_DIM: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    pub attention: bool,
    pub key_dim: usize,
    /// Weight positives by the negative/positive ratio in the training set.
    pub balance_classes: bool,
    pub seed: u64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            epochs: 50,
            learning_rate: 5e-4,
            weight_decay: 0.01,
            hidden: 256,
            attention: false,
            key_dim: 64,
            balance_classes: true,
            seed: 0,
        }
    }
}

/// One-hot attribute vector: the first half of the slots encodes industry,
/// the rest region, each by a stable hash of the lowercased value.
pub fn attribute_vector(attrs: &CompanyAttributes, dim: usize) -> Vec<f64> {
    let mut a = vec![0.0; dim];
    if dim == 0 {
        return a;
    }
    let half = dim.div_ceil(2);
    let mut set = |value: &str, offset: usize, width: usize| {
        let v = value.trim().to_lowercase();
        if !v.is_empty() && width > 0 {
            a[offset + (fnv1a(v.as_bytes()) % width as u64) as usize] = 1.0;
        }
    };
    set(&attrs.industry, 0, half);
    set(&attrs.region, half, dim - half);
    a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateInput {
    /// Three rationale embeddings, in view order.
    pub rationales: Vec<Vec<f64>>,
    pub attributes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSample {
    pub input: GateInput,
    pub y: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOutput {
    pub weights: Vec<f64>,
    pub fused: Vec<f64>,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    pub key_dim: usize,
    /// `key_dim × rationale_dim`, row-major.
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateModel {
    pub format_version: u32,
    pub rationale_dim: usize,
    pub attr_dim: usize,
    pub seed: u64,
    pub scorer: Mlp,
    pub head: Mlp,
    pub attention: Option<Attention>,
}

struct AttnCache {
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
}

struct Forward {
    xs: Vec<Vec<f64>>,
    caches: Vec<MlpCache>,
    weights: Vec<f64>,
    fused: Vec<f64>,
    xf: Vec<f64>,
    head_cache: MlpCache,
    z: f64,
    attn: Option<AttnCache>,
}

/// Gradients laid out like the model's parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GateGrads {
    pub scorer: Vec<f64>,
    pub head: Vec<f64>,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
}

impl GateGrads {
    fn zeros(m: &GateModel) -> Self {
        let n = m.attention.as_ref().map_or(0, |a| a.wq.len());
        Self {
            scorer: vec![0.0; m.scorer.params().len()],
            head: vec![0.0; m.head.params().len()],
            wq: vec![0.0; n],
            wk: vec![0.0; n],
        }
    }

    fn clear(&mut self) {
        for v in [&mut self.scorer, &mut self.head, &mut self.wq, &mut self.wk] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

fn matvec(m: &[f64], cols: usize, x: &[f64]) -> Vec<f64> {
    m.chunks_exact(cols).map(|row| dot(row, x)).collect()
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Binary cross-entropy of `σ(z)` against `y`, computed from the logit.
pub fn bce_from_logit(z: f64, y: bool) -> f64 {
    softplus(z) - if y { z } else { 0.0 }
}

impl GateModel {
    pub fn new(rationale_dim: usize, attr_dim: usize, config: &GateConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = rationale_dim + attr_dim;
        let scorer = Mlp::init_zero_output(d, config.hidden, &mut rng);
        let head = Mlp::init(d, config.hidden, &mut rng);
        let attention = config.attention.then(|| {
            let b = 1.0 / (rationale_dim as f64).sqrt();
            let n = config.key_dim * rationale_dim;
            Attention {
                key_dim: config.key_dim,
                wq: (0..n).map(|_| rng.gen_range(-b..=b)).collect(),
                wk: (0..n).map(|_| rng.gen_range(-b..=b)).collect(),
            }
        });
        Self {
            format_version: 1,
            rationale_dim,
            attr_dim,
            seed: config.seed,
            scorer,
            head,
            attention,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.scorer.is_finite()
            && self.head.is_finite()
            && self
                .attention
                .as_ref()
                .is_none_or(|a| a.wq.iter().chain(&a.wk).all(|x| x.is_finite()))
    }

    fn check(&self, input: &GateInput) -> Result<()> {
        if input.rationales.len() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                actual: input.rationales.len(),
            });
        }
        for r in &input.rationales {
            if r.len() != self.rationale_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.rationale_dim,
                    actual: r.len(),
                });
            }
        }
        if input.attributes.len() != self.attr_dim {
            return Err(Error::DimensionMismatch {
                expected: self.attr_dim,
                actual: input.attributes.len(),
            });
        }
        Ok(())
    }

    fn run(&self, input: &GateInput) -> Forward {
        let rs = &input.rationales;
        let a = &input.attributes;
        let (views, attn): (Vec<Vec<f64>>, _) = match &self.attention {
            None => (rs.clone(), None),
            Some(att) => {
                let dr = self.rationale_dim;
                let q: Vec<_> = rs.iter().map(|r| matvec(&att.wq, dr, r)).collect();
                let k: Vec<_> = rs.iter().map(|r| matvec(&att.wk, dr, r)).collect();
                let scale = 1.0 / (att.key_dim as f64).sqrt();
                let attn: Vec<Vec<f64>> = q
                    .iter()
                    .map(|qi| softmax(&k.iter().map(|kj| dot(qi, kj) * scale).collect::<Vec<_>>()))
                    .collect();
                let mixed = attn
                    .iter()
                    .map(|row| {
                        let mut h = vec![0.0; dr];
                        for (aij, rj) in row.iter().zip(rs) {
                            for (hc, rc) in h.iter_mut().zip(rj) {
                                *hc += aij * rc;
                            }
                        }
                        h
                    })
                    .collect();
                (mixed, Some(AttnCache { q, k, a: attn }))
            }
        };
        let mut xs = Vec::with_capacity(3);
        let mut caches = Vec::with_capacity(3);
        let mut scores = Vec::with_capacity(3);
        for v in &views {
            let mut x = v.clone();
            x.extend_from_slice(a);
            let (s, c) = self.scorer.forward(&x);
            xs.push(x);
            caches.push(c);
            scores.push(s);
        }
        let weights = softmax(&scores);
        let mut fused = vec![0.0; self.rationale_dim];
        for (w, r) in weights.iter().zip(rs) {
            for (f, x) in fused.iter_mut().zip(r) {
                *f += w * x;
            }
        }
        let mut xf = fused.clone();
        xf.extend_from_slice(a);
        let (z, head_cache) = self.head.forward(&xf);
        Forward {
            xs,
            caches,
            weights,
            fused,
            xf,
            head_cache,
            z,
            attn,
        }
    }

    pub fn forward(&self, input: &GateInput) -> Result<GateOutput> {
        self.check(input)?;
        let f = self.run(input);
        Ok(GateOutput {
            weights: f.weights,
            fused: f.fused,
            p: sigmoid(f.z),
        })
    }

    /// Weights handed to the manager; the success head is not consulted.
    pub fn weights_for_manager(&self, input: &GateInput) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.weights)
    }

    /// Cross-entropy of one sample; adds `scale * dL/dθ` into `grads` when given.
    pub fn loss(&self, sample: &GateSample, grads: Option<(&mut GateGrads, f64)>) -> f64 {
        let input = &sample.input;
        let f = self.run(input);
        let loss = bce_from_logit(f.z, sample.y);
        let Some((g, scale)) = grads else {
            return loss;
        };
        let dr = self.rationale_dim;
        let y = if sample.y { 1.0 } else { 0.0 };
        let dz = scale * (sigmoid(f.z) - y);
        let mut dxf = vec![0.0; f.xf.len()];
        self.head
            .backward(&f.xf, &f.head_cache, dz, &mut g.head, Some(&mut dxf));
        let dfused = &dxf[..dr];
        let dw: Vec<f64> = input.rationales.iter().map(|r| dot(dfused, r)).collect();
        let mean = dot(&f.weights, &dw);
        let ds: Vec<f64> = f
            .weights
            .iter()
            .zip(&dw)
            .map(|(w, d)| w * (d - mean))
            .collect();
        match (&self.attention, &f.attn) {
            (Some(att), Some(cache)) => {
                let mut dh = vec![vec![0.0; f.xs[0].len()]; 3];
                for i in 0..3 {
                    self.scorer.backward(
                        &f.xs[i],
                        &f.caches[i],
                        ds[i],
                        &mut g.scorer,
                        Some(&mut dh[i]),
                    );
                }
                let rs = &input.rationales;
                let inv = 1.0 / (att.key_dim as f64).sqrt();
                let mut dq = vec![vec![0.0; att.key_dim]; 3];
                let mut dk = vec![vec![0.0; att.key_dim]; 3];
                for i in 0..3 {
                    let dhi = &dh[i][..dr];
                    let da: Vec<f64> = rs.iter().map(|rj| dot(dhi, rj)).collect();
                    let m = dot(&cache.a[i], &da);
                    for j in 0..3 {
                        let du = cache.a[i][j] * (da[j] - m) * inv;
                        for c in 0..att.key_dim {
                            dq[i][c] += du * cache.k[j][c];
                            dk[j][c] += du * cache.q[i][c];
                        }
                    }
                }
                for i in 0..3 {
                    for c in 0..att.key_dim {
                        let row = c * dr;
                        for (t, &x) in rs[i].iter().enumerate() {
                            g.wq[row + t] += dq[i][c] * x;
                            g.wk[row + t] += dk[i][c] * x;
                        }
                    }
                }
            }
            _ => {
                for i in 0..3 {
                    self.scorer
                        .backward(&f.xs[i], &f.caches[i], ds[i], &mut g.scorer, None);
                }
            }
        }
        loss
    }

    /// Gradient of the summed loss over `batch`.
    pub fn gradient(&self, batch: &[GateSample]) -> (f64, GateGrads) {
        let mut g = GateGrads::zeros(self);
        let loss = batch
            .iter()
            .map(|s| self.loss(s, Some((&mut g, 1.0))))
            .sum();
        (loss, g)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string(self)?;
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateEpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_precision: Option<f64>,
    pub val_f1: Option<f64>,
}

/// Confusion of the success head thresholded at 0.5.
pub fn head_confusion(model: &GateModel, samples: &[GateSample]) -> Result<Confusion> {
    let mut c = Confusion::default();
    for s in samples {
        c.add(model.forward(&s.input)?.p >= 0.5, s.y);
    }
    Ok(c)
}

/// Mini-batch AdamW on mean cross-entropy; keeps the checkpoint with the
/// best validation F1 of the success head (the final one without validation data).
pub fn train_gate(
    train: &[GateSample],
    val: &[GateSample],
    config: &GateConfig,
) -> Result<(GateModel, Vec<GateEpochLog>)> {
    let first = train
        .first()
        .ok_or(Error::EmptyInput("gate training set"))?;
    if train.iter().all(|s| s.y) || train.iter().all(|s| !s.y) {
        return Err(Error::SingleClass);
    }
    if config.batch_size == 0 || config.hidden == 0 || (config.attention && config.key_dim == 0) {
        return Err(Error::Config(format!("invalid gate config: {config:?}")));
    }
    let dr = first.input.rationales.first().map_or(0, Vec::len);
    let mut model = GateModel::new(dr, first.input.attributes.len(), config);
    for s in train.iter().chain(val) {
        model.check(&s.input)?;
    }
    let lr = config.learning_rate;
    let wd = config.weight_decay;
    let mut opt_scorer = AdamW::new(model.scorer.params().len(), lr, wd);
    let mut opt_head = AdamW::new(model.head.params().len(), lr, wd);
    let n_att = model.attention.as_ref().map_or(0, |a| a.wq.len());
    let mut opt_q = AdamW::new(n_att, lr, wd);
    let mut opt_k = AdamW::new(n_att, lr, wd);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6a09_e667_f3bc_c908);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut g = GateGrads::zeros(&model);
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, GateModel)> = None;
    let n_pos = train.iter().filter(|s| s.y).count() as f64;
    let pos_weight = if config.balance_classes {
        (train.len() as f64 - n_pos) / n_pos
    } else {
        1.0
    };
    let weight = |s: &GateSample| if s.y { pos_weight } else { 1.0 };
    let total_weight: f64 = train.iter().map(weight).sum();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            g.clear();
            let scale = 1.0 / batch.iter().map(|&i| weight(&train[i])).sum::<f64>();
            for &i in batch {
                let w = weight(&train[i]);
                total += w * model.loss(&train[i], Some((&mut g, scale * w)));
            }
            opt_scorer.step(model.scorer.params_mut(), &g.scorer);
            opt_head.step(model.head.params_mut(), &g.head);
            if let Some(att) = model.attention.as_mut() {
                opt_q.step(&mut att.wq, &g.wq);
                opt_k.step(&mut att.wk, &g.wk);
            }
        }
        if !model.is_finite() {
            return Err(Error::NonFinite("gate parameters"));
        }
        let (vp, vf) = if val.is_empty() {
            (None, None)
        } else {
            let c = head_confusion(&model, val)?;
            (Some(c.precision()), Some(c.f1()))
        };
        log.push(GateEpochLog {
            epoch,
            loss: total / total_weight,
            val_precision: vp,
            val_f1: vf,
        });
        if let Some(f1) = vf {
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, model.clone()));
            }
        }
    }
    Ok((best.map(|(_, m)| m).unwrap_or(model), log))
}

/// Uniform draw from the probability simplex over three views.
pub fn random_weights<R: Rng>(rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..3).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}
