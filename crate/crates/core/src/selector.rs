//! Listwise path-expansion scorer.
//!
//! Each candidate expansion is featurized as `[e_base ‖ e_v ‖ e_v − e_base]`
//! from the embeddings of the verbalized baseline and extended paths, scored
//! by a two-layer perceptron, and trained so that the temperature softmax of
//! the scores matches the softmax of the shifted oracle gains.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{Embedding, TextEncoder};
use crate::error::{Error, Result};
use crate::gain::{PathState, RankingGroup};
use crate::graph::{InvestmentGraph, Target, TemporalView};
use crate::nn::{AdamW, Mlp};
use crate::util::{argmax, dot};
use crate::verbalize::verbalize_path;

pub const DEFAULT_PATHS: usize = 2;
pub const DEFAULT_MAX_DEPTH: usize = 4;
const GRAD_CHUNK: usize = 16;

/// `[e_base ‖ e_v ‖ e_v − e_base]`.
pub fn difference_features(base: &Embedding, cand: &Embedding) -> Result<Vec<f64>> {
    if base.dim() != cand.dim() {
        return Err(Error::DimensionMismatch {
            expected: base.dim(),
            actual: cand.dim(),
        });
    }
    let (b, v) = (base.values(), cand.values());
    let mut x = Vec::with_capacity(3 * b.len());
    x.extend_from_slice(b);
    x.extend_from_slice(v);
    x.extend(v.iter().zip(b).map(|(v, b)| v - b));
    Ok(x)
}

/// Shift gains to `r_i = Δ_i − min Δ` and soften with temperature `tau`.
/// Returns `None` when every shifted gain is zero: such a group has no loss.
pub fn listwise_targets(gains: &[f64], tau: f64) -> Option<Vec<f64>> {
    let min = gains.iter().copied().fold(f64::INFINITY, f64::min);
    let r: Vec<f64> = gains.iter().map(|g| g - min).collect();
    if r.iter().sum::<f64>() == 0.0 {
        return None;
    }
    Some(tempered_softmax(&r, tau))
}

pub fn tempered_softmax(xs: &[f64], tau: f64) -> Vec<f64> {
    let scaled: Vec<f64> = xs.iter().map(|x| x / tau).collect();
    crate::util::softmax(&scaled)
}

/// `KL(q ‖ p)` with `0 · log 0 = 0`.
pub fn listwise_loss(q: &[f64], p: &[f64]) -> f64 {
    assert_eq!(q.len(), p.len());
    q.iter()
        .zip(p)
        .filter(|(&qi, _)| qi > 0.0)
        .map(|(&qi, &pi)| qi * (qi.ln() - pi.ln()))
        .sum()
}

/// KL of `q` against the tempered softmax of `scores`, evaluated in log space.
fn kl_from_scores(q: &[f64], scores: &[f64], tau: f64) -> f64 {
    let z: Vec<f64> = scores.iter().map(|s| s / tau).collect();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    q.iter()
        .zip(&z)
        .filter(|(&qi, _)| qi > 0.0)
        .map(|(&qi, &zi)| qi * (qi.ln() - (zi - lse)))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub tau: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            batch_size: 256,
            epochs: 30,
            learning_rate: 3e-4,
            weight_decay: 0.01,
            hidden: 256,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0)
            || self.batch_size == 0
            || self.hidden == 0
            || !(self.learning_rate > 0.0)
        {
            return Err(Error::Config(format!(
                "invalid selector training config: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorModel {
    pub format_version: u32,
    pub embed_dim: usize,
    pub tau: f64,
    pub seed: u64,
    pub mlp: Mlp,
}

impl SelectorModel {
    pub fn new(embed_dim: usize, config: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self {
            format_version: 1,
            embed_dim,
            tau: config.tau,
            seed: config.seed,
            mlp: Mlp::init(3 * embed_dim, config.hidden, &mut rng),
        }
    }

    pub fn score(&self, features: &[f64]) -> f64 {
        self.mlp.score(features)
    }

    /// Folds the three input blocks so a base path is projected once and
    /// each candidate costs one `hidden x dim` product.
    pub fn group_scorer(&self) -> GroupScorer<'_> {
        let d = self.embed_dim;
        let (w1, ..) = self.mlp.split();
        let mut w_base = Vec::with_capacity(self.mlp.hidden_dim() * d);
        let mut w_cand = Vec::with_capacity(self.mlp.hidden_dim() * d);
        for row in w1.chunks_exact(3 * d) {
            let (a, rest) = row.split_at(d);
            let (b, c) = rest.split_at(d);
            w_base.extend(a.iter().zip(c).map(|(a, c)| a - c));
            w_cand.extend(b.iter().zip(c).map(|(b, c)| b + c));
        }
        GroupScorer {
            model: self,
            w_base,
            w_cand,
        }
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

pub struct GroupScorer<'m> {
    model: &'m SelectorModel,
    w_base: Vec<f64>,
    w_cand: Vec<f64>,
}

impl GroupScorer<'_> {
    /// Same scores as [`SelectorModel::score`] on the difference features,
    /// up to rounding.
    pub fn score(&self, base: &Embedding, candidates: &[Embedding]) -> Result<Vec<f64>> {
        let d = self.model.embed_dim;
        let project = |w: &[f64], e: &Embedding| -> Result<Vec<f64>> {
            if e.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: e.dim(),
                });
            }
            Ok(w.chunks_exact(d).map(|row| dot(row, e.values())).collect())
        };
        let pb = project(&self.w_base, base)?;
        candidates
            .iter()
            .map(|c| {
                let mut z = project(&self.w_cand, c)?;
                z.iter_mut().zip(&pb).for_each(|(z, b)| *z += b);
                Ok(self.model.mlp.score_from_product(&z))
            })
            .collect()
    }
}

/// A ranking group with features computed and gains attached.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGroup {
    pub target: String,
    pub features: Vec<Vec<f64>>,
    pub gains: Vec<f64>,
}

/// Verbalizes and embeds every baseline and candidate path.
pub fn featurize_groups<E: TextEncoder + ?Sized>(
    groups: &[RankingGroup],
    graph: &InvestmentGraph,
    encoder: &E,
) -> Result<Vec<FeatureGroup>> {
    groups
        .iter()
        .map(|g| {
            let gains = g.gains().ok_or(Error::EmptyInput("unlabeled group"))?;
            let view = graph.target_view(&g.target);
            let base = encoder.encode(&verbalize_path(&g.base, &view))?;
            let features = g
                .candidates
                .iter()
                .map(|c| {
                    let e = encoder.encode(&verbalize_path(&c.path, &view))?;
                    difference_features(&base, &e)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FeatureGroup {
                target: g.target.company.clone(),
                features,
                gains,
            })
        })
        .collect()
}

/// Listwise loss of one group; accumulates `scale * dL/dθ` into `grad` when given.
/// `None` for skipped groups.
pub fn group_loss(
    mlp: &Mlp,
    group: &FeatureGroup,
    tau: f64,
    grad: Option<(&mut [f64], f64)>,
) -> Option<f64> {
    let q = listwise_targets(&group.gains, tau)?;
    let fwd: Vec<_> = group.features.iter().map(|x| mlp.forward(x)).collect();
    let scores: Vec<f64> = fwd.iter().map(|(s, _)| *s).collect();
    let loss = kl_from_scores(&q, &scores, tau);
    if let Some((grad, scale)) = grad {
        let p = tempered_softmax(&scores, tau);
        for (i, (x, (_, cache))) in group.features.iter().zip(&fwd).enumerate() {
            let ds = (p[i] - q[i]) / tau;
            mlp.backward(x, cache, scale * ds, grad, None);
        }
    }
    Some(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_ndcg_at_1: Option<f64>,
}

/// Mini-batch AdamW on the mean listwise loss per batch. Deterministic for a
/// fixed seed; returns the checkpoint with the best validation NDCG@1 (the
/// final one when no validation groups are given).
pub fn train(
    train_groups: &[FeatureGroup],
    val_groups: &[FeatureGroup],
    config: &TrainConfig,
) -> Result<(SelectorModel, Vec<EpochLog>)> {
    config.validate()?;
    let trainable: Vec<&FeatureGroup> = train_groups
        .iter()
        .filter(|g| listwise_targets(&g.gains, config.tau).is_some())
        .collect();
    if trainable.is_empty() {
        return Err(Error::NoTrainableGroups);
    }
    let feat_dim = trainable[0].features[0].len();
    if feat_dim % 3 != 0 {
        return Err(Error::DimensionMismatch {
            expected: 3 * (feat_dim / 3),
            actual: feat_dim,
        });
    }
    let mut model = SelectorModel::new(feat_dim / 3, config);
    let n_params = model.mlp.params().len();
    let mut opt = AdamW::new(n_params, config.learning_rate, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..trainable.len()).collect();
    let mut grad = vec![0.0; n_params];
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, SelectorModel)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            // Fixed-size chunks summed in order keep results independent of
            // the thread count.
            let partials: Vec<(f64, Vec<f64>)> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut g = vec![0.0; n_params];
                    let mut loss = 0.0;
                    for &i in chunk {
                        loss +=
                            group_loss(&model.mlp, trainable[i], config.tau, Some((&mut g, scale)))
                                .unwrap_or(0.0);
                    }
                    (loss, g)
                })
                .collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (loss, g) in partials {
                total += loss;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            opt.step(model.mlp.params_mut(), &grad);
        }
        if !model.mlp.is_finite() {
            return Err(Error::NonFinite("selector parameters"));
        }
        let val = (!val_groups.is_empty()).then(|| evaluate(&model, val_groups).ndcg_at_1);
        log.push(EpochLog {
            epoch,
            loss: total / trainable.len() as f64,
            val_ndcg_at_1: val,
        });
        if let Some(v) = val {
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, model.clone()));
            }
        }
    }
    let model = best.map(|(_, m)| m).unwrap_or(model);
    Ok((model, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorEval {
    pub ndcg_at_1: f64,
    pub hit_at_1: f64,
    pub groups: usize,
}

/// Hit@1 and NDCG@1 over groups with non-zero shifted gain; `scores` gives
/// the candidate scores of each group.
pub fn evaluate_scores<F>(groups: &[FeatureGroup], mut scores: F) -> SelectorEval
where
    F: FnMut(&FeatureGroup) -> Vec<f64>,
{
    let mut ndcg = 0.0;
    let mut hits = 0.0;
    let mut n = 0usize;
    for g in groups {
        let s = scores(g);
        let min = g.gains.iter().copied().fold(f64::INFINITY, f64::min);
        let r: Vec<f64> = g.gains.iter().map(|x| x - min).collect();
        let rmax = r.iter().copied().fold(0.0, f64::max);
        if r.iter().sum::<f64>() == 0.0 {
            continue;
        }
        let chosen = argmax(&s).expect("non-empty group");
        n += 1;
        ndcg += r[chosen] / rmax;
        if r[chosen] == rmax {
            hits += 1.0;
        }
    }
    let d = n.max(1) as f64;
    SelectorEval {
        ndcg_at_1: ndcg / d,
        hit_at_1: hits / d,
        groups: n,
    }
}

pub fn evaluate(model: &SelectorModel, groups: &[FeatureGroup]) -> SelectorEval {
    let scores: Vec<Vec<f64>> = groups
        .par_iter()
        .map(|g| g.features.iter().map(|x| model.score(x)).collect())
        .collect();
    let mut it = scores.into_iter();
    evaluate_scores(groups, |_| it.next().expect("one score list per group"))
}

/// Expected metrics of i.i.d. `U(0,1)` scoring, estimated over `draws` passes.
pub fn random_baseline(groups: &[FeatureGroup], draws: usize, seed: u64) -> SelectorEval {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = SelectorEval {
        ndcg_at_1: 0.0,
        hit_at_1: 0.0,
        groups: 0,
    };
    for _ in 0..draws {
        let e = evaluate_scores(groups, |g| {
            (0..g.gains.len()).map(|_| rng.gen::<f64>()).collect()
        });
        acc.ndcg_at_1 += e.ndcg_at_1;
        acc.hit_at_1 += e.hit_at_1;
        acc.groups = e.groups;
    }
    acc.ndcg_at_1 /= draws as f64;
    acc.hit_at_1 /= draws as f64;
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    /// Number of paths (beam width at hop 0).
    pub paths: usize,
    /// Maximum hops per path.
    pub max_depth: usize,
    /// Most recent neighbors considered per expansion step.
    pub max_candidates: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            paths: DEFAULT_PATHS,
            max_depth: DEFAULT_MAX_DEPTH,
            max_candidates: 32,
        }
    }
}

/// Beam procedure driven by an arbitrary scorer: top-`paths` seeds at hop 0,
/// then greedy top-1 extension of each beam until `max_depth` or a dead end.
/// `score(base, candidates)` returns one score per candidate path.
pub fn extract_paths_with<F>(
    target: &Target,
    view: &TemporalView<'_>,
    config: &ExtractConfig,
    mut score: F,
) -> Result<Vec<PathState>>
where
    F: FnMut(&PathState, &[PathState]) -> Result<Vec<f64>>,
{
    let root = PathState::root(&target.company);
    let expansions = |path: &PathState| -> Vec<PathState> {
        view.neighbors(path.last())
            .into_iter()
            .filter(|(n, _)| !path.contains(n))
            .take(config.max_candidates)
            .map(|(n, e)| path.extend(n, e.clone()))
            .collect()
    };
    if config.max_depth == 0 || config.paths == 0 {
        return Ok(Vec::new());
    }
    let seeds = expansions(&root);
    if seeds.is_empty() {
        return Ok(Vec::new());
    }
    let s = score(&root, &seeds)?;
    let mut idx: Vec<usize> = (0..seeds.len()).collect();
    // Stable sort keeps the lower index first among equal scores.
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut out: Vec<PathState> = Vec::new();
    for &i in idx.iter().take(config.paths) {
        let mut path = seeds[i].clone();
        while path.hop() < config.max_depth {
            let cands = expansions(&path);
            if cands.is_empty() {
                break;
            }
            let s = score(&path, &cands)?;
            let best = argmax(&s).expect("non-empty");
            path = cands[best].clone();
        }
        if !out.contains(&path) {
            out.push(path);
        }
    }
    Ok(out)
}

/// Paths chosen by the trained selector; no language-model calls.
pub fn extract_paths<E: TextEncoder + ?Sized>(
    target: &Target,
    view: &TemporalView<'_>,
    model: &SelectorModel,
    encoder: &E,
    config: &ExtractConfig,
) -> Result<Vec<PathState>> {
    let scorer = model.group_scorer();
    extract_paths_with(target, view, config, |base, cands| {
        let e_base = encoder.encode(&verbalize_path(base, view))?;
        let e: Vec<Embedding> = cands
            .iter()
            .map(|c| encoder.encode(&verbalize_path(c, view)))
            .collect::<Result<_>>()?;
        scorer.score(&e_base, &e)
    })
}

/// Same beam procedure with i.i.d. uniform scores.
pub fn random_paths(
    target: &Target,
    view: &TemporalView<'_>,
    config: &ExtractConfig,
    seed: u64,
) -> Result<Vec<PathState>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ crate::util::fnv1a(target.company.as_bytes()));
    extract_paths_with(target, view, config, |_, cands| {
        Ok(cands.iter().map(|_| rng.gen::<f64>()).collect())
    })
}

/// Every simple path from the target up to `max_depth` hops, shortest first,
/// at most `cap` of them.
pub fn all_paths(
    target: &Target,
    view: &TemporalView<'_>,
    max_depth: usize,
    cap: usize,
) -> Vec<PathState> {
    let mut out = Vec::new();
    let mut frontier = vec![PathState::root(&target.company)];
    for _ in 0..max_depth {
        let mut next = Vec::new();
        for path in &frontier {
            for (n, e) in view.neighbors(path.last()) {
                if path.contains(&n) {
                    continue;
                }
                if out.len() == cap {
                    return out;
                }
                let p = path.extend(n, e.clone());
                out.push(p.clone());
                next.push(p);
            }
        }
        frontier = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn group_scorer_matches_full_forward() {
        let cfg = TrainConfig {
            hidden: 16,
            seed: 3,
            ..TrainConfig::default()
        };
        let model = SelectorModel::new(8, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut emb =
            || Embedding::new((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let base = emb();
        let cands: Vec<Embedding> = (0..5).map(|_| emb()).collect();
        let fast = model.group_scorer().score(&base, &cands).unwrap();
        for (c, f) in cands.iter().zip(fast) {
            let full = model.score(&difference_features(&base, c).unwrap());
            assert!((full - f).abs() < 1e-12, "{full} vs {f}");
        }
    }

    #[test]
    fn equal_gains_are_skipped() {
        assert!(listwise_targets(&[0.2, 0.2, 0.2], 0.5).is_none());
        assert!(listwise_targets(&[0.7], 0.5).is_none());
    }

    #[test]
    fn worked_target_example() {
        let q = listwise_targets(&[0.5, 0.1, 0.3], 0.5).unwrap();
        for (a, b) in q.iter().zip([0.47177, 0.21198, 0.31624]) {
            assert!((a - b).abs() < 1e-4, "{q:?}");
        }
    }

    #[test]
    fn kl_examples() {
        assert_eq!(listwise_loss(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert!((listwise_loss(&[1.0, 0.0], &[0.5, 0.5]) - std::f64::consts::LN_2).abs() < 1e-6);
        let v = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert!((listwise_loss(&[0.5, 0.5], &[0.9, 0.1]) - v).abs() < 1e-12);
        assert!((v - 0.51083).abs() < 1e-4);
    }

    #[test]
    fn large_temperature_flattens_targets() {
        let q = listwise_targets(&[1.0, 0.0, 0.5], 1e6).unwrap();
        assert!(q.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-6));
    }

    #[test]
    fn features_layout() {
        let b = Embedding::new(vec![1.0, 2.0]).unwrap();
        let v = Embedding::new(vec![0.5, 4.0]).unwrap();
        assert_eq!(
            difference_features(&b, &v).unwrap(),
            vec![1.0, 2.0, 0.5, 4.0, -0.5, 2.0]
        );
    }

    fn toy_group(seed: u64, gains: Vec<f64>, dim: usize) -> FeatureGroup {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureGroup {
            target: format!("t{seed}"),
            features: gains
                .iter()
                .map(|_| (0..3 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            gains,
        }
    }

    #[test]
    fn overfits_single_group() {
        let g = toy_group(1, vec![1.0, 0.0, 0.0], 8);
        let cfg = TrainConfig {
            epochs: 200,
            hidden: 16,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let (model, log) = train(std::slice::from_ref(&g), &[], &cfg).unwrap();
        let e = evaluate(&model, &[g]);
        assert_eq!(e.hit_at_1, 1.0);
        assert!(log.last().unwrap().loss < log[0].loss);
    }

    #[test]
    fn all_skipped_is_an_error() {
        let g = toy_group(1, vec![0.3, 0.3], 4);
        assert!(matches!(
            train(&[g], &[], &TrainConfig::default()),
            Err(Error::NoTrainableGroups)
        ));
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let groups: Vec<_> = (0..20)
            .map(|i| toy_group(i, vec![i as f64 % 3.0, 1.0, 0.5], 6))
            .collect();
        let cfg = TrainConfig {
            epochs: 5,
            hidden: 8,
            batch_size: 4,
            seed: 11,
            ..TrainConfig::default()
        };
        let (a, la) = train(&groups, &groups[..5], &cfg).unwrap();
        let (b, lb) = train(&groups, &groups[..5], &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(la, lb);
    }

    #[test]
    fn oracle_scores_are_perfect() {
        let groups: Vec<_> = (0..10)
            .map(|i| toy_group(i, vec![0.1 * i as f64, 0.3, -0.2], 2))
            .collect();
        let e = evaluate_scores(&groups, |g| g.gains.clone());
        assert_eq!(e.hit_at_1, 1.0);
        assert_eq!(e.ndcg_at_1, 1.0);
    }

    #[test]
    fn random_hit_rate_tends_to_one_third() {
        let groups: Vec<_> = (0..2000)
            .map(|i| FeatureGroup {
                target: i.to_string(),
                features: vec![vec![]; 3],
                gains: vec![(i % 7) as f64 * 0.1, 0.35, 0.05],
            })
            .collect();
        let e = random_baseline(&groups, 5, 3);
        assert!((e.hit_at_1 - 1.0 / 3.0).abs() < 0.02, "{e:?}");
    }

    proptest! {
        #[test]
        fn targets_form_distribution(gains in proptest::collection::vec(-3.0f64..3.0, 2..6), tau in 0.05f64..5.0, shift in -10.0f64..10.0) {
            if let Some(q) = listwise_targets(&gains, tau) {
                prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(q.iter().all(|&x| x >= 0.0));
                let mx = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let qa = argmax(&q).unwrap();
                prop_assert!((gains[qa] - mx).abs() < 1e-12);
                let shifted: Vec<f64> = gains.iter().map(|g| g + shift).collect();
                if let Some(q2) = listwise_targets(&shifted, tau) {
                    for (a, b) in q.iter().zip(&q2) {
                        prop_assert!((a - b).abs() < 1e-9);
                    }
                }
            }
        }

        #[test]
        fn kl_nonnegative(a in proptest::collection::vec(-5.0f64..5.0, 3), b in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let q = crate::util::softmax(&a);
            let p = crate::util::softmax(&b);
            prop_assert!(listwise_loss(&q, &p) >= -1e-15);
            prop_assert!(listwise_loss(&q, &q).abs() <= 1e-12);
        }
    }
}
